#include <cubeviz/error.hpp>
#include <cubeviz/mesh.hpp>

#include "mc_tables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace cubeviz {

namespace {

constexpr std::int32_t no_vertex = -1;

Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 sub(const Vec3& a, const Vec3& b)
{
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

double length(const Vec3& a)
{
    return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

// Vertex ids of the grid edges touched by one layer of cells. x/y edges live
// on the bottom (0) and top (1) planes of the layer; z edges span the layer.
class EdgeCache
{
public:
    EdgeCache(std::size_t nx, std::size_t ny)
        : nx_(nx)
        , plane_(nx * ny)
    {
        for (auto& buf : {&x_[0], &x_[1], &y_[0], &y_[1], &z_}) {
            buf->assign(plane_, no_vertex);
        }
    }

    void next_layer()
    {
        std::swap(x_[0], x_[1]);
        std::swap(y_[0], y_[1]);
        std::fill(x_[1].begin(), x_[1].end(), no_vertex);
        std::fill(y_[1].begin(), y_[1].end(), no_vertex);
        std::fill(z_.begin(), z_.end(), no_vertex);
    }

    std::int32_t& slot(int axis, std::size_t gx, std::size_t gy, int plane)
    {
        const std::size_t i = gx + nx_ * gy;
        switch (axis) {
        case 0: return x_[plane][i];
        case 1: return y_[plane][i];
        default: return z_[i];
        }
    }

private:
    std::size_t nx_;
    std::size_t plane_;
    std::vector<std::int32_t> x_[2];
    std::vector<std::int32_t> y_[2];
    std::vector<std::int32_t> z_;
};

// Drops zero-area triangles, then vertices no triangle references.
void compact(TriangleMesh& mesh)
{
    std::vector<std::array<std::uint32_t, 3>> kept;
    kept.reserve(mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
        const Vec3 n = cross(
            sub(mesh.positions[t[1]], mesh.positions[t[0]]), sub(mesh.positions[t[2]], mesh.positions[t[0]]));
        if (n[0] != 0.0 || n[1] != 0.0 || n[2] != 0.0) {
            kept.push_back(t);
        }
    }

    std::vector<std::int64_t> remap(mesh.positions.size(), -1);
    std::vector<Vec3> positions;
    positions.reserve(mesh.positions.size());
    for (auto& t : kept) {
        for (auto& idx : t) {
            if (remap[idx] < 0) {
                remap[idx] = static_cast<std::int64_t>(positions.size());
                positions.push_back(mesh.positions[idx]);
            }
            idx = static_cast<std::uint32_t>(remap[idx]);
        }
    }
    mesh.positions = std::move(positions);
    mesh.triangles = std::move(kept);
    mesh.normals.clear();
}

} // namespace

TriangleMesh marching_cubes(const ScalarField& field, double iso)
{
    TriangleMesh mesh;
    if (!std::isfinite(iso)) {
        throw InvalidArgument("iso value must be finite");
    }
    const Grid& g = field.grid();
    const auto [nx, ny, nz] = g.dims;
    const auto& values = field.values();
    const auto& table = detail::triangle_table();

    EdgeCache cache(nx, ny);
    const std::size_t sy = nx;
    const std::size_t sz = nx * ny;
    const std::size_t corner_stride[8] = {
        0, 1, 1 + sy, sy, sz, 1 + sz, 1 + sy + sz, sy + sz};

    for (std::size_t z = 0; z + 1 < nz; ++z) {
        if (z > 0) {
            cache.next_layer();
        }
        for (std::size_t y = 0; y + 1 < ny; ++y) {
            for (std::size_t x = 0; x + 1 < nx; ++x) {
                const std::size_t base = g.index(x, y, z);
                double v[8];
                unsigned cube = 0;
                for (int c = 0; c < 8; ++c) {
                    v[c] = values[base + corner_stride[c]];
                    if (v[c] < iso) {
                        cube |= 1u << c;
                    }
                }
                if (cube == 0 || cube == 255) {
                    continue;
                }

                const auto& row = table[cube];
                std::int32_t ids[12];
                std::fill(std::begin(ids), std::end(ids), no_vertex);
                for (int k = 0; row[k] != -1; ++k) {
                    const int e = row[k];
                    if (ids[e] != no_vertex) {
                        continue;
                    }
                    const int c0 = detail::edge_corners[e][0];
                    const int axis = detail::edge_axis[e];
                    const auto& off = detail::corner_offsets[c0];
                    std::int32_t& slot = cache.slot(axis, x + off[0], y + off[1], off[2]);
                    if (slot == no_vertex) {
                        const double a = v[c0];
                        const double b = v[detail::edge_corners[e][1]];
                        const double t = (iso - a) / (b - a);
                        Vec3 p = g.voxel_center(x + off[0], y + off[1], z + off[2]);
                        p[axis] += t * g.spacing[axis];
                        slot = static_cast<std::int32_t>(mesh.positions.size());
                        mesh.positions.push_back(p);
                    }
                    ids[e] = slot;
                }
                for (int k = 0; row[k] != -1; k += 3) {
                    mesh.triangles.push_back({
                        static_cast<std::uint32_t>(ids[row[k]]),
                        static_cast<std::uint32_t>(ids[row[k + 1]]),
                        static_cast<std::uint32_t>(ids[row[k + 2]])});
                }
            }
        }
    }

    compact(mesh);
    return mesh;
}

TriangleMesh compute_vertex_normals(TriangleMesh mesh, const ScalarField& field)
{
    const Grid& g = field.grid();
    const auto [lo_it, hi_it] = std::minmax_element(field.values().begin(), field.values().end());
    const double range = *hi_it - *lo_it;

    // Area-weighted face normals, used where the field gradient vanishes.
    std::vector<Vec3> face_sum(mesh.positions.size(), Vec3{0.0, 0.0, 0.0});
    for (const auto& t : mesh.triangles) {
        const Vec3 n = cross(
            sub(mesh.positions[t[1]], mesh.positions[t[0]]), sub(mesh.positions[t[2]], mesh.positions[t[0]]));
        for (auto idx : t) {
            for (int a = 0; a < 3; ++a) {
                face_sum[idx][a] += n[a];
            }
        }
    }

    mesh.normals.resize(mesh.positions.size());
    for (std::size_t i = 0; i < mesh.positions.size(); ++i) {
        const Vec3& p = mesh.positions[i];
        // Gradient in field units per voxel, relative to the field range.
        // One-sided near the outermost voxel centers.
        Vec3 grad{};
        for (int a = 0; a < 3; ++a) {
            const double h = 0.5 * g.spacing[a];
            const double first = g.origin[a] + 0.5 * g.spacing[a];
            const double last = first + static_cast<double>(g.dims[a] - 1) * g.spacing[a];
            Vec3 plus = p;
            Vec3 minus = p;
            plus[a] = std::min(p[a] + h, last);
            minus[a] = std::max(p[a] - h, first);
            const double span = plus[a] - minus[a];
            if (span > 0.0) {
                grad[a] = (sample_trilinear_clamped(field, plus) - sample_trilinear_clamped(field, minus))
                    * g.spacing[a] / span;
            }
        }
        // Scale back to physical units so anisotropic spacing orients correctly.
        const double relative = range > 0.0 ? length(grad) / range : 0.0;
        Vec3 n;
        if (relative >= 1e-12) {
            n = {-grad[0] / g.spacing[0], -grad[1] / g.spacing[1], -grad[2] / g.spacing[2]};
        } else {
            n = face_sum[i];
        }
        double len = length(n);
        if (!(len > 0.0) || !std::isfinite(len)) {
            n = face_sum[i];
            len = length(n);
        }
        if (!(len > 0.0) || !std::isfinite(len)) {
            n = {0.0, 0.0, 1.0};
            len = 1.0;
        }
        mesh.normals[i] = {n[0] / len, n[1] / len, n[2] / len};
    }
    return mesh;
}

LayeredScene multilayer_surfaces(const ScalarField& field, const std::vector<LayerSpec>& layers, bool with_normals)
{
    if (layers.empty()) {
        throw InvalidArgument("at least one layer is required");
    }
    LayeredScene scene;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        if (!(spec.opacity > 0.0 && spec.opacity <= 1.0)) {
            throw InvalidArgument("layer opacity must lie in (0, 1]");
        }
        TriangleMesh mesh = marching_cubes(field, spec.iso);
        if (with_normals) {
            mesh = compute_vertex_normals(std::move(mesh), field);
        }
        scene.layers.push_back({std::move(mesh), spec.color, spec.opacity, spec.iso, "layer_" + std::to_string(i)});
    }
    return scene;
}

LayeredScene isosurface_scene(const ScalarField& field, double iso)
{
    return multilayer_surfaces(field, {LayerSpec{iso, {0.8, 0.8, 0.8}, 1.0}});
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c)
{
    return 0.5 * length(cross(sub(b, a), sub(c, a)));
}

MeshDiagnostics mesh_diagnostics(const TriangleMesh& mesh)
{
    MeshDiagnostics d;
    d.vertex_count = mesh.positions.size();
    d.triangle_count = mesh.triangles.size();

    std::vector<std::uint64_t> edges;
    edges.reserve(mesh.triangles.size() * 3);
    for (const auto& t : mesh.triangles) {
        d.area += triangle_area(mesh.positions[t[0]], mesh.positions[t[1]], mesh.positions[t[2]]);
        for (int k = 0; k < 3; ++k) {
            std::uint64_t a = t[k];
            std::uint64_t b = t[(k + 1) % 3];
            if (a > b) {
                std::swap(a, b);
            }
            edges.push_back((a << 32) | b);
        }
    }
    std::sort(edges.begin(), edges.end());
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j] == edges[i]) {
            ++j;
        }
        const std::size_t incidence = j - i;
        if (incidence == 1) {
            ++d.boundary_edges;
        } else if (incidence > 2) {
            ++d.non_manifold_edges;
        }
        i = j;
    }
    d.watertight = d.boundary_edges == 0 && d.non_manifold_edges == 0;
    return d;
}

} // namespace cubeviz
