#pragma once

#include <cubeviz/field.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cubeviz {

/// Indexed triangle soup in physical coordinates. `normals` is either empty or
/// parallel to `positions`.
struct TriangleMesh
{
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    bool empty() const { return triangles.empty(); }
};

struct Layer
{
    TriangleMesh mesh;
    Vec3 color{0.8, 0.8, 0.8};
    double opacity = 1.0;
    double iso = 0.0;
    std::string name;
};

struct LayeredScene
{
    std::vector<Layer> layers;
};

struct LayerSpec
{
    double iso;
    Vec3 color{0.8, 0.8, 0.8};
    double opacity = 1.0;
};

struct MeshDiagnostics
{
    std::size_t vertex_count = 0;
    std::size_t triangle_count = 0;
    double area = 0.0;
    std::size_t boundary_edges = 0;
    std::size_t non_manifold_edges = 0;
    bool watertight = false;
};

/// Marching cubes over the cells between adjacent voxel centers. Vertices are
/// shared between cells through their grid edge; zero-area triangles are
/// dropped. Triangles wind so that their normal points toward lower values.
TriangleMesh marching_cubes(const ScalarField& field, double iso);

/// Per-vertex normals from the central-difference gradient of the trilinear
/// interpolant, pointing toward decreasing values. Vertices where the gradient
/// vanishes fall back to area-weighted face normals.
TriangleMesh compute_vertex_normals(TriangleMesh mesh, const ScalarField& field);

/// One extraction per layer, in the given order. Normals are computed when
/// `with_normals` is set.
LayeredScene multilayer_surfaces(
    const ScalarField& field,
    const std::vector<LayerSpec>& layers,
    bool with_normals = true);

/// The single-surface pipeline shared by the CLI and the analysis service:
/// extraction, normals, one default-material layer recording the iso value.
LayeredScene isosurface_scene(const ScalarField& field, double iso);

MeshDiagnostics mesh_diagnostics(const TriangleMesh& mesh);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

enum class MeshFormat { obj, gltf };

MeshFormat parse_mesh_format(std::string_view tag);
std::string_view mesh_format_name(MeshFormat f);

/// OBJ writes `<stem>.mtl` beside the mesh; glTF writes `<stem>.bin`.
void export_mesh(const LayeredScene& scene, const std::filesystem::path& path, MeshFormat format);
void export_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format);

/// Reads files produced by export_mesh (and plain OBJ/glTF of the same shape).
LayeredScene import_mesh(const std::filesystem::path& path);

/// Files that make up an exported mesh: the main file plus its sidecar.
std::vector<std::filesystem::path> mesh_files(const std::filesystem::path& path, MeshFormat format);

} // namespace cubeviz
