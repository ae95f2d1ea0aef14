#include <cubeviz/error.hpp>
#include <cubeviz/mesh.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace cubeviz {

namespace fs = std::filesystem;
using nlohmann::json;

MeshFormat parse_mesh_format(std::string_view tag)
{
    if (tag == "obj") return MeshFormat::obj;
    if (tag == "gltf") return MeshFormat::gltf;
    throw InvalidArgument("unsupported mesh format '" + std::string(tag) + "' (expected obj or gltf)");
}

std::string_view mesh_format_name(MeshFormat f)
{
    return f == MeshFormat::obj ? "obj" : "gltf";
}

namespace {

fs::path sidecar(const fs::path& path, const char* ext)
{
    fs::path p = path;
    p.replace_extension(ext);
    return p;
}

void append_number(std::string& out, double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

void append_number(std::string& out, std::uint64_t v)
{
    char buf[24];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

void write_file(const fs::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string layer_name(const Layer& layer, std::size_t i)
{
    return layer.name.empty() ? "layer_" + std::to_string(i) : layer.name;
}

LayeredScene single_layer(const TriangleMesh& mesh)
{
    LayeredScene scene;
    scene.layers.push_back({mesh, {0.8, 0.8, 0.8}, 1.0, 0.0, "layer_0"});
    return scene;
}

void validate_scene(const LayeredScene& scene)
{
    for (const auto& layer : scene.layers) {
        if (!(layer.opacity > 0.0 && layer.opacity <= 1.0)) {
            throw InvalidArgument("layer opacity must lie in (0, 1]");
        }
        if (!layer.mesh.normals.empty() && layer.mesh.normals.size() != layer.mesh.positions.size()) {
            throw InvalidArgument("normals must be parallel to positions");
        }
        for (const auto& t : layer.mesh.triangles) {
            for (auto idx : t) {
                if (idx >= layer.mesh.positions.size()) {
                    throw InvalidArgument("triangle index out of range");
                }
            }
        }
    }
}

// ---------------------------------------------------------------- OBJ

void export_obj(const LayeredScene& scene, const fs::path& path)
{
    const fs::path mtl = sidecar(path, ".mtl");
    std::string obj;
    std::string materials;
    obj += "# cubeviz iso-surface mesh\n";
    obj += "mtllib " + mtl.filename().string() + "\n";

    std::uint64_t vertex_base = 0;
    std::uint64_t normal_base = 0;
    for (std::size_t i = 0; i < scene.layers.size(); ++i) {
        const Layer& layer = scene.layers[i];
        const std::string name = layer_name(layer, i);
        obj += "o " + name + "\n";
        obj += "# iso ";
        append_number(obj, layer.iso);
        obj += "\nusemtl " + name + "\n";

        for (const auto& p : layer.mesh.positions) {
            obj += "v ";
            append_number(obj, p[0]);
            obj += ' ';
            append_number(obj, p[1]);
            obj += ' ';
            append_number(obj, p[2]);
            obj += '\n';
        }
        const bool has_normals = !layer.mesh.normals.empty();
        for (const auto& n : layer.mesh.normals) {
            obj += "vn ";
            append_number(obj, n[0]);
            obj += ' ';
            append_number(obj, n[1]);
            obj += ' ';
            append_number(obj, n[2]);
            obj += '\n';
        }
        for (const auto& t : layer.mesh.triangles) {
            obj += 'f';
            for (auto idx : t) {
                obj += ' ';
                append_number(obj, vertex_base + idx + 1);
                if (has_normals) {
                    obj += "//";
                    append_number(obj, normal_base + idx + 1);
                }
            }
            obj += '\n';
        }
        vertex_base += layer.mesh.positions.size();
        normal_base += layer.mesh.normals.size();

        materials += "newmtl " + name + "\nKd ";
        append_number(materials, layer.color[0]);
        materials += ' ';
        append_number(materials, layer.color[1]);
        materials += ' ';
        append_number(materials, layer.color[2]);
        materials += "\nd ";
        append_number(materials, layer.opacity);
        materials += "\nillum 1\n\n";
    }

    write_file(mtl, materials);
    write_file(path, obj);
}

double parse_double(std::string_view s, const fs::path& where)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw FormatError(where.string() + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

struct MtlEntry
{
    Vec3 color{0.8, 0.8, 0.8};
    double opacity = 1.0;
};

std::vector<std::pair<std::string, MtlEntry>> read_mtl(const fs::path& path)
{
    std::vector<std::pair<std::string, MtlEntry>> out;
    if (!fs::exists(path)) {
        return out;
    }
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto tok = split_ws(line);
        if (tok.empty()) {
            continue;
        }
        if (tok[0] == "newmtl" && tok.size() >= 2) {
            out.push_back({std::string(tok[1]), {}});
        } else if (tok[0] == "Kd" && tok.size() >= 4 && !out.empty()) {
            out.back().second.color = {
                parse_double(tok[1], path), parse_double(tok[2], path), parse_double(tok[3], path)};
        } else if (tok[0] == "d" && tok.size() >= 2 && !out.empty()) {
            out.back().second.opacity = parse_double(tok[1], path);
        }
    }
    return out;
}

LayeredScene import_obj(const fs::path& path)
{
    const std::string text = read_file(path);
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;
    struct RawLayer
    {
        std::string name;
        std::string material;
        double iso = 0.0;
        std::vector<std::array<std::uint64_t, 3>> faces; // global 0-based position indices
        std::vector<std::array<std::uint64_t, 3>> face_normals;
    };
    std::vector<RawLayer> raw;
    std::string mtllib;

    auto current = [&]() -> RawLayer& {
        if (raw.empty()) {
            raw.push_back({"layer_0", {}, 0.0, {}, {}});
        }
        return raw.back();
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        const std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        const auto tok = split_ws(line);
        if (tok.empty()) {
            continue;
        }
        if (tok[0] == "v" && tok.size() >= 4) {
            positions.push_back({parse_double(tok[1], path), parse_double(tok[2], path), parse_double(tok[3], path)});
        } else if (tok[0] == "vn" && tok.size() >= 4) {
            normals.push_back({parse_double(tok[1], path), parse_double(tok[2], path), parse_double(tok[3], path)});
        } else if (tok[0] == "f") {
            if (tok.size() != 4) {
                throw FormatError(path.string() + ": only triangular faces are supported");
            }
            std::array<std::uint64_t, 3> f{};
            std::array<std::uint64_t, 3> fn{};
            bool has_n = true;
            for (int k = 0; k < 3; ++k) {
                const std::string_view ref = tok[k + 1];
                const auto slash = ref.find('/');
                const auto vi = parse_double(ref.substr(0, slash), path);
                if (vi < 1) {
                    throw FormatError(path.string() + ": face index out of range");
                }
                f[k] = static_cast<std::uint64_t>(vi) - 1;
                const auto last = ref.rfind('/');
                if (slash != std::string_view::npos && last + 1 < ref.size()) {
                    fn[k] = static_cast<std::uint64_t>(parse_double(ref.substr(last + 1), path)) - 1;
                } else {
                    has_n = false;
                }
            }
            current().faces.push_back(f);
            if (has_n) {
                current().face_normals.push_back(fn);
            }
        } else if (tok[0] == "o" || tok[0] == "g") {
            if (tok.size() >= 2) {
                if (!raw.empty() && raw.back().faces.empty() && raw.back().material.empty() &&
                    tok[0] == "g") {
                    raw.back().name = std::string(tok[1]);
                } else {
                    raw.push_back({std::string(tok[1]), {}, 0.0, {}, {}});
                }
            }
        } else if (tok[0] == "usemtl" && tok.size() >= 2) {
            current().material = std::string(tok[1]);
        } else if (tok[0] == "mtllib" && tok.size() >= 2) {
            mtllib = std::string(tok[1]);
        } else if (tok[0] == "#" && tok.size() >= 3 && tok[1] == "iso") {
            current().iso = parse_double(tok[2], path);
        }
    }

    const auto materials = mtllib.empty() ? decltype(read_mtl(path)){} : read_mtl(path.parent_path() / mtllib);

    LayeredScene scene;
    for (auto& r : raw) {
        Layer layer;
        layer.name = r.name;
        layer.iso = r.iso;
        for (const auto& [name, m] : materials) {
            if (name == r.material) {
                layer.color = m.color;
                layer.opacity = m.opacity;
            }
        }
        // Re-index the global vertex pool into a compact per-layer list,
        // preserving first-use order.
        std::vector<std::uint64_t> used;
        for (const auto& f : r.faces) {
            used.insert(used.end(), f.begin(), f.end());
        }
        std::vector<std::uint64_t> sorted = used;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        for (auto idx : sorted) {
            if (idx >= positions.size()) {
                throw FormatError(path.string() + ": face index out of range");
            }
            layer.mesh.positions.push_back(positions[idx]);
        }
        const bool with_normals = !r.faces.empty() && r.face_normals.size() == r.faces.size();
        if (with_normals) {
            layer.mesh.normals.resize(sorted.size());
        }
        for (std::size_t fi = 0; fi < r.faces.size(); ++fi) {
            std::array<std::uint32_t, 3> t{};
            for (int k = 0; k < 3; ++k) {
                const auto local = std::lower_bound(sorted.begin(), sorted.end(), r.faces[fi][k]) - sorted.begin();
                t[k] = static_cast<std::uint32_t>(local);
                if (with_normals) {
                    const auto ni = r.face_normals[fi][k];
                    if (ni >= normals.size()) {
                        throw FormatError(path.string() + ": normal index out of range");
                    }
                    layer.mesh.normals[local] = normals[ni];
                }
            }
            layer.mesh.triangles.push_back(t);
        }
        scene.layers.push_back(std::move(layer));
    }
    return scene;
}

// ---------------------------------------------------------------- glTF

constexpr int gl_float = 5126;
constexpr int gl_unsigned_int = 5125;
constexpr int gl_array_buffer = 34962;
constexpr int gl_element_array_buffer = 34963;

void append_bytes(std::string& buffer, const void* data, std::size_t n)
{
    buffer.append(static_cast<const char*>(data), n);
}

void export_gltf(const LayeredScene& scene, const fs::path& path)
{
    const fs::path bin_path = sidecar(path, ".bin");
    std::string bin;
    json doc;
    doc["asset"] = {{"version", "2.0"}, {"generator", "cubeviz"}};
    doc["scene"] = 0;
    json nodes = json::array();
    json meshes = json::array();
    json materials = json::array();
    json accessors = json::array();
    json views = json::array();

    auto add_view = [&](std::size_t offset, std::size_t length, int target) {
        views.push_back({{"buffer", 0}, {"byteOffset", offset}, {"byteLength", length}, {"target", target}});
        return views.size() - 1;
    };

    for (std::size_t i = 0; i < scene.layers.size(); ++i) {
        const Layer& layer = scene.layers[i];
        const std::string name = layer_name(layer, i);

        materials.push_back({
            {"name", name},
            {"pbrMetallicRoughness",
             {{"baseColorFactor", {layer.color[0], layer.color[1], layer.color[2], layer.opacity}},
              {"metallicFactor", 0.0},
              {"roughnessFactor", 1.0}}},
            {"alphaMode", "BLEND"},
            {"doubleSided", true},
        });

        json node = {{"name", name}, {"extras", {{"iso", layer.iso}, {"material", i}}}};
        const TriangleMesh& mesh = layer.mesh;
        if (!mesh.triangles.empty()) {
            json attributes;

            // Positions (little-endian float32, like every binary glTF payload).
            const std::size_t pos_offset = bin.size();
            std::array<float, 3> lo{std::numeric_limits<float>::max(), std::numeric_limits<float>::max(),
                                    std::numeric_limits<float>::max()};
            std::array<float, 3> hi{-lo[0], -lo[1], -lo[2]};
            for (const auto& p : mesh.positions) {
                for (int a = 0; a < 3; ++a) {
                    const float f = static_cast<float>(p[a]);
                    lo[a] = std::min(lo[a], f);
                    hi[a] = std::max(hi[a], f);
                    append_bytes(bin, &f, sizeof f);
                }
            }
            const auto pos_view = add_view(pos_offset, bin.size() - pos_offset, gl_array_buffer);
            accessors.push_back({
                {"bufferView", pos_view},
                {"componentType", gl_float},
                {"count", mesh.positions.size()},
                {"type", "VEC3"},
                {"min", {lo[0], lo[1], lo[2]}},
                {"max", {hi[0], hi[1], hi[2]}},
            });
            attributes["POSITION"] = accessors.size() - 1;

            if (!mesh.normals.empty()) {
                const std::size_t n_offset = bin.size();
                for (const auto& n : mesh.normals) {
                    for (int a = 0; a < 3; ++a) {
                        const float f = static_cast<float>(n[a]);
                        append_bytes(bin, &f, sizeof f);
                    }
                }
                const auto n_view = add_view(n_offset, bin.size() - n_offset, gl_array_buffer);
                accessors.push_back({
                    {"bufferView", n_view},
                    {"componentType", gl_float},
                    {"count", mesh.normals.size()},
                    {"type", "VEC3"},
                });
                attributes["NORMAL"] = accessors.size() - 1;
            }

            const std::size_t i_offset = bin.size();
            for (const auto& t : mesh.triangles) {
                append_bytes(bin, t.data(), sizeof(std::uint32_t) * 3);
            }
            const auto i_view = add_view(i_offset, bin.size() - i_offset, gl_element_array_buffer);
            accessors.push_back({
                {"bufferView", i_view},
                {"componentType", gl_unsigned_int},
                {"count", mesh.triangles.size() * 3},
                {"type", "SCALAR"},
            });

            meshes.push_back({
                {"name", name},
                {"primitives",
                 {{{"attributes", attributes}, {"indices", accessors.size() - 1}, {"material", i}, {"mode", 4}}}},
            });
            node["mesh"] = meshes.size() - 1;
        }
        nodes.push_back(std::move(node));
    }

    json scene_nodes = json::array();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        scene_nodes.push_back(i);
    }
    doc["scenes"] = {{{"nodes", scene_nodes}}};
    doc["nodes"] = nodes;
    doc["materials"] = materials;
    if (!meshes.empty()) {
        doc["meshes"] = meshes;
        doc["accessors"] = accessors;
        doc["bufferViews"] = views;
        doc["buffers"] = {{{"uri", bin_path.filename().string()}, {"byteLength", bin.size()}}};
    }

    if (!meshes.empty()) {
        write_file(bin_path, bin);
    }
    write_file(path, doc.dump(1) + "\n");
}

template <typename T>
std::vector<T> read_accessor(const json& doc, const std::string& bin, std::size_t index, std::size_t components, const fs::path& where)
{
    const json& acc = doc.at("accessors").at(index);
    const json& view = doc.at("bufferViews").at(acc.at("bufferView").get<std::size_t>());
    const std::size_t count = acc.at("count").get<std::size_t>() * components;
    const std::size_t offset = view.value("byteOffset", std::size_t{0}) + acc.value("byteOffset", std::size_t{0});
    if (offset + count * sizeof(T) > bin.size()) {
        throw FormatError(where.string() + ": accessor exceeds buffer");
    }
    std::vector<T> out(count);
    std::memcpy(out.data(), bin.data() + offset, count * sizeof(T));
    return out;
}

LayeredScene import_gltf(const fs::path& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }

    LayeredScene scene;
    try {
        std::string bin;
        if (doc.contains("buffers") && !doc["buffers"].empty()) {
            bin = read_file(path.parent_path() / doc["buffers"][0].at("uri").get<std::string>());
        }
        const json materials = doc.value("materials", json::array());
        for (const auto& node : doc.at("nodes")) {
            Layer layer;
            layer.name = node.value("name", std::string());
            std::optional<std::size_t> material;
            if (node.contains("extras")) {
                layer.iso = node["extras"].value("iso", 0.0);
                if (node["extras"].contains("material")) {
                    material = node["extras"]["material"].get<std::size_t>();
                }
            }
            if (node.contains("mesh")) {
                const json& prim = doc.at("meshes").at(node["mesh"].get<std::size_t>()).at("primitives").at(0);
                if (prim.contains("material")) {
                    material = prim["material"].get<std::size_t>();
                }
                const auto pos = read_accessor<float>(doc, bin, prim.at("attributes").at("POSITION"), 3, path);
                for (std::size_t i = 0; i < pos.size(); i += 3) {
                    layer.mesh.positions.push_back({pos[i], pos[i + 1], pos[i + 2]});
                }
                if (prim.at("attributes").contains("NORMAL")) {
                    const auto nrm = read_accessor<float>(doc, bin, prim["attributes"]["NORMAL"], 3, path);
                    for (std::size_t i = 0; i < nrm.size(); i += 3) {
                        layer.mesh.normals.push_back({nrm[i], nrm[i + 1], nrm[i + 2]});
                    }
                }
                const auto idx = read_accessor<std::uint32_t>(doc, bin, prim.at("indices"), 1, path);
                if (idx.size() % 3 != 0) {
                    throw FormatError(path.string() + ": index count is not a multiple of 3");
                }
                for (std::size_t i = 0; i < idx.size(); i += 3) {
                    for (int k = 0; k < 3; ++k) {
                        if (idx[i + k] >= layer.mesh.positions.size()) {
                            throw FormatError(path.string() + ": index out of range");
                        }
                    }
                    layer.mesh.triangles.push_back({idx[i], idx[i + 1], idx[i + 2]});
                }
            }
            if (material && *material < materials.size()) {
                const auto f = materials[*material].at("pbrMetallicRoughness").at("baseColorFactor").get<std::vector<double>>();
                if (f.size() == 4) {
                    layer.color = {f[0], f[1], f[2]};
                    layer.opacity = f[3];
                }
            }
            scene.layers.push_back(std::move(layer));
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return scene;
}

} // namespace

void export_mesh(const LayeredScene& scene, const fs::path& path, MeshFormat format)
{
    if (scene.layers.empty()) {
        throw InvalidArgument("scene has no layers");
    }
    validate_scene(scene);
    if (format == MeshFormat::obj) {
        export_obj(scene, path);
    } else {
        export_gltf(scene, path);
    }
}

void export_mesh(const TriangleMesh& mesh, const fs::path& path, MeshFormat format)
{
    export_mesh(single_layer(mesh), path, format);
}

LayeredScene import_mesh(const fs::path& path)
{
    const std::string ext = path.extension().string();
    if (ext == ".obj") {
        return import_obj(path);
    }
    if (ext == ".gltf") {
        return import_gltf(path);
    }
    throw InvalidArgument("cannot infer mesh format from '" + path.string() + "'");
}

std::vector<fs::path> mesh_files(const fs::path& path, MeshFormat format)
{
    return {path, sidecar(path, format == MeshFormat::obj ? ".mtl" : ".bin")};
}

} // namespace cubeviz
