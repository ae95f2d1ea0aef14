#include <cubeviz/service.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

namespace cubeviz {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

struct Fnv1a
{
    std::uint64_t h = 0xcbf29ce484222325ull;

    void add(std::string_view bytes)
    {
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        // Length separator so concatenations do not collide trivially.
        const std::uint64_t n = bytes.size();
        for (int i = 0; i < 8; ++i) {
            h ^= (n >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }

    std::string hex() const
    {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

std::string shortest(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string shell_quote(const std::string& s)
{
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

void replace_all(std::string& s, std::string_view from, const std::string& to)
{
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

std::string tail(const std::string& s, std::size_t n)
{
    return s.size() <= n ? s : s.substr(s.size() - n);
}

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

std::string_view kind_name(AnalysisKind k)
{
    return k == AnalysisKind::isosurface ? "isosurface" : "multilayer";
}

std::string_view backend_name(Backend b)
{
    return b == Backend::internal ? "internal" : "external";
}

LayerSpec parse_layer(const json& j)
{
    if (!j.is_object()) {
        throw InvalidArgument("layer must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "iso" && key != "color" && key != "opacity") {
            throw InvalidArgument("unknown layer key '" + key + "'");
        }
    }
    LayerSpec spec{j.at("iso").get<double>()};
    if (auto it = j.find("color"); it != j.end()) {
        const auto c = it->get<std::vector<double>>();
        if (c.size() != 3) {
            throw InvalidArgument("layer color must have three components");
        }
        spec.color = {c[0], c[1], c[2]};
    }
    spec.opacity = get_or(j, "opacity", 1.0);
    return spec;
}

// Runs `command` through /bin/sh with output captured to `log`. Returns the
// wait status, or nullopt on timeout (the process group is killed).
std::optional<int> run_command(const std::string& command, const fs::path& log, double timeout_s)
{
    const std::string log_path = log.string();
    const pid_t pid = fork();
    if (pid < 0) {
        throw IoError("cannot fork external command");
    }
    if (pid == 0) {
        setpgid(0, 0);
        const int out = open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        const int in = open("/dev/null", O_RDONLY);
        if (out >= 0) {
            dup2(out, 1);
            dup2(out, 2);
        }
        if (in >= 0) {
            dup2(in, 0);
        }
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    int status = 0;
    while (true) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            return status;
        }
        if (r < 0 && errno != EINTR) {
            throw IoError("waitpid failed for external command");
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            return std::nullopt;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

} // namespace

std::string_view job_status_name(JobStatus s)
{
    switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    }
    return "unknown";
}

void ExternalBackendConfig::validate() const
{
    for (const char* p : {"{input_cube}", "{iso}", "{output_mesh}"}) {
        if (command.find(p) == std::string::npos) {
            throw InvalidArgument(std::string("external command lacks placeholder ") + p);
        }
    }
    if (!(timeout_s > 0.0)) {
        throw InvalidArgument("external timeout must be positive");
    }
}

ServerConfig ServerConfig::from_json(const json& j, const fs::path& base_dir)
{
    try {
        ServerConfig c;
        const std::string listen = get_or<std::string>(j, "listen", "127.0.0.1:8080");
        const auto colon = listen.rfind(':');
        if (colon == std::string::npos) {
            throw InvalidArgument("listen must be host:port");
        }
        c.host = listen.substr(0, colon);
        const std::string port = listen.substr(colon + 1);
        auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), c.port);
        if (ec != std::errc() || ptr != port.data() + port.size() || c.port < 0 || c.port > 65535) {
            throw InvalidArgument("invalid listen port '" + port + "'");
        }
        auto resolve = [&](const std::string& p) {
            const fs::path path(p);
            return path.is_absolute() ? path : base_dir / path;
        };
        c.dataset_dir = resolve(j.at("dataset_dir").get<std::string>());
        c.asset_dir = resolve(j.at("asset_dir").get<std::string>());
        if (auto it = j.find("external_command"); it != j.end() && !it->is_null()) {
            ExternalBackendConfig ext;
            ext.command = it->get<std::string>();
            ext.timeout_s = get_or(j, "external_timeout_s", 60.0);
            ext.validate();
            c.external = ext;
        }
        const int width = get_or(j, "worker_width", 1);
        if (width < 1) {
            throw InvalidArgument("worker_width must be at least 1");
        }
        c.worker_width = static_cast<unsigned>(width);
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid server config: ") + e.what());
    }
}

ServerConfig ServerConfig::load(const fs::path& path)
{
    json j;
    try {
        j = json::parse(read_bytes(path));
    } catch (const json::exception& e) {
        throw FormatError("cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

AnalysisRequest AnalysisRequest::from_json(const json& j)
{
    if (!j.is_object()) {
        throw InvalidArgument("request must be a JSON object");
    }
    try {
        AnalysisRequest r;
        for (const auto& [key, value] : j.items()) {
            static constexpr std::array allowed{
                "kind", "dataset", "field", "iso", "layers", "format", "backend"};
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw InvalidArgument("unknown request key '" + key + "'");
            }
        }
        const std::string kind = get_or<std::string>(j, "kind", "isosurface");
        if (kind == "isosurface") {
            r.kind = AnalysisKind::isosurface;
            if (j.contains("layers")) {
                throw InvalidArgument("isosurface requests take 'iso', not 'layers'");
            }
            r.layers.push_back(LayerSpec{j.at("iso").get<double>()});
        } else if (kind == "multilayer") {
            r.kind = AnalysisKind::multilayer;
            if (j.contains("iso")) {
                throw InvalidArgument("multilayer requests take 'layers', not 'iso'");
            }
            for (const auto& layer : j.at("layers")) {
                r.layers.push_back(parse_layer(layer));
            }
            if (r.layers.empty()) {
                throw InvalidArgument("multilayer request needs at least one layer");
            }
        } else {
            throw InvalidArgument("unknown analysis kind '" + kind + "'");
        }
        r.dataset = j.at("dataset").get<std::string>();
        r.field = j.at("field").get<std::string>();
        r.format = parse_mesh_format(get_or<std::string>(j, "format", "obj"));
        const std::string backend = get_or<std::string>(j, "backend", "internal");
        if (backend == "internal") {
            r.backend = Backend::internal;
        } else if (backend == "external") {
            r.backend = Backend::external;
        } else {
            throw InvalidArgument("unknown backend '" + backend + "'");
        }
        for (const auto& layer : r.layers) {
            if (!std::isfinite(layer.iso)) {
                throw InvalidArgument("iso values must be finite");
            }
            if (!(layer.opacity > 0.0 && layer.opacity <= 1.0)) {
                throw InvalidArgument("layer opacity must lie in (0, 1]");
            }
            for (double c : layer.color) {
                if (!(c >= 0.0 && c <= 1.0)) {
                    throw InvalidArgument("layer colors must lie in [0, 1]");
                }
            }
        }
        return r;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed request: ") + e.what());
    } catch (const FormatError& e) {
        throw InvalidArgument(e.what());
    }
}

json AnalysisRequest::to_json() const
{
    json j{
        {"kind", kind_name(kind)},
        {"dataset", dataset},
        {"field", field},
        {"format", mesh_format_name(format)},
        {"backend", backend_name(backend)},
    };
    if (kind == AnalysisKind::isosurface) {
        j["iso"] = layers.front().iso;
    } else {
        json arr = json::array();
        for (const auto& l : layers) {
            arr.push_back({{"iso", l.iso}, {"color", l.color}, {"opacity", l.opacity}});
        }
        j["layers"] = std::move(arr);
    }
    return j;
}

json AnalysisJob::to_json() const
{
    json j{
        {"id", id},
        {"status", job_status_name(status)},
        {"request", request.to_json()},
        {"asset", asset ? json(*asset) : json(nullptr)},
        {"error", error ? json(*error) : json(nullptr)},
        {"cached", cached},
    };
    if (timing_ms) {
        j["timing_ms"] = *timing_ms;
    }
    return j;
}

const CatalogField* Dataset::find(std::string_view field) const
{
    for (const auto& f : fields) {
        if (f.name == field) {
            return &f;
        }
    }
    return nullptr;
}

json Dataset::summary() const
{
    json fs_json = json::array();
    for (const auto& f : fields) {
        fs_json.push_back({
            {"name", f.name},
            {"units", f.header.units},
            {"dims", f.header.grid.dims},
            {"spacing", f.header.grid.spacing},
            {"origin", f.header.grid.origin},
        });
    }
    json j{{"name", name}, {"fields", std::move(fs_json)}};
    if (!fields.empty()) {
        const Grid& g = fields.front().header.grid;
        j["dims"] = g.dims;
        j["spacing"] = g.spacing;
        j["origin"] = g.origin;
        j["length_unit"] = g.length_unit;
    }
    j["atlases"] = atlas_prefix ? json::array({"atlas"}) : json::array();
    return j;
}

Catalog Catalog::scan(const fs::path& dataset_dir)
{
    if (!fs::is_directory(dataset_dir)) {
        throw IoError("dataset directory " + dataset_dir.string() + " does not exist");
    }
    Catalog c;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (entry.is_directory()) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        Dataset d;
        d.name = dir.filename().string();
        d.dir = dir;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() != ".meta") {
                continue;
            }
            CatalogField f;
            f.meta_path = entry.path();
            f.header = read_cube_header(entry.path());
            f.name = f.header.name.empty() ? entry.path().stem().string() : f.header.name;
            if (d.find(f.name)) {
                throw FormatError("dataset " + d.name + " has two fields named " + f.name);
            }
            d.fields.push_back(std::move(f));
        }
        std::sort(d.fields.begin(), d.fields.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        if (fs::exists(dir / "atlas.png") && fs::exists(dir / "atlas.json")) {
            d.atlas_prefix = dir / "atlas";
        }
        c.datasets_.push_back(std::move(d));
    }
    return c;
}

const Dataset* Catalog::find(std::string_view name) const
{
    for (const auto& d : datasets_) {
        if (d.name == name) {
            return &d;
        }
    }
    return nullptr;
}

JobService::JobService(ServerConfig config)
    : config_(std::move(config))
    , catalog_(std::make_shared<const Catalog>(Catalog::scan(config_.dataset_dir)))
    , nonce_(std::random_device{}())
{
    if (config_.external) {
        config_.external->validate();
    }
    fs::create_directories(config_.asset_dir);
    for (unsigned i = 0; i < std::max(1u, config_.worker_width); ++i) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

JobService::~JobService()
{
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    changed_.notify_all();
    for (auto& t : workers_) {
        t.join();
    }
}

std::string JobService::submit(const AnalysisRequest& request)
{
    const Dataset* d = catalog_->find(request.dataset);
    if (!d) {
        throw NotFound("unknown dataset '" + request.dataset + "'");
    }
    if (!d->find(request.field)) {
        throw NotFound("dataset '" + request.dataset + "' has no field '" + request.field + "'");
    }
    if (request.layers.empty()) {
        throw InvalidArgument("request has no iso values");
    }
    if (request.backend == Backend::external) {
        if (!config_.external) {
            throw InvalidArgument("no external backend is configured");
        }
        if (request.kind != AnalysisKind::isosurface) {
            throw InvalidArgument("the external backend only runs isosurface requests");
        }
    }

    std::lock_guard lock(mutex_);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%08llx-%llu",
        static_cast<unsigned long long>(nonce_ & 0xffffffffu), static_cast<unsigned long long>(next_id_++));
    AnalysisJob job;
    job.id = buf;
    job.request = request;
    jobs_.emplace(job.id, job);
    queue_.push_back(job.id);
    changed_.notify_all();
    return job.id;
}

std::optional<AnalysisJob> JobService::get(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<AnalysisJob> JobService::wait(const std::string& id, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) {
        return std::nullopt;
    }
    changed_.wait_for(lock, timeout, [&] {
        return it->second.status == JobStatus::done || it->second.status == JobStatus::failed;
    });
    return it->second;
}

fs::path JobService::asset_file(std::string_view asset) const
{
    const fs::path rel = fs::path(asset).lexically_normal();
    if (asset.empty() || rel.is_absolute() || rel.empty() || *rel.begin() == ".." || rel.string().front() == '.') {
        throw NotFound("unknown asset");
    }
    const fs::path file = config_.asset_dir / rel;
    if (!fs::is_regular_file(file) || rel.filename() == "timing.json") {
        throw NotFound("unknown asset");
    }
    return file;
}

void JobService::worker_loop()
{
    while (true) {
        AnalysisJob job;
        {
            std::unique_lock lock(mutex_);
            changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) {
                return;
            }
            auto& entry = jobs_.at(queue_.front());
            queue_.pop_front();
            entry.status = JobStatus::running;
            job = entry;
        }
        changed_.notify_all();

        const auto start = std::chrono::steady_clock::now();
        AnalysisJob result = job;
        try {
            const Outcome o = run(job, start);
            result.status = JobStatus::done;
            result.asset = o.asset;
            result.timing_ms = o.timing_ms;
            result.cached = o.cached;
        } catch (const std::exception& e) {
            result.status = JobStatus::failed;
            result.error = e.what();
            result.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
        {
            std::lock_guard lock(mutex_);
            jobs_.at(job.id) = std::move(result);
        }
        changed_.notify_all();
    }
}

JobService::Outcome JobService::run(const AnalysisJob& job, std::chrono::steady_clock::time_point start)
{
    const AnalysisRequest& req = job.request;
    const CatalogField& field = *catalog_->find(req.dataset)->find(req.field);

    const fs::path data_path =
        field.header.data.is_absolute() ? field.header.data : field.meta_path.parent_path() / field.header.data;
    Fnv1a hash;
    hash.add(req.to_json().dump());
    hash.add(read_bytes(field.meta_path));
    hash.add(std::to_string(fs::file_size(data_path)));
    hash.add(std::to_string(fs::last_write_time(data_path).time_since_epoch().count()));
    const std::string key = hash.hex();

    const std::string main_name = std::string("mesh.") + std::string(mesh_format_name(req.format));
    const std::string asset = key + "/" + main_name;
    const fs::path final_dir = config_.asset_dir / key;

    auto published = [&]() -> std::optional<Outcome> {
        if (!fs::exists(final_dir / "timing.json")) {
            return std::nullopt;
        }
        const json t = json::parse(read_bytes(final_dir / "timing.json"));
        return Outcome{asset, t.at("timing_ms").get<double>(), true};
    };
    if (auto hit = published()) {
        return *hit;
    }

    const fs::path staging = config_.asset_dir / (".staging-" + job.id);
    fs::remove_all(staging);
    fs::create_directories(staging);
    try {
        if (req.backend == Backend::internal) {
            run_internal(req, field, staging / main_name);
        } else {
            run_external(req, field, staging / main_name);
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        write_bytes(staging / "timing.json", json{{"timing_ms", ms}}.dump());

        std::error_code ec;
        fs::rename(staging, final_dir, ec);
        if (ec) {
            // Another worker published the same asset first; keep its bytes.
            fs::remove_all(staging);
            if (auto hit = published()) {
                return *hit;
            }
            throw IoError("cannot publish asset " + asset + ": " + ec.message());
        }
        return Outcome{asset, ms, false};
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

void JobService::run_internal(const AnalysisRequest& req, const CatalogField& field, const fs::path& out)
{
    const ScalarField f = load_cube(field.meta_path);
    const LayeredScene scene = req.kind == AnalysisKind::isosurface
        ? isosurface_scene(f, req.layers.front().iso)
        : multilayer_surfaces(f, req.layers);
    export_mesh(scene, out, req.format);
}

void JobService::run_external(const AnalysisRequest& req, const CatalogField& field, const fs::path& out)
{
    const ExternalBackendConfig& ext = *config_.external;
    const fs::path work = out.parent_path().parent_path() / (".work-" + out.parent_path().filename().string());
    fs::remove_all(work);
    fs::create_directories(work);
    struct Cleanup
    {
        fs::path dir;
        ~Cleanup()
        {
            std::error_code ec;
            fs::remove_all(dir, ec);
        }
    } cleanup{work};

    const fs::path input = work / "input.meta";
    save_cube(load_cube(field.meta_path), input);

    std::string command = ext.command;
    replace_all(command, "{input_cube}", shell_quote(input.string()));
    replace_all(command, "{iso}", shell_quote(shortest(req.layers.front().iso)));
    replace_all(command, "{output_mesh}", shell_quote(out.string()));
    replace_all(command, "{format}", shell_quote(std::string(mesh_format_name(req.format))));

    const fs::path log = work / "output.log";
    const auto status = run_command(command, log, ext.timeout_s);
    std::string output;
    if (fs::exists(log)) {
        output = tail(read_bytes(log), 2000);
    }
    if (!status) {
        throw Error("external command timed out after " + shortest(ext.timeout_s) + " s");
    }
    if (WIFSIGNALED(*status)) {
        throw Error("external command killed by signal " + std::to_string(WTERMSIG(*status)) + ": " + output);
    }
    if (WEXITSTATUS(*status) != 0) {
        throw Error("external command exited with status " + std::to_string(WEXITSTATUS(*status)) + ": " + output);
    }
    try {
        import_mesh(out);
    } catch (const std::exception& e) {
        throw Error(std::string("external command produced an unreadable mesh: ") + e.what());
    }
}

struct HttpServer::Impl
{
    httplib::Server server;
    std::string host;
    int port = 0;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message)
{
    send_json(res, status, json{{"error", message}});
}

void send_file(httplib::Response& res, const fs::path& path, const char* type)
{
    res.status = 200;
    res.set_content(read_bytes(path), type);
}

const char* content_type(const fs::path& path)
{
    const auto ext = path.extension();
    if (ext == ".obj") return "model/obj";
    if (ext == ".mtl") return "model/mtl";
    if (ext == ".gltf") return "model/gltf+json";
    if (ext == ".bin") return "application/octet-stream";
    if (ext == ".png") return "image/png";
    if (ext == ".json") return "application/json";
    return "application/octet-stream";
}

} // namespace

HttpServer::HttpServer(ServerConfig config)
    : impl_(std::make_unique<Impl>())
{
    impl_->host = config.host;
    impl_->port = config.port;
    jobs_ = std::make_unique<JobService>(std::move(config));

    auto& srv = impl_->server;
    JobService& jobs = *jobs_;

    srv.set_default_headers({
        {"Access-Control-Allow-Origin", "*"},
        {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
        {"Access-Control-Allow-Headers", "Content-Type"},
    });
    srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const NotFound& e) {
            send_error(res, 404, e.what());
        } catch (const InvalidArgument& e) {
            send_error(res, 400, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    });

    srv.Get("/datasets", [&jobs](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& d : jobs.catalog()->datasets()) {
            list.push_back(d.summary());
        }
        send_json(res, 200, list);
    });

    auto dataset_or_throw = [&jobs](const std::string& name) {
        const Dataset* d = jobs.catalog()->find(name);
        if (!d) {
            throw NotFound("unknown dataset '" + name + "'");
        }
        return d;
    };

    srv.Get(R"(/datasets/([^/]+))", [dataset_or_throw](const httplib::Request& req, httplib::Response& res) {
        const Dataset* d = dataset_or_throw(req.matches[1]);
        json body = d->summary();
        if (d->atlas_prefix) {
            body["atlas_meta"] = json::parse(read_bytes(fs::path(d->atlas_prefix->string() + ".json")));
        }
        send_json(res, 200, body);
    });

    srv.Get(R"(/datasets/([^/]+)/atlas)", [dataset_or_throw](const httplib::Request& req, httplib::Response& res) {
        const Dataset* d = dataset_or_throw(req.matches[1]);
        if (!d->atlas_prefix) {
            throw NotFound("dataset has no atlas");
        }
        send_file(res, d->atlas_prefix->string() + ".png", "image/png");
    });

    srv.Get(R"(/datasets/([^/]+)/atlas-meta)", [dataset_or_throw](const httplib::Request& req, httplib::Response& res) {
        const Dataset* d = dataset_or_throw(req.matches[1]);
        if (!d->atlas_prefix) {
            throw NotFound("dataset has no atlas");
        }
        send_file(res, d->atlas_prefix->string() + ".json", "application/json");
    });

    srv.Post("/jobs", [&jobs](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            throw InvalidArgument(std::string("request body is not JSON: ") + e.what());
        }
        const AnalysisRequest request = AnalysisRequest::from_json(body);
        const std::string id = jobs.submit(request);
        send_json(res, 202, json{{"id", id}});
    });

    srv.Get(R"(/jobs/([^/]+))", [&jobs](const httplib::Request& req, httplib::Response& res) {
        const auto job = jobs.get(req.matches[1]);
        if (!job) {
            throw NotFound("unknown job");
        }
        send_json(res, 200, job->to_json());
    });

    srv.Get(R"(/assets/(.+))", [&jobs](const httplib::Request& req, httplib::Response& res) {
        const fs::path file = jobs.asset_file(req.matches[1].str());
        send_file(res, file, content_type(file));
    });
}

HttpServer::~HttpServer()
{
    stop();
}

int HttpServer::bind()
{
    int port = impl_->port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(impl_->host);
    } else if (!impl_->server.bind_to_port(impl_->host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw IoError("cannot listen on " + impl_->host + ":" + std::to_string(impl_->port));
    }
    return port;
}

int HttpServer::start()
{
    const int port = bind();
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void HttpServer::run()
{
    bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop()
{
    impl_->server.stop();
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace cubeviz
