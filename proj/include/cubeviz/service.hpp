#pragma once

#include <cubeviz/error.hpp>
#include <cubeviz/field.hpp>
#include <cubeviz/mesh.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace cubeviz {

/// A lookup for a dataset, field, job or asset that does not exist.
class NotFound : public Error
{
public:
    using Error::Error;
};

/// Shell command template. `{input_cube}`, `{iso}` and `{output_mesh}` are
/// required; `{format}` is optional. Substituted values are single-quoted.
struct ExternalBackendConfig
{
    std::string command;
    double timeout_s = 60.0;

    void validate() const;
};

struct ServerConfig
{
    std::string host = "127.0.0.1";
    int port = 8080; // 0 picks a free port
    std::filesystem::path dataset_dir;
    std::filesystem::path asset_dir;
    std::optional<ExternalBackendConfig> external;
    unsigned worker_width = 1;

    /// Relative paths resolve against `base_dir`.
    static ServerConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static ServerConfig load(const std::filesystem::path& path);
};

enum class AnalysisKind { isosurface, multilayer };
enum class Backend { internal, external };
enum class JobStatus { queued, running, done, failed };

std::string_view job_status_name(JobStatus s);

struct AnalysisRequest
{
    AnalysisKind kind = AnalysisKind::isosurface;
    std::string dataset;
    std::string field;
    std::vector<LayerSpec> layers; // exactly one for isosurface
    MeshFormat format = MeshFormat::obj;
    Backend backend = Backend::internal;

    /// Throws InvalidArgument on malformed or inconsistent requests.
    static AnalysisRequest from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct AnalysisJob
{
    std::string id;
    AnalysisRequest request;
    JobStatus status = JobStatus::queued;
    std::optional<std::string> asset; // relative to the asset directory
    std::optional<std::string> error;
    std::optional<double> timing_ms;
    bool cached = false;

    nlohmann::json to_json() const;
};

struct CatalogField
{
    std::string name;
    std::filesystem::path meta_path;
    CubeHeader header;
};

struct Dataset
{
    std::string name;
    std::filesystem::path dir;
    std::vector<CatalogField> fields; // sorted by name
    std::optional<std::filesystem::path> atlas_prefix;

    const CatalogField* find(std::string_view field) const;
    nlohmann::json summary() const;
};

/// Datasets are the subdirectories of the dataset directory. Each `*.meta`
/// cube inside is a field; `atlas.png` + `atlas.json` form the dataset atlas.
class Catalog
{
public:
    static Catalog scan(const std::filesystem::path& dataset_dir);

    const Dataset* find(std::string_view name) const;
    const std::vector<Dataset>& datasets() const { return datasets_; }

private:
    std::vector<Dataset> datasets_;
};

/// FIFO analysis queue executed by `worker_width` threads. Assets are stored
/// under `<asset_dir>/<key>/`, where the key hashes the request and the
/// identity of the input cube; an existing asset is reused instead of
/// recomputed.
class JobService
{
public:
    explicit JobService(ServerConfig config);
    ~JobService();

    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    /// Validates the request against the catalog and enqueues it.
    std::string submit(const AnalysisRequest& request);

    std::optional<AnalysisJob> get(const std::string& id) const;

    /// Blocks until the job is done or failed, or the timeout elapses.
    std::optional<AnalysisJob> wait(const std::string& id, std::chrono::milliseconds timeout) const;

    std::shared_ptr<const Catalog> catalog() const { return catalog_; }
    const ServerConfig& config() const { return config_; }

    /// Resolves an asset reference to a file under the asset directory.
    std::filesystem::path asset_file(std::string_view asset) const;

private:
    struct Outcome
    {
        std::string asset;
        double timing_ms;
        bool cached;
    };

    void worker_loop();
    Outcome run(const AnalysisJob& job, std::chrono::steady_clock::time_point start);
    void run_internal(const AnalysisRequest& request, const CatalogField& field, const std::filesystem::path& out);
    void run_external(const AnalysisRequest& request, const CatalogField& field, const std::filesystem::path& out);

    ServerConfig config_;
    std::shared_ptr<const Catalog> catalog_;

    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, AnalysisJob> jobs_;
    std::deque<std::string> queue_;
    std::uint64_t next_id_ = 1;
    std::uint64_t nonce_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// HTTP front end over a JobService.
class HttpServer
{
public:
    explicit HttpServer(ServerConfig config);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    int start();

    /// Binds and serves on the calling thread until stop().
    void run();

    void stop();

    JobService& jobs() { return *jobs_; }

private:
    struct Impl;
    int bind();

    std::unique_ptr<JobService> jobs_;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
};

} // namespace cubeviz
