#include "test_support.hpp"

#include <cubeviz/cli.hpp>

#include <atomic>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <unistd.h>

namespace testing {

namespace fs = std::filesystem;

TempDir::TempDir()
{
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path()
        / ("cubeviz-test-" + std::to_string(::getpid()) + "-" + std::to_string(rd()) + "-"
            + std::to_string(counter++));
    fs::create_directories(path_);
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(path_, ec);
}

CliResult run_cli(const std::vector<std::string>& args)
{
    std::vector<const char*> argv{"cubeviz"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = cubeviz::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary);
    out << bytes;
}

cubeviz::ScalarField make_field(
    const std::string& name,
    const cubeviz::Index3& dims,
    std::vector<double> values,
    const std::string& units)
{
    cubeviz::Grid g;
    g.dims = dims;
    return cubeviz::ScalarField(name, g, units, std::move(values));
}

} // namespace testing
