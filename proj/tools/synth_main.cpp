// Writes the synthetic datasets used by the examples and benchmarks.

#include <cubeviz/error.hpp>
#include <cubeviz/field.hpp>
#include <cubeviz/synthetic.hpp>

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

namespace fs = std::filesystem;
namespace syn = cubeviz::synthetic;

int main(int argc, char** argv)
{
    CLI::App app{"Synthetic cube generator", "cubeviz-synth"};
    app.require_subcommand(1);

    std::size_t size = 64;
    fs::path out;
    double lo = 0.0;
    double hi = 1.0;
    std::uint64_t seed = 1;

    auto* remnant = app.add_subcommand("remnant", "Ejecta shell + cloud clump (rho_ej.meta, rho_cl.meta)");
    remnant->add_option("--size", size, "Voxels per axis")->check(CLI::Range(2, 1024));
    remnant->add_option("--out", out, "Output directory")->required();

    auto* sphere = app.add_subcommand("sphere", "Distance from the cube center");
    sphere->add_option("--size", size, "Voxels per axis")->check(CLI::Range(2, 1024));
    sphere->add_option("--out", out, "Output cube header")->required();

    auto* random = app.add_subcommand("random", "Uniform random values");
    random->add_option("--size", size, "Voxels per axis")->check(CLI::Range(2, 1024));
    random->add_option("--lo", lo, "Lower bound");
    random->add_option("--hi", hi, "Upper bound");
    random->add_option("--seed", seed, "Generator seed");
    random->add_option("--out", out, "Output cube header")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (remnant->parsed()) {
            fs::create_directories(out);
            const auto pair = syn::shell_and_clump(size);
            cubeviz::save_cube(pair.ejecta, out / "rho_ej.meta");
            cubeviz::save_cube(pair.cloud, out / "rho_cl.meta");
        } else if (sphere->parsed()) {
            fs::create_directories(fs::absolute(out).parent_path());
            cubeviz::save_cube(syn::sphere_distance(size), out);
        } else if (random->parsed()) {
            fs::create_directories(fs::absolute(out).parent_path());
            cubeviz::save_cube(syn::random_field("random", size, lo, hi, seed), out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
