#include <cubeviz/synthetic.hpp>

#include <cmath>
#include <random>

namespace cubeviz::synthetic {

namespace {

// C1 bump with support |s| < 1.
double bump(double s)
{
    if (std::abs(s) >= 1.0) {
        return 0.0;
    }
    const double q = 1.0 - s * s;
    return q * q;
}

template <typename F>
ScalarField sample(const std::string& name, std::size_t n, const std::string& units, F&& f)
{
    const Grid g = unit_grid(n);
    std::vector<double> values(g.voxel_count());
    for (std::size_t z = 0; z < n; ++z) {
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                values[g.index(x, y, z)] = f(g.voxel_center(x, y, z));
            }
        }
    }
    return ScalarField(name, g, units, std::move(values));
}

double distance(const Vec3& p, const Vec3& c)
{
    const double dx = p[0] - c[0];
    const double dy = p[1] - c[1];
    const double dz = p[2] - c[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

} // namespace

Grid unit_grid(std::size_t n, std::string length_unit)
{
    Grid g;
    g.dims = {n, n, n};
    const double h = 1.0 / static_cast<double>(n);
    g.spacing = {h, h, h};
    g.origin = {0.0, 0.0, 0.0};
    g.length_unit = std::move(length_unit);
    return g;
}

ShellAndClump shell_and_clump(std::size_t n)
{
    const Vec3 shell_center{0.27, 0.5, 0.5};
    constexpr double shell_radius = 0.15;
    constexpr double shell_width = 0.06;
    const Vec3 clump_center{0.76, 0.52, 0.48};
    constexpr double clump_radius = 0.14;

    auto ejecta = sample("rho_ej", n, "g/cm^3", [&](const Vec3& p) {
        const double r = distance(p, shell_center);
        // Shell plus a knotty modulation so the iso-surfaces are not trivial.
        const double knots = 1.0 + 0.3 * std::sin(9.0 * p[1]) * std::cos(7.0 * p[2]);
        return density_floor + ejecta_peak * knots * bump((r - shell_radius) / shell_width);
    });
    auto cloud = sample("rho_cl", n, "g/cm^3", [&](const Vec3& p) {
        const double r = distance(p, clump_center);
        return density_floor + cloud_peak * bump(r / clump_radius);
    });
    return {std::move(ejecta), std::move(cloud)};
}

ScalarField sphere_distance(std::size_t n)
{
    return sample("dist", n, "", [](const Vec3& p) { return distance(p, {0.5, 0.5, 0.5}); });
}

ScalarField random_field(const std::string& name, std::size_t n, double lo, double hi, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    const Grid g = unit_grid(n);
    std::vector<double> values(g.voxel_count());
    for (double& v : values) {
        v = dist(rng);
    }
    return ScalarField(name, g, "", std::move(values));
}

} // namespace cubeviz::synthetic
