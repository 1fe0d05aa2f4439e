#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mfsim/besov.hpp"
#include "mfsim/metrics.hpp"

using namespace mfsim;
using namespace mfsim::kernels;
using Catch::Approx;

namespace {

SampledField gaussian_bump_1d(double delta, double extent, double h) {
    const auto nx = static_cast<std::size_t>(std::round(2.0 * extent / h)) + 1;
    return SampledField::from_function(1, extent, nx, [delta](const double* x) {
        return std::exp(-x[0] * x[0] / (2.0 * delta * delta)) /
               (std::sqrt(2.0 * M_PI) * delta);
    });
}

}  // namespace

TEST_CASE("constant fields attain the norm at t_max", "[besov]") {
    // box wide enough that the heat kernel at t_max never sees the boundary
    const auto field = SampledField::from_function(1, 10.0, 401,
                                                   [](const double*) { return 3.0; });
    const double val = besov_thermic_norm(field, -1.0, 1.0 / 64.0, 1.0);
    REQUIRE(val == Approx(3.0).epsilon(1e-9));  // t_max^{1/2} * |c| with t_max = 1
    const double val2 = besov_thermic_norm(field, -0.5, 1.0 / 64.0, 0.25);
    REQUIRE(val2 == Approx(std::pow(0.25, 0.25) * 3.0).epsilon(1e-9));
}

TEST_CASE("mollified dirac family is uniformly bounded in B^{-d}", "[besov]") {
    // heat-semigroup oracle: G_t g_delta = g_{t + delta^2}, so the dyadic
    // supremum of t^{1/2} sup|G_t g_delta| is sqrt(t_max / (2 pi (t_max + delta^2)))
    const double t_min = 1.0 / 256.0, t_max = 1.0;
    std::vector<double> values;
    for (double delta : {0.2, 0.1, 0.05, 0.025}) {
        const auto field = gaussian_bump_1d(delta, 6.0, 0.004);
        const double v = besov_thermic_norm(field, -1.0, t_min, t_max);
        const double oracle = std::sqrt(t_max / (2.0 * M_PI * (t_max + delta * delta)));
        REQUIRE(v == Approx(oracle).epsilon(0.02));
        values.push_back(v);
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    REQUIRE(*hi / *lo <= 3.0);
}

TEST_CASE("plain sup norm of the dirac family grows like 1/delta", "[besov]") {
    std::vector<metrics::RateRow> rows;
    for (double delta : {0.2, 0.1, 0.05, 0.025}) {
        const auto field = gaussian_bump_1d(delta, 4.0, 0.004);
        const double v = besov_thermic_norm(field, 0.0, 1e-4, 0.5);
        rows.push_back({delta, v, 0.0});
    }
    const double slope = metrics::fit_rate(rows).slope;
    REQUIRE(slope > -1.3);
    REQUIRE(slope < -0.7);
}

TEST_CASE("norm is monotone nondecreasing in alpha", "[besov]") {
    // weaker spaces (smaller alpha) measure smaller norms: for t <= 1 the
    // weight t^(-alpha/2) shrinks pointwise as alpha decreases
    const auto field = gaussian_bump_1d(0.1, 4.0, 0.01);
    double prev = 0.0;
    for (double alpha : {-2.0, -1.0, -0.5, 0.0}) {
        const double v = besov_thermic_norm(field, alpha, 1.0 / 64.0, 1.0);
        REQUIRE(v >= prev * (1.0 - 1e-12));
        prev = v;
    }
}

TEST_CASE("under-resolved fields are rejected", "[besov]") {
    const auto field = SampledField::from_function(1, 2.0, 21,
                                                   [](const double*) { return 1.0; });
    // h = 0.2, h^2 = 0.04 > t_min/4
    REQUIRE_THROWS_AS(besov_thermic_norm(field, -1.0, 0.01, 1.0), ResolutionError);
}

TEST_CASE("two-dimensional fields convolve separably", "[besov]") {
    const double delta = 0.15;
    const auto field = SampledField::from_function(
        2, 3.0, 301, [delta](const double* x) {
            return std::exp(-(x[0] * x[0] + x[1] * x[1]) / (2.0 * delta * delta)) /
                   (2.0 * M_PI * delta * delta);
        });
    const double t_max = 0.5;
    const double v = besov_thermic_norm(field, -2.0, 1.0 / 64.0, t_max);
    // oracle: sup of t * sup G_t g = t_max / (2 pi (t_max + delta^2))
    const double oracle = t_max / (2.0 * M_PI * (t_max + delta * delta));
    REQUIRE(v == Approx(oracle).epsilon(0.03));
}
