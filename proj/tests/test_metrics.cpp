#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfsim/dynamics.hpp"
#include "mfsim/metrics.hpp"

using namespace mfsim;
using namespace mfsim::metrics;
using Catch::Approx;

namespace {

dynamics::SimConfig coupled_config(const kernels::KernelSpec& kernel, std::size_t N,
                                   std::size_t n) {
    dynamics::SimConfig cfg;
    cfg.N = N;
    cfg.d = static_cast<std::size_t>(kernel.dim);
    cfg.H = 0.5;
    cfg.grid = TimeGrid(1.0, n);
    cfg.kernel = kernel;
    cfg.init.type = dynamics::InitialLaw::Type::Gauss;
    cfg.replicas = 4;
    cfg.mkv_proxy = 4 * N;
    cfg.seed = 31;
    return cfg;
}

kernels::KernelSpec named_smooth(const std::string& name, double c = 1.0) {
    kernels::KernelSpec k;
    k.family = kernels::KernelFamily::Smooth;
    k.dim = 1;
    k.smooth_name = name;
    if (name == "constant") k.constant_value = {c};
    return k;
}

}  // namespace

TEST_CASE("coupling error vanishes for constant and zero kernels", "[metrics]") {
    for (const auto& k : {named_smooth("constant", 1.0), named_smooth("zero")}) {
        const auto cfg = coupled_config(k, 3, 16);
        const auto run = dynamics::make_coupling_run(cfg, 77);
        const auto est = coupling_error(run, 2.0);
        REQUIRE(est.value == 0.0);
        REQUIRE(est.stderr_ == 0.0);
    }
}

TEST_CASE("coupling error requires a well-formed run", "[metrics]") {
    dynamics::CouplingRun empty;
    REQUIRE_THROWS_AS(coupling_error(empty, 2.0), InputError);
}

TEST_CASE("coupling and observable errors are exchangeable", "[metrics]") {
    const auto cfg = coupled_config(named_smooth("tanh"), 5, 16);
    auto run = dynamics::make_coupling_run(cfg, 77);
    const auto base = coupling_error(run, 2.0);
    // permute the particle axis of both ensembles consistently
    const std::vector<std::size_t> sigma = {4, 2, 0, 3, 1};
    dynamics::CouplingRun permuted{
        PathEnsemble(cfg.replicas, cfg.N, cfg.grid, cfg.d),
        PathEnsemble(cfg.replicas, cfg.N, cfg.grid, cfg.d)};
    for (std::size_t r = 0; r < cfg.replicas; ++r)
        for (std::size_t p = 0; p < cfg.N; ++p)
            for (std::size_t k = 0; k <= cfg.grid.steps; ++k) {
                permuted.ips.at(r, p, k, 0) = run.ips.at(r, sigma[p], k, 0);
                permuted.copies.at(r, p, k, 0) = run.copies.at(r, sigma[p], k, 0);
            }
    const auto perm = coupling_error(permuted, 2.0);
    REQUIRE(perm.value == Approx(base.value).epsilon(1e-13));
}

TEST_CASE("observable error: constant observable and identical ensembles", "[metrics]") {
    const auto cfg = coupled_config(named_smooth("tanh"), 4, 16);
    const auto noise = dynamics::sample_noise(cfg);
    const auto init =
        dynamics::draw_initials(cfg.init, cfg.replicas, cfg.N, cfg.d, cfg.seed);
    const auto ips = dynamics::simulate_ips(cfg, noise, init);

    TestFunction constant;
    constant.name = "one";
    constant.eval = [](const double*, std::size_t) { return 1.0; };
    constant.lipschitz = 0.0;
    const auto flow = dynamics::build_mkv_reference(cfg, 9);
    REQUIRE(observable_error(ips, flow, constant, 2.0).value == 0.0);

    // flow whose support IS the ensemble of replica 0: zero distance exactly
    dynamics::MeasureFlow self_flow;
    self_flow.grid = cfg.grid;
    self_flow.M = cfg.N;
    self_flow.dim = cfg.d;
    self_flow.support.assign(cfg.grid.size() * cfg.N, 0.0);
    for (std::size_t k = 0; k <= cfg.grid.steps; ++k)
        for (std::size_t p = 0; p < cfg.N; ++p)
            self_flow.support[k * cfg.N + p] = ips.at(0, p, k, 0);
    dynamics::SimConfig one = cfg;
    one.replicas = 1;
    PathEnsemble first(1, cfg.N, cfg.grid, cfg.d);
    for (std::size_t p = 0; p < cfg.N; ++p)
        for (std::size_t k = 0; k <= cfg.grid.steps; ++k)
            first.at(0, p, k, 0) = ips.at(0, p, k, 0);
    const auto est = observable_error(first, self_flow,
                                      TestFunction::builtin("tanh"), 2.0);
    REQUIRE(est.value == 0.0);
}

TEST_CASE("builtin observables satisfy their Lipschitz bounds", "[metrics]") {
    for (const char* name : {"tanh", "gauss", "sin"}) {
        const auto phi = TestFunction::builtin(name);
        REQUIRE(phi.validate_lipschitz(3, 500, 12345));
    }
}

TEST_CASE("sobolev distance: identical clouds, symmetry, domain", "[metrics]") {
    std::vector<double> cloud = {0.1, -0.3, 0.8, 1.4, -0.9};
    REQUIRE(sobolev_distance(cloud, 5, cloud, 5, 1, 1.6, 512, 3) == 0.0);
    std::vector<double> other = {0.5, -0.2, 0.11};
    const double ab = sobolev_distance(cloud, 5, other, 3, 1, 1.6, 512, 3);
    const double ba = sobolev_distance(other, 3, cloud, 5, 1, 1.6, 512, 3);
    REQUIRE(ab == ba);
    REQUIRE(ab > 0.0);
    REQUIRE_THROWS_AS(sobolev_distance(cloud, 5, other, 3, 1, 0.5, 64, 3),
                      DomainError);
}

TEST_CASE("sobolev distance tracks a dense-quadrature oracle on shifts", "[metrics]") {
    // clouds: N(0,1) sample vs its shift by z; oracle integrates the weighted
    // squared CF difference on a dense 1-d frequency grid
    const std::size_t n = 64;
    std::vector<double> cloud(n);
    GaussianStream gs({17, 0, 0, 0, StreamPurpose::Generic});
    gs.fill_normals(cloud);
    const double lambda = 1.6;
    auto oracle = [&](const std::vector<double>& a, const std::vector<double>& b) {
        const double hi = 60.0, step = 1.0 / 512.0;
        long double acc = 0.0L;
        for (double xi = -hi; xi <= hi; xi += step) {
            double re = 0.0, im = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                re += std::cos(xi * a[j]) - std::cos(xi * b[j]);
                im += std::sin(xi * a[j]) - std::sin(xi * b[j]);
            }
            re /= static_cast<double>(n);
            im /= static_cast<double>(n);
            acc += std::pow(1.0 + std::abs(xi), -2.0 * lambda) * (re * re + im * im) *
                   step;
        }
        return std::sqrt(static_cast<double>(acc));
    };
    double prev = 0.0;
    for (double z : {0.1, 0.2, 0.4}) {
        std::vector<double> shifted(n);
        for (std::size_t j = 0; j < n; ++j) shifted[j] = cloud[j] + z;
        const double est = sobolev_distance(cloud, n, shifted, n, 1, lambda, 4096, 7);
        const double ref = oracle(cloud, shifted);
        REQUIRE(est == Approx(ref).epsilon(0.15));
        REQUIRE(est > prev);
        prev = est;
    }
}

TEST_CASE("kappa variation of monotone paths telescopes", "[metrics]") {
    std::vector<double> path = {0.0, 0.2, 0.25, 0.7, 1.1, 1.15, 2.0};
    for (double kappa : {1.0, 1.5, 2.0})
        REQUIRE(kappa_variation(path, 1, kappa) == Approx(2.0).epsilon(1e-13));
    std::vector<double> constant(9, 0.4);
    REQUIRE(kappa_variation(constant, 1, 1.7) == 0.0);
    REQUIRE_THROWS_AS(kappa_variation(path, 1, 0.9), DomainError);
}

namespace {

// brute force over all 2^(n-1) grid partitions
double variation_bruteforce(const std::vector<double>& path, double kappa) {
    const std::size_t n = path.size() - 1;
    double best = 0.0;
    for (std::size_t mask = 0; mask < (1u << (n - 1)); ++mask) {
        double sum = 0.0;
        std::size_t prev = 0;
        for (std::size_t k = 1; k <= n; ++k) {
            const bool cut = (k == n) || (mask & (1u << (k - 1)));
            if (cut) {
                sum += std::pow(std::abs(path[k] - path[prev]), kappa);
                prev = k;
            }
        }
        best = std::max(best, sum);
    }
    return std::pow(best, 1.0 / kappa);
}

}  // namespace

TEST_CASE("kappa variation matches exhaustive enumeration at n = 12", "[metrics]") {
    std::vector<double> path(13);
    GaussianStream gs({23, 0, 0, 0, StreamPurpose::Generic});
    gs.fill_normals(path);
    for (double kappa : {1.0, 1.3, 1.5, 2.0, 2.5})
        REQUIRE(kappa_variation(path, 1, kappa) ==
                Approx(variation_bruteforce(path, kappa)).epsilon(1e-12));
}

TEST_CASE("kappa variation handles vector paths", "[metrics]") {
    // embedding a scalar path in two dimensions leaves the value unchanged
    std::vector<double> flat = {0.0, 0.4, -0.3, 0.9, 0.2};
    std::vector<double> embedded;
    for (double v : flat) {
        embedded.push_back(v);
        embedded.push_back(0.0);
    }
    REQUIRE(kappa_variation(embedded, 2, 1.5) ==
            Approx(kappa_variation(flat, 1, 1.5)).epsilon(1e-14));
}

TEST_CASE("kappa variation is monotone in kappa and dominates increments",
          "[metrics]") {
    std::vector<double> path(33);
    GaussianStream gs({29, 0, 0, 0, StreamPurpose::Generic});
    gs.fill_normals(path);
    double prev = std::numeric_limits<double>::infinity();
    for (double kappa : {1.0, 1.4, 1.9, 2.5, 3.5}) {
        const double v = kappa_variation(path, 1, kappa);
        REQUIRE(v <= prev * (1.0 + 1e-12));
        prev = v;
    }
    const double v2 = kappa_variation(path, 1, 2.0);
    for (std::size_t i = 0; i < path.size(); ++i)
        for (std::size_t j = i + 1; j < path.size(); ++j)
            REQUIRE(std::abs(path[j] - path[i]) <= v2 * (1.0 + 1e-12));
}

TEST_CASE("fBm variation dichotomy at H = 1/2", "[metrics]") {
    const TimeGrid fine(1.0, 1024);
    const auto ens = fbm::sample_fbm(fine, fbm::HurstParam(0.5), 1, 6, 41);
    double grow_ratio = 0.0, stable_ratio = 0.0;
    for (std::size_t r = 0; r < 6; ++r) {
        std::vector<double> full(fine.size()), coarse(257);
        for (std::size_t k = 0; k < fine.size(); ++k) full[k] = ens.at(r, 0, k, 0);
        for (std::size_t k = 0; k < 257; ++k) coarse[k] = full[4 * k];
        grow_ratio += kappa_variation(full, 1, 1.5) / kappa_variation(coarse, 1, 1.5);
        stable_ratio += kappa_variation(full, 1, 2.5) / kappa_variation(coarse, 1, 2.5);
    }
    grow_ratio /= 6.0;
    stable_ratio /= 6.0;
    REQUIRE(stable_ratio <= 1.5);   // kappa > 1/H: stable under refinement
    REQUIRE(grow_ratio >= 1.2);     // kappa < 1/H: keeps growing
}

TEST_CASE("gagliardo seminorm: constants and the linear path", "[metrics]") {
    const TimeGrid grid(1.0, 64);
    std::vector<double> constant(grid.size(), 1.3);
    REQUIRE(gagliardo_seminorm(constant, 1, grid, 0.25, 2.0) == 0.0);

    // refined-grid oracle for f(t) = t
    auto linear_value = [](std::size_t n) {
        const TimeGrid g(1.0, n);
        std::vector<double> path(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) path[k] = g.times[k];
        return gagliardo_seminorm(path, 1, g, 0.25, 2.0);
    };
    const double dense = linear_value(1024);
    REQUIRE(linear_value(64) == Approx(dense).epsilon(0.02));
    REQUIRE(linear_value(128) == Approx(dense).epsilon(0.02));
}

TEST_CASE("gagliardo seminorm separates the fBm regularity regimes", "[metrics]") {
    const TimeGrid fine(1.0, 512);
    const auto ens = fbm::sample_fbm(fine, fbm::HurstParam(0.5), 1, 4, 59);
    double above = 0.0, below = 0.0;  // beta > H vs beta < H
    for (std::size_t r = 0; r < 4; ++r) {
        std::vector<double> full(fine.size()), coarse(129);
        for (std::size_t k = 0; k < fine.size(); ++k) full[k] = ens.at(r, 0, k, 0);
        for (std::size_t k = 0; k < 129; ++k) coarse[k] = full[4 * k];
        const TimeGrid cg(1.0, 128);
        above += gagliardo_seminorm(full, 1, fine, 0.7, 2.0) /
                 gagliardo_seminorm(coarse, 1, cg, 0.7, 2.0);
        below += gagliardo_seminorm(full, 1, fine, 0.3, 2.0) /
                 gagliardo_seminorm(coarse, 1, cg, 0.3, 2.0);
    }
    above /= 4.0;
    below /= 4.0;
    // beta > H: grows under refinement (rate ~ dt^{H - beta}, so ~4^0.2 here);
    // beta < H: stable within x1.5
    REQUIRE(above > 1.25);
    REQUIRE(above > below + 0.15);
    REQUIRE(below <= 1.5);
}

TEST_CASE("rate fits recover exact power laws", "[metrics]") {
    std::vector<RateRow> rows, rows2;
    for (double N : {8.0, 16.0, 32.0, 64.0, 128.0, 256.0}) {
        rows.push_back({N, 3.0 * std::pow(N, -0.5), 0.0});
        rows2.push_back({N, 2.0 / N, 0.0});
    }
    const auto fit = fit_rate(rows);
    REQUIRE(fit.slope == Approx(-0.5).margin(1e-12));
    REQUIRE(fit.r2 == Approx(1.0).margin(1e-12));
    REQUIRE(fit_rate(rows2).slope == Approx(-1.0).margin(1e-12));
    REQUIRE_THROWS_AS(fit_rate({{8, 1, 0}, {16, 0.5, 0}}), InputError);
    rows[2].error = 0.0;
    REQUIRE_THROWS_AS(fit_rate(rows), InputError);
}

TEST_CASE("rate fits tolerate multiplicative noise", "[metrics]") {
    // 10% multiplicative noise on c N^{-1/2} over 6 dyadic N: slope lands in
    // [-0.65, -0.35] in at least 95% of trials
    std::size_t hits = 0;
    const std::size_t trials = 400;
    for (std::size_t t = 0; t < trials; ++t) {
        GaussianStream gs({991, static_cast<std::uint32_t>(t), 0, 0,
                           StreamPurpose::Generic});
        std::vector<double> z(6);
        gs.fill_normals(z);
        std::vector<RateRow> rows;
        double N = 8.0;
        for (std::size_t i = 0; i < 6; ++i, N *= 2.0)
            rows.push_back({N, 2.0 * std::pow(N, -0.5) * std::exp(0.1 * z[i]), 0.0});
        const double slope = fit_rate(rows).slope;
        if (slope >= -0.65 && slope <= -0.35) ++hits;
    }
    REQUIRE(static_cast<double>(hits) / static_cast<double>(trials) >= 0.95);
}

TEST_CASE("control checks: additive, convex, and concave gauges", "[metrics]") {
    const TimeGrid grid(1.0, 12);
    const auto lin = control_check(ControlSample::from_function(
        grid, [](double s, double t) { return t - s; }));
    REQUIRE(lin.pass());
    REQUIRE(lin.power_15_ok);
    REQUIRE(lin.power_2_ok);
    REQUIRE(lin.product_ok);
    const auto sq = control_check(ControlSample::from_function(
        grid, [](double s, double t) { return (t - s) * (t - s); }));
    REQUIRE(sq.pass());
    const auto root = control_check(ControlSample::from_function(
        grid, [](double s, double t) { return std::sqrt(t - s); }));
    REQUIRE_FALSE(root.pass());
    REQUIRE(root.violations > 0);
    const auto diag = control_check(ControlSample::from_function(
        grid, [](double s, double t) { return 1.0 + t - s; }));
    REQUIRE_FALSE(diag.diagonal_ok);
}
