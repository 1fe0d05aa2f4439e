#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfsim/config.hpp"
#include "mfsim/experiments.hpp"

using namespace mfsim;
using namespace mfsim::experiments;
using Catch::Approx;

namespace {

ExperimentConfig small_campaign() {
    ExperimentConfig cfg;
    cfg.T = 1.0;
    cfg.n = 32;
    cfg.H = 0.5;
    cfg.d = 1;
    cfg.kernel.family = kernels::KernelFamily::Smooth;
    cfg.kernel.dim = 1;
    cfg.kernel.smooth_name = "tanh";
    cfg.init.type = dynamics::InitialLaw::Type::Gauss;
    cfg.replicas = 24;
    cfg.N_grid = {4, 8, 16, 32};
    cfg.M_min = 16;
    cfg.metric_coupling = true;
    cfg.metric_observable = true;
    cfg.metric_sobolev = true;
    cfg.freq_samples = 64;
    cfg.seed = 1001;
    cfg.threads = 2;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config invariants are enforced", "[experiments]") {
    auto cfg = small_campaign();
    cfg.N_grid = {4, 8, 16};  // too short
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.N_grid = {4, 8, 8, 16};
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.N_grid = {4, 8, 16, 32};
    REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("chaos campaign produces decreasing coupling errors", "[experiments]") {
    const auto res = run_chaos_campaign(small_campaign());
    REQUIRE(res.cells.size() == 4);
    for (const auto& c : res.cells) REQUIRE(c.status == "ok");
    const auto* coupling = res.find("coupling");
    REQUIRE(coupling != nullptr);
    REQUIRE(coupling->fit_status == "ok");
    REQUIRE(coupling->table.rows.size() == 4);
    REQUIRE(coupling->table.slope < -0.2);  // the rough trend, tiny campaign
    // cell-wise M follows max(4N, M_min)
    REQUIRE(res.cells[0].M == 16);
    REQUIRE(res.cells[3].M == 128);
}

TEST_CASE("constant kernels degenerate to a refused fit", "[experiments]") {
    auto cfg = small_campaign();
    cfg.kernel.smooth_name = "constant";
    cfg.kernel.constant_value = {1.0};
    cfg.metric_observable = false;
    cfg.metric_sobolev = false;
    const auto res = run_chaos_campaign(cfg);
    const auto* coupling = res.find("coupling");
    REQUIRE(coupling != nullptr);
    REQUIRE(coupling->fit_status == "degenerate: zero error");
    REQUIRE(coupling->table.rows.empty());
}

TEST_CASE("power schedule arithmetic", "[experiments]") {
    auto cfg = small_campaign();
    cfg.schedule = DeltaSchedule::Power;
    cfg.schedule_c = 0.5;
    REQUIRE(cfg.cell_delta(100) == Approx(0.05).epsilon(1e-14));  // c / 10
}

TEST_CASE("fixed-schedule moderate campaign is the chaos campaign bit for bit",
          "[experiments]") {
    auto cfg = small_campaign();
    cfg.metric_observable = false;
    cfg.metric_sobolev = false;
    cfg.schedule = DeltaSchedule::Fixed;
    const auto a = run_chaos_campaign(cfg);
    const auto b = run_moderate_campaign(cfg);
    REQUIRE(a.series.size() == b.series.size());
    for (std::size_t s = 0; s < a.series.size(); ++s) {
        REQUIRE(a.series[s].table.rows.size() == b.series[s].table.rows.size());
        for (std::size_t i = 0; i < a.series[s].table.rows.size(); ++i) {
            REQUIRE(a.series[s].table.rows[i].error == b.series[s].table.rows[i].error);
            REQUIRE(a.series[s].table.rows[i].stderr_ ==
                    b.series[s].table.rows[i].stderr_);
        }
    }
}

TEST_CASE("admissibility precheck gates singular kernels", "[experiments]") {
    auto cfg = small_campaign();
    cfg.metric_observable = false;
    cfg.metric_sobolev = false;
    cfg.kernel.family = kernels::KernelFamily::DiracApprox;
    cfg.kernel.delta = 0.25;
    cfg.kernel.dirac_v = {1.0};
    cfg.H = 0.3;  // needs H < 1/4
    REQUIRE_THROWS_AS(run_chaos_campaign(cfg), ConfigError);
    cfg.override_admissibility = true;
    const auto res = run_chaos_campaign(cfg);
    REQUIRE_FALSE(res.warnings.empty());
}

TEST_CASE("campaigns are deterministic across thread counts and reruns",
          "[experiments]") {
    namespace fs = std::filesystem;
    auto cfg = small_campaign();
    cfg.replicas = 8;
    cfg.N_grid = {4, 8, 16, 24};
    const fs::path base = fs::temp_directory_path() / "mfsim_det_test";
    fs::remove_all(base);
    cfg.threads = 1;
    const auto r1 = run_chaos_campaign(cfg);
    persist(r1, cfg, (base / "t1").string());
    cfg.threads = 2;
    const auto r2 = run_chaos_campaign(cfg);
    persist(r2, cfg, (base / "t2").string());
    cfg.threads = 8;
    const auto r3 = run_chaos_campaign(cfg);
    persist(r3, cfg, (base / "t8").string());
    for (const char* f :
         {"rate_coupling.csv", "rate_observable.csv", "rate_sobolev.csv",
          "loglog_coupling.csv", "config.json"}) {
        const auto a = slurp(base / "t1" / f);
        REQUIRE(a == slurp(base / "t2" / f));
        REQUIRE(a == slurp(base / "t8" / f));
        REQUIRE_FALSE(a.empty());
    }
    fs::remove_all(base);
}

TEST_CASE("persisted rate tables round-trip bit-exactly", "[experiments]") {
    namespace fs = std::filesystem;
    auto cfg = small_campaign();
    cfg.metric_observable = false;
    cfg.metric_sobolev = false;
    cfg.replicas = 8;
    const auto res = run_chaos_campaign(cfg);
    const fs::path dir = fs::temp_directory_path() / "mfsim_roundtrip";
    fs::remove_all(dir);
    persist(res, cfg, dir.string());
    const auto rows = load_rate_table((dir / "rate_coupling.csv").string());
    const auto& orig = res.find("coupling")->table.rows;
    REQUIRE(rows.size() == orig.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i].scale == orig[i].scale);
        REQUIRE(rows[i].error == orig[i].error);
        REQUIRE(rows[i].stderr_ == orig[i].stderr_);
    }
    fs::remove_all(dir);
}

TEST_CASE("config hash tracks semantic fields only", "[experiments]") {
    auto cfg = small_campaign();
    const auto h0 = config_hash(cfg);
    REQUIRE(h0 == config_hash(cfg));  // stable under re-serialization
    auto cfg2 = cfg;
    cfg2.threads = 7;
    cfg2.out_dir = "elsewhere";
    REQUIRE(config_hash(cfg2) == h0);  // non-semantic knobs
    for (auto mutate : std::vector<std::function<void(ExperimentConfig&)>>{
             [](auto& c) { c.seed += 1; },
             [](auto& c) { c.replicas += 1; },
             [](auto& c) { c.H = 0.4; },
             [](auto& c) { c.kernel.delta = 0.123; },
             [](auto& c) { c.N_grid.push_back(64); },
             [](auto& c) { c.schedule = DeltaSchedule::Power; }}) {
        auto c = cfg;
        mutate(c);
        REQUIRE(config_hash(c) != h0);
    }
}

TEST_CASE("reported stderr is consistent with a replica bootstrap", "[experiments]") {
    auto cfg = small_campaign();
    cfg.metric_observable = false;
    cfg.metric_sobolev = false;
    cfg.replicas = 48;
    cfg.N_grid = {4, 8, 16, 24};
    const auto res = run_chaos_campaign(cfg);
    const auto* coupling = res.find("coupling");
    REQUIRE(coupling->replicate_powers.size() == 4);
    for (std::size_t cell = 0; cell < 4; ++cell) {
        const auto& powers = coupling->replicate_powers[cell];
        const auto base = metrics::power_mean_estimate(powers, cfg.moment);
        // bootstrap over replicas
        const std::size_t B = 400;
        std::vector<double> values(B);
        for (std::size_t b = 0; b < B; ++b) {
            GaussianStream gs({4242, static_cast<std::uint32_t>(b),
                               static_cast<std::uint32_t>(cell), 0,
                               StreamPurpose::Generic});
            std::vector<double> resampled(powers.size());
            std::vector<double> u(powers.size());
            gs.fill_uniforms(u);
            for (std::size_t i = 0; i < powers.size(); ++i)
                resampled[i] =
                    powers[static_cast<std::size_t>(u[i] * powers.size())];
            values[b] = metrics::power_mean_estimate(resampled, cfg.moment).value;
        }
        double mean = 0.0, var = 0.0;
        for (double v : values) mean += v;
        mean /= B;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= B - 1;
        const double boot_se = std::sqrt(var);
        REQUIRE(base.stderr_ <= 1.5 * boot_se);
        REQUIRE(boot_se <= 1.5 * base.stderr_);
    }
}

TEST_CASE("diverging cells are recorded and the fit refuses", "[experiments]") {
    auto cfg = small_campaign();
    cfg.metric_observable = false;
    cfg.metric_sobolev = false;
    cfg.replicas = 2;
    cfg.kernel.smooth_name = "constant";
    cfg.kernel.constant_value = {2e13};  // blows past the 1e12 guard in one step
    const auto res = run_chaos_campaign(cfg);
    for (const auto& c : res.cells) {
        REQUIRE(c.status != "ok");
        REQUIRE(c.status.find("divergence") != std::string::npos);
    }
    const auto* coupling = res.find("coupling");
    REQUIRE(coupling->fit_status == "insufficient cells");
}

TEST_CASE("noise self-check passes for the standard parameters", "[experiments]") {
    const auto rep = run_noise_selfcheck({0.25, 0.5, 1.5}, TimeGrid(1.0, 32), 8000, 5);
    REQUIRE(rep.pass);
    REQUIRE(rep.entries.size() == 3);
    REQUIRE(rep.entries[1].indep_bound > 0.0);
    REQUIRE(rep.entries[2].integral_identity);
    REQUIRE_FALSE(rep.to_text().empty());
}
