#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfsim/common.hpp"
#include "mfsim/dynamics.hpp"
#include "mfsim/fbm.hpp"
#include "mfsim/kernels.hpp"
#include "mfsim/metrics.hpp"
#include "mfsim/parallel.hpp"
#include "mfsim/version.hpp"

namespace mfsim::experiments {

// ---------------------------------------------------------------------------
// Campaign configuration: one batch of coupled runs over an N grid.
// ---------------------------------------------------------------------------

enum class DeltaSchedule { Fixed, Power };

struct ExperimentConfig {
    double T = 1.0;
    std::size_t n = 256;
    double H = 0.5;
    std::size_t d = 1;
    kernels::KernelSpec kernel;
    dynamics::InitialLaw init;
    double moment = 2.0;
    std::size_t replicas = 200;
    std::vector<std::size_t> N_grid = {8, 16, 32, 64, 128, 256};
    std::size_t M_min = 1024;
    std::size_t sim_N = 8;  // particle count for single `simulate` runs
    DeltaSchedule schedule = DeltaSchedule::Fixed;
    double schedule_c = 0.5;
    bool metric_coupling = true;
    bool metric_observable = false;
    bool metric_sobolev = false;
    std::string phi_name = "tanh";
    double sobolev_lambda = 1.6;
    std::size_t freq_samples = 4096;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool allow_stiff = false;
    bool override_admissibility = false;
    bool dump_trajectories = false;
    int threads = 1;

    TimeGrid grid() const { return TimeGrid(T, n); }

    std::size_t proxy_for(std::size_t N) const {
        return std::max<std::size_t>(4 * N, M_min);
    }

    double cell_delta(std::size_t N) const {
        return schedule == DeltaSchedule::Power
                   ? schedule_c / std::sqrt(static_cast<double>(N))
                   : kernel.delta;
    }

    void validate() const {
        if (N_grid.size() < 4)
            throw ConfigError("campaign.N: need at least 4 values for a rate fit");
        for (std::size_t i = 0; i < N_grid.size(); ++i) {
            if (N_grid[i] < 2) throw ConfigError("campaign.N: every N must be >= 2");
            if (i > 0 && N_grid[i] <= N_grid[i - 1])
                throw ConfigError("campaign.N: values must be strictly increasing");
        }
        if (replicas < 1) throw ConfigError("campaign.replicas: must be >= 1");
        if (moment < 1.0) throw ConfigError("sim.m: moment must be >= 1");
        if (schedule == DeltaSchedule::Power && !(schedule_c > 0.0))
            throw ConfigError("campaign.delta_schedule: power constant must be positive");
        kernel.validate();
        (void)fbm::HurstParam(H);
        (void)TimeGrid(T, n);
    }
};

struct Fingerprint {
    std::string tool = "mfsim";
    std::string version = MFSIM_VERSION;
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct CellInfo {
    std::size_t N = 0;
    std::size_t M = 0;
    double delta = 0.0;
    double wall_seconds = 0.0;
    std::string status;  // "ok" or the failure reason
};

struct MetricSeries {
    std::string name;
    metrics::RateTable table;
    std::string fit_status;  // "ok" | "degenerate: zero error" | "insufficient cells"
    std::vector<std::vector<double>> replicate_powers;  // per surviving cell
};

struct CampaignResult {
    Fingerprint fingerprint;
    std::vector<CellInfo> cells;
    std::vector<MetricSeries> series;
    std::vector<std::string> warnings;

    const MetricSeries* find(const std::string& name) const {
        for (const auto& s : series)
            if (s.name == name) return &s;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Canonical serialization (field order fixed by this function) and hashing.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const kernels::KernelSpec& k) {
    nlohmann::ordered_json j;
    j["family"] = kernels::family_name(k.family);
    j["dim"] = k.dim;
    j["delta"] = k.delta;
    switch (k.family) {
        case kernels::KernelFamily::Smooth:
            j["name"] = k.smooth_name;
            if (k.smooth_name == "constant") j["value"] = k.constant_value;
            break;
        case kernels::KernelFamily::Additive:
            j["f"] = {{"name", k.f.name}, {"scale", k.f.scale}};
            j["g"] = {{"name", k.g.name}, {"scale", k.g.scale}};
            j["h"] = {{"name", k.h.name}, {"scale", k.h.scale}};
            break;
        case kernels::KernelFamily::RieszGradient:
            j["s"] = k.riesz_s;
            j["matrix"] = k.matrix == kernels::MatrixKind::Identity      ? "identity"
                          : k.matrix == kernels::MatrixKind::NegIdentity ? "neg_identity"
                                                                         : "symplectic";
            break;
        case kernels::KernelFamily::LogGradient:
            j["matrix"] = k.matrix == kernels::MatrixKind::Identity      ? "identity"
                          : k.matrix == kernels::MatrixKind::NegIdentity ? "neg_identity"
                                                                         : "symplectic";
            break;
        case kernels::KernelFamily::DiracApprox:
            j["v"] = k.dirac_v;
            break;
    }
    if (k.modulation == kernels::ModulationKind::Power) j["tmod_power"] = k.modulation_p;
    return j;
}

inline nlohmann::ordered_json to_json(const dynamics::InitialLaw& law) {
    nlohmann::ordered_json j;
    switch (law.type) {
        case dynamics::InitialLaw::Type::Point:
            j["type"] = "point";
            j["mean"] = law.mean;
            break;
        case dynamics::InitialLaw::Type::Gauss:
            j["type"] = "gauss";
            j["mean"] = law.mean;
            j["sigma"] = law.sigma;
            break;
        case dynamics::InitialLaw::Type::UniformBox:
            j["type"] = "uniform";
            j["lo"] = law.lo;
            j["hi"] = law.hi;
            break;
    }
    return j;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["T"] = cfg.T;
    j["n"] = cfg.n;
    j["H"] = cfg.H;
    j["d"] = cfg.d;
    j["kernel"] = to_json(cfg.kernel);
    j["init"] = to_json(cfg.init);
    j["m"] = cfg.moment;
    j["replicas"] = cfg.replicas;
    j["N_grid"] = cfg.N_grid;
    j["M_min"] = cfg.M_min;
    j["sim_N"] = cfg.sim_N;
    j["delta_schedule"] =
        cfg.schedule == DeltaSchedule::Power
            ? "power:" + std::to_string(cfg.schedule_c)
            : std::string("fixed");
    nlohmann::ordered_json metrics_list = nlohmann::ordered_json::array();
    if (cfg.metric_coupling) metrics_list.push_back("coupling");
    if (cfg.metric_observable) metrics_list.push_back("observable");
    if (cfg.metric_sobolev) metrics_list.push_back("sobolev");
    j["metrics"] = metrics_list;
    j["phi"] = cfg.phi_name;
    j["lambda"] = cfg.sobolev_lambda;
    j["freq_samples"] = cfg.freq_samples;
    j["seed"] = cfg.seed;
    j["allow_stiff"] = cfg.allow_stiff;
    j["override_admissibility"] = cfg.override_admissibility;
    return j;
}

// Semantic hash: threads, out_dir and dump flags do not participate.
inline std::string config_hash(const ExperimentConfig& cfg) {
    return to_hex(fnv1a64(to_json(cfg).dump()));
}

// ---------------------------------------------------------------------------
// Campaign runner.
// ---------------------------------------------------------------------------

namespace detail {

struct FlowTables {
    dynamics::MeasureFlow flow;
    std::vector<double> phi;              // <phi, mu_bar_k> per k
    std::vector<std::complex<double>> cf; // flow characteristic function [k][f]
};

inline void precompute_flow_tables(FlowTables& ft, const ExperimentConfig& cfg,
                                   const metrics::TestFunction* phi,
                                   const std::vector<double>* freqs) {
    const auto& flow = ft.flow;
    const std::size_t n1 = flow.grid.size();
    if (phi) {
        ft.phi.assign(n1, 0.0);
        for (std::size_t k = 0; k < n1; ++k) {
            DdAcc acc;
            for (std::size_t m = 0; m < flow.M; ++m)
                acc.add(phi->eval(&flow.support[(k * flow.M + m) * flow.dim], flow.dim));
            ft.phi[k] = acc.value() / static_cast<double>(flow.M);
        }
    }
    if (freqs) {
        const std::size_t F = freqs->size() / cfg.d;
        ft.cf.assign(n1 * F, {0.0, 0.0});
        parallel_for(n1, cfg.threads, [&](std::size_t k) {
            const double* y = flow.slice(k);
            for (std::size_t f = 0; f < F; ++f) {
                const double* xi = &(*freqs)[f * cfg.d];
                double re = 0.0, im = 0.0;
                for (std::size_t m = 0; m < flow.M; ++m) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cfg.d; ++c)
                        dot += xi[c] * y[m * cfg.d + c];
                    re += std::cos(dot);
                    im += std::sin(dot);
                }
                ft.cf[k * F + f] = {re / static_cast<double>(flow.M),
                                    im / static_cast<double>(flow.M)};
            }
        });
    }
}

struct ReplicaMetrics {
    double coupling_power = 0.0;
    double observable_power = 0.0;
    double sobolev_power = 0.0;
};

// One replica of one campaign cell: generate noise and initials from keyed
// streams, run the particle system and the coupled copies on the shared
// data, and reduce the requested metrics online.
inline ReplicaMetrics run_cell_replica(
    const ExperimentConfig& cfg, const kernels::KernelEval& ev_ips,
    const kernels::KernelEval& ev_ref, const fbm::FbmSampler& sampler, std::size_t N,
    const FlowTables& ft, const metrics::TestFunction* phi,
    const std::vector<double>* freqs, double weight_mass, std::size_t replica) {
    const TimeGrid& grid = sampler.grid();
    const std::size_t d = cfg.d;
    const std::size_t n1 = grid.size();
    const std::size_t stride = n1 * d;

    std::vector<double> noise(N * stride);
    std::vector<double> z, base;
    for (std::size_t p = 0; p < N; ++p)
        for (std::size_t c = 0; c < d; ++c) {
            std::vector<double> path(n1);
            sampler.sample_path({cfg.seed, static_cast<std::uint32_t>(replica),
                                 static_cast<std::uint32_t>(p),
                                 static_cast<std::uint32_t>(c), StreamPurpose::Noise},
                                z, base, path.data());
            for (std::size_t k = 0; k < n1; ++k) noise[p * stride + k * d + c] = path[k];
        }
    std::vector<double> init(N * d);
    dynamics::draw_initials_into(cfg.init, replica, N, d, cfg.seed,
                                 StreamPurpose::Init, init.data());

    std::vector<double> ips_path(N * stride);
    std::vector<double> ips_phi;
    std::vector<double> sob_dist;
    const std::size_t F = freqs ? freqs->size() / d : 0;
    if (phi) ips_phi.assign(n1, 0.0);
    if (freqs) sob_dist.assign(n1, 0.0);

    dynamics::detail::run_pairwise_replica(
        ev_ips, grid, N, d, noise.data(), init.data(), static_cast<long>(replica),
        [&](std::size_t k, const double* x) {
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < d; ++c)
                    ips_path[i * stride + k * d + c] = x[i * d + c];
            if (phi) {
                DdAcc acc;
                for (std::size_t i = 0; i < N; ++i) acc.add(phi->eval(x + i * d, d));
                ips_phi[k] = acc.value() / static_cast<double>(N);
            }
            if (freqs) {
                DdAcc acc;
                for (std::size_t f = 0; f < F; ++f) {
                    const double* xi = &(*freqs)[f * d];
                    double re = 0.0, im = 0.0;
                    for (std::size_t i = 0; i < N; ++i) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < d; ++c) dot += xi[c] * x[i * d + c];
                        re += std::cos(dot);
                        im += std::sin(dot);
                    }
                    const auto ref = ft.cf[k * F + f];
                    const double dre = re / static_cast<double>(N) - ref.real();
                    const double dim_ = im / static_cast<double>(N) - ref.imag();
                    acc.add(dre * dre + dim_ * dim_);
                }
                sob_dist[k] =
                    std::sqrt(std::max(0.0, weight_mass * acc.value() /
                                                static_cast<double>(F)));
            }
        });

    std::vector<double> max_dist2(N, 0.0);
    dynamics::detail::run_copies_replica(
        ev_ref, grid, ft.flow.support.data(), ft.flow.M, N, d, noise.data(),
        init.data(), static_cast<long>(replica),
        [&](std::size_t k, const double* x) {
            for (std::size_t i = 0; i < N; ++i) {
                double n2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = ips_path[i * stride + k * d + c] - x[i * d + c];
                    n2 += diff * diff;
                }
                max_dist2[i] = std::max(max_dist2[i], n2);
            }
        });

    ReplicaMetrics out;
    {
        DdAcc acc;
        for (std::size_t i = 0; i < N; ++i)
            acc.add(std::pow(std::sqrt(max_dist2[i]), cfg.moment));
        out.coupling_power = acc.value() / static_cast<double>(N);
    }
    if (phi) {
        double sup = 0.0;
        for (std::size_t k = 0; k < n1; ++k)
            sup = std::max(sup, std::abs(ips_phi[k] - ft.phi[k]));
        out.observable_power = std::pow(sup, cfg.moment);
    }
    if (freqs) {
        double sup = 0.0;
        for (double v : sob_dist) sup = std::max(sup, v);
        out.sobolev_power = std::pow(sup, cfg.moment);
    }
    return out;
}

}  // namespace detail

// Shared engine behind the chaos and moderate campaigns. The mollification
// schedule decides both the per-cell kernel width and the reference policy:
// fixed -> the reference flow is rebuilt per cell at M = max(4N, M_min);
// power -> one flow, built at the finest width delta(N_max) with the largest
// M, reused by every cell (the computable stand-in for the limiting kernel).
inline CampaignResult run_campaign(const ExperimentConfig& cfg) {
    cfg.validate();
    const fbm::HurstParam H(cfg.H);

    // admissibility gate at (nominal alpha, q = 2, H); Lipschitz-regime
    // kernels (alpha >= 1) are classical and never need the override
    CampaignResult result;
    const double alpha = cfg.kernel.nominal_alpha();
    if (alpha < 1.0) {
        const auto adm = kernels::admissible(alpha, 2.0, cfg.H);
        if (!adm.ok) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "kernel inadmissible at (alpha = %g, q = 2, H = %g), margin %g",
                          alpha, cfg.H, adm.margin);
            if (!cfg.override_admissibility)
                throw ConfigError(std::string(buf) +
                                  "; set override_admissibility to proceed");
            result.warnings.emplace_back(std::string(buf) + " (override active)");
        }
    }

    result.fingerprint.seed = cfg.seed;
    result.fingerprint.config_hash = config_hash(cfg);

    const TimeGrid grid = cfg.grid();
    const fbm::FbmSampler sampler(grid, H);
    const std::uint64_t seed_aux = cfg.seed ^ 0x9E3779B97F4A7C15ULL;

    const metrics::TestFunction phi_fn =
        metrics::TestFunction::builtin(cfg.phi_name);
    const metrics::TestFunction* phi = cfg.metric_observable ? &phi_fn : nullptr;

    std::vector<double> freqs;
    double weight_mass = 0.0;
    if (cfg.metric_sobolev) {
        metrics::FrequencySampler fs(cfg.d, cfg.sobolev_lambda);
        fs.draw(cfg.seed, cfg.freq_samples, freqs);
        weight_mass = fs.weight_mass();
    }
    const std::vector<double>* freq_ptr = cfg.metric_sobolev ? &freqs : nullptr;

    // reference kernel: finest width under a power schedule, else as given
    kernels::KernelSpec ref_spec = cfg.kernel;
    ref_spec.delta = cfg.cell_delta(cfg.N_grid.back());
    const kernels::KernelEval ev_ref(ref_spec);

    detail::FlowTables shared_flow;  // built once under a power schedule
    const bool single_flow = cfg.schedule == DeltaSchedule::Power;
    if (single_flow) {
        dynamics::SimConfig aux;
        aux.N = cfg.N_grid.back();
        aux.d = cfg.d;
        aux.H = cfg.H;
        aux.grid = grid;
        aux.kernel = ref_spec;
        aux.init = cfg.init;
        aux.mkv_proxy = cfg.proxy_for(cfg.N_grid.back());
        aux.seed = cfg.seed;
        aux.allow_stiff = cfg.allow_stiff;
        std::string warn;
        shared_flow.flow = dynamics::build_mkv_reference(aux, seed_aux, &warn);
        if (!warn.empty()) result.warnings.push_back(warn);
        detail::precompute_flow_tables(shared_flow, cfg, phi, freq_ptr);
    }

    std::vector<std::vector<double>> coupling_powers, observable_powers, sobolev_powers;
    std::vector<std::size_t> surviving;

    for (std::size_t cell = 0; cell < cfg.N_grid.size(); ++cell) {
        const std::size_t N = cfg.N_grid[cell];
        const auto t0 = std::chrono::steady_clock::now();
        CellInfo info;
        info.N = N;
        info.delta = cfg.cell_delta(N);
        info.M = single_flow ? cfg.proxy_for(cfg.N_grid.back()) : cfg.proxy_for(N);
        try {
            kernels::KernelSpec cell_spec = cfg.kernel;
            cell_spec.delta = info.delta;
            const kernels::KernelEval ev_ips(cell_spec);
            {
                std::string warn;
                dynamics::detail::enforce_step_guard(ev_ips, grid.dt(), cfg.allow_stiff,
                                                     &warn);
                if (!warn.empty()) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "[N = %zu] ", N);
                    result.warnings.push_back(buf + warn);
                }
            }

            detail::FlowTables cell_flow;
            const detail::FlowTables* ft = &shared_flow;
            if (!single_flow) {
                dynamics::SimConfig aux;
                aux.N = N;
                aux.d = cfg.d;
                aux.H = cfg.H;
                aux.grid = grid;
                aux.kernel = cell_spec;
                aux.init = cfg.init;
                aux.mkv_proxy = info.M;
                aux.seed = cfg.seed;
                aux.allow_stiff = cfg.allow_stiff;
                cell_flow.flow = dynamics::build_mkv_reference(aux, seed_aux);
                detail::precompute_flow_tables(cell_flow, cfg, phi, freq_ptr);
                ft = &cell_flow;
            }
            const kernels::KernelEval& ev_copies = single_flow ? ev_ref : ev_ips;

            std::vector<detail::ReplicaMetrics> per_replica(cfg.replicas);
            parallel_for(cfg.replicas, cfg.threads, [&](std::size_t r) {
                per_replica[r] = detail::run_cell_replica(cfg, ev_ips, ev_copies,
                                                          sampler, N, *ft, phi,
                                                          freq_ptr, weight_mass, r);
            });

            std::vector<double> cp(cfg.replicas), op(cfg.replicas), sp(cfg.replicas);
            for (std::size_t r = 0; r < cfg.replicas; ++r) {
                cp[r] = per_replica[r].coupling_power;
                op[r] = per_replica[r].observable_power;
                sp[r] = per_replica[r].sobolev_power;
            }
            coupling_powers.push_back(std::move(cp));
            observable_powers.push_back(std::move(op));
            sobolev_powers.push_back(std::move(sp));
            surviving.push_back(cell);
            info.status = "ok";
        } catch (const DivergenceError& e) {
            info.status = e.what();
        }
        info.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.cells.push_back(info);
    }

    const auto build_series = [&](const std::string& name,
                                  const std::vector<std::vector<double>>& powers) {
        MetricSeries s;
        s.name = name;
        s.replicate_powers = powers;
        std::vector<metrics::RateRow> rows;
        bool any_zero = false;
        for (std::size_t i = 0; i < surviving.size(); ++i) {
            const auto est = metrics::power_mean_estimate(powers[i], cfg.moment);
            if (est.value <= 0.0) {
                any_zero = true;
                continue;
            }
            rows.push_back({static_cast<double>(cfg.N_grid[surviving[i]]), est.value,
                            est.stderr_});
        }
        if (rows.size() >= 3) {
            s.table = metrics::fit_rate(rows);
            s.fit_status = "ok";
        } else {
            s.table.rows = rows;
            s.fit_status = any_zero ? "degenerate: zero error" : "insufficient cells";
        }
        result.series.push_back(std::move(s));
    };

    if (cfg.metric_coupling) build_series("coupling", coupling_powers);
    if (cfg.metric_observable) build_series("observable", observable_powers);
    if (cfg.metric_sobolev) build_series("sobolev", sobolev_powers);
    return result;
}

// Chaos campaign: fixed mollification width across the N grid.
inline CampaignResult run_chaos_campaign(ExperimentConfig cfg) {
    cfg.schedule = DeltaSchedule::Fixed;
    return run_campaign(cfg);
}

// Moderate-interaction campaign: delta(N) = c N^{-1/2} under a power
// schedule; with a fixed schedule this is the chaos campaign, code path
// included.
inline CampaignResult run_moderate_campaign(const ExperimentConfig& cfg) {
    return run_campaign(cfg);
}

// ---------------------------------------------------------------------------
// Noise self-check: executes the fbm-module invariants and reports
// measured statistics.
// ---------------------------------------------------------------------------

struct NoiseCheckEntry {
    double H = 0.0;
    double cov_max_dev_se = 0.0;   // max |dev| / SE over dyadic pairs
    double selfsim_slope = 0.0;    // log-log slope of E|W_t|^2, target 2H
    double indep_max_corr = 0.0;   // H = 0.5 only
    double indep_bound = 0.0;
    bool integral_identity = true; // H in (1,2) only
    bool pass = false;
};

struct NoiseCheckReport {
    std::vector<NoiseCheckEntry> entries;
    bool pass = true;

    std::string to_text() const {
        std::ostringstream os;
        char buf[200];
        os << "fbm self-check\n";
        for (const auto& e : entries) {
            if (e.H < 1.0) {
                std::snprintf(buf, sizeof buf,
                              "  H = %-5g %s  cov dev %.2f SE (< 5), slope %.4f "
                              "(target %.2f +- 0.05)",
                              e.H, e.pass ? "pass" : "FAIL", e.cov_max_dev_se,
                              e.selfsim_slope, 2.0 * e.H);
                os << buf;
                if (e.indep_bound > 0.0) {
                    std::snprintf(buf, sizeof buf, ", indep corr %.4f (< %.4f)",
                                  e.indep_max_corr, e.indep_bound);
                    os << buf;
                }
                os << "\n";
            } else {
                std::snprintf(buf, sizeof buf, "  H = %-5g %s  integral identity %s\n",
                              e.H, e.pass ? "pass" : "FAIL",
                              e.integral_identity ? "exact" : "violated");
                os << buf;
            }
        }
        return os.str();
    }
};

inline NoiseCheckReport run_noise_selfcheck(const std::vector<double>& H_list,
                                            const TimeGrid& grid, std::size_t replicas,
                                            std::uint64_t seed) {
    NoiseCheckReport report;
    for (double Hval : H_list) {
        NoiseCheckEntry e;
        e.H = Hval;
        const fbm::HurstParam H(Hval);
        if (Hval < 1.0) {
            const PathEnsemble ens = fbm::sample_fbm(grid, H, 1, replicas, seed);
            const double R = static_cast<double>(replicas);
            // dyadic increment second moments vs |t-s|^2H
            double worst = 0.0;
            for (std::size_t span = grid.steps; span >= 1; span /= 2) {
                for (std::size_t s = 0; s + span <= grid.steps; s += span) {
                    DdAcc acc;
                    for (std::size_t r = 0; r < replicas; ++r) {
                        const double inc =
                            ens.at(r, 0, s + span, 0) - ens.at(r, 0, s, 0);
                        acc.add(inc * inc);
                    }
                    const double emp = acc.value() / R;
                    const double gap = grid.times[s + span] - grid.times[s];
                    const double expect = std::pow(gap, 2.0 * Hval);
                    const double se = expect * std::sqrt(2.0 / R);
                    worst = std::max(worst, std::abs(emp - expect) / se);
                }
                if (span == 1) break;
            }
            e.cov_max_dev_se = worst;
            // self-similarity: slope of log E|W_t|^2 over dyadic t
            std::vector<metrics::RateRow> rows;
            for (std::size_t span = grid.steps; span >= 1; span /= 2) {
                DdAcc acc;
                for (std::size_t r = 0; r < replicas; ++r)
                    acc.add(ens.at(r, 0, span, 0) * ens.at(r, 0, span, 0));
                rows.push_back({grid.times[span], acc.value() / R, 0.0});
                if (span == 1) break;
            }
            e.selfsim_slope = metrics::fit_rate(rows).slope;
            bool ok = worst < 5.0 && std::abs(e.selfsim_slope - 2.0 * Hval) < 0.05;
            // disjoint-increment independence at H = 1/2
            if (std::abs(Hval - 0.5) < 1e-12) {
                const std::size_t q = grid.steps / 4;
                DdAcc sa, sb, saa, sbb, sab;
                for (std::size_t r = 0; r < replicas; ++r) {
                    const double a = ens.at(r, 0, q, 0) - ens.at(r, 0, 0, 0);
                    const double b = ens.at(r, 0, 3 * q, 0) - ens.at(r, 0, 2 * q, 0);
                    sa.add(a);
                    sb.add(b);
                    saa.add(a * a);
                    sbb.add(b * b);
                    sab.add(a * b);
                }
                const double ma = sa.value() / R, mb = sb.value() / R;
                const double va = saa.value() / R - ma * ma;
                const double vb = sbb.value() / R - mb * mb;
                const double cov = sab.value() / R - ma * mb;
                e.indep_max_corr = std::abs(cov / std::sqrt(va * vb));
                e.indep_bound = 4.0 / std::sqrt(R);
                ok = ok && e.indep_max_corr < e.indep_bound;
            }
            e.pass = ok;
        } else {
            // H in (1,2): the path is exactly the trapezoidal integral of the
            // base path drawn from the same streams
            const PathEnsemble hi = fbm::sample_fbm(grid, H, 1, replicas, seed);
            const fbm::HurstParam Hb(Hval - 1.0);
            const PathEnsemble lo = fbm::sample_fbm(grid, Hb, 1, replicas, seed);
            bool exact = true;
            const double half_dt = 0.5 * grid.dt();
            for (std::size_t r = 0; r < replicas && exact; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < grid.steps; ++k) {
                    acc += half_dt * (lo.at(r, 0, k, 0) + lo.at(r, 0, k + 1, 0));
                    if (acc != hi.at(r, 0, k + 1, 0)) {
                        exact = false;
                        break;
                    }
                }
            }
            e.integral_identity = exact;
            e.pass = exact;
        }
        report.entries.push_back(e);
        report.pass = report.pass && e.pass;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Persistence: config.json, per-metric rate CSVs, plot-ready CSVs and a
// summary. Full-precision formatting so round-trips are bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << body;
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace detail

inline void persist(const CampaignResult& result, const ExperimentConfig& cfg,
                    const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);

    detail::write_file(fs::path(dir) / "config.json", to_json(cfg).dump(2) + "\n");

    for (const auto& s : result.series) {
        std::ostringstream rate, loglog;
        rate << "scale,error,stderr\n";
        loglog << "log_scale,log_error\n";
        for (const auto& row : s.table.rows) {
            rate << detail::fmt17(row.scale) << ',' << detail::fmt17(row.error) << ','
                 << detail::fmt17(row.stderr_) << "\n";
            loglog << detail::fmt17(std::log(row.scale)) << ','
                   << detail::fmt17(std::log(row.error)) << "\n";
        }
        detail::write_file(fs::path(dir) / ("rate_" + s.name + ".csv"), rate.str());
        detail::write_file(fs::path(dir) / ("loglog_" + s.name + ".csv"), loglog.str());
    }

    nlohmann::ordered_json j;
    j["fingerprint"] = {{"tool", result.fingerprint.tool},
                        {"version", result.fingerprint.version},
                        {"seed", result.fingerprint.seed},
                        {"config_hash", result.fingerprint.config_hash}};
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : result.cells)
        j["cells"].push_back({{"N", c.N},
                              {"M", c.M},
                              {"delta", c.delta},
                              {"status", c.status},
                              {"wall_seconds", c.wall_seconds}});
    j["metrics"] = nlohmann::ordered_json::array();
    for (const auto& s : result.series) {
        nlohmann::ordered_json m;
        m["name"] = s.name;
        m["fit_status"] = s.fit_status;
        if (s.fit_status == "ok") {
            m["slope"] = s.table.slope;
            m["intercept"] = s.table.intercept;
            m["r2"] = s.table.r2;
            m["slope_stderr"] = s.table.slope_stderr;
        }
        j["metrics"].push_back(m);
    }
    j["warnings"] = result.warnings;
    detail::write_file(fs::path(dir) / "summary.json", j.dump(2) + "\n");
}

inline std::vector<metrics::RateRow> load_rate_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty rate table: " + path);
    std::vector<metrics::RateRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        metrics::RateRow row;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &row.scale, &row.error,
                        &row.stderr_) != 3)
            throw IoError("malformed rate row in " + path + ": " + line);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mfsim::experiments
