#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfsim/common.hpp"
#include "mfsim/fbm.hpp"
#include "mfsim/grid.hpp"
#include "mfsim/kernels.hpp"
#include "mfsim/parallel.hpp"
#include "mfsim/rng.hpp"

namespace mfsim::dynamics {

using kernels::KernelEval;
using kernels::KernelSpec;

constexpr double kBlowupThreshold = 1e12;

// ---------------------------------------------------------------------------
// Initial laws: point mass, isotropic Gaussian, uniform box.
// ---------------------------------------------------------------------------

struct InitialLaw {
    enum class Type { Point, Gauss, UniformBox };
    Type type = Type::Point;
    std::vector<double> mean = {0.0};   // point value / gaussian mean; scalar broadcasts
    std::vector<double> sigma = {1.0};  // gaussian std per coordinate (diagonal law)
    std::vector<double> lo = {0.0}, hi = {1.0};

    double coord(const std::vector<double>& v, std::size_t c) const {
        return v.size() == 1 ? v[0] : v.at(c);
    }
};

struct Initials {
    std::size_t replicas = 0, particles = 0, dim = 0;
    std::vector<double> data;  // [R][N][d]

    Initials() = default;
    Initials(std::size_t r, std::size_t n, std::size_t d)
        : replicas(r), particles(n), dim(d), data(r * n * d, 0.0) {}

    double* at(std::size_t r, std::size_t p) {
        return &data[(r * particles + p) * dim];
    }
    const double* at(std::size_t r, std::size_t p) const {
        return &data[(r * particles + p) * dim];
    }
};

// Streams are keyed by (seed, replica, particle, coordinate); particle i draws
// the same values in every system size, which is what makes smaller systems
// prefixes of larger ones.
inline void draw_initials_into(const InitialLaw& law, std::size_t replica,
                               std::size_t particles, std::size_t dim,
                               std::uint64_t seed, StreamPurpose purpose, double* out) {
    for (std::size_t p = 0; p < particles; ++p) {
        double* x = out + p * dim;
        for (std::size_t c = 0; c < dim; ++c) {
            switch (law.type) {
                case InitialLaw::Type::Point:
                    x[c] = law.coord(law.mean, c);
                    break;
                case InitialLaw::Type::Gauss: {
                    GaussianStream s({seed, static_cast<std::uint32_t>(replica),
                                      static_cast<std::uint32_t>(p),
                                      static_cast<std::uint32_t>(c), purpose});
                    x[c] = law.coord(law.mean, c) + law.coord(law.sigma, c) * s.normal_pair(0)[0];
                    break;
                }
                case InitialLaw::Type::UniformBox: {
                    GaussianStream s({seed, static_cast<std::uint32_t>(replica),
                                      static_cast<std::uint32_t>(p),
                                      static_cast<std::uint32_t>(c), purpose});
                    const double u = s.uniform_pair(0)[0];
                    x[c] = law.coord(law.lo, c) +
                           (law.coord(law.hi, c) - law.coord(law.lo, c)) * u;
                    break;
                }
            }
        }
    }
}

inline Initials draw_initials(const InitialLaw& law, std::size_t replicas,
                              std::size_t particles, std::size_t dim,
                              std::uint64_t seed,
                              StreamPurpose purpose = StreamPurpose::Init) {
    Initials out(replicas, particles, dim);
    for (std::size_t r = 0; r < replicas; ++r)
        draw_initials_into(law, r, particles, dim, seed, purpose, out.at(r, 0));
    return out;
}

// ---------------------------------------------------------------------------
// SimConfig: the data of one coupled simulation.
// ---------------------------------------------------------------------------

struct SimConfig {
    std::size_t N = 8;
    std::size_t d = 1;
    double H = 0.5;
    TimeGrid grid{1.0, 64};
    KernelSpec kernel;
    InitialLaw init;
    std::size_t replicas = 1;
    double moment = 2.0;
    std::size_t mkv_proxy = 0;  // M; 0 means max(4N, 1024)
    std::uint64_t seed = 0;
    bool allow_stiff = false;
    int threads = 1;

    std::size_t proxy_size() const {
        return mkv_proxy ? mkv_proxy : std::max<std::size_t>(4 * N, 1024);
    }

    void validate() const {
        if (N < 2) throw InputError("SimConfig: N must be >= 2");
        if (replicas < 1) throw InputError("SimConfig: replicas must be >= 1");
        if (moment < 1.0) throw InputError("SimConfig: moment must be >= 1");
        if (proxy_size() < 4 * N)
            throw InputError("SimConfig: mkv proxy size must be >= 4N");
        if (kernel.dim != static_cast<int>(d))
            throw InputError("SimConfig: kernel dimension mismatch");
        kernel.validate();
    }
};

// ---------------------------------------------------------------------------
// Pairwise drift field. Row i is 1/(N-1) * sum_{j != i} b(x_i, x_j), with no
// self-interaction. Rows accumulate in double-double so the result does not
// depend on summand order (permutation equivariance).
// ---------------------------------------------------------------------------

inline void drift_field(const KernelEval& ev, double t, const double* pos,
                        std::size_t N, std::size_t d, double* out,
                        std::vector<DdAcc>& acc) {
    if (N < 2) throw InputError("drift_field: N must be >= 2");
    if (!all_finite(pos, N * d)) throw InputError("drift_field: non-finite positions");
    acc.assign(N * d, DdAcc{});
    double v[8];
    if (ev.odd_pairwise()) {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = i + 1; j < N; ++j) {
                ev.pair(pos + i * d, pos + j * d, v);
                for (std::size_t c = 0; c < d; ++c) {
                    acc[i * d + c].add(v[c]);
                    acc[j * d + c].add(-v[c]);
                }
            }
    } else {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                if (j == i) continue;
                ev.pair(pos + i * d, pos + j * d, v);
                for (std::size_t c = 0; c < d; ++c) acc[i * d + c].add(v[c]);
            }
    }
    const double mod = ev.has_modulation() ? ev.time_factor(t) : 1.0;
    const double denom = static_cast<double>(N - 1);
    for (std::size_t i = 0; i < N * d; ++i) out[i] = mod * (acc[i].value() / denom);
}

inline std::vector<double> drift_field(const KernelSpec& spec, double t,
                                       const std::vector<double>& positions,
                                       std::size_t N, std::size_t d) {
    KernelEval ev(spec);
    std::vector<double> out(N * d);
    std::vector<DdAcc> acc;
    drift_field(ev, t, positions.data(), N, d, out.data(), acc);
    return out;
}

// Blocked evaluation (j swept in tiles, plain accumulation per tile, tiles
// combined in double-double). Must agree with drift_field to 1e-12 relative.
inline void drift_field_tiled(const KernelEval& ev, double t, const double* pos,
                              std::size_t N, std::size_t d, double* out,
                              std::size_t tile = 64) {
    if (N < 2) throw InputError("drift_field_tiled: N must be >= 2");
    if (!all_finite(pos, N * d))
        throw InputError("drift_field_tiled: non-finite positions");
    std::vector<DdAcc> acc(N * d);
    double v[8], part[8];
    for (std::size_t j0 = 0; j0 < N; j0 += tile) {
        const std::size_t j1 = std::min(N, j0 + tile);
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t c = 0; c < d; ++c) part[c] = 0.0;
            for (std::size_t j = j0; j < j1; ++j) {
                if (j == i) continue;
                ev.pair(pos + i * d, pos + j * d, v);
                for (std::size_t c = 0; c < d; ++c) part[c] += v[c];
            }
            for (std::size_t c = 0; c < d; ++c) acc[i * d + c].add(part[c]);
        }
    }
    const double mod = ev.has_modulation() ? ev.time_factor(t) : 1.0;
    const double denom = static_cast<double>(N - 1);
    for (std::size_t i = 0; i < N * d; ++i) out[i] = mod * (acc[i].value() / denom);
}

// ---------------------------------------------------------------------------
// Time stepping. Explicit left-point Euler on the remainder theta = X - W:
//   theta_{k+1} = theta_k + b(t_k, X_k) dt,   X_{k+1} = theta_{k+1} + W_{k+1},
// which applies the exactly-sampled noise increment without rounding drift
// (zero kernel gives X_k = X_0 + W_k at machine precision).
// ---------------------------------------------------------------------------

namespace detail {

inline double guard_ratio(const KernelEval& ev, double dt) {
    return dt * ev.lipschitz_estimate();
}

inline void enforce_step_guard(const KernelEval& ev, double dt, bool allow_stiff,
                               std::string* warning) {
    const double ratio = guard_ratio(ev, dt);
    if (ratio > 1.0) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "step-size guard: dt * Lip(b) = %.3g > 1 (dt = %.3g)", ratio, dt);
        if (!allow_stiff)
            throw ConfigError(std::string(buf) + "; set allow_stiff to proceed");
        if (warning) *warning = buf;
    }
}

inline void check_blowup(const double* x, std::size_t n, long replica, long step) {
    for (std::size_t i = 0; i < n; ++i)
        if (!(std::abs(x[i]) <= kBlowupThreshold)) {
            char buf[128];
            std::snprintf(buf, sizeof buf,
                          "divergence: |X| > 1e12 at replica %ld, step %ld", replica,
                          step);
            throw DivergenceError(replica, step, buf);
        }
}

// modulated kernels read m(t) at the first cell's midpoint (m(0) is undefined)
inline double modulation_time(const TimeGrid& grid, std::size_t k) {
    return k == 0 ? 0.5 * grid.dt() : grid.times[k];
}

// One replica of the pairwise system. noise is [N][(n+1)][d] contiguous per
// particle; observer(k, X) sees the stored state at every grid index.
template <class Observer>
void run_pairwise_replica(const KernelEval& ev, const TimeGrid& grid, std::size_t N,
                          std::size_t d, const double* noise, const double* initials,
                          long replica, Observer&& observer) {
    const std::size_t n = grid.steps;
    const std::size_t stride = (n + 1) * d;
    const double dt = grid.dt();
    std::vector<double> theta(initials, initials + N * d);
    std::vector<double> x(N * d), drift(N * d);
    std::vector<DdAcc> acc;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < d; ++c)
            x[i * d + c] = theta[i * d + c] + noise[i * stride + c];
    observer(static_cast<std::size_t>(0), x.data());
    for (std::size_t k = 0; k < n; ++k) {
        drift_field(ev, modulation_time(grid, k), x.data(), N, d, drift.data(), acc);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < d; ++c) {
                theta[i * d + c] += drift[i * d + c] * dt;
                x[i * d + c] = theta[i * d + c] + noise[i * stride + (k + 1) * d + c];
            }
        check_blowup(x.data(), N * d, replica, static_cast<long>(k + 1));
        observer(k + 1, x.data());
    }
}

// One replica of N independent copies driven by a frozen measure flow:
//   drift_i = 1/M * sum_m b(Xbar_i, Y_m(k)).
template <class Observer>
void run_copies_replica(const KernelEval& ev, const TimeGrid& grid,
                        const double* flow_support, std::size_t M, std::size_t N,
                        std::size_t d, const double* noise, const double* initials,
                        long replica, Observer&& observer) {
    const std::size_t n = grid.steps;
    const std::size_t stride = (n + 1) * d;
    const double dt = grid.dt();
    std::vector<double> theta(initials, initials + N * d);
    std::vector<double> x(N * d);
    double v[8];
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < d; ++c)
            x[i * d + c] = theta[i * d + c] + noise[i * stride + c];
    observer(static_cast<std::size_t>(0), x.data());
    const double denom = static_cast<double>(M);
    for (std::size_t k = 0; k < n; ++k) {
        const double mod =
            ev.has_modulation() ? ev.time_factor(modulation_time(grid, k)) : 1.0;
        const double* y = flow_support + k * M * d;
        for (std::size_t i = 0; i < N; ++i) {
            // flow order is fixed, so plain blocks + dd across blocks suffice
            DdAcc acc[8];
            double part[8];
            for (std::size_t m0 = 0; m0 < M; m0 += 64) {
                const std::size_t m1 = std::min(M, m0 + 64);
                for (std::size_t c = 0; c < d; ++c) part[c] = 0.0;
                for (std::size_t m = m0; m < m1; ++m) {
                    ev.pair(&x[i * d], y + m * d, v);
                    for (std::size_t c = 0; c < d; ++c) part[c] += v[c];
                }
                for (std::size_t c = 0; c < d; ++c) acc[c].add(part[c]);
            }
            for (std::size_t c = 0; c < d; ++c) {
                theta[i * d + c] += mod * (acc[c].value() / denom) * dt;
                x[i * d + c] = theta[i * d + c] + noise[i * stride + (k + 1) * d + c];
            }
        }
        check_blowup(x.data(), N * d, replica, static_cast<long>(k + 1));
        observer(k + 1, x.data());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public simulation operations.
// ---------------------------------------------------------------------------

inline PathEnsemble simulate_ips(const SimConfig& config, const PathEnsemble& noise,
                                 const Initials& initials,
                                 std::string* warning = nullptr) {
    config.validate();
    if (noise.replicas() != config.replicas || noise.particles() != config.N ||
        noise.dim() != config.d || !(noise.grid() == config.grid))
        throw InputError("simulate_ips: noise shape does not match config");
    if (initials.replicas != config.replicas || initials.particles != config.N ||
        initials.dim != config.d)
        throw InputError("simulate_ips: initials shape does not match config");
    KernelEval ev(config.kernel);
    detail::enforce_step_guard(ev, config.grid.dt(), config.allow_stiff, warning);
    PathEnsemble out(config.replicas, config.N, config.grid, config.d);
    parallel_for(config.replicas, config.threads, [&](std::size_t r) {
        detail::run_pairwise_replica(
            ev, config.grid, config.N, config.d, noise.path(r, 0), initials.at(r, 0),
            static_cast<long>(r), [&](std::size_t k, const double* x) {
                for (std::size_t i = 0; i < config.N; ++i)
                    for (std::size_t c = 0; c < config.d; ++c)
                        out.at(r, i, k, c) = x[i * config.d + c];
            });
    });
    return out;
}

// Discrete stand-in for the McKean-Vlasov law: the empirical measure of one
// auxiliary M-particle system at every grid time, uniform weights 1/M.
struct MeasureFlow {
    TimeGrid grid;
    std::size_t M = 0;
    std::size_t dim = 0;
    double delta_used = 0.0;
    std::vector<double> support;  // [n+1][M][d]

    double at(std::size_t k, std::size_t m, std::size_t c) const {
        return support[(k * M + m) * dim + c];
    }
    const double* slice(std::size_t k) const { return &support[k * M * dim]; }
};

inline MeasureFlow build_mkv_reference(const SimConfig& config, std::uint64_t seed_aux,
                                       std::string* warning = nullptr) {
    config.validate();
    const std::size_t M = config.proxy_size();
    KernelEval ev(config.kernel);
    detail::enforce_step_guard(ev, config.grid.dt(), config.allow_stiff, warning);

    const fbm::HurstParam H(config.H);
    fbm::FbmSampler sampler(config.grid, H);
    const std::size_t stride = config.grid.size() * config.d;
    std::vector<double> noise(M * stride);
    std::vector<double> z, base;
    for (std::size_t p = 0; p < M; ++p)
        for (std::size_t c = 0; c < config.d; ++c) {
            std::vector<double> path(config.grid.size());
            sampler.sample_path({seed_aux, 0, static_cast<std::uint32_t>(p),
                                 static_cast<std::uint32_t>(c), StreamPurpose::AuxNoise},
                                z, base, path.data());
            for (std::size_t k = 0; k < config.grid.size(); ++k)
                noise[p * stride + k * config.d + c] = path[k];
        }
    Initials init0 = draw_initials(config.init, 1, M, config.d, seed_aux,
                                   StreamPurpose::AuxInit);

    MeasureFlow flow;
    flow.grid = config.grid;
    flow.M = M;
    flow.dim = config.d;
    flow.delta_used = config.kernel.delta;
    flow.support.assign(config.grid.size() * M * config.d, 0.0);
    detail::run_pairwise_replica(
        ev, config.grid, M, config.d, noise.data(), init0.at(0, 0), 0,
        [&](std::size_t k, const double* x) {
            std::copy(x, x + M * config.d, &flow.support[k * M * config.d]);
        });
    return flow;
}

inline PathEnsemble simulate_coupled_copies(const SimConfig& config,
                                            const MeasureFlow& flow,
                                            const PathEnsemble& noise,
                                            const Initials& initials,
                                            std::string* warning = nullptr) {
    config.validate();
    if (!(flow.grid == config.grid) || flow.dim != config.d)
        throw ConfigError("simulate_coupled_copies: flow grid/dimension mismatch");
    if (noise.replicas() != config.replicas || noise.particles() != config.N ||
        noise.dim() != config.d || !(noise.grid() == config.grid))
        throw InputError("simulate_coupled_copies: noise shape mismatch");
    KernelEval ev(config.kernel);
    detail::enforce_step_guard(ev, config.grid.dt(), config.allow_stiff, warning);
    PathEnsemble out(config.replicas, config.N, config.grid, config.d);
    parallel_for(config.replicas, config.threads, [&](std::size_t r) {
        detail::run_copies_replica(
            ev, config.grid, flow.support.data(), flow.M, config.N, config.d,
            noise.path(r, 0), initials.at(r, 0), static_cast<long>(r),
            [&](std::size_t k, const double* x) {
                for (std::size_t i = 0; i < config.N; ++i)
                    for (std::size_t c = 0; c < config.d; ++c)
                        out.at(r, i, k, c) = x[i * config.d + c];
            });
    });
    return out;
}

// Sznitman coupling: the particle system and the i.i.d. reference copies on
// bit-identical initial data and noise paths.
struct CouplingRun {
    PathEnsemble ips;
    PathEnsemble copies;
};

// Noise ensemble for a coupled run. Streams are keyed by (seed, replica,
// particle, coordinate), independent of N.
inline PathEnsemble sample_noise(const SimConfig& config) {
    const fbm::HurstParam H(config.H);
    fbm::FbmSampler sampler(config.grid, H);
    PathEnsemble noise(config.replicas, config.N, config.grid, config.d);
    std::vector<double> z, base, path(config.grid.size());
    for (std::size_t r = 0; r < config.replicas; ++r)
        for (std::size_t p = 0; p < config.N; ++p)
            for (std::size_t c = 0; c < config.d; ++c) {
                sampler.sample_path({config.seed, static_cast<std::uint32_t>(r),
                                     static_cast<std::uint32_t>(p),
                                     static_cast<std::uint32_t>(c),
                                     StreamPurpose::Noise},
                                    z, base, path.data());
                for (std::size_t k = 0; k < config.grid.size(); ++k)
                    noise.at(r, p, k, c) = path[k];
            }
    return noise;
}

inline CouplingRun make_coupling_run(const SimConfig& config, std::uint64_t seed_aux,
                                     std::string* warning = nullptr) {
    const PathEnsemble noise = sample_noise(config);
    const Initials initials = draw_initials(config.init, config.replicas, config.N,
                                            config.d, config.seed);
    const MeasureFlow flow = build_mkv_reference(config, seed_aux, warning);
    CouplingRun run{simulate_ips(config, noise, initials, warning),
                    simulate_coupled_copies(config, flow, noise, initials, warning)};
    return run;
}

}  // namespace mfsim::dynamics
