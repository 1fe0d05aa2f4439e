#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mfsim/common.hpp"
#include "mfsim/grid.hpp"
#include "mfsim/rng.hpp"

namespace mfsim::fbm {

// Hurst parameter H > 0, excluding integers (where the process is trivial or
// ill-defined).
struct HurstParam {
    double value;

    explicit HurstParam(double h) : value(h) {
        if (!(h > 0.0)) throw DomainError("Hurst parameter must be positive");
        if (std::abs(h - std::round(h)) <= 1e-9)
            throw DomainError("Hurst parameter must not be an integer");
    }
};

// Covariance of one coordinate of fBm, H in (0,1):
//   E[W_s W_t] = (|t|^2H + |s|^2H - |t-s|^2H) / 2
inline double fbm_cov(double s, double t, const HurstParam& H) {
    if (!(H.value < 1.0))
        throw DomainError("fbm_cov: covariance formula only valid for H in (0,1)");
    if (s < 0.0 || t < 0.0) throw InputError("fbm_cov: times must be nonnegative");
    const double twoH = 2.0 * H.value;
    return 0.5 * (std::pow(t, twoH) + std::pow(s, twoH) - std::pow(std::abs(t - s), twoH));
}

namespace detail {

// Cholesky with the jitter policy: start at 1e-12 x diagonal, escalate x10 up
// to 1e-10, then fail.
inline Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov,
                                            const char* what) {
    const double diag_scale = cov.diagonal().mean();
    const double jitters[] = {0.0, 1e-12, 1e-11, 1e-10};
    for (double j : jitters) {
        Eigen::MatrixXd m = cov;
        if (j > 0.0) m.diagonal().array() += j * diag_scale;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw NumericalError(std::string(what) +
                         ": covariance factorization failed after jitter 1e-10");
}

// Toeplitz increment covariance of fBm on a uniform grid:
//   gamma(k) = dt^2H * (|k+1|^2H + |k-1|^2H - 2|k|^2H) / 2
inline Eigen::MatrixXd increment_covariance(const TimeGrid& grid, double H) {
    const auto n = static_cast<Eigen::Index>(grid.steps);
    const double twoH = 2.0 * H;
    const double scale = std::pow(grid.dt(), twoH);
    std::vector<double> gamma(grid.steps);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double kk = static_cast<double>(k);
        gamma[k] = 0.5 * scale *
                   (std::pow(kk + 1.0, twoH) + std::pow(std::abs(kk - 1.0), twoH) -
                    2.0 * std::pow(kk, twoH));
    }
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            cov(i, j) = gamma[static_cast<std::size_t>(std::abs(i - j))];
    return cov;
}

}  // namespace detail

// Exact sampler on a fixed grid. The increment-covariance factor is computed
// once at construction and shared read-only across replicas, so sampling is
// pure given (inputs, seed) and safe to run concurrently.
// TODO: a circulant-embedding fast path (with the nonnegativity check) would
// help for grids much beyond n = 4096; Cholesky is fine at current sizes.
class FbmSampler {
public:
    FbmSampler(const TimeGrid& grid, const HurstParam& H) : grid_(grid), hurst_(H.value) {
        if (hurst_ >= 2.0)
            throw UnsupportedError("fBm sampling supports H in (0,1) u (1,2) only");
        const double base = hurst_ < 1.0 ? hurst_ : hurst_ - 1.0;
        // transposed so that row i of L is contiguous
        cholT_ = detail::cholesky_with_jitter(detail::increment_covariance(grid_, base),
                                              "FbmSampler")
                     .transpose();
    }

    const TimeGrid& grid() const { return grid_; }
    double hurst() const { return hurst_; }

    // One path of the BASE process (parameter H if H<1, else H-1) for the
    // given stream; out has grid.size() entries and out[0] = 0 exactly.
    void sample_base_path(const StreamKey& key, std::vector<double>& scratch_z,
                          double* out) const {
        const std::size_t n = grid_.steps;
        scratch_z.resize(n);
        GaussianStream stream(key);
        stream.fill_normals(scratch_z);
        out[0] = 0.0;
        // increments = L z, accumulated into path values
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = cholT_.data() + i * n;  // L(i, .) contiguous
            double inc = 0.0;
            for (std::size_t j = 0; j <= i; ++j) inc += row[j] * scratch_z[j];
            out[i + 1] = out[i] + inc;
        }
    }

    // One path at parameter H. For H in (1,2) this is the trapezoidal
    // cumulative integral of the base (H-1) path on the same grid.
    void sample_path(const StreamKey& key, std::vector<double>& scratch_z,
                     std::vector<double>& scratch_base, double* out) const {
        if (hurst_ < 1.0) {
            sample_base_path(key, scratch_z, out);
            return;
        }
        scratch_base.resize(grid_.size());
        sample_base_path(key, scratch_z, scratch_base.data());
        const double half_dt = 0.5 * grid_.dt();
        out[0] = 0.0;
        for (std::size_t k = 0; k < grid_.steps; ++k)
            out[k + 1] = out[k] + half_dt * (scratch_base[k] + scratch_base[k + 1]);
    }

private:
    TimeGrid grid_;
    double hurst_;
    Eigen::MatrixXd cholT_;  // transpose of the lower increment-covariance factor
};

// Ensemble sampler: count i.i.d. d-dimensional paths (independent
// coordinates), exact in law on the grid. Streams are keyed by
// (seed, replica, particle=0, coordinate), so the same seed reproduces the
// same normals for any H: the H in (1,2) path is the trapezoidal integral
// of the H-1 path drawn with the same seed.
inline PathEnsemble sample_fbm(const TimeGrid& grid, const HurstParam& H, std::size_t d,
                               std::size_t count, std::uint64_t seed,
                               StreamPurpose purpose = StreamPurpose::Noise) {
    if (count < 1) throw InputError("sample_fbm: count must be >= 1");
    FbmSampler sampler(grid, H);
    PathEnsemble ens(count, 1, grid, d);
    std::vector<double> z, base, path(grid.size());
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            sampler.sample_path({seed, static_cast<std::uint32_t>(r), 0,
                                 static_cast<std::uint32_t>(c), purpose},
                                z, base, path.data());
            for (std::size_t k = 0; k < grid.size(); ++k) ens.at(r, 0, k, c) = path[k];
        }
    return ens;
}

// Gaussian conditional law of W_t given observations of one coordinate at
// earlier times, by regression on the grid covariance. Observations at time
// zero carry no information (W_0 = 0 a.s.) and are dropped.
struct Observation {
    double time;
    double value;
};

inline std::pair<double, double> conditional_law(const std::vector<Observation>& observed,
                                                 const HurstParam& H, double t) {
    if (!(H.value < 1.0))
        throw DomainError("conditional_law: requires H in (0,1)");
    if (observed.empty()) throw InputError("conditional_law: observations must be nonempty");
    if (!(t > 0.0)) throw InputError("conditional_law: query time must be positive");

    // conditioning on the query point itself pins the value
    for (const auto& o : observed)
        if (o.time == t) return {o.value, 0.0};

    std::vector<Observation> obs;
    obs.reserve(observed.size());
    for (const auto& o : observed) {
        if (o.time < 0.0) throw InputError("conditional_law: negative observation time");
        if (o.time > 0.0) obs.push_back(o);
    }
    const double var_prior = fbm_cov(t, t, H);
    if (obs.empty()) return {0.0, var_prior};

    const auto k = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd C(k, k);
    Eigen::VectorXd c(k), w(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& oi = obs[static_cast<std::size_t>(i)];
        c(i) = fbm_cov(oi.time, t, H);
        w(i) = oi.value;
        for (Eigen::Index j = 0; j < k; ++j)
            C(i, j) = fbm_cov(oi.time, obs[static_cast<std::size_t>(j)].time, H);
    }
    const Eigen::MatrixXd L = detail::cholesky_with_jitter(C, "conditional_law");
    const Eigen::VectorXd a =
        L.transpose().triangularView<Eigen::Upper>().solve(
            L.triangularView<Eigen::Lower>().solve(c));
    const double mean = a.dot(w);
    const double var = var_prior - a.dot(c);
    return {mean, var > 0.0 ? var : 0.0};
}

}  // namespace mfsim::fbm
