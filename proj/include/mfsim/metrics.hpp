#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mfsim/common.hpp"
#include "mfsim/dynamics.hpp"
#include "mfsim/grid.hpp"
#include "mfsim/rng.hpp"

namespace mfsim::metrics {

// ---------------------------------------------------------------------------
// Test observables phi in W^{1,inf}.
// ---------------------------------------------------------------------------

struct TestFunction {
    std::string name;
    std::function<double(const double*, std::size_t)> eval;
    double lipschitz = 1.0;
    double sup = 1.0;

    static TestFunction builtin(const std::string& name) {
        TestFunction f;
        f.name = name;
        if (name == "tanh") {
            f.eval = [](const double* x, std::size_t d) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += std::tanh(x[c]);
                return s / static_cast<double>(d);
            };
            f.lipschitz = 1.0;
            f.sup = 1.0;
        } else if (name == "gauss") {
            f.eval = [](const double* x, std::size_t d) {
                double n2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) n2 += x[c] * x[c];
                return std::exp(-0.5 * n2);
            };
            f.lipschitz = std::exp(-0.5);
            f.sup = 1.0;
        } else if (name == "sin") {
            f.eval = [](const double* x, std::size_t) { return std::sin(x[0]); };
            f.lipschitz = 1.0;
            f.sup = 1.0;
        } else {
            throw InputError("unknown test function: " + name);
        }
        return f;
    }

    // spot-check |phi(x)-phi(y)| <= Lip |x-y| on random Gaussian pairs
    bool validate_lipschitz(std::size_t dim, std::size_t pairs, std::uint64_t seed) const {
        std::vector<double> x(dim), y(dim);
        for (std::size_t p = 0; p < pairs; ++p) {
            for (std::size_t c = 0; c < dim; ++c) {
                GaussianStream s({seed, static_cast<std::uint32_t>(p),
                                  static_cast<std::uint32_t>(c), 0,
                                  StreamPurpose::Generic});
                const auto z = s.normal_pair(0);
                x[c] = 2.0 * z[0];
                y[c] = 2.0 * z[1];
            }
            double dist2 = 0.0;
            for (std::size_t c = 0; c < dim; ++c)
                dist2 += (x[c] - y[c]) * (x[c] - y[c]);
            const double lhs = std::abs(eval(x.data(), dim) - eval(y.data(), dim));
            if (lhs > lipschitz * std::sqrt(dist2) * (1.0 + 1e-12)) return false;
        }
        return true;
    }
};

// ---------------------------------------------------------------------------
// Monte Carlo estimates of E[...]^(1/m) with delta-method standard errors.
// replica_powers holds one per-replica average of the m-th power.
// ---------------------------------------------------------------------------

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

inline Estimate power_mean_estimate(const std::vector<double>& replica_powers, double m) {
    if (replica_powers.empty()) throw InputError("power_mean_estimate: empty sample");
    const auto R = static_cast<double>(replica_powers.size());
    DdAcc sum;
    for (double a : replica_powers) sum.add(a);
    const double mean = sum.value() / R;
    if (mean <= 0.0) return {0.0, 0.0};
    const double value = std::pow(mean, 1.0 / m);
    if (replica_powers.size() < 2) return {value, 0.0};
    DdAcc ss;
    for (double a : replica_powers) ss.add((a - mean) * (a - mean));
    const double var_mean = ss.value() / (R - 1.0) / R;
    const double se = (1.0 / m) * std::pow(mean, 1.0 / m - 1.0) * std::sqrt(var_mean);
    return {value, se};
}

// ---------------------------------------------------------------------------
// Coupling and observable errors.
// ---------------------------------------------------------------------------

// E[ sup_{t in grid} |X^{1;N}_t - Xbar^1_t|^m ]^(1/m); the m-th power is
// averaged over replicas and, by exchangeability, over particle indices.
inline std::vector<double> coupling_replica_powers(const dynamics::CouplingRun& run,
                                                   double m) {
    const auto& a = run.ips;
    const auto& b = run.copies;
    if (a.replicas() == 0) throw InputError("coupling_error: empty run");
    if (a.replicas() != b.replicas() || a.particles() != b.particles() ||
        a.dim() != b.dim() || !(a.grid() == b.grid()))
        throw InputError("coupling_error: mismatched ensembles");
    std::vector<double> powers(a.replicas());
    for (std::size_t r = 0; r < a.replicas(); ++r) {
        DdAcc acc;
        for (std::size_t p = 0; p < a.particles(); ++p) {
            double sup = 0.0;
            for (std::size_t k = 0; k < a.grid().size(); ++k) {
                double n2 = 0.0;
                for (std::size_t c = 0; c < a.dim(); ++c) {
                    const double dxc = a.at(r, p, k, c) - b.at(r, p, k, c);
                    n2 += dxc * dxc;
                }
                sup = std::max(sup, n2);
            }
            acc.add(std::pow(std::sqrt(sup), m));
        }
        powers[r] = acc.value() / static_cast<double>(a.particles());
    }
    return powers;
}

inline Estimate coupling_error(const dynamics::CouplingRun& run, double m) {
    if (m < 1.0) throw InputError("coupling_error: moment must be >= 1");
    return power_mean_estimate(coupling_replica_powers(run, m), m);
}

// E[ sup_t |<phi, mu^N_t> - <phi, mubar_t>|^m ]^(1/m), the reference pairing
// read from the frozen flow.
inline Estimate observable_error(const PathEnsemble& ips, const dynamics::MeasureFlow& flow,
                                 const TestFunction& phi, double m) {
    if (ips.replicas() == 0) throw InputError("observable_error: empty ensemble");
    if (!(ips.grid() == flow.grid) || ips.dim() != flow.dim)
        throw InputError("observable_error: flow mismatch");
    const std::size_t n1 = ips.grid().size();
    std::vector<double> flow_phi(n1);
    for (std::size_t k = 0; k < n1; ++k) {
        DdAcc acc;
        for (std::size_t j = 0; j < flow.M; ++j)
            acc.add(phi.eval(&flow.support[(k * flow.M + j) * flow.dim], flow.dim));
        flow_phi[k] = acc.value() / static_cast<double>(flow.M);
    }
    std::vector<double> powers(ips.replicas());
    std::vector<double> xbuf(ips.dim());
    for (std::size_t r = 0; r < ips.replicas(); ++r) {
        double sup = 0.0;
        for (std::size_t k = 0; k < n1; ++k) {
            DdAcc acc;
            for (std::size_t p = 0; p < ips.particles(); ++p) {
                for (std::size_t c = 0; c < ips.dim(); ++c)
                    xbuf[c] = ips.at(r, p, k, c);
                acc.add(phi.eval(xbuf.data(), ips.dim()));
            }
            const double pair = acc.value() / static_cast<double>(ips.particles());
            sup = std::max(sup, std::abs(pair - flow_phi[k]));
        }
        powers[r] = std::pow(sup, m);
    }
    return power_mean_estimate(powers, m);
}

// ---------------------------------------------------------------------------
// Negative-Sobolev distance between empirical clouds, by importance sampling
// in frequency space: weight (1+|xi|)^(-2 lambda), 2 lambda > d.
// ---------------------------------------------------------------------------

class FrequencySampler {
public:
    FrequencySampler(std::size_t dim, double lambda) : dim_(dim), lambda_(lambda) {
        if (!(2.0 * lambda > static_cast<double>(dim)))
            throw DomainError("sobolev weight not integrable: need 2 lambda > d");
        // total weight mass: S_{d-1} * Beta(d, 2 lambda - d)
        const double d = static_cast<double>(dim_);
        const double surface = 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
        weight_mass_ = surface * std::exp(std::lgamma(d) + std::lgamma(2.0 * lambda - d) -
                                          std::lgamma(2.0 * lambda));
        build_cdf();
    }

    double weight_mass() const { return weight_mass_; }

    // radius via inverse-CDF table; direction isotropic
    void draw(std::uint64_t seed, std::size_t count, std::vector<double>& out) const {
        out.assign(count * dim_, 0.0);
        for (std::size_t i = 0; i < count; ++i) {
            GaussianStream s({seed, static_cast<std::uint32_t>(i), 0, 0,
                              StreamPurpose::Freq});
            const auto u = s.uniform_pair(0);
            const double r = invert_cdf(u[0]);
            if (dim_ == 1) {
                out[i] = u[1] < 0.5 ? -r : r;
            } else {
                double dir[8];
                double n2 = 0.0;
                for (std::size_t c = 0; c < dim_; ++c) {
                    GaussianStream sc({seed, static_cast<std::uint32_t>(i), 1,
                                       static_cast<std::uint32_t>(c),
                                       StreamPurpose::Freq});
                    dir[c] = sc.normal_pair(0)[0];
                    n2 += dir[c] * dir[c];
                }
                const double inv = 1.0 / std::sqrt(n2);
                for (std::size_t c = 0; c < dim_; ++c) out[i * dim_ + c] = r * dir[c] * inv;
            }
        }
    }

private:
    void build_cdf() {
        // log-spaced radial grid; tail mass beyond r_hi ~ r^(d-2lambda) is
        // below 1e-10 for r_hi = 1e6 at any admissible lambda
        const std::size_t n = 4096;
        const double r_lo = 1e-8, r_hi = 1e6;
        log_r_.resize(n);
        cdf_.resize(n);
        const double step = (std::log(r_hi) - std::log(r_lo)) / static_cast<double>(n - 1);
        double acc = 0.0;
        double prev_r = 0.0, prev_f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            log_r_[i] = std::log(r_lo) + step * static_cast<double>(i);
            const double r = std::exp(log_r_[i]);
            const double f = std::pow(r, static_cast<double>(dim_) - 1.0) *
                             std::pow(1.0 + r, -2.0 * lambda_);
            acc += 0.5 * (f + prev_f) * (r - prev_r);
            cdf_[i] = acc;
            prev_r = r;
            prev_f = f;
        }
        for (auto& v : cdf_) v /= acc;
    }

    double invert_cdf(double u) const {
        const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.begin()) return std::exp(log_r_.front());
        if (it == cdf_.end()) return std::exp(log_r_.back());
        const auto i = static_cast<std::size_t>(it - cdf_.begin());
        const double c0 = cdf_[i - 1], c1 = cdf_[i];
        const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
        return std::exp(log_r_[i - 1] + w * (log_r_[i] - log_r_[i - 1]));
    }

    std::size_t dim_;
    double lambda_;
    double weight_mass_ = 0.0;
    std::vector<double> log_r_, cdf_;
};

// |nu_hat(xi)|^2 for nu = empirical(A) - empirical(B) at one frequency
inline double cf_diff_sq(const double* xi, std::size_t d, const double* a, std::size_t na,
                         const double* b, std::size_t nb) {
    double re_a = 0.0, im_a = 0.0;
    for (std::size_t j = 0; j < na; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += xi[c] * a[j * d + c];
        re_a += std::cos(dot);
        im_a += std::sin(dot);
    }
    double re_b = 0.0, im_b = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += xi[c] * b[j * d + c];
        re_b += std::cos(dot);
        im_b += std::sin(dot);
    }
    const double re = re_a / static_cast<double>(na) - re_b / static_cast<double>(nb);
    const double im = im_a / static_cast<double>(na) - im_b / static_cast<double>(nb);
    return re * re + im * im;
}

inline double sobolev_distance(const std::vector<double>& cloud_a, std::size_t na,
                               const std::vector<double>& cloud_b, std::size_t nb,
                               std::size_t d, double lambda,
                               std::size_t freq_samples = 4096,
                               std::uint64_t seed = 0) {
    if (na == 0 || nb == 0) throw InputError("sobolev_distance: empty cloud");
    if (cloud_a.size() != na * d || cloud_b.size() != nb * d)
        throw InputError("sobolev_distance: cloud shape mismatch");
    FrequencySampler sampler(d, lambda);
    std::vector<double> xi;
    sampler.draw(seed, freq_samples, xi);
    DdAcc acc;
    for (std::size_t f = 0; f < freq_samples; ++f)
        acc.add(cf_diff_sq(&xi[f * d], d, cloud_a.data(), na, cloud_b.data(), nb));
    const double mean = acc.value() / static_cast<double>(freq_samples);
    return std::sqrt(std::max(0.0, sampler.weight_mass() * mean));
}

// ---------------------------------------------------------------------------
// Path norms.
// ---------------------------------------------------------------------------

// Exact supremum over grid partitions of (sum |increment|^kappa)^(1/kappa),
// by O(n^2) dynamic programming.
inline double kappa_variation(const std::vector<double>& path, std::size_t d,
                              double kappa) {
    if (kappa < 1.0) throw DomainError("kappa_variation: requires kappa >= 1");
    if (d == 0 || path.size() % d != 0) throw InputError("kappa_variation: bad shape");
    const std::size_t n1 = path.size() / d;
    if (n1 < 2) throw InputError("kappa_variation: need at least two grid points");
    std::vector<double> best(n1, 0.0);
    for (std::size_t j = 1; j < n1; ++j) {
        double v = -1.0;
        for (std::size_t i = 0; i < j; ++i) {
            double n2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = path[j * d + c] - path[i * d + c];
                n2 += diff * diff;
            }
            v = std::max(v, best[i] + std::pow(n2, 0.5 * kappa));
        }
        best[j] = v;
    }
    return std::pow(best[n1 - 1], 1.0 / kappa);
}

// Gagliardo seminorm ( double integral of |f_t - f_s|^q / |t-s|^(1+beta q) )^(1/q),
// trapezoidal on the grid, diagonal band |t-s| < dt excluded.
inline double gagliardo_seminorm(const std::vector<double>& path, std::size_t d,
                                 const TimeGrid& grid, double beta, double q) {
    if (!(beta > 0.0 && beta < 1.0))
        throw DomainError("gagliardo_seminorm: beta must lie in (0,1)");
    if (q < 1.0) throw DomainError("gagliardo_seminorm: q must be >= 1");
    const std::size_t n1 = grid.size();
    if (d == 0 || path.size() != n1 * d)
        throw InputError("gagliardo_seminorm: bad shape");
    const double dt = grid.dt();
    DdAcc acc;
    for (std::size_t i = 0; i < n1; ++i) {
        const double wi = (i == 0 || i == n1 - 1) ? 0.5 : 1.0;
        for (std::size_t j = 0; j < n1; ++j) {
            if (i == j) continue;  // |t-s| >= dt off the diagonal
            const double wj = (j == 0 || j == n1 - 1) ? 0.5 : 1.0;
            double n2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = path[i * d + c] - path[j * d + c];
                n2 += diff * diff;
            }
            const double gap = std::abs(grid.times[i] - grid.times[j]);
            acc.add(wi * wj * std::pow(n2, 0.5 * q) / std::pow(gap, 1.0 + beta * q));
        }
    }
    return std::pow(acc.value() * dt * dt, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Rate fitting: OLS of log error on log scale.
// ---------------------------------------------------------------------------

struct RateRow {
    double scale = 0.0;
    double error = 0.0;
    double stderr_ = 0.0;
};

struct RateTable {
    std::vector<RateRow> rows;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double slope_stderr = std::numeric_limits<double>::quiet_NaN();
};

inline RateTable fit_rate(std::vector<RateRow> rows) {
    if (rows.size() < 3) throw InputError("fit_rate: need at least 3 rows");
    for (const auto& r : rows) {
        if (!(r.error > 0.0)) throw InputError("fit_rate: nonpositive error");
        if (!(r.scale > 0.0)) throw InputError("fit_rate: nonpositive scale");
        if (r.stderr_ < 0.0) throw InputError("fit_rate: negative stderr");
    }
    const auto n = static_cast<double>(rows.size());
    double sx = 0.0, sy = 0.0;
    std::vector<double> xs(rows.size()), ys(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        xs[i] = std::log(rows[i].scale);
        ys[i] = std::log(rows[i].error);
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw InputError("fit_rate: degenerate scales");
    RateTable out;
    out.rows = std::move(rows);
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double fit = out.intercept + out.slope * xs[i];
        ss_res += (ys[i] - fit) * (ys[i] - fit);
        ss_tot += (ys[i] - my) * (ys[i] - my);
    }
    out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    out.slope_stderr =
        xs.size() > 2 ? std::sqrt(ss_res / (n - 2.0) / sxx) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Controls: w(s,s) = 0 and w(s,u) + w(u,t) <= w(s,t).
// ---------------------------------------------------------------------------

struct ControlSample {
    std::vector<double> times;
    std::vector<double> w;  // (n+1) x (n+1), entries for i <= j used

    double at(std::size_t i, std::size_t j) const { return w[i * times.size() + j]; }

    static ControlSample from_function(const TimeGrid& grid,
                                       const std::function<double(double, double)>& fn) {
        ControlSample cs;
        cs.times = grid.times;
        const std::size_t n1 = cs.times.size();
        cs.w.assign(n1 * n1, 0.0);
        for (std::size_t i = 0; i < n1; ++i)
            for (std::size_t j = i; j < n1; ++j)
                cs.w[i * n1 + j] = fn(cs.times[i], cs.times[j]);
        return cs;
    }
};

struct ControlReport {
    bool diagonal_ok = true;
    bool superadditive_ok = true;
    std::size_t violations = 0;
    double worst_excess = 0.0;  // max of (w(s,u)+w(u,t))/w(s,t) - 1
    std::vector<std::string> details;
    bool power_15_ok = true;    // closure: w^1.5
    bool power_2_ok = true;     // closure: w^2
    bool product_ok = true;     // closure: w * (t - s)

    bool pass() const { return diagonal_ok && superadditive_ok; }

    std::string to_text() const {
        std::ostringstream os;
        os << "control check: " << (pass() ? "pass" : "FAIL") << "\n";
        os << "  diagonal zero    : " << (diagonal_ok ? "ok" : "violated") << "\n";
        os << "  superadditivity  : " << (superadditive_ok ? "ok" : "violated") << "\n";
        os << "  triple violations: " << violations << "\n";
        if (superadditive_ok) {
            os << "  closure w^1.5    : " << (power_15_ok ? "ok" : "violated") << "\n";
            os << "  closure w^2      : " << (power_2_ok ? "ok" : "violated") << "\n";
            os << "  closure w*(t-s)  : " << (product_ok ? "ok" : "violated") << "\n";
        }
        for (const auto& dline : details) os << "  " << dline << "\n";
        return os.str();
    }
};

namespace detail {

inline bool superadditive_on_grid(const ControlSample& cs, double slack,
                                  std::size_t* violations, double* worst,
                                  std::vector<std::string>* details) {
    const std::size_t n1 = cs.times.size();
    bool ok = true;
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t k = i; k < n1; ++k)
            for (std::size_t j = i; j <= k; ++j) {
                const double lhs = cs.at(i, j) + cs.at(j, k);
                const double rhs = cs.at(i, k) * (1.0 + slack);
                if (lhs > rhs) {
                    ok = false;
                    if (violations) ++*violations;
                    if (worst && cs.at(i, k) > 0.0)
                        *worst = std::max(*worst, lhs / cs.at(i, k) - 1.0);
                    if (details && details->size() < 8) {
                        char buf[128];
                        std::snprintf(buf, sizeof buf,
                                      "superadditivity fails at (s,u,t) = (%g, %g, %g)",
                                      cs.times[i], cs.times[j], cs.times[k]);
                        details->push_back(buf);
                    }
                }
            }
    return ok;
}

}  // namespace detail

inline ControlReport control_check(const ControlSample& cs) {
    ControlReport rep;
    const std::size_t n1 = cs.times.size();
    if (n1 == 0) throw InputError("control_check: empty sample");
    double scale = 0.0;
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = i; j < n1; ++j) scale = std::max(scale, std::abs(cs.at(i, j)));
    for (std::size_t i = 0; i < n1; ++i)
        if (std::abs(cs.at(i, i)) > 1e-12 * std::max(scale, 1.0)) {
            rep.diagonal_ok = false;
            if (rep.details.size() < 8) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "diagonal nonzero at s = %g: w = %g",
                              cs.times[i], cs.at(i, i));
                rep.details.push_back(buf);
            }
        }
    rep.superadditive_ok = detail::superadditive_on_grid(
        cs, 1e-9, &rep.violations, &rep.worst_excess, &rep.details);

    if (rep.superadditive_ok) {
        // closure under powers p >= 1 and products of controls
        auto powered = cs;
        for (auto& v : powered.w) v = std::pow(std::max(v, 0.0), 1.5);
        rep.power_15_ok = detail::superadditive_on_grid(powered, 1e-9, nullptr, nullptr,
                                                        nullptr);
        powered = cs;
        for (auto& v : powered.w) v = v * v;
        rep.power_2_ok =
            detail::superadditive_on_grid(powered, 1e-9, nullptr, nullptr, nullptr);
        auto product = cs;
        for (std::size_t i = 0; i < n1; ++i)
            for (std::size_t j = i; j < n1; ++j)
                product.w[i * n1 + j] *= cs.times[j] - cs.times[i];
        rep.product_ok =
            detail::superadditive_on_grid(product, 1e-9, nullptr, nullptr, nullptr);
    }
    return rep;
}

}  // namespace mfsim::metrics
