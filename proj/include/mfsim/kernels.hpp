#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfsim/common.hpp"
#include "mfsim/fbm.hpp"

namespace mfsim::kernels {

using fbm::HurstParam;

// ---------------------------------------------------------------------------
// Regularity budgets: the parameter triple (alpha, q, H) with the derived
// pair kappa = 1/((alpha-1)H + 1), epsilon = (alpha-1)H + 1/q'.
// ---------------------------------------------------------------------------

struct Admissibility {
    bool ok;
    double margin;  // alpha - (1 - 1/(H q')); negative when inadmissible
};

inline double holder_conjugate(double q) {
    if (q <= 1.0) return std::numeric_limits<double>::infinity();
    return q / (q - 1.0);
}

// Subcritical-regime test: alpha < 1, q in (1,2], alpha > 1 - 1/(H q').
// Total function; never throws.
inline Admissibility admissible(double alpha, double q, double H) {
    const double qp = holder_conjugate(q);
    const double bound = std::isinf(qp) ? 1.0 : 1.0 - 1.0 / (H * qp);
    const bool ok = (alpha < 1.0) && (q > 1.0) && (q <= 2.0) && (alpha > bound);
    return {ok, alpha - bound};
}

// Supremal admissible H for an autonomous interaction at q = 2:
// H < 1/(2(1-alpha)).
inline double autonomous_hurst_bound(double alpha) {
    if (!(alpha < 1.0))
        throw DomainError("autonomous_hurst_bound: requires alpha < 1");
    return 1.0 / (2.0 * (1.0 - alpha));
}

struct RegularityBudget {
    double alpha;
    double q;
    double H;

    RegularityBudget(double alpha_, double q_, const HurstParam& H_)
        : alpha(alpha_), q(q_), H(H_.value) {}

    double kappa() const { return 1.0 / ((alpha - 1.0) * H + 1.0); }
    double epsilon() const {
        return (alpha - 1.0) * H + 1.0 / holder_conjugate(q);
    }
    Admissibility admissibility() const { return admissible(alpha, q, H); }
    bool valid() const { return admissibility().ok; }
};

// ---------------------------------------------------------------------------
// Kernel catalog
// ---------------------------------------------------------------------------

enum class KernelFamily { Smooth, Additive, RieszGradient, LogGradient, DiracApprox };

enum class MatrixKind { Identity, NegIdentity, Symplectic };

enum class ModulationKind { None, Power };

// Component functions for additive kernels b(x,y) = f(x) + g(y) + h(x-y).
// All built-ins are smooth and bounded; "tanh", "sin" and "gauss_grad" are odd.
struct ComponentSpec {
    std::string name = "zero";  // zero | tanh | sin | gauss_grad | const
    double scale = 1.0;
};

struct KernelSpec {
    KernelFamily family = KernelFamily::Smooth;
    int dim = 1;
    double delta = 0.0;  // mollification width (length units)

    std::string smooth_name = "zero";     // zero | constant | tanh
    std::vector<double> constant_value;   // for "constant"; scalar broadcasts

    ComponentSpec f, g, h;                // additive components

    double riesz_s = 1.0;                 // Riesz exponent s > 0
    MatrixKind matrix = MatrixKind::Identity;

    std::vector<double> dirac_v;          // Dirac direction; scalar broadcasts

    ModulationKind modulation = ModulationKind::None;
    double modulation_p = 0.0;            // m(t) = t^(-p)

    double nominal_alpha() const {
        switch (family) {
            case KernelFamily::Smooth:
            case KernelFamily::Additive: return 1.0;
            case KernelFamily::RieszGradient: return -riesz_s - 1.0;
            case KernelFamily::LogGradient: return -1.0;
            case KernelFamily::DiracApprox: return -static_cast<double>(dim);
        }
        return 1.0;
    }

    void validate() const {
        if (dim < 1) throw InputError("KernelSpec: dim must be >= 1");
        if (dim > 8) throw UnsupportedError("kernel evaluation supports d <= 8");
        if (delta < 0.0) throw InputError("KernelSpec: delta must be nonnegative");
        if (nominal_alpha() <= 0.0 && !(delta > 0.0))
            throw InputError(
                "KernelSpec: delta > 0 required for families with nominal alpha <= 0");
        switch (family) {
            case KernelFamily::RieszGradient:
                if (!(riesz_s > 0.0))
                    throw InputError("KernelSpec: Riesz exponent s must be positive");
                break;
            case KernelFamily::LogGradient:
                if (dim != 2)
                    throw UnsupportedError(
                        "KernelSpec: LogGradient is the d = 2 log-potential family");
                break;
            case KernelFamily::DiracApprox:
                if (dirac_v.empty())
                    throw InputError("KernelSpec: Dirac direction v required");
                if (dirac_v.size() != 1 && dirac_v.size() != static_cast<std::size_t>(dim))
                    throw InputError("KernelSpec: Dirac direction size mismatch");
                break;
            case KernelFamily::Smooth:
                if (smooth_name == "constant" && constant_value.empty())
                    throw InputError("KernelSpec: constant kernel needs a value");
                break;
            default: break;
        }
        if (modulation == ModulationKind::Power &&
            !(modulation_p >= 0.0 && modulation_p < 1.0))
            throw InputError("KernelSpec: modulation exponent must lie in [0,1)");
    }
};

namespace detail {

// --- scaled modified Bessel functions I0(x) e^-x, I1(x) e^-x -------------
// Abramowitz & Stegun 9.8.1-9.8.4 rational approximations (|err| < 2e-7).

inline double bessel_i0e(double x) {
    x = std::abs(x);
    if (x < 3.75) {
        const double t = (x / 3.75) * (x / 3.75);
        const double i0 =
            1.0 + t * (3.5156229 + t * (3.0899424 + t * (1.2067492 +
                       t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))));
        return i0 * std::exp(-x);
    }
    const double t = 3.75 / x;
    const double p =
        0.39894228 + t * (0.01328592 + t * (0.00225319 + t * (-0.00157565 +
        t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 +
        t * (-0.01647633 + t * 0.00392377)))))));
    return p / std::sqrt(x);
}

inline double bessel_i1e(double x) {
    const double ax = std::abs(x);
    double v;
    if (ax < 3.75) {
        const double t = (ax / 3.75) * (ax / 3.75);
        v = ax * (0.5 + t * (0.87890594 + t * (0.51498869 + t * (0.15084934 +
                  t * (0.02658733 + t * (0.00301532 + t * 0.00032411))))));
        v *= std::exp(-ax);
    } else {
        const double t = 3.75 / ax;
        const double p =
            0.39894228 + t * (-0.03988024 + t * (-0.00362018 + t * (0.00163801 +
            t * (-0.01031555 + t * (0.02282967 + t * (-0.02895312 +
            t * (0.01787654 + t * (-0.00420059))))))));
        v = p / std::sqrt(ax);
    }
    return x < 0.0 ? -v : v;
}

// --- 16-point Gauss-Legendre on [-1,1] -----------------------------------

inline const double* gl16_nodes() {
    static const double x[16] = {
        -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
        -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
        -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
        0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
        0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
        0.9894009349916499};
    return x;
}

inline const double* gl16_weights() {
    static const double w[16] = {
        0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
        0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
        0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
        0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
        0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
        0.0271524594117541};
    return w;
}

template <class F>
double gl16(F&& f, double a, double b) {
    const double* xs = gl16_nodes();
    const double* ws = gl16_weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < 16; ++i) acc += ws[i] * f(mid + half * xs[i]);
    return acc * half;
}

template <class F>
double gl16_composite(F&& f, double a, double b, double max_spacing) {
    if (!(b > a)) return 0.0;
    const auto pieces =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a) / max_spacing)));
    const double w = (b - a) / static_cast<double>(pieces);
    double acc = 0.0;
    for (std::size_t k = 0; k < pieces; ++k)
        acc += gl16(f, a + static_cast<double>(k) * w, a + static_cast<double>(k + 1) * w);
    return acc;
}

// d-specific radial derivative kernels for the Gaussian-smoothed potential:
// J(rho) is d/dr of the 1-d reduction kernel (measure included), so that
// U'(r) = \int_0^inf h(rho) J(rho) drho.
struct RadialDerivKernel {
    int dim;
    double r;
    double delta;

    double g1(double z) const {
        return std::exp(-z * z / (2.0 * delta * delta)) /
               (2.5066282746310005024 * delta);
    }
    double g1p(double z) const { return -(z / (delta * delta)) * g1(z); }

    double operator()(double rho) const {
        switch (dim) {
            case 1:
                return g1p(r - rho) + g1p(r + rho);
            case 2: {
                const double d2 = delta * delta;
                const double z = r * rho / d2;
                const double gauss = std::exp(-(r - rho) * (r - rho) / (2.0 * d2));
                return (rho / d2) * gauss *
                       ((rho / d2) * bessel_i1e(z) - (r / d2) * bessel_i0e(z));
            }
            case 3: {
                const double diff = g1(r - rho) - g1(r + rho);
                const double ddiff = g1p(r - rho) - g1p(r + rho);
                return rho * (-diff / (r * r) + ddiff / r);
            }
            default:
                throw UnsupportedError("radial smoothing supports d in {1,2,3}");
        }
    }
};

// U'(r) for U = G_{delta^2} (|.|^{-s}) by graded quadrature. For s in (d,d+1)
// (d = 1 only) the value is the one-term finite-part continuation, which is
// the unique scaling-respecting extension for non-integer s.
inline double riesz_profile_quadrature(int dim, double s, double delta, double r) {
    const RadialDerivKernel J{dim, r, delta};
    const double upper = r + 12.0 * delta;
    const double lower = r - 12.0 * delta;
    const auto integrand = [&](double rho) { return std::pow(rho, -s) * J(rho); };

    if (lower > 0.0) {
        // Gaussian window does not reach the singularity; the [0, lower]
        // remainder is bounded by exp(-72) times an integrable factor.
        return gl16_composite(integrand, lower, upper, 0.5 * delta);
    }

    const double a = 0.5 * std::min(delta, upper);
    double acc = gl16_composite(integrand, a, upper, 0.5 * delta);

    if (s < static_cast<double>(dim)) {
        // integrable singularity: rho = u^m flattens it
        const double m = std::max(2.0, std::ceil(3.0 / (static_cast<double>(dim) - s)));
        const auto sub = [&](double u) {
            const double rho = std::pow(u, m);
            return m * std::pow(u, m - 1.0) * integrand(rho);
        };
        acc += gl16_composite(sub, 0.0, std::pow(a, 1.0 / m), std::pow(a, 1.0 / m) / 12.0);
        return acc;
    }

    if (dim == 1 && s < 2.0) {
        // finite part: subtract J(0) on [0,a]
        const double j0 = J(0.0);
        const double m = std::max(2.0, std::ceil(3.0 / (2.0 - s)));
        const auto sub = [&](double u) {
            const double rho = std::pow(u, m);
            return m * std::pow(u, m - 1.0) * std::pow(rho, -s) * (J(rho) - j0);
        };
        acc += gl16_composite(sub, 0.0, std::pow(a, 1.0 / m), std::pow(a, 1.0 / m) / 12.0);
        acc += j0 * std::pow(a, 1.0 - s) / (1.0 - s);
        return acc;
    }

    throw UnsupportedError(
        "RieszGradient evaluation supports s in (0,d), plus s in (d,d+1) for d = 1; "
        "larger exponents are metadata-only");
}

// Cached radial profile psi(r) = U'(r) on a log-spaced grid, stored as the
// ratio to the unmollified far field -s r^{-s-1} and interpolated with
// Catmull-Rom cubics in log r.
class RadialProfile {
public:
    RadialProfile(int dim, double s, double delta)
        : s_(s), delta_(delta), r_min_(delta / 100.0) {
        r_max_ = std::max(200.0, 2000.0 * delta);
        const std::size_t n = 600;
        x0_ = std::log(r_min_);
        dx_ = (std::log(r_max_) - x0_) / static_cast<double>(n - 1);
        ratio_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = std::exp(x0_ + dx_ * static_cast<double>(i));
            ratio_[i] = riesz_profile_quadrature(dim, s, delta, r) / far_field(r);
        }
        psi_rmin_ = ratio_.front() * far_field(r_min_);
    }

    double far_field(double r) const { return -s_ * std::pow(r, -s_ - 1.0); }

    double operator()(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= r_max_) return far_field(r);
        if (r <= r_min_) return psi_rmin_ * (r / r_min_);  // odd smooth field: psi ~ c r
        const double x = (std::log(r) - x0_) / dx_;
        const auto i = static_cast<std::size_t>(x);
        const double tt = x - static_cast<double>(i);
        const std::size_t last = ratio_.size() - 1;
        const double ym1 = ratio_[i > 0 ? i - 1 : 0];
        const double y0 = ratio_[i];
        const double y1 = ratio_[std::min(i + 1, last)];
        const double y2 = ratio_[std::min(i + 2, last)];
        const double w = 0.5 * (tt * ((2.0 - tt) * tt - 1.0) * ym1 +
                                (tt * tt * (3.0 * tt - 5.0) + 2.0) * y0 +
                                tt * ((4.0 - 3.0 * tt) * tt + 1.0) * y1 +
                                (tt - 1.0) * tt * tt * y2);
        return w * far_field(r);
    }

    // slope of psi at the origin; used for Lipschitz estimates
    double core_slope() const { return psi_rmin_ / r_min_; }

private:
    double s_, delta_, r_min_, r_max_, x0_, dx_, psi_rmin_;
    std::vector<double> ratio_;
};

inline std::shared_ptr<const RadialProfile> radial_profile_cache(int dim, double s,
                                                                 double delta) {
    struct Key {
        int dim;
        double s, delta;
        bool operator<(const Key& o) const {
            if (dim != o.dim) return dim < o.dim;
            if (s != o.s) return s < o.s;
            return delta < o.delta;
        }
    };
    static std::map<Key, std::shared_ptr<const RadialProfile>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{dim, s, delta}];
    if (!slot) slot = std::make_shared<const RadialProfile>(dim, s, delta);
    return slot;
}

inline void component_eval(const ComponentSpec& c, const double* u, int d, double* out) {
    if (c.name == "zero") {
        for (int i = 0; i < d; ++i) out[i] = 0.0;
    } else if (c.name == "tanh") {
        for (int i = 0; i < d; ++i) out[i] = c.scale * std::tanh(u[i]);
    } else if (c.name == "sin") {
        for (int i = 0; i < d; ++i) out[i] = c.scale * std::sin(u[i]);
    } else if (c.name == "gauss_grad") {
        double n2 = 0.0;
        for (int i = 0; i < d; ++i) n2 += u[i] * u[i];
        const double e = std::exp(-0.5 * n2);
        for (int i = 0; i < d; ++i) out[i] = c.scale * u[i] * e;
    } else if (c.name == "const") {
        for (int i = 0; i < d; ++i) out[i] = c.scale;
    } else {
        throw InputError("unknown additive component: " + c.name);
    }
}

inline double component_lipschitz(const ComponentSpec& c) {
    if (c.name == "zero" || c.name == "const") return 0.0;
    return std::abs(c.scale);  // tanh, sin, gauss_grad all have |grad| <= 1
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Compiled kernel: precomputed parameters/tables plus a fast pair evaluation.
// All evaluation is pure and reentrant; radial tables are built once and
// shared read-only.
// ---------------------------------------------------------------------------

class KernelEval {
public:
    explicit KernelEval(const KernelSpec& spec) : spec_(spec) {
        spec_.validate();
        d_ = spec_.dim;
        if (spec_.family == KernelFamily::DiracApprox) {
            vdir_ = spec_.dirac_v;
            if (vdir_.size() == 1) vdir_.assign(static_cast<std::size_t>(d_), vdir_[0]);
            dirac_norm_ = std::pow(6.283185307179586 * spec_.delta * spec_.delta,
                                   -0.5 * static_cast<double>(d_));
        }
        if (spec_.family == KernelFamily::Smooth && spec_.smooth_name == "constant") {
            cval_ = spec_.constant_value;
            if (cval_.size() == 1) cval_.assign(static_cast<std::size_t>(d_), cval_[0]);
            if (cval_.size() != static_cast<std::size_t>(d_))
                throw InputError("constant kernel value size mismatch");
        }
        if (spec_.family == KernelFamily::RieszGradient)
            profile_ = detail::radial_profile_cache(d_, spec_.riesz_s, spec_.delta);
    }

    const KernelSpec& spec() const { return spec_; }
    int dim() const { return d_; }

    bool odd_pairwise() const {
        switch (spec_.family) {
            case KernelFamily::RieszGradient:
            case KernelFamily::LogGradient: return true;
            case KernelFamily::Smooth: return spec_.smooth_name == "tanh";
            default: return false;
        }
    }

    bool is_zero() const {
        return spec_.family == KernelFamily::Smooth && spec_.smooth_name == "zero";
    }

    // m(t); callers must keep t positive for power modulation
    double time_factor(double t) const {
        if (spec_.modulation == ModulationKind::None) return 1.0;
        if (!(t > 0.0))
            throw DomainError("time modulation t^(-p) undefined at t = 0");
        return std::pow(t, -spec_.modulation_p);
    }

    bool has_modulation() const { return spec_.modulation != ModulationKind::None; }

    // autonomous part b(x,y); out has dim() entries
    void pair(const double* x, const double* y, double* out) const {
        switch (spec_.family) {
            case KernelFamily::Smooth:
                if (spec_.smooth_name == "zero") {
                    for (int i = 0; i < d_; ++i) out[i] = 0.0;
                } else if (spec_.smooth_name == "constant") {
                    for (int i = 0; i < d_; ++i)
                        out[i] = cval_[static_cast<std::size_t>(i)];
                } else if (spec_.smooth_name == "tanh") {
                    for (int i = 0; i < d_; ++i) out[i] = std::tanh(y[i] - x[i]);
                } else {
                    throw InputError("unknown smooth kernel: " + spec_.smooth_name);
                }
                return;
            case KernelFamily::Additive: {
                double u[8], a[8], b[8], c[8];
                for (int i = 0; i < d_; ++i) u[i] = x[i] - y[i];
                detail::component_eval(spec_.f, x, d_, a);
                detail::component_eval(spec_.g, y, d_, b);
                detail::component_eval(spec_.h, u, d_, c);
                for (int i = 0; i < d_; ++i) out[i] = a[i] + b[i] + c[i];
                return;
            }
            case KernelFamily::DiracApprox: {
                double n2 = 0.0;
                for (int i = 0; i < d_; ++i) {
                    const double u = x[i] - y[i];
                    n2 += u * u;
                }
                const double g =
                    dirac_norm_ * std::exp(-n2 / (2.0 * spec_.delta * spec_.delta));
                for (int i = 0; i < d_; ++i)
                    out[i] = vdir_[static_cast<std::size_t>(i)] * g;
                return;
            }
            case KernelFamily::LogGradient: {
                // closed-form mollified 2-d log potential:
                // grad(G_{delta^2} log|.|)(u) = u/|u|^2 (1 - exp(-|u|^2/(2 delta^2)))
                const double u0 = x[0] - y[0], u1 = x[1] - y[1];
                const double r2 = u0 * u0 + u1 * u1;
                double f;
                if (r2 == 0.0) {
                    out[0] = out[1] = 0.0;
                    return;
                }
                const double z = r2 / (2.0 * spec_.delta * spec_.delta);
                f = z < 1e-8 ? (1.0 - 0.5 * z) / (2.0 * spec_.delta * spec_.delta)
                             : -std::expm1(-z) / r2;
                apply_matrix(f * u0, f * u1, out);
                return;
            }
            case KernelFamily::RieszGradient: {
                double u[8];
                double r2 = 0.0;
                for (int i = 0; i < d_; ++i) {
                    u[i] = x[i] - y[i];
                    r2 += u[i] * u[i];
                }
                if (r2 == 0.0) {
                    for (int i = 0; i < d_; ++i) out[i] = 0.0;
                    return;
                }
                const double r = std::sqrt(r2);
                const double scale = (*profile_)(r) / r;
                double v[8];
                for (int i = 0; i < d_; ++i) v[i] = scale * u[i];
                if (d_ == 2) {
                    apply_matrix(v[0], v[1], out);
                } else {
                    switch (spec_.matrix) {
                        case MatrixKind::Identity:
                            for (int i = 0; i < d_; ++i) out[i] = v[i];
                            break;
                        case MatrixKind::NegIdentity:
                            for (int i = 0; i < d_; ++i) out[i] = -v[i];
                            break;
                        case MatrixKind::Symplectic:
                            throw UnsupportedError("symplectic matrix requires d = 2");
                    }
                }
                return;
            }
        }
    }

    // crude per-family bound on |grad_x b|; drives the step-size guard
    double lipschitz_estimate() const {
        double base;
        switch (spec_.family) {
            case KernelFamily::Smooth:
                base = spec_.smooth_name == "tanh" ? 1.0 : 0.0;
                break;
            case KernelFamily::Additive:
                base = detail::component_lipschitz(spec_.f) +
                       detail::component_lipschitz(spec_.g) +
                       detail::component_lipschitz(spec_.h);
                break;
            case KernelFamily::DiracApprox: {
                double vmax = 0.0;
                for (double v : vdir_) vmax = std::max(vmax, std::abs(v));
                base = vmax * dirac_norm_ * std::exp(-0.5) / spec_.delta;
                break;
            }
            case KernelFamily::LogGradient:
                base = 0.5 / (spec_.delta * spec_.delta);
                break;
            case KernelFamily::RieszGradient:
                base = std::abs(profile_->core_slope());
                break;
            default:
                base = 0.0;
        }
        return base;
    }

private:
    void apply_matrix(double v0, double v1, double* out) const {
        switch (spec_.matrix) {
            case MatrixKind::Identity: out[0] = v0; out[1] = v1; return;
            case MatrixKind::NegIdentity: out[0] = -v0; out[1] = -v1; return;
            case MatrixKind::Symplectic: out[0] = -v1; out[1] = v0; return;
        }
    }

    KernelSpec spec_;
    int d_ = 1;
    std::vector<double> vdir_, cval_;
    double dirac_norm_ = 0.0;
    std::shared_ptr<const detail::RadialProfile> profile_;
};

// b^delta_t(x, y) including the time modulation factor.
inline std::vector<double> eval_mollified(const KernelSpec& spec, double t,
                                          std::span<const double> x,
                                          std::span<const double> y) {
    if (x.size() != static_cast<std::size_t>(spec.dim) || x.size() != y.size())
        throw InputError("eval_mollified: point dimension mismatch");
    if (!all_finite(x.data(), x.size()) || !all_finite(y.data(), y.size()) ||
        !std::isfinite(t))
        throw InputError("eval_mollified: non-finite input");
    KernelEval ev(spec);
    std::vector<double> out(x.size());
    ev.pair(x.data(), y.data(), out.data());
    const double m = ev.time_factor(ev.has_modulation() ? t : 1.0);
    if (m != 1.0)
        for (auto& v : out) v *= m;
    return out;
}

// ---------------------------------------------------------------------------
// kernel_report: admissibility verdict with the per-family Hurst threshold.
// ---------------------------------------------------------------------------

struct KernelReport {
    std::string family;
    int dim;
    double delta;
    double riesz_s;          // NaN when not applicable
    double nominal_alpha;
    double q;
    double H;
    bool admissible_ok;
    double margin;
    double hurst_threshold;  // +inf in the Lipschitz regime
    bool lipschitz_regime;
    std::string note;

    std::string to_text() const {
        std::ostringstream os;
        char buf[128];
        os << "kernel report\n";
        os << "  family          : " << family << "\n";
        os << "  dimension       : " << dim << "\n";
        std::snprintf(buf, sizeof buf, "%g", delta);
        os << "  delta           : " << buf << "\n";
        if (std::isfinite(riesz_s)) {
            std::snprintf(buf, sizeof buf, "%g", riesz_s);
            os << "  exponent s      : " << buf << "\n";
        }
        std::snprintf(buf, sizeof buf, "%g", nominal_alpha);
        os << "  nominal alpha   : " << buf << "\n";
        std::snprintf(buf, sizeof buf, "(q = %g, H = %g)", q, H);
        os << "  budget          : " << buf << "\n";
        os << "  admissible      : " << (admissible_ok ? "yes" : "no") << "\n";
        std::snprintf(buf, sizeof buf, "%g", margin);
        os << "  margin          : " << buf << "\n";
        if (lipschitz_regime) {
            os << "  hurst threshold : none (Lipschitz regime)\n";
        } else {
            std::snprintf(buf, sizeof buf, "H < %g", hurst_threshold);
            os << "  hurst threshold : " << buf << "\n";
        }
        os << "  note            : " << note << "\n";
        return os.str();
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["family"] = family;
        j["dim"] = dim;
        j["delta"] = delta;
        if (std::isfinite(riesz_s)) j["s"] = riesz_s;
        j["nominal_alpha"] = nominal_alpha;
        j["q"] = q;
        j["H"] = H;
        j["admissible"] = admissible_ok;
        j["margin"] = margin;
        j["lipschitz_regime"] = lipschitz_regime;
        if (!lipschitz_regime) j["hurst_threshold"] = hurst_threshold;
        j["note"] = note;
        return j;
    }
};

inline const char* family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::Smooth: return "smooth";
        case KernelFamily::Additive: return "additive";
        case KernelFamily::RieszGradient: return "riesz-gradient";
        case KernelFamily::LogGradient: return "log-gradient";
        case KernelFamily::DiracApprox: return "dirac-approx";
    }
    return "?";
}

inline KernelReport kernel_report(const KernelSpec& spec, double q, const HurstParam& H) {
    spec.validate();
    const double alpha = spec.nominal_alpha();
    const auto adm = admissible(alpha, q, H.value);
    KernelReport rep;
    rep.family = family_name(spec.family);
    rep.dim = spec.dim;
    rep.delta = spec.delta;
    rep.riesz_s = spec.family == KernelFamily::RieszGradient
                      ? spec.riesz_s
                      : std::numeric_limits<double>::quiet_NaN();
    rep.nominal_alpha = alpha;
    rep.q = q;
    rep.H = H.value;
    rep.admissible_ok = adm.ok;
    rep.margin = adm.margin;
    rep.lipschitz_regime = alpha >= 1.0;
    rep.hurst_threshold =
        rep.lipschitz_regime ? std::numeric_limits<double>::infinity()
                             : autonomous_hurst_bound(alpha);
    char buf[160];
    switch (spec.family) {
        case KernelFamily::RieszGradient:
            std::snprintf(buf, sizeof buf,
                          "Riesz gradient, s = %g: admissible at q = 2 iff H < 1/(2(2+s)) = %g",
                          spec.riesz_s, 1.0 / (2.0 * (2.0 + spec.riesz_s)));
            break;
        case KernelFamily::LogGradient:
            std::snprintf(buf, sizeof buf,
                          "log potential / Biot-Savart (d = 2): admissible at q = 2 iff H < 0.25");
            break;
        case KernelFamily::DiracApprox:
            std::snprintf(buf, sizeof buf,
                          "Dirac approximation (d = %d): admissible at q = 2 iff H < 1/(2(1+d)) = %g",
                          spec.dim, 1.0 / (2.0 * (1.0 + static_cast<double>(spec.dim))));
            break;
        default:
            std::snprintf(buf, sizeof buf,
                          "Lipschitz regime: admissible for all H up to the alpha < 1 "
                          "constraint at the stated q");
            break;
    }
    rep.note = buf;
    return rep;
}

}  // namespace mfsim::kernels
