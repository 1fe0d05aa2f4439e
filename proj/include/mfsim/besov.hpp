#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "mfsim/common.hpp"

namespace mfsim::kernels {

// Scalar field sampled on the box [-L, L]^d, uniform spacing, row-major.
// Values outside the box are treated as zero by the heat estimator.
struct SampledField {
    int dim = 1;
    double extent = 1.0;  // half-width L
    std::size_t nx = 2;   // points per axis
    std::vector<double> values;

    double spacing() const {
        return 2.0 * extent / static_cast<double>(nx - 1);
    }

    static SampledField from_function(int dim, double extent, std::size_t nx,
                                      const std::function<double(const double*)>& f) {
        if (dim < 1 || dim > 2)
            throw UnsupportedError("SampledField supports d in {1,2}");
        if (nx < 2) throw InputError("SampledField: nx must be >= 2");
        SampledField field;
        field.dim = dim;
        field.extent = extent;
        field.nx = nx;
        const double h = field.spacing();
        if (dim == 1) {
            field.values.resize(nx);
            for (std::size_t i = 0; i < nx; ++i) {
                const double x = -extent + h * static_cast<double>(i);
                field.values[i] = f(&x);
            }
        } else {
            field.values.resize(nx * nx);
            for (std::size_t i = 0; i < nx; ++i)
                for (std::size_t j = 0; j < nx; ++j) {
                    const double p[2] = {-extent + h * static_cast<double>(i),
                                         -extent + h * static_cast<double>(j)};
                    field.values[i * nx + j] = f(p);
                }
        }
        if (!all_finite(field.values))
            throw InputError("SampledField: non-finite values");
        return field;
    }
};

namespace detail {

// normalized discrete Gaussian taps at spacing h, std sqrt(t), cut at 8 std
inline std::vector<double> heat_taps(double t, double h) {
    const double sigma = std::sqrt(t);
    const auto w = static_cast<std::ptrdiff_t>(std::ceil(8.0 * sigma / h));
    std::vector<double> taps(static_cast<std::size_t>(2 * w + 1));
    double sum = 0.0;
    for (std::ptrdiff_t j = -w; j <= w; ++j) {
        const double z = static_cast<double>(j) * h;
        const double v = std::exp(-z * z / (2.0 * t));
        taps[static_cast<std::size_t>(j + w)] = v;
        sum += v;
    }
    for (auto& v : taps) v /= sum;  // constants stay exactly invariant
    return taps;
}

inline void convolve_axis(const std::vector<double>& in, std::vector<double>& out,
                          std::size_t n, std::size_t stride, std::size_t count,
                          const std::vector<double>& taps) {
    const auto w = static_cast<std::ptrdiff_t>(taps.size() / 2);
    for (std::size_t line = 0; line < count; ++line) {
        const std::size_t base = (stride == 1) ? line * n : line;
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            double acc = 0.0;
            const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(-w, -i);
            const std::ptrdiff_t j1 =
                std::min<std::ptrdiff_t>(w, static_cast<std::ptrdiff_t>(n) - 1 - i);
            for (std::ptrdiff_t j = j0; j <= j1; ++j)
                acc += taps[static_cast<std::size_t>(j + w)] *
                       in[base + static_cast<std::size_t>(i + j) * stride];
            out[base + static_cast<std::size_t>(i) * stride] = acc;
        }
    }
}

inline double heat_sup(const SampledField& f, double t) {
    const auto taps = heat_taps(t, f.spacing());
    const std::size_t n = f.nx;
    std::vector<double> tmp(f.values.size());
    if (f.dim == 1) {
        convolve_axis(f.values, tmp, n, 1, 1, taps);
    } else {
        std::vector<double> mid(f.values.size());
        convolve_axis(f.values, mid, n, 1, n, taps);    // along rows
        convolve_axis(mid, tmp, n, n, n, taps);         // along columns
    }
    double m = 0.0;
    for (double v : tmp) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace detail

// Thermic Besov estimator for alpha <= 0:
//   sup over dyadic t in [t_min, t_max] of t^(-alpha/2) * sup_x |G_t f|,
// with G_t the Gaussian convolution on the sampled box. For t <= 1 the
// weight shrinks as alpha decreases, so the estimator is monotone
// nondecreasing in alpha (weaker spaces measure smaller norms).
inline double besov_thermic_norm(const SampledField& field, double alpha, double t_min,
                                 double t_max) {
    if (!(alpha <= 0.0))
        throw DomainError("besov_thermic_norm: requires alpha <= 0");
    if (!(t_min > 0.0 && t_min < t_max && t_max <= 1.0))
        throw DomainError("besov_thermic_norm: need 0 < t_min < t_max <= 1");
    const double h = field.spacing();
    if (!(h * h <= t_min / 4.0))
        throw ResolutionError("besov_thermic_norm: field under-resolved (need h^2 <= t_min/4)");
    double best = 0.0;
    for (double t = t_max; t >= t_min * (1.0 - 1e-12); t *= 0.5)
        best = std::max(best, std::pow(t, -0.5 * alpha) * detail::heat_sup(field, t));
    return best;
}

}  // namespace mfsim::kernels
