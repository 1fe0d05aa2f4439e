#pragma once

#include <cstddef>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mfsim/common.hpp"

namespace mfsim {

// Uniform discretization of [0, T]; the temporal backbone of every path.
struct TimeGrid {
    double horizon = 1.0;
    std::size_t steps = 1;
    std::vector<double> times;  // length steps+1, times[k] = k*T/n

    TimeGrid() = default;
    TimeGrid(double T, std::size_t n) : horizon(T), steps(n) {
        if (!(T > 0.0)) throw InputError("TimeGrid: horizon must be positive");
        if (n == 0) throw InputError("TimeGrid: steps must be positive");
        times.resize(n + 1);
        for (std::size_t k = 0; k <= n; ++k)
            times[k] = static_cast<double>(k) * T / static_cast<double>(n);
    }

    double dt() const { return horizon / static_cast<double>(steps); }
    std::size_t size() const { return steps + 1; }

    bool operator==(const TimeGrid& o) const {
        return horizon == o.horizon && steps == o.steps;
    }
};

// Replicated [replicas][particles][n+1][d] trajectory storage, row-major.
class PathEnsemble {
public:
    PathEnsemble() = default;
    PathEnsemble(std::size_t replicas, std::size_t particles, const TimeGrid& grid,
                 std::size_t dim)
        : replicas_(replicas),
          particles_(particles),
          dim_(dim),
          grid_(grid),
          values_(replicas * particles * grid.size() * dim, 0.0) {
        if (replicas == 0 || particles == 0 || dim == 0)
            throw InputError("PathEnsemble: all dimensions must be positive");
    }

    std::size_t replicas() const { return replicas_; }
    std::size_t particles() const { return particles_; }
    std::size_t dim() const { return dim_; }
    const TimeGrid& grid() const { return grid_; }

    double& at(std::size_t r, std::size_t p, std::size_t k, std::size_t c) {
        return values_[idx(r, p, k, c)];
    }
    double at(std::size_t r, std::size_t p, std::size_t k, std::size_t c) const {
        return values_[idx(r, p, k, c)];
    }

    // contiguous [n+1][d] block of one path
    double* path(std::size_t r, std::size_t p) { return &values_[idx(r, p, 0, 0)]; }
    const double* path(std::size_t r, std::size_t p) const {
        return &values_[idx(r, p, 0, 0)];
    }

    const std::vector<double>& raw() const { return values_; }
    std::vector<double>& raw() { return values_; }

    // columns: replica, particle, k, t, x_1..x_d
    void dump_csv(std::ostream& os) const {
        os << "replica,particle,k,t";
        for (std::size_t c = 0; c < dim_; ++c) os << ",x_" << (c + 1);
        os << "\n";
        char buf[32];
        for (std::size_t r = 0; r < replicas_; ++r)
            for (std::size_t p = 0; p < particles_; ++p)
                for (std::size_t k = 0; k < grid_.size(); ++k) {
                    os << r << ',' << p << ',' << k << ',';
                    std::snprintf(buf, sizeof buf, "%.17g", grid_.times[k]);
                    os << buf;
                    for (std::size_t c = 0; c < dim_; ++c) {
                        std::snprintf(buf, sizeof buf, "%.17g", at(r, p, k, c));
                        os << ',' << buf;
                    }
                    os << "\n";
                }
    }

private:
    std::size_t idx(std::size_t r, std::size_t p, std::size_t k, std::size_t c) const {
        return ((r * particles_ + p) * grid_.size() + k) * dim_ + c;
    }

    std::size_t replicas_ = 0;
    std::size_t particles_ = 0;
    std::size_t dim_ = 0;
    TimeGrid grid_;
    std::vector<double> values_;
};

}  // namespace mfsim
