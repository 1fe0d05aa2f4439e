#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mfsim/rng.hpp"

using namespace mfsim;

TEST_CASE("streams are deterministic in their key", "[rng]") {
    GaussianStream a({42, 1, 2, 3, StreamPurpose::Noise});
    GaussianStream b({42, 1, 2, 3, StreamPurpose::Noise});
    for (std::uint32_t k = 0; k < 16; ++k) {
        REQUIRE(a.normal_pair(k)[0] == b.normal_pair(k)[0]);
        REQUIRE(a.normal_pair(k)[1] == b.normal_pair(k)[1]);
    }
}

TEST_CASE("distinct keys decorrelate", "[rng]") {
    GaussianStream a({42, 1, 2, 3, StreamPurpose::Noise});
    GaussianStream b({42, 1, 2, 3, StreamPurpose::Init});
    GaussianStream c({42, 1, 2, 4, StreamPurpose::Noise});
    GaussianStream d({43, 1, 2, 3, StreamPurpose::Noise});
    REQUIRE(a.normal_pair(0)[0] != b.normal_pair(0)[0]);
    REQUIRE(a.normal_pair(0)[0] != c.normal_pair(0)[0]);
    REQUIRE(a.normal_pair(0)[0] != d.normal_pair(0)[0]);
}

TEST_CASE("normals have the right first moments", "[rng]") {
    const std::size_t n = 200000;
    std::vector<double> z(n);
    GaussianStream s({7, 0, 0, 0, StreamPurpose::Generic});
    s.fill_normals(z);
    double mean = 0.0, var = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(n);
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    // 5 sigma bands
    REQUIRE(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    REQUIRE(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("uniforms stay inside (0,1)", "[rng]") {
    GaussianStream s({11, 0, 0, 0, StreamPurpose::Generic});
    std::vector<double> u(10001);
    s.fill_uniforms(u);
    for (double v : u) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
    }
}
