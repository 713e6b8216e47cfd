#include <cmath>
#include <vector>

#include "doctest.h"
#include "uavdc/rng.hpp"

using uavdc::RngStream;

TEST_CASE("same seed reproduces the sequence") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    RngStream a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("substreams are pure functions of (seed, tags)") {
    RngStream root(7);
    RngStream s1 = root.substream(3, 4, 5);
    // Drawing from the root must not affect later derivations.
    (void)root.next_u64();
    (void)root.next_u64();
    RngStream s2 = root.substream(3, 4, 5);
    for (int i = 0; i < 20; ++i) CHECK(s1.next_u64() == s2.next_u64());

    RngStream t1 = RngStream(7).substream(3, 4, 6);
    CHECK(RngStream(7).substream(3, 4, 5).next_u64() != t1.next_u64());
    // tag order matters
    CHECK(RngStream(7).substream(4, 3, 5).next_u64() != RngStream(7).substream(3, 4, 5).next_u64());
}

TEST_CASE("uniform doubles live in [0,1) with the right mean") {
    RngStream r(123);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.next_double();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    const double mean = sum / n;
    const double sigma = 1.0 / std::sqrt(12.0 * n);
    CHECK(std::abs(mean - 0.5) < 3.0 * sigma);
}

TEST_CASE("next_below stays in range and covers all residues") {
    RngStream r(9);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = r.next_below(7);
        REQUIRE(v < 7);
        ++counts[static_cast<int>(v)];
    }
    for (int c : counts) CHECK(c > 0);
    CHECK(r.next_below(0) == 0);
}

TEST_CASE("normal draws have unit variance and zero mean") {
    RngStream r(77);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("complex normal has unit second moment and circular symmetry") {
    RngStream r(2024);
    const int n = 100000;
    double pow_sum = 0.0, re_sum = 0.0, im_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto z = r.cnormal();
        pow_sum += std::norm(z);
        re_sum += z.real();
        im_sum += z.imag();
    }
    CHECK(pow_sum / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(std::abs(re_sum / n) < 0.02);
    CHECK(std::abs(im_sum / n) < 0.02);
}
