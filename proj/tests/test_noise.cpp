#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include <cfsde/philox.hpp>

using Catch::Matchers::WithinAbs;
using namespace cfsde;

TEST_CASE("Philox4x32-10 matches the reference vectors") {
    SECTION("zero counter, zero key") {
        const auto r = Philox4x32::block({0u, 0u, 0u, 0u}, {0u, 0u});
        CHECK(r[0] == 0x6627e8d5u);
        CHECK(r[1] == 0xe169c58du);
        CHECK(r[2] == 0xbc57ac4cu);
        CHECK(r[3] == 0x9b00dbd8u);
    }
    SECTION("all-ones counter and key") {
        const auto r = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                         {0xffffffffu, 0xffffffffu});
        CHECK(r[0] == 0x408f276du);
        CHECK(r[1] == 0x41c83b0eu);
        CHECK(r[2] == 0xa20bc7c6u);
        CHECK(r[3] == 0x6d5451fdu);
    }
    SECTION("pi-digit counter and key") {
        const auto r = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                         {0xa4093822u, 0x299f31d0u});
        CHECK(r[0] == 0xd16cfe09u);
        CHECK(r[1] == 0x94fdccebu);
        CHECK(r[2] == 0x5001e420u);
        CHECK(r[3] == 0x24126ea1u);
    }
}

TEST_CASE("normal variates are pure functions of their cell") {
    const double z = normal_variate(42, 7, 1001);
    CHECK(normal_variate(42, 7, 1001) == z);
    CHECK(normal_variate(42, 7, 1002) != z);
    CHECK(normal_variate(42, 8, 1001) != z);
    CHECK(normal_variate(43, 7, 1001) != z);
}

TEST_CASE("normal variates pass first and second moment checks") {
    const std::size_t n = 1'000'000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = normal_variate(20260816, i / 1024, i % 1024);
        REQUIRE(std::isfinite(z));
        REQUIRE(std::abs(z) < 10.0);
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - mean * mean;
    // 4-sigma bands for the sample mean and variance of n standard normals.
    CHECK_THAT(mean, WithinAbs(0.0, 4.0 / std::sqrt(static_cast<double>(n))));
    CHECK_THAT(var, WithinAbs(1.0, 4.0 * std::sqrt(2.0 / static_cast<double>(n))));
}
