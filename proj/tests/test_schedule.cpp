#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "canvas/rng.hpp"
#include "canvas/schedule.hpp"

using canvas::make_schedule;
using canvas::RngStream;
using canvas::Schedule;
using canvas::ShiftFactor;
using canvas::timestep_shift;
using canvas::timestep_shift_inverse;

TEST_CASE("shift fixes the endpoints exactly") {
    for (double f : {0.01, 0.5, 1.0, 6.30, 123.0}) {
        REQUIRE(timestep_shift(0.0, ShiftFactor(f)) == 0.0);
        REQUIRE(timestep_shift(1.0, ShiftFactor(f)) == 1.0);
    }
}

TEST_CASE("unit factor is the identity") {
    RngStream rng(1);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform();
        REQUIRE(timestep_shift(t, ShiftFactor(1.0)) == Catch::Approx(t).margin(1e-15));
    }
}

TEST_CASE("shift matches the closed form at the swept factor") {
    REQUIRE(std::abs(timestep_shift(0.5, ShiftFactor(6.30)) - 0.863013698630137) < 1e-9);
    REQUIRE(std::abs(timestep_shift(0.25, ShiftFactor(6.30)) - 0.677419354838710) < 1e-9);
}

TEST_CASE("shift is strictly increasing and stays inside the unit interval") {
    RngStream rng(2);
    for (double f : {0.2, 1.0, 6.30, 40.0}) {
        double prev = 0.0;
        for (int i = 1; i <= 200; ++i) {
            const double t = i / 200.0;
            const double m = timestep_shift(t, ShiftFactor(f));
            REQUIRE(m >= 0.0);
            REQUIRE(m <= 1.0);
            REQUIRE(m > prev);
            prev = m;
        }
    }
    (void)rng;
}

TEST_CASE("inverse undoes the shift") {
    REQUIRE(std::abs(timestep_shift_inverse(0.863013698630137, ShiftFactor(6.30)) - 0.5) < 1e-9);
    RngStream rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform();
        const double f = 0.05 + 20.0 * rng.uniform();
        REQUIRE(std::abs(timestep_shift_inverse(timestep_shift(t, ShiftFactor(f)),
                                                ShiftFactor(f)) -
                         t) < 1e-12);
        REQUIRE(std::abs(timestep_shift_inverse(t, ShiftFactor(1.0)) - t) < 1e-15);
    }
}

TEST_CASE("composed shifts multiply their factors") {
    RngStream rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform();
        const double f1 = 0.1 + 10.0 * rng.uniform();
        const double f2 = 0.1 + 10.0 * rng.uniform();
        const double via_two = timestep_shift(timestep_shift(t, ShiftFactor(f1)), ShiftFactor(f2));
        const double direct = timestep_shift(t, ShiftFactor(f1 * f2));
        REQUIRE(std::abs(via_two - direct) < 1e-12);
    }
}

TEST_CASE("schedule fixtures") {
    const Schedule uniform = make_schedule(2, ShiftFactor(1.0));
    REQUIRE(uniform.steps.size() == 3);
    REQUIRE(uniform.steps[0] == 1.0);
    REQUIRE(uniform.steps[1] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(uniform.steps[2] == 0.0);

    const Schedule shifted = make_schedule(2, ShiftFactor(6.30));
    REQUIRE(shifted.steps[0] == 1.0);
    REQUIRE(std::abs(shifted.steps[1] - 0.863013698630137) < 1e-9);
    REQUIRE(shifted.steps[2] == 0.0);

    const Schedule one = make_schedule(1, ShiftFactor(9.9));
    REQUIRE(one.steps == std::vector<double>{1.0, 0.0});
}

TEST_CASE("schedules are strictly decreasing with exact endpoints") {
    RngStream rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const double f = 0.05 + 30.0 * rng.uniform();
        const int n = 1 + static_cast<int>(rng.uniform_int(100));
        const Schedule s = make_schedule(n, ShiftFactor(f));
        REQUIRE(static_cast<int>(s.steps.size()) == n + 1);
        REQUIRE(s.steps.front() == 1.0);
        REQUIRE(s.steps.back() == 0.0);
        for (std::size_t i = 0; i + 1 < s.steps.size(); ++i) REQUIRE(s.steps[i] > s.steps[i + 1]);
    }
}

TEST_CASE("invalid schedule and shift inputs are rejected") {
    REQUIRE_THROWS_AS(make_schedule(0, ShiftFactor(1.0)), std::invalid_argument);
    REQUIRE_THROWS_AS(ShiftFactor(0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(ShiftFactor(-1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(timestep_shift(1.5, ShiftFactor(1.0)), std::invalid_argument);
    REQUIRE_THROWS_AS(timestep_shift(-0.1, ShiftFactor(1.0)), std::invalid_argument);
}
