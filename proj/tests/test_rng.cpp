#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "canvas/rng.hpp"

using canvas::RngStream;

TEST_CASE("identical seeds give identical streams") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    RngStream a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    REQUIRE(same == 0);
}

TEST_CASE("child streams are independent of parent draw position") {
    RngStream parent(7);
    RngStream c1 = parent.child(3);
    parent.next_u64();
    parent.next_u64();
    RngStream c2 = parent.child(3);
    for (int i = 0; i < 16; ++i) REQUIRE(c1.next_u64() == c2.next_u64());
}

TEST_CASE("sibling children differ") {
    RngStream parent(7);
    REQUIRE(parent.child(0).next_u64() != parent.child(1).next_u64());
}

TEST_CASE("interleaving order does not change per-stream draws") {
    RngStream parent(99);
    RngStream a1 = parent.child(0), b1 = parent.child(1);
    RngStream a2 = parent.child(0), b2 = parent.child(1);

    std::vector<std::uint64_t> seq_a, seq_b;
    for (int i = 0; i < 10; ++i) {
        seq_a.push_back(a1.next_u64());
        seq_b.push_back(b1.next_u64());
    }
    std::vector<std::uint64_t> rev_b, rev_a;
    for (int i = 0; i < 10; ++i) rev_b.push_back(b2.next_u64());
    for (int i = 0; i < 10; ++i) rev_a.push_back(a2.next_u64());
    REQUIRE(seq_a == rev_a);
    REQUIRE(seq_b == rev_b);
}

TEST_CASE("uniform stays in the half-open unit interval") {
    RngStream s(5);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = s.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(std::abs(sum / 20000 - 0.5) < 0.01);
}

TEST_CASE("uniform_int respects bounds and is roughly uniform") {
    RngStream s(11);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 50000; ++i) {
        const std::uint64_t v = s.uniform_int(10);
        REQUIRE(v < 10);
        counts[static_cast<std::size_t>(v)]++;
    }
    for (int c : counts) REQUIRE(std::abs(c - 5000) < 300);
}

TEST_CASE("normal draws have unit moments") {
    RngStream s(13);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(sq / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("subkey construction equals chained children") {
    RngStream direct(4, {8, 15, 16});
    RngStream chained = RngStream(4).child(8).child(15).child(16);
    for (int i = 0; i < 8; ++i) REQUIRE(direct.next_u64() == chained.next_u64());
}

TEST_CASE("keys do not collide over a small grid of coordinates") {
    std::set<std::uint64_t> keys;
    RngStream root(2024);
    for (std::uint64_t a = 0; a < 50; ++a)
        for (std::uint64_t b = 0; b < 50; ++b) keys.insert(root.child(a).child(b).key());
    REQUIRE(keys.size() == 2500);
}
