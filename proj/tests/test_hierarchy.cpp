#include <catch2/catch_amalgamated.hpp>

#include "thr/hierarchy.hpp"
#include "support/oracles.hpp"

using namespace thr;

TEST_CASE("summing matrix for {4,1}") {
    const MatrixXd S = build_summing_matrix(TemporalHierarchy({4, 1}));
    REQUIRE(S.rows() == 5);
    REQUIRE(S.cols() == 4);
    CHECK(S.row(0) == Eigen::RowVector4d(1, 1, 1, 1));
    CHECK(S.bottomRows(4) == MatrixXd::Identity(4, 4));
}

TEST_CASE("summing matrix for {4,2,1}") {
    const MatrixXd S = build_summing_matrix(TemporalHierarchy({4, 2, 1}));
    MatrixXd expected(7, 4);
    expected << 1, 1, 1, 1,
                1, 1, 0, 0,
                0, 0, 1, 1,
                1, 0, 0, 0,
                0, 1, 0, 0,
                0, 0, 1, 0,
                0, 0, 0, 1;
    CHECK(S == expected);
}

TEST_CASE("summing matrix degenerate single level") {
    const MatrixXd S = build_summing_matrix(TemporalHierarchy({1}));
    CHECK(S == MatrixXd::Identity(1, 1));
}

TEST_CASE("hierarchy validation") {
    CHECK_THROWS_AS(TemporalHierarchy({4, 2}), std::invalid_argument);   // no bottom
    CHECK_THROWS_AS(TemporalHierarchy({4, 3, 1}), std::invalid_argument); // 3 does not divide 4
    CHECK_THROWS_AS(TemporalHierarchy({4, 4, 1}), std::invalid_argument); // not descending
    CHECK_THROWS_AS(TemporalHierarchy({}), std::invalid_argument);
    const TemporalHierarchy h({12, 4, 1});
    CHECK(h.m() == 12);
    CHECK(h.stacked_size() == 16);
    CHECK(h.bottom_size() == 12);
}

TEST_CASE("aggregate basics") {
    VectorXd x(4);
    x << 1, 2, 3, 4;
    const VectorXd a = aggregate(x, 2, 1);
    REQUIRE(a.size() == 2);
    CHECK(a(0) == 3.0);
    CHECK(a(1) == 7.0);

    CHECK(aggregate(x, 1) == x);

    VectorXd ones = VectorXd::Ones(8);
    const VectorXd b = aggregate(ones, 4);
    REQUIRE(b.size() == 2);
    CHECK(b(0) == 4.0);
    CHECK(b(1) == 4.0);

    CHECK_THROWS_AS(aggregate(x.head(3), 4), EmptyAggregate);
}

TEST_CASE("aggregate respects the start offset and drops the remainder") {
    VectorXd x(7);
    x << 1, 2, 3, 4, 5, 6, 7;
    const VectorXd a = aggregate(x, 3, 2); // windows (2,3,4) and (5,6,7)
    REQUIRE(a.size() == 2);
    CHECK(a(0) == 9.0);
    CHECK(a(1) == 18.0);
}

TEST_CASE("aggregation is associative over nested factors") {
    RngStream rng(42);
    VectorXd x(48);
    for (long i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
    for (const auto [k1, k2] : {std::pair{2, 3}, std::pair{4, 2}, std::pair{3, 4}}) {
        const VectorXd once = aggregate(aggregate(x, k1), k2);
        const VectorXd direct = aggregate(x, k1 * k2);
        REQUIRE(once.size() == direct.size());
        CHECK((once - direct).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("build_hierarchy_series") {
    SECTION("length 10 with {4,1}: trailing partial period dropped") {
        VectorXd x(10);
        x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
        const HierarchySeries hs = build_hierarchy_series(x, TemporalHierarchy({4, 1}));
        CHECK(hs.n_periods == 2);
        CHECK(hs.levels[0].size() == 2);
        CHECK(hs.levels[1].size() == 8);
    }
    SECTION("explicit sums for {4,2,1}") {
        VectorXd x(8);
        x << 1, 2, 3, 4, 5, 6, 7, 8;
        const HierarchySeries hs = build_hierarchy_series(x, TemporalHierarchy({4, 2, 1}));
        REQUIRE(hs.levels[0].size() == 2);
        CHECK(hs.levels[0](0) == 10.0);
        CHECK(hs.levels[0](1) == 26.0);
        REQUIRE(hs.levels[1].size() == 4);
        CHECK(hs.levels[1](0) == 3.0);
        CHECK(hs.levels[1](1) == 7.0);
        CHECK(hs.levels[1](2) == 11.0);
        CHECK(hs.levels[1](3) == 15.0);
    }
    SECTION("too short") {
        VectorXd x(3);
        x << 1, 2, 3;
        CHECK_THROWS_AS(build_hierarchy_series(x, TemporalHierarchy({4, 1})), EmptyAggregate);
    }
}

TEST_CASE("stack_period") {
    VectorXd x(8);
    x << 1, 2, 3, 4, 5, 6, 7, 8;

    SECTION("{4,1} first period") {
        const HierarchySeries hs = build_hierarchy_series(x.head(4), TemporalHierarchy({4, 1}));
        const VectorXd v = stack_period(hs, 1);
        VectorXd expected(5);
        expected << 10, 1, 2, 3, 4;
        CHECK(v == expected);
        CHECK_THROWS_AS(stack_period(hs, 0), IndexOutOfRange);
        CHECK_THROWS_AS(stack_period(hs, 2), IndexOutOfRange);
    }
    SECTION("{4,2,1} second period") {
        const HierarchySeries hs = build_hierarchy_series(x, TemporalHierarchy({4, 2, 1}));
        const VectorXd v = stack_period(hs, 2);
        VectorXd expected(7);
        expected << 26, 11, 15, 5, 6, 7, 8;
        CHECK(v == expected);
    }
}

TEST_CASE("check_coherence") {
    const MatrixXd S = build_summing_matrix(TemporalHierarchy({4, 1}));
    VectorXd good(5), bad(5);
    good << 10, 1, 2, 3, 4;
    bad << 9, 1, 2, 3, 4;
    CHECK(check_coherence(good, S, 1e-9));
    CHECK_FALSE(check_coherence(bad, S, 1e-9));
    CHECK_THROWS_AS(check_coherence(good.head(4), S, 1e-9), DimensionMismatch);

    // any S*b is coherent by construction
    VectorXd b(4);
    b << -1.5, 2.25, 0, 7;
    CHECK(check_coherence(S * b, S, 1e-12));
}

TEST_CASE("S*1 has top entry m and bottom entries 1; stacked data is coherent") {
    RngStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const TemporalHierarchy hier(oracles::random_hierarchy(rng));
        const MatrixXd S = build_summing_matrix(hier);
        const VectorXd s1 = S * VectorXd::Ones(hier.bottom_size());
        CHECK(s1(0) == static_cast<double>(hier.m()));
        CHECK(s1.tail(hier.bottom_size()) == VectorXd::Ones(hier.bottom_size()));

        VectorXd x(hier.m() * 3);
        for (long i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
        const HierarchySeries hs = build_hierarchy_series(x, hier);
        for (int i = 1; i <= hs.n_periods; ++i)
            CHECK(check_coherence(stack_period(hs, i), S, 1e-9));
    }
}
