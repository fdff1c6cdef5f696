#include "ebcc/evalue_core.hpp"
#include "ebcc/rng.hpp"

#include <doctest.h>

#include <random>

using namespace ebcc;

namespace {

RejectionSet idx(std::initializer_list<Index> v) { return RejectionSet(v); }

// Largest k with at least k e-values above m/(alpha k), by scanning every k.
RejectionSet brute_ebh(const Vector& e, double alpha) {
    const Index m = e.size();
    for (Index k = m; k >= 1; --k) {
        const double t = static_cast<double>(m) / (alpha * static_cast<double>(k));
        RejectionSet r;
        for (Index j = 0; j < m; ++j)
            if (e(j) >= t) r.push_back(j);
        if (static_cast<Index>(r.size()) >= k) return r;
    }
    return {};
}

RejectionSet brute_bh(const Vector& p, double alpha) {
    const Index m = p.size();
    for (Index k = m; k >= 1; --k) {
        const double t = alpha * static_cast<double>(k) / static_cast<double>(m);
        RejectionSet r;
        for (Index j = 0; j < m; ++j)
            if (p(j) <= t) r.push_back(j);
        if (static_cast<Index>(r.size()) >= k) return r;
    }
    return {};
}

}  // namespace

TEST_CASE("ebh small cases") {
    CHECK(ebh(Vector{{8, 8, 0, 0}}, 0.5) == idx({0, 1}));
    CHECK(ebh(Vector::Zero(4), 0.3).empty());
    CHECK(ebh(Vector::Zero(4), 1.0).empty());
    CHECK(ebh(Vector{{2, 2, 2, 2}}, 0.5) == idx({0, 1, 2, 3}));
    CHECK(ebh(Vector(0), 0.1).empty());
}

TEST_CASE("ebh rejects bad input") {
    CHECK_THROWS_AS(ebh(Vector{{1.0}}, 0.0), std::domain_error);
    CHECK_THROWS_AS(ebh(Vector{{1.0}}, 1.5), std::domain_error);
    CHECK_THROWS_AS(ebh(Vector{{-1.0}}, 0.1), std::domain_error);
    CHECK_THROWS_AS(ebh(Vector{{std::nan("")}}, 0.1), std::domain_error);
}

TEST_CASE("ebh exact ties at decimal levels") {
    // 10/(0.1*5) = 20 is not exact in binary; the tie must still count.
    Vector e = Vector::Zero(10);
    e.head(5).setConstant(20.0);
    CHECK(ebh(e, 0.1).size() == 5);
}

TEST_CASE("ebh matches brute force and is monotone") {
    Rng rng(11);
    std::exponential_distribution<double> ex(0.05);
    std::uniform_int_distribution<int> mdist(1, 30);
    for (int rep = 0; rep < 500; ++rep) {
        const Index m = mdist(rng);
        Vector e(m);
        for (Index j = 0; j < m; ++j) e(j) = (rng() % 3 == 0) ? 0.0 : ex(rng);
        for (double a : {0.05, 0.1, 0.3}) {
            const RejectionSet r = ebh(e, a);
            CHECK(r == brute_ebh(e, a));
            // Raising any e-value never shrinks the rejection set.
            Vector up = e;
            up(rng() % m) *= 3.0;
            CHECK(is_subset(r, ebh(up, a)));
            // Nor does raising alpha.
            CHECK(is_subset(r, ebh(e, std::min(1.0, 2 * a))));
            // Every rejection meets the self-consistency bound.
            for (Index j : r) CHECK(e(j) * a * static_cast<double>(r.size()) >= static_cast<double>(m) * (1 - 1e-12));
        }
    }
}

TEST_CASE("bh small cases") {
    CHECK(bh(Vector{{0.01, 0.2, 0.6, 0.9}}, 0.5) == idx({0, 1}));
    CHECK(bh(Vector{{1.0, 1.0}}, 0.5).empty());
    CHECK(bh(Vector{{0.04}}, 0.05) == idx({0}));
    CHECK_THROWS_AS(bh(Vector{{0.5}}, 0.0), std::domain_error);
    CHECK_THROWS_AS(bh(Vector{{-0.5}}, 0.1), std::domain_error);
}

TEST_CASE("bh matches brute force and equals ebh on 1/p") {
    Rng rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 500; ++rep) {
        const Index m = 1 + rng() % 40;
        Vector p(m);
        for (Index j = 0; j < m; ++j) p(j) = std::pow(u(rng), 3.0);
        for (double a : {0.05, 0.2}) {
            CHECK(bh(p, a) == brute_bh(p, a));
            CHECK(bh(p, a) == ebh(p.cwiseInverse(), a));
        }
    }
}

TEST_CASE("metrics") {
    const std::vector<bool> nulls{false, true, false};
    Metrics z = metrics({}, nulls);
    CHECK(z.fdp == 0.0);
    CHECK(z.power == 0.0);
    Metrics a = metrics({0, 1}, nulls);
    CHECK(a.fdp == 0.5);
    CHECK(a.power == 0.5);
    Metrics b = metrics({0, 2}, nulls);
    CHECK(b.fdp == 0.0);
    CHECK(b.power == 1.0);
    CHECK_THROWS_AS(metrics({5}, nulls), std::out_of_range);
}
