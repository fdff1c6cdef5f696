#include "ebcc/conformal.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <bit>
#include <cstdio>

namespace ebcc {

bool WeightedInstance::unit_weights() const {
    return (calib_weights.array() == 1.0).all() && (test_weights.array() == 1.0).all();
}

void WeightedInstance::validate() const {
    if (calib_weights.size() != n() || test_weights.size() != m())
        throw std::invalid_argument("scores and weights differ in length");
    if (m() < 1) throw std::invalid_argument("need at least one test unit");
    auto ok = [](const Vector& w) { return w.allFinite() && (w.array() > 0.0).all(); };
    if (!ok(calib_weights) || !ok(test_weights)) throw std::domain_error("weights must be positive and finite");
    if (!calib_scores.allFinite() || !test_scores.allFinite()) throw std::domain_error("scores must be finite");
}

WeightedInstance WeightedInstance::unit(const Vector& calib, const Vector& test) {
    return {calib, Vector::Ones(calib.size()), test, Vector::Ones(test.size())};
}

namespace {

// Weighted calibration mass and test counts at or above each distinct score.
struct ScoreTable {
    std::vector<double> grid;
    std::vector<double> mass;
    std::vector<Index> tests;
    double total = 0.0;

    explicit ScoreTable(const WeightedInstance& inst) {
        const Index n = inst.n(), m = inst.m();
        grid.reserve(n + m);
        for (Index i = 0; i < n; ++i) grid.push_back(inst.calib_scores(i));
        for (Index k = 0; k < m; ++k) grid.push_back(inst.test_scores(k));
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        const std::size_t g = grid.size();
        std::vector<double> at(g, 0.0);
        std::vector<Index> cnt(g, 0);
        for (Index i = 0; i < n; ++i) at[slot(inst.calib_scores(i))] += inst.calib_weights(i);
        for (Index k = 0; k < m; ++k) ++cnt[slot(inst.test_scores(k))];
        mass.assign(g + 1, 0.0);
        tests.assign(g + 1, 0);
        for (std::size_t s = g; s-- > 0;) {
            mass[s] = mass[s + 1] + at[s];
            tests[s] = tests[s + 1] + cnt[s];
        }
        total = mass[0];
    }

    std::size_t slot(double v) const { return std::lower_bound(grid.begin(), grid.end(), v) - grid.begin(); }
    // Calibration mass with score >= v.
    double mass_above(double v) const { return mass[slot(v)]; }
};

void check_alpha(double alpha) { check_level(alpha, "alpha", true); }

}  // namespace

Vector weighted_pvalues(const WeightedInstance& inst) {
    inst.validate();
    const ScoreTable tab(inst);
    Vector p(inst.m());
    for (Index j = 0; j < inst.m(); ++j) {
        const double w = inst.test_weights(j);
        p(j) = (w + tab.mass_above(inst.test_scores(j))) / (w + tab.total);
    }
    return p;
}

Vector conformal_pvalues(const WeightedInstance& inst) {
    if (!inst.unit_weights()) throw std::invalid_argument("conformal p-values need unit weights");
    return weighted_pvalues(inst);
}

Vector weighted_thresholds(const WeightedInstance& inst, double alpha) {
    inst.validate();
    check_alpha(alpha);
    const ScoreTable tab(inst);
    const double m = static_cast<double>(inst.m());
    Vector t = Vector::Constant(inst.m(), kNoScoreThreshold);
    for (Index j = 0; j < inst.m(); ++j) {
        const double w = inst.test_weights(j);
        for (std::size_t s = 0; s < tab.grid.size(); ++s) {
            const double tests = static_cast<double>(std::max<Index>(tab.tests[s], 1));
            if (within(m * (w + tab.mass[s]), alpha * (w + tab.total) * tests)) {
                t(j) = tab.grid[s];
                break;
            }
        }
    }
    return t;
}

Vector weighted_thresholds_alt(const WeightedInstance& inst, double alpha) {
    inst.validate();
    check_alpha(alpha);
    const ScoreTable tab(inst);
    const double m = static_cast<double>(inst.m());
    Vector t = Vector::Constant(inst.m(), kNoScoreThreshold);
    for (Index j = 0; j < inst.m(); ++j) {
        const double w = inst.test_weights(j);
        const double v = inst.test_scores(j);
        for (std::size_t s = 0; s < tab.grid.size(); ++s) {
            const bool self = v >= tab.grid[s];
            const double num = (self ? w : 0.0) + tab.mass[s];
            const double den = 1.0 + static_cast<double>(tab.tests[s] - (self ? 1 : 0));
            if (within(m * num, alpha * (w + tab.total) * den)) {
                t(j) = tab.grid[s];
                break;
            }
        }
    }
    return t;
}

Vector weighted_evalues(const WeightedInstance& inst, const Vector& thresholds) {
    inst.validate();
    if (thresholds.size() != inst.m()) throw std::invalid_argument("one threshold per test unit");
    const ScoreTable tab(inst);
    Vector e = Vector::Zero(inst.m());
    for (Index j = 0; j < inst.m(); ++j) {
        const double t = thresholds(j);
        if (t == kNoScoreThreshold || inst.test_scores(j) < t) continue;
        const double w = inst.test_weights(j);
        e(j) = (w + tab.total) / (w + tab.mass_above(t));
    }
    return e;
}

Vector weighted_conformal_evalues(const WeightedInstance& inst, double alpha) {
    return weighted_evalues(inst, weighted_thresholds(inst, alpha));
}

double conformal_threshold(const WeightedInstance& inst, double alpha) {
    if (!inst.unit_weights()) throw std::invalid_argument("conformal threshold needs unit weights");
    return weighted_thresholds(inst, alpha)(0);
}

Vector conformal_evalues(const WeightedInstance& inst, double threshold) {
    if (!inst.unit_weights()) throw std::invalid_argument("conformal e-values need unit weights");
    return weighted_evalues(inst, Vector::Constant(inst.m(), threshold));
}

Vector wcs_evalues(const WeightedInstance& inst, double alpha) {
    inst.validate();
    check_alpha(alpha);
    const ScoreTable tab(inst);
    const Index m = inst.m();
    const Vector p = weighted_pvalues(inst);
    Vector e = Vector::Zero(m);
    Vector pj(m);
    for (Index j = 0; j < m; ++j) {
        const double wj = inst.test_weights(j), vj = inst.test_scores(j);
        // Test j joins the calibration set when scoring the others.
        for (Index l = 0; l < m; ++l) {
            const double vl = inst.test_scores(l);
            pj(l) = (tab.mass_above(vl) + (vj >= vl ? wj : 0.0)) / (tab.total + wj);
        }
        pj(j) = 0.0;
        const double r = static_cast<double>(bh(pj, alpha).size());
        const double cut = alpha * r / static_cast<double>(m);
        if (within(p(j), cut)) e(j) = 1.0 / cut;
    }
    return e;
}

BagStatistic bag_statistic(const WeightedInstance& inst, Index j) {
    inst.validate();
    if (j < 0 || j >= inst.m()) throw std::out_of_range("test index");
    BagStatistic s;
    for (Index i = 0; i < inst.n(); ++i) s.bag.push_back({inst.calib_scores(i), inst.calib_weights(i)});
    s.bag.push_back({inst.test_scores(j), inst.test_weights(j)});
    std::sort(s.bag.begin(), s.bag.end());
    for (Index k = 0; k < inst.m(); ++k)
        if (k != j) s.other_tests.push_back({inst.test_scores(k), inst.test_weights(k)});
    return s;
}

WeightedInstance rearranged(const BagStatistic& s, Index j, const ScoredUnit& pick) {
    const Index n = static_cast<Index>(s.bag.size()) - 1;
    const Index m = static_cast<Index>(s.other_tests.size()) + 1;
    WeightedInstance out{Vector(n), Vector(n), Vector(m), Vector(m)};
    bool used = false;
    Index i = 0;
    for (const ScoredUnit& u : s.bag) {
        if (!used && u == pick) {
            used = true;
            continue;
        }
        if (i == n) break;
        out.calib_scores(i) = u.score;
        out.calib_weights(i) = u.weight;
        ++i;
    }
    if (!used) throw std::invalid_argument("picked unit is not in the bag");
    for (Index k = 0, o = 0; k < m; ++k) {
        const ScoredUnit& u = k == j ? pick : s.other_tests[o++];
        out.test_scores(k) = u.score;
        out.test_weights(k) = u.weight;
    }
    return out;
}

ConformalResampler::ConformalResampler(const WeightedInstance& inst, Index j, double alpha)
    : Resampler(j), stat_(bag_statistic(inst, j)) {
    check_alpha(alpha);
    double total = 0.0;
    for (const ScoredUnit& u : stat_.bag) total += u.weight;
    // The bag is sorted, so identical units are adjacent.
    double acc = 0.0;
    for (std::size_t i = 0; i < stat_.bag.size();) {
        std::size_t k = i;
        double w = 0.0;
        while (k < stat_.bag.size() && stat_.bag[k] == stat_.bag[i]) w += stat_.bag[k++].weight;
        const Vector e = weighted_conformal_evalues(rearranged(stat_, j, stat_.bag[i]), alpha);
        bound_ = std::max(bound_, e(j));
        atoms_.push_back({e, w / total});
        units_.push_back(stat_.bag[i]);
        acc += w / total;
        cumulative_.push_back(acc);
        i = k;
    }
}

namespace {

std::size_t pick_atom(const std::vector<double>& cumulative, Rng& rng) {
    const double u = boost::random::uniform_real_distribution<double>(0.0, cumulative.back())(rng);
    const std::size_t k = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    return std::min(k, cumulative.size() - 1);
}

}  // namespace

Vector ConformalResampler::draw(Rng& rng) const { return atoms_[pick_atom(cumulative_, rng)].evalues; }

WeightedInstance ConformalResampler::draw_instance(Rng& rng) const {
    return rearranged(stat_, hypothesis(), units_[pick_atom(cumulative_, rng)]);
}

namespace {

std::string encode(const WeightedInstance& inst) {
    std::vector<ScoredUnit> calib;
    for (Index i = 0; i < inst.n(); ++i) calib.push_back({inst.calib_scores(i), inst.calib_weights(i)});
    std::sort(calib.begin(), calib.end());
    std::string key;
    char buf[40];
    auto put = [&](const ScoredUnit& u) {
        std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(u.score)),
                      static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(u.weight)));
        key += buf;
    };
    for (Index k = 0; k < inst.m(); ++k) put({inst.test_scores(k), inst.test_weights(k)});
    key += '|';
    for (const ScoredUnit& u : calib) put(u);
    return key;
}

}  // namespace

ConformalExactInstance::ConformalExactInstance(WeightedInstance inst, double alpha)
    : inst_(std::move(inst)), alpha_(alpha), e_(weighted_conformal_evalues(inst_, alpha)), key_(encode(inst_)) {}

std::vector<std::pair<std::shared_ptr<const ExactInstance>, double>> ConformalExactInstance::children(Index j) const {
    const BagStatistic s = bag_statistic(inst_, j);
    double total = 0.0;
    for (const ScoredUnit& u : s.bag) total += u.weight;
    std::vector<std::pair<std::shared_ptr<const ExactInstance>, double>> out;
    for (std::size_t i = 0; i < s.bag.size();) {
        std::size_t k = i;
        double w = 0.0;
        while (k < s.bag.size() && s.bag[k] == s.bag[i]) w += s.bag[k++].weight;
        out.emplace_back(std::make_shared<ConformalExactInstance>(rearranged(s, j, s.bag[i]), alpha_), w / total);
        i = k;
    }
    return out;
}

}  // namespace ebcc
