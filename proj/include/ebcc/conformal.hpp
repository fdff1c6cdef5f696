#pragma once

#include "ebcc/calibration.hpp"

#include <limits>

namespace ebcc {

struct WeightedInstance {
    Vector calib_scores;
    Vector calib_weights;
    Vector test_scores;
    Vector test_weights;

    Index n() const { return calib_scores.size(); }
    Index m() const { return test_scores.size(); }
    bool unit_weights() const;
    void validate() const;

    static WeightedInstance unit(const Vector& calib, const Vector& test);
};

inline constexpr double kNoScoreThreshold = std::numeric_limits<double>::infinity();

Vector conformal_pvalues(const WeightedInstance& inst);
Vector weighted_pvalues(const WeightedInstance& inst);

double conformal_threshold(const WeightedInstance& inst, double alpha);
Vector conformal_evalues(const WeightedInstance& inst, double threshold);

// T_j = inf{t : m/(w_j + W) (w_j + sum_i w_i 1{V_i >= t}) / (#{tests >= t} v 1) <= alpha}
Vector weighted_thresholds(const WeightedInstance& inst, double alpha);
// Companion thresholds with test j counted through its own weight:
// inf{t : m/(w_j + W) (w_j 1{V_{n+j} >= t} + sum_i w_i 1{V_i >= t}) / (1 + #{k != j : V_{n+k} >= t}) <= alpha}
Vector weighted_thresholds_alt(const WeightedInstance& inst, double alpha);
Vector weighted_evalues(const WeightedInstance& inst, const Vector& thresholds);
Vector weighted_conformal_evalues(const WeightedInstance& inst, double alpha);

// e-values of weighted conformal selection, which the conformal e-values dominate.
Vector wcs_evalues(const WeightedInstance& inst, double alpha);

struct ScoredUnit {
    double score;
    double weight;
    auto operator<=>(const ScoredUnit&) const = default;
};

struct BagStatistic {
    std::vector<ScoredUnit> bag;          // calibration units plus test j, sorted
    std::vector<ScoredUnit> other_tests;  // remaining tests, in order
    bool operator==(const BagStatistic&) const = default;
};

BagStatistic bag_statistic(const WeightedInstance& inst, Index j);

// Instance with test slot j holding `pick` and the rest of the bag as calibration data.
WeightedInstance rearranged(const BagStatistic& s, Index j, const ScoredUnit& pick);

// Test unit j drawn from its bag with probability proportional to weight.
// The law has at most n + 1 atoms, enumerated up front.
class ConformalResampler : public Resampler {
public:
    ConformalResampler(const WeightedInstance& inst, Index j, double alpha);
    Vector draw(Rng& rng) const override;
    std::optional<std::vector<Atom>> exact_support() const override { return atoms_; }
    std::optional<double> conditional_budget() const override { return 1.0; }
    std::optional<double> evalue_bound() const override { return bound_; }

    // Draws the rearranged instance itself.
    WeightedInstance draw_instance(Rng& rng) const;

private:
    BagStatistic stat_;
    std::vector<ScoredUnit> units_;
    std::vector<Atom> atoms_;
    std::vector<double> cumulative_;
    double bound_ = 0.0;
};

class ConformalExactInstance : public ExactInstance {
public:
    ConformalExactInstance(WeightedInstance inst, double alpha);
    Vector evalues() const override { return e_; }
    std::vector<std::pair<std::shared_ptr<const ExactInstance>, double>> children(Index j) const override;
    std::string key() const override { return key_; }

private:
    WeightedInstance inst_;
    double alpha_;
    Vector e_;
    std::string key_;
};

}  // namespace ebcc
