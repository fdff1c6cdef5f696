#pragma once

#include "ebcc/confidence.hpp"
#include "ebcc/evalue_core.hpp"
#include "ebcc/rng.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace ebcc {

struct Atom {
    Vector evalues;
    double probability;
};

// Conditional law of the whole e-value vector given S_j, under H_j.
class Resampler {
public:
    explicit Resampler(Index j) : j_(j) {}
    virtual ~Resampler() = default;

    Index hypothesis() const { return j_; }

    virtual Vector draw(Rng& rng) const = 0;
    // Finite enumeration of the law, when one exists.
    virtual std::optional<std::vector<Atom>> exact_support() const { return std::nullopt; }
    // E[e~_j | S_j] when known in closed form.
    virtual std::optional<double> conditional_budget() const { return std::nullopt; }
    // Almost-sure upper bound on e~_j, when known.
    virtual std::optional<double> evalue_bound() const { return std::nullopt; }

private:
    Index j_;
};

using ResamplerFactory = std::function<std::unique_ptr<Resampler>(Index j)>;

enum class BoostMode { Avcs, Ci, Exact };

struct CCConfig {
    double alpha = 0.05;
    double alpha_cc = 0.05;
    double alpha0 = 0.005;
    long batch_size = 100;
    long exact_cs_budget = 3000;
    long asymptotic_cs_budget = 2000;
    int rounds = 1;
    BoostMode mode = BoostMode::Avcs;
    long ci_samples = 1000;
    int threads = 1;

    void validate() const;
};

enum class Decision { Boosted, NotBoosted, Skipped };

struct BoostOutcome {
    Decision decision = Decision::Skipped;
    long samples_used = 0;
    Interval interval;
    double value = 0.0;  // e_j^boost
};

struct McSample {
    double indicator_term;
    double difference_term;
};

// Evaluates Monte-Carlo terms for one hypothesis against a fixed observed
// vector. The indicator 1{c~ e~_j >= m / (a |R_j(e~)|)} is checked as
// e~_j |R_j(e~)| >= e_j |R_j(e)|, with R_j(x) = e-BH(x) united with {j}.
class BoostProblem {
public:
    // target drives the indicator and R_j; budget is the original e-value
    // vector, and the subtracted term is e~_j of the unmapped resample. map
    // sends a resampled vector to its target version (identity when empty).
    BoostProblem(const Vector& target, const Vector& budget, Index j, double alpha_cc,
                 std::function<Vector(const Vector&)> map = nullptr);

    McSample sample(const Vector& e_tilde) const;
    double boosted_value() const { return boosted_value_; }
    double upper_indicator() const { return static_cast<double>(m_) / alpha_cc_; }
    Index hypothesis() const { return j_; }
    Index rhat_size() const { return rhat_; }
    bool in_rejection_set() const { return in_r_; }

private:
    Index m_, j_;
    double alpha_cc_;
    double tj_;
    Index rhat_;
    bool in_r_;
    double boosted_value_;
    std::function<Vector(const Vector&)> map_;
};

// |e-BH(x) united with {j}|
Index rhat_size(const Vector& x, Index j, double alpha);

McSample mc_sample(const Vector& e, Index j, const Vector& e_tilde, double alpha_cc);

double phi_exact(const Vector& e, Index j, const Resampler& resampler, double alpha_cc);

enum class BudgetMode { Difference, AnalyticBudget };
BudgetMode budget_mode_select(const Resampler& resampler);

BoostOutcome boost_ci(const Vector& e, Index j, const Resampler& resampler, const CCConfig& cfg, long k,
                      double alpha_ci, Rng& rng);

BoostOutcome boost_avcs(const Vector& e, Index j, const Resampler& resampler, const CCConfig& cfg,
                        double alpha_avcs, Rng& rng);

BoostOutcome boost_exact(const Vector& e, Index j, const Resampler& resampler, const CCConfig& cfg);

// Doubly-boosted decision: indicator from the target vector (target = map(e)),
// budget from the original e-values.
BoostOutcome boost_with_budget(const Vector& target, const Vector& budget, Index j, const Resampler& resampler,
                               const std::function<Vector(const Vector&)>& map, const CCConfig& cfg,
                               double alpha_avcs, Rng& rng);

Vector apply_mask(const Vector& e_boost, const std::vector<Index>& mask);

struct CCResult {
    RejectionSet rejections;
    std::vector<BoostOutcome> outcomes;  // one per hypothesis
    Vector boosted;                      // masked boosted e-values
};

// Full e-BH-CC pipeline. mask = nullopt means every hypothesis is a candidate;
// the e-BH rejections are always added to it. seed keys the per-hypothesis
// streams, so the output does not depend on cfg.threads.
CCResult ebhcc(const Vector& e, const ResamplerFactory& resamplers, const CCConfig& cfg,
               const std::optional<std::vector<Index>>& mask, std::uint64_t seed);

// Same pipeline for the doubly-boosted variant: target = map(e).
CCResult ebhcc_with_budget(const Vector& e, const std::function<Vector(const Vector&)>& map,
                           const ResamplerFactory& resamplers, const CCConfig& cfg,
                           const std::optional<std::vector<Index>>& mask, std::uint64_t seed);

// A problem instance whose conditional laws enumerate as finite mixtures of
// child instances; needed for multi-round calibration, where round t reruns
// round t-1 on every resampled instance.
class ExactInstance {
public:
    virtual ~ExactInstance() = default;
    virtual Vector evalues() const = 0;
    virtual std::vector<std::pair<std::shared_ptr<const ExactInstance>, double>> children(Index j) const = 0;
    // Identical keys mean identical instances.
    virtual std::string key() const = 0;
};

// R^(1), ..., R^(rounds) of multi-round conditional calibration.
std::vector<RejectionSet> cc_rounds_exact(const ExactInstance& inst, const CCConfig& cfg);

}  // namespace ebcc
