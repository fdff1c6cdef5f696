#include "ebcc/calibration.hpp"
#include "ebcc/parallel.hpp"
#include "ebcc/special.hpp"

#include <cmath>
#include <unordered_map>

namespace ebcc {

void CCConfig::validate() const {
    check_level(alpha, "alpha", true);
    check_level(alpha_cc, "alpha_cc", true);
    check_level(alpha0, "alpha0");
    if (batch_size < 1) throw std::domain_error("batch_size must be at least 1");
    if (exact_cs_budget < 0 || asymptotic_cs_budget < 0) throw std::domain_error("CS budgets must be nonnegative");
    if (rounds < 1) throw std::domain_error("rounds must be at least 1");
    if (mode == BoostMode::Ci && ci_samples < 2) throw std::domain_error("ci_samples must be at least 2");
}

Index rhat_size(const Vector& x, Index j, double alpha) {
    EbhCut cut = ebh_cut(x, alpha);
    return cut.k + (cut.k > 0 && meets(x(j), cut.threshold) ? 0 : 1);
}

BoostProblem::BoostProblem(const Vector& target, const Vector& budget, Index j, double alpha_cc,
                           std::function<Vector(const Vector&)> map)
    : m_(target.size()), j_(j), alpha_cc_(alpha_cc), tj_(target(j)), map_(std::move(map)) {
    if (j < 0 || j >= m_) throw std::out_of_range("hypothesis index");
    if (budget.size() != m_) throw std::invalid_argument("target and budget differ in length");
    if (!(budget(j) > 0.0) || !(tj_ > 0.0)) throw std::invalid_argument("boosting needs e_j > 0");
    rhat_ = ebcc::rhat_size(target, j, alpha_cc);
    in_r_ = contains(ebh(budget, alpha_cc), j);
    boosted_value_ = static_cast<double>(m_) / (alpha_cc * static_cast<double>(rhat_));
}

McSample BoostProblem::sample(const Vector& e_tilde) const {
    if (e_tilde.size() != m_) throw std::invalid_argument("resample has the wrong length");
    const Vector mapped = map_ ? map_(e_tilde) : Vector();
    const Vector& t = map_ ? mapped : e_tilde;
    const Index r = ebcc::rhat_size(t, j_, alpha_cc_);
    const bool hit = meets(t(j_) * static_cast<double>(r), tj_ * static_cast<double>(rhat_));
    const double ind = hit ? static_cast<double>(m_) / alpha_cc_ / static_cast<double>(r) : 0.0;
    return {ind, ind - e_tilde(j_)};
}

McSample mc_sample(const Vector& e, Index j, const Vector& e_tilde, double alpha_cc) {
    return BoostProblem(e, e, j, alpha_cc).sample(e_tilde);
}

namespace {

double phi_of(const BoostProblem& prob, const std::vector<Atom>& support) {
    double phi = 0.0, total = 0.0;
    for (const Atom& a : support) {
        phi += a.probability * prob.sample(a.evalues).difference_term;
        total += a.probability;
    }
    if (std::abs(total - 1.0) > 1e-12 * std::max<std::size_t>(support.size(), 1))
        throw std::domain_error("exact support probabilities do not sum to one");
    return phi;
}

std::vector<Atom> support_of(const Resampler& r) {
    auto s = r.exact_support();
    if (!s) throw UnsupportedError("resampler has no exact support");
    return std::move(*s);
}

BoostOutcome shortcut(const BoostProblem& prob) {
    BoostOutcome out;
    out.decision = Decision::Boosted;
    out.value = prob.boosted_value();
    return out;
}

BoostOutcome finish(const BoostProblem& prob, bool boosted, long samples, Interval iv) {
    BoostOutcome out;
    out.decision = boosted ? Decision::Boosted : Decision::NotBoosted;
    out.value = boosted ? prob.boosted_value() : 0.0;
    out.samples_used = samples;
    out.interval = iv;
    return out;
}

BoostOutcome run_avcs(const BoostProblem& prob, const Resampler& resampler, const CCConfig& cfg, double alpha_avcs,
                      Rng& rng) {
    if (prob.in_rejection_set()) return shortcut(prob);
    if (!(alpha_avcs > 0.0)) return finish(prob, false, 0, {});
    HybridOptions opt;
    opt.alpha = std::min(alpha_avcs, 0.5);
    opt.exact_budget = cfg.exact_cs_budget;
    opt.asymptotic_budget = cfg.asymptotic_cs_budget;
    opt.batch_size = cfg.batch_size;
    std::function<double()> draw;
    if (auto b = resampler.conditional_budget()) {
        opt.bounds = std::make_pair(0.0, prob.upper_indicator());
        opt.target = *b;
        draw = [&] { return prob.sample(resampler.draw(rng)).indicator_term; };
    } else {
        opt.target = 0.0;
        draw = [&] { return prob.sample(resampler.draw(rng)).difference_term; };
    }
    HybridResult res = hybrid_cs(draw, opt);
    return finish(prob, res.reason == StopReason::Boost, res.samples, res.interval);
}

BoostOutcome run_ci(const BoostProblem& prob, const Resampler& resampler, long k, double alpha_ci, Rng& rng) {
    if (prob.in_rejection_set()) return shortcut(prob);
    Vector xs(k);
    const auto budget = resampler.conditional_budget();
    for (Index i = 0; i < k; ++i) {
        McSample s = prob.sample(resampler.draw(rng));
        xs(i) = budget ? s.indicator_term : s.difference_term;
    }
    Interval iv;
    double target = 0.0;
    if (budget) {
        iv = bernstein_ci(xs, 0.0, prob.upper_indicator(), alpha_ci);
        target = *budget;
    } else if (auto bound = resampler.evalue_bound()) {
        iv = bernstein_ci(xs, -*bound, prob.upper_indicator(), alpha_ci);
    } else {
        // No range for the difference samples: fall back to a normal interval.
        const double mean = xs.mean();
        const double sd = std::sqrt((xs.array() - mean).square().sum() / static_cast<double>(k - 1));
        double half = normal_quantile(1.0 - alpha_ci / 2.0) * sd / std::sqrt(static_cast<double>(k));
        half = std::max(half, 1e-12 * (1.0 + std::abs(mean)));
        iv = {mean - half, mean + half};
    }
    return finish(prob, iv.upper <= target, k, iv);
}

}  // namespace

double phi_exact(const Vector& e, Index j, const Resampler& resampler, double alpha_cc) {
    return phi_of(BoostProblem(e, e, j, alpha_cc), support_of(resampler));
}

BudgetMode budget_mode_select(const Resampler& resampler) {
    return resampler.conditional_budget() ? BudgetMode::AnalyticBudget : BudgetMode::Difference;
}

BoostOutcome boost_ci(const Vector& e, Index j, const Resampler& resampler, const CCConfig& cfg, long k,
                      double alpha_ci, Rng& rng) {
    if (e(j) == 0.0) return {};
    if (k < 2) throw std::domain_error("boost_ci needs at least two samples");
    return run_ci(BoostProblem(e, e, j, cfg.alpha_cc), resampler, k, alpha_ci, rng);
}

BoostOutcome boost_avcs(const Vector& e, Index j, const Resampler& resampler, const CCConfig& cfg,
                        double alpha_avcs, Rng& rng) {
    if (e(j) == 0.0) return {};
    return run_avcs(BoostProblem(e, e, j, cfg.alpha_cc), resampler, cfg, alpha_avcs, rng);
}

BoostOutcome boost_exact(const Vector& e, Index j, const Resampler& resampler, const CCConfig& cfg) {
    if (e(j) == 0.0) return {};
    BoostProblem prob(e, e, j, cfg.alpha_cc);
    if (prob.in_rejection_set()) return shortcut(prob);
    const double phi = phi_of(prob, support_of(resampler));
    const double tol = 1e-12 * prob.upper_indicator();
    return finish(prob, phi <= tol, 0, {phi, phi});
}

BoostOutcome boost_with_budget(const Vector& target, const Vector& budget, Index j, const Resampler& resampler,
                               const std::function<Vector(const Vector&)>& map, const CCConfig& cfg,
                               double alpha_avcs, Rng& rng) {
    if (budget(j) == 0.0 || target(j) == 0.0) return {};
    return run_avcs(BoostProblem(target, budget, j, cfg.alpha_cc, map), resampler, cfg, alpha_avcs, rng);
}

Vector apply_mask(const Vector& e_boost, const std::vector<Index>& mask) {
    Vector out = Vector::Zero(e_boost.size());
    for (Index j : mask) {
        if (j < 0 || j >= e_boost.size()) throw std::out_of_range("mask index");
        out(j) = e_boost(j);
    }
    return out;
}

namespace {

CCResult run_pipeline(const Vector& e, const std::function<Vector(const Vector&)>& map,
                      const ResamplerFactory& resamplers, const CCConfig& cfg,
                      const std::optional<std::vector<Index>>& mask, std::uint64_t seed) {
    cfg.validate();
    check_evalues(e);
    const Index m = e.size();
    const Vector target = map ? map(e) : e;
    const RejectionSet base = ebh(e, cfg.alpha);

    std::vector<Index> cand;
    if (mask) {
        cand = *mask;
        cand.insert(cand.end(), base.begin(), base.end());
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    } else {
        cand.resize(m);
        for (Index j = 0; j < m; ++j) cand[j] = j;
    }

    CCResult out;
    out.outcomes.assign(m, BoostOutcome{});
    out.boosted = Vector::Zero(m);
    const double n_cand = static_cast<double>(std::max<std::size_t>(cand.size(), 1));

    parallel_for(static_cast<long>(cand.size()), cfg.threads, [&](long i) {
        const Index j = cand[i];
        if (j < 0 || j >= m) throw std::out_of_range("mask index");
        if (e(j) == 0.0 || target(j) == 0.0) return;
        BoostProblem prob(target, e, j, cfg.alpha_cc, map);
        BoostOutcome o;
        if (prob.in_rejection_set()) {
            o = shortcut(prob);
        } else {
            auto r = resamplers(j);
            // Each candidate spends a share of alpha0 proportional to |R_j|,
            // which cancels the m / (alpha |R_j|) size of a wrong boost.
            const double a = cfg.alpha0 * (cfg.alpha_cc / cfg.alpha) * static_cast<double>(prob.rhat_size()) / n_cand;
            Rng rng = make_stream({seed, static_cast<std::uint64_t>(j)});
            switch (cfg.mode) {
                case BoostMode::Avcs: o = run_avcs(prob, *r, cfg, a, rng); break;
                case BoostMode::Ci: o = run_ci(prob, *r, cfg.ci_samples, a, rng); break;
                case BoostMode::Exact: {
                    const double phi = phi_of(prob, support_of(*r));
                    o = finish(prob, phi <= 1e-12 * prob.upper_indicator(), 0, {phi, phi});
                    break;
                }
            }
        }
        out.outcomes[j] = o;
        out.boosted(j) = o.value;
    });
    out.rejections = ebh(out.boosted, cfg.alpha);
    return out;
}

}  // namespace

CCResult ebhcc(const Vector& e, const ResamplerFactory& resamplers, const CCConfig& cfg,
               const std::optional<std::vector<Index>>& mask, std::uint64_t seed) {
    return run_pipeline(e, nullptr, resamplers, cfg, mask, seed);
}

CCResult ebhcc_with_budget(const Vector& e, const std::function<Vector(const Vector&)>& map,
                           const ResamplerFactory& resamplers, const CCConfig& cfg,
                           const std::optional<std::vector<Index>>& mask, std::uint64_t seed) {
    return run_pipeline(e, map, resamplers, cfg, mask, seed);
}

namespace {

class RoundSolver {
public:
    explicit RoundSolver(const CCConfig& cfg) : cfg_(cfg) {}

    // R^(t) of an instance; R^(0) is plain e-BH at the calibration level.
    const RejectionSet& rounds(const ExactInstance& inst, int t) {
        // References into an unordered_map survive rehashing.
        auto& memo = memo_[inst.key()];
        while (static_cast<int>(memo.size()) <= t) {
            const int s = static_cast<int>(memo.size());
            RejectionSet next = s == 0 ? ebh(inst.evalues(), cfg_.alpha_cc) : step(inst, s - 1);
            memo.push_back(std::move(next));
        }
        return memo[t];
    }

private:
    static Index rhat(const RejectionSet& r, Index j) { return static_cast<Index>(r.size()) + (contains(r, j) ? 0 : 1); }

    // R^(t+1) from round-t decisions.
    RejectionSet step(const ExactInstance& inst, int t) {
        const Vector e = inst.evalues();
        const Index m = e.size();
        const double scale = static_cast<double>(m) / cfg_.alpha_cc;
        const RejectionSet r0 = rounds(inst, 0);
        const RejectionSet rt = rounds(inst, t);
        Vector boosted = Vector::Zero(m);
        for (Index j = 0; j < m; ++j) {
            if (e(j) == 0.0) continue;
            const double lhs0 = e(j) * static_cast<double>(rhat(r0, j));
            double phi = 0.0;
            for (const auto& [child, p] : inst.children(j)) {
                const Vector et = child->evalues();
                const bool hit = meets(et(j) * static_cast<double>(rhat(rounds(*child, 0), j)), lhs0);
                const double ind = hit ? scale / static_cast<double>(rhat(rounds(*child, t), j)) : 0.0;
                phi += p * (ind - et(j));
            }
            if (phi <= 1e-12 * scale) boosted(j) = scale / static_cast<double>(rhat(rt, j));
        }
        return ebh(boosted, cfg_.alpha);
    }

    const CCConfig& cfg_;
    std::unordered_map<std::string, std::vector<RejectionSet>> memo_;
};

}  // namespace

std::vector<RejectionSet> cc_rounds_exact(const ExactInstance& inst, const CCConfig& cfg) {
    cfg.validate();
    RoundSolver solver(cfg);
    std::vector<RejectionSet> out;
    for (int t = 1; t <= cfg.rounds; ++t) out.push_back(solver.rounds(inst, t));
    return out;
}

}  // namespace ebcc
