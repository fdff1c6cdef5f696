#include "ebcc/conformal.hpp"
#include "ebcc/harness.hpp"
#include "ebcc/knockoffs.hpp"
#include "ebcc/parallel.hpp"
#include "ebcc/parametric.hpp"
#include "ebcc/special.hpp"

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace ebcc {

namespace {

// ---- config parsing ----

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x))
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

long long to_int(const std::string& key, const std::string& v) {
    long long x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

double level(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (!(x > 0.0 && x < 1.0)) throw ConfigError(key + " must lie in (0,1), got " + v);
    return x;
}

long long at_least(const std::string& key, const std::string& v, long long lo) {
    const long long x = to_int(key, v);
    if (x < lo) throw ConfigError(key + " must be at least " + std::to_string(lo) + ", got " + v);
    return x;
}

double positive(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (!(x > 0.0)) throw ConfigError(key + " must be positive, got " + v);
    return x;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"kind",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             static const std::map<std::string, ExperimentKind> kinds = {
                 {"zstat", ExperimentKind::ZStat},
                 {"tstat", ExperimentKind::TStat},
                 {"knockoff_dense", ExperimentKind::KnockoffDense},
                 {"knockoff_sparse", ExperimentKind::KnockoffSparse},
                 {"outlier", ExperimentKind::Outlier},
                 {"marginal_boost_compare", ExperimentKind::MarginalBoostCompare},
             };
             auto it = kinds.find(v);
             if (it == kinds.end()) throw ConfigError(k + ": unknown experiment kind '" + v + "'");
             c.kind = it->second;
         }},
        {"m", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.m = at_least(k, v, 1); }},
        {"n", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.n = at_least(k, v, 0); }},
        {"alpha", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.alpha = level(k, v); }},
        {"alpha_cc", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.alpha_cc = level(k, v); }},
        {"alpha0", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.alpha0 = level(k, v); }},
        {"amplitude",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.amplitude = to_double(k, v);
             if (c.amplitude < 0.0) throw ConfigError(k + " must be nonnegative, got " + v);
         }},
        {"lrt_a",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "oracle") c.lrt_a.reset();
             else c.lrt_a = to_double(k, v);
         }},
        {"rho",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.rho = to_double(k, v);
             if (!(std::abs(c.rho) < 1.0)) throw ConfigError(k + " must lie in (-1,1), got " + v);
         }},
        {"n_nonnull", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.n_nonnull = at_least(k, v, 0); }},
        {"dof", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dof = static_cast<int>(at_least(k, v, 1)); }},
        {"zeros", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.zeros = at_least(k, v, 0); }},
        {"d", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.d = static_cast<int>(at_least(k, v, 1)); }},
        {"h_kn", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.h_kn = positive(k, v); }},
        {"s_method",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "mvr") c.mvr = true;
             else if (v == "equi") c.mvr = false;
             else throw ConfigError(k + ": expected mvr or equi, got '" + v + "'");
         }},
        {"pi1",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.pi1 = to_double(k, v);
             if (!(c.pi1 >= 0.0 && c.pi1 < 1.0)) throw ConfigError(k + " must lie in [0,1), got " + v);
         }},
        {"dimension", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dimension = at_least(k, v, 1); }},
        {"signal", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.signal = positive(k, v); }},
        {"holdout", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.holdout = at_least(k, v, 2); }},
        {"replications", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.replications = at_least(k, v, 1); }},
        {"seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(at_least(k, v, 0));
         }},
        {"exact_budget", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.exact_budget = at_least(k, v, 0); }},
        {"asymptotic_budget",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.asymptotic_budget = at_least(k, v, 0); }},
        {"batch_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.batch_size = at_least(k, v, 1); }},
        {"mode",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "avcs") c.mode = BoostMode::Avcs;
             else if (v == "ci") c.mode = BoostMode::Ci;
             else if (v == "exact") c.mode = BoostMode::Exact;
             else throw ConfigError(k + ": expected avcs, ci or exact, got '" + v + "'");
         }},
        {"filter",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "all") c.filter = FilterRule::All;
             else if (v == "pvalue") c.filter = FilterRule::PValue;
             else throw ConfigError(k + ": expected all or pvalue, got '" + v + "'");
         }},
        {"filter_factor", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.filter_factor = positive(k, v); }},
        {"record_time", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.record_time = to_bool(k, v); }},
    };
    return table;
}

const char* kRequired[] = {"kind", "m", "alpha", "replications"};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = trim(raw.substr(0, raw.find('#')));
        if (s.empty()) continue;
        const std::string where = "line " + std::to_string(line) + ": ";
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + s + "'");
        const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (value.empty()) throw ConfigError(where + key + ": missing value");
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            it->second(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    std::string missing;
    for (const char* k : kRequired)
        if (!seen.count(k)) missing += (missing.empty() ? "" : ", ") + std::string(k);
    if (!missing.empty()) throw ConfigError("missing required keys: " + missing);
    if (!seen.count("alpha_cc")) cfg.alpha_cc = cfg.alpha;
    if (!seen.count("alpha0")) cfg.alpha0 = 0.1 * cfg.alpha;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (m < 1) fail("m must be at least 1");
    for (auto [name, v] : {std::pair{"alpha", alpha}, {"alpha_cc", alpha_cc}, {"alpha0", alpha0}})
        if (!(v > 0.0 && v < 1.0)) fail(std::string(name) + " must lie in (0,1)");
    if (replications < 1) fail("replications must be at least 1");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (exact_budget < 0 || asymptotic_budget < 0) fail("CS budgets must be nonnegative");
    if (!(std::abs(rho) < 1.0)) fail("rho must lie in (-1,1)");
    switch (kind) {
        case ExperimentKind::ZStat:
        case ExperimentKind::TStat:
        case ExperimentKind::MarginalBoostCompare:
            if (n_nonnull > m) fail("n_nonnull must not exceed m");
            if (mode == BoostMode::Exact) fail("mode: exact needs a finite conditional law (outlier only)");
            if (kind == ExperimentKind::MarginalBoostCompare && !(lrt_a.value_or(amplitude) > 0.0))
                fail("lrt_a must be positive for marginal boosting");
            break;
        case ExperimentKind::KnockoffDense:
        case ExperimentKind::KnockoffSparse:
            if (n < 10) fail("n must be at least 10 for knockoff experiments");
            if (filter != FilterRule::All) fail("filter: knockoff experiments support only 'all'");
            if (mode == BoostMode::Exact) fail("mode: exact needs a finite conditional law (outlier only)");
            break;
        case ExperimentKind::Outlier:
            if (std::llround(pi1 * static_cast<double>(m)) >= m) fail("pi1 leaves no inliers");
            break;
    }
}

CCConfig ExperimentConfig::cc(int threads) const {
    CCConfig c;
    c.alpha = alpha;
    c.alpha_cc = alpha_cc;
    c.alpha0 = alpha0;
    c.batch_size = batch_size;
    c.exact_cs_budget = exact_budget;
    c.asymptotic_cs_budget = asymptotic_budget;
    c.mode = mode;
    c.threads = std::max(threads, 1);
    return c;
}

std::vector<std::string> ExperimentConfig::methods() const {
    switch (kind) {
        case ExperimentKind::KnockoffDense:
        case ExperimentKind::KnockoffSparse: return {"knockoff-filter", "e-BH", "e-BH-CC"};
        case ExperimentKind::MarginalBoostCompare: return {"BH", "e-BH", "e-BH-marginal", "e-BH-CC", "e-BH-CC-marginal"};
        default: return {"BH", "e-BH", "e-BH-CC"};
    }
}

namespace {

// ---- data generation ----

using Clock = std::chrono::steady_clock;

Matrix ar_cov(Index m, double rho) {
    Matrix s(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index k = 0; k < m; ++k) s(i, k) = std::pow(rho, static_cast<double>(std::abs(i - k)));
    return s;
}

Matrix gaussian(Index rows, Index cols, Rng& rng) {
    boost::random::normal_distribution<double> g;
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index k = 0; k < cols; ++k) out(i, k) = g(rng);
    return out;
}

// Symmetric square root with eigenvalues floored at 1e-12.
Matrix sqrt_cov(const Matrix& sigma) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
    if (es.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");
    const Vector root = es.eigenvalues().cwiseMax(1e-12).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

struct Rep {
    const ExperimentConfig& cfg;
    long rep;
    int threads;
    std::uint64_t seed;
    std::vector<bool> nulls;
    RejectionSet base;  // e-BH(e, alpha)
    std::vector<ReplicationResult> rows;

    Rep(const ExperimentConfig& c, long r, int t)
        : cfg(c), rep(r), threads(t), seed(stream_seed({c.seed, static_cast<std::uint64_t>(r)})) {}

    Rng stream(Purpose p) const { return make_stream({cfg.seed, static_cast<std::uint64_t>(rep), p}); }
    std::uint64_t boost_seed(Purpose p) const { return stream_seed({cfg.seed, static_cast<std::uint64_t>(rep), p}); }

    double since(Clock::time_point t0) const {
        return cfg.record_time ? std::chrono::duration<double>(Clock::now() - t0).count() : 0.0;
    }

    void record(const std::string& method, const RejectionSet& r, Clock::time_point t0, long boosted = 0,
                long samples = 0) {
        const Metrics mt = metrics(r, nulls);
        ReplicationResult row;
        row.method = method;
        row.rep = rep;
        row.power = mt.power;
        row.fdp = mt.fdp;
        row.n_reject = static_cast<long>(r.size());
        row.n_boosted = boosted;
        row.samples = samples;
        row.seconds = since(t0);
        row.seed = seed;
        row.contains_ebh = is_subset(base, r);
        rows.push_back(row);
    }

    void record_cc(const std::string& method, const CCResult& res, Clock::time_point t0) {
        long boosted = 0, samples = 0;
        for (const BoostOutcome& o : res.outcomes) {
            boosted += o.decision == Decision::Boosted;
            samples += o.samples_used;
        }
        record(method, res.rejections, t0, boosted, samples);
    }

    std::optional<std::vector<Index>> pvalue_mask(const Vector& p) const {
        if (cfg.filter == FilterRule::All) return std::nullopt;
        std::vector<Index> mask;
        for (Index j = 0; j < p.size(); ++j)
            if (p(j) <= cfg.filter_factor * cfg.alpha) mask.push_back(j);
        return mask;
    }

    void set_nulls(Index m, const std::function<bool(Index)>& is_null) {
        nulls.resize(m);
        for (Index j = 0; j < m; ++j) nulls[j] = is_null(j);
    }

    Vector mean_shift() const {
        Vector mu = Vector::Zero(cfg.m);
        mu.head(cfg.n_nonnull).setConstant(cfg.amplitude);
        return mu;
    }

    void run_zstat(bool marginal) {
        const Index m = cfg.m;
        const Matrix sigma = ar_cov(m, cfg.rho);
        Rng rng = stream(kData);
        const Vector z = mean_shift() + sqrt_cov(sigma) * gaussian(m, 1, rng).col(0);
        const ZInstance inst{z, sigma, Vector::Constant(m, cfg.lrt_a.value_or(cfg.amplitude))};
        const Vector e = lrt_z(inst.z, inst.a);
        Vector p(m);
        for (Index j = 0; j < m; ++j) p(j) = normal_sf(z(j));
        set_nulls(m, [&](Index j) { return j >= cfg.n_nonnull; });
        const auto factory = [&](Index j) -> std::unique_ptr<Resampler> { return std::make_unique<ZResampler>(inst, j); };
        finish_parametric(e, p, factory, marginal);
    }

    void run_tstat() {
        const Index m = cfg.m;
        const Matrix psi = ar_cov(m, cfg.rho);
        Rng rng = stream(kData);
        TInstance inst;
        inst.z = mean_shift() + sqrt_cov(psi) * gaussian(m, 1, rng).col(0);
        inst.psi = psi;
        inst.dof = cfg.dof;
        inst.w_norm_sq = gaussian(cfg.dof, 1, rng).squaredNorm();
        inst.a = Vector::Constant(m, cfg.lrt_a.value_or(cfg.amplitude));
        inst.validate();
        const Vector t = t_stats(inst);
        Vector e(m), p(m);
        for (Index j = 0; j < m; ++j) {
            e(j) = lrt_t(t(j), inst.a(j), inst.dof);
            p(j) = student_t_sf(t(j), inst.dof);
        }
        set_nulls(m, [&](Index j) { return j >= cfg.n_nonnull; });
        const auto factory = [&](Index j) -> std::unique_ptr<Resampler> { return std::make_unique<TResampler>(inst, j); };
        finish_parametric(e, p, factory, false);
    }

    void finish_parametric(const Vector& e, const Vector& p, const ResamplerFactory& factory, bool marginal) {
        auto t0 = Clock::now();
        record("BH", bh(p, cfg.alpha), t0);
        t0 = Clock::now();
        base = ebh(e, cfg.alpha);
        record("e-BH", base, t0);
        const double b = marginal ? marginal_boost_factor(cfg.lrt_a.value_or(cfg.amplitude), cfg.alpha) : 1.0;
        if (marginal) {
            t0 = Clock::now();
            record("e-BH-marginal", ebh((b * e).eval(), cfg.alpha), t0);
        }
        const CCConfig cc = cfg.cc(threads);
        const auto mask = pvalue_mask(p);
        t0 = Clock::now();
        record_cc("e-BH-CC", ebhcc(e, factory, cc, mask, boost_seed(kBoost)), t0);
        if (marginal) {
            t0 = Clock::now();
            const auto map = [b](const Vector& x) -> Vector { return b * x; };
            record_cc("e-BH-CC-marginal", ebhcc_with_budget(e, map, factory, cc, mask, boost_seed(kBoostMarginal)), t0);
        }
    }

    void run_knockoff() {
        const Index m = cfg.m, n = cfg.n;
        const Matrix sigma = ar_cov(m, cfg.rho);
        GaussianDesignModel model{Vector::Zero(m), sigma, s_matrix(sigma, cfg.mvr ? SMethod::Mvr : SMethod::Equicorrelated)};
        const KnockoffSampler sampler(model);
        Vector beta = Vector::Zero(m);
        double sign = 1.0;
        for (Index k = 0; k < m; ++k)
            if ((k + 1) % (cfg.zeros + 1) == 0) {
                beta(k) = sign * cfg.amplitude / std::sqrt(static_cast<double>(n));
                sign = -sign;
            }
        set_nulls(m, [&](Index j) { return beta(j) == 0.0; });
        const Matrix lt = sqrt_cov(sigma);
        auto draw = [&](Rng& rng, Matrix& x, Vector& y) {
            x = gaussian(n, m, rng) * lt;
            y = x * beta + gaussian(n, 1, rng).col(0);
        };
        Matrix x, xh;
        Vector y, yh;
        Rng data = stream(kData);
        draw(data, x, y);
        Rng hold = stream(kHoldout);
        draw(hold, xh, yh);
        const double lambda = knockoff_lambda(sampler, xh, yh, hold);
        const double alpha_kn = cfg.h_kn * cfg.alpha;

        Rng kn = stream(kKnockoffs);
        const DerandomizedEValues de = derandomized_evalues(sampler, x, y, cfg.d, alpha_kn, lambda, kn);
        base = ebh(de.e, cfg.alpha);

        // Baseline knockoff filter on its own knockoff draw.
        auto t0 = Clock::now();
        Rng bl = stream(kBaseline);
        const Vector w = lcd_stats(x, sampler.sample(x, bl), y, lambda);
        const double thr = knockoff_threshold(w, cfg.alpha, ThresholdVariant::Standard);
        RejectionSet kf;
        for (Index j = 0; j < m; ++j)
            if (w(j) >= thr) kf.push_back(j);
        record("knockoff-filter", kf, t0);

        t0 = Clock::now();
        record("e-BH", base, t0);
        const auto factory = [&](Index j) -> std::unique_ptr<Resampler> {
            return std::make_unique<CrtResampler>(sampler, x, y, j, cfg.d, alpha_kn, lambda);
        };
        t0 = Clock::now();
        record_cc("e-BH-CC", ebhcc(de.e, factory, cfg.cc(threads), std::nullopt, boost_seed(kBoost)), t0);
    }

    void run_outlier() {
        const Index dim = cfg.dimension, m = cfg.m, n = cfg.n > 0 ? cfg.n : cfg.m;
        // The 50 mixture centers are drawn once per experiment.
        constexpr Index kCenters = 50;
        Rng setup = make_stream({cfg.seed, kData});
        boost::random::uniform_real_distribution<double> unif(-3.0, 3.0);
        Matrix centers(kCenters, dim);
        for (Index k = 0; k < kCenters; ++k)
            for (Index i = 0; i < dim; ++i) centers(k, i) = unif(setup);
        Rng rng = stream(kData);
        Vector theta = Vector::Zero(dim);
        const double head[] = {0.3, 0.3, 0.2, 0.2, 0.1, 0.1};
        for (Index i = 0; i < std::min<Index>(dim, 6); ++i) theta(i) = head[i];

        // Inliers follow Q = uniform mixture of N(c_k, I). Calibration data
        // follow P with dQ/dP proportional to w(x) = sigmoid(theta'x), so
        // P is proportional to Q (1 + exp(-theta'x)): the mixture of N(c_k, I)
        // and N(c_k - theta, I) with relative weight exp(-theta'c_k + |theta|^2/2).
        std::vector<double> comp;
        for (Index k = 0; k < kCenters; ++k) comp.push_back(1.0);
        for (Index k = 0; k < kCenters; ++k)
            comp.push_back(std::exp(-centers.row(k).dot(theta) + 0.5 * theta.squaredNorm()));
        boost::random::discrete_distribution<int> pick_p(comp.begin(), comp.end());
        boost::random::uniform_int_distribution<Index> pick_q(0, kCenters - 1);
        boost::random::normal_distribution<double> g;
        auto noise = [&](Rng& r, double scale) {
            Vector v(dim);
            for (Index i = 0; i < dim; ++i) v(i) = scale * g(r);
            return v;
        };
        auto from_p = [&](Rng& r) -> Vector {
            const int c = pick_p(r);
            Vector x = centers.row(c % kCenters).transpose();
            if (c >= kCenters) x -= theta;
            return x + noise(r, 1.0);
        };
        auto weight = [&](const Vector& x) { return 1.0 / (1.0 + std::exp(-theta.dot(x))); };

        Matrix calib(n, dim), test(m, dim);
        for (Index i = 0; i < n; ++i) calib.row(i) = from_p(rng).transpose();
        const Index n_out = std::llround(cfg.pi1 * static_cast<double>(m));
        for (Index j = 0; j < m; ++j) {
            const double scale = j < n_out ? std::sqrt(cfg.signal) : 1.0;
            const Index c = pick_q(rng);
            test.row(j) = (centers.row(c).transpose() + noise(rng, scale)).transpose();
        }
        set_nulls(m, [&](Index j) { return j >= n_out; });

        // Score: negative log of a weighted Gaussian KDE fitted on hold-out
        // calibration inliers, which the weights tilt back to Q.
        Rng hold = stream(kHoldout);
        Matrix fit(cfg.holdout, dim);
        Vector fw(cfg.holdout);
        for (Index i = 0; i < cfg.holdout; ++i) {
            fit.row(i) = from_p(hold).transpose();
            fw(i) = weight(fit.row(i).transpose());
        }
        const Vector mean = fit.colwise().mean();
        const double sd = std::sqrt((fit.rowwise() - mean.transpose()).array().square().mean());
        const double neff = fw.sum() * fw.sum() / fw.squaredNorm();
        const double h = sd * std::pow(neff, -1.0 / (static_cast<double>(dim) + 4.0));
        auto score = [&](const Vector& x) {
            Vector lg(cfg.holdout);
            for (Index i = 0; i < cfg.holdout; ++i)
                lg(i) = std::log(fw(i)) - (fit.row(i).transpose() - x).squaredNorm() / (2.0 * h * h);
            const double top = lg.maxCoeff();
            return -(top + std::log((lg.array() - top).exp().sum()));
        };

        WeightedInstance inst{Vector(n), Vector(n), Vector(m), Vector(m)};
        for (Index i = 0; i < n; ++i) {
            inst.calib_scores(i) = score(calib.row(i).transpose());
            inst.calib_weights(i) = weight(calib.row(i).transpose());
        }
        for (Index j = 0; j < m; ++j) {
            inst.test_scores(j) = score(test.row(j).transpose());
            inst.test_weights(j) = weight(test.row(j).transpose());
        }
        const Vector p = weighted_pvalues(inst);
        const Vector e = weighted_conformal_evalues(inst, cfg.alpha);

        auto t0 = Clock::now();
        base = ebh(e, cfg.alpha);
        record("BH", bh(p, cfg.alpha), t0);
        t0 = Clock::now();
        record("e-BH", base, t0);
        const auto factory = [&](Index j) -> std::unique_ptr<Resampler> {
            return std::make_unique<ConformalResampler>(inst, j, cfg.alpha);
        };
        t0 = Clock::now();
        record_cc("e-BH-CC", ebhcc(e, factory, cfg.cc(threads), pvalue_mask(p), boost_seed(kBoost)), t0);
    }

    void run() {
        switch (cfg.kind) {
            case ExperimentKind::ZStat: run_zstat(false); break;
            case ExperimentKind::MarginalBoostCompare: run_zstat(true); break;
            case ExperimentKind::TStat: run_tstat(); break;
            case ExperimentKind::KnockoffDense:
            case ExperimentKind::KnockoffSparse: run_knockoff(); break;
            case ExperimentKind::Outlier: run_outlier(); break;
        }
        // Containment only means something for the e-value methods.
        for (ReplicationResult& r : rows)
            if (r.method == "BH" || r.method == "knockoff-filter") r.contains_ebh = true;
    }
};

}  // namespace

std::vector<ReplicationResult> run_experiment(const ExperimentConfig& cfg, int threads) {
    cfg.validate();
    threads = std::max(threads, 1);
    const long reps = cfg.replications;
    // Spare workers go to the per-hypothesis loop.
    const int inner = reps >= threads ? 1 : std::max(1, threads / static_cast<int>(reps));
    std::vector<std::vector<ReplicationResult>> per_rep(reps);
    parallel_for(reps, threads, [&](long r) {
        Rep rep(cfg, r, inner);
        rep.run();
        per_rep[r] = std::move(rep.rows);
    });
    std::vector<ReplicationResult> out;
    for (const std::string& method : cfg.methods())
        for (const auto& rows : per_rep)
            for (const ReplicationResult& row : rows)
                if (row.method == method) out.push_back(row);
    return out;
}

std::string format_csv(const std::vector<ReplicationResult>& rows) {
    std::string out = "method,rep,power,fdp,n_reject,n_boosted,samples,seconds,seed\n";
    char buf[256];
    for (const ReplicationResult& r : rows) {
        std::snprintf(buf, sizeof buf, ",%ld,%.6g,%.6g,%ld,%ld,%ld,%.6g,%llu\n", r.rep, r.power, r.fdp, r.n_reject,
                      r.n_boosted, r.samples, r.seconds, static_cast<unsigned long long>(r.seed));
        out += r.method;
        out += buf;
    }
    return out;
}

void emit_csv(const std::vector<ReplicationResult>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    const std::string text = format_csv(rows);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.close();
    if (!f) throw std::runtime_error("failed writing " + path);
}

std::vector<MethodSummary> summarize(const std::vector<ReplicationResult>& rows) {
    std::vector<MethodSummary> out;
    std::vector<std::vector<const ReplicationResult*>> groups;
    for (const ReplicationResult& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const MethodSummary& s) { return s.method == r.method; });
        if (it == out.end()) {
            out.push_back({r.method});
            groups.emplace_back();
            it = out.end() - 1;
        }
        groups[it - out.begin()].push_back(&r);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        MethodSummary& s = out[g];
        const auto& grp = groups[g];
        s.reps = static_cast<long>(grp.size());
        auto stats = [&](auto get, double& mean, double& se) {
            double sum = 0.0, sq = 0.0;
            for (const auto* r : grp) sum += get(*r);
            mean = sum / s.reps;
            for (const auto* r : grp) sq += (get(*r) - mean) * (get(*r) - mean);
            se = s.reps > 1 ? std::sqrt(sq / (s.reps - 1) / s.reps) : 0.0;
        };
        stats([](const ReplicationResult& r) { return r.power; }, s.power, s.power_se);
        stats([](const ReplicationResult& r) { return r.fdp; }, s.fdp, s.fdp_se);
        for (const auto* r : grp) s.all_contain = s.all_contain && r->contains_ebh;
    }
    return out;
}

}  // namespace ebcc
