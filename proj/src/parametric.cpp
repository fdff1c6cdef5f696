#include "ebcc/parametric.hpp"
#include "ebcc/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/student_t_distribution.hpp>

#include <random>

namespace ebcc {

double snap(double x) {
    if (!(std::abs(x) < kStatLimit)) throw NumericError("sufficient statistic outside the representable range");
    return std::nearbyint(x / kStatGrid) * kStatGrid;
}

namespace {

void check_square(const Matrix& a, Index m, const char* what) {
    if (a.rows() != m || a.cols() != m) throw std::invalid_argument(std::string(what) + " has the wrong shape");
    if (!a.isApprox(a.transpose(), 1e-12)) throw std::domain_error(std::string(what) + " is not symmetric");
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw std::domain_error(std::string(what) + " is not positive definite");
}

void check_index(Index j, Index m) {
    if (j < 0 || j >= m) throw std::out_of_range("hypothesis index");
}

}  // namespace

void ZInstance::validate() const {
    const Index m = z.size();
    if (m < 1 || a.size() != m) throw std::invalid_argument("ZInstance sizes disagree");
    check_square(sigma, m, "Sigma");
    if ((sigma.diagonal().array() - 1.0).abs().maxCoeff() > 1e-10) throw std::domain_error("Sigma needs a unit diagonal");
}

Vector z_suffstat(const ZInstance& inst, Index j) {
    const Index m = inst.z.size();
    check_index(j, m);
    const Vector c = drop(inst.sigma.col(j), j) / inst.sigma(j, j);
    const Vector zr = drop(inst.z, j);
    Vector s(m - 1);
    for (Index k = 0; k < m - 1; ++k) s(k) = snap(std::fma(-c(k), inst.z(j), zr(k)));
    return s;
}

namespace {

Vector z_from_coef(const Vector& s, const Vector& c, Index j, double y) {
    const Index m = s.size() + 1;
    Vector z(m);
    for (Index k = 0, i = 0; k < m; ++k) {
        if (k == j) {
            z(k) = y;
            continue;
        }
        z(k) = std::fma(c(i), y, s(i));
        ++i;
    }
    return z;
}

}  // namespace

Vector z_from_suffstat(const Vector& s, const Matrix& sigma, Index j, double y) {
    check_index(j, sigma.rows());
    return z_from_coef(s, drop(sigma.col(j), j) / sigma(j, j), j, y);
}

Vector z_resample(const Vector& s, const Matrix& sigma, Index j, Rng& rng) {
    boost::random::normal_distribution<double> g(0.0, std::sqrt(sigma(j, j)));
    return z_from_suffstat(s, sigma, j, g(rng));
}

ZResampler::ZResampler(const ZInstance& inst, Index j)
    : Resampler(j),
      s_(z_suffstat(inst, j)),
      coef_(drop(inst.sigma.col(j), j) / inst.sigma(j, j)),
      sd_(std::sqrt(inst.sigma(j, j))),
      a_(inst.a) {}

Vector ZResampler::draw(Rng& rng) const {
    boost::random::normal_distribution<double> g(0.0, sd_);
    return lrt_z(z_from_coef(s_, coef_, hypothesis(), g(rng)), a_);
}

void TInstance::validate() const {
    const Index m = z.size();
    if (m < 1 || a.size() != m) throw std::invalid_argument("TInstance sizes disagree");
    check_square(psi, m, "Psi");
    if (dof < 1) throw std::domain_error("dof must be at least 1");
    if (!(w_norm_sq >= 0.0)) throw std::domain_error("|W|^2 must be nonnegative");
}

Vector t_stats(const TInstance& inst) {
    if (!(inst.w_norm_sq > 0.0)) throw std::domain_error("t-statistics need |W|^2 > 0");
    const double sigma2 = inst.w_norm_sq / inst.dof;
    return (inst.z.array() / (sigma2 * inst.psi.diagonal().array()).sqrt()).matrix();
}

TSuffStat t_suffstat(const TInstance& inst, Index j) {
    const Index m = inst.z.size();
    check_index(j, m);
    const double pjj = inst.psi(j, j);
    const Vector c = drop(inst.psi.col(j), j) / pjj;
    const Vector zr = drop(inst.z, j);
    TSuffStat s;
    s.u.resize(m - 1);
    for (Index k = 0; k < m - 1; ++k) s.u(k) = snap(std::fma(-c(k), inst.z(j), zr(k)));
    s.v = snap(inst.w_norm_sq + inst.z(j) * inst.z(j) / pjj);
    return s;
}

TInstance t_instance_from_suffstat(const TSuffStat& s, const Matrix& psi, int dof, Index j, double tj) {
    if (!(s.v > 0.0)) throw std::domain_error("V_j must be positive");
    const Index m = psi.rows();
    check_index(j, m);
    const double pjj = psi(j, j);
    const double sigma2 = s.v / (dof + tj * tj);
    TInstance inst;
    inst.psi = psi;
    inst.dof = dof;
    inst.a = Vector::Zero(m);
    const double zj = tj * std::sqrt(pjj * sigma2);
    inst.w_norm_sq = s.v - zj * zj / pjj;
    inst.z = z_from_coef(s.u, drop(psi.col(j), j) / pjj, j, zj);
    return inst;
}

namespace {

Vector t_from_parts(const TSuffStat& s, const Vector& cross, const Vector& diag, int dof, Index j, double tj) {
    if (!(s.v > 0.0)) throw std::domain_error("V_j must be positive");
    const Index m = s.u.size() + 1;
    const double scale = (dof + tj * tj) / s.v;
    Vector t(m);
    for (Index k = 0, i = 0; k < m; ++k) {
        if (k == j) {
            t(k) = tj;
            continue;
        }
        t(k) = s.u(i) * std::sqrt(scale / diag(i)) + cross(i) * tj;
        ++i;
    }
    return t;
}

Vector cross_terms(const Matrix& psi, Index j) {
    Vector c = drop(psi.col(j), j);
    const Vector d = drop(psi.diagonal(), j);
    return (c.array() / (d.array() * psi(j, j)).sqrt()).matrix();
}

}  // namespace

Vector t_from_suffstat(const TSuffStat& s, const Matrix& psi, int dof, Index j, double tj) {
    check_index(j, psi.rows());
    return t_from_parts(s, cross_terms(psi, j), drop(psi.diagonal(), j), dof, j, tj);
}

Vector t_resample(const TSuffStat& s, const Matrix& psi, int dof, Index j, Rng& rng) {
    boost::random::student_t_distribution<double> t(dof);
    return t_from_suffstat(s, psi, dof, j, t(rng));
}

double lrt_t(double t, double a, int dof) {
    if (dof < 1) throw std::domain_error("dof must be at least 1");
    if (a == 0.0) return 1.0;
    // Writing the noncentral density as a mixture over s = sqrt(chi2/dof)
    // turns the ratio into E[exp(a t s - a^2/2)] with s^2 dof ~ Gamma((dof+1)/2, (1 + t^2/dof)/2).
    const double nu = dof;
    const double k = 0.5 * (nu + 1.0);
    const double r = 0.5 * (1.0 + t * t / nu);
    const double at = a * t;
    const double norm = k * std::log(r) - std::lgamma(k) + std::log(2.0 * nu) + (k - 1.0) * std::log(nu);
    auto log_h = [&](double s) { return norm + nu * std::log(s) - r * nu * s * s + at * s - 0.5 * a * a; };
    const double mode = (at + std::sqrt(at * at + 8.0 * r * nu * nu)) / (4.0 * r * nu);
    const double peak = log_h(mode);
    auto f = [&](double s) { return s > 0.0 ? std::exp(log_h(s) - peak) : 0.0; };
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    const double inf = std::numeric_limits<double>::infinity();
    double err = 0.0;
    const double left = GK::integrate(f, 0.0, mode, 15, 1e-9, &err);
    const double right = GK::integrate(f, mode, inf, 15, 1e-9, &err);
    const double log_ratio = peak + std::log(left + right);
    return std::exp(std::clamp(log_ratio, -700.0, 700.0));
}

TResampler::TResampler(const TInstance& inst, Index j)
    : Resampler(j),
      s_(t_suffstat(inst, j)),
      cross_(cross_terms(inst.psi, j)),
      diag_(drop(inst.psi.diagonal(), j)),
      dof_(inst.dof),
      a_(inst.a) {}

Vector TResampler::draw(Rng& rng) const {
    boost::random::student_t_distribution<double> td(dof_);
    const Vector t = t_from_parts(s_, cross_, diag_, dof_, hypothesis(), td(rng));
    Vector e(t.size());
    for (Index k = 0; k < t.size(); ++k) e(k) = lrt_t(t(k), a_(k), dof_);
    return e;
}

double truncation_T(double x, Index m) {
    if (m < 1) throw std::domain_error("truncation_T needs m >= 1");
    if (!(x >= 1.0)) return 0.0;
    const double md = static_cast<double>(m);
    Index k = static_cast<Index>(std::ceil(md / x));
    k = std::clamp<Index>(k, 1, m);
    while (k < m && md / static_cast<double>(k) > x) ++k;
    while (k > 1 && md / static_cast<double>(k - 1) <= x) --k;
    return md / static_cast<double>(k);
}

double marginal_boost_factor(double delta, double alpha) {
    check_level(alpha, "alpha");
    if (!(delta > 0.0)) throw std::domain_error("delta must be positive");
    auto g = [&](double b) { return b * normal_cdf(0.5 * delta + std::log(alpha * b) / delta) - 1.0; };
    double lo = 1.0, hi = 1e12;
    if (g(lo) > 0.0 || g(hi) < 0.0) throw NumericError("no boosting factor in [1, 1e12]");
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    const double b = std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
    if (std::abs(g(b)) > 1e-10) throw NumericError("boosting factor residual above 1e-10");
    return b;
}

}  // namespace ebcc
