#include "ebcc/knockoffs.hpp"
#include "ebcc/lasso.hpp"

#include <boost/random/normal_distribution.hpp>

#include <random>

namespace ebcc {

namespace {

double min_eigenvalue(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void check_pd(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() < 1) throw std::invalid_argument("Sigma must be square");
    if (Eigen::LLT<Matrix>(sigma).info() != Eigen::Success) throw std::domain_error("Sigma is not positive definite");
}

Vector mvr(const Matrix& sigma, double start) {
    const Index m = sigma.rows();
    Vector s = Vector::Constant(m, start);
    for (int sweep = 0; sweep < 200; ++sweep) {
        Matrix a = 2.0 * sigma;
        a.diagonal() -= s;
        Matrix inv = a.llt().solve(Matrix::Identity(m, m));
        double biggest = 0.0;
        for (Index j = 0; j < m; ++j) {
            // Exact minimizer over s_j of tr(S^-1) + tr((2 Sigma - S)^-1),
            // with the inverse kept current by Sherman-Morrison.
            const Vector col = inv.col(j);
            const double c = col(j);
            const double b = std::sqrt(col.squaredNorm());
            const double d = (1.0 - b * s(j)) / (c + b);
            if (d == 0.0) continue;
            inv += (d / (1.0 - d * c)) * col * col.transpose();
            s(j) += d;
            biggest = std::max(biggest, std::abs(d));
        }
        if (biggest < 1e-10) break;
    }
    return s;
}

}  // namespace

Vector s_matrix(const Matrix& sigma, SMethod method) {
    check_pd(sigma);
    const double lmin = min_eigenvalue(sigma);
    if (method == SMethod::Equicorrelated) return Vector::Constant(sigma.rows(), std::min(2.0 * lmin, 1.0));
    return mvr(sigma, std::min(lmin, 1.0));
}

void GaussianDesignModel::validate() const {
    check_pd(sigma);
    if (mu.size() != sigma.rows() || s.size() != sigma.rows()) throw std::invalid_argument("model sizes disagree");
    if ((s.array() < 0.0).any()) throw std::domain_error("S must be nonnegative");
    Matrix g = 2.0 * sigma;
    g.diagonal() -= s;
    if (min_eigenvalue(g) < -1e-8) throw std::domain_error("infeasible S: 2 Sigma - S is not PSD");
}

KnockoffSampler::KnockoffSampler(const GaussianDesignModel& model) : model_(model) {
    model_.validate();
    const Index m = model_.sigma.rows();
    shift_ = model_.sigma.llt().solve(Matrix(model_.s.asDiagonal()));
    Matrix cov = -(model_.s.asDiagonal() * shift_);
    cov.diagonal() += 2.0 * model_.s;
    cov = 0.5 * (cov + cov.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    factor_ = (es.eigenvectors() * root.asDiagonal()).transpose();
    if (factor_.rows() != m) throw std::logic_error("knockoff factor has the wrong shape");
}

Matrix KnockoffSampler::sample(const Matrix& x, Rng& rng) const {
    const Index n = x.rows(), m = x.cols();
    if (m != model_.mu.size()) throw std::invalid_argument("design width does not match the model");
    Matrix noise(n, m);
    boost::random::normal_distribution<double> g;
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < m; ++k) noise(i, k) = g(rng);
    Matrix centered = x.rowwise() - model_.mu.transpose();
    return x - centered * shift_ + noise * factor_;
}

Matrix sample_knockoffs(const GaussianDesignModel& model, const Matrix& x, Rng& rng) {
    return KnockoffSampler(model).sample(x, rng);
}

Vector lcd_stats(const Matrix& x, const Matrix& xk, const Vector& y, double lambda) {
    if (x.rows() != xk.rows() || x.cols() != xk.cols()) throw std::invalid_argument("X and X~ differ in shape");
    const Index m = x.cols();
    Matrix aug(x.rows(), 2 * m);
    aug << x, xk;
    const Vector b = lasso(aug, y, lambda);
    return b.head(m).cwiseAbs() - b.tail(m).cwiseAbs();
}

double knockoff_threshold(const Vector& w, double alpha_kn, ThresholdVariant variant) {
    if (!(alpha_kn > 0.0)) throw std::domain_error("alpha_kn must be positive");
    std::vector<double> cand;
    for (Index j = 0; j < w.size(); ++j)
        if (w(j) != 0.0) cand.push_back(std::abs(w(j)));
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (double t : cand) {
        const double pos = static_cast<double>((w.array() >= t).count());
        const double neg = static_cast<double>((w.array() <= -t).count());
        if (variant == ThresholdVariant::EarlyStop && !meets(alpha_kn * pos, 1.0)) return t;
        if (pos > 0.0 && within(1.0 + neg, alpha_kn * pos)) return t;
    }
    return kNoThreshold;
}

Vector knockoff_evalues(const Vector& w, double threshold) {
    const Index m = w.size();
    Vector e = Vector::Zero(m);
    if (threshold == kNoThreshold) return e;
    const double neg = static_cast<double>((w.array() <= -threshold).count());
    for (Index j = 0; j < m; ++j)
        if (w(j) >= threshold) e(j) = static_cast<double>(m) / (1.0 + neg);
    return e;
}

DerandomizedEValues derandomized_evalues(const KnockoffSampler& sampler, const Matrix& x, const Vector& y, int d,
                                         double alpha_kn, double lambda, Rng& rng) {
    if (d < 1) throw std::domain_error("d must be at least 1");
    DerandomizedEValues out;
    out.d = d;
    out.alpha_kn = alpha_kn;
    Vector sum = Vector::Zero(x.cols());
    for (int k = 0; k < d; ++k) {
        const Matrix xk = sampler.sample(x, rng);
        Vector w = lcd_stats(x, xk, y, lambda);
        const double t = knockoff_threshold(w, alpha_kn, ThresholdVariant::EarlyStop);
        sum += knockoff_evalues(w, t);
        out.w.push_back(std::move(w));
        out.thresholds.push_back(t);
    }
    out.e = sum / static_cast<double>(d);
    return out;
}

double knockoff_lambda(const KnockoffSampler& sampler, const Matrix& x, const Vector& y, Rng& rng) {
    const Matrix xk = sampler.sample(x, rng);
    Matrix aug(x.rows(), 2 * x.cols());
    aug << x, xk;
    return cv_lambda(aug, y);
}

CrtResampler::CrtResampler(const KnockoffSampler& sampler, const Matrix& x, const Vector& y, Index j, int d,
                           double alpha_kn, double lambda)
    : Resampler(j), sampler_(sampler), x_(x), y_(y), d_(d), alpha_kn_(alpha_kn), lambda_(lambda) {
    const GaussianDesignModel& model = sampler.model();
    const Index m = x.cols();
    if (j < 0 || j >= m) throw std::out_of_range("hypothesis index");
    std::vector<Index> rest;
    for (Index k = 0; k < m; ++k)
        if (k != j) rest.push_back(k);
    const Matrix srr = model.sigma(rest, rest);
    const Vector srj = model.sigma(rest, j);
    if (m > 1) {
        Eigen::LLT<Matrix> llt(srr);
        if (llt.info() != Eigen::Success) throw std::domain_error("Sigma_{-j,-j} is singular");
        coef_ = llt.solve(srj);
    } else {
        coef_ = Vector::Zero(0);
    }
    const double var = model.sigma(j, j) - srj.dot(coef_);
    if (!(var > 0.0)) throw std::domain_error("degenerate conditional variance");
    sd_ = std::sqrt(var);
    const Matrix xr = x(Eigen::all, rest);
    const Vector mur = model.mu(rest);
    mean_offset_ = ((xr.rowwise() - mur.transpose()) * coef_).array() + model.mu(j);
}

Matrix CrtResampler::draw_design(Rng& rng) const {
    Matrix x = x_;
    boost::random::normal_distribution<double> g;
    for (Index i = 0; i < x.rows(); ++i) x(i, hypothesis()) = mean_offset_(i) + sd_ * g(rng);
    return x;
}

Vector CrtResampler::draw(Rng& rng) const {
    const Matrix x = draw_design(rng);
    return derandomized_evalues(sampler_, x, y_, d_, alpha_kn_, lambda_, rng).e;
}

}  // namespace ebcc
