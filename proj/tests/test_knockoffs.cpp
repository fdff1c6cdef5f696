#include "ebcc/knockoffs.hpp"
#include "ebcc/lasso.hpp"

#include <doctest.h>

#include <random>

using namespace ebcc;

namespace {

Matrix equi(Index m, double rho) {
    Matrix s = Matrix::Constant(m, m, rho);
    s.diagonal().setOnes();
    return s;
}

Matrix ar1(Index m, double rho) {
    Matrix s(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index k = 0; k < m; ++k) s(i, k) = std::pow(rho, std::abs(static_cast<double>(i - k)));
    return s;
}

Matrix random_corr(Index m, Rng& rng) {
    std::normal_distribution<double> g;
    Matrix a(m, 2 * m);
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k) a(i, k) = g(rng);
    Matrix s = a * a.transpose();
    const Vector d = s.diagonal().cwiseSqrt().cwiseInverse();
    return d.asDiagonal() * s * d.asDiagonal();
}

Matrix design(Index n, const Matrix& sigma, Rng& rng) {
    std::normal_distribution<double> g;
    Matrix z(n, sigma.rows());
    for (Index i = 0; i < z.rows(); ++i)
        for (Index k = 0; k < z.cols(); ++k) z(i, k) = g(rng);
    Eigen::LLT<Matrix> llt(sigma);
    return z * llt.matrixU();
}

double mvr_objective(const Matrix& sigma, const Vector& s) {
    Matrix g = 2 * sigma;
    g.diagonal() -= s;
    return s.cwiseInverse().sum() + g.inverse().trace();
}

Matrix covariance(const Matrix& a, const Matrix& b) {
    const Matrix ac = a.rowwise() - a.colwise().mean();
    const Matrix bc = b.rowwise() - b.colwise().mean();
    return ac.transpose() * bc / static_cast<double>(a.rows());
}

}  // namespace

TEST_CASE("s matrix") {
    CHECK(s_matrix(Matrix::Identity(3, 3), SMethod::Equicorrelated) == Vector::Ones(3));
    CHECK((s_matrix(Matrix::Identity(3, 3), SMethod::Mvr) - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((s_matrix(equi(2, 0.5)) - Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(s_matrix(equi(3, -0.9)), std::domain_error);

    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix sigma = rep % 2 ? random_corr(6, rng) : ar1(8, 0.3 + 0.03 * rep);
        const Vector s = s_matrix(sigma, SMethod::Mvr);
        Matrix g = 2 * sigma;
        g.diagonal() -= s;
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().minCoeff() >= -1e-8);
        CHECK((s.array() > 0).all());
        // MVR is at least as good as the equicorrelated point on its own objective,
        // and no single coordinate can be improved.
        const Vector e = s_matrix(sigma, SMethod::Equicorrelated);
        const double obj = mvr_objective(sigma, s);
        if (e.minCoeff() > 1e-6 && (2 * sigma - Matrix(e.asDiagonal())).llt().info() == Eigen::Success)
            CHECK(obj <= mvr_objective(sigma, e * 0.999) + 1e-9);
        for (Index j = 0; j < s.size(); ++j) {
            for (double f : {0.99, 1.01}) {
                Vector t = s;
                t(j) *= f;
                Matrix h = 2 * sigma;
                h.diagonal() -= t;
                if (h.llt().info() != Eigen::Success) continue;
                CHECK(mvr_objective(sigma, t) >= obj - 1e-9 * obj);
            }
        }
    }
}

TEST_CASE("knockoff sampler edge cases") {
    Rng rng(2);
    const Matrix sigma = Matrix::Identity(3, 3);
    const Vector mu{{1.0, -1.0, 0.5}};
    Matrix x = design(20000, sigma, rng);
    x.rowwise() += mu.transpose();
    const Matrix xk = sample_knockoffs({mu, sigma, Vector::Ones(3)}, x, rng);
    CHECK((xk.colwise().mean().transpose() - mu).cwiseAbs().maxCoeff() < 0.05);
    CHECK((covariance(xk, xk) - sigma).cwiseAbs().maxCoeff() < 0.05);
    CHECK(covariance(x, xk).cwiseAbs().maxCoeff() < 0.05);

    const Matrix same = sample_knockoffs({mu, sigma, Vector::Zero(3)}, x.topRows(5), rng);
    CHECK(same == x.topRows(5));
    CHECK_THROWS_AS(KnockoffSampler({mu, sigma, Vector::Constant(3, 2.5)}), std::domain_error);
}

TEST_CASE("knockoff swap covariance") {
    Rng rng(3);
    const Matrix sigma = ar1(3, 0.5);
    const Vector s = s_matrix(sigma, SMethod::Equicorrelated);
    const Matrix x = design(100000, sigma, rng);
    const Matrix xk = sample_knockoffs({Vector::Zero(3), sigma, s}, x, rng);
    const Matrix target = sigma - Matrix(s.asDiagonal());
    CHECK((covariance(x, xk) - target).cwiseAbs().maxCoeff() < 0.02);
    CHECK((covariance(xk, xk) - sigma).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("lasso optimality conditions") {
    Rng rng(4);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 10; ++rep) {
        const Index n = 60, p = 25;
        const Matrix x = design(n, ar1(p, 0.6), rng);
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = 2 * x(i, 0) - x(i, 3) + g(rng);
        Lasso fit(x, y);
        const double lam = fit.lambda_max() * (rep + 1) / 12.0;
        fit.fit(lam);
        const Vector b = fit.coefficients();
        // KKT on the standardized scale.
        const Vector mean = x.colwise().mean();
        Matrix xs = x.rowwise() - mean.transpose();
        const Vector sd = (xs.colwise().squaredNorm() / n).cwiseSqrt();
        xs = xs * sd.cwiseInverse().asDiagonal();
        const Vector bs = b.cwiseProduct(sd);
        const Vector r = (y.array() - y.mean()).matrix() - xs * bs;
        const Vector grad = xs.transpose() * r / n;
        for (Index j = 0; j < p; ++j) {
            if (bs(j) != 0.0)
                CHECK(grad(j) == doctest::Approx(lam * (bs(j) > 0 ? 1 : -1)).epsilon(1e-3));
            else
                CHECK(std::abs(grad(j)) <= lam * (1 + 1e-3));
        }
        CHECK(fit.intercept() == doctest::Approx(y.mean() - b.dot(mean)));
        CHECK(lasso(x, y, fit.lambda_max() * 1.0001).isZero());
    }
    CHECK_THROWS_AS(Lasso(Matrix::Zero(3, 2), Vector::Zero(2)), std::invalid_argument);
    Lasso fit(Matrix::Identity(3, 3), Vector::Ones(3));
    CHECK_THROWS_AS(fit.fit(-1.0), std::domain_error);
}

TEST_CASE("cv lambda stays on its grid") {
    Rng rng(5);
    std::normal_distribution<double> g;
    const Matrix x = design(80, ar1(10, 0.3), rng);
    Vector y = 3 * x.col(2);
    for (Index i = 0; i < y.size(); ++i) y(i) += g(rng);
    const double top = Lasso(x, y).lambda_max();
    const double lam = cv_lambda(x, y);
    CHECK(lam <= top * (1 + 1e-12));
    CHECK(lam >= top * 1e-2 * (1 - 1e-12));
    CHECK(cv_lambda(x, Vector::Constant(80, 2.0)) == 0.0);
}

TEST_CASE("lcd statistics") {
    Rng rng(6);
    std::normal_distribution<double> g;
    const Index n = 200, m = 5;
    const Matrix sigma = ar1(m, 0.3);
    const Matrix x = design(n, sigma, rng);
    const Matrix xk = sample_knockoffs({Vector::Zero(m), sigma, s_matrix(sigma)}, x, rng);
    Vector y = 1.5 * x.col(0) - x.col(2);
    for (Index i = 0; i < n; ++i) y(i) += g(rng);
    CHECK(lcd_stats(x, xk, y, 100.0).isZero());

    // Swapping X_j with its knockoff flips W_j and nothing else.
    const Vector w = lcd_stats(x, xk, y, 0.05);
    for (Index j = 0; j < m; ++j) {
        Matrix xs = x, xks = xk;
        xs.col(j).swap(xks.col(j));
        const Vector ws = lcd_stats(xs, xks, y, 0.05);
        for (Index k = 0; k < m; ++k) CHECK(ws(k) == doctest::Approx(k == j ? -w(k) : w(k)).epsilon(1e-5));
    }

    // lambda = 0 on an orthogonal design is ordinary least squares.
    Matrix q = design(n, Matrix::Identity(2 * m, 2 * m), rng);
    q = q.rowwise() - q.colwise().mean();
    Eigen::HouseholderQR<Matrix> qr(q);
    const Matrix orth = qr.householderQ() * Matrix::Identity(n, 2 * m) * std::sqrt(static_cast<double>(n));
    Vector yo = orth.col(1) - 0.5 * orth.col(m + 3);
    for (Index i = 0; i < n; ++i) yo(i) += 0.3 * g(rng);
    Matrix design_1(n, 2 * m + 1);
    design_1 << Vector::Ones(n), orth;
    const Vector ols = design_1.colPivHouseholderQr().solve(yo).tail(2 * m);
    const Vector w0 = lcd_stats(orth.leftCols(m), orth.rightCols(m), yo, 0.0);
    const Vector expect = ols.head(m).cwiseAbs() - ols.tail(m).cwiseAbs();
    CHECK((w0 - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("knockoff thresholds and e-values") {
    const Vector w{{3, 2, 1, -2}};
    CHECK(knockoff_threshold(w, 1.0, ThresholdVariant::Standard) == 1.0);
    CHECK(knockoff_threshold(w, 1.0) == 1.0);
    CHECK(knockoff_threshold(Vector{{3, 2, -1, -2}}, 0.5, ThresholdVariant::Standard) == kNoThreshold);
    // The early-stopping variant stops where fewer than 1/alpha statistics remain.
    CHECK(knockoff_threshold(Vector{{3, 2, -1, -2}}, 0.5, ThresholdVariant::EarlyStop) == 3.0);
    CHECK(knockoff_threshold(Vector{{-3, -2, -1}}, 0.2, ThresholdVariant::Standard) == kNoThreshold);
    CHECK(knockoff_threshold(Vector::Zero(3), 0.2, ThresholdVariant::EarlyStop) == kNoThreshold);

    CHECK(knockoff_evalues(w, 1.0) == Vector{{2, 2, 2, 0}});
    CHECK(knockoff_evalues(w, kNoThreshold).isZero());
    CHECK(ebh(knockoff_evalues(w, 1.0), 1.0) == RejectionSet{0, 1, 2});
}

TEST_CASE("knockoff filter equals e-BH on knockoff e-values") {
    Rng rng(7);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 300; ++rep) {
        const Index m = 5 + rng() % 40;
        Vector w(m);
        for (Index j = 0; j < m; ++j) w(j) = rng() % 5 == 0 ? 0.0 : std::round(8 * (g(rng) + (j % 3 == 0 ? 2 : 0))) / 8;
        for (double a : {0.1, 0.2, 0.5}) {
            const double t = knockoff_threshold(w, a, ThresholdVariant::Standard);
            RejectionSet filter;
            for (Index j = 0; j < m; ++j)
                if (t != kNoThreshold && w(j) >= t) filter.push_back(j);
            CHECK(ebh(knockoff_evalues(w, t), a) == filter);
        }
    }
}

TEST_CASE("derandomized e-values") {
    Rng data(8);
    std::normal_distribution<double> g;
    const Index n = 100, m = 8;
    const Matrix sigma = ar1(m, 0.4);
    const KnockoffSampler sampler({Vector::Zero(m), sigma, s_matrix(sigma)});
    const Matrix x = design(n, sigma, data);
    Vector y = 1.2 * x.col(0) + 1.2 * x.col(4);
    for (Index i = 0; i < n; ++i) y(i) += g(data);

    Rng a(9), b(9);
    const DerandomizedEValues one = derandomized_evalues(sampler, x, y, 1, 0.2, 0.05, a);
    const Matrix xk = sampler.sample(x, b);
    const Vector w = lcd_stats(x, xk, y, 0.05);
    CHECK(one.e == knockoff_evalues(w, knockoff_threshold(w, 0.2)));

    Rng c(10);
    const DerandomizedEValues five = derandomized_evalues(sampler, x, y, 5, 0.2, 0.05, c);
    Vector sum = Vector::Zero(m);
    for (int k = 0; k < 5; ++k) {
        const Vector ek = knockoff_evalues(five.w[k], five.thresholds[k]);
        sum += ek;
        const double neg = static_cast<double>((five.w[k].array() <= -five.thresholds[k]).count());
        for (Index j = 0; j < m; ++j) CHECK((ek(j) == 0.0 || ek(j) == m / (1.0 + neg)));
    }
    CHECK(five.e == sum / 5.0);
    CHECK_THROWS_AS(derandomized_evalues(sampler, x, y, 0, 0.2, 0.05, c), std::domain_error);
}

TEST_CASE("derandomized e-values keep the null budget") {
    // Global null: sum over j of E[e_j] <= m.
    Rng rng(11);
    std::normal_distribution<double> g;
    const Index n = 60, m = 6;
    const Matrix sigma = ar1(m, 0.3);
    const KnockoffSampler sampler({Vector::Zero(m), sigma, s_matrix(sigma)});
    double total = 0.0;
    const int reps = 150;
    for (int r = 0; r < reps; ++r) {
        const Matrix x = design(n, sigma, rng);
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = g(rng);
        total += derandomized_evalues(sampler, x, y, 2, 0.5, 0.02, rng).e.sum();
    }
    CHECK(total / reps <= m * 1.15);
}

TEST_CASE("CRT resampler") {
    Rng rng(12);
    std::normal_distribution<double> g;
    const Index n = 100000, m = 3;
    const Matrix sigma = equi(m, 0.5);
    const Vector mu{{0.5, 0.0, -1.0}};
    const KnockoffSampler sampler({mu, sigma, s_matrix(sigma)});
    Matrix x = design(n, sigma, rng);
    x.rowwise() += mu.transpose();
    const Vector y = Vector::Zero(n);
    const CrtResampler crt(sampler, x, y, 1, 1, 0.1, 0.1);
    CHECK(!crt.conditional_budget());
    CHECK(crt.evalue_bound() == 3.0);
    // Sigma_{j,-j} Sigma_{-j,-j}^{-1} = (1/3, 1/3), conditional variance 2/3.
    CHECK((crt.coefficients() - Vector::Constant(2, 1.0 / 3.0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(crt.conditional_sd() == doctest::Approx(std::sqrt(2.0 / 3.0)));
    const Matrix xd = crt.draw_design(rng);
    CHECK(xd.col(0) == x.col(0));
    CHECK(xd.col(2) == x.col(2));
    const Vector pred = (mu(1) + ((x.col(0).array() - mu(0)) + (x.col(2).array() - mu(2))) / 3.0).matrix();
    const Vector resid = xd.col(1) - pred;
    CHECK(std::abs(resid.mean()) < 0.02);
    CHECK(std::abs(resid.squaredNorm() / n - 2.0 / 3.0) < 0.02);
    CHECK(std::abs(resid.dot((x.col(0).array() - x.col(0).mean()).matrix()) / n) < 0.02);

    const KnockoffSampler plain({Vector::Zero(2), Matrix::Identity(2, 2), Vector::Ones(2)});
    const Matrix x2 = x.leftCols(2);
    const CrtResampler indep(plain, x2, y, 0, 1, 0.1, 0.1);
    CHECK(indep.coefficients().isZero());
    CHECK(indep.conditional_sd() == 1.0);
}
