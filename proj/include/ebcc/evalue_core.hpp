#pragma once

#include "ebcc/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace ebcc {

// k* of the e-BH procedure together with its rejection threshold m/(alpha k*).
struct EbhCut {
    Index k = 0;
    double threshold = std::numeric_limits<double>::infinity();
};

inline double ebh_threshold(Index m, double alpha, Index k) {
    return static_cast<double>(m) / (alpha * static_cast<double>(k));
}

template <class Derived>
void check_evalues(const Eigen::DenseBase<Derived>& e) {
    for (Index j = 0; j < e.size(); ++j) {
        double v = e(j);
        if (!std::isfinite(v) || v < 0.0) throw std::domain_error("e-values must be finite and nonnegative");
    }
}

template <class Derived>
EbhCut ebh_cut(const Eigen::DenseBase<Derived>& e, double alpha) {
    check_level(alpha, "alpha", true);
    check_evalues(e);
    const Index m = e.size();
    std::vector<double> sorted(m);
    for (Index j = 0; j < m; ++j) sorted[j] = e(j);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (Index k = m; k >= 1; --k) {
        double t = ebh_threshold(m, alpha, k);
        if (meets(sorted[k - 1], t)) return {k, t};
    }
    return {};
}

// e-BH: rejects every j with e_j >= m/(alpha k*), ties included.
template <class Derived>
RejectionSet ebh(const Eigen::DenseBase<Derived>& e, double alpha) {
    EbhCut cut = ebh_cut(e, alpha);
    RejectionSet r;
    if (cut.k == 0) return r;
    r.reserve(cut.k);
    for (Index j = 0; j < e.size(); ++j)
        if (meets(e(j), cut.threshold)) r.push_back(j);
    return r;
}

// Benjamini-Hochberg. p-values above one are clamped; a zero p-value is allowed
// (used to force a hypothesis into the rejection set).
template <class Derived>
RejectionSet bh(const Eigen::DenseBase<Derived>& p, double alpha) {
    check_level(alpha, "alpha", true);
    const Index m = p.size();
    std::vector<double> sorted(m);
    for (Index j = 0; j < m; ++j) {
        if (std::isnan(p(j)) || p(j) < 0.0) throw std::domain_error("p-values must be nonnegative");
        sorted[j] = std::min<double>(p(j), 1.0);
    }
    std::sort(sorted.begin(), sorted.end());
    Index kstar = 0;
    for (Index k = m; k >= 1; --k) {
        if (within(sorted[k - 1], alpha * static_cast<double>(k) / static_cast<double>(m))) {
            kstar = k;
            break;
        }
    }
    RejectionSet r;
    if (kstar == 0) return r;
    double cut = alpha * static_cast<double>(kstar) / static_cast<double>(m);
    for (Index j = 0; j < m; ++j)
        if (within(std::min<double>(p(j), 1.0), cut)) r.push_back(j);
    return r;
}

struct Metrics {
    double fdp = 0.0;
    double power = 0.0;
};

// null_mask[j] is true when hypothesis j is null.
inline Metrics metrics(const RejectionSet& r, const std::vector<bool>& null_mask) {
    std::size_t false_rej = 0, nonnull = 0, true_rej = 0;
    for (Index j : r) {
        if (j < 0 || static_cast<std::size_t>(j) >= null_mask.size()) throw std::out_of_range("rejection index");
        null_mask[j] ? ++false_rej : ++true_rej;
    }
    for (bool n : null_mask) nonnull += !n;
    Metrics out;
    out.fdp = static_cast<double>(false_rej) / static_cast<double>(std::max<std::size_t>(r.size(), 1));
    out.power = static_cast<double>(true_rej) / static_cast<double>(std::max<std::size_t>(nonnull, 1));
    return out;
}

}  // namespace ebcc
