#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebcc {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Sorted, 0-based hypothesis indices.
using RejectionSet = std::vector<Index>;

struct UnsupportedError : std::logic_error {
    using std::logic_error::logic_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Values within this relative distance of a rejection threshold count as
// meeting it. Inputs built from integer counts and decimal levels (0.1 is not
// representable) land exactly on thresholds in exact arithmetic, and every
// procedure has to agree on those ties.
inline constexpr double kTieTolerance = 1e-12;

inline bool meets(double value, double threshold) {
    return value >= threshold * (1.0 - kTieTolerance);
}

inline bool within(double value, double bound) {
    return value <= bound * (1.0 + kTieTolerance);
}

inline void check_level(double alpha, const char* name, bool allow_one = false) {
    if (!(alpha > 0.0) || alpha > 1.0 || (!allow_one && alpha == 1.0))
        throw std::domain_error(std::string(name) + " must lie in (0,1" + (allow_one ? "]" : ")"));
}

inline bool contains(const RejectionSet& r, Index j) {
    return std::binary_search(r.begin(), r.end(), j);
}

inline bool is_subset(const RejectionSet& a, const RejectionSet& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace ebcc
