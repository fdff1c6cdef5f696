#pragma once

#include "ebcc/calibration.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebcc {

enum class ExperimentKind { ZStat, TStat, KnockoffDense, KnockoffSparse, Outlier, MarginalBoostCompare };

enum class FilterRule { All, PValue };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::ZStat;
    Index m = 0;
    Index n = 0;  // observations (knockoffs) or calibration size (outlier); 0 means m for outlier
    double alpha = 0.05;
    double alpha_cc = 0.05;
    double alpha0 = 0.005;
    double amplitude = 3.0;
    std::optional<double> lrt_a;  // empty: a = amplitude
    double rho = 0.5;
    Index n_nonnull = 10;
    int dof = 5;
    Index zeros = 7;
    int d = 5;
    double h_kn = 1.0;
    bool mvr = true;
    double pi1 = 0.1;
    Index dimension = 10;
    double signal = 3.0;
    Index holdout = 200;
    long replications = 1;
    std::uint64_t seed = 1;
    long exact_budget = 3000;
    long asymptotic_budget = 2000;
    long batch_size = 100;
    BoostMode mode = BoostMode::Avcs;
    FilterRule filter = FilterRule::All;
    double filter_factor = 3.0;
    bool record_time = false;

    // Throws ConfigError naming the field.
    void validate() const;
    CCConfig cc(int threads) const;
    // Methods reported for this kind, in CSV order.
    std::vector<std::string> methods() const;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct ReplicationResult {
    std::string method;
    long rep = 0;
    double power = 0.0;
    double fdp = 0.0;
    long n_reject = 0;
    long n_boosted = 0;
    long samples = 0;
    double seconds = 0.0;
    std::uint64_t seed = 0;
    bool contains_ebh = true;  // e-BH(e) is inside this method's rejections
};

// Rows in (method, rep) order. Output depends only on cfg, never on threads.
std::vector<ReplicationResult> run_experiment(const ExperimentConfig& cfg, int threads = 1);

std::string format_csv(const std::vector<ReplicationResult>& rows);
void emit_csv(const std::vector<ReplicationResult>& rows, const std::string& path);

struct MethodSummary {
    std::string method;
    long reps = 0;
    double power = 0.0, power_se = 0.0;
    double fdp = 0.0, fdp_se = 0.0;
    bool all_contain = true;
};

std::vector<MethodSummary> summarize(const std::vector<ReplicationResult>& rows);

}  // namespace ebcc
