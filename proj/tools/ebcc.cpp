#include "ebcc/evalue_core.hpp"
#include "ebcc/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

namespace {

int threads_from_env() {
    const char* s = std::getenv("EBCC_THREADS");
    if (!s || !*s) return 1;
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (*end != '\0' || v < 1) throw std::runtime_error("EBCC_THREADS must be a positive integer");
    return static_cast<int>(v);
}

int cmd_ebh(double alpha) {
    std::vector<double> xs;
    std::string line;
    long lineno = 0;
    while (std::getline(std::cin, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t used = 0;
        double v;
        try {
            v = std::stod(line.substr(b), &used);
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": not a number");
        }
        if (line.find_first_not_of(" \t\r", b + used) != std::string::npos)
            throw std::runtime_error("line " + std::to_string(lineno) + ": trailing characters");
        xs.push_back(v);
    }
    const ebcc::Vector e = Eigen::Map<const ebcc::Vector>(xs.data(), static_cast<ebcc::Index>(xs.size()));
    for (ebcc::Index j : ebcc::ebh(e, alpha)) std::printf("%ld\n", static_cast<long>(j + 1));
    return 0;
}

void print_summary(const std::vector<ebcc::ReplicationResult>& rows) {
    for (const auto& s : ebcc::summarize(rows))
        std::fprintf(stderr, "%-18s reps=%ld power=%.4f (se %.4f) fdr=%.4f (se %.4f)\n", s.method.c_str(), s.reps,
                     s.power, s.power_se, s.fdp, s.fdp_se);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"e-BH with conditional calibration: experiments and tools"};
    app.require_subcommand(1);

    std::string config, out;
    int threads = 0;
    std::uint64_t seed = 0;
    auto* run = app.add_subcommand("run", "run an experiment and write per-replication CSV");
    run->add_option("--config", config, "experiment config file")->required();
    run->add_option("--out", out, "output CSV path")->required();
    auto* threads_opt = run->add_option("--threads", threads, "worker threads (default: EBCC_THREADS or 1)")
                            ->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed", seed, "override the config's seed");

    double alpha = 0.0;
    auto* ebh_cmd = app.add_subcommand("ebh", "e-BH on e-values read from stdin, one per line");
    ebh_cmd->add_option("--alpha", alpha, "target level in (0,1]")->required();

    std::string vconfig;
    auto* validate = app.add_subcommand("validate", "check a config file");
    validate->add_option("--config", vconfig, "experiment config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ebh_cmd) return cmd_ebh(alpha);
        if (*validate) {
            ebcc::load_config(vconfig);
            std::puts("ok");
            return 0;
        }
        ebcc::ExperimentConfig cfg = ebcc::load_config(config);
        if (*seed_opt) cfg.seed = seed;
        const int t = *threads_opt ? threads : threads_from_env();
        const auto rows = ebcc::run_experiment(cfg, t);
        ebcc::emit_csv(rows, out);
        print_summary(rows);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
