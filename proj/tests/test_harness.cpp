#include "ebcc/harness.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

using namespace ebcc;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

bool has(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

const char* kBase = "kind = zstat\nm = 20\nreplications = 2\n";

}  // namespace

TEST_CASE("config values and defaults") {
    ExperimentConfig c = parse_config(std::string(kBase) + "alpha = 0.05\n");
    CHECK(c.alpha == 0.05);
    CHECK(c.alpha_cc == 0.05);
    CHECK(c.alpha0 == doctest::Approx(0.005));
    CHECK(c.m == 20);
    CHECK(c.kind == ExperimentKind::ZStat);

    c = parse_config(std::string("# header\n\n") + kBase + "alpha = 0.2   # trailing\nalpha_cc = 0.1\nalpha0=0.03\n");
    CHECK(c.alpha == 0.2);
    CHECK(c.alpha_cc == 0.1);
    CHECK(c.alpha0 == 0.03);

    c = parse_config(std::string(kBase) + "alpha = 0.1\nlrt_a = 2.5\nmode = ci\nfilter = pvalue\n");
    CHECK(c.lrt_a.value() == 2.5);
    CHECK(c.mode == BoostMode::Ci);
    CHECK(c.filter == FilterRule::PValue);
}

TEST_CASE("config errors name the line") {
    std::string e = error_of(std::string(kBase) + "alpha = 1.5\n");
    CHECK(has(e, "alpha"));
    CHECK(has(e, "line 4"));

    e = error_of(std::string(kBase) + "alpha = 0.1\nbogus = 3\n");
    CHECK(has(e, "line 5"));
    CHECK(has(e, "bogus"));

    e = error_of(std::string(kBase) + "alpha = 0.1\nalpha = 0.2\n");
    CHECK(has(e, "line 5"));
    CHECK(has(e, "duplicate"));

    e = error_of(std::string(kBase) + "alpha = abc\n");
    CHECK(has(e, "line 4"));
    CHECK(has(e, "number"));

    e = error_of(std::string(kBase) + "alpha = 0.1\nm2\n");
    CHECK(has(e, "line 5"));

    e = error_of("kind = zstat\nm = 2.5\nalpha=0.1\nreplications=1\n");
    CHECK(has(e, "line 2"));
    CHECK(has(e, "integer"));

    e = error_of("kind = chess\n");
    CHECK(has(e, "line 1"));
}

TEST_CASE("empty config lists the required keys") {
    const std::string e = error_of("");
    for (const char* k : {"kind", "m", "alpha", "replications"}) CHECK(has(e, k));
    CHECK(has(error_of("# nothing here\n\n"), "replications"));
    CHECK(has(error_of("kind = zstat\nm = 4\n"), "alpha, replications"));
}

TEST_CASE("semantic validation") {
    CHECK(has(error_of(std::string(kBase) + "alpha = 0.1\nn_nonnull = 30\n"), "n_nonnull"));
    CHECK(has(error_of(std::string(kBase) + "alpha = 0.1\nmode = exact\n"), "exact"));
    CHECK(has(error_of("kind = knockoff_dense\nm = 10\nn = 5\nalpha = 0.1\nreplications = 1\n"), "n must"));
    CHECK(has(error_of("kind = knockoff_dense\nm = 10\nn = 50\nalpha = 0.1\nreplications = 1\nfilter = pvalue\n"),
              "filter"));
    CHECK(has(error_of("kind = outlier\nm = 10\npi1 = 0.99\nalpha = 0.1\nreplications = 1\n"), "inliers"));
    CHECK(error_of("kind = outlier\nm = 10\nalpha = 0.1\nreplications = 1\nmode = exact\n").empty());
}

TEST_CASE("csv formatting") {
    CHECK(format_csv({}) == "method,rep,power,fdp,n_reject,n_boosted,samples,seconds,seed\n");
    ReplicationResult r;
    r.method = "e-BH-CC";
    r.rep = 3;
    r.power = 1.0 / 3.0;
    r.fdp = 0.0;
    r.n_reject = 7;
    r.n_boosted = 2;
    r.samples = 1200;
    r.seconds = 0.0;
    r.seed = 18446744073709551615ull;
    const std::string text = format_csv({r});
    CHECK(text == "method,rep,power,fdp,n_reject,n_boosted,samples,seconds,seed\n"
                  "e-BH-CC,3,0.333333,0,7,2,1200,0,18446744073709551615\n");

    const std::string path = "test_harness_roundtrip.csv";
    emit_csv({r, r}, path);
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    CHECK(ss.str() == format_csv({r, r}));
    CHECK(ss.str().find('\r') == std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("summaries") {
    std::vector<ReplicationResult> rows(4);
    for (int i = 0; i < 4; ++i) {
        rows[i].method = i < 2 ? "A" : "B";
        rows[i].rep = i % 2;
        rows[i].power = i;
        rows[i].fdp = 0.1;
    }
    rows[3].contains_ebh = false;
    const auto s = summarize(rows);
    REQUIRE(s.size() == 2);
    CHECK(s[0].method == "A");
    CHECK(s[0].power == 0.5);
    CHECK(s[0].power_se == doctest::Approx(0.5));
    CHECK(s[0].fdp_se == doctest::Approx(0.0));
    CHECK(s[0].all_contain);
    CHECK_FALSE(s[1].all_contain);
}

namespace {

void check_run(const std::string& text) {
    const ExperimentConfig cfg = parse_config(text);
    const auto rows = run_experiment(cfg, 1);
    const auto methods = cfg.methods();
    REQUIRE(rows.size() == methods.size() * static_cast<std::size_t>(cfg.replications));
    std::size_t i = 0;
    for (const std::string& m : methods)
        for (long r = 0; r < cfg.replications; ++r, ++i) {
            CHECK(rows[i].method == m);
            CHECK(rows[i].rep == r);
            CHECK(rows[i].contains_ebh);
            CHECK(rows[i].power >= 0.0);
            CHECK(rows[i].power <= 1.0);
            CHECK(rows[i].fdp >= 0.0);
            CHECK(rows[i].fdp <= 1.0);
            CHECK(rows[i].seconds == 0.0);
        }
    // Same bytes regardless of thread count, and across reruns.
    const std::string once = format_csv(rows);
    CHECK(format_csv(run_experiment(cfg, 1)) == once);
    CHECK(format_csv(run_experiment(cfg, 3)) == once);
}

}  // namespace

TEST_CASE("small runs of every kind") {
    check_run("kind = zstat\nm = 30\nn_nonnull = 6\namplitude = 3\nalpha = 0.1\nreplications = 3\n"
              "exact_budget = 200\nasymptotic_budget = 200\nseed = 4\n");
    check_run("kind = tstat\nm = 20\nn_nonnull = 5\nzeros = 3\nalpha = 0.1\nreplications = 2\n"
              "exact_budget = 200\nasymptotic_budget = 200\nfilter = pvalue\nseed = 5\n");
    check_run("kind = marginal_boost_compare\nm = 20\nn_nonnull = 5\nalpha = 0.1\nreplications = 2\n"
              "exact_budget = 200\nasymptotic_budget = 200\nseed = 6\n");
    check_run("kind = outlier\nm = 20\nn = 40\npi1 = 0.2\ndimension = 5\nsignal = 3\nholdout = 60\n"
              "alpha = 0.2\nreplications = 2\nexact_budget = 200\nasymptotic_budget = 200\nseed = 7\n");
    check_run("kind = outlier\nm = 20\nn = 40\npi1 = 0.2\ndimension = 5\nsignal = 3\nholdout = 60\n"
              "alpha = 0.2\nreplications = 2\nmode = exact\nseed = 8\n");
    check_run("kind = knockoff_dense\nm = 12\nn = 40\nzeros = 2\namplitude = 5\nd = 2\nalpha = 0.2\n"
              "replications = 1\nexact_budget = 100\nasymptotic_budget = 100\nseed = 9\n");
}

TEST_CASE("shipped configs parse") {
    for (const char* name : {"zstat_desk", "zstat_misspec", "zstat_null", "tstat_desk", "marginal_boost_compare",
                             "knockoff_sparse", "knockoff_dense", "outlier_desk"})
        CHECK_NOTHROW(load_config(std::string(EBCC_CONFIG_DIR) + "/" + name + ".conf"));
    for (const char* name : {"zstat_a1", "zstat_oracle", "tstat_heavy", "marginal_boost_compare", "knockoff_dense",
                             "knockoff_sparse", "outlier"})
        CHECK_NOTHROW(load_config(std::string(EBCC_CONFIG_DIR) + "/full/" + name + ".conf"));
    CHECK_THROWS_AS(load_config(std::string(EBCC_CONFIG_DIR) + "/missing.conf"), ConfigError);
}
