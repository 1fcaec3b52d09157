#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cadis/evalproto.hpp"
#include "cadis/rng.hpp"

using namespace cadis;

TEST_CASE("least squares slope") {
    CHECK(eval::least_squares_slope({1, 2, 3}, {2, 4, 6}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(eval::least_squares_slope({1, 2, 3}, {5, 5, 5}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(eval::least_squares_slope({0, 1}, {3, 1}) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK_THROWS_AS(eval::least_squares_slope({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(eval::least_squares_slope({1}, {2}), std::invalid_argument);
    CHECK_THROWS_AS(eval::least_squares_slope({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("fixed level ranking") {
    SUBCASE("perfect agreement in every group") {
        std::vector<double> scores, mos;
        std::vector<std::string> kinds;
        std::vector<int> levels;
        Rng rng(1);
        for (const char* kind : {"blur", "noise"})
            for (int level = 1; level <= 2; ++level)
                for (int content = 0; content < 6; ++content) {
                    double m = rng.uniform(1.0, 5.0);
                    scores.push_back(m);  // scores == mos
                    mos.push_back(m);
                    kinds.push_back(kind);
                    levels.push_back(level);
                }
        auto stats = eval::fixed_level_ranking(scores, mos, kinds, levels);
        REQUIRE(stats.size() == 4);
        for (const auto& st : stats) {
            CHECK_FALSE(st.skipped);
            CHECK(st.group_size == 6);
            CHECK(st.srcc == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(st.plcc == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(st.pairwise_acc == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    SUBCASE("small and degenerate groups are skipped with warnings") {
        std::vector<double> scores = {1, 2, 3, 4, 7, 7, 7, 7};
        std::vector<double> mos = {1, 2, 5, 5, 1, 2, 3, 4};
        std::vector<std::string> kinds = {"blur", "blur", "blur", "blur",
                                          "noise", "noise", "noise", "noise"};
        std::vector<int> levels = {1, 1, 1, 1, 2, 2, 2, 2};
        std::vector<std::string> warnings;
        auto stats = eval::fixed_level_ranking(scores, mos, kinds, levels, &warnings);
        // the constant-score noise group cannot produce an SRCC
        bool noise_skipped = false;
        for (const auto& st : stats)
            if (st.kind == "noise" && st.skipped) noise_skipped = true;
        CHECK(noise_skipped);
        CHECK_FALSE(warnings.empty());

        // singleton groups skipped too
        std::vector<std::string> w2;
        auto tiny = eval::fixed_level_ranking({1.0}, {2.0}, {"blur"}, {1}, &w2);
        REQUIRE(tiny.size() == 1);
        CHECK(tiny[0].skipped);
        CHECK_FALSE(w2.empty());
    }

    SUBCASE("length mismatch rejected") {
        CHECK_THROWS_AS(eval::fixed_level_ranking({1, 2}, {1, 2}, {"a"}, {1, 1}),
                        std::invalid_argument);
    }
}

TEST_CASE("sensitivity alignment") {
    SUBCASE("proportional slopes align perfectly") {
        std::vector<double> scores, mos;
        std::vector<int> levels;
        std::vector<std::string> refs;
        Rng rng(2);
        for (int r = 0; r < 6; ++r) {
            double rate = 0.5 + r * 0.3;  // distinct per-reference degradation rate
            for (int level = 1; level <= 5; ++level) {
                mos.push_back(5.0 - rate * level);
                scores.push_back(2.0 * (5.0 - rate * level) + 1.0);  // affine of mos
                levels.push_back(level);
                refs.push_back("ref" + std::to_string(r));
            }
        }
        auto st = eval::sensitivity_alignment(scores, mos, levels, refs);
        CHECK(st.used_refs == 6);
        CHECK(st.skipped_refs == 0);
        CHECK(st.slope_srcc == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(st.slope_plcc == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(st.mean_curve_srcc == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("identical slopes across refs are degenerate") {
        std::vector<double> scores, mos;
        std::vector<int> levels;
        std::vector<std::string> refs;
        for (int r = 0; r < 4; ++r)
            for (int level = 1; level <= 3; ++level) {
                mos.push_back(5.0 - 1.0 * level);
                scores.push_back(4.0 - 1.0 * level);
                levels.push_back(level);
                refs.push_back("ref" + std::to_string(r));
            }
        CHECK_THROWS(eval::sensitivity_alignment(scores, mos, levels, refs));
    }
}

TEST_CASE("binomial confidence interval") {
    auto ci = eval::binomial_ci(50, 100);
    CHECK(ci.lo > 0.40);
    CHECK(ci.hi < 0.60);
    CHECK(ci.lo < 0.5);
    CHECK(ci.hi > 0.5);

    auto all = eval::binomial_ci(20, 20);
    CHECK(all.hi == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(all.lo > 0.8);

    auto none = eval::binomial_ci(0, 20);
    CHECK(none.lo == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(none.hi < 0.2);

    // wider interval for fewer trials
    auto small = eval::binomial_ci(5, 10);
    auto large = eval::binomial_ci(500, 1000);
    CHECK(small.hi - small.lo > large.hi - large.lo);

    CHECK_THROWS_AS(eval::binomial_ci(5, 0), std::invalid_argument);
    CHECK_THROWS_AS(eval::binomial_ci(11, 10), std::invalid_argument);
}

TEST_CASE("report serialization round trip") {
    eval::EvalReport r;
    r.plcc = 0.91;
    r.srcc = -0.87;
    r.rmse = 0.123456789;
    r.mean_level_srcc = 0.5;
    r.per_level.push_back({"blur", 3, 0.9, 0.8, 0.75, 12, false});
    r.per_level.push_back({"noise", 1, 0.0, 0.0, 0.0, 1, true});
    r.sensitivity = {0.7, 0.6, -0.95, 8, 2};
    r.counterfactual_acc = 0.85;
    r.counterfactual_ci_lo = 0.7;
    r.counterfactual_ci_hi = 0.93;
    r.counterfactual_n = 50;
    r.warnings.push_back("group blur/5 skipped: size 1");

    auto back = eval::EvalReport::from_json(r.to_json());
    CHECK(back.plcc == r.plcc);
    CHECK(back.srcc == r.srcc);
    CHECK(back.rmse == r.rmse);
    REQUIRE(back.per_level.size() == 2);
    CHECK(back.per_level[0].kind == "blur");
    CHECK(back.per_level[0].srcc == 0.9);
    CHECK(back.per_level[1].skipped);
    CHECK(back.sensitivity.mean_curve_srcc == -0.95);
    CHECK(back.sensitivity.skipped_refs == 2);
    REQUIRE(back.counterfactual_acc.has_value());
    CHECK(*back.counterfactual_acc == 0.85);
    CHECK(back.counterfactual_n == 50);
    REQUIRE(back.warnings.size() == 1);
    CHECK(back.warnings[0] == r.warnings[0]);

    eval::EvalReport empty_cf;
    auto back2 = eval::EvalReport::from_json(empty_cf.to_json());
    CHECK_FALSE(back2.counterfactual_acc.has_value());

    namespace fs = std::filesystem;
    fs::path csv = fs::temp_directory_path() / "cadis_eval_test.csv";
    r.save_csv(csv.string());
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "metric,value");
    bool has_srcc = false, has_cf = false;
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("srcc,", 0) == 0) has_srcc = true;
        if (line.rfind("counterfactual_acc,", 0) == 0) has_cf = true;
    }
    CHECK(has_srcc);
    CHECK(has_cf);
    in.close();
    fs::remove(csv);
}

TEST_CASE("counterfactual transfer sanity") {
    nn::ModelConfig cfg;
    cfg.resolution = 16;
    cfg.enc_channels = {4, 8};
    cfg.content_stem = 4;
    cfg.content_stages = 1;
    cfg.content_dim = 8;
    cfg.unet_base = 4;
    cfg.unet_depth = 2;
    cfg.film_hidden = 8;
    cfg.disc_base = 4;
    cfg.disc_layers = 2;
    nn::Model model(cfg, 7);

    Rng rng(3);
    auto rand_img = [&](int size) {
        Image img(size, size, 3);
        for (auto& v : img.data) v = rng.uniform();
        return img;
    };
    Image r1 = rand_img(16), d1 = rand_img(16), r2 = rand_img(16);
    Image same = rand_img(16), other = rand_img(16);

    // deterministic boolean output
    bool a = eval::counterfactual_transfer(model, r1, d1, r2, same, other);
    bool b = eval::counterfactual_transfer(model, r1, d1, r2, same, other);
    CHECK(a == b);

    // swapping the truth images flips the outcome unless distances tie
    bool swapped = eval::counterfactual_transfer(model, r1, d1, r2, other, same);
    CHECK(a != swapped);

    Image wrong(8, 8, 3);
    CHECK_THROWS(eval::counterfactual_transfer(model, r1, d1, r2, same, wrong));
}
