#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cadis/metrics.hpp"
#include "cadis/rng.hpp"

using namespace cadis;

namespace {

// Independent brute-force implementations, straight from the definitions.

std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        int less = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        r[i] = less + (equal + 1) / 2.0;  // average rank of the tie block
    }
    return r;
}

double brute_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

double brute_srcc(const std::vector<double>& a, const std::vector<double>& b) {
    return brute_pearson(brute_ranks(a), brute_ranks(b));
}

double brute_rmse(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / static_cast<double>(a.size()));
}

double brute_pairwise(const std::vector<double>& s, const std::vector<double>& m) {
    double score = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (i == j || m[i] == m[j]) continue;
            ++pairs;
            if (s[i] == s[j]) score += 0.5;
            else if ((s[i] < s[j]) == (m[i] < m[j])) score += 1.0;
        }
    return score / pairs;
}

std::vector<double> random_vec_with_ties(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = std::floor(rng.uniform(-5.0, 5.0) * 4.0) / 4.0;  // quantized: ties
    return v;
}

bool constant(const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end() ||
           v.size() < 2;
}

}  // namespace

TEST_CASE("hand cases") {
    CHECK(metrics::srcc({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::srcc({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(metrics::srcc({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(metrics::plcc({0, 1, 2}, {3, 5, 7}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::rmse({0, 1}, {1, 1}) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(metrics::rmse({1, 2, 3}, {1, 2, 3}) == 0.0);

    CHECK_THROWS_AS(metrics::srcc({1, 1, 1}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::plcc({2, 2}, {1, 3}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::srcc({1}, {2}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::srcc({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("oracle equality on 100 random vectors with ties") {
    Rng rng(2024);
    int done = 0;
    while (done < 100) {
        std::size_t n = 2 + rng.below(49);
        auto a = random_vec_with_ties(n, rng);
        auto b = random_vec_with_ties(n, rng);
        if (constant(a) || constant(b)) continue;
        ++done;
        CHECK(std::fabs(metrics::srcc(a, b) - brute_srcc(a, b)) < 1e-9);
        CHECK(std::fabs(metrics::plcc(a, b) - brute_pearson(a, b)) < 1e-9);
        CHECK(std::fabs(metrics::rmse(a, b) - brute_rmse(a, b)) < 1e-9);
        CHECK(metrics::pairwise_accuracy(a, b) == brute_pairwise(a, b));
    }
}

TEST_CASE("invariances") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 5 + rng.below(30);
        std::vector<double> a(n), b(n);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();

        // srcc invariant under strictly increasing transforms
        auto a_mono = a;
        for (auto& x : a_mono) x = std::exp(0.7 * x) + x;
        auto b_mono = b;
        for (auto& x : b_mono) x = std::atan(x) * 3.0 + 0.1 * x;
        CHECK(std::fabs(metrics::srcc(a, b) - metrics::srcc(a_mono, b_mono)) < 1e-12);

        // plcc invariant under positive affine transforms
        auto a_aff = a;
        for (auto& x : a_aff) x = 2.5 * x + 7.0;
        auto b_aff = b;
        for (auto& x : b_aff) x = 0.3 * x - 11.0;
        CHECK(std::fabs(metrics::plcc(a, b) - metrics::plcc(a_aff, b_aff)) < 1e-12);
    }
}

TEST_CASE("pairwise accuracy tie conventions") {
    // constant scores: every counted pair contributes 0.5
    CHECK(metrics::pairwise_accuracy({1, 1, 1}, {1, 2, 3}) == 0.5);
    // perfect agreement
    CHECK(metrics::pairwise_accuracy({1, 2, 3}, {10, 20, 30}) == 1.0);
    // mos ties are excluded from the pair set
    CHECK(metrics::pairwise_accuracy({1, 2, 3}, {5, 5, 9}) == 1.0);
    // all mos tied: no pairs at all
    CHECK_THROWS_AS(metrics::pairwise_accuracy({1, 2}, {5, 5}), std::invalid_argument);
}

TEST_CASE("classical baselines") {
    Rng rng(3);
    Image a(32, 32, 3);
    for (auto& v : a.data) v = rng.uniform();
    Image b = a;

    CHECK(metrics::psnr(a, b) == 100.0);
    CHECK(metrics::ssim(a, b) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::fabs(metrics::gmsd(a, b)) < 1e-12);

    Image zeros(8, 8, 1), ones(8, 8, 1);
    for (auto& v : ones.data) v = 1.0;
    CHECK(metrics::psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-12));

    Image c(32, 32, 3);
    for (auto& v : c.data) v = rng.uniform();
    CHECK(metrics::ssim(a, c) == doctest::Approx(metrics::ssim(c, a)).epsilon(1e-12));
    CHECK(metrics::ssim(a, c) < 1.0);
    CHECK(metrics::ssim(a, c) >= -1.0);
    CHECK(metrics::gmsd(a, c) > 0.0);
    CHECK(metrics::psnr(a, c) < 100.0);

    Image wrong(16, 16, 3);
    CHECK_THROWS_AS(metrics::psnr(a, wrong), std::invalid_argument);
    CHECK_THROWS_AS(metrics::ssim(a, wrong), std::invalid_argument);
    CHECK_THROWS_AS(metrics::gmsd(a, wrong), std::invalid_argument);
}
