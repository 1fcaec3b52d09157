#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cadis/image.hpp"
#include "cadis/nn.hpp"

namespace cadis::eval {

struct PerLevelStat {
    std::string kind;
    int level = 0;
    double srcc = 0.0;
    double plcc = 0.0;
    double pairwise_acc = 0.0;
    int group_size = 0;
    bool skipped = false;
};

struct SensitivityStats {
    double slope_srcc = 0.0;
    double slope_plcc = 0.0;
    double mean_curve_srcc = 0.0;
    int used_refs = 0;
    int skipped_refs = 0;
};

struct EvalReport {
    double plcc = 0.0, srcc = 0.0, rmse = 0.0;
    std::vector<PerLevelStat> per_level;
    double mean_level_srcc = 0.0, mean_level_plcc = 0.0, mean_pairwise_acc = 0.0;
    SensitivityStats sensitivity;
    std::optional<double> counterfactual_acc;
    std::optional<double> counterfactual_ci_lo, counterfactual_ci_hi;
    int counterfactual_n = 0;
    std::vector<std::string> warnings;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    void save_json(const std::string& path) const;
    void save_csv(const std::string& path) const;
};

// Least-squares slope of y against x.
double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

// Within each (kind, level) group: correlation and pairwise accuracy of model
// scores against MOS across contents. Too-small or degenerate groups are
// skipped and recorded.
std::vector<PerLevelStat> fixed_level_ranking(const std::vector<double>& scores,
                                              const std::vector<double>& mos,
                                              const std::vector<std::string>& kinds,
                                              const std::vector<int>& levels,
                                              std::vector<std::string>* warnings = nullptr);

// Per-reference slope of MOS-vs-level and score-vs-level; correlations of the
// two slope vectors across references, plus level-mean curve SRCC.
SensitivityStats sensitivity_alignment(const std::vector<double>& scores,
                                       const std::vector<double>& mos,
                                       const std::vector<int>& levels,
                                       const std::vector<std::string>& ref_ids);

// Counterfactual degradation transfer: re-decode D(src distorted) onto a new
// reference and check the result lands closer to the same-kind ground truth.
// Uses the pre-modulation degradation feature unless use_modulated is set.
bool counterfactual_transfer(const nn::Model& model, const Image& i_r1, const Image& i_d1,
                             const Image& i_r2, const Image& same_kind_truth,
                             const Image& other_kind_truth, bool use_modulated = false);

struct BinomialCi {
    double lo = 0.0, hi = 0.0;
};
// 95% Wilson score interval.
BinomialCi binomial_ci(int successes, int trials, double z = 1.959963984540054);

}  // namespace cadis::eval
