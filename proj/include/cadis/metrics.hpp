#pragma once

#include <vector>

#include "cadis/image.hpp"

namespace cadis::metrics {

// Average ranks (1-based) with tie averaging.
std::vector<double> ranks(const std::vector<double>& v);

// Spearman rank correlation (Pearson over tie-averaged ranks). Throws on
// constant input or length mismatch / length < 2.
double srcc(const std::vector<double>& a, const std::vector<double>& b);

// Pearson linear correlation. Throws on zero variance.
double plcc(const std::vector<double>& a, const std::vector<double>& b);

double rmse(const std::vector<double>& a, const std::vector<double>& b);

// Fraction of concordant ordered pairs between scores and mos. Ties in
// scores count 0.5; pairs tied in mos are excluded.
double pairwise_accuracy(const std::vector<double>& scores, const std::vector<double>& mos);

// Classical FR-IQA baselines on [0,1] images (luma internally, Rec.601).
// psnr is capped at 100 dB for identical inputs.
double psnr(const Image& a, const Image& b);
double ssim(const Image& a, const Image& b);
double gmsd(const Image& a, const Image& b);

}  // namespace cadis::metrics
