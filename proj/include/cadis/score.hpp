#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cadis/image.hpp"
#include "cadis/nn.hpp"

namespace cadis::score {

using FeatureVector = std::vector<double>;

struct EmbeddingParams {
    int n_neighbors = 15;
    double min_dist = 0.1;
    std::uint64_t seed = 0;
    bool l2_normalize = false;

    void validate() const;
};

enum class Orientation { AsIs, Flipped };

struct QualityEstimate {
    double y = 0.0;
    std::optional<double> m_hat;
    Orientation orientation = Orientation::AsIs;
};

// Pooled modulated degradation feature for one (reference, distorted) pair.
// Batch version amortizes the forward pass.
FeatureVector extract_feature(const nn::Model& model, const Image& i_r, const Image& i_d);
std::vector<FeatureVector> extract_features(const nn::Model& model,
                                            const std::vector<Image>& refs,
                                            const std::vector<Image>& dists);

// Fuzzy-neighborhood-graph 1-D layout (UMAP-style): kNN graph with smoothed
// local connectivity, spectral initialization, SGD attract/repel refinement.
// Deterministic for a fixed seed.
std::vector<double> embed_1d(const std::vector<FeatureVector>& features,
                             const EmbeddingParams& params);

// Flips the coordinate so the anchor (known high-quality) samples sit at or
// above the global mean. Idempotent.
struct OrientResult {
    std::vector<double> y;
    Orientation orientation;
};
OrientResult orient(const std::vector<double>& y, const std::vector<std::size_t>& anchor_idx);

// 4-parameter monotone logistic least-squares map from relative coordinates
// to the MOS scale (used for PLCC only; SRCC uses the raw coordinate).
std::vector<double> logistic_map(const std::vector<double>& y, const std::vector<double>& mos);

// Synthetic 1-D manifold generator: a piecewise-linear bi-Lipschitz curve
// with Gaussian perturbation, used as the construction oracle for embed_1d.
struct ManifoldProbe {
    std::vector<FeatureVector> control_points;  // >= 2 distinct points
    double noise_scale = 0.0;

    struct Sample {
        std::vector<FeatureVector> features;
        std::vector<double> q;  // ground-truth latent coordinate in [0,1]
    };
    FeatureVector curve(double q) const;
    Sample generate(int count, std::uint64_t seed) const;
    double min_segment_length() const;
};

}  // namespace cadis::score
