// Neighborhood-graph embedding to one dimension: brute-force kNN, smoothed
// local connectivity, fuzzy union, spectral initialization of the layout and
// stochastic attract/repel refinement with negative sampling.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cadis/rng.hpp"
#include "cadis/score.hpp"

namespace cadis::score {

void EmbeddingParams::validate() const {
    if (n_neighbors < 2) throw std::invalid_argument("n_neighbors must be >= 2");
    if (min_dist < 0.0 || min_dist >= 1.0) throw std::invalid_argument("min_dist must be in [0,1)");
}

namespace {

struct Edge {
    int i, j;
    double w;
};

double sq_dist(const FeatureVector& a, const FeatureVector& b) {
    double acc = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double d = a[k] - b[k];
        acc += d * d;
    }
    return acc;
}

// Fit the low-dimensional similarity curve 1/(1+a*x^(2b)) to the membership
// target exp(-(x - min_dist)) (1 inside min_dist): coarse grid + refinement.
std::pair<double, double> find_ab(double min_dist) {
    std::vector<double> xs, ys;
    for (double x = 0.0; x <= 3.0; x += 0.01) {
        xs.push_back(x);
        ys.push_back(x <= min_dist ? 1.0 : std::exp(-(x - min_dist)));
    }
    auto sse = [&](double a, double b) {
        double acc = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double f = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b));
            double d = f - ys[i];
            acc += d * d;
        }
        return acc;
    };
    double best_a = 1.0, best_b = 1.0, best = sse(1.0, 1.0);
    for (double a = 0.05; a <= 10.0; a *= 1.1)
        for (double b = 0.3; b <= 2.5; b += 0.02) {
            double v = sse(a, b);
            if (v < best) {
                best = v;
                best_a = a;
                best_b = b;
            }
        }
    // local refinement
    double step_a = best_a * 0.05, step_b = 0.01;
    for (int it = 0; it < 60; ++it) {
        bool improved = false;
        for (double da : {-step_a, step_a})
            for (double db : {-step_b, step_b}) {
                double a = best_a + da, b = best_b + db;
                if (a <= 0 || b <= 0) continue;
                double v = sse(a, b);
                if (v < best) {
                    best = v;
                    best_a = a;
                    best_b = b;
                    improved = true;
                }
            }
        if (!improved) {
            step_a *= 0.5;
            step_b *= 0.5;
        }
    }
    return {best_a, best_b};
}

}  // namespace

std::vector<double> embed_1d(const std::vector<FeatureVector>& features_in,
                             const EmbeddingParams& params) {
    params.validate();
    int n = static_cast<int>(features_in.size());
    if (n < params.n_neighbors + 1)
        throw std::invalid_argument("embed_1d: need at least n_neighbors+1 samples");
    std::vector<FeatureVector> features = features_in;
    if (params.l2_normalize) {
        for (auto& f : features) {
            double norm = std::sqrt(sq_dist(f, FeatureVector(f.size(), 0.0)));
            if (norm > 0)
                for (auto& v : f) v /= norm;
        }
    }

    int k = std::min(params.n_neighbors, n - 1);

    // kNN (brute force; evaluation sets are desk-scale).
    std::vector<std::vector<std::pair<double, int>>> knn(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> d;
        d.reserve(static_cast<std::size_t>(n) - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) d.emplace_back(std::sqrt(sq_dist(features[static_cast<std::size_t>(i)],
                                                         features[static_cast<std::size_t>(j)])),
                                       j);
        std::partial_sort(d.begin(), d.begin() + k, d.end());
        d.resize(static_cast<std::size_t>(k));
        knn[static_cast<std::size_t>(i)] = std::move(d);
    }

    // Smoothed local connectivity: per-point rho and sigma with
    // sum_j exp(-(d_ij - rho)/sigma) = log2(k).
    double target = std::log2(static_cast<double>(k));
    std::vector<std::vector<double>> memb(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& nb = knn[static_cast<std::size_t>(i)];
        double rho = 0.0;
        for (const auto& [d, j] : nb)
            if (d > 0) {
                rho = d;
                break;
            }
        double lo = 1e-8, hi = 1e4;
        for (int it = 0; it < 64; ++it) {
            double mid = 0.5 * (lo + hi);
            double s = 0;
            for (const auto& [d, j] : nb) s += std::exp(-std::max(0.0, d - rho) / mid);
            if (s > target)
                hi = mid;
            else
                lo = mid;
        }
        double sigma = 0.5 * (lo + hi);
        auto& m = memb[static_cast<std::size_t>(i)];
        m.reserve(nb.size());
        for (const auto& [d, j] : nb) m.push_back(std::exp(-std::max(0.0, d - rho) / sigma));
    }

    // Fuzzy union: w = w_ij + w_ji - w_ij * w_ji.
    std::vector<std::vector<std::pair<int, double>>> directed(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (std::size_t t = 0; t < knn[static_cast<std::size_t>(i)].size(); ++t)
            directed[static_cast<std::size_t>(i)].emplace_back(
                knn[static_cast<std::size_t>(i)][t].second, memb[static_cast<std::size_t>(i)][t]);
    auto lookup = [&](int i, int j) {
        for (const auto& [jj, w] : directed[static_cast<std::size_t>(i)])
            if (jj == j) return w;
        return 0.0;
    };
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (const auto& [j, wij] : directed[static_cast<std::size_t>(i)]) {
            if (j < i && lookup(j, i) > 0) continue;  // handled from the other side
            double wji = lookup(j, i);
            double w = wij + wji - wij * wji;
            if (w > 0) edges.push_back({std::min(i, j), std::max(i, j), w});
        }

    // Spectral initialization: second eigenvector of the normalized adjacency
    // by deflated power iteration.
    std::vector<double> deg(static_cast<std::size_t>(n), 1e-12);
    for (const auto& e : edges) {
        deg[static_cast<std::size_t>(e.i)] += e.w;
        deg[static_cast<std::size_t>(e.j)] += e.w;
    }
    std::vector<double> v1(static_cast<std::size_t>(n));
    double norm1 = 0;
    for (int i = 0; i < n; ++i) {
        v1[static_cast<std::size_t>(i)] = std::sqrt(deg[static_cast<std::size_t>(i)]);
        norm1 += deg[static_cast<std::size_t>(i)];
    }
    norm1 = std::sqrt(norm1);
    for (auto& v : v1) v /= norm1;

    Rng rng(mix_seed(params.seed, 0x5eedULL));
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = rng.normal();
    auto matvec = [&](const std::vector<double>& in, std::vector<double>& out) {
        // out = (M + I) in with M = D^{-1/2} W D^{-1/2}
        std::copy(in.begin(), in.end(), out.begin());
        for (const auto& e : edges) {
            double s = e.w / std::sqrt(deg[static_cast<std::size_t>(e.i)] *
                                       deg[static_cast<std::size_t>(e.j)]);
            out[static_cast<std::size_t>(e.i)] += s * in[static_cast<std::size_t>(e.j)];
            out[static_cast<std::size_t>(e.j)] += s * in[static_cast<std::size_t>(e.i)];
        }
    };
    std::vector<double> tmp(static_cast<std::size_t>(n));
    for (int it = 0; it < 1000; ++it) {
        double proj = std::inner_product(x.begin(), x.end(), v1.begin(), 0.0);
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] -= proj * v1[static_cast<std::size_t>(i)];
        matvec(x, tmp);
        double nrm = std::sqrt(std::inner_product(tmp.begin(), tmp.end(), tmp.begin(), 0.0));
        if (nrm < 1e-30) break;
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = tmp[static_cast<std::size_t>(i)] / nrm;
    }
    double max_abs = 1e-12;
    for (double v : x) max_abs = std::max(max_abs, std::fabs(v));
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        y[static_cast<std::size_t>(i)] =
            10.0 * x[static_cast<std::size_t>(i)] / max_abs + 1e-4 * rng.normal();

    // SGD layout refinement. In one dimension points cannot move around each
    // other, so large steps cause rank swaps the optimizer never repairs; the
    // spectral order is already good and only needs small adjustments.
    auto [a, b] = find_ab(params.min_dist);
    int n_epochs = 200;
    double max_w = 0;
    for (const auto& e : edges) max_w = std::max(max_w, e.w);
    std::vector<double> epochs_per_sample(edges.size()), next_sample(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        epochs_per_sample[e] = max_w / edges[e].w;
        next_sample[e] = epochs_per_sample[e];
    }
    const double neg_rate = 5.0;
    auto clip = [](double v) { return std::clamp(v, -4.0, 4.0); };
    for (int epoch = 0; epoch < n_epochs; ++epoch) {
        double alpha = 0.05 * (1.0 - static_cast<double>(epoch) / n_epochs);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            if (next_sample[e] > epoch + 1) continue;
            next_sample[e] += epochs_per_sample[e];
            int i = edges[e].i, j = edges[e].j;
            double diff = y[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)];
            double d2 = diff * diff;
            if (d2 > 0) {
                double coeff = (-2.0 * a * b * std::pow(d2, b - 1.0)) /
                               (1.0 + a * std::pow(d2, b));
                double g = clip(coeff * diff) * alpha;
                y[static_cast<std::size_t>(i)] += g;
                y[static_cast<std::size_t>(j)] -= g;
            }
            for (int neg = 0; neg < static_cast<int>(neg_rate); ++neg) {
                int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
                if (t == i) continue;
                double nd = y[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(t)];
                double nd2 = nd * nd;
                double coeff = (2.0 * b) / ((0.001 + nd2) * (1.0 + a * std::pow(nd2, b)));
                y[static_cast<std::size_t>(i)] += clip(coeff * nd) * alpha;
            }
        }
    }
    return y;
}

}  // namespace cadis::score
