#include "cadis/score.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cadis/rng.hpp"

namespace cadis::score {

std::vector<FeatureVector> extract_features(const nn::Model& model,
                                            const std::vector<Image>& refs,
                                            const std::vector<Image>& dists) {
    if (refs.size() != dists.size() || refs.empty())
        throw std::invalid_argument("extract_features: ref/dist batch mismatch");
    auto i_r = ag::constant(to_tensor(refs));
    auto i_d = ag::constant(to_tensor(dists));
    auto d = model.encode(i_d);
    auto z_c = model.content_encode(i_r);
    auto d_mod = model.modulate(d, z_c);
    auto pooled = ag::gap(d_mod);
    int b = static_cast<int>(pooled->value.dim(0));
    int c = static_cast<int>(pooled->value.dim(1));
    std::vector<FeatureVector> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i)
        out[static_cast<std::size_t>(i)] =
            FeatureVector(pooled->value.data.begin() + static_cast<std::ptrdiff_t>(i) * c,
                          pooled->value.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * c);
    return out;
}

FeatureVector extract_feature(const nn::Model& model, const Image& i_r, const Image& i_d) {
    return extract_features(model, {i_r}, {i_d})[0];
}

OrientResult orient(const std::vector<double>& y, const std::vector<std::size_t>& anchor_idx) {
    if (anchor_idx.empty()) throw std::invalid_argument("orient: no anchors given");
    double global = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double anchor = 0;
    for (auto i : anchor_idx) anchor += y.at(i);
    anchor /= static_cast<double>(anchor_idx.size());
    if (anchor >= global) return {y, Orientation::AsIs};
    std::vector<double> flipped(y.size());
    std::transform(y.begin(), y.end(), flipped.begin(), [](double v) { return -v; });
    return {flipped, Orientation::Flipped};
}

namespace {

double logistic4(double y, const double* beta) {
    return beta[0] + (beta[1] - beta[0]) / (1.0 + std::exp(-(y - beta[2]) / std::fabs(beta[3])));
}

double logistic_sse(const std::vector<double>& y, const std::vector<double>& mos,
                    const double* beta) {
    if (std::fabs(beta[3]) < 1e-12) return 1e300;
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double d = logistic4(y[i], beta) - mos[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

std::vector<double> logistic_map(const std::vector<double>& y, const std::vector<double>& mos) {
    if (y.size() != mos.size()) throw std::invalid_argument("logistic_map: length mismatch");
    if (y.size() < 5) throw std::invalid_argument("logistic_map: need at least 5 samples");
    auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    if (*ymin_it == *ymax_it)
        throw std::invalid_argument("logistic_map: degenerate (constant) input coordinate");
    auto [mmin, mmax] = std::minmax_element(mos.begin(), mos.end());
    if (*mmin == *mmax) throw std::invalid_argument("logistic_map: constant mos is degenerate");

    // Orient the initial guess by the sign of the rank relation.
    double corr = 0;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double mm = std::accumulate(mos.begin(), mos.end(), 0.0) / static_cast<double>(mos.size());
    for (std::size_t i = 0; i < y.size(); ++i) corr += (y[i] - my) * (mos[i] - mm);

    std::vector<double> ys = y;
    std::sort(ys.begin(), ys.end());
    double spread = (*ymax_it - *ymin_it);
    double beta[4];
    beta[0] = corr >= 0 ? *mmin : *mmax;
    beta[1] = corr >= 0 ? *mmax : *mmin;
    beta[2] = ys[ys.size() / 2];
    beta[3] = std::max(spread / 8.0, 1e-6);

    // Nelder-Mead on the four parameters.
    constexpr int dim = 4;
    std::vector<std::array<double, dim>> simplex(dim + 1);
    for (int v = 0; v <= dim; ++v) {
        for (int d = 0; d < dim; ++d) simplex[static_cast<std::size_t>(v)][static_cast<std::size_t>(d)] = beta[d];
        if (v > 0) {
            double& p = simplex[static_cast<std::size_t>(v)][static_cast<std::size_t>(v - 1)];
            p += (p != 0.0 ? 0.1 * std::fabs(p) : 0.1);
        }
    }
    auto f = [&](const std::array<double, dim>& p) { return logistic_sse(y, mos, p.data()); };
    std::vector<double> fv(dim + 1);
    for (int v = 0; v <= dim; ++v) fv[static_cast<std::size_t>(v)] = f(simplex[static_cast<std::size_t>(v)]);
    for (int it = 0; it < 2000; ++it) {
        std::vector<std::size_t> ord(dim + 1);
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::array<double, dim>> s2(dim + 1);
        std::vector<double> f2(dim + 1);
        for (int v = 0; v <= dim; ++v) {
            s2[static_cast<std::size_t>(v)] = simplex[ord[static_cast<std::size_t>(v)]];
            f2[static_cast<std::size_t>(v)] = fv[ord[static_cast<std::size_t>(v)]];
        }
        simplex = s2;
        fv = f2;
        if (fv[dim] - fv[0] < 1e-14 * (1.0 + std::fabs(fv[0]))) break;
        std::array<double, dim> centroid{};
        for (int v = 0; v < dim; ++v)
            for (int d = 0; d < dim; ++d) centroid[static_cast<std::size_t>(d)] += simplex[static_cast<std::size_t>(v)][static_cast<std::size_t>(d)] / dim;
        auto blend = [&](double t) {
            std::array<double, dim> p;
            for (int d = 0; d < dim; ++d)
                p[static_cast<std::size_t>(d)] = centroid[static_cast<std::size_t>(d)] +
                                                 t * (centroid[static_cast<std::size_t>(d)] -
                                                      simplex[dim][static_cast<std::size_t>(d)]);
            return p;
        };
        auto refl = blend(1.0);
        double fr = f(refl);
        if (fr < fv[0]) {
            auto exp_p = blend(2.0);
            double fe = f(exp_p);
            simplex[dim] = fe < fr ? exp_p : refl;
            fv[dim] = std::min(fe, fr);
        } else if (fr < fv[dim - 1]) {
            simplex[dim] = refl;
            fv[dim] = fr;
        } else {
            auto con = blend(fr < fv[dim] ? 0.5 : -0.5);
            double fc = f(con);
            if (fc < std::min(fr, fv[dim])) {
                simplex[dim] = con;
                fv[dim] = fc;
            } else {
                for (int v = 1; v <= dim; ++v) {
                    for (int d = 0; d < dim; ++d)
                        simplex[static_cast<std::size_t>(v)][static_cast<std::size_t>(d)] =
                            0.5 * (simplex[static_cast<std::size_t>(v)][static_cast<std::size_t>(d)] +
                                   simplex[0][static_cast<std::size_t>(d)]);
                    fv[static_cast<std::size_t>(v)] = f(simplex[static_cast<std::size_t>(v)]);
                }
            }
        }
    }
    const auto& best = simplex[0];
    std::vector<double> mapped(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) mapped[i] = logistic4(y[i], best.data());
    return mapped;
}

// ---- manifold probe ----

FeatureVector ManifoldProbe::curve(double q) const {
    if (control_points.size() < 2)
        throw std::invalid_argument("ManifoldProbe: need >= 2 control points");
    int segments = static_cast<int>(control_points.size()) - 1;
    double t = std::clamp(q, 0.0, 1.0) * segments;
    int seg = std::min(static_cast<int>(t), segments - 1);
    double frac = t - seg;
    const auto& a = control_points[static_cast<std::size_t>(seg)];
    const auto& b = control_points[static_cast<std::size_t>(seg + 1)];
    FeatureVector out(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) out[d] = (1 - frac) * a[d] + frac * b[d];
    return out;
}

double ManifoldProbe::min_segment_length() const {
    double best = 1e300;
    for (std::size_t s = 0; s + 1 < control_points.size(); ++s) {
        double acc = 0;
        for (std::size_t d = 0; d < control_points[s].size(); ++d) {
            double dd = control_points[s + 1][d] - control_points[s][d];
            acc += dd * dd;
        }
        best = std::min(best, std::sqrt(acc));
    }
    if (best <= 0) throw std::invalid_argument("ManifoldProbe: repeated control points");
    return best;
}

ManifoldProbe::Sample ManifoldProbe::generate(int count, std::uint64_t seed) const {
    min_segment_length();  // validates distinctness
    Rng rng(seed);
    Sample s;
    s.features.reserve(static_cast<std::size_t>(count));
    s.q.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        double q = (count == 1) ? 0.0 : static_cast<double>(i) / (count - 1);
        // jitter the parameter a little so samples are not perfectly gridded
        if (i != 0 && i != count - 1) q += 0.25 * rng.uniform(-1.0, 1.0) / count;
        q = std::clamp(q, 0.0, 1.0);
        FeatureVector f = curve(q);
        for (auto& v : f) v += noise_scale * rng.normal();
        s.features.push_back(std::move(f));
        s.q.push_back(q);
    }
    return s;
}

}  // namespace cadis::score
