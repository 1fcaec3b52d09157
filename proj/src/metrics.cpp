#include "cadis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cadis::metrics {

std::vector<double> ranks(const std::vector<double>& v) {
    std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

namespace {

void check_lengths(const std::vector<double>& a, const std::vector<double>& b, std::size_t min) {
    if (a.size() != b.size()) throw std::invalid_argument("metric: length mismatch");
    if (a.size() < min) throw std::invalid_argument("metric: too few samples");
}

}  // namespace

double plcc(const std::vector<double>& a, const std::vector<double>& b) {
    check_lengths(a, b, 2);
    double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::invalid_argument("plcc: undefined for constant input");
    return sab / std::sqrt(saa * sbb);
}

double srcc(const std::vector<double>& a, const std::vector<double>& b) {
    check_lengths(a, b, 2);
    return plcc(ranks(a), ranks(b));
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
    check_lengths(a, b, 1);
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

double pairwise_accuracy(const std::vector<double>& scores, const std::vector<double>& mos) {
    check_lengths(scores, mos, 2);
    double hits = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = i + 1; j < scores.size(); ++j) {
            if (mos[i] == mos[j]) continue;  // tie in ground truth: excluded
            ++pairs;
            if (scores[i] == scores[j])
                hits += 0.5;
            else if ((scores[i] > scores[j]) == (mos[i] > mos[j]))
                hits += 1.0;
        }
    if (pairs == 0) throw std::invalid_argument("pairwise_accuracy: all mos values tied");
    return hits / static_cast<double>(pairs);
}

// ---- image baselines ----

namespace {

void check_shapes(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw std::invalid_argument("image metric: shape mismatch");
}

// Reflect-padded 2-D filtering of a grayscale buffer with a separable kernel.
std::vector<double> gauss_filter(const std::vector<double>& g, int h, int w,
                                 const std::vector<double>& k) {
    int radius = static_cast<int>(k.size() / 2);
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    std::vector<double> tmp(g.size()), out(g.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[static_cast<std::size_t>(i + radius)] *
                       g[static_cast<std::size_t>(y) * w + reflect(x + i, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[static_cast<std::size_t>(i + radius)] *
                       tmp[static_cast<std::size_t>(reflect(y + i, h)) * w + x];
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_shapes(a, b);
    double mse = image_mse(a, b);
    if (mse <= 0.0) return 100.0;  // identical-image cap
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
    check_shapes(a, b);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    auto ga = to_gray(a), gb = to_gray(b);
    int h = a.h, w = a.w;
    // 11-tap Gaussian window, sigma 1.5.
    std::vector<double> k(11);
    double s = 0;
    for (int i = -5; i <= 5; ++i) {
        k[static_cast<std::size_t>(i + 5)] = std::exp(-0.5 * i * i / (1.5 * 1.5));
        s += k[static_cast<std::size_t>(i + 5)];
    }
    for (auto& v : k) v /= s;

    auto mu_a = gauss_filter(ga, h, w, k);
    auto mu_b = gauss_filter(gb, h, w, k);
    std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
    for (std::size_t i = 0; i < ga.size(); ++i) {
        aa[i] = ga[i] * ga[i];
        bb[i] = gb[i] * gb[i];
        ab[i] = ga[i] * gb[i];
    }
    auto m_aa = gauss_filter(aa, h, w, k);
    auto m_bb = gauss_filter(bb, h, w, k);
    auto m_ab = gauss_filter(ab, h, w, k);
    double acc = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        double va = m_aa[i] - mu_a[i] * mu_a[i];
        double vb = m_bb[i] - mu_b[i] * mu_b[i];
        double cov = m_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(ga.size());
}

double gmsd(const Image& a, const Image& b) {
    check_shapes(a, b);
    auto ga = to_gray(a), gb = to_gray(b);
    int h = a.h, w = a.w;
    // 2x average-pool downsampling, then Prewitt gradient magnitude.
    int h2 = h / 2, w2 = w / 2;
    auto pool = [&](const std::vector<double>& g) {
        std::vector<double> out(static_cast<std::size_t>(h2) * w2);
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x)
                out[static_cast<std::size_t>(y) * w2 + x] =
                    0.25 * (g[static_cast<std::size_t>(2 * y) * w + 2 * x] +
                            g[static_cast<std::size_t>(2 * y) * w + 2 * x + 1] +
                            g[static_cast<std::size_t>(2 * y + 1) * w + 2 * x] +
                            g[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1]);
        return out;
    };
    auto pa = pool(ga), pb = pool(gb);
    auto grad_mag = [&](const std::vector<double>& g) {
        std::vector<double> out(static_cast<std::size_t>(h2) * w2, 0.0);
        auto cl = [&](int y, int x) {
            y = std::clamp(y, 0, h2 - 1);
            x = std::clamp(x, 0, w2 - 1);
            return g[static_cast<std::size_t>(y) * w2 + x];
        };
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x) {
                double gx = (cl(y - 1, x + 1) + cl(y, x + 1) + cl(y + 1, x + 1) -
                             cl(y - 1, x - 1) - cl(y, x - 1) - cl(y + 1, x - 1)) /
                            3.0;
                double gy = (cl(y + 1, x - 1) + cl(y + 1, x) + cl(y + 1, x + 1) -
                             cl(y - 1, x - 1) - cl(y - 1, x) - cl(y - 1, x + 1)) /
                            3.0;
                out[static_cast<std::size_t>(y) * w2 + x] = std::sqrt(gx * gx + gy * gy);
            }
        return out;
    };
    auto ma = grad_mag(pa), mb = grad_mag(pb);
    const double c = 0.0026;  // 170 on the 255^2 scale
    std::vector<double> gms(ma.size());
    double mean = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        gms[i] = (2 * ma[i] * mb[i] + c) / (ma[i] * ma[i] + mb[i] * mb[i] + c);
        mean += gms[i];
    }
    mean /= static_cast<double>(gms.size());
    double var = 0;
    for (double v : gms) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(gms.size()));
}

}  // namespace cadis::metrics
