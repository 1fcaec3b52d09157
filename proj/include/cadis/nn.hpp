#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadis/autograd.hpp"
#include "cadis/rng.hpp"
#include "cadis/tensor.hpp"

namespace cadis::nn {

using ag::Var;

// ---- parameter registry ----

struct ParamStore {
    std::vector<std::pair<std::string, Var>> items;

    Var add(const std::string& name, Tensor init, bool trainable = true) {
        Var v = ag::leaf(std::move(init), trainable);
        items.emplace_back(name, v);
        return v;
    }

    Var find(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return v;
        throw std::runtime_error("ParamStore: unknown parameter " + name);
    }

    std::vector<Var> with_prefix(const std::string& prefix) const {
        std::vector<Var> out;
        for (const auto& [k, v] : items)
            if (k.rfind(prefix, 0) == 0) out.push_back(v);
        return out;
    }

    std::vector<Var> all() const {
        std::vector<Var> out;
        out.reserve(items.size());
        for (const auto& [k, v] : items) out.push_back(v);
        return out;
    }
};

// ---- init helpers ----

inline Tensor he_normal(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.normal(0.0, std_dev);
    return t;
}

// ---- layers ----

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int k, int stride_,
           int pad_, Rng& rng, bool zero_init = false)
        : stride(stride_), pad(pad_) {
        Tensor wt = zero_init ? Tensor::zeros({out_ch, in_ch, k, k})
                              : he_normal({out_ch, in_ch, k, k},
                                          static_cast<std::int64_t>(in_ch) * k * k, rng);
        w = ps.add(name + ".w", std::move(wt));
        b = ps.add(name + ".b", Tensor::zeros({out_ch}));
    }

    Var operator()(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim, Rng& rng,
           bool zero_init = false) {
        Tensor wt = zero_init ? Tensor::zeros({out_dim, in_dim})
                              : he_normal({out_dim, in_dim}, in_dim, rng);
        w = ps.add(name + ".w", std::move(wt));
        b = ps.add(name + ".b", Tensor::zeros({out_dim}));
    }

    Var operator()(const Var& x) const { return ag::linear(x, w, b); }
};

// ---- configuration ----

struct ModelConfig {
    std::string profile = "desk";
    int resolution = 64;
    std::vector<int> enc_channels = {32, 64, 128, 256};
    int content_stem = 32;
    int content_stages = 3;  // residual stages after the stem (stem width doubles per stage)
    int content_dim = 128;
    int unet_base = 16;
    int unet_depth = 3;
    int film_hidden = 64;
    int disc_base = 32;
    int disc_layers = 3;
    double lambda_init = 0.1;
    bool scalar_gate = false;

    int feature_channels() const { return enc_channels.back(); }

    static ModelConfig desk() { return ModelConfig{}; }

    static ModelConfig paper() {
        ModelConfig c;
        c.profile = "paper";
        c.resolution = 448;
        c.enc_channels = {64, 128, 256, 512};
        c.content_stem = 64;
        c.content_stages = 3;
        c.content_dim = 512;
        c.unet_base = 64;
        c.unet_depth = 4;
        c.film_hidden = 256;
        c.disc_base = 64;
        c.disc_layers = 4;
        return c;
    }
};

// ---- network blocks ----

// Strided VGG-style degradation encoder: one stride-2 conv + ReLU per stage.
struct DegradationEncoder {
    std::vector<Conv2d> stages;

    DegradationEncoder() = default;
    DegradationEncoder(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
        int in_ch = 3;
        for (std::size_t i = 0; i < cfg.enc_channels.size(); ++i) {
            stages.emplace_back(ps, "enc.s" + std::to_string(i), in_ch, cfg.enc_channels[i], 3, 2,
                                1, rng);
            in_ch = cfg.enc_channels[i];
        }
    }

    Var operator()(Var x) const {
        for (const auto& c : stages) x = ag::relu(c(x));
        return x;
    }
};

struct ResBlock {
    Conv2d c1, c2;

    ResBlock() = default;
    ResBlock(ParamStore& ps, const std::string& name, int ch, Rng& rng)
        : c1(ps, name + ".c1", ch, ch, 3, 1, 1, rng), c2(ps, name + ".c2", ch, ch, 3, 1, 1, rng) {}

    Var operator()(const Var& x) const { return ag::relu(ag::add(x, c2(ag::relu(c1(x))))); }
};

// Residual content encoder producing the content code z_c.
struct ContentEncoder {
    Conv2d stem;
    std::vector<ResBlock> blocks;
    std::vector<Conv2d> downs;  // between stages
    Linear head;

    ContentEncoder() = default;
    ContentEncoder(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
        int ch = cfg.content_stem;
        stem = Conv2d(ps, "content.stem", 3, ch, 3, 2, 1, rng);
        for (int i = 0; i < cfg.content_stages; ++i) {
            blocks.emplace_back(ps, "content.res" + std::to_string(i), ch, rng);
            if (i + 1 < cfg.content_stages) {
                downs.emplace_back(ps, "content.down" + std::to_string(i), ch, ch * 2, 3, 2, 1,
                                   rng);
                ch *= 2;
            }
        }
        blocks.emplace_back(ps, "content.res" + std::to_string(cfg.content_stages), ch, rng);
        head = Linear(ps, "content.head", ch, cfg.content_dim, rng);
    }

    Var operator()(Var x) const {
        x = ag::relu(stem(x));
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            x = blocks[i](x);
            if (i < downs.size()) x = ag::relu(downs[i](x));
        }
        return head(ag::gap(x));
    }
};

// Content-conditioned residual modulation of the degradation feature:
//   M_c = tanh(f(z_c)),  M_hat = sigmoid(g) . M_c,  D_mod = D + lambda * (M_hat . D)
struct CausalLayer {
    Linear f1, f2, f3;
    Var gate;    // per-channel (or scalar) gating logits
    Var lambda;  // modulation strength, clamped >= 0 after updates

    CausalLayer() = default;
    CausalLayer(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
        int cd = cfg.content_dim, fc = cfg.feature_channels();
        f1 = Linear(ps, "causal.f1", cd, cd, rng);
        f2 = Linear(ps, "causal.f2", cd, cd, rng);
        f3 = Linear(ps, "causal.f3", cd, fc, rng);
        gate = ps.add("causal.gate", Tensor::zeros({cfg.scalar_gate ? 1 : fc}));
        lambda = ps.add("causal.lambda", Tensor::full({1}, cfg.lambda_init));
    }

    Var mask(const Var& z_c) const { return ag::tanh_op(f3(ag::relu(f2(ag::relu(f1(z_c)))))); }

    Var operator()(const Var& d, const Var& z_c) const {
        Var m = mask(z_c);
        Var gs = ag::sigmoid(gate);
        Var m_hat = (gate->value.numel() == 1) ? ag::scale_var(m, gs) : ag::row_scale(m, gs);
        return ag::add(d, ag::scale_var(ag::channel_scale(d, m_hat), lambda));
    }
};

// MLP mapping pooled D_mod to per-site FiLM (gamma, beta). Heads are
// zero-initialized so conditioning starts at the identity.
struct FilmMlp {
    Linear trunk;
    std::vector<Linear> gamma_heads, beta_heads;

    FilmMlp() = default;
    FilmMlp(ParamStore& ps, const std::string& name, int in_dim, int hidden,
            const std::vector<int>& site_channels, Rng& rng) {
        trunk = Linear(ps, name + ".trunk", in_dim, hidden, rng);
        for (std::size_t i = 0; i < site_channels.size(); ++i) {
            gamma_heads.emplace_back(ps, name + ".g" + std::to_string(i), hidden,
                                     site_channels[i], rng, /*zero_init=*/true);
            beta_heads.emplace_back(ps, name + ".b" + std::to_string(i), hidden,
                                    site_channels[i], rng, /*zero_init=*/true);
        }
    }

    Var features(const Var& pooled) const { return ag::relu(trunk(pooled)); }

    std::pair<Var, Var> site(const Var& h, std::size_t i) const {
        return {gamma_heads[i](h), beta_heads[i](h)};
    }
};

struct FilmResBlock {
    Conv2d c1, c2;

    FilmResBlock() = default;
    FilmResBlock(ParamStore& ps, const std::string& name, int ch, Rng& rng)
        : c1(ps, name + ".c1", ch, ch, 3, 1, 1, rng), c2(ps, name + ".c2", ch, ch, 3, 1, 1, rng) {}

    Var operator()(const Var& x, const Var& gamma, const Var& beta) const {
        Var h = ag::relu(ag::film(c1(x), gamma, beta));
        return ag::relu(ag::add(x, c2(h)));
    }
};

// FiLM-conditioned U-Net reconstructing the distorted image from the
// reference image and the modulated degradation feature.
struct UNetDecoder {
    int depth = 0;
    int resolution = 0;
    Conv2d stem, out_conv;
    std::vector<FilmResBlock> enc_blocks, dec_blocks;
    FilmResBlock bottleneck;
    std::vector<Conv2d> down_convs, up_convs, merge_convs;
    FilmMlp film_mlp;

    UNetDecoder() = default;
    UNetDecoder(ParamStore& ps, const ModelConfig& cfg, Rng& rng)
        : depth(cfg.unet_depth), resolution(cfg.resolution) {
        int base = cfg.unet_base;
        stem = Conv2d(ps, "dec.stem", 3, base, 3, 1, 1, rng);
        std::vector<int> site_ch;
        for (int i = 0; i < depth; ++i) {
            int ch = base << i;
            enc_blocks.emplace_back(ps, "dec.enc" + std::to_string(i), ch, rng);
            site_ch.push_back(ch);
            down_convs.emplace_back(ps, "dec.down" + std::to_string(i), ch, ch * 2, 3, 2, 1, rng);
        }
        int bch = base << depth;
        bottleneck = FilmResBlock(ps, "dec.bottleneck", bch, rng);
        site_ch.push_back(bch);
        for (int i = depth - 1; i >= 0; --i) {
            int ch = base << i;
            up_convs.emplace_back(ps, "dec.up" + std::to_string(i), ch * 2, ch, 3, 1, 1, rng);
            merge_convs.emplace_back(ps, "dec.merge" + std::to_string(i), ch * 2, ch, 3, 1, 1,
                                     rng);
            dec_blocks.emplace_back(ps, "dec.dec" + std::to_string(i), ch, rng);
            site_ch.push_back(ch);
        }
        out_conv = Conv2d(ps, "dec.out", base, 3, 3, 1, 1, rng);
        film_mlp = FilmMlp(ps, "dec.film", cfg.feature_channels(), cfg.film_hidden, site_ch, rng);
    }

    // i_r: (B,3,H,W); d_mod: (B,C,h,w)
    Var operator()(const Var& i_r, const Var& d_mod) const {
        const auto& s = i_r->value.shape;
        if (s.size() != 4 || s[1] != 3) throw std::invalid_argument("decode: expects (B,3,H,W)");
        if (s[2] % (1 << depth) != 0 || s[3] % (1 << depth) != 0)
            throw std::invalid_argument("decode: resolution not divisible by 2^depth");
        Var h = film_mlp.features(ag::gap(d_mod));
        std::size_t site = 0;
        Var x = ag::relu(stem(i_r));
        std::vector<Var> skips;
        for (int i = 0; i < depth; ++i) {
            auto [g, b] = film_mlp.site(h, site++);
            x = enc_blocks[static_cast<std::size_t>(i)](x, g, b);
            skips.push_back(x);
            x = ag::relu(down_convs[static_cast<std::size_t>(i)](x));
        }
        {
            auto [g, b] = film_mlp.site(h, site++);
            x = bottleneck(x, g, b);
        }
        for (int i = 0; i < depth; ++i) {
            x = ag::relu(up_convs[static_cast<std::size_t>(i)](ag::upsample_nearest2(x)));
            x = ag::relu(merge_convs[static_cast<std::size_t>(i)](
                ag::concat_channels(x, skips[static_cast<std::size_t>(depth - 1 - i)])));
            auto [g, b] = film_mlp.site(h, site++);
            x = dec_blocks[static_cast<std::size_t>(i)](x, g, b);
        }
        return ag::sigmoid(out_conv(x));
    }
};

// Patch discriminator: stride-2 conv stack + 1-channel conv head; each output
// logit covers one receptive-field patch.
struct PatchDiscriminator {
    std::vector<Conv2d> convs;
    Conv2d head;

    PatchDiscriminator() = default;
    PatchDiscriminator(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
        int in_ch = 3, ch = cfg.disc_base;
        for (int i = 0; i < cfg.disc_layers; ++i) {
            convs.emplace_back(ps, "disc.c" + std::to_string(i), in_ch, ch, 3, 2, 1, rng);
            in_ch = ch;
            ch *= 2;
        }
        head = Conv2d(ps, "disc.head", in_ch, 1, 3, 1, 0, rng);
    }

    Var operator()(Var x) const {
        for (const auto& c : convs) x = ag::leaky_relu(c(x));
        return head(x);
    }
};

// Two-layer fully connected regression head over the pooled feature.
struct RegressionHead {
    Linear l1, l2;

    RegressionHead() = default;
    RegressionHead(ParamStore& ps, int in_dim, int hidden, Rng& rng) {
        l1 = Linear(ps, "head.l1", in_dim, hidden, rng);
        l2 = Linear(ps, "head.l2", hidden, 1, rng);
    }

    Var operator()(const Var& f) const { return l2(ag::relu(l1(f))); }
};

// Frozen random conv feature extractor used by the desk-profile perceptual
// loss. Deterministic for a given seed; parameters never receive gradients.
struct PerceptualNet {
    ParamStore params;  // non-trainable
    std::vector<Conv2d> convs;

    explicit PerceptualNet(std::uint64_t seed = 0xC0FFEEu) {
        Rng rng(seed);
        int chans[4] = {3, 8, 16, 32};
        for (int i = 0; i < 3; ++i) {
            Tensor w = he_normal({chans[i + 1], chans[i], 3, 3},
                                 static_cast<std::int64_t>(chans[i]) * 9, rng);
            Var wv = params.add("perc.c" + std::to_string(i) + ".w", std::move(w),
                                /*trainable=*/false);
            Var bv = params.add("perc.c" + std::to_string(i) + ".b", Tensor::zeros({chans[i + 1]}),
                                /*trainable=*/false);
            Conv2d c;
            c.w = wv;
            c.b = bv;
            c.stride = 2;
            c.pad = 1;
            convs.push_back(c);
        }
    }

    std::vector<Var> taps(Var x) const {
        std::vector<Var> out;
        for (const auto& c : convs) {
            x = ag::relu(c(x));
            out.push_back(x);
        }
        return out;
    }
};

// ---- full model ----

struct Model {
    ModelConfig cfg;
    ParamStore params;
    DegradationEncoder encoder;
    ContentEncoder content_encoder;
    CausalLayer causal;
    UNetDecoder decoder;
    PatchDiscriminator discriminator;

    Model(const ModelConfig& c, std::uint64_t seed) : cfg(c) {
        Rng rng(seed);
        encoder = DegradationEncoder(params, cfg, rng);
        content_encoder = ContentEncoder(params, cfg, rng);
        causal = CausalLayer(params, cfg, rng);
        decoder = UNetDecoder(params, cfg, rng);
        discriminator = PatchDiscriminator(params, cfg, rng);
    }

    void check_resolution(const Var& x, const char* what) const {
        const auto& s = x->value.shape;
        if (s.size() != 4 || s[1] != 3 || s[2] != cfg.resolution || s[3] != cfg.resolution)
            throw std::invalid_argument(std::string(what) + ": expected (B,3," +
                                        std::to_string(cfg.resolution) + "," +
                                        std::to_string(cfg.resolution) + "), got " +
                                        x->value.shape_str());
    }

    Var encode(const Var& i_d) const {
        check_resolution(i_d, "encode");
        return encoder(i_d);
    }

    Var content_encode(const Var& i_r) const {
        check_resolution(i_r, "content_encode");
        return content_encoder(i_r);
    }

    Var modulate(const Var& d, const Var& z_c) const { return causal(d, z_c); }

    Var decode(const Var& i_r, const Var& d_mod) const { return decoder(i_r, d_mod); }

    Var discriminate(const Var& img) const {
        check_resolution(img, "discriminate");
        return discriminator(img);
    }

    std::vector<Var> generator_params(bool include_causal = true) const {
        std::vector<Var> out;
        for (const auto& [k, v] : params.items) {
            if (k.rfind("disc.", 0) == 0) continue;
            if (!include_causal && k.rfind("causal.", 0) == 0) continue;
            out.push_back(v);
        }
        return out;
    }

    std::vector<Var> discriminator_params() const { return params.with_prefix("disc."); }
};

// ---- DAG acyclicity penalty ----

// H(A) = tr((I + (c/s) A.A)^n) - n; zero exactly when the nonzero pattern of A
// is acyclic.
inline double dag_acyclicity_penalty(const Tensor& a, double c = 1.0, double s = 1.0) {
    if (a.ndim() != 2 || a.shape[0] != a.shape[1])
        throw std::invalid_argument("dag_acyclicity_penalty: matrix must be square");
    if (c <= 0 || s <= 0)
        throw std::invalid_argument("dag_acyclicity_penalty: c and s must be positive");
    int n = static_cast<int>(a.shape[0]);
    std::vector<double> base(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v = a.data[static_cast<std::size_t>(i) * n + j];
            base[static_cast<std::size_t>(i) * n + j] = (c / s) * v * v + (i == j ? 1.0 : 0.0);
        }
    std::vector<double> p = base, tmp(base.size());
    for (int e = 1; e < n; ++e) {
        kernels::gemm(false, false, n, n, n, 1.0, p.data(), n, base.data(), n, 0.0, tmp.data(),
                      n);
        p.swap(tmp);
    }
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += p[static_cast<std::size_t>(i) * n + i];
    return tr - n;
}

}  // namespace cadis::nn
