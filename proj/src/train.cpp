#include "cadis/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cadis/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace cadis::train {

// ---- config ----

void TrainConfig::validate(int decoder_depth) const {
    if (phase != "pretrain" && phase != "finetune")
        throw std::invalid_argument("phase must be pretrain or finetune");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (flip_prob < 0.0 || flip_prob > 1.0)
        throw std::invalid_argument("flip_prob must be in [0,1]");
    if (schedule != "cosine") throw std::invalid_argument("unknown schedule: " + schedule);
    if (resize % (1 << decoder_depth) != 0)
        throw std::invalid_argument("resize must be divisible by 2^decoder_depth");
    if (precision != "float32" && precision != "float64")
        throw std::invalid_argument("precision must be float32 or float64");
    loss_weights.validate();
}

void TrainConfig::apply_kv(const std::string& key, const std::string& value) {
    auto as_bool = [&] {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw std::invalid_argument("bad boolean for " + key + ": " + value);
    };
    if (key == "phase") phase = value;
    else if (key == "epochs") epochs = std::stoi(value);
    else if (key == "batch_size") batch_size = std::stoi(value);
    else if (key == "lr") lr = std::stod(value);
    else if (key == "schedule") schedule = value;
    else if (key == "resize") resize = std::stoi(value);
    else if (key == "flip_prob") flip_prob = std::stod(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "loss_weights.w_mse" || key == "w_mse") loss_weights.w_mse = std::stod(value);
    else if (key == "loss_weights.w_perc" || key == "w_perc") loss_weights.w_perc = std::stod(value);
    else if (key == "loss_weights.w_adv" || key == "w_adv") loss_weights.w_adv = std::stod(value);
    else if (key == "causal_layer_enabled") causal_layer_enabled = as_bool();
    else if (key == "precision") precision = value;
    else if (key == "saturating_gan") saturating_gan = as_bool();
    else if (key == "grad_clip") grad_clip = std::stod(value);
    else if (key == "weight_decay") weight_decay = std::stod(value);
    else if (key == "beta1") beta1 = std::stod(value);
    else if (key == "beta2") beta2 = std::stod(value);
    else throw std::invalid_argument("unknown config key: " + key);
}

void TrainConfig::load_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            auto last = s.find_last_not_of(" \t\r");
            s.erase(last == std::string::npos ? 0 : last + 1);
            return s;
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) apply_kv(key, value);
    }
}

std::string TrainConfig::to_json() const {
    json j;
    j["phase"] = phase;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["schedule"] = schedule;
    j["resize"] = resize;
    j["flip_prob"] = flip_prob;
    j["seed"] = seed;
    j["loss_weights"] = {{"w_mse", loss_weights.w_mse},
                         {"w_perc", loss_weights.w_perc},
                         {"w_adv", loss_weights.w_adv}};
    j["causal_layer_enabled"] = causal_layer_enabled;
    j["precision"] = precision;
    j["saturating_gan"] = saturating_gan;
    j["grad_clip"] = grad_clip;
    j["weight_decay"] = weight_decay;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.phase = j.value("phase", c.phase);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.schedule = j.value("schedule", c.schedule);
    c.resize = j.value("resize", c.resize);
    c.flip_prob = j.value("flip_prob", c.flip_prob);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss_weights")) {
        c.loss_weights.w_mse = j["loss_weights"].value("w_mse", c.loss_weights.w_mse);
        c.loss_weights.w_perc = j["loss_weights"].value("w_perc", c.loss_weights.w_perc);
        c.loss_weights.w_adv = j["loss_weights"].value("w_adv", c.loss_weights.w_adv);
    }
    c.causal_layer_enabled = j.value("causal_layer_enabled", c.causal_layer_enabled);
    c.precision = j.value("precision", c.precision);
    c.saturating_gan = j.value("saturating_gan", c.saturating_gan);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    return c;
}

// ---- profiles ----

RunProfile RunProfile::get(const std::string& name) {
    RunProfile p;
    p.name = name;
    if (name == "desk") {
        p.model = nn::ModelConfig::desk();
        p.pretrain_cfg.phase = "pretrain";
        p.pretrain_cfg.epochs = 40;
        p.pretrain_cfg.batch_size = 8;
        p.pretrain_cfg.resize = 64;
        // Raised for the short desk budget, but kept moderate: overly fast
        // reconstruction training flattens the pooled features' response to
        // noise level, which zero-shot ranking relies on.
        p.pretrain_cfg.lr = 3e-4;
        p.finetune_cfg = p.pretrain_cfg;
        p.finetune_cfg.phase = "finetune";
        p.finetune_cfg.epochs = 8;
        p.finetune_cfg.lr = 1e-4;
    } else if (name == "paper") {
        p.model = nn::ModelConfig::paper();
        p.pretrain_cfg.phase = "pretrain";
        p.pretrain_cfg.epochs = 200;
        p.pretrain_cfg.batch_size = 24;
        p.pretrain_cfg.resize = 448;
        p.finetune_cfg = p.pretrain_cfg;
        p.finetune_cfg.phase = "finetune";
        p.finetune_cfg.epochs = 20;
    } else {
        throw std::invalid_argument("unknown profile: " + name);
    }
    return p;
}

namespace {

std::map<std::string, std::string> profile_flat(const RunProfile& p) {
    std::map<std::string, std::string> m;
    m["model.resolution"] = std::to_string(p.model.resolution);
    std::string ch;
    for (int c : p.model.enc_channels) ch += (ch.empty() ? "" : ",") + std::to_string(c);
    m["model.enc_channels"] = ch;
    m["model.content_dim"] = std::to_string(p.model.content_dim);
    m["model.content_stem"] = std::to_string(p.model.content_stem);
    m["model.unet_base"] = std::to_string(p.model.unet_base);
    m["model.unet_depth"] = std::to_string(p.model.unet_depth);
    m["model.film_hidden"] = std::to_string(p.model.film_hidden);
    m["model.disc_base"] = std::to_string(p.model.disc_base);
    m["model.disc_layers"] = std::to_string(p.model.disc_layers);
    m["pretrain.epochs"] = std::to_string(p.pretrain_cfg.epochs);
    m["pretrain.batch_size"] = std::to_string(p.pretrain_cfg.batch_size);
    m["pretrain.resize"] = std::to_string(p.pretrain_cfg.resize);
    m["pretrain.lr"] = std::to_string(p.pretrain_cfg.lr);
    m["pretrain.flip_prob"] = std::to_string(p.pretrain_cfg.flip_prob);
    m["finetune.epochs"] = std::to_string(p.finetune_cfg.epochs);
    m["finetune.batch_size"] = std::to_string(p.finetune_cfg.batch_size);
    m["finetune.resize"] = std::to_string(p.finetune_cfg.resize);
    m["embedding.n_neighbors"] = std::to_string(p.embedding.n_neighbors);
    m["embedding.min_dist"] = std::to_string(p.embedding.min_dist);
    return m;
}

}  // namespace

std::vector<std::string> RunProfile::diff(const RunProfile& a, const RunProfile& b) {
    auto ma = profile_flat(a), mb = profile_flat(b);
    std::vector<std::string> out;
    for (const auto& [k, va] : ma) {
        const auto& vb = mb.at(k);
        if (va != vb) out.push_back(k + ": " + va + " -> " + vb);
    }
    return out;
}

// ---- optimizer & schedule ----

AdamW::AdamW(std::vector<ag::Var> p, double lr_, double b1, double b2, double wd)
    : params(std::move(p)), lr(lr_), beta1(b1), beta2(b2), weight_decay(wd) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& q : params) {
        m.emplace_back(Tensor::zeros(q->value.shape));
        v.emplace_back(Tensor::zeros(q->value.shape));
    }
}

void AdamW::step() {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p->has_grad) continue;  // parameter not touched this step
        for (std::size_t k = 0; k < p->value.numel(); ++k) {
            double g = p->grad.data[k];
            m[i].data[k] = beta1 * m[i].data[k] + (1 - beta1) * g;
            v[i].data[k] = beta2 * v[i].data[k] + (1 - beta2) * g * g;
            double mh = m[i].data[k] / bc1;
            double vh = v[i].data[k] / bc2;
            p->value.data[k] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * p->value.data[k]);
        }
    }
}

double cosine_lr(double lr0, int t, int total) {
    if (total < 1) throw std::invalid_argument("cosine_lr: total must be >= 1");
    double frac = std::clamp(static_cast<double>(t) / total, 0.0, 1.0);
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * frac));
}

double clip_grad_norm(const std::vector<ag::Var>& params, double max_norm) {
    double total = 0;
    for (const auto& p : params)
        if (p->has_grad) total += kernels::sumsq(p->grad.data.data(), p->grad.numel());
    double norm = std::sqrt(total);
    if (norm > max_norm && norm > 0) {
        double s = max_norm / norm;
        for (const auto& p : params)
            if (p->has_grad)
                kernels::scale(p->grad.data.data(), s, p->grad.data.data(), p->grad.numel());
    }
    return norm;
}

// ---- data ----

std::vector<PairSample> load_pairs(const degrade::Manifest& manifest, const std::string& split,
                                   int resize) {
    std::vector<PairSample> out;
    std::map<std::string, Image> ref_cache;
    for (const auto& r : manifest.records) {
        if (r.split != split) continue;
        auto it = ref_cache.find(r.ref_path);
        if (it == ref_cache.end())
            it = ref_cache.emplace(r.ref_path, resize_bilinear(load_image(r.ref_path), resize, resize)).first;
        PairSample s;
        s.ref = it->second;
        s.dist = resize_bilinear(load_image(r.dist_path), resize, resize);
        s.record = r;
        out.push_back(std::move(s));
    }
    return out;
}

// ---- checkpoint I/O ----

namespace {

json model_cfg_to_json(const nn::ModelConfig& c) {
    json j;
    j["profile"] = c.profile;
    j["resolution"] = c.resolution;
    j["enc_channels"] = c.enc_channels;
    j["content_stem"] = c.content_stem;
    j["content_stages"] = c.content_stages;
    j["content_dim"] = c.content_dim;
    j["unet_base"] = c.unet_base;
    j["unet_depth"] = c.unet_depth;
    j["film_hidden"] = c.film_hidden;
    j["disc_base"] = c.disc_base;
    j["disc_layers"] = c.disc_layers;
    j["lambda_init"] = c.lambda_init;
    j["scalar_gate"] = c.scalar_gate;
    return j;
}

nn::ModelConfig model_cfg_from_json(const json& j) {
    nn::ModelConfig c;
    c.profile = j.value("profile", c.profile);
    c.resolution = j.value("resolution", c.resolution);
    c.enc_channels = j.value("enc_channels", c.enc_channels);
    c.content_stem = j.value("content_stem", c.content_stem);
    c.content_stages = j.value("content_stages", c.content_stages);
    c.content_dim = j.value("content_dim", c.content_dim);
    c.unet_base = j.value("unet_base", c.unet_base);
    c.unet_depth = j.value("unet_depth", c.unet_depth);
    c.film_hidden = j.value("film_hidden", c.film_hidden);
    c.disc_base = j.value("disc_base", c.disc_base);
    c.disc_layers = j.value("disc_layers", c.disc_layers);
    c.lambda_init = j.value("lambda_init", c.lambda_init);
    c.scalar_gate = j.value("scalar_gate", c.scalar_gate);
    return c;
}

constexpr char kWeightsMagic[8] = {'C', 'A', 'D', 'I', 'S', 'W', 'T', 'S'};

void write_weights(const std::string& path,
                   const std::vector<std::pair<std::string, ag::Var>>& items, bool as_f32) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write weights: " + path);
    out.write(kWeightsMagic, 8);
    std::uint32_t version = 1, dtype = as_f32 ? 1 : 0;
    std::uint64_t count = items.size();
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&dtype), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, var] : items) {
        std::uint32_t nlen = static_cast<std::uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), 4);
        out.write(name.data(), nlen);
        std::uint32_t ndim = static_cast<std::uint32_t>(var->value.shape.size());
        out.write(reinterpret_cast<const char*>(&ndim), 4);
        for (auto d : var->value.shape) {
            std::uint64_t dd = static_cast<std::uint64_t>(d);
            out.write(reinterpret_cast<const char*>(&dd), 8);
        }
        if (as_f32) {
            std::vector<float> buf(var->value.data.begin(), var->value.data.end());
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size() * sizeof(float)));
        } else {
            out.write(reinterpret_cast<const char*>(var->value.data.data()),
                      static_cast<std::streamsize>(var->value.data.size() * sizeof(double)));
        }
    }
}

std::map<std::string, Tensor> read_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weights: " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != std::string(kWeightsMagic, 8))
        throw std::runtime_error("bad weights file magic: " + path);
    std::uint32_t version = 0, dtype = 0;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&dtype), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    std::map<std::string, Tensor> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), 4);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        std::uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 4);
        std::vector<std::int64_t> shape(ndim);
        for (auto& d : shape) {
            std::uint64_t dd = 0;
            in.read(reinterpret_cast<char*>(&dd), 8);
            d = static_cast<std::int64_t>(dd);
        }
        Tensor t(shape);
        if (dtype == 1) {
            std::vector<float> buf(t.numel());
            in.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * sizeof(float)));
            std::copy(buf.begin(), buf.end(), t.data.begin());
        } else {
            in.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        }
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

std::string git_describe() {
    FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
    if (!pipe) return "unknown";
    char buf[128] = {0};
    std::string out;
    while (fgets(buf, sizeof(buf), pipe)) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

}  // namespace

void CheckpointBundle::save(const std::string& dir, const std::string& precision) const {
    fs::create_directories(dir);
    std::vector<std::pair<std::string, ag::Var>> items = model->params.items;
    if (head)
        for (const auto& it : head->params.items) items.push_back(it);
    write_weights((fs::path(dir) / "weights.bin").string(), items, precision == "float32");
    json cfg = model_cfg_to_json(model->cfg);
    cfg["precision"] = precision;
    if (head) cfg["head_hidden"] = head->hidden;
    std::ofstream cj((fs::path(dir) / "config.json").string());
    cj << cfg.dump(2) << "\n";
    json meta;
    meta["epoch"] = epoch;
    meta["seed"] = seed;
    meta["phase"] = phase;
    meta["rng_state"] = rng_state;
    meta["git"] = git_describe();
    std::ofstream mj((fs::path(dir) / "meta.json").string());
    mj << meta.dump(2) << "\n";
}

CheckpointBundle CheckpointBundle::load(const std::string& dir) {
    std::ifstream cj((fs::path(dir) / "config.json").string());
    if (!cj) throw std::runtime_error("cannot open checkpoint config: " + dir);
    json cfg = json::parse(cj);
    CheckpointBundle b;
    nn::ModelConfig mc = model_cfg_from_json(cfg);
    b.model = std::make_shared<nn::Model>(mc, 0);
    auto weights = read_weights((fs::path(dir) / "weights.bin").string());
    for (auto& [name, var] : b.model->params.items) {
        auto it = weights.find(name);
        if (it == weights.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
        if (it->second.shape != var->value.shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        var->value = it->second;
    }
    if (cfg.contains("head_hidden")) {
        b.head = std::make_shared<HeadBundle>();
        b.head->hidden = cfg["head_hidden"].get<int>();
        Rng rng(0);
        b.head->head = nn::RegressionHead(b.head->params, mc.feature_channels(), b.head->hidden, rng);
        for (auto& [name, var] : b.head->params.items) {
            auto it = weights.find(name);
            if (it == weights.end()) throw std::runtime_error("checkpoint missing tensor: " + name);
            var->value = it->second;
        }
    }
    std::ifstream mj((fs::path(dir) / "meta.json").string());
    if (mj) {
        json meta = json::parse(mj);
        b.epoch = meta.value("epoch", 0);
        b.seed = meta.value("seed", static_cast<std::uint64_t>(0));
        b.phase = meta.value("phase", std::string());
        b.rng_state = meta.value("rng_state", std::string());
    }
    return b;
}

// ---- training loops ----

namespace {

struct StepLogger {
    std::ofstream out;
    long step = 0;

    explicit StepLogger(const std::string& path) {
        if (!path.empty()) {
            out.open(path, std::ios::binary);
            if (!out) throw std::runtime_error("cannot open training log: " + path);
            out << "step,L_mse,L_vgg,L_gan_g,L_gan_d,total\n";
        }
    }

    void log(const losses::LossComponents& c, double d_loss) {
        if (out.is_open())
            out << step << "," << c.mse << "," << c.perceptual << "," << c.adversarial_gen << ","
                << d_loss << "," << c.total << "\n";
        ++step;
    }
};

Tensor batch_tensor(const std::vector<PairSample>& pairs, const std::vector<std::size_t>& idx,
                    std::size_t begin, std::size_t end, bool dist, const std::vector<bool>& flip) {
    std::vector<Image> imgs;
    imgs.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const Image& im = dist ? pairs[idx[i]].dist : pairs[idx[i]].ref;
        imgs.push_back(flip[i - begin] ? flip_horizontal(im) : im);
    }
    return to_tensor(imgs);
}

struct ForwardResult {
    ag::Var recon;
    ag::Var target;
};

ForwardResult forward_reconstruction(const nn::Model& model, const Tensor& refs,
                                     const Tensor& dists, bool causal_enabled) {
    auto i_r = ag::constant(refs);
    auto i_d = ag::constant(dists);
    auto d = model.encode(i_d);
    ag::Var d_mod = causal_enabled ? model.modulate(d, model.content_encode(i_r)) : d;
    return {model.decode(i_r, d_mod), i_d};
}

void run_epochs(nn::Model& model, const std::vector<PairSample>& pairs, const TrainConfig& cfg,
                const nn::PerceptualNet& perc, StepLogger& logger, Rng& rng,
                const std::string& ckpt_dir, CheckpointBundle* bundle) {
    AdamW opt_g(model.generator_params(cfg.causal_layer_enabled), cfg.lr, cfg.beta1, cfg.beta2,
                cfg.weight_decay);
    AdamW opt_d(model.discriminator_params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
    auto all_params = model.params.all();
    std::vector<std::size_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr_t = cosine_lr(cfg.lr, epoch, cfg.epochs);
        opt_g.lr = lr_t;
        opt_d.lr = lr_t;
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t begin = 0; begin < idx.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(idx.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<bool> flip(end - begin);
            for (std::size_t i = 0; i < flip.size(); ++i) flip[i] = rng.uniform() < cfg.flip_prob;
            Tensor refs = batch_tensor(pairs, idx, begin, end, false, flip);
            Tensor dists = batch_tensor(pairs, idx, begin, end, true, flip);

            auto fwd = forward_reconstruction(model, refs, dists, cfg.causal_layer_enabled);
            ag::Var d_fake = cfg.loss_weights.w_adv > 0 ? model.discriminate(fwd.recon) : nullptr;
            losses::LossComponents comps;
            ag::Var g_loss = losses::total_loss(fwd.recon, fwd.target, d_fake, cfg.loss_weights,
                                                perc, &comps, cfg.saturating_gan);
            if (!std::isfinite(comps.total))
                throw std::runtime_error("training aborted: non-finite loss at step " +
                                         std::to_string(logger.step));
            ag::backward(g_loss);
            clip_grad_norm(opt_g.params, cfg.grad_clip);
            opt_g.step();
            ag::zero_grad(all_params);
            // lambda stays non-negative
            auto& lam = model.causal.lambda->value.data[0];
            lam = std::max(0.0, lam);

            double d_loss_val = 0.0;
            if (cfg.loss_weights.w_adv > 0) {
                auto d_real = model.discriminate(ag::constant(dists));
                auto d_fake2 = model.discriminate(ag::detach(fwd.recon));
                auto adv = losses::loss_adversarial(d_real, d_fake2, cfg.saturating_gan);
                d_loss_val = adv.disc->value.data[0];
                if (!std::isfinite(d_loss_val))
                    throw std::runtime_error("training aborted: non-finite discriminator loss");
                ag::backward(adv.disc);
                clip_grad_norm(opt_d.params, cfg.grad_clip);
                opt_d.step();
                ag::zero_grad(all_params);
            }
            logger.log(comps, d_loss_val);
        }
        if (!ckpt_dir.empty() && bundle) {
            bundle->epoch = epoch + 1;
            bundle->save((fs::path(ckpt_dir) / ("epoch_" + std::to_string(epoch + 1))).string(),
                         cfg.precision);
        }
    }
}

}  // namespace

double evaluate_loss(const nn::Model& model, const std::vector<PairSample>& pairs,
                     const TrainConfig& cfg, const nn::PerceptualNet& perc) {
    if (pairs.empty()) throw std::invalid_argument("evaluate_loss: empty pair set");
    double acc = 0;
    std::size_t count = 0;
    std::vector<std::size_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<bool> noflip;
    for (std::size_t begin = 0; begin < pairs.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
        std::size_t end = std::min(pairs.size(), begin + static_cast<std::size_t>(cfg.batch_size));
        noflip.assign(end - begin, false);
        Tensor refs = batch_tensor(pairs, idx, begin, end, false, noflip);
        Tensor dists = batch_tensor(pairs, idx, begin, end, true, noflip);
        auto fwd = forward_reconstruction(model, refs, dists, cfg.causal_layer_enabled);
        ag::Var d_fake = cfg.loss_weights.w_adv > 0 ? model.discriminate(fwd.recon) : nullptr;
        ag::Var loss = losses::total_loss(fwd.recon, fwd.target, d_fake, cfg.loss_weights, perc,
                                          nullptr, cfg.saturating_gan);
        acc += loss->value.data[0] * static_cast<double>(end - begin);
        count += end - begin;
    }
    return acc / static_cast<double>(count);
}

CheckpointBundle pretrain(const degrade::Manifest& manifest, const nn::ModelConfig& model_cfg,
                          const TrainConfig& cfg) {
    TrainConfig c = cfg;
    c.phase = "pretrain";
    c.validate(model_cfg.unet_depth);
    auto pairs = load_pairs(manifest, "pretrain", c.resize);
    if (pairs.empty()) throw std::invalid_argument("pretrain: manifest has no pretrain split");

    nn::ModelConfig mc = model_cfg;
    mc.resolution = c.resize;
    CheckpointBundle bundle;
    bundle.model = std::make_shared<nn::Model>(mc, c.seed);
    bundle.seed = c.seed;
    bundle.phase = "pretrain";

    nn::PerceptualNet perc;
    StepLogger logger(c.log_csv);
    Rng rng(mix_seed(c.seed, 0x7124));
    run_epochs(*bundle.model, pairs, c, perc, logger, rng, c.checkpoint_dir, &bundle);
    bundle.epoch = c.epochs;
    std::ostringstream rs;
    rs << rng.next_u64();
    bundle.rng_state = rs.str();
    return bundle;
}

CheckpointBundle finetune(const CheckpointBundle& ckpt, const degrade::Manifest& manifest,
                          const TrainConfig& cfg) {
    TrainConfig c = cfg;
    c.phase = "finetune";
    c.validate(ckpt.model->cfg.unet_depth);
    if (c.resize != ckpt.model->cfg.resolution)
        throw std::invalid_argument("finetune: resize must match checkpoint resolution");
    auto pairs = load_pairs(manifest, "finetune", c.resize);
    if (pairs.empty()) throw std::invalid_argument("finetune: manifest has no finetune split");

    CheckpointBundle bundle;
    bundle.model = std::make_shared<nn::Model>(ckpt.model->cfg, c.seed);
    for (std::size_t i = 0; i < bundle.model->params.items.size(); ++i)
        bundle.model->params.items[i].second->value = ckpt.model->params.items[i].second->value;
    bundle.seed = c.seed;
    bundle.phase = "finetune";

    nn::PerceptualNet perc;
    StepLogger logger(c.log_csv);
    Rng rng(mix_seed(c.seed, 0x9b1e));
    run_epochs(*bundle.model, pairs, c, perc, logger, rng, c.checkpoint_dir, &bundle);
    bundle.epoch = ckpt.epoch + c.epochs;
    return bundle;
}

CheckpointBundle train_regression_head(const CheckpointBundle& ckpt,
                                       const degrade::Manifest& labeled, bool frozen,
                                       const TrainConfig& cfg) {
    auto pairs = load_pairs(labeled, "finetune", ckpt.model->cfg.resolution);
    {
        auto test_pairs = load_pairs(labeled, "test", ckpt.model->cfg.resolution);
        // head training may draw from any split that carries labels
        auto pre = load_pairs(labeled, "pretrain", ckpt.model->cfg.resolution);
        pairs.insert(pairs.end(), pre.begin(), pre.end());
        pairs.insert(pairs.end(), test_pairs.begin(), test_pairs.end());
    }
    pairs.erase(std::remove_if(pairs.begin(), pairs.end(),
                               [](const PairSample& p) { return !p.record.mos.has_value(); }),
                pairs.end());
    if (pairs.empty())
        throw std::invalid_argument("train_regression_head: no labeled records (mos missing)");

    CheckpointBundle bundle;
    if (frozen) {
        bundle.model = ckpt.model;  // untouched by construction
    } else {
        bundle.model = std::make_shared<nn::Model>(ckpt.model->cfg, cfg.seed);
        for (std::size_t i = 0; i < bundle.model->params.items.size(); ++i)
            bundle.model->params.items[i].second->value = ckpt.model->params.items[i].second->value;
    }
    bundle.seed = cfg.seed;
    bundle.phase = frozen ? "head_frozen" : "head_unfrozen";
    bundle.epoch = ckpt.epoch;
    bundle.head = std::make_shared<HeadBundle>();
    Rng init_rng(mix_seed(cfg.seed, 0xead));
    bundle.head->head = nn::RegressionHead(bundle.head->params,
                                           bundle.model->cfg.feature_channels(), 64, init_rng);

    Rng rng(mix_seed(cfg.seed, 0x4ead));
    std::vector<std::size_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), 0);

    if (frozen) {
        // cache pooled features once; only the head sees gradients
        std::vector<Image> refs, dists;
        for (const auto& p : pairs) {
            refs.push_back(p.ref);
            dists.push_back(p.dist);
        }
        auto feats = score::extract_features(*bundle.model, refs, dists);
        int dim = static_cast<int>(feats[0].size());
        AdamW opt(bundle.head->params.all(), cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            opt.lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
            rng.shuffle(idx.begin(), idx.end());
            for (std::size_t begin = 0; begin < idx.size();
                 begin += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t end = std::min(idx.size(), begin + static_cast<std::size_t>(cfg.batch_size));
                Tensor x({static_cast<std::int64_t>(end - begin), dim});
                Tensor y({static_cast<std::int64_t>(end - begin), 1});
                for (std::size_t i = begin; i < end; ++i) {
                    std::copy(feats[idx[i]].begin(), feats[idx[i]].end(),
                              x.data.begin() + static_cast<std::ptrdiff_t>((i - begin) * dim));
                    y.data[i - begin] = *pairs[idx[i]].record.mos;
                }
                auto pred = bundle.head->head(ag::constant(x));
                auto loss = ag::mse(pred, ag::constant(y));
                ag::backward(loss);
                clip_grad_norm(opt.params, cfg.grad_clip);
                opt.step();
                ag::zero_grad(opt.params);
            }
        }
    } else {
        auto train_params = bundle.model->generator_params(true);
        auto head_params = bundle.head->params.all();
        train_params.insert(train_params.end(), head_params.begin(), head_params.end());
        AdamW opt(train_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            opt.lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
            rng.shuffle(idx.begin(), idx.end());
            for (std::size_t begin = 0; begin < idx.size();
                 begin += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t end = std::min(idx.size(), begin + static_cast<std::size_t>(cfg.batch_size));
                std::vector<Image> refs, dists;
                Tensor y({static_cast<std::int64_t>(end - begin), 1});
                for (std::size_t i = begin; i < end; ++i) {
                    refs.push_back(pairs[idx[i]].ref);
                    dists.push_back(pairs[idx[i]].dist);
                    y.data[i - begin] = *pairs[idx[i]].record.mos;
                }
                auto i_r = ag::constant(to_tensor(refs));
                auto i_d = ag::constant(to_tensor(dists));
                auto d_mod = bundle.model->modulate(bundle.model->encode(i_d),
                                                    bundle.model->content_encode(i_r));
                auto pred = bundle.head->head(ag::gap(d_mod));
                auto loss = ag::mse(pred, ag::constant(y));
                ag::backward(loss);
                clip_grad_norm(opt.params, cfg.grad_clip);
                opt.step();
                ag::zero_grad(opt.params);
                auto& lam = bundle.model->causal.lambda->value.data[0];
                lam = std::max(0.0, lam);
            }
        }
    }
    return bundle;
}

}  // namespace cadis::train
