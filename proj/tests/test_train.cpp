#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cadis/train.hpp"

using namespace cadis;
namespace fs = std::filesystem;

namespace {

nn::ModelConfig tiny_cfg() {
    nn::ModelConfig c;
    c.resolution = 16;
    c.enc_channels = {4, 8};
    c.content_stem = 4;
    c.content_stages = 1;
    c.content_dim = 8;
    c.unet_base = 4;
    c.unet_depth = 2;
    c.film_hidden = 8;
    c.disc_base = 4;
    c.disc_layers = 2;
    return c;
}

train::TrainConfig tiny_train_cfg() {
    train::TrainConfig c;
    c.epochs = 2;
    c.batch_size = 4;
    c.lr = 1e-3;
    c.resize = 16;
    c.seed = 11;
    return c;
}

Image textured_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    Image img(size, size, 3);
    for (auto& v : img.data) v = std::clamp(0.5 + 0.25 * rng.normal(), 0.0, 1.0);
    return img;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Tiny on-disk dataset: 3 pristine images, blur + noise at 2 levels.
degrade::Manifest make_dataset(const fs::path& root, std::uint64_t seed,
                               degrade::PseudoMos pseudo = degrade::PseudoMos::Psnr) {
    fs::path pristine = root / "pristine";
    fs::create_directories(pristine);
    for (int i = 0; i < 3; ++i)
        save_png(textured_image(16, 100 + static_cast<std::uint64_t>(i)),
                 (pristine / ("p" + std::to_string(i) + ".png")).string());
    degrade::DegradationProtocol protocol;
    protocol.kinds = {degrade::Kind::GaussianBlur, degrade::Kind::GaussianNoise};
    protocol.blur_sigma = {1.0, 2.0};
    protocol.noise_std = {0.05, 0.2};
    protocol.jpeg_quality = {40, 15};
    protocol.quant_bits = {5, 3};
    auto m = degrade::build_dataset(pristine.string(), protocol, (root / "data").string(), seed,
                                    pseudo);
    return degrade::split_manifest(m, 0.4, 0.3, 0.3, seed + 1);
}

bool params_equal(const nn::ParamStore& a, const nn::ParamStore& b) {
    if (a.items.size() != b.items.size()) return false;
    for (const auto& [name, var] : a.items) {
        auto it = std::find_if(b.items.begin(), b.items.end(),
                               [&](const auto& kv) { return kv.first == name; });
        if (it == b.items.end()) return false;
        if (var->value.data != it->second->value.data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("cosine schedule") {
    CHECK(train::cosine_lr(0.1, 0, 100) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(train::cosine_lr(0.1, 100, 100) <= 1e-2 * 0.1);
    CHECK(train::cosine_lr(0.1, 50, 100) == doctest::Approx(0.05).epsilon(1e-9));
    double prev = train::cosine_lr(0.1, 0, 40);
    for (int t = 1; t <= 40; ++t) {
        double cur = train::cosine_lr(0.1, t, 40);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("train config") {
    train::TrainConfig c;
    CHECK_NOTHROW(c.validate(3));

    SUBCASE("validation") {
        c.epochs = 0;
        CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
        c = train::TrainConfig{};
        c.resize = 60;  // not divisible by 2^3
        CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
        c = train::TrainConfig{};
        c.precision = "float16";
        CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
        c = train::TrainConfig{};
        c.phase = "warmup";
        CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
    }

    SUBCASE("key value overrides") {
        c.apply_kv("epochs", "7");
        c.apply_kv("lr", "0.5");
        c.apply_kv("w_perc", "0.25");
        c.apply_kv("causal_layer_enabled", "false");
        CHECK(c.epochs == 7);
        CHECK(c.lr == 0.5);
        CHECK(c.loss_weights.w_perc == 0.25);
        CHECK_FALSE(c.causal_layer_enabled);
        CHECK_THROWS_AS(c.apply_kv("learning_rate", "0.1"), std::invalid_argument);
        CHECK_THROWS_AS(c.apply_kv("saturating_gan", "maybe"), std::invalid_argument);
    }

    SUBCASE("ini file") {
        TempDir tmp("cadis_cfg_test");
        fs::path ini = tmp.path / "train.cfg";
        std::ofstream(ini) << "# comment\nepochs = 5\nbatch_size=2\nw_adv = 0.0  # trailing\n";
        c.load_ini(ini.string());
        CHECK(c.epochs == 5);
        CHECK(c.batch_size == 2);
        CHECK(c.loss_weights.w_adv == 0.0);
        CHECK_THROWS(c.load_ini((tmp.path / "missing.cfg").string()));
    }

    SUBCASE("json round trip") {
        c.epochs = 13;
        c.lr = 3e-4;
        c.loss_weights.w_adv = 0.02;
        c.precision = "float32";
        c.seed = 12345;
        auto back = train::TrainConfig::from_json(c.to_json());
        CHECK(back.epochs == c.epochs);
        CHECK(back.lr == c.lr);
        CHECK(back.loss_weights.w_adv == c.loss_weights.w_adv);
        CHECK(back.precision == c.precision);
        CHECK(back.seed == c.seed);
    }
}

TEST_CASE("run profiles") {
    auto desk = train::RunProfile::get("desk");
    auto paper = train::RunProfile::get("paper");
    CHECK(desk.pretrain_cfg.epochs == 40);
    CHECK(paper.pretrain_cfg.epochs == 200);
    CHECK(paper.pretrain_cfg.resize == 448);
    CHECK(paper.pretrain_cfg.batch_size == 24);
    CHECK_THROWS_AS(train::RunProfile::get("server"), std::invalid_argument);

    auto diff = train::RunProfile::diff(desk, paper);
    CHECK_FALSE(diff.empty());
    bool found_epochs = false;
    for (const auto& line : diff)
        if (line.find("epochs") != std::string::npos &&
            line.find("40") != std::string::npos && line.find("200") != std::string::npos)
            found_epochs = true;
    CHECK(found_epochs);
    CHECK(train::RunProfile::diff(desk, desk).empty());
}

TEST_CASE("optimizer and clipping") {
    SUBCASE("adamw skips parameters without gradients") {
        auto a = ag::leaf(Tensor::full({2}, 1.0), true);
        auto b = ag::leaf(Tensor::full({2}, 1.0), true);
        a->has_grad = true;
        a->grad = Tensor::full({2}, 0.5);
        train::AdamW opt({a, b}, 0.1, 0.9, 0.999, 0.0);
        opt.step();
        CHECK(a->value.data[0] < 1.0);
        CHECK(b->value.data[0] == 1.0);
    }

    SUBCASE("weight decay is decoupled") {
        auto a = ag::leaf(Tensor::full({1}, 2.0), true);
        a->has_grad = true;
        a->grad = Tensor::zeros({1});
        train::AdamW opt({a}, 0.1, 0.9, 0.999, 0.01);
        opt.step();
        // zero gradient: only the decay term moves the weight
        CHECK(a->value.data[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
    }

    SUBCASE("gradient clipping") {
        auto a = ag::leaf(Tensor::zeros({4}), true);
        a->has_grad = true;
        a->grad = Tensor::full({4}, 3.0);  // norm 6
        double norm = train::clip_grad_norm({a}, 1.5);
        CHECK(norm == doctest::Approx(6.0).epsilon(1e-12));
        double after = 0;
        for (double g : a->grad.data) after += g * g;
        CHECK(std::sqrt(after) == doctest::Approx(1.5).epsilon(1e-9));

        a->grad = Tensor::full({4}, 0.1);
        train::clip_grad_norm({a}, 1.5);
        CHECK(a->grad.data[0] == 0.1);  // under the limit: untouched
    }
}

TEST_CASE("pair loading") {
    TempDir tmp("cadis_pairs_test");
    auto manifest = make_dataset(tmp.path, 21);
    int total = 0;
    for (const char* split : {"pretrain", "finetune", "test"}) {
        auto pairs = train::load_pairs(manifest, split, 16);
        total += static_cast<int>(pairs.size());
        for (const auto& p : pairs) {
            CHECK(p.ref.h == 16);
            CHECK(p.dist.h == 16);
            CHECK(p.record.split == split);
        }
    }
    CHECK(total == static_cast<int>(manifest.records.size()));

    // resize applies to both images
    auto pairs32 = train::load_pairs(manifest, "test", 32);
    REQUIRE_FALSE(pairs32.empty());
    CHECK(pairs32[0].ref.h == 32);
    CHECK(pairs32[0].dist.w == 32);

    CHECK(train::load_pairs(manifest, "validation", 16).empty());
}

TEST_CASE("pretraining behaviour") {
    TempDir tmp("cadis_train_test");
    auto manifest = make_dataset(tmp.path, 31);
    auto mcfg = tiny_cfg();
    auto tcfg = tiny_train_cfg();

    SUBCASE("seeded determinism and label independence") {
        auto b1 = train::pretrain(manifest, mcfg, tcfg);
        auto b2 = train::pretrain(manifest, mcfg, tcfg);
        CHECK(params_equal(b1.model->params, b2.model->params));

        // perturbing mos must not change the pretraining result
        auto relabeled = manifest;
        for (auto& r : relabeled.records) r.mos = 999.0;
        auto b3 = train::pretrain(relabeled, mcfg, tcfg);
        CHECK(params_equal(b1.model->params, b3.model->params));

        // a different seed reaches different weights
        auto other = tcfg;
        other.seed = 12;
        auto b4 = train::pretrain(manifest, mcfg, other);
        CHECK_FALSE(params_equal(b1.model->params, b4.model->params));
    }

    SUBCASE("training reduces reconstruction loss") {
        nn::PerceptualNet perc;
        nn::Model init(mcfg, tcfg.seed);
        auto pairs = train::load_pairs(manifest, "pretrain", tcfg.resize);
        double before = train::evaluate_loss(init, pairs, tcfg, perc);
        auto longer = tcfg;
        longer.epochs = 6;
        auto trained = train::pretrain(manifest, mcfg, longer);
        double after = train::evaluate_loss(*trained.model, pairs, tcfg, perc);
        CHECK(after < before);
    }

    SUBCASE("loss log csv") {
        auto logged = tcfg;
        logged.epochs = 1;
        logged.log_csv = (tmp.path / "loss.csv").string();
        train::pretrain(manifest, mcfg, logged);
        std::ifstream in(logged.log_csv);
        std::string header;
        std::getline(in, header);
        CHECK(header == "step,L_mse,L_vgg,L_gan_g,L_gan_d,total");
        std::string row;
        CHECK(static_cast<bool>(std::getline(in, row)));
    }
}

TEST_CASE("checkpoints") {
    TempDir tmp("cadis_ckpt_test");
    auto manifest = make_dataset(tmp.path, 41);
    auto tcfg = tiny_train_cfg();
    tcfg.epochs = 1;
    auto bundle = train::pretrain(manifest, tiny_cfg(), tcfg);

    SUBCASE("float64 round trip is bit identical") {
        fs::path dir = tmp.path / "ckpt64";
        bundle.save(dir.string(), "float64");
        auto loaded = train::CheckpointBundle::load(dir.string());
        CHECK(params_equal(bundle.model->params, loaded.model->params));
        CHECK(loaded.epoch == bundle.epoch);
        CHECK(loaded.seed == bundle.seed);
        CHECK(loaded.phase == bundle.phase);

        // loaded model reproduces the stored model's evaluation exactly
        nn::PerceptualNet perc;
        auto pairs = train::load_pairs(manifest, "test", tcfg.resize);
        CHECK(train::evaluate_loss(*bundle.model, pairs, tcfg, perc) ==
              train::evaluate_loss(*loaded.model, pairs, tcfg, perc));
    }

    SUBCASE("float32 storage narrows but stays close") {
        fs::path dir = tmp.path / "ckpt32";
        bundle.save(dir.string(), "float32");
        auto loaded = train::CheckpointBundle::load(dir.string());
        double worst = 0;
        for (const auto& [name, var] : bundle.model->params.items) {
            const auto& back = loaded.model->params.find(name)->value;
            for (std::size_t i = 0; i < var->value.data.size(); ++i) {
                double v = var->value.data[i];
                worst = std::max(worst, std::fabs(v - back.data[i]) /
                                            std::max(1.0, std::fabs(v)));
                CHECK(back.data[i] == static_cast<double>(static_cast<float>(v)));
            }
        }
        CHECK(worst < 1e-6);
    }

    SUBCASE("missing directory rejected") {
        CHECK_THROWS(train::CheckpointBundle::load((tmp.path / "nope").string()));
    }
}

TEST_CASE("finetune and regression head") {
    TempDir tmp("cadis_ft_test");
    auto manifest = make_dataset(tmp.path, 51);
    auto tcfg = tiny_train_cfg();
    tcfg.epochs = 1;
    auto pre = train::pretrain(manifest, tiny_cfg(), tcfg);

    SUBCASE("finetune warm starts from the checkpoint") {
        auto ftcfg = tcfg;
        ftcfg.phase = "finetune";
        ftcfg.epochs = 1;
        auto ft = train::finetune(pre, manifest, ftcfg);
        CHECK(ft.phase == "finetune");
        // weights moved off the pretrained point
        CHECK_FALSE(params_equal(pre.model->params, ft.model->params));

        // determinism of the full two-stage pipeline
        auto ft2 = train::finetune(pre, manifest, ftcfg);
        CHECK(params_equal(ft.model->params, ft2.model->params));
    }

    SUBCASE("frozen head training leaves the backbone untouched") {
        std::vector<std::vector<double>> snapshot;
        for (const auto& [name, var] : pre.model->params.items)
            snapshot.push_back(var->value.data);
        auto unchanged = [&](const nn::ParamStore& ps) {
            for (std::size_t i = 0; i < ps.items.size(); ++i)
                if (ps.items[i].second->value.data != snapshot[i]) return false;
            return true;
        };

        auto hcfg = tcfg;
        hcfg.epochs = 3;
        auto with_head = train::train_regression_head(pre, manifest, true, hcfg);
        REQUIRE(with_head.head != nullptr);
        CHECK(unchanged(with_head.model->params));

        // unfrozen training may move the backbone; the input bundle stays intact
        auto unfrozen = train::train_regression_head(pre, manifest, false, hcfg);
        REQUIRE(unfrozen.head != nullptr);
        CHECK(unchanged(pre.model->params));
        CHECK_FALSE(unchanged(unfrozen.model->params));
    }

    SUBCASE("head training requires labels") {
        auto unlabeled = manifest;
        for (auto& r : unlabeled.records) r.mos.reset();
        CHECK_THROWS(train::train_regression_head(pre, unlabeled, true, tcfg));
    }
}
