#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cadis/degrade.hpp"
#include "cadis/image.hpp"
#include "cadis/losses.hpp"
#include "cadis/nn.hpp"
#include "cadis/score.hpp"

namespace cadis::train {

struct TrainConfig {
    std::string phase = "pretrain";  // pretrain | finetune
    int epochs = 40;
    int batch_size = 8;
    double lr = 1e-4;
    std::string schedule = "cosine";
    int resize = 64;
    double flip_prob = 0.5;
    std::uint64_t seed = 0;
    losses::LossWeights loss_weights;
    bool causal_layer_enabled = true;
    std::string precision = "float64";  // checkpoint storage width: float32 | float64
    bool saturating_gan = false;
    double grad_clip = 5.0;
    double weight_decay = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    std::string log_csv;              // per-step loss components, optional
    std::string checkpoint_dir;       // per-epoch checkpoints, optional

    void validate(int decoder_depth) const;
    // key = value overrides; keys mirror the field names
    void apply_kv(const std::string& key, const std::string& value);
    void load_ini(const std::string& path);
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// Named defaults bundle: "desk" (CPU-minutes scale) and "paper" (protocol
// values: resize 448, epochs 200/20, batch 24, lr 1e-4, embedding 15/0.1).
struct RunProfile {
    std::string name;
    nn::ModelConfig model;
    TrainConfig pretrain_cfg;
    TrainConfig finetune_cfg;
    score::EmbeddingParams embedding;
    degrade::DegradationProtocol protocol;

    static RunProfile get(const std::string& name);
    // fields that differ between the two profiles, as "key: a -> b" lines
    static std::vector<std::string> diff(const RunProfile& a, const RunProfile& b);
};

// Regression head plus its own parameter store (kept separate from the
// backbone so freezing is structural, not conventional).
struct HeadBundle {
    nn::ParamStore params;
    nn::RegressionHead head;
    int hidden = 64;
};

struct CheckpointBundle {
    std::shared_ptr<nn::Model> model;
    std::shared_ptr<HeadBundle> head;  // optional
    int epoch = 0;
    std::uint64_t seed = 0;
    std::string phase;
    std::string rng_state;

    void save(const std::string& dir, const std::string& precision = "float64") const;
    static CheckpointBundle load(const std::string& dir);
};

// Decoupled-weight-decay adaptive-moment optimizer. Parameters whose
// gradient was never produced in the current step are left untouched.
struct AdamW {
    std::vector<ag::Var> params;
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-4;
    std::vector<Tensor> m, v;
    long t = 0;

    explicit AdamW(std::vector<ag::Var> p, double lr_, double b1, double b2, double wd);
    void step();
};

double cosine_lr(double lr0, int t, int total);
// L2 norm over every gradient; scales down in place if above max_norm.
double clip_grad_norm(const std::vector<ag::Var>& params, double max_norm);

struct PairSample {
    Image ref, dist;
    degrade::ManifestRecord record;
};

std::vector<PairSample> load_pairs(const degrade::Manifest& manifest, const std::string& split,
                                   int resize);

// Mean total reconstruction loss of a model over a pair set (no updates).
double evaluate_loss(const nn::Model& model, const std::vector<PairSample>& pairs,
                     const TrainConfig& cfg, const nn::PerceptualNet& perc);

CheckpointBundle pretrain(const degrade::Manifest& manifest, const nn::ModelConfig& model_cfg,
                          const TrainConfig& cfg);
CheckpointBundle finetune(const CheckpointBundle& ckpt, const degrade::Manifest& manifest,
                          const TrainConfig& cfg);
// frozen=true: backbone untouched, head trained on cached features.
CheckpointBundle train_regression_head(const CheckpointBundle& ckpt,
                                       const degrade::Manifest& labeled, bool frozen,
                                       const TrainConfig& cfg);

}  // namespace cadis::train
