#pragma once

#include <stdexcept>

#include "cadis/autograd.hpp"
#include "cadis/nn.hpp"

namespace cadis::losses {

using ag::Var;

struct LossWeights {
    double w_mse = 1.0;
    double w_perc = 0.1;
    double w_adv = 0.01;

    void validate() const {
        if (w_mse < 0 || w_perc < 0 || w_adv < 0)
            throw std::invalid_argument("loss weights must be >= 0");
        if (w_mse == 0 && w_perc == 0 && w_adv == 0)
            throw std::invalid_argument("at least one loss weight must be > 0");
    }
};

inline Var loss_mse(const Var& recon, const Var& target) { return ag::mse(recon, target); }

// Multi-tap perceptual distance through a frozen feature extractor. Gradients
// reach recon but never the extractor weights.
inline Var loss_perceptual(const Var& recon, const Var& target, const nn::PerceptualNet& net) {
    const auto& s = recon->value.shape;
    if (s.size() != 4 || s[2] < 8 || s[3] < 8)
        throw std::invalid_argument("loss_perceptual: resolution below extractor minimum (8)");
    auto fa = net.taps(recon);
    auto fb = net.taps(target);
    Var total;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        Var term = ag::mse(fa[i], fb[i]);
        total = total ? ag::add(total, term) : term;
    }
    return total;
}

// Stable log-sigmoid forms: -log sigmoid(x) = softplus(-x),
// -log(1 - sigmoid(x)) = softplus(x).
struct AdversarialLoss {
    Var gen;   // generator term
    Var disc;  // discriminator term
};

inline AdversarialLoss loss_adversarial(const Var& d_real, const Var& d_fake,
                                        bool saturating = false) {
    Var disc = ag::add(ag::mean_all(ag::softplus(ag::scale(d_real, -1.0))),
                       ag::mean_all(ag::softplus(d_fake)));
    Var gen = saturating
                  // literal minimax generator term: mean log(1 - sigmoid(d_fake))
                  ? ag::scale(ag::mean_all(ag::softplus(d_fake)), -1.0)
                  : ag::mean_all(ag::softplus(ag::scale(d_fake, -1.0)));
    return {gen, disc};
}

struct LossComponents {
    double mse = 0.0;
    double perceptual = 0.0;
    double adversarial_gen = 0.0;
    double adversarial_disc = 0.0;
    double total = 0.0;
};

// w_mse * L_mse + w_perc * L_perc + w_adv * L_gen. Each component is also
// reported numerically for the training log.
inline Var total_loss(const Var& recon, const Var& target, const Var& d_fake_logits,
                      const LossWeights& w, const nn::PerceptualNet& perc_net,
                      LossComponents* components = nullptr, bool saturating = false) {
    w.validate();
    Var total;
    auto accumulate = [&total](const Var& term, double weight) {
        Var scaled = ag::scale(term, weight);
        total = total ? ag::add(total, scaled) : scaled;
    };
    LossComponents comps;
    if (w.w_mse > 0) {
        Var l = loss_mse(recon, target);
        comps.mse = l->value.data[0];
        accumulate(l, w.w_mse);
    }
    if (w.w_perc > 0) {
        Var l = loss_perceptual(recon, target, perc_net);
        comps.perceptual = l->value.data[0];
        accumulate(l, w.w_perc);
    }
    if (w.w_adv > 0) {
        if (!d_fake_logits) throw std::invalid_argument("total_loss: adversarial term needs logits");
        Var g = (saturating ? ag::scale(ag::mean_all(ag::softplus(d_fake_logits)), -1.0)
                            : ag::mean_all(ag::softplus(ag::scale(d_fake_logits, -1.0))));
        comps.adversarial_gen = g->value.data[0];
        accumulate(g, w.w_adv);
    }
    comps.total = total->value.data[0];
    if (components) *components = comps;
    return total;
}

}  // namespace cadis::losses
