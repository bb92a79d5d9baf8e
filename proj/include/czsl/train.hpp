#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "czsl/common.hpp"
#include "czsl/core.hpp"
#include "czsl/embed.hpp"
#include "czsl/eval.hpp"
#include "czsl/feasibility.hpp"

namespace czsl {

// ClosedWorld normalizes over the seen compositions only; the open-world
// modes normalize over the full target space, with OpenWorldMargin
// subtracting alpha * rho(c) from every unseen logit.
enum class TrainMode { ClosedWorld, OpenWorldNoMargin, OpenWorldMargin };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& text);

struct TrainConfig {
    double temperature = 0.05;
    double alpha_max = 0.4;
    std::size_t warmup_epochs = 15;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    double learning_rate = 5e-5;
    double weight_decay = 5e-5;
    MixingMode mixing = MixingMode::Avg;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::OpenWorldMargin;
    bool decay_primitives = true;

    void validate() const;
};

// One tensor per trainable parameter, shapes mirroring ModelParams.
struct Gradients {
    Matrix w1;
    Vec b1;
    Vec ln_gain;
    Vec ln_shift;
    Matrix w2;
    Vec b2;
    Matrix states;
    Matrix objects;
    Matrix proj_w;

    static Gradients zeros_like(const ModelParams& params);
};

// Flat named views over the trainable tensors, in a fixed order shared by
// the optimizer, the gradient checker, and checkpoint serialization.
struct TensorRef {
    const char* name;
    std::span<double> values;
};

std::vector<TensorRef> tensor_refs(ModelParams& params);
std::vector<TensorRef> tensor_refs(Gradients& grads);

struct AdamMoments {
    Gradients m;
    Gradients v;
    std::uint64_t step = 0;
};

struct TrainState {
    ModelParams params;
    AdamMoments moments;
    std::size_t epoch = 0;
    FeasibilityTable feasibility;
    Rng rng{0};
};

// alpha_max * min(1, epoch / warmup_epochs); epoch 0 is exactly 0.
double alpha_at(std::size_t epoch, const TrainConfig& config);

// Seen entries pass through; unseen entry c becomes score - alpha * rho(c).
// The result is deliberately not clamped.
Vec margin_scores(const Vec& target_scores, const FeasibilityTable& table, double alpha,
                  const CompositionSpace& space);

// -log softmax(scores / temperature)[label], stable for extreme logit gaps
// in both directions (log1p path when the label attains the max).
double xent_loss(const Vec& adjusted_scores, std::size_t label_idx, double temperature);

struct BatchLossResult {
    double loss = 0.0;
    Gradients grads;
};

// Mean per-sample loss over the batch plus gradients for every trainable
// tensor. The feasibility table is a constant (no gradient through rho);
// dropout draws come from state.rng, one hidden-unit mask per sample in
// batch order. alpha is alpha_at(state.epoch).
BatchLossResult batch_loss(TrainState& state, std::span<const Sample> batch, const Matrix& features,
                           const CompositionSpace& space, const TrainConfig& config);

// Loss only, with dropout disabled; used by the finite-difference checker.
double batch_loss_value(const ModelParams& params, const FeasibilityTable& table, double alpha,
                        std::span<const Sample> batch, const Matrix& features,
                        const CompositionSpace& space, const TrainConfig& config);

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with decoupled weight decay.
void optimizer_step(TrainState& state, const Gradients& grads, const TrainConfig& config);

struct EpochLog {
    std::size_t epoch = 0;
    double alpha = 0.0;
    double train_loss = 0.0;
    std::optional<double> val_auc;
};

struct TrainResult {
    TrainState state;                 // after the last epoch
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;       // by validation AUC; last epoch if no val split
    double best_val_auc = -1.0;
    ModelParams best_params;
};

// Per epoch: recompute the feasibility table from the current primitive
// embeddings, set alpha, shuffle the train split with an epoch-derived
// stream, run batches, and log loss plus validation AUC when a val split
// exists. Model selection keeps the earliest epoch on AUC ties.
TrainResult train(const Dataset& dataset, const Matrix& features, const CompositionSpace& space,
                  ModelParams init_params, const TrainConfig& config);

// Max relative error between analytic and central-difference gradients over
// every parameter. Requires dropout rate 0. alpha is config.alpha_max.
double grad_check(const ModelParams& params, const FeasibilityTable& table,
                  std::span<const Sample> batch, const Matrix& features,
                  const CompositionSpace& space, const TrainConfig& config, double epsilon = 1e-5);

}  // namespace czsl
