#pragma once

#include <optional>
#include <span>

#include "czsl/common.hpp"
#include "czsl/core.hpp"

namespace czsl {

// Two-layer MLP mapping backbone features into the shared d-dimensional
// space. After layer 1 the order of operations is fixed as
// LayerNorm -> ReLU -> Dropout; dropout is inverted (surviving units scaled
// by 1/(1-rate)) so evaluation needs no rescaling.
struct VisualEmbedderParams {
    Matrix w1;       // hidden x feature_dim
    Vec b1;          // hidden
    Vec ln_gain;     // hidden
    Vec ln_shift;    // hidden
    Matrix w2;       // d x hidden
    Vec b2;          // d
    double dropout_rate = 0.3;

    std::size_t feature_dim() const { return w1.cols; }
    std::size_t hidden_dim() const { return w1.rows; }
    std::size_t out_dim() const { return w2.rows; }

    void validate() const;
};

// Rows are primitive embedding vectors in the shared space.
struct PrimitiveEmbeddingTable {
    Matrix states;   // |S| x d
    Matrix objects;  // |O| x d

    std::size_t dim() const { return states.cols; }
    void validate() const;
};

// Linear projection of the concatenated primitive embeddings: 2d x d.
struct CompositionProjector {
    Matrix w;

    void validate() const;
};

struct ModelParams {
    VisualEmbedderParams visual;
    PrimitiveEmbeddingTable primitives;
    CompositionProjector projector;
    double temperature = 0.05;

    std::size_t shared_dim() const { return primitives.dim(); }
    void validate() const;
};

// Fresh parameters: layer weights and the projector uniform in
// (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, layernorm identity; the
// primitive table is taken as given (word embeddings via the I/O layer).
// hidden_dim == 0 selects the default hidden width d.
ModelParams init_model_params(std::size_t feature_dim, PrimitiveEmbeddingTable primitives,
                              double temperature, double dropout_rate, std::size_t hidden_dim,
                              Rng& rng);

enum class ForwardMode { Train, Eval };

constexpr double kLayerNormEpsilon = 1e-5;
constexpr double kCosineEpsilon = 1e-12;

namespace detail {

// Forward pass with every intermediate kept for backprop. dropout_scale is
// the per-unit inverted-dropout multiplier (empty = no dropout).
struct VisualTrace {
    Vec pre_norm;       // layer-1 affine output
    double mean = 0.0;
    double inv_std = 0.0;
    Vec normalized;     // (pre_norm - mean) * inv_std
    Vec activated;      // ReLU(gain * normalized + shift)
    Vec dropout_scale;  // empty when dropout is off
    Vec out;            // layer-2 affine output
};

VisualTrace visual_forward(const VisualEmbedderParams& params, std::span<const double> feature,
                           const Vec* dropout_scale);

// Draws one inverted-dropout scale per hidden unit, in unit order.
Vec draw_dropout_scale(std::size_t hidden_dim, double rate, Rng& rng);

}  // namespace detail

// omega(x). Train mode applies dropout using rng (one uniform per hidden
// unit, in unit order); Eval mode is deterministic and never touches rng.
Vec visual_embed(const ModelParams& params, std::span<const double> feature, ForwardMode mode,
                 Rng* rng);

// phi(c) = W^T [phi(s); phi(o)].
Vec compose_embed(const ModelParams& params, std::size_t state_idx, std::size_t object_idx);

// Clamped to [-1, 1]; both arguments must have norm > 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

enum class ScoreSubset { Seen, Target };

// Embeddings of every composition in the subset, one per row, in core order.
Matrix composition_embeddings(const ModelParams& params, const CompositionSpace& space,
                              ScoreSubset subset);

// p(x, c) for every composition in the subset, in core order.
Vec score_all(const ModelParams& params, std::span<const double> feature,
              const CompositionSpace& space, ScoreSubset subset, ForwardMode mode, Rng* rng);

// Eval-mode scores for many feature rows at once (composition embeddings are
// computed once). Returns feature_rows.size() x |subset|.
Matrix batch_scores(const ModelParams& params, const Matrix& features,
                    const std::vector<std::size_t>& feature_rows, const CompositionSpace& space,
                    ScoreSubset subset);

// Eval-mode argmax over the target space, optionally restricted to mask-true
// entries; ties break toward the lowest composition index.
PairIdx predict(const ModelParams& params, std::span<const double> feature,
                const CompositionSpace& space, const std::vector<char>* mask = nullptr);

}  // namespace czsl
