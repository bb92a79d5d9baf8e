#include "czsl/embed.hpp"

#include <algorithm>
#include <cmath>

namespace czsl {

namespace {

void require_finite_matrix(const Matrix& m, const char* what) {
    if (!all_finite(m.data)) throw Error(ErrorKind::NonFiniteInput, what);
}

void require_finite_vec(const Vec& v, const char* what) {
    if (!all_finite(v)) throw Error(ErrorKind::NonFiniteInput, what);
}

// y = M x + b
Vec affine(const Matrix& m, std::span<const double> x, const Vec& b) {
    Vec y(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        y[r] = dot(m.row(r), x) + b[r];
    }
    return y;
}

}  // namespace

void VisualEmbedderParams::validate() const {
    require_finite_matrix(w1, "visual layer-1 weights");
    require_finite_vec(b1, "visual layer-1 bias");
    require_finite_vec(ln_gain, "layernorm gain");
    require_finite_vec(ln_shift, "layernorm shift");
    require_finite_matrix(w2, "visual layer-2 weights");
    require_finite_vec(b2, "visual layer-2 bias");
    const std::size_t hidden = w1.rows;
    if (b1.size() != hidden || ln_gain.size() != hidden || ln_shift.size() != hidden ||
        w2.cols != hidden || b2.size() != w2.rows) {
        throw Error(ErrorKind::DimensionMismatch, "visual embedder shapes are inconsistent");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "dropout rate must be in [0, 1)");
    }
}

void PrimitiveEmbeddingTable::validate() const {
    require_finite_matrix(states, "state embeddings");
    require_finite_matrix(objects, "object embeddings");
    if (states.cols != objects.cols) {
        throw Error(ErrorKind::DimensionMismatch, "state and object embedding dims differ");
    }
    auto check_rows = [](const Matrix& m, const char* what) {
        for (std::size_t r = 0; r < m.rows; ++r) {
            if (squared_norm(m.row(r)) <= kCosineEpsilon * kCosineEpsilon) {
                throw Error(ErrorKind::ZeroVector,
                            std::string(what) + " row " + std::to_string(r) + " is zero");
            }
        }
    };
    check_rows(states, "state embedding");
    check_rows(objects, "object embedding");
}

void CompositionProjector::validate() const {
    require_finite_matrix(w, "composition projector");
}

void ModelParams::validate() const {
    visual.validate();
    primitives.validate();
    projector.validate();
    const std::size_t d = primitives.dim();
    if (visual.out_dim() != d) {
        throw Error(ErrorKind::DimensionMismatch, "visual output dim differs from shared dim");
    }
    if (projector.w.rows != 2 * d || projector.w.cols != d) {
        throw Error(ErrorKind::DimensionMismatch, "projector must be 2d x d");
    }
    if (!(temperature > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "temperature must be positive");
    }
}

ModelParams init_model_params(std::size_t feature_dim, PrimitiveEmbeddingTable primitives,
                              double temperature, double dropout_rate, std::size_t hidden_dim,
                              Rng& rng) {
    primitives.validate();
    const std::size_t d = primitives.dim();
    const std::size_t hidden = hidden_dim == 0 ? d : hidden_dim;

    auto uniform_matrix = [&](std::size_t rows, std::size_t cols, std::size_t fan_in) {
        Matrix m(rows, cols);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : m.data) v = rng.uniform(-bound, bound);
        return m;
    };

    ModelParams params;
    params.visual.w1 = uniform_matrix(hidden, feature_dim, feature_dim);
    params.visual.b1.assign(hidden, 0.0);
    params.visual.ln_gain.assign(hidden, 1.0);
    params.visual.ln_shift.assign(hidden, 0.0);
    params.visual.w2 = uniform_matrix(d, hidden, hidden);
    params.visual.b2.assign(d, 0.0);
    params.visual.dropout_rate = dropout_rate;
    params.primitives = std::move(primitives);
    params.projector.w = uniform_matrix(2 * d, d, 2 * d);
    params.temperature = temperature;
    params.validate();
    return params;
}

namespace detail {

VisualTrace visual_forward(const VisualEmbedderParams& params, std::span<const double> feature,
                           const Vec* dropout_scale) {
    if (feature.size() != params.feature_dim()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "feature length " + std::to_string(feature.size()) + ", expected " +
                        std::to_string(params.feature_dim()));
    }
    if (!all_finite(feature)) throw Error(ErrorKind::NonFiniteInput, "feature vector");

    VisualTrace trace;
    trace.pre_norm = affine(params.w1, feature, params.b1);

    const std::size_t hidden = trace.pre_norm.size();
    double mean = 0.0;
    for (double v : trace.pre_norm) mean += v;
    mean /= static_cast<double>(hidden);
    double var = 0.0;
    for (double v : trace.pre_norm) var += (v - mean) * (v - mean);
    var /= static_cast<double>(hidden);
    trace.mean = mean;
    trace.inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);

    trace.normalized.resize(hidden);
    trace.activated.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        trace.normalized[i] = (trace.pre_norm[i] - mean) * trace.inv_std;
        double h = params.ln_gain[i] * trace.normalized[i] + params.ln_shift[i];
        trace.activated[i] = h > 0.0 ? h : 0.0;
    }

    Vec dropped = trace.activated;
    if (dropout_scale) {
        if (dropout_scale->size() != hidden) {
            throw Error(ErrorKind::LengthMismatch, "dropout scale length");
        }
        trace.dropout_scale = *dropout_scale;
        for (std::size_t i = 0; i < hidden; ++i) dropped[i] *= (*dropout_scale)[i];
    }

    trace.out = affine(params.w2, dropped, params.b2);
    return trace;
}

Vec draw_dropout_scale(std::size_t hidden_dim, double rate, Rng& rng) {
    Vec scale(hidden_dim);
    const double keep = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < hidden_dim; ++i) {
        scale[i] = rng.uniform() < rate ? 0.0 : keep;
    }
    return scale;
}

}  // namespace detail

Vec visual_embed(const ModelParams& params, std::span<const double> feature, ForwardMode mode,
                 Rng* rng) {
    const double rate = params.visual.dropout_rate;
    if (mode == ForwardMode::Train && rate > 0.0) {
        if (!rng) throw Error(ErrorKind::InvalidConfig, "train-mode dropout requires an rng");
        Vec scale = detail::draw_dropout_scale(params.visual.hidden_dim(), rate, *rng);
        return detail::visual_forward(params.visual, feature, &scale).out;
    }
    return detail::visual_forward(params.visual, feature, nullptr).out;
}

Vec compose_embed(const ModelParams& params, std::size_t state_idx, std::size_t object_idx) {
    const Matrix& states = params.primitives.states;
    const Matrix& objects = params.primitives.objects;
    if (state_idx >= states.rows || object_idx >= objects.rows) {
        throw Error(ErrorKind::IndexOutOfRange,
                    "primitive pair (" + std::to_string(state_idx) + ", " +
                        std::to_string(object_idx) + ")");
    }
    const std::size_t d = states.cols;
    const Matrix& w = params.projector.w;
    Vec out(w.cols, 0.0);
    auto s_row = states.row(state_idx);
    auto o_row = objects.row(object_idx);
    for (std::size_t i = 0; i < d; ++i) {
        const double si = s_row[i];
        auto w_row = w.row(i);
        for (std::size_t j = 0; j < w.cols; ++j) out[j] += si * w_row[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double oi = o_row[i];
        auto w_row = w.row(d + i);
        for (std::size_t j = 0; j < w.cols; ++j) out[j] += oi * w_row[j];
    }
    return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw Error(ErrorKind::LengthMismatch, "cosine of unequal lengths");
    const double nu = std::sqrt(squared_norm(u));
    const double nv = std::sqrt(squared_norm(v));
    if (nu <= kCosineEpsilon || nv <= kCosineEpsilon) {
        throw Error(ErrorKind::ZeroVector, "cosine of a (near-)zero vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Matrix composition_embeddings(const ModelParams& params, const CompositionSpace& space,
                              ScoreSubset subset) {
    const std::vector<PairIdx>& pairs = subset == ScoreSubset::Seen ? space.seen() : space.target();
    Matrix out(pairs.size(), params.shared_dim());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Vec embedding = compose_embed(params, pairs[i].state, pairs[i].object);
        std::copy(embedding.begin(), embedding.end(), out.row(i).begin());
    }
    return out;
}

namespace {

Vec scores_against(const Matrix& comp_embeddings, std::span<const double> visual) {
    Vec scores(comp_embeddings.rows);
    for (std::size_t c = 0; c < comp_embeddings.rows; ++c) {
        scores[c] = cosine(visual, comp_embeddings.row(c));
    }
    return scores;
}

}  // namespace

Vec score_all(const ModelParams& params, std::span<const double> feature,
              const CompositionSpace& space, ScoreSubset subset, ForwardMode mode, Rng* rng) {
    Vec visual = visual_embed(params, feature, mode, rng);
    Matrix comp = composition_embeddings(params, space, subset);
    return scores_against(comp, visual);
}

Matrix batch_scores(const ModelParams& params, const Matrix& features,
                    const std::vector<std::size_t>& feature_rows, const CompositionSpace& space,
                    ScoreSubset subset) {
    Matrix comp = composition_embeddings(params, space, subset);
    Matrix out(feature_rows.size(), comp.rows);
    for (std::size_t i = 0; i < feature_rows.size(); ++i) {
        if (feature_rows[i] >= features.rows) {
            throw Error(ErrorKind::IndexOutOfRange, "feature row " + std::to_string(feature_rows[i]));
        }
        Vec visual = visual_embed(params, features.row(feature_rows[i]), ForwardMode::Eval, nullptr);
        Vec scores = scores_against(comp, visual);
        std::copy(scores.begin(), scores.end(), out.row(i).begin());
    }
    return out;
}

PairIdx predict(const ModelParams& params, std::span<const double> feature,
                const CompositionSpace& space, const std::vector<char>* mask) {
    if (mask) {
        if (mask->size() != space.target_size()) {
            throw Error(ErrorKind::LengthMismatch, "mask length differs from target size");
        }
        if (std::find(mask->begin(), mask->end(), char(1)) == mask->end()) {
            throw Error(ErrorKind::EmptyMask, "mask has no admissible composition");
        }
    }
    Vec scores = score_all(params, feature, space, ScoreSubset::Target, ForwardMode::Eval, nullptr);
    std::size_t best = space.target_size();
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (mask && !(*mask)[c]) continue;
        if (best == space.target_size() || scores[c] > scores[best]) best = c;
    }
    return space.target_pair(best);
}

}  // namespace czsl
