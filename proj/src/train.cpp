#include "czsl/train.hpp"

#include <algorithm>
#include <cmath>

namespace czsl {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

struct SoftmaxResult {
    double loss = 0.0;
    Vec probs;
};

// Shared by the loss and the backward pass; see xent_loss for the
// stabilization contract.
SoftmaxResult stable_softmax_loss(const Vec& adjusted, std::size_t label, double temperature) {
    if (label >= adjusted.size()) {
        throw Error(ErrorKind::IndexOutOfRange, "label " + std::to_string(label));
    }
    if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be positive");

    const double inv_t = 1.0 / temperature;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double s : adjusted) max_logit = std::max(max_logit, s * inv_t);

    SoftmaxResult result;
    result.probs.resize(adjusted.size());
    double z = 0.0;
    double rest = 0.0;  // sum of exp terms excluding the label
    for (std::size_t c = 0; c < adjusted.size(); ++c) {
        const double e = std::exp(adjusted[c] * inv_t - max_logit);
        result.probs[c] = e;
        z += e;
        if (c != label) rest += e;
    }
    for (double& p : result.probs) p /= z;

    const double label_logit = adjusted[label] * inv_t;
    if (label_logit == max_logit) {
        result.loss = std::log1p(rest);  // exact when the loss underflows toward 0
    } else {
        result.loss = (max_logit - label_logit) + std::log(z);
    }
    return result;
}

struct BatchSubset {
    const std::vector<PairIdx>* pairs = nullptr;
    std::vector<double> margins;  // empty means all-zero
    bool closed_world = false;
};

BatchSubset make_subset(const CompositionSpace& space, const FeasibilityTable* table, double alpha,
                        const TrainConfig& config) {
    BatchSubset subset;
    if (config.mode == TrainMode::ClosedWorld) {
        subset.pairs = &space.seen();
        subset.closed_world = true;
        return subset;
    }
    subset.pairs = &space.target();
    if (config.mode == TrainMode::OpenWorldMargin && alpha != 0.0) {
        if (!table || table->size() != space.target_size()) {
            throw Error(ErrorKind::LengthMismatch, "margin mode needs a target-aligned feasibility table");
        }
        subset.margins.resize(space.target_size(), 0.0);
        for (std::size_t c = 0; c < space.target_size(); ++c) {
            if (!space.is_seen(c)) subset.margins[c] = alpha * table->rho[c];
        }
    }
    return subset;
}

std::size_t sample_label(const CompositionSpace& space, const Sample& sample, bool closed_world) {
    const PairIdx pair{sample.state, sample.object};
    return closed_world ? space.seen_position(pair) : space.target_index(pair);
}

// Forward/backward over one batch. dropout_scales may be null (no dropout)
// and grads_out may be null (loss only). Reduction order is fixed: samples
// in batch order, compositions in subset order.
double compute_batch(const ModelParams& params, const FeasibilityTable* table, double alpha,
                     std::span<const Sample> batch, const Matrix& features,
                     const CompositionSpace& space, const TrainConfig& config,
                     const std::vector<Vec>* dropout_scales, Gradients* grads_out) {
    if (batch.empty()) throw Error(ErrorKind::InvalidConfig, "empty batch");

    BatchSubset subset = make_subset(space, table, alpha, config);
    const std::vector<PairIdx>& pairs = *subset.pairs;
    const std::size_t n_comps = pairs.size();
    const std::size_t d = params.shared_dim();

    Matrix comp(n_comps, d);
    Vec comp_norm(n_comps);
    for (std::size_t c = 0; c < n_comps; ++c) {
        Vec embedding = compose_embed(params, pairs[c].state, pairs[c].object);
        std::copy(embedding.begin(), embedding.end(), comp.row(c).begin());
        comp_norm[c] = std::sqrt(squared_norm(comp.row(c)));
        if (comp_norm[c] <= kCosineEpsilon) {
            throw Error(ErrorKind::ZeroVector, "composition embedding " + std::to_string(c));
        }
    }

    Matrix comp_grad;  // accumulated d(loss)/d(comp embedding)
    if (grads_out) comp_grad = Matrix(n_comps, d, 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const double inv_t = 1.0 / config.temperature;
    double total_loss = 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& sample = batch[i];
        if (sample.feature_row >= features.rows) {
            throw Error(ErrorKind::IndexOutOfRange, "feature row " + std::to_string(sample.feature_row));
        }
        const Vec* scale = dropout_scales ? &(*dropout_scales)[i] : nullptr;
        detail::VisualTrace trace = detail::visual_forward(params.visual, features.row(sample.feature_row), scale);
        const Vec& v = trace.out;
        const double v_norm = std::sqrt(squared_norm(v));
        if (v_norm <= kCosineEpsilon) throw Error(ErrorKind::ZeroVector, "visual embedding");

        Vec cos_scores(n_comps);
        Vec adjusted(n_comps);
        for (std::size_t c = 0; c < n_comps; ++c) {
            const double raw = dot(v, comp.row(c)) / (v_norm * comp_norm[c]);
            cos_scores[c] = std::clamp(raw, -1.0, 1.0);
            adjusted[c] = subset.margins.empty() ? cos_scores[c] : cos_scores[c] - subset.margins[c];
        }

        const std::size_t label = sample_label(space, sample, subset.closed_world);
        SoftmaxResult softmax = stable_softmax_loss(adjusted, label, config.temperature);
        total_loss += softmax.loss * inv_batch;

        if (!grads_out) continue;

        // d(loss)/d(cos_c); the margin is an additive constant.
        Vec dcos(n_comps);
        for (std::size_t c = 0; c < n_comps; ++c) {
            const double delta = c == label ? 1.0 : 0.0;
            dcos[c] = (softmax.probs[c] - delta) * inv_t * inv_batch;
        }

        // Backprop through the cosine into the visual embedding and into
        // each composition embedding.
        Vec dv(d, 0.0);
        double v_self_coeff = 0.0;
        const double inv_v2 = 1.0 / (v_norm * v_norm);
        for (std::size_t c = 0; c < n_comps; ++c) {
            const double shared = dcos[c] / (v_norm * comp_norm[c]);
            auto q = comp.row(c);
            for (std::size_t j = 0; j < d; ++j) dv[j] += shared * q[j];
            v_self_coeff -= dcos[c] * cos_scores[c] * inv_v2;

            auto dq = comp_grad.row(c);
            const double q_self = -dcos[c] * cos_scores[c] / (comp_norm[c] * comp_norm[c]);
            for (std::size_t j = 0; j < d; ++j) dq[j] += shared * v[j] + q_self * q[j];
        }
        for (std::size_t j = 0; j < d; ++j) dv[j] += v_self_coeff * v[j];

        // Visual MLP backward.
        const std::size_t hidden = params.visual.hidden_dim();
        Vec dropped(hidden);
        for (std::size_t h = 0; h < hidden; ++h) {
            dropped[h] = scale ? trace.activated[h] * (*scale)[h] : trace.activated[h];
        }
        for (std::size_t j = 0; j < d; ++j) {
            grads_out->b2[j] += dv[j];
            auto w2_grad = grads_out->w2.row(j);
            for (std::size_t h = 0; h < hidden; ++h) w2_grad[h] += dv[j] * dropped[h];
        }
        Vec d_dropped(hidden, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            auto w2_row = params.visual.w2.row(j);
            for (std::size_t h = 0; h < hidden; ++h) d_dropped[h] += w2_row[h] * dv[j];
        }

        Vec d_norm(hidden);
        double mean_dnorm = 0.0;
        double mean_dnorm_norm = 0.0;
        for (std::size_t h = 0; h < hidden; ++h) {
            double da = scale ? d_dropped[h] * (*scale)[h] : d_dropped[h];
            if (trace.activated[h] <= 0.0) da = 0.0;  // ReLU gate
            grads_out->ln_gain[h] += da * trace.normalized[h];
            grads_out->ln_shift[h] += da;
            d_norm[h] = da * params.visual.ln_gain[h];
            mean_dnorm += d_norm[h];
            mean_dnorm_norm += d_norm[h] * trace.normalized[h];
        }
        mean_dnorm /= static_cast<double>(hidden);
        mean_dnorm_norm /= static_cast<double>(hidden);

        auto x = features.row(sample.feature_row);
        for (std::size_t h = 0; h < hidden; ++h) {
            const double dz =
                trace.inv_std * (d_norm[h] - mean_dnorm - trace.normalized[h] * mean_dnorm_norm);
            grads_out->b1[h] += dz;
            auto w1_grad = grads_out->w1.row(h);
            for (std::size_t f = 0; f < x.size(); ++f) w1_grad[f] += dz * x[f];
        }
    }

    if (grads_out) {
        // phi(c) = W^T [phi(s); phi(o)]: scatter the accumulated embedding
        // gradients into the projector and the primitive table.
        const Matrix& w = params.projector.w;
        for (std::size_t c = 0; c < n_comps; ++c) {
            auto dq = comp_grad.row(c);
            auto s_row = params.primitives.states.row(pairs[c].state);
            auto o_row = params.primitives.objects.row(pairs[c].object);
            auto ds_row = grads_out->states.row(pairs[c].state);
            auto do_row = grads_out->objects.row(pairs[c].object);
            for (std::size_t i = 0; i < d; ++i) {
                auto w_top = w.row(i);
                auto w_bottom = w.row(d + i);
                auto gw_top = grads_out->proj_w.row(i);
                auto gw_bottom = grads_out->proj_w.row(d + i);
                double ds = 0.0;
                double dobj = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    gw_top[j] += s_row[i] * dq[j];
                    gw_bottom[j] += o_row[i] * dq[j];
                    ds += w_top[j] * dq[j];
                    dobj += w_bottom[j] * dq[j];
                }
                ds_row[i] += ds;
                do_row[i] += dobj;
            }
        }
    }

    return total_loss;
}

}  // namespace

const char* to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::ClosedWorld: return "closed-world";
        case TrainMode::OpenWorldNoMargin: return "open-world-no-margin";
        case TrainMode::OpenWorldMargin: return "open-world-margin";
    }
    return "open-world-margin";
}

TrainMode train_mode_from_string(const std::string& text) {
    if (text == "closed-world") return TrainMode::ClosedWorld;
    if (text == "open-world-no-margin") return TrainMode::OpenWorldNoMargin;
    if (text == "open-world-margin") return TrainMode::OpenWorldMargin;
    throw Error(ErrorKind::ParseError, "unknown train mode '" + text + "'");
}

void TrainConfig::validate() const {
    if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be positive");
    if (warmup_epochs < 1) throw Error(ErrorKind::InvalidConfig, "warmup_epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
    if (alpha_max < 0.0) throw Error(ErrorKind::InvalidConfig, "alpha_max must be >= 0");
    if (weight_decay < 0.0) throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
}

Gradients Gradients::zeros_like(const ModelParams& params) {
    Gradients g;
    g.w1 = Matrix(params.visual.w1.rows, params.visual.w1.cols);
    g.b1.assign(params.visual.b1.size(), 0.0);
    g.ln_gain.assign(params.visual.ln_gain.size(), 0.0);
    g.ln_shift.assign(params.visual.ln_shift.size(), 0.0);
    g.w2 = Matrix(params.visual.w2.rows, params.visual.w2.cols);
    g.b2.assign(params.visual.b2.size(), 0.0);
    g.states = Matrix(params.primitives.states.rows, params.primitives.states.cols);
    g.objects = Matrix(params.primitives.objects.rows, params.primitives.objects.cols);
    g.proj_w = Matrix(params.projector.w.rows, params.projector.w.cols);
    return g;
}

std::vector<TensorRef> tensor_refs(ModelParams& params) {
    return {
        {"visual.w1", params.visual.w1.data},
        {"visual.b1", params.visual.b1},
        {"visual.ln_gain", params.visual.ln_gain},
        {"visual.ln_shift", params.visual.ln_shift},
        {"visual.w2", params.visual.w2.data},
        {"visual.b2", params.visual.b2},
        {"primitives.states", params.primitives.states.data},
        {"primitives.objects", params.primitives.objects.data},
        {"projector.w", params.projector.w.data},
    };
}

std::vector<TensorRef> tensor_refs(Gradients& grads) {
    return {
        {"visual.w1", grads.w1.data},
        {"visual.b1", grads.b1},
        {"visual.ln_gain", grads.ln_gain},
        {"visual.ln_shift", grads.ln_shift},
        {"visual.w2", grads.w2.data},
        {"visual.b2", grads.b2},
        {"primitives.states", grads.states.data},
        {"primitives.objects", grads.objects.data},
        {"projector.w", grads.proj_w.data},
    };
}

double alpha_at(std::size_t epoch, const TrainConfig& config) {
    config.validate();
    const double progress = static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
    return config.alpha_max * std::min(1.0, progress);
}

Vec margin_scores(const Vec& target_scores, const FeasibilityTable& table, double alpha,
                  const CompositionSpace& space) {
    if (target_scores.size() != space.target_size() || table.size() != space.target_size()) {
        throw Error(ErrorKind::LengthMismatch, "scores, table, and target must align");
    }
    Vec adjusted = target_scores;
    for (std::size_t c = 0; c < adjusted.size(); ++c) {
        if (!space.is_seen(c)) adjusted[c] -= alpha * table.rho[c];
    }
    return adjusted;
}

double xent_loss(const Vec& adjusted_scores, std::size_t label_idx, double temperature) {
    return stable_softmax_loss(adjusted_scores, label_idx, temperature).loss;
}

BatchLossResult batch_loss(TrainState& state, std::span<const Sample> batch, const Matrix& features,
                           const CompositionSpace& space, const TrainConfig& config) {
    config.validate();
    const double alpha = alpha_at(state.epoch, config);
    const double rate = state.params.visual.dropout_rate;

    std::vector<Vec> scales;
    const std::vector<Vec>* scales_ptr = nullptr;
    if (rate > 0.0) {
        scales.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            scales.push_back(detail::draw_dropout_scale(state.params.visual.hidden_dim(), rate, state.rng));
        }
        scales_ptr = &scales;
    }

    BatchLossResult result;
    result.grads = Gradients::zeros_like(state.params);
    result.loss = compute_batch(state.params, &state.feasibility, alpha, batch, features, space,
                                config, scales_ptr, &result.grads);
    return result;
}

double batch_loss_value(const ModelParams& params, const FeasibilityTable& table, double alpha,
                        std::span<const Sample> batch, const Matrix& features,
                        const CompositionSpace& space, const TrainConfig& config) {
    return compute_batch(params, &table, alpha, batch, features, space, config, nullptr, nullptr);
}

void optimizer_step(TrainState& state, const Gradients& grads, const TrainConfig& config) {
    config.validate();
    auto params = tensor_refs(state.params);
    Gradients grads_copy = grads;  // tensor_refs needs mutable spans
    auto grad_views = tensor_refs(grads_copy);
    auto m_views = tensor_refs(state.moments.m);
    auto v_views = tensor_refs(state.moments.v);

    state.moments.step += 1;
    const double t = static_cast<double>(state.moments.step);
    const double m_correction = 1.0 / (1.0 - std::pow(kAdamBeta1, t));
    const double v_correction = 1.0 / (1.0 - std::pow(kAdamBeta2, t));

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].values;
        auto g = grad_views[k].values;
        auto m = m_views[k].values;
        auto v = v_views[k].values;
        if (p.size() != g.size()) throw Error(ErrorKind::ShapeMismatch, params[k].name);

        const bool is_primitive_table = std::string_view(params[k].name).starts_with("primitives.");
        const double decay = (!config.decay_primitives && is_primitive_table) ? 0.0 : config.weight_decay;

        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            const double m_hat = m[i] * m_correction;
            const double v_hat = v[i] * v_correction;
            const double p_old = p[i];
            p[i] = p_old - config.learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEpsilon) -
                   config.learning_rate * decay * p_old;
        }
    }
}

TrainResult train(const Dataset& dataset, const Matrix& features, const CompositionSpace& space,
                  ModelParams init_params, const TrainConfig& config) {
    config.validate();
    init_params.validate();

    ValidationReport report = validate_dataset(dataset, space, features.rows);
    if (!report.ok()) {
        const Violation& first = report.violations.front();
        throw Error(ErrorKind::ValidationFailed,
                    first.kind + " at sample " + std::to_string(first.sample_index) + " (" +
                        first.detail + ")" +
                        (report.violations.size() > 1
                             ? " and " + std::to_string(report.violations.size() - 1) + " more"
                             : ""));
    }

    std::vector<std::size_t> train_samples = dataset.indices_of(Split::Train);
    std::vector<std::size_t> val_samples = dataset.indices_of(Split::Val);

    TrainResult result;
    result.state.params = std::move(init_params);
    result.state.moments.m = Gradients::zeros_like(result.state.params);
    result.state.moments.v = Gradients::zeros_like(result.state.params);
    result.state.rng = Rng(config.seed);
    result.best_params = result.state.params;

    auto val_auc = [&](const ModelParams& params) -> double {
        std::vector<std::size_t> rows;
        std::vector<std::size_t> labels;
        rows.reserve(val_samples.size());
        for (std::size_t idx : val_samples) {
            const Sample& sample = dataset.samples[idx];
            rows.push_back(sample.feature_row);
            labels.push_back(space.target_index(PairIdx{sample.state, sample.object}));
        }
        Matrix scores = batch_scores(params, features, rows, space, ScoreSubset::Target);
        return evaluate(make_score_matrix(std::move(scores), std::move(labels), space)).auc;
    };

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        result.state.epoch = epoch;
        result.state.feasibility = feasibility_scores(result.state.params.primitives, space,
                                                      config.mixing, static_cast<std::int64_t>(epoch));

        std::vector<std::size_t> order = train_samples;
        Rng shuffle_rng(mix_seed(config.seed, epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<Sample> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset.samples[order[i]]);
            BatchLossResult batch_result = batch_loss(result.state, batch, features, space, config);
            optimizer_step(result.state, batch_result.grads, config);
            loss_sum += batch_result.loss * static_cast<double>(batch.size());
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.alpha = alpha_at(epoch, config);
        entry.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
        if (!val_samples.empty()) {
            entry.val_auc = val_auc(result.state.params);
            if (*entry.val_auc > result.best_val_auc) {
                result.best_val_auc = *entry.val_auc;
                result.best_epoch = epoch;
                result.best_params = result.state.params;
            }
        } else {
            result.best_epoch = epoch;
            result.best_params = result.state.params;
        }
        result.log.push_back(std::move(entry));
    }
    result.state.epoch = config.epochs;
    return result;
}

double grad_check(const ModelParams& params, const FeasibilityTable& table,
                  std::span<const Sample> batch, const Matrix& features,
                  const CompositionSpace& space, const TrainConfig& config, double epsilon) {
    config.validate();
    if (params.visual.dropout_rate != 0.0) {
        throw Error(ErrorKind::InvalidConfig, "grad_check requires dropout rate 0");
    }
    const double alpha = config.alpha_max;

    ModelParams working = params;
    Gradients analytic = Gradients::zeros_like(working);
    {
        TrainState state;
        state.params = params;
        state.feasibility = table;
        state.epoch = config.warmup_epochs;  // alpha_at == alpha_max
        state.rng = Rng(0);
        BatchLossResult result = batch_loss(state, batch, features, space, config);
        analytic = std::move(result.grads);
    }

    auto param_views = tensor_refs(working);
    Gradients analytic_copy = analytic;
    auto grad_views = tensor_refs(analytic_copy);

    double max_rel = 0.0;
    for (std::size_t k = 0; k < param_views.size(); ++k) {
        auto values = param_views[k].values;
        auto grads = grad_views[k].values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + epsilon;
            const double loss_plus =
                batch_loss_value(working, table, alpha, batch, features, space, config);
            values[i] = original - epsilon;
            const double loss_minus =
                batch_loss_value(working, table, alpha, batch, features, space, config);
            values[i] = original;
            const double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
            const double denom = std::max({std::abs(grads[i]), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(grads[i] - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace czsl
