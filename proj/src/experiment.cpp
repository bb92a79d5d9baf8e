#include "czsl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace czsl {

namespace {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

double unseen_rho_median(const FeasibilityTable& table, const CompositionSpace& space) {
    std::vector<double> values;
    for (std::size_t c = 0; c < table.size(); ++c) {
        if (!space.is_seen(c)) values.push_back(table.rho[c]);
    }
    if (values.empty()) throw Error(ErrorKind::DegenerateSpace, "no unseen compositions");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(values.size() - 1)));
    return values[rank];
}

std::vector<char> keep_file_mask(const std::filesystem::path& path, const CompositionSpace& space) {
    std::vector<char> mask = space.seen_flags();
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": expected state<TAB>object");
        }
        try {
            mask[space.target_index(line.substr(0, tab), line.substr(tab + 1))] = 1;
        } catch (const Error& e) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return mask;
}

ScoreMatrix split_scores(const ModelParams& params, const Matrix& features, const Dataset& dataset,
                         const CompositionSpace& space, Split split) {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> labels;
    for (std::size_t idx : dataset.indices_of(split)) {
        const Sample& sample = dataset.samples[idx];
        rows.push_back(sample.feature_row);
        labels.push_back(space.target_index(PairIdx{sample.state, sample.object}));
    }
    Matrix scores = batch_scores(params, features, rows, space, ScoreSubset::Target);
    return make_score_matrix(std::move(scores), std::move(labels), space);
}

void append_report_block(std::string& out, const char* name, const EvalReport& report) {
    auto line = [&](const char* key, double value) {
        out += std::string(name) + "." + key + " " + format_double(value) + "\n";
    };
    line("best_seen", report.best_seen);
    line("best_unseen", report.best_unseen);
    line("best_hm", report.best_hm);
    line("auc", report.auc);
    line("hm_bias", report.hm_bias);
    line("state_acc", report.state_acc);
    line("obj_acc", report.obj_acc);
    out += std::string(name) + ".curve bias seen_acc unseen_acc\n";
    for (const CurvePoint& p : report.curve) {
        out += "  " + format_double(p.bias) + " " + format_double(p.seen_acc) + " " +
               format_double(p.unseen_acc) + "\n";
    }
}

}  // namespace

const char* to_string(MaskPolicy policy) {
    switch (policy) {
        case MaskPolicy::None: return "none";
        case MaskPolicy::Tuned: return "tuned";
        case MaskPolicy::Fixed: return "fixed";
        case MaskPolicy::Median: return "median";
        case MaskPolicy::InvMedian: return "inv-median";
        case MaskPolicy::KeepFile: return "keep-file";
    }
    return "none";
}

MaskPolicy mask_policy_from_string(const std::string& text) {
    if (text == "none") return MaskPolicy::None;
    if (text == "tuned") return MaskPolicy::Tuned;
    if (text == "fixed") return MaskPolicy::Fixed;
    if (text == "median") return MaskPolicy::Median;
    if (text == "inv-median") return MaskPolicy::InvMedian;
    if (text == "keep-file") return MaskPolicy::KeepFile;
    throw Error(ErrorKind::ParseError, "unknown mask policy '" + text + "'");
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }

    const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
    auto resolve = [&](const std::string& p) {
        std::filesystem::path candidate(p);
        return candidate.is_absolute() ? candidate : base / candidate;
    };

    ExperimentConfig config;
    try {
        config.manifest_path = resolve(doc.at("manifest").get<std::string>());
        config.features_path = resolve(doc.at("features").get<std::string>());
        if (doc.contains("embeddings")) {
            config.embeddings_path = resolve(doc.at("embeddings").get<std::string>());
        }
        if (doc.contains("checkpoint")) {
            config.checkpoint_path = resolve(doc.at("checkpoint").get<std::string>());
        }

        std::filesystem::path out(doc.at("out").get<std::string>());
        if (const char* root = std::getenv("CZSL_OUT_ROOT"); root && !out.is_absolute()) {
            out = std::filesystem::path(root) / out;
        } else if (!out.is_absolute()) {
            out = base / out;
        }
        config.out_dir = out;

        if (doc.contains("train")) {
            const json& t = doc.at("train");
            if (t.contains("mode")) config.train.mode = train_mode_from_string(t.at("mode"));
            if (t.contains("temperature")) config.train.temperature = t.at("temperature");
            if (t.contains("alpha_max")) config.train.alpha_max = t.at("alpha_max");
            if (t.contains("warmup_epochs")) config.train.warmup_epochs = t.at("warmup_epochs");
            if (t.contains("epochs")) config.train.epochs = t.at("epochs");
            if (t.contains("batch_size")) config.train.batch_size = t.at("batch_size");
            if (t.contains("learning_rate")) config.train.learning_rate = t.at("learning_rate");
            if (t.contains("weight_decay")) config.train.weight_decay = t.at("weight_decay");
            if (t.contains("mixing")) config.train.mixing = mixing_from_string(t.at("mixing"));
            if (t.contains("seed")) config.train.seed = t.at("seed");
            if (t.contains("decay_primitives")) config.train.decay_primitives = t.at("decay_primitives");
            if (t.contains("dropout")) config.dropout_rate = t.at("dropout");
            if (t.contains("hidden_dim")) config.hidden_dim = t.at("hidden_dim");
        }
        if (doc.contains("mask")) {
            const json& m = doc.at("mask");
            if (m.contains("policy")) config.mask_policy = mask_policy_from_string(m.at("policy"));
            if (m.contains("tau")) config.fixed_tau = m.at("tau");
            if (m.contains("keep_file")) config.keep_file = resolve(m.at("keep_file").get<std::string>());
        }
        if (doc.contains("eval")) {
            const json& e = doc.at("eval");
            if (e.contains("open_world")) config.eval_open = e.at("open_world");
            if (e.contains("closed_world")) config.eval_closed = e.at("closed_world");
            if (e.contains("primitive_bias")) {
                const std::string pb = e.at("primitive_bias");
                if (pb == "hm") {
                    config.primitive_bias = PrimitiveBias::HmBias;
                } else if (pb == "zero") {
                    config.primitive_bias = PrimitiveBias::Zero;
                } else {
                    throw Error(ErrorKind::ParseError, "unknown primitive_bias '" + pb + "'");
                }
            }
        }
        if (doc.contains("missing_embedding")) {
            const std::string policy = doc.at("missing_embedding");
            if (policy == "error") {
                config.missing_embedding = MissingPolicy::Error;
            } else if (policy == "random") {
                config.missing_embedding = MissingPolicy::RandomInit;
            } else {
                throw Error(ErrorKind::ParseError, "unknown missing_embedding '" + policy + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    return config;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.train.validate();
    Manifest manifest = read_manifest(config.manifest_path);
    Matrix features = read_feature_store(config.features_path);
    auto [open_space, dataset] = build_from_manifest(manifest, SpaceMode::OpenWorld, features.rows);

    Checkpoint checkpoint;
    std::vector<EpochLog> log;
    std::size_t selected_epoch = 0;
    if (config.checkpoint_path) {
        checkpoint = read_checkpoint(*config.checkpoint_path);
        selected_epoch = checkpoint.epoch;
    } else {
        if (config.embeddings_path.empty()) {
            throw Error(ErrorKind::InvalidConfig, "training requires an embeddings path");
        }
        PrimitiveEmbeddingTable table = load_embeddings(config.embeddings_path, open_space.vocab(),
                                                        config.missing_embedding, config.train.seed);
        Rng init_rng(mix_seed(config.train.seed, 0x696e6974));
        ModelParams init = init_model_params(features.cols, std::move(table), config.train.temperature,
                                             config.dropout_rate, config.hidden_dim, init_rng);
        // A closed-world model selects its epoch on the closed validation
        // view when the manifest provides one; open-world modes select on
        // the open view they are trained against.
        TrainResult result;
        if (config.train.mode == TrainMode::ClosedWorld && !manifest.target.empty()) {
            auto [closed_space, closed_dataset] =
                build_from_manifest(manifest, SpaceMode::ClosedWorld, features.rows);
            result = train(closed_dataset, features, closed_space, std::move(init), config.train);
        } else {
            result = train(dataset, features, open_space, std::move(init), config.train);
        }
        log = std::move(result.log);
        selected_epoch = result.best_epoch;
        checkpoint.params = std::move(result.best_params);
        checkpoint.moments = std::move(result.state.moments);
        checkpoint.epoch = selected_epoch;
        checkpoint.rng_state = result.state.rng.serialize();
    }
    const ModelParams& model = checkpoint.params;

    FeasibilityTable table = feasibility_scores(model.primitives, open_space, config.train.mixing,
                                                static_cast<std::int64_t>(selected_epoch));

    ExperimentResult result;
    result.selected_epoch = selected_epoch;

    std::optional<std::vector<char>> mask;
    switch (config.mask_policy) {
        case MaskPolicy::None:
            break;
        case MaskPolicy::Tuned: {
            ScoreMatrix val = split_scores(model, features, dataset, open_space, Split::Val);
            if (val.n_samples() == 0) {
                throw Error(ErrorKind::InvalidConfig, "tuned masking needs a val split");
            }
            result.tau = tune_threshold(table, val, open_space);
            mask = hard_mask(table, open_space, MaskConfig{result.tau, true});
            break;
        }
        case MaskPolicy::Fixed:
            result.tau = config.fixed_tau;
            mask = hard_mask(table, open_space, MaskConfig{result.tau, true});
            break;
        case MaskPolicy::Median:
            result.tau = unseen_rho_median(table, open_space);
            mask = hard_mask(table, open_space, MaskConfig{result.tau, true});
            break;
        case MaskPolicy::InvMedian: {
            result.tau = unseen_rho_median(table, open_space);
            std::vector<char> inv(open_space.target_size(), 0);
            for (std::size_t c = 0; c < inv.size(); ++c) {
                inv[c] = open_space.is_seen(c) || table.rho[c] < result.tau;
            }
            mask = std::move(inv);
            break;
        }
        case MaskPolicy::KeepFile:
            if (config.keep_file.empty()) {
                throw Error(ErrorKind::InvalidConfig, "keep-file masking needs a file path");
            }
            mask = keep_file_mask(config.keep_file, open_space);
            break;
    }
    if (mask) {
        result.masked_count = static_cast<std::size_t>(
            std::count(mask->begin(), mask->end(), char(0)));
    }

    if (config.eval_open) {
        ScoreMatrix test = split_scores(model, features, dataset, open_space, Split::Test);
        result.open_report = evaluate(test, mask ? &*mask : nullptr, config.primitive_bias);
    }
    if (config.eval_closed) {
        auto [closed_space, closed_dataset] =
            build_from_manifest(manifest, SpaceMode::ClosedWorld, features.rows);
        ScoreMatrix test = split_scores(model, features, closed_dataset, closed_space, Split::Test);
        result.closed_report = evaluate(test, nullptr, config.primitive_bias);
    }

    std::filesystem::create_directories(config.out_dir);

    std::string report;
    report += "czsl experiment report\n";
    report += "train_mode " + std::string(to_string(config.train.mode)) + "\n";
    report += "mixing " + std::string(to_string(config.train.mixing)) + "\n";
    report += "seed " + std::to_string(config.train.seed) + "\n";
    report += "selected_epoch " + std::to_string(selected_epoch) + "\n";
    report += "target_size_open " + std::to_string(open_space.target_size()) + "\n";
    report += "seen_size " + std::to_string(open_space.seen_size()) + "\n";
    report += "mask_policy " + std::string(to_string(config.mask_policy)) + "\n";
    if (mask) {
        report += "tau " + format_double(result.tau) + "\n";
        report += "masked_compositions " + std::to_string(result.masked_count) + "\n";
    }
    if (result.open_report) append_report_block(report, "open", *result.open_report);
    if (result.closed_report) append_report_block(report, "closed", *result.closed_report);

    result.report_path = config.out_dir / "report.txt";
    write_text_file(result.report_path, report);

    result.feasibility_path = config.out_dir / "feasibility.txt";
    write_text_file(result.feasibility_path, feasibility_report(table, open_space));

    std::string train_log = "epoch alpha train_loss val_auc\n";
    for (const EpochLog& entry : log) {
        train_log += std::to_string(entry.epoch) + " " + format_double(entry.alpha) + " " +
                     format_double(entry.train_loss) + " " +
                     (entry.val_auc ? format_double(*entry.val_auc) : std::string("-")) + "\n";
    }
    result.train_log_path = config.out_dir / "train_log.txt";
    write_text_file(result.train_log_path, train_log);

    result.checkpoint_path = config.out_dir / "checkpoint.czsk";
    write_checkpoint(checkpoint, result.checkpoint_path);

    return result;
}

ExperimentResult run_experiment(const std::filesystem::path& config_path) {
    try {
        return run_experiment(read_experiment_config(config_path));
    } catch (const Error& e) {
        throw Error(e.kind(), config_path.string() + ": " + e.what());
    }
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x67636869));

    const std::size_t n_states = 2 + rng.uniform_index(3);   // 2..4
    const std::size_t n_objects = 2 + rng.uniform_index(4);  // 2..5, product <= 20
    const std::size_t d = 2 + rng.uniform_index(5);          // 2..6
    const std::size_t feature_dim = 3 + rng.uniform_index(6);
    const std::size_t hidden = 2 + rng.uniform_index(5);

    GradCheckInstance instance;
    std::vector<std::string> state_names, object_names;
    for (std::size_t s = 0; s < n_states; ++s) state_names.push_back("s" + std::to_string(s));
    for (std::size_t o = 0; o < n_objects; ++o) object_names.push_back("o" + std::to_string(o));
    instance.vocab = make_vocabulary(state_names, object_names);

    std::vector<NamePair> seen;
    for (std::size_t s = 0; s < n_states; ++s) {
        seen.emplace_back(state_names[s], object_names[rng.uniform_index(n_objects)]);
    }
    for (std::size_t o = 0; o < n_objects; ++o) {
        seen.emplace_back(state_names[rng.uniform_index(n_states)], object_names[o]);
    }
    for (int extra = 0; extra < 3; ++extra) {
        seen.emplace_back(state_names[rng.uniform_index(n_states)],
                          object_names[rng.uniform_index(n_objects)]);
    }
    instance.space = build_composition_space(instance.vocab, seen, std::nullopt, SpaceMode::OpenWorld);

    PrimitiveEmbeddingTable primitives;
    primitives.states = Matrix(n_states, d);
    primitives.objects = Matrix(n_objects, d);
    for (double& v : primitives.states.data) v = 0.7 * rng.normal();
    for (double& v : primitives.objects.data) v = 0.7 * rng.normal();

    const double temperature = 0.5 + rng.uniform();
    instance.params = init_model_params(feature_dim, std::move(primitives), temperature,
                                        /*dropout_rate=*/0.0, hidden, rng);
    for (double& v : instance.params.visual.b1) v = 0.1 * rng.normal();
    for (double& v : instance.params.visual.b2) v = 0.1 * rng.normal();
    for (double& v : instance.params.visual.ln_gain) v = 1.0 + 0.2 * rng.normal();
    for (double& v : instance.params.visual.ln_shift) v = 0.1 * rng.normal();

    const std::size_t batch_n = 3 + rng.uniform_index(3);
    instance.features = Matrix(batch_n, feature_dim);
    for (double& v : instance.features.data) v = rng.normal();
    for (std::size_t i = 0; i < batch_n; ++i) {
        const PairIdx pair = instance.space.seen()[rng.uniform_index(instance.space.seen_size())];
        instance.batch.push_back(Sample{i, pair.state, pair.object, Split::Train});
    }

    instance.table = feasibility_scores(instance.params.primitives, instance.space, MixingMode::Avg);
    return instance;
}

double run_gradcheck(std::uint64_t seed, TrainMode mode, double alpha) {
    GradCheckInstance instance = make_gradcheck_instance(seed);
    TrainConfig config;
    config.temperature = instance.params.temperature;
    config.alpha_max = alpha;
    config.warmup_epochs = 1;
    config.mode = mode;
    config.learning_rate = 1e-3;
    config.seed = seed;
    return grad_check(instance.params, instance.table, instance.batch, instance.features,
                      instance.space, config);
}

namespace {

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::ParseError:
        case ErrorKind::IoError:
        case ErrorKind::VersionMismatch:
            return 2;
        default:
            return 1;
    }
}

struct CliOptions {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string config;
    std::string out;
};

int run_synth(const CliOptions& global, SynthConfig config) {
    if (global.out.empty()) throw Error(ErrorKind::InvalidConfig, "synth requires --out");
    if (global.seed_given) config.seed = global.seed;
    SynthResult result = generate_synthetic(config);
    write_synthetic(result, global.out);
    std::cout << "wrote " << global.out << " (" << result.manifest.states.size() << " states, "
              << result.manifest.objects.size() << " objects, " << result.n_feasible
              << " feasible pairs, " << result.manifest.seen.size() << " seen, "
              << result.features.rows << " samples)\n";
    return 0;
}

int run_train(const CliOptions& global) {
    if (global.config.empty()) throw Error(ErrorKind::InvalidConfig, "train requires --config");
    ExperimentConfig config = read_experiment_config(global.config);
    if (global.seed_given) config.train.seed = global.seed;
    if (!global.out.empty()) config.out_dir = global.out;
    ExperimentResult result = run_experiment(config);
    std::cout << "report " << result.report_path.string() << "\n";
    if (result.open_report) {
        std::cout << "open auc " << format_double(result.open_report->auc) << ", best_hm "
                  << format_double(result.open_report->best_hm) << "\n";
    }
    if (result.closed_report) {
        std::cout << "closed auc " << format_double(result.closed_report->auc) << ", best_hm "
                  << format_double(result.closed_report->best_hm) << "\n";
    }
    return 0;
}

struct EvalCliArgs {
    std::string manifest;
    std::string scores;
    std::string checkpoint;
    std::string features;
    std::string mask_report;
    double tau = 0.0;
    bool tau_given = false;
    std::string keep_file;
    std::string split = "test";
};

int run_eval(const CliOptions& global, const EvalCliArgs& args) {
    if (args.manifest.empty()) throw Error(ErrorKind::InvalidConfig, "eval requires --manifest");
    Manifest manifest = read_manifest(args.manifest);
    auto [space, dataset] = build_from_manifest(manifest, SpaceMode::OpenWorld);

    const Split split = split_from_string(args.split);
    std::vector<std::size_t> rows;
    std::vector<std::size_t> labels;
    for (std::size_t idx : dataset.indices_of(split)) {
        const Sample& sample = dataset.samples[idx];
        rows.push_back(sample.feature_row);
        labels.push_back(space.target_index(PairIdx{sample.state, sample.object}));
    }

    ScoreMatrix scores;
    if (!args.scores.empty()) {
        Matrix external = read_feature_store(args.scores);
        if (external.rows != labels.size()) {
            throw Error(ErrorKind::LengthMismatch,
                        "score matrix has " + std::to_string(external.rows) + " rows, split '" +
                            args.split + "' has " + std::to_string(labels.size()) + " samples");
        }
        scores = make_score_matrix(std::move(external), std::move(labels), space);
    } else if (!args.checkpoint.empty() && !args.features.empty()) {
        Checkpoint checkpoint = read_checkpoint(args.checkpoint);
        Matrix features = read_feature_store(args.features);
        Matrix computed = batch_scores(checkpoint.params, features, rows, space, ScoreSubset::Target);
        scores = make_score_matrix(std::move(computed), std::move(labels), space);
    } else {
        throw Error(ErrorKind::InvalidConfig, "eval needs --scores or both --checkpoint and --features");
    }

    std::optional<std::vector<char>> mask;
    if (!args.mask_report.empty()) {
        if (!args.tau_given) throw Error(ErrorKind::InvalidConfig, "--mask requires --tau");
        FeasibilityTable table = feasibility_table_from_report(read_text_file(args.mask_report), space);
        mask = hard_mask(table, space, MaskConfig{args.tau, true});
    } else if (!args.keep_file.empty()) {
        mask = keep_file_mask(args.keep_file, space);
    }

    EvalReport report = evaluate(scores, mask ? &*mask : nullptr);

    std::string text;
    append_report_block(text, "open", report);
    if (mask) {
        text += "masked_compositions " +
                std::to_string(std::count(mask->begin(), mask->end(), char(0))) + "\n";
    }
    std::cout << text;
    if (!global.out.empty()) {
        std::filesystem::create_directories(global.out);
        write_text_file(std::filesystem::path(global.out) / "eval_report.txt", text);
    }
    return 0;
}

struct FeasibilityCliArgs {
    std::string manifest;
    std::string embeddings;
    std::string checkpoint;
    std::string mixing = "avg";
};

int run_feasibility(const CliOptions& global, const FeasibilityCliArgs& args) {
    if (args.manifest.empty()) throw Error(ErrorKind::InvalidConfig, "feasibility requires --manifest");
    Manifest manifest = read_manifest(args.manifest);
    auto [space, dataset] = build_from_manifest(manifest, SpaceMode::OpenWorld);

    PrimitiveEmbeddingTable primitives;
    if (!args.checkpoint.empty()) {
        primitives = read_checkpoint(args.checkpoint).params.primitives;
    } else if (!args.embeddings.empty()) {
        primitives = load_embeddings(args.embeddings, space.vocab(), MissingPolicy::Error);
    } else {
        throw Error(ErrorKind::InvalidConfig, "feasibility needs --embeddings or --checkpoint");
    }

    FeasibilityTable table = feasibility_scores(primitives, space, mixing_from_string(args.mixing));
    const std::string report = feasibility_report(table, space);
    if (!global.out.empty()) {
        std::filesystem::create_directories(std::filesystem::path(global.out));
        write_text_file(std::filesystem::path(global.out) / "feasibility.txt", report);
        std::cout << "wrote " << (std::filesystem::path(global.out) / "feasibility.txt").string()
                  << "\n";
    } else {
        std::cout << report;
    }
    return 0;
}

struct TuneMaskCliArgs {
    std::string manifest;
    std::string features;
    std::string checkpoint;
    std::string mixing = "avg";
};

int run_tune_mask(const CliOptions&, const TuneMaskCliArgs& args) {
    if (args.manifest.empty() || args.features.empty() || args.checkpoint.empty()) {
        throw Error(ErrorKind::InvalidConfig, "tune-mask requires --manifest, --features, --checkpoint");
    }
    Manifest manifest = read_manifest(args.manifest);
    Matrix features = read_feature_store(args.features);
    auto [space, dataset] = build_from_manifest(manifest, SpaceMode::OpenWorld, features.rows);
    Checkpoint checkpoint = read_checkpoint(args.checkpoint);

    FeasibilityTable table =
        feasibility_scores(checkpoint.params.primitives, space, mixing_from_string(args.mixing));
    ScoreMatrix val = split_scores(checkpoint.params, features, dataset, space, Split::Val);
    if (val.n_samples() == 0) throw Error(ErrorKind::InvalidConfig, "manifest has no val split");

    const double tau = tune_threshold(table, val, space);
    std::vector<char> mask = hard_mask(table, space, MaskConfig{tau, true});
    std::cout << "tau " << format_double(tau) << "\n";
    std::cout << "masked_compositions " << std::count(mask.begin(), mask.end(), char(0)) << "\n";
    return 0;
}

int run_gradcheck_cli(const CliOptions& global) {
    double max_err = 0.0;
    for (std::uint64_t offset = 0; offset < 3; ++offset) {
        for (TrainMode mode :
             {TrainMode::ClosedWorld, TrainMode::OpenWorldNoMargin, TrainMode::OpenWorldMargin}) {
            max_err = std::max(max_err, run_gradcheck(global.seed + offset, mode));
        }
    }
    std::cout << "max_relative_error " << format_double(max_err) << "\n";
    return max_err <= 1e-4 ? 0 : 1;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"open-world compositional zero-shot learning engine"};
    app.require_subcommand(1);

    CliOptions global;
    app.add_option("--seed", global.seed, "run seed");
    app.add_option("--config", global.config, "experiment config file");
    app.add_option("--out", global.out, "output directory");

    SynthConfig synth_config;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
    synth->fallthrough();
    synth->add_option("--states", synth_config.n_states, "number of states");
    synth->add_option("--objects", synth_config.n_objects, "number of objects");
    synth->add_option("--feasible-fraction", synth_config.feasible_fraction, "fraction of feasible pairs");
    synth->add_option("--seen-fraction", synth_config.seen_fraction, "fraction of feasible pairs seen");
    synth->add_option("--samples-per-seen", synth_config.samples_per_seen, "train samples per seen pair");
    synth->add_option("--samples-per-unseen", synth_config.samples_per_unseen_test,
                      "val/test samples per feasible pair");
    synth->add_option("--noise-sigma", synth_config.noise_sigma, "feature noise scale");
    synth->add_option("--dim", synth_config.d_feature, "feature dimension");

    CLI::App* train_cmd = app.add_subcommand("train", "run a training experiment from a config file");
    train_cmd->fallthrough();

    EvalCliArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate checkpoint or external scores");
    eval_cmd->fallthrough();
    eval_cmd->add_option("--manifest", eval_args.manifest, "manifest file");
    eval_cmd->add_option("--scores", eval_args.scores, "external score matrix (czsf)");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file");
    eval_cmd->add_option("--features", eval_args.features, "feature store (czsf)");
    eval_cmd->add_option("--mask", eval_args.mask_report, "feasibility report used as mask source");
    CLI::Option* tau_option = eval_cmd->add_option("--tau", eval_args.tau, "mask threshold");
    eval_cmd->add_option("--keep-file", eval_args.keep_file, "file listing kept compositions");
    eval_cmd->add_option("--split", eval_args.split, "split to evaluate (val|test)");

    FeasibilityCliArgs feas_args;
    CLI::App* feas_cmd = app.add_subcommand("feasibility", "rank compositions by feasibility");
    feas_cmd->fallthrough();
    feas_cmd->add_option("--manifest", feas_args.manifest, "manifest file");
    feas_cmd->add_option("--embeddings", feas_args.embeddings, "embedding text file");
    feas_cmd->add_option("--checkpoint", feas_args.checkpoint, "checkpoint file");
    feas_cmd->add_option("--mixing", feas_args.mixing, "avg|max|state-only|obj-only");

    TuneMaskCliArgs tune_args;
    CLI::App* tune_cmd = app.add_subcommand("tune-mask", "tune the hard-mask threshold on val");
    tune_cmd->fallthrough();
    tune_cmd->add_option("--manifest", tune_args.manifest, "manifest file");
    tune_cmd->add_option("--features", tune_args.features, "feature store");
    tune_cmd->add_option("--checkpoint", tune_args.checkpoint, "checkpoint file");
    tune_cmd->add_option("--mixing", tune_args.mixing, "avg|max|state-only|obj-only");

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    grad_cmd->fallthrough();

    std::vector<const char*> argv;
    argv.push_back("czsl");
    for (const std::string& arg : args) argv.push_back(arg.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }
    global.seed_given = app.count("--seed") > 0;
    eval_args.tau_given = tau_option->count() > 0;

    try {
        if (synth->parsed()) return run_synth(global, synth_config);
        if (train_cmd->parsed()) return run_train(global);
        if (eval_cmd->parsed()) return run_eval(global, eval_args);
        if (feas_cmd->parsed()) return run_feasibility(global, feas_args);
        if (tune_cmd->parsed()) return run_tune_mask(global, tune_args);
        if (grad_cmd->parsed()) return run_gradcheck_cli(global);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace czsl
