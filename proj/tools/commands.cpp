#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hybridpose/hybridpose.hpp"

namespace hybridpose::cli {
namespace {

namespace fs = std::filesystem;

std::vector<std::size_t> parse_size_list(std::string_view text, const char* flag) {
    std::vector<std::size_t> out;
    if (trim(text).empty()) return out;
    for (auto field : split_fields(text)) {
        const auto v = parse_double(trim(field));
        if (!v || *v < 1 || *v != std::floor(*v)) {
            throw ConfigError(std::string(flag) + ": '" + std::string(trim(field)) + "' is not a positive integer");
        }
        out.push_back(static_cast<std::size_t>(*v));
    }
    return out;
}

std::string describe_weights(const LossWeights& w) {
    std::string out = "alpha=" + format_double(w.alpha) + " beta=(";
    for (std::size_t i = 0; i < w.betas.size(); ++i) out += (i ? "," : "") + format_double(w.betas[i]);
    return out + ")";
}

DecodeConvention parse_decode(const std::string& s) {
    return s == "left-edge" ? DecodeConvention::LeftEdge : DecodeConvention::BinCenter;
}

RegressionScale parse_scale(const std::string& s) {
    return s == "index" ? RegressionScale::BinIndex : RegressionScale::Degrees;
}

void check_half_range(double v, const char* flag) {
    if (!std::isfinite(v) || v < 0.0 || v > kAngleLimit) {
        throw ConfigError(std::string(flag) + ": half-width " + format_double(v) + " must be within [0, 99]");
    }
}

std::vector<Sample> load_samples(const std::string& path) {
    try {
        return parse_samples_csv(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.line(), e.column());
    }
}

template <typename F>
auto with_path(const std::string& path, F&& parse) {
    try {
        return parse(read_file(path));
    } catch (const ParseError& e) {
        throw Error(path + ": " + e.what());
    }
}

// Shared training flags.
struct TrainFlags {
    std::size_t epochs = 30;
    double lr = kDefaultLearningRate;
    std::size_t batch_size = 64;
    std::string hidden = "64,64";
    std::string decode = "center";
    std::string mse_scale = "degrees";

    void add_to(CLI::App* app) {
        app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--batch-size", batch_size, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--hidden", hidden, "Comma-separated hidden layer sizes")->capture_default_str();
        app->add_option("--decode", decode, "Expectation anchors: center or left-edge")
            ->capture_default_str()
            ->check(CLI::IsMember({"center", "left-edge"}));
        app->add_option("--mse-scale", mse_scale, "Regression term scale: degrees or index")
            ->capture_default_str()
            ->check(CLI::IsMember({"degrees", "index"}));
    }

    TrainOptions options() const {
        if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("--lr must be a nonnegative number");
        TrainOptions o;
        o.epochs = epochs;
        o.batch_size = batch_size;
        o.adam.learning_rate = lr;
        o.loss.decode = parse_decode(decode);
        o.loss.scale = parse_scale(mse_scale);
        return o;
    }

    std::vector<std::size_t> hidden_dims() const { return parse_size_list(hidden, "--hidden"); }
};

// ---------------------------------------------------------------- synth

struct SynthCommand {
    std::size_t n = 2500;
    std::uint64_t seed = 7;
    double yaw = 75, pitch = 60, roll = 50;
    double noise = 0.01;
    double val_fraction = 0.2;
    std::string train_out, val_out;

    void add_to(CLI::App* app) {
        app->add_option("--n", n, "Number of samples")->capture_default_str();
        app->add_option("--seed", seed, "Random seed")->capture_default_str();
        app->add_option("--yaw-range", yaw, "Yaw half-width in degrees")->capture_default_str();
        app->add_option("--pitch-range", pitch, "Pitch half-width in degrees")->capture_default_str();
        app->add_option("--roll-range", roll, "Roll half-width in degrees")->capture_default_str();
        app->add_option("--noise", noise, "Feature noise standard deviation")->capture_default_str();
        app->add_option("--val-fraction", val_fraction, "Fraction of samples held out")->capture_default_str();
        app->add_option("--train-out", train_out, "Training split output")->required();
        app->add_option("--val-out", val_out, "Validation split output")->required();
    }

    int run(std::ostream& out, std::ostream&) const {
        check_half_range(yaw, "--yaw-range");
        check_half_range(pitch, "--pitch-range");
        check_half_range(roll, "--roll-range");
        if (n < 2) throw UsageError("--n must be at least 2");
        SynthConfig cfg;
        cfg.n_samples = n;
        cfg.seed = seed;
        cfg.yaw = AngleRange::symmetric(yaw);
        cfg.pitch = AngleRange::symmetric(pitch);
        cfg.roll = AngleRange::symmetric(roll);
        cfg.noise_sigma = noise;
        cfg.val_fraction = val_fraction;
        const DatasetSplit split = make_dataset(cfg);
        const std::string train_text = format_samples_csv(split.train);
        const std::string val_text = format_samples_csv(split.val);
        write_file_atomic(train_out, train_text);
        write_file_atomic(val_out, val_text);
        out << "wrote " << split.train.size() << " training samples to " << train_out << '\n'
            << "wrote " << split.val.size() << " validation samples to " << val_out << '\n';
        return 0;
    }
};

// ---------------------------------------------------------------- train

nlohmann::json mae_json(const MaeReport& r) {
    return {{"yaw", r.yaw_mae}, {"pitch", r.pitch_mae}, {"roll", r.roll_mae}, {"mean", r.mean_mae}, {"n", r.n_samples}};
}

struct TrainCommand {
    std::string train_path, val_path, checkpoint, report_path;
    std::uint64_t seed = 1;
    double alpha = 2.0;
    std::string betas = "7,5,3,1,1";
    TrainFlags flags;

    void add_to(CLI::App* app) {
        app->add_option("--train", train_path, "Training samples (synth export format)")->required();
        app->add_option("--val", val_path, "Validation samples (synth export format)")->required();
        app->add_option("--checkpoint", checkpoint, "Checkpoint output path")->required();
        app->add_option("--report", report_path, "JSON training report output path");
        app->add_option("--seed", seed, "Initialization and shuffle seed")->capture_default_str();
        app->add_option("--alpha", alpha, "Regression loss weight")->capture_default_str();
        app->add_option("--betas", betas, "Comma-separated classification weights, finest level first")
            ->capture_default_str();
        flags.add_to(app);
    }

    int run(std::ostream& out, std::ostream& err) const {
        LossWeights w{alpha, {}};
        for (auto field : split_fields(betas)) {
            const auto v = parse_double(trim(field));
            if (!v) throw ConfigError("--betas: '" + std::string(trim(field)) + "' is not a number");
            w.betas.push_back(*v);
        }
        const TrainOptions opts = flags.options();

        auto train_all = load_samples(train_path);
        auto val_all = load_samples(val_path);
        auto train_kept = filter_range(train_all);
        auto val_kept = filter_range(val_all);
        DatasetSplit data{std::move(train_kept.kept), std::move(val_kept.kept)};
        if (data.train.empty() || data.val.empty()) throw UsageError("no samples left after range filtering");

        NetConfig cfg;
        cfg.input_dim = data.train.front().features.size();
        cfg.hidden_dims = flags.hidden_dims();
        cfg.seed = seed;
        const TrainResult result = train(cfg, data, w, opts);
        for (const auto& e : result.report.epochs) {
            if (!std::isfinite(e.train_loss.total)) throw TrainingError("non-finite loss in epoch " + std::to_string(e.epoch));
        }

        const MaeReport final_val = result.report.epochs.empty() ? evaluate(result.net, data.val, opts.loss.decode)
                                                                 : result.report.epochs.back().val;
        nlohmann::json report;
        report["weights"] = {{"alpha", w.alpha}, {"betas", w.betas}};
        report["config"] = {{"epochs", opts.epochs},
                            {"learning_rate", opts.adam.learning_rate},
                            {"batch_size", opts.batch_size},
                            {"seed", seed},
                            {"input_dim", cfg.input_dim},
                            {"hidden_dims", cfg.hidden_dims},
                            {"hierarchy", cfg.hierarchy.bin_counts()},
                            {"decode", flags.decode},
                            {"mse_scale", flags.mse_scale},
                            {"n_train", data.train.size()},
                            {"n_val", data.val.size()},
                            {"discarded_train", train_kept.discarded},
                            {"discarded_val", val_kept.discarded}};
        report["epochs"] = nlohmann::json::array();
        for (const auto& e : result.report.epochs) {
            report["epochs"].push_back({{"epoch", e.epoch},
                                        {"loss", e.train_loss.total},
                                        {"regression", e.train_loss.regression},
                                        {"ce", e.train_loss.ce},
                                        {"val", mae_json(e.val)}});
        }
        report["final_val"] = mae_json(final_val);

        std::ostringstream ckpt;
        save_checkpoint(result.net, ckpt);
        write_file_atomic(checkpoint, ckpt.str());
        if (!report_path.empty()) write_file_atomic(report_path, report.dump(2) + "\n");

        out << "weights: " << describe_weights(w) << '\n';
        out << "samples: " << data.train.size() << " train / " << data.val.size() << " val (discarded "
            << train_kept.discarded + val_kept.discarded << " outside +-99)\n";
        for (const auto& e : result.report.epochs) {
            out << "epoch " << e.epoch << "  loss " << format_fixed(e.train_loss.total, 4) << "  val_mae "
                << format_fixed(e.val.mean_mae, 4) << '\n';
        }
        out << format_mae_table({{"val", final_val}});
        err << "training took " << format_fixed(result.report.wall_seconds, 2) << " s\n";
        return 0;
    }
};

// ---------------------------------------------------------------- eval

struct EvalCommand {
    std::string checkpoint, data_path, predictions_path, pred_path, truth_path;
    std::string out_path, predictions_out;
    std::string label = "model";
    int precision = 3;
    std::string decode = "center";

    void add_to(CLI::App* app) {
        auto* ck = app->add_option("--checkpoint", checkpoint, "Trained checkpoint");
        auto* data = app->add_option("--data", data_path, "Samples to evaluate (synth export format)");
        ck->needs(data);
        data->needs(ck);
        auto* preds = app->add_option("--predictions", predictions_path, "Predictions CSV with ground truth");
        auto* pred = app->add_option("--pred", pred_path, "Predicted angles (annotation CSV)");
        auto* truth = app->add_option("--truth", truth_path, "Ground-truth angles (annotation CSV)");
        pred->needs(truth);
        truth->needs(pred);
        preds->excludes(ck)->excludes(pred);
        ck->excludes(pred);
        app->add_option("--out", out_path, "Machine-readable MAE CSV output");
        app->add_option("--predictions-out", predictions_out, "Write per-sample predictions CSV (checkpoint mode)");
        app->add_option("--label", label, "Row label in the printed table")->capture_default_str();
        app->add_option("--precision", precision, "Decimals in the printed table")
            ->capture_default_str()
            ->check(CLI::Range(0, 12));
        app->add_option("--decode", decode, "Expectation anchors: center or left-edge")
            ->capture_default_str()
            ->check(CLI::IsMember({"center", "left-edge"}));
    }

    int run(std::ostream& out, std::ostream&) const {
        std::vector<PredictionRecord> records;
        if (!checkpoint.empty()) {
            const TinyNet net = load_checkpoint(checkpoint);
            const auto samples = load_samples(data_path);
            const auto preds = predict_batch(net, samples, parse_decode(decode));
            for (std::size_t i = 0; i < samples.size(); ++i) records.push_back({std::to_string(i), preds[i], samples[i].truth});
        } else if (!predictions_path.empty()) {
            records = with_path(predictions_path, [](const std::string& t) { return parse_predictions_csv(t); });
        } else if (!pred_path.empty()) {
            const auto preds = with_path(pred_path, [](const std::string& t) { return parse_annotation_csv(t); });
            const auto truths = with_path(truth_path, [](const std::string& t) { return parse_annotation_csv(t); });
            records = join_by_id(preds, truths);
        } else {
            throw UsageError("eval needs --checkpoint/--data, --predictions, or --pred/--truth");
        }
        const MaeReport report = mae(records);
        if (!predictions_out.empty()) write_file_atomic(predictions_out, format_predictions_csv(records));
        if (!out_path.empty()) write_file_atomic(out_path, format_mae_csv(report));
        out << format_mae_table({{label, report}}, precision);
        return 0;
    }
};

// ---------------------------------------------------------------- ablate

struct AblateCommand {
    std::vector<std::string> rows;
    std::string grid_path, train_path, val_path, out_path;
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
    std::size_t n = 2500;
    double noise = 0.01;
    std::size_t jobs = 1;
    TrainFlags flags;

    void add_to(CLI::App* app) {
        app->add_option("--row", rows, "Weight row 'alpha;b1,...,b5' (repeatable)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        app->add_option("--grid", grid_path, "File of weight rows, one per line");
        auto* tr = app->add_option("--train", train_path, "Fixed training samples; default synthesizes per seed");
        auto* va = app->add_option("--val", val_path, "Fixed validation samples");
        tr->needs(va);
        va->needs(tr);
        app->add_option("--seeds", seeds, "Seeds per row")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--base-seed", base_seed, "First seed")->capture_default_str();
        app->add_option("--n", n, "Synthetic samples per seed")->capture_default_str();
        app->add_option("--noise", noise, "Synthetic feature noise")->capture_default_str();
        app->add_option("--jobs", jobs, "Parallel training runs")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--out", out_path, "CSV report output");
        flags.add_to(app);
    }

    std::vector<LossWeights> grid() const {
        std::vector<LossWeights> out;
        if (!grid_path.empty()) {
            const std::string text = read_file(grid_path);
            const auto lines = split_lines(text);
            for (std::size_t i = 0; i < lines.size(); ++i) {
                std::string_view line = lines[i];
                if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
                if (trim(line).empty()) continue;
                try {
                    out.push_back(parse_weight_row(trim(line)));
                } catch (const Error& e) {
                    throw Error(grid_path + ": line " + std::to_string(i + 1) + ": " + e.what());
                }
            }
            if (out.empty()) throw UsageError(grid_path + ": ablation grid is empty");
        }
        for (const auto& r : rows) out.push_back(parse_weight_row(r));
        if (out.empty() && grid_path.empty()) out = default_ablation_grid();
        return out;
    }

    int run(std::ostream& out, std::ostream& err) const {
        AblationSettings settings;
        settings.seeds = seeds;
        settings.base_seed = base_seed;
        settings.hidden_dims = flags.hidden_dims();
        settings.train = flags.options();
        settings.synth.n_samples = n;
        settings.synth.noise_sigma = noise;
        settings.jobs = jobs;

        std::optional<DatasetSplit> data;
        if (!train_path.empty()) {
            DatasetSplit split{filter_range(load_samples(train_path)).kept, filter_range(load_samples(val_path)).kept};
            if (split.train.empty() || split.val.empty()) throw UsageError("no samples left after range filtering");
            data = std::move(split);
        }
        const auto g = grid();
        err << "ablation: " << g.size() << " rows x " << seeds << " seeds\n";
        const AblationReport report = run_ablation(g, settings, data);
        if (!out_path.empty()) write_file_atomic(out_path, format_ablation_csv(report));
        out << "decode: " << flags.decode << ", mse scale: " << flags.mse_scale << ", median of " << seeds
            << " seeds\n";
        out << format_ablation_table(report);
        out << "best: " << describe_weights(report.rows[report.best_index].weights) << '\n';
        return 0;
    }
};

// ---------------------------------------------------------------- parse-biwi

struct ParseBiwiCommand {
    std::string dir, out_path;
    double tolerance = kRotationTolerance;

    void add_to(CLI::App* app) {
        app->add_option("--dir", dir, "Directory of BIWI pose text files (*.txt)")->required();
        app->add_option("--out", out_path, "Annotation CSV output")->required();
        app->add_option("--tolerance", tolerance, "Orthonormality tolerance")->capture_default_str();
    }

    int run(std::ostream& out, std::ostream& err) const {
        std::error_code ec;
        if (!fs::is_directory(dir, ec)) throw UsageError("cannot read directory " + dir);
        std::vector<fs::path> files;
        for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
            if (it->is_regular_file() && it->path().extension() == ".txt") files.push_back(it->path());
        }
        if (ec) throw UsageError("cannot read directory " + dir + ": " + ec.message());
        std::sort(files.begin(), files.end());

        std::vector<AnnotationRecord> records;
        std::size_t rejected = 0;
        for (const auto& path : files) {
            try {
                const BiwiPose pose = parse_biwi_pose(read_file(path.string()), tolerance);
                records.push_back({path.stem().string(), rotation_to_euler(pose.rotation, tolerance),
                                   AnnotationSource::Biwi});
            } catch (const Error& e) {
                ++rejected;
                err << "rejected " << path.filename().string() << ": " << e.what() << '\n';
            }
        }
        write_file_atomic(out_path, format_annotation_csv(records));
        out << "parsed " << records.size() << " files, rejected " << rejected << '\n';
        return 0;
    }
};

// Moves "--config FILE" out of args and splices its entries in right after
// the subcommand, so explicit flags (which come later) take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::optional<std::string> config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config requires a file argument");
            config = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!config || args.empty()) return args;
    std::vector<std::string> injected;
    try {
        for (auto& [key, value] : parse_config_text(read_file(*config))) {
            injected.push_back("--" + key);
            injected.push_back(value);
        }
    } catch (const ParseError& e) {
        throw Error(*config + ": " + e.what());
    }
    args.insert(args.begin() + 1, injected.begin(), injected.end());
    return args;
}

} // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", i + 1);
        std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ParseError("empty key", i + 1);
        for (char& c : key) {
            if (c == '_') c = '-';
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-')) {
                throw ParseError("invalid character in key '" + key + "'", i + 1);
            }
        }
        out.emplace_back(std::move(key), value);
    }
    return out;
}

LossWeights parse_weight_row(std::string_view text) {
    const auto semi = text.find(';');
    if (semi == std::string_view::npos) throw ConfigError("weight row '" + std::string(text) + "' must look like 'alpha;b1,...'");
    LossWeights w{0.0, {}};
    const auto alpha = parse_double(trim(text.substr(0, semi)));
    if (!alpha) throw ConfigError("weight row '" + std::string(text) + "': alpha is not a number");
    w.alpha = *alpha;
    for (auto field : split_fields(text.substr(semi + 1))) {
        const auto v = parse_double(trim(field));
        if (!v) throw ConfigError("weight row '" + std::string(text) + "': '" + std::string(trim(field)) + "' is not a number");
        w.betas.push_back(*v);
    }
    validate_weights(w, w.betas.size());
    if (!w.any_positive()) throw ConfigError("weight row '" + std::string(text) + "' has no positive weight");
    return w;
}

void write_file_atomic(const std::string& path, std::string_view contents) {
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open " + tmp.string() + " for writing");
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw Error("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot move output into place at " + path);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Coarse-to-fine bin classification with expectation regression for head pose"};
    app.name("hybridpose");
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    SynthCommand synth;
    TrainCommand train_cmd;
    EvalCommand eval;
    AblateCommand ablate;
    ParseBiwiCommand biwi;
    synth.add_to(app.add_subcommand("synth", "Generate the synthetic pose dataset"));
    train_cmd.add_to(app.add_subcommand("train", "Train a network and write a checkpoint"));
    eval.add_to(app.add_subcommand("eval", "Print per-angle MAE"));
    ablate.add_to(app.add_subcommand("ablate", "Loss-weight ablation over several seeds"));
    biwi.add_to(app.add_subcommand("parse-biwi", "Convert BIWI pose files to annotation CSV"));
    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--config", "Key = value file with defaults for this command");
    }

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::reverse(args.begin(), args.end()); // CLI11 consumes a reversed vector
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (app.got_subcommand("synth")) return synth.run(out, err);
        if (app.got_subcommand("train")) return train_cmd.run(out, err);
        if (app.got_subcommand("eval")) return eval.run(out, err);
        if (app.got_subcommand("ablate")) return ablate.run(out, err);
        if (app.got_subcommand("parse-biwi")) return biwi.run(out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace hybridpose::cli
