// manetl: prepare data, train, evaluate, run the three-variant ablation,
// print the 1x1-reduction MAC arithmetic, and run the gradient suite.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "manetl/backbone.hpp"
#include "manetl/checkpoint.hpp"
#include "manetl/config.hpp"
#include "manetl/dataset.hpp"
#include "manetl/error.hpp"
#include "manetl/gradcheck_suite.hpp"
#include "manetl/tensor.hpp"
#include "manetl/train.hpp"

namespace fs = std::filesystem;
using namespace manetl;

namespace {

enum Exit : int {
    kOk = 0,
    kUsage = 1,  // bad invocation or an unexpected internal error
    kConfig = 2,
    kData = 3,
    kNumerical = 4,
    kGradFail = 5,
};

constexpr const char* kExitHelp =
    "Exit status: 0 success, 1 usage or internal error, 2 configuration error,\n"
    "3 data error (unreadable/malformed images, manifests or checkpoints),\n"
    "4 numerical abort (non-finite loss), 5 gradient check failure.\n"
    "MANETL_THREADS caps worker threads (0 or unset = all cores).";

// Flags shared by the data/model commands. Each one, when given, becomes an
// override applied after the config file.
struct CommonFlags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> seed, out, dataset, synthetic, variant, epochs, checkpoint;
    bool no_preprocess = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "flat key = value config file");
        cmd->add_option("--set", sets, "override any config key (key=value), repeatable");
        cmd->add_option("--seed", seed, "training seed (model init, shuffling, dropout)");
        cmd->add_option("--out", out, "directory that receives timestamped run directories");
        cmd->add_option("--dataset", dataset,
                        "image tree <root>/<class>/<name>.bmp, or a directory written by `prepare`");
        cmd->add_option("--synthetic", synthetic, "synthetic dataset size K,n (used when no --dataset)");
        cmd->add_option("--variant", variant, "inception | residual | ensemble");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--checkpoint", checkpoint, "evaluate: checkpoint to load; train: resume from it");
        cmd->add_flag("--no-preprocess", no_preprocess,
                      "skip inversion, grayscale and rotation; use the channel mean instead");
    }

    std::vector<ConfigOverride> overrides() const {
        std::vector<ConfigOverride> out_list;
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            out_list.push_back({s.substr(0, eq), s.substr(eq + 1)});
        }
        auto add = [&](const char* key, const std::optional<std::string>& v) {
            if (v) out_list.push_back({key, *v});
        };
        add("seed", seed);
        add("out", out);
        add("dataset", dataset);
        add("synthetic", synthetic);
        add("variant", variant);
        add("epochs", epochs);
        add("checkpoint", checkpoint);
        if (no_preprocess) out_list.push_back({"preprocess", "false"});
        return out_list;
    }

    std::string file_text() const {
        if (config.empty()) return "";
        std::ifstream in(config);
        if (!in) throw ConfigError("cannot open config file " + config);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    RunSpec resolve(const std::string& base_text = "") const {
        try {
            return parse_config(base_text + file_text(), overrides());
        } catch (const ConfigError& e) {
            if (config.empty()) throw;
            throw ConfigError(config + ": " + e.what());
        }
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

// <out>/<YYYYmmdd-HHMMSS>-<tag>[-k]; never reuses an existing directory.
fs::path make_run_dir(const std::string& out, const std::string& tag) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    fs::create_directories(out);
    const std::string base = std::string(stamp) + "-" + tag;
    for (int k = 1;; ++k) {
        const fs::path dir = fs::path(out) / (k == 1 ? base : base + "-" + std::to_string(k));
        if (fs::create_directory(dir)) return dir;
    }
}

Dataset resolve_dataset(RunSpec& spec) {
    Dataset ds;
    if (spec.dataset.empty()) {
        ds = generate_synthetic_dataset(spec.synthetic_classes, spec.synthetic_per_class, spec.data_seed);
        ds.manifest = split_dataset(ds.manifest, spec.train_fraction, spec.data_seed);
    } else if (fs::exists(fs::path(spec.dataset) / "manifest.csv")) {
        const DatasetManifest m = read_manifest(fs::path(spec.dataset) / "manifest.csv");
        ds = load_dataset(spec.dataset, m);
        if (!m.preprocess.empty() && m.preprocess_hash != spec.preprocess.fingerprint()) {
            std::cerr << "note: dataset was prepared with '" << m.preprocess << "'; this run uses '"
                      << spec.preprocess.describe() << "'\n";
        }
    } else {
        ds = scan_dataset_directory(spec.dataset, spec.data_seed);
        ds.manifest = split_dataset(ds.manifest, spec.train_fraction, spec.data_seed);
    }
    ds.manifest.preprocess = spec.preprocess.describe();
    ds.manifest.preprocess_hash = spec.preprocess.fingerprint();
    if (!spec.is_explicit("num_classes")) {
        spec.model.num_classes = ds.manifest.classes;
    } else if (spec.model.num_classes < ds.manifest.classes) {
        throw ConfigError("num_classes: " + std::to_string(spec.model.num_classes) + " is fewer than the " +
                          std::to_string(ds.manifest.classes) + " classes in the dataset");
    }
    if (ds.manifest.count(Split::Train) == 0 || ds.manifest.count(Split::Test) == 0) {
        throw InputError("dataset split leaves the train or test side empty");
    }
    return ds;
}

void print_epoch(const std::string& tag, std::size_t total, const EpochMetrics& m) {
    std::fprintf(stderr, "%s epoch %zu/%zu  train loss %.4f acc %.4f  eval loss %.4f acc %.4f  (%.1fs)\n",
                 tag.c_str(), m.epoch, total, m.train_loss, m.train_accuracy, m.eval_loss, m.eval_accuracy,
                 m.seconds);
}

// Append-only metrics + timing files for one training run.
class MetricsFiles {
public:
    explicit MetricsFiles(const fs::path& dir)
        : metrics_(dir / "metrics.csv", std::ios::binary), timing_(dir / "timing.csv", std::ios::binary) {
        if (!metrics_ || !timing_) throw InputError("cannot create metrics files in " + dir.string());
        metrics_ << metrics_header() << "\n";
        timing_ << timing_header() << "\n";
    }
    void add(const EpochMetrics& m) {
        metrics_ << format_metrics_row(m) << "\n" << std::flush;
        timing_ << format_timing_row(m) << "\n" << std::flush;
    }

private:
    std::ofstream metrics_, timing_;
};

// ---------------------------------------------------------------------------

int cmd_prepare(const CommonFlags& flags) {
    RunSpec spec = flags.resolve();
    Dataset ds = resolve_dataset(spec);
    const fs::path dir = make_run_dir(spec.out, "prepare");
    write_dataset_images(dir, ds);
    write_manifest(dir / "manifest.csv", ds.manifest);
    write_text(dir / "config.txt", format_config(spec));
    std::printf("prepared %zu samples (%zu classes, %zu train / %zu test)\n", ds.manifest.samples.size(),
                ds.manifest.classes, ds.manifest.count(Split::Train), ds.manifest.count(Split::Test));
    std::printf("dataset fingerprint %s\n", hex64(ds.manifest.dataset_hash).c_str());
    std::printf("%s\n", dir.string().c_str());
    return kOk;
}

int cmd_train(const CommonFlags& flags) {
    RunSpec spec = flags.resolve();
    std::unique_ptr<Session> session;
    if (!spec.checkpoint.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(read_file(spec.checkpoint));
        session = std::move(loaded.session);
        // Architecture and optimizer come from the checkpoint; the epoch
        // budget and data come from this invocation.
        const std::size_t epochs = spec.train.epochs;
        spec.model = session->model_config;
        spec.train = session->train_config;
        spec.train.epochs = epochs;
        session->train_config.epochs = epochs;
        spec.explicit_keys.insert("num_classes");
    }
    Dataset ds = resolve_dataset(spec);
    if (!session) session = std::make_unique<Session>(spec.model, spec.train);
    if (ds.manifest.classes > session->model_config.num_classes) {
        throw InputError("dataset has more classes than the checkpoint's model");
    }
    const SplitData train = prepare_split(ds, Split::Train, spec.preprocess);
    const SplitData eval = prepare_split(ds, Split::Test, spec.preprocess);

    const std::string tag = "train-" + variant_name(spec.model.variant);
    const fs::path dir = make_run_dir(spec.out, tag);
    write_text(dir / "config.txt", format_config(spec));
    write_manifest(dir / "manifest.csv", ds.manifest);
    MetricsFiles files(dir);
    EpochMetrics last;
    while (session->epoch < spec.train.epochs) {
        last = session->run_epoch(train, eval);
        files.add(last);
        print_epoch(tag, spec.train.epochs, last);
    }
    write_file(dir / "checkpoint.bin", save_checkpoint(*session, spec));
    std::printf("final eval accuracy %.4f (epoch %zu)\n", last.eval_accuracy, session->epoch);
    std::printf("%s\n", dir.string().c_str());
    return kOk;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& split_name_arg) {
    RunSpec first = flags.resolve();
    if (first.checkpoint.empty()) throw ConfigError("checkpoint: evaluate needs --checkpoint");
    LoadedCheckpoint loaded = load_checkpoint(read_file(first.checkpoint));
    // Start from the run the checkpoint came from; the file and flags here
    // override it.
    RunSpec spec = flags.resolve(format_config(loaded.spec));
    spec.model = loaded.session->model_config;
    Dataset ds = resolve_dataset(spec);
    if (ds.manifest.classes > spec.model.num_classes) {
        throw InputError("dataset has more classes than the checkpoint's model");
    }
    const Split which = split_name_arg == "train" ? Split::Train : Split::Test;
    const SplitData data = prepare_split(ds, which, spec.preprocess);
    const EvalResult r = evaluate(loaded.session->model, data, spec.train.batch_size);

    const fs::path dir = make_run_dir(spec.out, "evaluate");
    write_text(dir / "config.txt", format_config(spec));
    write_manifest(dir / "manifest.csv", ds.manifest);
    char row[128];
    std::snprintf(row, sizeof row, "%s,%zu,%.9g,%.9g\n", split_name(which).c_str(), r.samples, r.loss, r.accuracy);
    write_text(dir / "eval.csv", std::string("split,samples,loss,accuracy\n") + row);
    std::printf("%s split: %zu samples, loss %.6f, accuracy %.4f\n", split_name(which).c_str(), r.samples, r.loss,
                r.accuracy);
    std::printf("%s\n", dir.string().c_str());
    return kOk;
}

int cmd_ablate(const CommonFlags& flags) {
    RunSpec spec = flags.resolve();
    Dataset ds = resolve_dataset(spec);
    const SplitData train = prepare_split(ds, Split::Train, spec.preprocess);
    const SplitData eval = prepare_split(ds, Split::Test, spec.preprocess);
    const fs::path dir = make_run_dir(spec.out, "ablate");
    write_text(dir / "config.txt", format_config(spec));
    write_manifest(dir / "manifest.csv", ds.manifest);

    std::optional<MetricsFiles> files;
    std::optional<Variant> current;
    auto on_epoch = [&](Variant v, const EpochMetrics& m) {
        if (current != v) {
            fs::create_directory(dir / variant_name(v));
            files.emplace(dir / variant_name(v));
            current = v;
        }
        files->add(m);
        print_epoch(variant_name(v), spec.train.epochs, m);
    };
    auto on_finish = [&](Variant v, Session& s) {
        RunSpec echo = spec;
        echo.model.variant = v;
        write_file(dir / variant_name(v) / "checkpoint.bin", save_checkpoint(s, echo));
    };
    const AblationResult result = run_ablation(train, eval, spec.model, spec.train, on_epoch, on_finish);
    const std::string table = format_ablation_table(result);
    write_text(dir / "ablation.csv", table);
    std::printf("%s%s\n", table.c_str(), dir.string().c_str());
    return kOk;
}

std::string mega(std::uint64_t macs) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1fM", static_cast<double>(macs) / 1e6);
    return buf;
}

int cmd_macs() {
    // 5x5 convolution producing 14x14x48 from a 14x14x480 input, directly and
    // behind a 1x1 reduction to 16 channels.
    const std::uint64_t direct = count_macs(ConvSpec::square(480, 48, 5, 1, 2), 14, 14);
    const std::uint64_t reduce = count_macs(ConvSpec::square(480, 16, 1), 14, 14);
    const std::uint64_t conv = count_macs(ConvSpec::square(16, 48, 5, 1, 2), 14, 14);
    const std::uint64_t reduced = reduce + conv;
    std::printf("%-44s %12s %8s\n", "computation", "MACs", "rounded");
    std::printf("%-44s %12llu %8s\n", "5x5 conv 480->48 on 14x14 (direct)", static_cast<unsigned long long>(direct),
                mega(direct).c_str());
    std::printf("%-44s %12llu %8s\n", "  1x1 reduce 480->16 on 14x14", static_cast<unsigned long long>(reduce),
                mega(reduce).c_str());
    std::printf("%-44s %12llu %8s\n", "  5x5 conv 16->48 on 14x14", static_cast<unsigned long long>(conv),
                mega(conv).c_str());
    std::printf("%-44s %12llu %8s\n", "1x1-reduced total", static_cast<unsigned long long>(reduced),
                mega(reduced).c_str());
    std::printf("reduction factor %.1fx\n", static_cast<double>(direct) / static_cast<double>(reduced));
    return kOk;
}

int cmd_gradcheck(const std::string& scale, std::size_t seeds, const std::string& corrupt,
                  const std::vector<std::string>& only) {
    SuiteOptions opt;
    if (scale == "tiny") {
        opt.scale = SuiteScale::Tiny;
    } else if (scale == "default") {
        opt.scale = SuiteScale::Default;
    } else {
        throw ConfigError("scale: expected tiny or default, got '" + scale + "'");
    }
    if (seeds < 1) throw ConfigError("seeds: must be at least 1");
    opt.seeds = seeds;
    opt.only = only;
    if (!corrupt.empty()) {
        debug::set_corrupted_backward(corrupt);
        std::fprintf(stderr, "fault injection: backward of '%s' scaled by 1.5\n", corrupt.c_str());
    }
    std::string current;
    double worst = 0.0;
    std::size_t passed = 0, total = 0;
    double tolerance = 0.0;
    auto flush = [&] {
        if (current.empty()) return;
        std::printf("%-22s %2zu/%-2zu seeds  max rel err %.3e  (tol %.0e)\n", current.c_str(), passed, total, worst,
                    tolerance);
    };
    opt.on_case = [&](const SuiteCase& c) {
        if (c.name != current) {
            flush();
            current = c.name;
            worst = 0.0;
            passed = total = 0;
        }
        tolerance = c.tolerance;
        worst = std::max(worst, c.report.max_rel_error);
        ++total;
        passed += c.report.passed;
        if (!c.report.passed) {
            std::printf("FAIL %s seed %llu: %s\n", c.name.c_str(), static_cast<unsigned long long>(c.seed),
                        c.report.failure.c_str());
        }
        std::fflush(stdout);
    };
    const auto start = std::chrono::steady_clock::now();
    const SuiteResult r = run_gradient_suite(opt);
    flush();
    debug::set_corrupted_backward("");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.passed) {
        std::printf("gradient suite passed: %zu checks in %.1fs\n", r.cases.size(), secs);
        return kOk;
    }
    std::string names;
    for (const std::string& n : r.failing) names += (names.empty() ? "" : ", ") + n;
    std::printf("gradient suite FAILED in: %s\n", names.c_str());
    return kGradFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"manetl: two-branch CNN with channel attention for isolated character images"};
    app.footer(kExitHelp);
    app.require_subcommand(1);

    CommonFlags prepare_flags, train_flags, eval_flags, ablate_flags;
    auto* prepare = app.add_subcommand("prepare", "synthesize or ingest a dataset, split it, write a manifest");
    prepare_flags.attach(prepare);
    auto* train = app.add_subcommand("train", "train one variant; writes config, manifest, metrics, checkpoint");
    train_flags.attach(train);
    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
    eval_flags.attach(evaluate_cmd);
    std::string eval_split = "test";
    evaluate_cmd->add_option("--split", eval_split, "train | test")->check(CLI::IsMember({"train", "test"}));
    auto* ablate = app.add_subcommand("ablate", "train inception-only, residual-only and ensemble under one budget");
    ablate_flags.attach(ablate);
    auto* macs = app.add_subcommand("macs", "MAC counts of a 5x5 convolution with and without 1x1 reduction");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer and the model");
    std::string scale = "tiny";
    std::size_t seeds = 10;
    std::string corrupt;
    std::vector<std::string> only;
    gradcheck->add_option("--scale", scale, "tiny | default")->check(CLI::IsMember({"tiny", "default"}));
    gradcheck->add_option("--seeds", seeds, "random draws per case");
    gradcheck->add_option("--case", only, "restrict to these case names, repeatable");
    // Test-only fault injection: scales one op's backward rule.
    gradcheck->add_option("--corrupt", corrupt)->group("");

    for (CLI::App* sub : {prepare, train, evaluate_cmd, ablate, macs, gradcheck}) sub->footer(kExitHelp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*prepare) return cmd_prepare(prepare_flags);
        if (*train) return cmd_train(train_flags);
        if (*evaluate_cmd) return cmd_evaluate(eval_flags, eval_split);
        if (*ablate) return cmd_ablate(ablate_flags);
        if (*macs) return cmd_macs();
        if (*gradcheck) return cmd_gradcheck(scale, seeds, corrupt, only);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return kNumerical;
    } catch (const InputError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
