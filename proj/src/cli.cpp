// SPDX-License-Identifier: Apache-2.0

#include "mgfn/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgfn/checkpoint.hpp"
#include "mgfn/errors.hpp"
#include "mgfn/feature_io.hpp"
#include "mgfn/metrics.hpp"
#include "mgfn/model.hpp"
#include "mgfn/synthgen.hpp"
#include "mgfn/trainer.hpp"

namespace mgfn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// `--data` accepts a directory holding train.json/test.json or a manifest file.
fs::path resolve_manifest(const fs::path& data, const char* split) {
    if (fs::is_directory(data)) {
        return data / (std::string(split) + ".json");
    }
    return data;
}

void write_json(const fs::path& path, const json& doc) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    out << doc.dump(2) << "\n";
    if (!out) {
        throw LoadError("cannot write " + path.string());
    }
}

void check_dims(const Checkpoint& ckpt, const DatasetManifest& m) {
    if (ckpt.arch.crops != m.crops || ckpt.arch.channels != m.channels) {
        throw DimensionError("dimension mismatch: checkpoint expects P=" + std::to_string(ckpt.arch.crops) +
                             ", C=" + std::to_string(ckpt.arch.channels) + " but the data has P=" +
                             std::to_string(m.crops) + ", C=" + std::to_string(m.channels));
    }
}

struct SynthArgs {
    std::string preset_name = "fig2";
    fs::path out;
    std::uint64_t seed = 0;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
    const auto p = preset(a.preset_name);
    const auto ds = generate(p.scenes, p.dims, a.seed, a.out);
    json scenes = json::array();
    for (const auto& s : p.scenes) {
        scenes.push_back({{"name", s.name},
                          {"base_magnitude", s.base_magnitude},
                          {"noise_scale", s.noise_scale},
                          {"base_jitter", s.base_jitter},
                          {"anomaly_boost", s.anomaly_boost},
                          {"normal_train", s.normal_train},
                          {"abnormal_train", s.abnormal_train},
                          {"normal_test", s.normal_test},
                          {"abnormal_test", s.abnormal_test},
                          {"snippets_per_video", s.snippets_per_video},
                          {"window", {s.window_min, s.window_max}}});
    }
    write_json(a.out / "synth.json", {{"preset", p.name},
                                      {"seed", a.seed},
                                      {"rng", Rng::kAlgorithm},
                                      {"dims", {{"P", p.dims.crops}, {"C", p.dims.channels}}},
                                      {"frames_per_snippet", p.dims.frames_per_snippet},
                                      {"suggested_T", p.clips},
                                      {"scenes", scenes}});
    out << "wrote " << ds.train.videos.size() << " train and " << ds.test.videos.size()
        << " test videos to " << a.out.string() << "\n";
    return kOk;
}

struct TrainArgs {
    TrainConfig config;
    std::string loss = "mc";
    std::string arch = "gf";
    fs::path data;
    fs::path out;
    std::optional<fs::path> resume;
    bool crops_given = false;
};

int do_train(TrainArgs a, std::ostream& out) {
    a.config.loss_variant = parse_loss_variant(a.loss);
    a.config.block_order = parse_block_order(a.arch);
    const auto train_manifest = load_manifest(resolve_manifest(a.data, "train"));
    if (!a.crops_given) {
        a.config.crops = train_manifest.crops;
    }
    const auto train_videos = load_videos(train_manifest);
    std::vector<VideoRecord> eval_videos;
    const auto eval_path = resolve_manifest(a.data, "test");
    if (fs::is_directory(a.data) && fs::exists(eval_path)) {
        eval_videos = load_videos(load_manifest(eval_path));
    }
    std::optional<Checkpoint> resume;
    if (a.resume) {
        resume = load_checkpoint(*a.resume);
    }
    const auto report = train(a.config, train_videos, eval_videos, a.out, resume);
    out << "trained " << report.final_checkpoint.step << " steps";
    if (!report.steps.empty()) {
        out << ", final loss " << report.steps.back().loss.total;
    }
    if (!eval_videos.empty()) {
        out << std::fixed << std::setprecision(4) << ", AUC=" << report.final_eval.auc
            << " AP=" << report.final_eval.ap;
    }
    out << "\n";
    return kOk;
}

struct EvalArgs {
    fs::path checkpoint;
    fs::path data;
    std::optional<fs::path> out;
};

int do_eval(const EvalArgs& a, std::ostream& out) {
    const auto ckpt = load_checkpoint(a.checkpoint);
    const auto manifest = load_manifest(resolve_manifest(a.data, "test"));
    check_dims(ckpt, manifest);
    const auto videos = load_videos(manifest);
    const auto model = MgfnModel::from_checkpoint(ckpt);
    const auto r = evaluate_model(model, videos);
    out << std::fixed << std::setprecision(6) << "AUC=" << r.auc << " AP=" << r.ap
        << " frames=" << r.n_frames << " positive=" << r.n_positive << "\n";
    if (a.out) {
        write_json(*a.out / "eval.json", {{"checkpoint", a.checkpoint.string()},
                                          {"data", a.data.string()},
                                          {"arch", ckpt.arch},
                                          {"seed", ckpt.seed},
                                          {"step", ckpt.step},
                                          {"auc", r.auc},
                                          {"ap", r.ap},
                                          {"frames", r.n_frames},
                                          {"positive_frames", r.n_positive}});
    }
    return kOk;
}

int do_score(const EvalArgs& a, std::ostream& out) {
    const auto ckpt = load_checkpoint(a.checkpoint);
    const auto manifest = load_manifest(resolve_manifest(a.data, "test"));
    check_dims(ckpt, manifest);
    const auto model = MgfnModel::from_checkpoint(ckpt);
    const fs::path dir = *a.out;
    fs::create_directories(dir);
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    bool labelled = true;
    for (const auto& entry : manifest.videos) {
        const auto video = load_video(entry, manifest);
        const auto series = infer_video(model, video);
        std::ofstream csv(dir / (video.id + ".csv"), std::ios::trunc);
        csv << std::setprecision(9);
        for (std::size_t f = 0; f < series.size(); ++f) {
            csv << f << "," << series[f] << "\n";
        }
        if (!csv) {
            throw LoadError("cannot write scores for '" + video.id + "'");
        }
        scores.insert(scores.end(), series.begin(), series.end());
        if (video.frame_mask) {
            labels.insert(labels.end(), video.frame_mask->begin(), video.frame_mask->end());
        } else if (!video.abnormal()) {
            labels.insert(labels.end(), series.size(), 0);
        } else {
            labelled = false;
        }
    }
    json summary{{"checkpoint", a.checkpoint.string()},
                 {"data", a.data.string()},
                 {"arch", ckpt.arch},
                 {"seed", ckpt.seed},
                 {"step", ckpt.step},
                 {"videos", manifest.videos.size()},
                 {"score_protocol", "sigmoid applied after averaging over crops"}};
    if (labelled) {
        try {
            const auto r = evaluate(scores, labels);
            summary["metrics"] = {{"auc", r.auc}, {"ap", r.ap}};
        } catch (const MetricError& e) {
            summary["metrics"] = {{"error", e.what()}};
        }
    }
    write_json(dir / "summary.json", summary);
    out << "wrote scores for " << manifest.videos.size() << " videos to " << dir.string() << "\n";
    return kOk;
}

struct GradcheckArgs {
    std::string arch = "gf";
    std::string loss = "mc";
    std::uint64_t seed = 0;
    GradCheckOptions options;
    std::optional<fs::path> out;
};

int do_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    const auto order = parse_block_order(a.arch);
    const auto loss = parse_loss_variant(a.loss);
    const auto report = gradcheck_micro(order, loss, a.seed, a.options);
    const auto worst = std::max_element(report.params.begin(), report.params.end(),
                                        [](const auto& x, const auto& y) { return x.max_rel_error < y.max_rel_error; });
    out << std::scientific << std::setprecision(3) << "gradcheck arch=" << to_string(order)
        << " loss=" << to_string(loss) << " params=" << report.params.size()
        << " max_rel_error=" << report.max_rel_error;
    if (worst != report.params.end()) {
        out << " worst=" << worst->name << "[" << worst->worst_index << "]";
    }
    out << (report.passed ? " PASS" : " FAIL") << "\n";
    if (a.out) {
        json params = json::array();
        for (const auto& p : report.params) {
            params.push_back({{"name", p.name}, {"max_rel_error", p.max_rel_error},
                              {"max_abs_error", p.max_abs_error}});
        }
        write_json(*a.out / "gradcheck.json", {{"arch", to_string(order)},
                                               {"loss", to_string(loss)},
                                               {"seed", a.seed},
                                               {"eps", a.options.eps},
                                               {"tol", a.options.tol},
                                               {"max_rel_error", report.max_rel_error},
                                               {"passed", report.passed},
                                               {"params", params}});
    }
    return report.passed ? kOk : kNumerical;
}

void add_train_flags(CLI::App& cmd, TrainArgs& a) {
    auto& c = a.config;
    cmd.add_option("--B", c.batch_size, "batch size, half normal and half abnormal (even)")->capture_default_str();
    cmd.add_option("--T", c.clips, "clips per video")->capture_default_str();
    cmd.add_option("--P", c.crops, "crops per snippet (default: from the data)");
    cmd.add_option("--k", c.topk, "top-k clips per video")->capture_default_str();
    cmd.add_option("--alpha", c.alpha, "FAM residual weight")->capture_default_str();
    cmd.add_option("--lambda1", c.lambda_ts, "weight of the smoothness term")->capture_default_str();
    cmd.add_option("--lambda2", c.lambda_sp, "weight of the sparsity term")->capture_default_str();
    cmd.add_option("--lambda3", c.lambda_mc, "weight of the contrastive term")->capture_default_str();
    cmd.add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
    cmd.add_option("--weight_decay,--weight-decay", c.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    cmd.add_option("--margin", c.margin, "contrastive margin")->capture_default_str();
    cmd.add_option("--steps", c.steps, "optimization steps")->capture_default_str();
    cmd.add_option("--eval_every,--eval-every", c.eval_every, "evaluate every N steps (0: only at the end)")
        ->capture_default_str();
    cmd.add_option("--seed", c.seed, "seed for init, batches and dropout")->capture_default_str();
    cmd.add_option("--loss", a.loss, "loss variant: mc|rtfm|sce")->capture_default_str();
    cmd.add_option("--arch", a.arch, "block order: gf|ff|fg|gf-fusion")->capture_default_str();
    cmd.add_option("--dropout", c.dropout, "score-head dropout rate")->capture_default_str();
    cmd.add_option("--head_hidden1,--head-hidden1", c.head_hidden1, "score-head first hidden width (0: D_out/4)")
        ->capture_default_str();
    cmd.add_option("--head_hidden2,--head-hidden2", c.head_hidden2, "score-head second hidden width (0: D_out/32)")
        ->capture_default_str();
    cmd.add_flag("--signed_pair_distances,--signed-pair-distances", c.signed_pair_distances,
                 "signed min/max pair distances instead of absolute hardest pairs");
    cmd.add_option("--data", a.data, "directory with train.json (and test.json) or a manifest")->required();
    cmd.add_option("--out", a.out, "run directory")->required();
    cmd.add_option("--resume", a.resume, "continue from a checkpoint");
}

int map_error(const std::exception& e, std::ostream& err) {
    err << "error: " << e.what() << "\n";
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) {
        return kNumerical;
    }
    return kDataError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"MGFN weakly supervised anomaly scoring on precomputed clip features", "mgfn"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic feature dataset");
    synth_cmd->add_option("--preset", synth.preset_name, "fig2|balanced|micro")->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "generator seed")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a run directory");
    add_train_flags(*train_cmd, train_args);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "frame-level AUC/AP of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_args.data, "directory with test.json or a manifest")->required();
    eval_cmd->add_option("--out", eval_args.out, "optional report directory");

    EvalArgs score_args;
    auto* score_cmd = app.add_subcommand("score", "write per-video frame scores as CSV");
    score_cmd->add_option("--checkpoint", score_args.checkpoint, "checkpoint file")->required();
    score_cmd->add_option("--data", score_args.data, "directory with test.json or a manifest")->required();
    score_cmd->add_option("--out", score_args.out, "output directory")->required();

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check on the micro fixture");
    gc_cmd->add_option("--arch", gc.arch, "gf|ff|fg|gf-fusion")->capture_default_str();
    gc_cmd->add_option("--loss", gc.loss, "mc|rtfm|sce")->capture_default_str();
    gc_cmd->add_option("--seed", gc.seed, "fixture seed")->capture_default_str();
    gc_cmd->add_option("--eps", gc.options.eps, "finite-difference step")->capture_default_str();
    gc_cmd->add_option("--tol", gc.options.tol, "max relative error")->capture_default_str();
    gc_cmd->add_option("--out", gc.out, "optional report directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (synth_cmd->parsed()) {
            return do_synth(synth, out);
        }
        if (train_cmd->parsed()) {
            train_args.crops_given = train_cmd->count("--P") > 0;
            return do_train(train_args, out);
        }
        if (eval_cmd->parsed()) {
            return do_eval(eval_args, out);
        }
        if (score_cmd->parsed()) {
            return do_score(score_args, out);
        }
        if (gc_cmd->parsed()) {
            return do_gradcheck(gc, out);
        }
    } catch (const Error& e) {
        return map_error(e, err);
    } catch (const fs::filesystem_error& e) {
        return map_error(e, err);
    }
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args, std::cout, std::cerr);
}

}  // namespace mgfn::cli
