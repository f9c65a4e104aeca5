// soda2 experiment driver: synth | train | eval | gradcheck
//
// Run configuration comes from defaults, then an optional --config JSON file,
// then explicit command-line flags (kebab-case mirrors of the config fields).
// Exit codes: 0 ok, 1 numeric failure, 2 usage/config error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "soda2/checkpoint.hpp"
#include "soda2/class_map.hpp"
#include "soda2/data.hpp"
#include "soda2/error.hpp"
#include "soda2/gradcheck.hpp"
#include "soda2/metrics.hpp"
#include "soda2/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    soda2::TrainConfig train;
    std::string source_cube, source_labels, target_cube, target_labels;
    std::string out = ".";
    std::string checkpoint;
    // synth parameters
    std::size_t bands = 32;
    std::size_t size = 64;
    double shift = 0.3;
    int known_classes = 4;
    int unknown_classes = 1;
};

void apply_json(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw soda2::ConfigError("config file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw soda2::ConfigError("config JSON invalid: " + std::string(e.what()));
    }
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("alpha", rc.train.alpha);
    get("learning_rate", rc.train.learning_rate);
    get("momentum", rc.train.momentum);
    get("weight_decay", rc.train.weight_decay);
    get("batch_size", rc.train.batch_size);
    get("epochs", rc.train.epochs);
    get("seed", rc.train.seed);
    get("k", rc.train.gmm_components);
    get("patch", rc.train.patch);
    get("source_cube", rc.source_cube);
    get("source_labels", rc.source_labels);
    get("target_cube", rc.target_cube);
    get("target_labels", rc.target_labels);
    get("out", rc.out);
    get("checkpoint", rc.checkpoint);
    get("bands", rc.bands);
    get("size", rc.size);
    get("shift", rc.shift);
    get("known_classes", rc.known_classes);
    get("unknown_classes", rc.unknown_classes);
}

void add_common_flags(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--config", "JSON run config (applied before other flags)");
    cmd->add_option("--seed", rc.train.seed, "RNG seed");
    cmd->add_option("--alpha", rc.train.alpha, "alignment loss weight");
    cmd->add_option("--learning-rate", rc.train.learning_rate, "SGD learning rate");
    cmd->add_option("--momentum", rc.train.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", rc.train.weight_decay, "SGD weight decay");
    cmd->add_option("--batch-size", rc.train.batch_size, "mini-batch size (even)");
    cmd->add_option("--epochs", rc.train.epochs, "training epochs");
    cmd->add_option("--k", rc.train.gmm_components, "GMM component count");
    cmd->add_option("--patch", rc.train.patch, "patch size (odd)");
    cmd->add_option("--out", rc.out, "output directory");
}

std::string require_existing(const std::string& path, const char* what) {
    if (path.empty()) throw soda2::ConfigError(std::string(what) + " path not set");
    if (!fs::exists(path))
        throw soda2::ConfigError(std::string(what) + " not found: " + path);
    return path;
}

json loss_report_json(const soda2::LossReport& r, std::size_t step) {
    return {{"step", step},      {"l_cls", r.l_cls},   {"l_spe", r.l_spe},
            {"l_spa", r.l_spa},  {"l_mmd", r.l_mmd},   {"l_total", r.l_total},
            {"alpha", r.alpha}};
}

int cmd_synth(const RunConfig& rc) {
    fs::create_directories(rc.out);
    soda2::DatasetMeta meta{rc.known_classes, rc.unknown_classes > 0, rc.train.seed};
    const soda2::SynthResult res = soda2::synth_pair(meta, rc.shift, rc.bands, rc.size,
                                                     rc.train.patch, rc.unknown_classes);
    const std::string src = rc.out + "/source.hsc1";
    const std::string srcl = rc.out + "/source_labels.hsl1";
    const std::string tgt = rc.out + "/target.hsc1";
    const std::string tgtl = rc.out + "/target_labels.hsl1";
    soda2::save_cube(res.source, src);
    soda2::save_labels(res.source_labels, srcl);
    soda2::save_cube(res.target, tgt);
    soda2::save_labels(res.target_labels, tgtl);

    std::map<std::string, std::size_t> src_counts, tgt_counts;
    for (std::uint16_t v : res.source_labels.labels)
        if (v != 0) src_counts["class-" + std::to_string(v)]++;
    for (std::uint16_t v : res.target_labels.labels) {
        if (v == soda2::kUnknownSentinel)
            tgt_counts["unknown"]++;
        else if (v != 0)
            tgt_counts["class-" + std::to_string(v)]++;
    }
    json summary{{"files", {src, srcl, tgt, tgtl}},
                 {"bands", rc.bands},
                 {"size", rc.size},
                 {"shift", rc.shift},
                 {"seed", rc.train.seed},
                 {"known_classes", rc.known_classes},
                 {"unknown_classes", rc.unknown_classes},
                 {"source_train_pixels", src_counts},
                 {"target_pixels", tgt_counts}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc) {
    fs::create_directories(rc.out);
    const soda2::HsiCube src =
        soda2::load_cube(require_existing(rc.source_cube, "source cube"));
    const soda2::LabelMap srcl =
        soda2::load_labels(require_existing(rc.source_labels, "source labels"));
    const soda2::HsiCube tgt =
        soda2::load_cube(require_existing(rc.target_cube, "target cube"));

    const soda2::HsiCube src_std = soda2::standardize_bands(src);
    const soda2::HsiCube tgt_std = soda2::standardize_bands(tgt);
    const soda2::PatchBatch source =
        soda2::extract_patches(src_std, &srcl, rc.train.patch, soda2::Domain::Source);
    const soda2::PatchBatch target =
        soda2::extract_patches(tgt_std, nullptr, rc.train.patch, soda2::Domain::Target);

    soda2::TrainState state =
        soda2::init_train_state(rc.train, static_cast<int>(srcl.class_names.size()));
    soda2::train(state, source, target, rc.train);

    const std::string ckpt = rc.out + "/checkpoint.sdc";
    soda2::save_checkpoint(state, rc.train, ckpt);
    std::ofstream log(rc.out + "/train_log.jsonl", std::ios::trunc);
    for (std::size_t i = 0; i < state.history.size(); ++i)
        log << loss_report_json(state.history[i], i).dump() << "\n";

    json summary{{"checkpoint", ckpt},
                 {"steps", state.history.size()},
                 {"final_l_total", state.history.empty() ? 0.0
                                                         : state.history.back().l_total},
                 {"log", rc.out + "/train_log.jsonl"}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& rc) {
    fs::create_directories(rc.out);
    const soda2::LoadedCheckpoint loaded =
        soda2::load_checkpoint(require_existing(rc.checkpoint, "checkpoint"));
    const soda2::HsiCube tgt =
        soda2::load_cube(require_existing(rc.target_cube, "target cube"));
    const soda2::HsiCube tgt_std = soda2::standardize_bands(tgt);
    // evaluation keeps the caller's K/seed overrides but the trained weights
    soda2::TrainConfig cfg = loaded.config;
    cfg.gmm_components = rc.train.gmm_components;
    const soda2::PatchBatch target =
        soda2::extract_patches(tgt_std, nullptr, cfg.patch, soda2::Domain::Target);

    std::optional<soda2::LabelMap> truth_map;
    std::vector<int> truth;
    if (!rc.target_labels.empty()) {
        truth_map = soda2::load_labels(require_existing(rc.target_labels, "target labels"));
        for (std::uint16_t v : truth_map->labels) truth.push_back(static_cast<int>(v));
    }
    const soda2::InferResult res =
        soda2::infer(loaded.state, target, truth.empty() ? nullptr : &truth, cfg);

    const std::string map_path = rc.out + "/map.ppm";
    soda2::write_class_map(res.predictions, tgt.width, tgt.height, map_path);

    json out;
    out["map"] = map_path;
    out["gmm"] = json::parse(res.gmm.to_json());
    if (res.metrics) out["metrics"] = json::parse(res.metrics->to_json());
    const std::string metrics_path = rc.out + "/metrics.json";
    {
        std::ofstream f(metrics_path, std::ios::trunc);
        f << out.dump(2) << "\n";
    }
    out["metrics_file"] = metrics_path;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_gradcheck(int seeds, double tol_ops, double tol_comp) {
    const auto cases = soda2::run_grad_checks(seeds, tol_ops, tol_comp);
    bool all_ok = true;
    for (const auto& c : cases) {
        json j{{"op", c.name},
               {"max_rel_err", c.max_rel_err},
               {"tolerance", c.tolerance},
               {"passed", c.passed}};
        std::cout << j.dump() << "\n";
        all_ok = all_ok && c.passed;
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SoDa2 cross-scene open-set classification driver"};
    app.require_subcommand(1);

    RunConfig rc;
    // --config is applied before flag parsing so flags can override it
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                apply_json(rc, argv[i + 1]);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }
    }

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic source/target pair");
    add_common_flags(synth, rc);
    synth->add_option("--bands", rc.bands, "spectral band count");
    synth->add_option("--size", rc.size, "scene height/width");
    synth->add_option("--shift", rc.shift, "domain shift magnitude");
    synth->add_option("--known-classes", rc.known_classes, "shared class count");
    synth->add_option("--unknown-classes", rc.unknown_classes, "target-only class count");

    CLI::App* train = app.add_subcommand("train", "train on a source/target pair");
    add_common_flags(train, rc);
    train->add_option("--source-cube", rc.source_cube, "HSC1 source cube");
    train->add_option("--source-labels", rc.source_labels, "HSL1 source training labels");
    train->add_option("--target-cube", rc.target_cube, "HSC1 target cube");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a target scene");
    add_common_flags(eval, rc);
    eval->add_option("--checkpoint", rc.checkpoint, "trained checkpoint");
    eval->add_option("--target-cube", rc.target_cube, "HSC1 target cube");
    eval->add_option("--target-labels", rc.target_labels, "HSL1 target truth (optional)");

    int gc_seeds = 20;
    double gc_tol_ops = 1e-6, gc_tol_comp = 1e-5;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("--seeds", gc_seeds, "random instances per op");
    gradcheck->add_option("--tol", gc_tol_ops, "operator tolerance");
    gradcheck->add_option("--tol-composition", gc_tol_comp, "composition tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(rc);
        if (train->parsed()) return cmd_train(rc);
        if (eval->parsed()) return cmd_eval(rc);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seeds, gc_tol_ops, gc_tol_comp);
    } catch (const soda2::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const soda2::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
