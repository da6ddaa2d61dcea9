#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "usbone/config.hpp"
#include "usbone/eval.hpp"
#include "usbone/image.hpp"
#include "usbone/keypoints.hpp"
#include "usbone/nn/model.hpp"
#include "usbone/phantom.hpp"
#include "usbone/tga.hpp"
#include "usbone/train.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

namespace fs = std::filesystem;
using namespace usbone;

RunConfig load_cfg(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

void save_by_ext(const Frame& frame, const std::string& path) {
    if (path.ends_with(".usf1")) {
        save_usf1(frame, path);
    } else {
        save_frame(frame, path);
    }
}

// Either a directory of frames (one video) or a directory of such
// directories (one video per subdirectory, sorted by name).
std::vector<VideoSequence> load_dataset(const std::string& dir, int size) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> subdirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "frame_0000.png")) {
            subdirs.push_back(entry.path().string());
        }
    }
    std::sort(subdirs.begin(), subdirs.end());
    std::vector<VideoSequence> dataset;
    if (subdirs.empty()) {
        dataset.push_back(load_video(dir, {size, size}));
    } else {
        for (const auto& sd : subdirs) dataset.push_back(load_video(sd, {size, size}));
    }
    return dataset;
}

struct PhantomArgs {
    std::string config, out;
    std::uint64_t seed = 0;
    int size = 0, frames = 0, margin = 10;
    double depth = 0, drift = 0, curvature = 0, brightness = 0, shadow = 0, grain = 0;
    int frac_column = 0, frac_gap = 0;
    double frac_step = 0;
    CLI::Option *o_seed, *o_size, *o_frames, *o_depth, *o_drift, *o_curvature, *o_brightness,
        *o_shadow, *o_grain, *o_frac, *o_frac_column, *o_frac_gap, *o_frac_step;
};

int run_phantom(const PhantomArgs& a) {
    RunConfig cfg = load_cfg(a.config);
    PhantomConfig& p = cfg.phantom;
    if (a.o_seed->count()) p.seed = a.seed;
    if (a.o_size->count()) p.size = a.size;
    if (a.o_frames->count()) p.frames = a.frames;
    if (a.o_depth->count()) p.bone_depth = a.depth;
    if (a.o_drift->count()) p.drift_amplitude = a.drift;
    if (a.o_curvature->count()) p.bone_curvature = a.curvature;
    if (a.o_brightness->count()) p.bone_brightness = a.brightness;
    if (a.o_shadow->count()) p.shadow_attenuation = a.shadow;
    if (a.o_grain->count()) p.speckle_grain = a.grain;
    const bool want_fracture = a.o_frac->count() || a.o_frac_column->count() ||
                               a.o_frac_gap->count() || a.o_frac_step->count();
    if (want_fracture) {
        FractureSpec spec = p.fracture.value_or(FractureSpec{});
        if (a.o_frac_column->count()) spec.column = a.frac_column;
        if (a.o_frac_gap->count()) spec.gap_width = a.frac_gap;
        if (a.o_frac_step->count()) spec.step = a.frac_step;
        p.fracture = spec;
    }
    auto [video, truth] = generate(p);
    save_video(video, a.out);
    save_truth_json(truth, (fs::path(a.out) / "truth.json").string(), a.margin);
    return 0;
}

struct TgaArgs {
    std::string config, in, out;
    int size = 256;
    double a = 0;
    CLI::Option* o_a;
};

int run_tga(const TgaArgs& a) {
    RunConfig cfg = load_cfg(a.config);
    if (a.o_a->count()) cfg.tga.attenuation_a = a.a;
    const Frame frame = load_frame(a.in, {a.size, a.size});
    save_by_ext(apply_tga(frame, cfg.tga), a.out);
    return 0;
}

struct BonemapArgs {
    std::string config, in, out;
    int size = 256, scale_index = -1;
};

int run_bonemap(const BonemapArgs& a) {
    RunConfig cfg = load_cfg(a.config);
    const Frame frame = load_frame(a.in, {a.size, a.size});
    const Frame compensated = apply_tga(frame, cfg.tga);
    fs::create_directories(a.out);
    const int n = static_cast<int>(cfg.bonemap.scales.size());
    if (a.scale_index >= n) throw ArgumentError("scale index out of range");
    for (int i = 0; i < n; ++i) {
        if (a.scale_index >= 0 && i != a.scale_index) continue;
        const Frame map = bone_probability_map(compensated, cfg.bonemap, i);
        const std::string stem = "bonemap_scale_" + std::to_string(i);
        save_usf1(map, (fs::path(a.out) / (stem + ".usf1")).string());
        save_frame(map, (fs::path(a.out) / (stem + ".png")).string());
    }
    return 0;
}

struct TrainArgs {
    std::string config, data, out;
    int size = 256;
    std::uint64_t seed = 0;
    int epochs = 0, k = 0, batch = 0, train_pairs = 0, val_pairs = 0, separation = 0;
    double lr = 0;
    CLI::Option *o_seed, *o_epochs, *o_k, *o_batch, *o_train_pairs, *o_val_pairs, *o_separation,
        *o_lr;
};

int run_train(const TrainArgs& a) {
    RunConfig cfg = load_cfg(a.config);
    if (a.o_seed->count()) cfg.train.seed = a.seed;
    if (a.o_epochs->count()) cfg.train.epochs = a.epochs;
    if (a.o_k->count()) cfg.network.K = a.k;
    if (a.o_batch->count()) cfg.train.batch_size = a.batch;
    if (a.o_train_pairs->count()) cfg.train.train_pairs = a.train_pairs;
    if (a.o_val_pairs->count()) cfg.train.val_pairs = a.val_pairs;
    if (a.o_separation->count()) cfg.train.pair_separation = a.separation;
    if (a.o_lr->count()) cfg.train.learning_rate = a.lr;
    const auto dataset = load_dataset(a.data, a.size);
    nn::ParamStore store;
    nn::init_params(store, cfg.network, cfg.train.seed);
    train(dataset, cfg.train, cfg.network, cfg.bonemap, cfg.tga, store, a.out);
    return 0;
}

struct InferArgs {
    std::string config, checkpoint, in, out;
    int size = 256, k = 0;
    CLI::Option* o_k;
};

int run_infer(const InferArgs& a) {
    RunConfig cfg = load_cfg(a.config);
    if (a.o_k->count()) cfg.network.K = a.k;
    nn::ParamStore store;
    nn::init_params(store, cfg.network, 0);
    nn::load_checkpoint(store, a.checkpoint);
    std::map<int, KeypointSet> sets;
    if (fs::is_directory(a.in)) {
        const VideoSequence video = load_video(a.in, {a.size, a.size});
        for (size_t f = 0; f < video.frames.size(); ++f) {
            sets.emplace(static_cast<int>(f),
                         infer_keypoints(video.frames[f], store, cfg.network, cfg.bonemap,
                                         cfg.tga));
        }
    } else {
        const Frame frame = load_frame(a.in, {a.size, a.size});
        sets.emplace(0, infer_keypoints(frame, store, cfg.network, cfg.bonemap, cfg.tga));
    }
    save_keypoints_json(sets, a.out);
    return 0;
}

struct EvalArgs {
    std::string pred, truth, out;
    int top_n = 1;
};

int run_eval(const EvalArgs& a) {
    const std::vector<RectROI> all_rois = load_truth_rois(a.truth);
    std::ifstream tin(a.truth);
    if (!tin) throw IoError("cannot open " + a.truth);
    nlohmann::json tj;
    tin >> tj;
    const int size = tj.value("size", 256);
    const auto sets = load_keypoints_json(a.pred, size);
    std::vector<KeypointSet> keypoints;
    std::vector<RectROI> rois;
    for (const auto& [frame, ks] : sets) {
        if (frame < 0 || frame >= static_cast<int>(all_rois.size())) {
            throw ArgumentError("predicted frame " + std::to_string(frame) +
                                " has no truth ROI");
        }
        keypoints.push_back(ks);
        rois.push_back(all_rois[frame]);
    }
    const EvalReport report = eval_hit_rate(keypoints, rois, a.top_n);
    const std::string text = report_to_json(report);
    std::cout << text;
    if (!a.out.empty()) {
        std::ofstream f(a.out, std::ios::trunc);
        if (!f) throw IoError("cannot write " + a.out);
        f << text;
    }
    return 0;
}

struct OverlayArgs {
    std::string pred, truth, in, out;
    int frame = 0, size = 256;
};

int run_overlay(const OverlayArgs& a) {
    const Frame frame = load_frame(a.in, {a.size, a.size});
    const auto sets = load_keypoints_json(a.pred, a.size);
    const auto it = sets.find(a.frame);
    if (it == sets.end()) {
        throw ArgumentError("no keypoints for frame " + std::to_string(a.frame));
    }
    std::optional<RectROI> roi;
    if (!a.truth.empty()) {
        const auto rois = load_truth_rois(a.truth);
        if (a.frame < 0 || a.frame >= static_cast<int>(rois.size())) {
            throw ArgumentError("frame index outside truth ROI range");
        }
        roi = rois[a.frame];
    }
    render_overlay(frame, it->second, roi, a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    openblas_set_num_threads(1);

    CLI::App app{"ultrasound bone keypoint pipeline"};
    app.require_subcommand(1);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic sweep with truth");
    phantom->add_option("--out", pa.out, "output directory")->required();
    phantom->add_option("--config", pa.config, "JSON config file");
    phantom->add_option("--margin", pa.margin, "truth ROI margin, px");
    pa.o_seed = phantom->add_option("--seed", pa.seed);
    pa.o_size = phantom->add_option("--size", pa.size);
    pa.o_frames = phantom->add_option("--frames", pa.frames);
    pa.o_depth = phantom->add_option("--bone-depth", pa.depth);
    pa.o_drift = phantom->add_option("--drift", pa.drift);
    pa.o_curvature = phantom->add_option("--curvature", pa.curvature);
    pa.o_brightness = phantom->add_option("--brightness", pa.brightness);
    pa.o_shadow = phantom->add_option("--shadow", pa.shadow);
    pa.o_grain = phantom->add_option("--grain", pa.grain);
    pa.o_frac = phantom->add_flag("--fracture");
    pa.o_frac_column = phantom->add_option("--fracture-column", pa.frac_column);
    pa.o_frac_gap = phantom->add_option("--fracture-gap", pa.frac_gap);
    pa.o_frac_step = phantom->add_option("--fracture-step", pa.frac_step);

    TgaArgs ta;
    auto* tga = app.add_subcommand("tga", "apply time-gain attenuation to a frame");
    tga->add_option("--in", ta.in, "input frame (PNG or USF1)")->required();
    tga->add_option("--out", ta.out, "output frame (.png or .usf1)")->required();
    tga->add_option("--config", ta.config, "JSON config file");
    tga->add_option("--size", ta.size, "working resolution");
    ta.o_a = tga->add_option("--a", ta.a, "attenuation factor");

    BonemapArgs ba;
    auto* bonemap = app.add_subcommand("bonemap", "compute bone probability maps");
    bonemap->add_option("--in", ba.in, "input frame (PNG or USF1)")->required();
    bonemap->add_option("--out", ba.out, "output directory")->required();
    bonemap->add_option("--config", ba.config, "JSON config file");
    bonemap->add_option("--size", ba.size, "working resolution");
    bonemap->add_option("--scale-index", ba.scale_index, "emit one scale only");

    TrainArgs tra;
    auto* train = app.add_subcommand("train", "train the keypoint transport pipeline");
    train->add_option("--data", tra.data, "video directory (or parent of several)")->required();
    train->add_option("--out", tra.out, "checkpoint/metrics directory")->required();
    train->add_option("--config", tra.config, "JSON config file");
    train->add_option("--size", tra.size, "working resolution");
    tra.o_seed = train->add_option("--seed", tra.seed);
    tra.o_epochs = train->add_option("--epochs", tra.epochs);
    tra.o_k = train->add_option("--k", tra.k);
    tra.o_batch = train->add_option("--batch-size", tra.batch);
    tra.o_train_pairs = train->add_option("--train-pairs", tra.train_pairs);
    tra.o_val_pairs = train->add_option("--val-pairs", tra.val_pairs);
    tra.o_separation = train->add_option("--separation", tra.separation);
    tra.o_lr = train->add_option("--lr", tra.lr);

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "detect keypoints with a trained checkpoint");
    infer->add_option("--checkpoint", ia.checkpoint, "USTP checkpoint")->required();
    infer->add_option("--in", ia.in, "frame file or video directory")->required();
    infer->add_option("--out", ia.out, "keypoint JSON output")->required();
    infer->add_option("--config", ia.config, "JSON config file");
    infer->add_option("--size", ia.size, "working resolution");
    ia.o_k = infer->add_option("--k", ia.k);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score keypoints against truth ROIs");
    eval->add_option("--pred", ea.pred, "keypoint JSON")->required();
    eval->add_option("--truth", ea.truth, "truth JSON")->required();
    eval->add_option("--top-n", ea.top_n, "keypoints required inside the ROI");
    eval->add_option("--out", ea.out, "also write the report here");

    OverlayArgs oa;
    auto* overlay = app.add_subcommand("overlay", "render keypoints over a frame");
    overlay->add_option("--in", oa.in, "frame file")->required();
    overlay->add_option("--pred", oa.pred, "keypoint JSON")->required();
    overlay->add_option("--out", oa.out, "output PNG")->required();
    overlay->add_option("--frame", oa.frame, "frame index in the keypoint JSON");
    overlay->add_option("--truth", oa.truth, "truth JSON (draws the frame's ROI)");
    overlay->add_option("--size", oa.size, "working resolution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (phantom->parsed()) return run_phantom(pa);
        if (tga->parsed()) return run_tga(ta);
        if (bonemap->parsed()) return run_bonemap(ba);
        if (train->parsed()) return run_train(tra);
        if (infer->parsed()) return run_infer(ia);
        if (eval->parsed()) return run_eval(ea);
        if (overlay->parsed()) return run_overlay(oa);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
