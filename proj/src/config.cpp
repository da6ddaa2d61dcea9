#include "usbone/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

namespace usbone {
namespace {

using nlohmann::json;

void expect_keys(const json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ArgumentError("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) throw ArgumentError("config: unknown key " + where + "." + it.key());
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception&) {
        throw ArgumentError("config: bad value type for " + where + "." + key);
    }
}

void parse_tga(const json& j, TgaConfig& cfg) {
    expect_keys(j, "tga", {"attenuation_a"});
    read(j, "attenuation_a", cfg.attenuation_a, "tga");
}

void parse_bonemap(const json& j, BoneMapConfig& cfg) {
    expect_keys(j, "bonemap", {"scales", "fs_tau", "epsilon", "sigma0"});
    read(j, "scales", cfg.scales, "bonemap");
    read(j, "fs_tau", cfg.fs_tau, "bonemap");
    read(j, "epsilon", cfg.epsilon, "bonemap");
    read(j, "sigma0", cfg.sigma0, "bonemap");
}

void parse_network(const json& j, nn::NetworkSpec& cfg) {
    expect_keys(j, "network", {"k", "in_channels", "heatmap_sigma", "reconstruct_all_channels"});
    read(j, "k", cfg.K, "network");
    read(j, "in_channels", cfg.in_channels, "network");
    read(j, "heatmap_sigma", cfg.heatmap_sigma, "network");
    read(j, "reconstruct_all_channels", cfg.reconstruct_all_channels, "network");
}

void parse_train(const json& j, TrainConfig& cfg) {
    expect_keys(j, "train",
                {"epochs", "learning_rate", "lr_decay", "lr_decay_every", "batch_size",
                 "train_pairs", "val_pairs", "pair_separation", "seed"});
    read(j, "epochs", cfg.epochs, "train");
    read(j, "learning_rate", cfg.learning_rate, "train");
    read(j, "lr_decay", cfg.lr_decay, "train");
    read(j, "lr_decay_every", cfg.lr_decay_every, "train");
    read(j, "batch_size", cfg.batch_size, "train");
    read(j, "train_pairs", cfg.train_pairs, "train");
    read(j, "val_pairs", cfg.val_pairs, "train");
    read(j, "pair_separation", cfg.pair_separation, "train");
    read(j, "seed", cfg.seed, "train");
}

void parse_phantom(const json& j, PhantomConfig& cfg) {
    expect_keys(j, "phantom",
                {"size", "frames", "bone_depth", "bone_curvature", "bone_brightness",
                 "shadow_attenuation", "speckle_grain", "drift_amplitude", "fracture", "seed"});
    read(j, "size", cfg.size, "phantom");
    read(j, "frames", cfg.frames, "phantom");
    read(j, "bone_depth", cfg.bone_depth, "phantom");
    read(j, "bone_curvature", cfg.bone_curvature, "phantom");
    read(j, "bone_brightness", cfg.bone_brightness, "phantom");
    read(j, "shadow_attenuation", cfg.shadow_attenuation, "phantom");
    read(j, "speckle_grain", cfg.speckle_grain, "phantom");
    read(j, "drift_amplitude", cfg.drift_amplitude, "phantom");
    read(j, "seed", cfg.seed, "phantom");
    if (j.contains("fracture")) {
        const json& f = j.at("fracture");
        if (f.is_null()) {
            cfg.fracture.reset();
        } else {
            expect_keys(f, "phantom.fracture", {"column", "gap_width", "step"});
            FractureSpec spec;
            read(f, "column", spec.column, "phantom.fracture");
            read(f, "gap_width", spec.gap_width, "phantom.fracture");
            read(f, "step", spec.step, "phantom.fracture");
            cfg.fracture = spec;
        }
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ArgumentError(std::string("config: invalid JSON: ") + e.what());
    }
    expect_keys(j, "<root>", {"tga", "bonemap", "network", "train", "phantom"});
    RunConfig cfg;
    if (j.contains("tga")) parse_tga(j.at("tga"), cfg.tga);
    if (j.contains("bonemap")) parse_bonemap(j.at("bonemap"), cfg.bonemap);
    if (j.contains("network")) parse_network(j.at("network"), cfg.network);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("phantom")) parse_phantom(j.at("phantom"), cfg.phantom);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string canonical_json(const RunConfig& cfg) {
    json j;
    j["tga"] = {{"attenuation_a", cfg.tga.attenuation_a}};
    j["bonemap"] = {{"scales", cfg.bonemap.scales},
                    {"fs_tau", cfg.bonemap.fs_tau},
                    {"epsilon", cfg.bonemap.epsilon},
                    {"sigma0", cfg.bonemap.sigma0}};
    j["network"] = {{"k", cfg.network.K},
                    {"in_channels", cfg.network.in_channels},
                    {"heatmap_sigma", cfg.network.heatmap_sigma},
                    {"reconstruct_all_channels", cfg.network.reconstruct_all_channels}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"learning_rate", cfg.train.learning_rate},
                  {"lr_decay", cfg.train.lr_decay},
                  {"lr_decay_every", cfg.train.lr_decay_every},
                  {"batch_size", cfg.train.batch_size},
                  {"train_pairs", cfg.train.train_pairs},
                  {"val_pairs", cfg.train.val_pairs},
                  {"pair_separation", cfg.train.pair_separation},
                  {"seed", cfg.train.seed}};
    json ph = {{"size", cfg.phantom.size},
               {"frames", cfg.phantom.frames},
               {"bone_depth", cfg.phantom.bone_depth},
               {"bone_curvature", cfg.phantom.bone_curvature},
               {"bone_brightness", cfg.phantom.bone_brightness},
               {"shadow_attenuation", cfg.phantom.shadow_attenuation},
               {"speckle_grain", cfg.phantom.speckle_grain},
               {"drift_amplitude", cfg.phantom.drift_amplitude},
               {"seed", cfg.phantom.seed}};
    if (cfg.phantom.fracture) {
        ph["fracture"] = {{"column", cfg.phantom.fracture->column},
                          {"gap_width", cfg.phantom.fracture->gap_width},
                          {"step", cfg.phantom.fracture->step}};
    } else {
        ph["fracture"] = nullptr;
    }
    j["phantom"] = std::move(ph);
    return j.dump(2) + "\n";
}

}  // namespace usbone
