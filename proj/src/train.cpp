#include "usbone/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <unordered_map>

#include "usbone/rng.hpp"

namespace usbone {
namespace {

struct PairIdx {
    int video;
    int source;
    int target;
};

std::vector<PairIdx> draw_pairs(const std::vector<VideoSequence>& dataset, int separation,
                                int count, std::uint64_t stream_seed) {
    rng::Engine eng(stream_seed);
    std::vector<PairIdx> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int v = static_cast<int>(eng.next_below(dataset.size()));
        const int span = static_cast<int>(dataset[v].frames.size()) - separation;
        const int t = static_cast<int>(eng.next_below(static_cast<std::uint64_t>(span)));
        out.push_back({v, t, t + separation});
    }
    return out;
}

// Per-(video,frame) flattened [C,H,W] stack values, computed once.
class StackCache {
public:
    StackCache(const std::vector<VideoSequence>& dataset, const BoneMapConfig& bm,
               const TgaConfig& tga)
        : dataset_(dataset), bm_(bm), tga_(tga) {}

    const std::vector<double>& get(int video, int frame) {
        const std::uint64_t key = (static_cast<std::uint64_t>(video) << 32) |
                                  static_cast<std::uint32_t>(frame);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const Frame tga_frame = apply_tga(dataset_[video].frames[frame], tga_);
        const ScaleStack stack = build_scale_stack(tga_frame, bm_);
        std::vector<double> flat;
        flat.reserve(stack.channels.size() * tga_frame.size());
        for (const auto& ch : stack.channels) {
            for (float v : ch.data) flat.push_back(v);
        }
        return cache_.emplace(key, std::move(flat)).first->second;
    }

private:
    const std::vector<VideoSequence>& dataset_;
    BoneMapConfig bm_;
    TgaConfig tga_;
    std::unordered_map<std::uint64_t, std::vector<double>> cache_;
};

nn::TensorPtr batch_tensor(StackCache& cache, const std::vector<PairIdx>& pairs,
                           const std::vector<int>& order, size_t begin, size_t end, bool source,
                           int channels, int h, int w) {
    const int b = static_cast<int>(end - begin);
    auto t = nn::Tensor::create(b, channels, h, w, false);
    const size_t per = static_cast<size_t>(channels) * h * w;
    for (size_t i = begin; i < end; ++i) {
        const auto& p = pairs[order[i]];
        const auto& flat = cache.get(p.video, source ? p.source : p.target);
        std::copy(flat.begin(), flat.end(), t->v.begin() + (i - begin) * per);
    }
    return t;
}

// Reconstruction target: channel 0 of the target stack, or all channels.
nn::TensorPtr batch_target(const nn::TensorPtr& target_stack, bool all_channels) {
    if (all_channels) return target_stack;
    auto t = nn::Tensor::create(target_stack->n, 1, target_stack->h, target_stack->w, false);
    const size_t plane = target_stack->plane();
    for (int n = 0; n < target_stack->n; ++n) {
        std::copy(
            target_stack->v.begin() + static_cast<size_t>(n) * target_stack->c * plane,
            target_stack->v.begin() + static_cast<size_t>(n) * target_stack->c * plane + plane,
            t->v.begin() + static_cast<size_t>(n) * plane);
    }
    return t;
}

double forward_loss(nn::Tape* tape, const nn::ParamStore& store, const nn::NetworkSpec& spec,
                    const nn::TensorPtr& xs, const nn::TensorPtr& xt, bool training,
                    nn::TensorPtr* loss_out) {
    // Source passes carry no gradient; transport treats them as constants.
    auto psi_s = nn::ffcnn_forward(nullptr, store, xs, training);
    auto [coords_s, heat_s] = nn::keynet_forward(nullptr, store, xs, spec, training);
    auto h_s = nn::combine_heatmaps(nullptr, heat_s);

    auto psi_t = nn::ffcnn_forward(tape, store, xt, training);
    auto [coords_t, heat_t] = nn::keynet_forward(tape, store, xt, spec, training);
    auto h_t = nn::combine_heatmaps(tape, heat_t);

    auto psi_hat = nn::transport(tape, psi_s, psi_t, h_s, h_t);
    auto pred = nn::refinenet_forward(tape, store, psi_hat, training);
    auto target = batch_target(xt, spec.reconstruct_all_channels);
    auto loss = nn::mse_loss(tape, pred, target);
    if (loss_out) *loss_out = loss;
    return loss->v[0];
}

void write_metrics(const std::vector<EpochMetrics>& metrics, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write metrics " + path);
    out << metrics_to_jsonl(metrics);
}

}  // namespace

std::string metrics_to_jsonl(const std::vector<EpochMetrics>& metrics) {
    std::string out;
    char line[256];
    for (const auto& m : metrics) {
        std::snprintf(line, sizeof(line),
                      "{\"epoch\":%d,\"lr\":%.17g,\"train_loss\":%.17g,\"val_loss\":%.17g}\n",
                      m.epoch, m.lr, m.train_loss, m.val_loss);
        out += line;
    }
    return out;
}

std::vector<EpochMetrics> train(const std::vector<VideoSequence>& dataset, const TrainConfig& cfg,
                                const nn::NetworkSpec& spec, const BoneMapConfig& bonemap_cfg,
                                const TgaConfig& tga_cfg, nn::ParamStore& store,
                                const std::string& out_dir) {
    if (dataset.empty()) throw ArgumentError("train: empty dataset");
    for (const auto& v : dataset) {
        if (static_cast<int>(v.frames.size()) <= cfg.pair_separation) {
            throw ArgumentError("train: video too short for pair separation");
        }
    }
    if (cfg.batch_size < 2) throw ArgumentError("train: batch_size must be >= 2");
    if (spec.in_channels != static_cast<int>(bonemap_cfg.scales.size()) + 1) {
        throw ArgumentError("train: in_channels must equal 1 + |scales|");
    }
    const int h = dataset[0].frames[0].height;
    const int w = dataset[0].frames[0].width;

    StackCache cache(dataset, bonemap_cfg, tga_cfg);
    const auto train_pairs =
        draw_pairs(dataset, cfg.pair_separation, cfg.train_pairs, rng::derive_seed(cfg.seed, 1));
    const auto val_pairs =
        draw_pairs(dataset, cfg.pair_separation, cfg.val_pairs, rng::derive_seed(cfg.seed, 2));

    nn::Adam adam(store.trainable());
    std::vector<EpochMetrics> metrics;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    std::vector<int> order(cfg.train_pairs);
    std::vector<int> val_order(cfg.val_pairs);
    for (int i = 0; i < cfg.val_pairs; ++i) val_order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            nn::scheduled_lr(cfg.learning_rate, cfg.lr_decay, cfg.lr_decay_every, epoch);

        for (int i = 0; i < cfg.train_pairs; ++i) order[i] = i;
        rng::Engine shuffle_eng(rng::derive_seed(cfg.seed, 1000 + epoch));
        for (int i = cfg.train_pairs - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_eng.next_below(i + 1));
            std::swap(order[i], order[j]);
        }

        double train_sum = 0.0;
        int train_batches = 0;
        for (size_t begin = 0; begin < order.size();) {
            size_t end = std::min(begin + cfg.batch_size, order.size());
            // Batch normalization needs at least two samples; a trailing
            // singleton is dropped.
            if (end - begin < 2) break;
            auto xs = batch_tensor(cache, train_pairs, order, begin, end, true, spec.in_channels,
                                   h, w);
            auto xt = batch_tensor(cache, train_pairs, order, begin, end, false, spec.in_channels,
                                   h, w);
            nn::Tape tape;
            nn::TensorPtr loss;
            const double loss_v = forward_loss(&tape, store, spec, xs, xt, true, &loss);
            if (!std::isfinite(loss_v)) {
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            }
            store.zero_grad();
            loss->g[0] = 1.0;
            tape.backward();
            adam.step(lr);
            train_sum += loss_v;
            ++train_batches;
            begin = end;
        }

        double val_sum = 0.0;
        int val_batches = 0;
        for (size_t begin = 0; begin < val_order.size();) {
            size_t end = std::min(begin + cfg.batch_size, val_order.size());
            if (end - begin < 1) break;
            auto xs = batch_tensor(cache, val_pairs, val_order, begin, end, true,
                                   spec.in_channels, h, w);
            auto xt = batch_tensor(cache, val_pairs, val_order, begin, end, false,
                                   spec.in_channels, h, w);
            val_sum += forward_loss(nullptr, store, spec, xs, xt, false, nullptr);
            ++val_batches;
            begin = end;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        m.train_loss = train_batches ? train_sum / train_batches : 0.0;
        m.val_loss = val_batches ? val_sum / val_batches : 0.0;
        metrics.push_back(m);

        if (!out_dir.empty()) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.ustp", epoch);
            nn::save_checkpoint(store, (std::filesystem::path(out_dir) / name).string());
            write_metrics(metrics, (std::filesystem::path(out_dir) / "metrics.jsonl").string());
        }
    }

    if (!out_dir.empty()) {
        nn::save_checkpoint(store,
                            (std::filesystem::path(out_dir) / "checkpoint_last.ustp").string());
    }
    return metrics;
}

KeypointSet infer_keypoints(const Frame& frame, const nn::ParamStore& store,
                            const nn::NetworkSpec& spec, const BoneMapConfig& bonemap_cfg,
                            const TgaConfig& tga_cfg) {
    if (spec.in_channels != static_cast<int>(bonemap_cfg.scales.size()) + 1) {
        throw ArgumentError("infer_keypoints: in_channels must equal 1 + |scales|");
    }
    const Frame tga_frame = apply_tga(frame, tga_cfg);
    const ScaleStack stack = build_scale_stack(tga_frame, bonemap_cfg);
    auto x = nn::Tensor::create(1, spec.in_channels, frame.height, frame.width, false);
    size_t off = 0;
    for (const auto& ch : stack.channels) {
        for (float v : ch.data) x->v[off++] = v;
    }
    auto [coords, heat] = nn::keynet_forward(nullptr, store, x, spec, false);

    KeypointSet out;
    out.source_resolution = frame.height;
    out.coords.reserve(spec.K);
    for (int k = 0; k < spec.K; ++k) {
        out.coords.emplace_back(coords->v[static_cast<size_t>(k) * 2],
                                coords->v[static_cast<size_t>(k) * 2 + 1]);
    }
    return out;
}

}  // namespace usbone
