#include "usbone/nn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "usbone/image.hpp"
#include "usbone/rng.hpp"

namespace usbone::nn {
namespace {

constexpr int kEncoderWidths[6] = {32, 32, 64, 64, 128, 128};
constexpr int kEncoderStrides[6] = {1, 1, 2, 1, 2, 1};
// Decoder block output widths; the final width is the reconstruction
// channel count and is patched by spec.reconstruct_all_channels.
constexpr int kDecoderWidths[6] = {128, 64, 64, 32, 32, 1};

void register_conv(ParamStore& store, const std::string& prefix, int cin, int cout, int k,
                   bool with_bn) {
    store.add(prefix + ".w", cout, cin, k, k);
    store.add(prefix + ".b", 1, cout, 1, 1);
    if (with_bn) {
        store.add(prefix + ".bn.gamma", 1, cout, 1, 1);
        store.add(prefix + ".bn.beta", 1, cout, 1, 1);
        store.add(prefix + ".bn.rmean", 1, cout, 1, 1, false);
        store.add(prefix + ".bn.rvar", 1, cout, 1, 1, false);
    }
}

// conv -> ReLU -> batch norm.
TensorPtr conv_block(Tape* tape, const ParamStore& store, const std::string& prefix,
                     const TensorPtr& x, int stride, bool training) {
    auto y = conv2d(tape, x, store.get(prefix + ".w"), store.get(prefix + ".b"), stride, 1);
    y = relu(tape, y);
    return batchnorm(tape, y, store.get(prefix + ".bn.gamma"), store.get(prefix + ".bn.beta"),
                     store.get(prefix + ".bn.rmean"), store.get(prefix + ".bn.rvar"), training);
}

TensorPtr encoder_forward(Tape* tape, const ParamStore& store, const std::string& net,
                          const TensorPtr& x, bool training) {
    TensorPtr h = x;
    for (int b = 0; b < 6; ++b) {
        h = conv_block(tape, store, net + ".b" + std::to_string(b), h, kEncoderStrides[b],
                       training);
    }
    return h;
}

}  // namespace

TensorPtr ParamStore::add(const std::string& name, int n, int c, int h, int w,
                          bool requires_grad) {
    if (has(name)) throw ArgumentError("ParamStore: duplicate name " + name);
    auto t = Tensor::create(n, c, h, w, requires_grad);
    items_.emplace_back(name, t);
    return t;
}

TensorPtr ParamStore::get(const std::string& name) const {
    for (const auto& [k, t] : items_) {
        if (k == name) return t;
    }
    throw ArgumentError("ParamStore: missing parameter " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [k, t] : items_) {
        if (k == name) return true;
    }
    return false;
}

std::vector<TensorPtr> ParamStore::trainable() const {
    std::vector<TensorPtr> out;
    for (const auto& [k, t] : items_) {
        if (t->requires_grad) out.push_back(t);
    }
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [k, t] : items_) {
        if (t->requires_grad) t->zero_grad();
    }
}

void init_params(ParamStore& store, const NetworkSpec& spec, std::uint64_t seed) {
    const int out_ch = spec.reconstruct_all_channels ? spec.in_channels : 1;

    int cin = spec.in_channels;
    for (int b = 0; b < 6; ++b) {
        register_conv(store, "ffcnn.b" + std::to_string(b), cin, kEncoderWidths[b], 3, true);
        cin = kEncoderWidths[b];
    }
    cin = spec.in_channels;
    for (int b = 0; b < 6; ++b) {
        register_conv(store, "keynet.b" + std::to_string(b), cin, kEncoderWidths[b], 3, true);
        cin = kEncoderWidths[b];
    }
    register_conv(store, "keynet.head", kEncoderWidths[5], spec.K, 1, false);
    cin = kEncoderWidths[5];
    for (int b = 0; b < 6; ++b) {
        const int cout = (b == 5) ? out_ch : kDecoderWidths[b];
        register_conv(store, "refine.b" + std::to_string(b), cin, cout, 3, b < 5);
        cin = cout;
    }

    rng::Engine eng(rng::derive_seed(seed, 0x1417));
    for (auto& [name, t] : store.items()) {
        if (name.ends_with(".w")) {
            const int fan_in = t->c * t->h * t->w;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : t->v) v = eng.next_uniform(-bound, bound);
        } else if (name.ends_with(".bn.gamma") || name.ends_with(".bn.rvar")) {
            std::fill(t->v.begin(), t->v.end(), 1.0);
        }
        // Biases, bn.beta, bn.rmean stay zero.
    }
}

TensorPtr ffcnn_forward(Tape* tape, const ParamStore& store, const TensorPtr& x, bool training) {
    return encoder_forward(tape, store, "ffcnn", x, training);
}

std::pair<TensorPtr, TensorPtr> keynet_forward(Tape* tape, const ParamStore& store,
                                               const TensorPtr& x, const NetworkSpec& spec,
                                               bool training) {
    auto h = encoder_forward(tape, store, "keynet", x, training);
    auto raw = conv2d(tape, h, store.get("keynet.head.w"), store.get("keynet.head.b"), 1, 0);
    auto coords = spatial_softmax_coords(tape, raw);
    auto heat = render_gaussians(tape, coords, raw->h, raw->w, spec.heatmap_sigma);
    return {coords, heat};
}

TensorPtr refinenet_forward(Tape* tape, const ParamStore& store, const TensorPtr& psi_hat,
                            bool training) {
    TensorPtr h = psi_hat;
    for (int b = 0; b < 5; ++b) {
        h = conv_block(tape, store, "refine.b" + std::to_string(b), h, 1, training);
        if (b == 1 || b == 3) h = upsample_nearest2x(tape, h);
    }
    h = conv2d(tape, h, store.get("refine.b5.w"), store.get("refine.b5.b"), 1, 1);
    return sigmoid(tape, h);
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    auto u32 = [&out](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    out.write("USTP", 4);
    u32(1);
    for (const auto& [name, t] : store.items()) {
        u32(static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        u32(4);
        u32(static_cast<std::uint32_t>(t->n));
        u32(static_cast<std::uint32_t>(t->c));
        u32(static_cast<std::uint32_t>(t->h));
        u32(static_cast<std::uint32_t>(t->w));
        std::vector<float> buf(t->size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t->v[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write to checkpoint " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    auto u32 = [&in]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw FormatError("truncated checkpoint");
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "USTP", 4) != 0) {
        throw FormatError("bad checkpoint magic in " + path);
    }
    const std::uint32_t version = u32();
    if (version != 1) throw FormatError("unsupported checkpoint version");

    while (true) {
        std::uint32_t name_len;
        {
            unsigned char b[4];
            in.read(reinterpret_cast<char*>(b), 4);
            if (in.gcount() == 0) break;  // clean EOF
            if (in.gcount() != 4) throw FormatError("truncated checkpoint record");
            name_len = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                       (static_cast<std::uint32_t>(b[2]) << 16) |
                       (static_cast<std::uint32_t>(b[3]) << 24);
        }
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw FormatError("truncated checkpoint name");
        const std::uint32_t rank = u32();
        if (rank != 4) throw FormatError("unsupported tensor rank in checkpoint");
        std::uint32_t dims[4];
        for (auto& d : dims) d = u32();
        const size_t count =
            static_cast<size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw FormatError("truncated checkpoint data for " + name);

        auto t = store.get(name);
        if (t->n != static_cast<int>(dims[0]) || t->c != static_cast<int>(dims[1]) ||
            t->h != static_cast<int>(dims[2]) || t->w != static_cast<int>(dims[3])) {
            throw FormatError("shape mismatch for parameter " + name);
        }
        for (size_t i = 0; i < count; ++i) t->v[i] = buf[i];
    }
}

}  // namespace usbone::nn
