#include "fsfg/backbone.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace fsfg {

using ad::Var;
using json = nlohmann::json;

Architecture architecture_from_string(const std::string& s) {
    if (s == "conv64") return Architecture::conv64;
    if (s == "resnet12") return Architecture::resnet12;
    if (s == "resnet18-like") return Architecture::resnet18_like;
    if (s == "tiny-test") return Architecture::tiny_test;
    throw std::invalid_argument("unknown architecture: " + s);
}

std::string architecture_to_string(Architecture a) {
    switch (a) {
        case Architecture::conv64: return "conv64";
        case Architecture::resnet12: return "resnet12";
        case Architecture::resnet18_like: return "resnet18-like";
        case Architecture::tiny_test: return "tiny-test";
    }
    throw std::logic_error("bad architecture enum");
}

namespace {

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

struct ShapeWalk {
    int channels, spatial;
};

ShapeWalk walk_shapes(const BackboneConfig& cfg) {
    int s = cfg.input_size;
    switch (cfg.architecture) {
        case Architecture::tiny_test:
            s = conv_out(s, 3, 2, 1) / 2;  // conv s2 + pool
            s = conv_out(s, 3, 2, 1) / 2;
            return {8, s};
        case Architecture::conv64:
            s = s / 2;  // block1 pool
            s = s / 2;  // block2 pool
            s = s / 2;  // block3 pool
            if (!cfg.drop_last_pool) s = s / 2;
            return {64, s};
        case Architecture::resnet12:
            s = conv_out(s, 3, 2, 1);  // block strides 2,2,2,(1|2)
            s = conv_out(s, 3, 2, 1);
            s = conv_out(s, 3, 2, 1);
            if (!cfg.drop_last_pool) s = conv_out(s, 3, 2, 1);
            return {512, s};
        case Architecture::resnet18_like:
            s = conv_out(s, 3, 2, 1);  // stem s2
            s = conv_out(s, 3, 2, 1);  // stage2 s2
            s = conv_out(s, 3, 2, 1);  // stage3 s2
            if (!cfg.drop_last_pool) s = conv_out(s, 3, 2, 1);
            return {512, s};
    }
    throw std::logic_error("bad architecture enum");
}

class Init {
public:
    explicit Init(std::uint64_t seed) : rng_(seed) {}

    Eigen::ArrayXd he_normal(std::size_t n, std::size_t fan_in) {
        std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Eigen::ArrayXd out(n);
        for (auto& v : out) v = d(rng_);
        return out;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace

int BackboneConfig::output_channels() const { return walk_shapes(*this).channels; }
int BackboneConfig::output_spatial() const { return walk_shapes(*this).spatial; }

ClassifierHead make_head(int num_classes, int feat_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(static_cast<double>(feat_dim)));
    Eigen::ArrayXd w(static_cast<std::size_t>(num_classes) * feat_dim);
    for (auto& v : w) v = d(rng);
    return {num_classes, feat_dim,
            ad::leaf({static_cast<std::size_t>(num_classes), static_cast<std::size_t>(feat_dim)},
                     std::move(w))};
}

ad::Var classify_global(const ad::Var& feature_map, const ClassifierHead& head) {
    if (feature_map->shape.size() != 3 ||
        feature_map->shape[0] != static_cast<std::size_t>(head.feat_dim))
        throw std::invalid_argument("classify_global: head/feature channel mismatch");
    return ad::matvec(head.weights, ad::gap(feature_map));
}

Backbone::Backbone(BackboneConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    Init init(seed ^ 0x5f5fULL);
    auto add_conv = [&](const std::string& name, int out_c, int in_c, int k) {
        const std::size_t n = static_cast<std::size_t>(out_c) * in_c * k * k;
        params_[name + ".w"] = ad::leaf({static_cast<std::size_t>(out_c),
                                         static_cast<std::size_t>(in_c),
                                         static_cast<std::size_t>(k),
                                         static_cast<std::size_t>(k)},
                                        init.he_normal(n, static_cast<std::size_t>(in_c) * k * k));
        params_[name + ".b"] =
            ad::leaf({static_cast<std::size_t>(out_c)}, Eigen::ArrayXd::Zero(out_c));
        params_[name + ".g"] =
            ad::leaf({static_cast<std::size_t>(out_c)}, Eigen::ArrayXd::Ones(out_c));
        params_[name + ".beta"] =
            ad::leaf({static_cast<std::size_t>(out_c)}, Eigen::ArrayXd::Zero(out_c));
    };

    switch (cfg_.architecture) {
        case Architecture::tiny_test:
            add_conv("conv1", 8, 3, 3);
            add_conv("conv2", 8, 8, 3);
            break;
        case Architecture::conv64:
            for (int b = 1; b <= 4; ++b)
                add_conv("block" + std::to_string(b), 64, b == 1 ? 3 : 64, 3);
            break;
        case Architecture::resnet12: {
            const int filters[4] = {64, 128, 256, 512};
            int in_c = 3;
            for (int b = 0; b < 4; ++b) {
                const std::string p = "block" + std::to_string(b + 1);
                add_conv(p + ".conv1", filters[b], in_c, 3);
                add_conv(p + ".conv2", filters[b], filters[b], 3);
                add_conv(p + ".conv3", filters[b], filters[b], 3);
                add_conv(p + ".skip", filters[b], in_c, 1);
                in_c = filters[b];
            }
            break;
        }
        case Architecture::resnet18_like: {
            add_conv("stem", 64, 3, 3);
            const int filters[4] = {64, 128, 256, 512};
            int in_c = 64;
            for (int st = 0; st < 4; ++st)
                for (int blk = 0; blk < 2; ++blk) {
                    const std::string p =
                        "stage" + std::to_string(st + 1) + ".block" + std::to_string(blk + 1);
                    add_conv(p + ".conv1", filters[st], blk == 0 ? in_c : filters[st], 3);
                    add_conv(p + ".conv2", filters[st], filters[st], 3);
                    if (blk == 0) add_conv(p + ".skip", filters[st], in_c, 1);
                    if (blk == 1) in_c = filters[st];
                }
            break;
        }
    }
}

namespace {

Var image_to_var(const Image& img) {
    const std::size_t H = img.height, W = img.width;
    Eigen::ArrayXd x(3 * H * W);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                x((c * H + i) * W + j) = img.at(static_cast<int>(i), static_cast<int>(j),
                                                static_cast<int>(c));
    return ad::constant({3, H, W}, std::move(x));
}

}  // namespace

ad::Var Backbone::forward(const ad::Var& x) const {
    auto P = [&](const std::string& n) -> const Var& {
        auto it = params_.find(n);
        if (it == params_.end()) throw std::logic_error("missing parameter " + n);
        return it->second;
    };
    auto cn = [&](const Var& v, const std::string& p) {
        return ad::channel_norm(v, P(p + ".g"), P(p + ".beta"));
    };
    auto conv = [&](const Var& v, const std::string& p, int stride, int pad) {
        return ad::conv2d(v, P(p + ".w"), P(p + ".b"), stride, pad);
    };
    auto conv_block = [&](const Var& v, const std::string& p, int stride, bool pool) {
        Var y = ad::relu(cn(conv(v, p, stride, 1), p));
        return pool ? ad::maxpool2(y) : y;
    };
    auto res12_block = [&](const Var& v, const std::string& p, int stride) {
        Var y = ad::relu(cn(conv(v, p + ".conv1", stride, 1), p + ".conv1"));
        y = ad::relu(cn(conv(y, p + ".conv2", 1, 1), p + ".conv2"));
        y = cn(conv(y, p + ".conv3", 1, 1), p + ".conv3");
        Var skip = cn(conv(v, p + ".skip", stride, 0), p + ".skip");
        return ad::relu(ad::add(y, skip));
    };
    auto res18_block = [&](const Var& v, const std::string& p, int stride, bool project) {
        Var y = ad::relu(cn(conv(v, p + ".conv1", stride, 1), p + ".conv1"));
        y = cn(conv(y, p + ".conv2", 1, 1), p + ".conv2");
        Var skip = project ? cn(conv(v, p + ".skip", stride, 0), p + ".skip") : v;
        return ad::relu(ad::add(y, skip));
    };

    switch (cfg_.architecture) {
        case Architecture::tiny_test:
            return conv_block(conv_block(x, "conv1", 2, true), "conv2", 2, true);
        case Architecture::conv64: {
            Var y = x;
            for (int b = 1; b <= 4; ++b) {
                const bool pool = b < 4 || !cfg_.drop_last_pool;
                y = conv_block(y, "block" + std::to_string(b), 1, pool);
            }
            return y;
        }
        case Architecture::resnet12: {
            Var y = x;
            for (int b = 1; b <= 4; ++b) {
                const int stride = (b < 4 || !cfg_.drop_last_pool) ? 2 : 1;
                y = res12_block(y, "block" + std::to_string(b), stride);
            }
            return y;
        }
        case Architecture::resnet18_like: {
            Var y = conv_block(x, "stem", 2, false);
            const int strides[4] = {1, 2, 2, cfg_.drop_last_pool ? 1 : 2};
            for (int st = 0; st < 4; ++st) {
                const std::string p = "stage" + std::to_string(st + 1);
                y = res18_block(y, p + ".block1", strides[st], true);
                y = res18_block(y, p + ".block2", 1, false);
            }
            return y;
        }
    }
    throw std::logic_error("bad architecture enum");
}

ad::Var Backbone::extract(const Image& img) const {
    if (img.height != cfg_.input_size || img.width != cfg_.input_size)
        throw std::invalid_argument(
            "extract: input is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
            ", expected " + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size));
    return forward(image_to_var(img));
}

FeatureArray Backbone::extract_values(const Image& img) const {
    return to_feature_array(extract(img));
}

FeatureArray to_feature_array(const ad::Var& f) {
    if (f->shape.size() != 3) throw std::invalid_argument("to_feature_array: not a (c,h,w) var");
    FeatureArray out(static_cast<int>(f->shape[0]), static_cast<int>(f->shape[1]),
                     static_cast<int>(f->shape[2]));
    out.values = f->value;
    return out;
}

// ---- checkpoint I/O ----

static constexpr char kMagic[9] = "FSFGCKP1";

void save_checkpoint(const std::string& path, const BackboneConfig& cfg,
                     const std::map<std::string, ad::Var>& named_params) {
    json header;
    header["config"] = {{"architecture", architecture_to_string(cfg.architecture)},
                        {"input_size", cfg.input_size},
                        {"drop_last_pool", cfg.drop_last_pool}};
    json tensors = json::array();
    for (const auto& [name, v] : named_params)
        tensors.push_back({{"name", name}, {"shape", v->shape}});
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, v] : named_params)
        out.write(reinterpret_cast<const char*>(v->value.data()),
                  static_cast<std::streamsize>(v->value.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);

    Checkpoint ck;
    ck.config.architecture = architecture_from_string(header["config"]["architecture"]);
    ck.config.input_size = header["config"]["input_size"];
    ck.config.drop_last_pool = header["config"]["drop_last_pool"];
    for (const auto& t : header["tensors"]) {
        std::vector<std::size_t> shape = t["shape"].get<std::vector<std::size_t>>();
        Eigen::ArrayXd data(static_cast<Eigen::Index>(ad::shape_numel(shape)));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        ck.tensors[t["name"]] = std::move(data);
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return ck;
}

}  // namespace fsfg
