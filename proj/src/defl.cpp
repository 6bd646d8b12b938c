#include "attrib/defl.hpp"

#include <cmath>
#include <map>

#include <json.hpp>

#include "attrib/error.hpp"
#include "attrib/rng.hpp"

namespace attrib {

using nlohmann::json;
using tg::Shape;
using tg::Tensor;
using tg::Var;

std::string_view to_string(DcbInit init) { return init == DcbInit::Mhf ? "mhf" : "random"; }

DcbInit dcb_init_from_string(std::string_view s) {
    if (s == "mhf") return DcbInit::Mhf;
    if (s == "random") return DcbInit::Random;
    throw ConfigError("unknown dcb_init '" + std::string(s) + "' (expected mhf or random)");
}

void DeflConfig::validate() const {
    if (levels != kNumParts) throw ConfigError("levels must be 4, got " + std::to_string(levels));
    if (filters_per_block != kPartSize)
        throw ConfigError("filters_per_block must be 64, got " + std::to_string(filters_per_block));
    if (input_channels == 0) throw ConfigError("input_channels must be positive");
    if (fingerprint_dim < 2) throw ConfigError("fingerprint_dim must be at least 2");
    if (hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
    if (!directional && semantic_dim == 0) throw ConfigError("a fingerprint needs directional or semantic input");
}

std::string defl_config_to_json(const DeflConfig& c) {
    json j{{"levels", c.levels},
           {"filters_per_block", c.filters_per_block},
           {"input_channels", c.input_channels},
           {"pool_between_levels", c.pool_between_levels},
           {"fingerprint_dim", c.fingerprint_dim},
           {"hidden_dim", c.hidden_dim},
           {"semantic_dim", c.semantic_dim},
           {"init_seed", c.init_seed},
           {"dcb_init", std::string(to_string(c.dcb_init))},
           {"directional", c.directional},
           {"classifier_classes", c.classifier_classes}};
    return j.dump(2);
}

DeflConfig defl_config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    DeflConfig c;
    try {
        c.levels = j.at("levels").get<std::size_t>();
        c.filters_per_block = j.at("filters_per_block").get<std::size_t>();
        c.input_channels = j.at("input_channels").get<std::size_t>();
        c.pool_between_levels = j.at("pool_between_levels").get<bool>();
        c.fingerprint_dim = j.at("fingerprint_dim").get<std::size_t>();
        c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        c.semantic_dim = j.at("semantic_dim").get<std::size_t>();
        c.init_seed = j.at("init_seed").get<std::uint64_t>();
        c.dcb_init = dcb_init_from_string(j.at("dcb_init").get<std::string>());
        c.directional = j.at("directional").get<bool>();
        c.classifier_classes = j.at("classifier_classes").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::uint64_t seed, std::string_view name) {
    Rng rng(hash_seed(seed, fnv1a(name)));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.storage()) v = static_cast<T>(stddev * rng.normal());
    return t;
}

template <typename T>
Var<T> param(Tensor<T> t) {
    return Var<T>::leaf(std::move(t), true);
}

template <typename T>
ConvBlock<T> make_block(std::size_t filters, std::size_t in_ch) {
    ConvBlock<T> b;
    b.gamma = param(Tensor<T>(Shape{filters}, T(1)));
    b.beta = param(Tensor<T>(Shape{filters}, T(0)));
    b.bn = tg::BatchNormState<T>(filters);
    (void)in_ch;
    return b;
}

std::string level_prefix(std::size_t level, const char* block) {
    return "level" + std::to_string(level + 1) + "." + block;
}

}  // namespace

template <typename T>
DeflModel<T> init_defl(const DeflConfig& config, const Partition& partition, const FilterBank& bank) {
    config.validate();
    for (std::size_t p = 0; p < kNumParts; ++p)
        if (partition.parts[p].size() != config.filters_per_block)
            throw ConfigError("partition part " + std::to_string(p + 1) + " has " +
                              std::to_string(partition.parts[p].size()) + " filters, expected " +
                              std::to_string(config.filters_per_block));

    DeflModel<T> m;
    m.config_ = config;
    m.partition_ = partition;
    const std::size_t F = config.filters_per_block;

    if (config.directional) {
        for (std::size_t l = 0; l < config.levels; ++l) {
            const std::size_t cin = config.level_input_channels(l);
            const double he = std::sqrt(2.0 / static_cast<double>(cin * 9));
            const Shape wshape{F, cin, 3, 3};

            ConvBlock<T> dcb = make_block<T>(F, cin);
            const std::string dname = level_prefix(l, "dcb") + ".weight";
            if (config.dcb_init == DcbInit::Mhf) {
                Tensor<T> w(wshape);
                const T scale = T(1) / static_cast<T>(cin);
                for (std::size_t k = 0; k < F; ++k) {
                    const Kernel3& kern = bank.by_id(partition.parts[l][k]);
                    for (std::size_t c = 0; c < cin; ++c)
                        for (std::size_t r = 0; r < 3; ++r)
                            for (std::size_t q = 0; q < 3; ++q)
                                w.at({k, c, r, q}) = static_cast<T>(kern.coeffs[r][q]) * scale;
                }
                dcb.weight = param(std::move(w));
            } else {
                dcb.weight = param(normal_tensor<T>(wshape, he, config.init_seed, dname));
            }
            m.dcb_.push_back(std::move(dcb));

            ConvBlock<T> scb = make_block<T>(F, cin);
            const std::string sname = level_prefix(l, "scb") + ".weight";
            scb.weight = param(normal_tensor<T>(wshape, he, config.init_seed, sname));
            m.scb_.push_back(std::move(scb));
        }
    }

    const std::size_t fused = (config.directional ? config.feature_channels() : 0) + config.semantic_dim;
    const std::size_t H = config.hidden_dim, D = config.fingerprint_dim;
    m.fc1_w_ = param(normal_tensor<T>(Shape{H, fused}, std::sqrt(2.0 / static_cast<double>(fused)), config.init_seed,
                                      "fusion.fc1.weight"));
    m.fc1_b_ = param(Tensor<T>(Shape{H}, T(0)));
    m.fc2_w_ = param(normal_tensor<T>(Shape{D, H}, std::sqrt(1.0 / static_cast<double>(H)), config.init_seed,
                                      "fusion.fc2.weight"));
    m.fc2_b_ = param(Tensor<T>(Shape{D}, T(0)));
    if (config.classifier_classes > 0) {
        m.head_w_ = param(normal_tensor<T>(Shape{config.classifier_classes, D},
                                           std::sqrt(1.0 / static_cast<double>(D)), config.init_seed, "head.weight"));
        m.head_b_ = param(Tensor<T>(Shape{config.classifier_classes}, T(0)));
    }
    return m;
}

template <typename T>
Var<T> DeflModel<T>::block(ConvBlock<T>& b, const Var<T>& x, bool train) {
    return tg::relu(tg::batchnorm(tg::conv2d(x, b.weight), b.gamma, b.beta, b.bn, train));
}

template <typename T>
Var<T> DeflModel<T>::forward_defl(const Var<T>& images, bool train) {
    if (!config_.directional) throw UsageError("forward_defl: directional features are disabled in this model");
    const Shape& s = images.shape();
    if (s.size() != 4) throw DimensionError("forward_defl: images must be [N,C,H,W], got " + tg::shape_str(s));
    if (s[1] != config_.input_channels)
        throw DimensionError("forward_defl: expected " + std::to_string(config_.input_channels) +
                             " input channels, got " + std::to_string(s[1]));
    const std::size_t div = config_.pool_between_levels ? (std::size_t{1} << (config_.levels - 1)) : 1;
    if (s[2] == 0 || s[3] == 0 || s[2] % div != 0 || s[3] % div != 0)
        throw DimensionError("forward_defl: spatial size " + tg::shape_str(s) + " is not divisible by " +
                             std::to_string(div));

    Var<T> x = images;
    for (std::size_t l = 0; l < config_.levels; ++l) {
        Var<T> d = block(dcb_[l], x, train);
        Var<T> r = block(scb_[l], x, train);
        x = tg::concat_channels<T>({d, r});
        if (config_.pool_between_levels && l + 1 < config_.levels) x = tg::avgpool2x2(x);
    }
    return x;
}

template <typename T>
Var<T> DeflModel<T>::fingerprint(const Var<T>& images, const Var<T>& semantic, bool train) {
    const Shape& ss = semantic.shape();
    if (ss.size() != 2 || ss[1] != config_.semantic_dim)
        throw DimensionError("fingerprint: semantic features must be [N," + std::to_string(config_.semantic_dim) +
                             "], got " + tg::shape_str(ss));
    Var<T> fused = semantic;
    if (config_.directional) {
        if (images.shape().empty() || images.shape()[0] != ss[0])
            throw DimensionError("fingerprint: " + std::to_string(ss[0]) + " semantic rows for image batch " +
                                 tg::shape_str(images.shape()));
        Var<T> pooled = tg::global_avgpool(forward_defl(images, train));
        fused = ss[1] > 0 ? tg::concat_channels<T>({pooled, semantic}) : pooled;
    }
    Var<T> h = tg::relu(tg::linear(fused, fc1_w_, &fc1_b_));
    return tg::linear(h, fc2_w_, &fc2_b_);
}

template <typename T>
Var<T> DeflModel<T>::classify_logits(const Var<T>& fingerprints) const {
    if (config_.classifier_classes == 0) throw UsageError("model has no classification head");
    return tg::linear(fingerprints, head_w_, &head_b_);
}

template <typename T>
std::vector<tg::Parameter<T>> DeflModel<T>::parameters() const {
    std::vector<tg::Parameter<T>> out;
    for (std::size_t l = 0; l < dcb_.size(); ++l) {
        for (const char* kind : {"dcb", "scb"}) {
            const ConvBlock<T>& b = std::string_view(kind) == "dcb" ? dcb_[l] : scb_[l];
            const std::string p = level_prefix(l, kind);
            out.push_back({p + ".weight", b.weight});
            out.push_back({p + ".bn.gamma", b.gamma});
            out.push_back({p + ".bn.beta", b.beta});
        }
    }
    out.push_back({"fusion.fc1.weight", fc1_w_});
    out.push_back({"fusion.fc1.bias", fc1_b_});
    out.push_back({"fusion.fc2.weight", fc2_w_});
    out.push_back({"fusion.fc2.bias", fc2_b_});
    if (head_w_.defined()) {
        out.push_back({"head.weight", head_w_});
        out.push_back({"head.bias", head_b_});
    }
    return out;
}

template <typename T>
std::vector<tg::NamedTensor> DeflModel<T>::state() const {
    std::vector<tg::NamedTensor> out;
    for (const auto& p : parameters()) out.push_back({p.name, p.var.value().template cast<float>()});
    for (std::size_t l = 0; l < dcb_.size(); ++l) {
        for (const char* kind : {"dcb", "scb"}) {
            const ConvBlock<T>& b = std::string_view(kind) == "dcb" ? dcb_[l] : scb_[l];
            const std::string p = level_prefix(l, kind);
            out.push_back({p + ".bn.running_mean", b.bn.running_mean.template cast<float>()});
            out.push_back({p + ".bn.running_var", b.bn.running_var.template cast<float>()});
        }
    }
    return out;
}

template <typename T>
void DeflModel<T>::load_state(const std::vector<tg::NamedTensor>& entries) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e.tensor;
    auto assign = [&](const std::string& name, Tensor<T>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint lacks entry '" + name + "'");
        if (it->second->shape() != dst.shape())
            throw FormatError("checkpoint entry '" + name + "' has shape " + tg::shape_str(it->second->shape()) +
                              ", model expects " + tg::shape_str(dst.shape()));
        dst = it->second->template cast<T>();
        by_name.erase(it);
    };
    for (auto& p : parameters()) {
        Var<T> v = p.var;
        assign(p.name, v.value());
    }
    for (std::size_t l = 0; l < dcb_.size(); ++l) {
        for (const char* kind : {"dcb", "scb"}) {
            ConvBlock<T>& b = std::string_view(kind) == "dcb" ? dcb_[l] : scb_[l];
            const std::string p = level_prefix(l, kind);
            assign(p + ".bn.running_mean", b.bn.running_mean);
            assign(p + ".bn.running_var", b.bn.running_var);
        }
    }
    if (!by_name.empty()) throw FormatError("checkpoint has unexpected entry '" + by_name.begin()->first + "'");
}

template class DeflModel<float>;
template class DeflModel<double>;
template DeflModel<float> init_defl<float>(const DeflConfig&, const Partition&, const FilterBank&);
template DeflModel<double> init_defl<double>(const DeflConfig&, const Partition&, const FilterBank&);

}  // namespace attrib
