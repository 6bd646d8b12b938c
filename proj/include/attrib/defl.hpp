#pragma once

// Directional enhanced feature learning network: four levels, each holding a
// directional block (seeded from a partition of the high-pass filter bank)
// and a standard block (random init), followed by a small fusion head that
// turns pooled directional features plus semantic features into a
// fingerprint vector.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "attrib/checkpoint.hpp"
#include "attrib/filterbank.hpp"
#include "attrib/tensor.hpp"

namespace attrib {

enum class DcbInit { Mhf, Random };

std::string_view to_string(DcbInit init);
DcbInit dcb_init_from_string(std::string_view s);

struct DeflConfig {
    std::size_t levels = 4;
    std::size_t filters_per_block = 64;
    std::size_t input_channels = 1;
    bool pool_between_levels = true;
    std::size_t fingerprint_dim = 128;
    std::size_t hidden_dim = 256;
    std::size_t semantic_dim = 104;
    std::uint64_t init_seed = 0;
    DcbInit dcb_init = DcbInit::Mhf;
    // false drops the convolutional stack; the fingerprint then comes from
    // the semantic features alone.
    bool directional = true;
    // > 0 attaches a softmax classification head with this many classes.
    std::size_t classifier_classes = 0;

    std::size_t feature_channels() const { return 2 * filters_per_block; }
    std::size_t level_input_channels(std::size_t level) const {
        return level == 0 ? input_channels : feature_channels();
    }

    void validate() const;
    bool operator==(const DeflConfig&) const = default;
};

std::string defl_config_to_json(const DeflConfig& cfg);
DeflConfig defl_config_from_json(std::string_view text);

template <typename T>
struct ConvBlock {
    tg::Var<T> weight;  // [64, C_in, 3, 3], no bias (batch norm follows)
    tg::Var<T> gamma;
    tg::Var<T> beta;
    tg::BatchNormState<T> bn;
};

template <typename T>
class DeflModel {
public:
    const DeflConfig& config() const { return config_; }
    const Partition& partition() const { return partition_; }

    std::size_t num_levels() const { return dcb_.size(); }
    const ConvBlock<T>& dcb(std::size_t level) const { return dcb_.at(level); }
    const ConvBlock<T>& scb(std::size_t level) const { return scb_.at(level); }

    // images [N,C,H,W] -> [N,128,H/8,W/8] (pooling enabled).
    tg::Var<T> forward_defl(const tg::Var<T>& images, bool train);

    // images [N,C,H,W], semantic [N,S] -> fingerprints [N,D].
    tg::Var<T> fingerprint(const tg::Var<T>& images, const tg::Var<T>& semantic, bool train);

    // Softmax-head logits for fingerprints [N,D]; requires classifier_classes > 0.
    tg::Var<T> classify_logits(const tg::Var<T>& fingerprints) const;

    std::vector<tg::Parameter<T>> parameters() const;

    // Parameters and batch-norm running statistics, stored as 32-bit floats.
    std::vector<tg::NamedTensor> state() const;
    void load_state(const std::vector<tg::NamedTensor>& entries);

private:
    template <typename U>
    friend DeflModel<U> init_defl(const DeflConfig&, const Partition&, const FilterBank&);

    tg::Var<T> block(ConvBlock<T>& b, const tg::Var<T>& x, bool train);

    DeflConfig config_;
    Partition partition_;
    std::vector<ConvBlock<T>> dcb_;
    std::vector<ConvBlock<T>> scb_;
    tg::Var<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
    tg::Var<T> head_w_, head_b_;
};

// Directional kernels: output channel k of level l is partition part l,
// filter k, replicated over input channels and scaled by 1/C_in.
template <typename T>
DeflModel<T> init_defl(const DeflConfig& config, const Partition& partition, const FilterBank& bank);

template <typename T>
DeflModel<T> init_defl(const DeflConfig& config, const Partition& partition) {
    return init_defl<T>(config, partition, build_mhf_set());
}

}  // namespace attrib
