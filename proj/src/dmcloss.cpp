#include "attrib/dmcloss.hpp"

#include <map>

#include "attrib/error.hpp"

namespace attrib {

using tg::Node;
using tg::Tensor;
using tg::Var;

void PairLabels::validate() const {
    if (families.size() != class_ids.size())
        throw DimensionError("pair labels: " + std::to_string(class_ids.size()) + " class ids but " +
                             std::to_string(families.size()) + " families");
    std::map<int, Family> seen;
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        auto [it, fresh] = seen.emplace(class_ids[i], families[i]);
        if (!fresh && it->second != families[i])
            throw ValidationError("class " + std::to_string(class_ids[i]) + " appears under two families");
    }
}

void DMCConfig::validate() const {
    if (!(m1 > 0.0 && m1 < m2)) throw ConfigError("margins must satisfy 0 < m1 < m2");
}

namespace {

template <typename T>
Var<T> pair_loss(const Var<T>& fingerprints, const PairLabels& labels, double m1, double m2, bool dual) {
    labels.validate();
    const auto& s = fingerprints.shape();
    if (s.size() != 2) throw DimensionError("fingerprints must be [B,D], got " + tg::shape_str(s));
    const std::size_t B = s[0];
    if (B == 0) throw DimensionError("empty fingerprint batch");
    if (labels.size() != B)
        throw DimensionError("label length " + std::to_string(labels.size()) + " does not match batch " +
                             std::to_string(B));

    Var<T> d = tg::l2_distance_matrix(fingerprints);
    const T* dv = d.value().raw();
    const T inv = T(1) / static_cast<T>(B * B);

    // Per-pair coefficient of d in the active branch, and the constant term.
    std::vector<T> slope(B * B, T(0));
    T total = 0;
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
            const T dij = dv[i * B + j];
            const bool y = labels.class_ids[i] == labels.class_ids[j];
            const bool z = !dual || labels.families[i] == labels.families[j];
            if (y) {
                total += dij;
                slope[i * B + j] = T(1);
            } else {
                const T m = static_cast<T>(z ? m1 : m2);
                if (dij < m) {
                    total += m - dij;
                    slope[i * B + j] = T(-1);
                }
            }
        }
    }
    return tg::make_op<T>(Tensor<T>::scalar(total * inv), {d}, [slope = std::move(slope), inv](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        if (!p.requires_grad) return;
        const T g = self.grad[0] * inv;
        T* dp = tg::grad_buffer(p).raw();
        for (std::size_t k = 0; k < slope.size(); ++k) dp[k] += g * slope[k];
    });
}

}  // namespace

template <typename T>
Var<T> dmc_loss(const Var<T>& fingerprints, const PairLabels& labels, const DMCConfig& cfg) {
    cfg.validate();
    return pair_loss(fingerprints, labels, cfg.m1, cfg.m2, true);
}

template <typename T>
Var<T> single_margin_loss(const Var<T>& fingerprints, const PairLabels& labels, double m) {
    if (!(m > 0.0)) throw ConfigError("margin must be positive");
    return pair_loss(fingerprints, labels, m, m, false);
}

template Var<float> dmc_loss<float>(const Var<float>&, const PairLabels&, const DMCConfig&);
template Var<double> dmc_loss<double>(const Var<double>&, const PairLabels&, const DMCConfig&);
template Var<float> single_margin_loss<float>(const Var<float>&, const PairLabels&, double);
template Var<double> single_margin_loss<double>(const Var<double>&, const PairLabels&, double);

}  // namespace attrib
