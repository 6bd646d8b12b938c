#pragma once

// Dual-margin contrastive loss over all ordered fingerprint pairs of a batch.

#include <vector>

#include "attrib/family.hpp"
#include "attrib/tensor.hpp"

namespace attrib {

struct PairLabels {
    std::vector<int> class_ids;
    std::vector<Family> families;

    std::size_t size() const { return class_ids.size(); }
    // Throws ValidationError when one class spans two families.
    void validate() const;
};

struct DMCConfig {
    double m1 = 5.0;
    double m2 = 10.0;

    void validate() const;
    bool operator==(const DMCConfig&) const = default;
};

// (1/B^2) sum_ij [ y d + z(1-y) max(0, m1-d) + (1-z) max(0, m2-d) ]
template <typename T>
tg::Var<T> dmc_loss(const tg::Var<T>& fingerprints, const PairLabels& labels, const DMCConfig& cfg = {});

// Same as dmc_loss with every pair treated as same-family and margin m.
template <typename T>
tg::Var<T> single_margin_loss(const tg::Var<T>& fingerprints, const PairLabels& labels, double m);

}  // namespace attrib
