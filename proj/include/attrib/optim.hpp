#pragma once

#include <cstdint>
#include <vector>

#include "attrib/tensor.hpp"

namespace attrib::tg {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are created to match the
// parameters at construction.
template <typename T>
class Adam {
public:
    Adam(std::vector<Parameter<T>> params, AdamOptions options = {});

    // Throws UsageError if any parameter has no gradient buffer.
    void step();
    void zero_grad();

    std::int64_t steps() const { return step_; }
    const AdamOptions& options() const { return options_; }
    const std::vector<Tensor<T>>& first_moments() const { return m_; }
    const std::vector<Tensor<T>>& second_moments() const { return v_; }

private:
    std::vector<Parameter<T>> params_;
    AdamOptions options_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    std::int64_t step_ = 0;
};

}  // namespace attrib::tg
