#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "attrib/rng.hpp"
#include "attrib/tensor.hpp"

namespace testing {

using attrib::tg::Shape;
using attrib::tg::Tensor;
using attrib::tg::Var;

inline Tensor<double> random_tensor(const Shape& shape, attrib::Rng& rng, double scale = 1.0) {
    Tensor<double> t(shape);
    for (auto& v : t.storage()) v = scale * rng.normal();
    return t;
}

inline Tensor<float> random_tensor_f(const Shape& shape, attrib::Rng& rng, double scale = 1.0) {
    Tensor<float> t(shape);
    for (auto& v : t.storage()) v = static_cast<float>(scale * rng.normal());
    return t;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Compares reverse-mode gradients of loss() with respect to each input
// against central differences. With max_coords > 0 only that many
// coordinates per input are sampled. The relative error uses
// max(|analytic|, |numeric|, floor) as denominator.
inline GradCheckResult gradcheck(const std::function<Var<double>()>& loss, std::vector<Var<double>> inputs,
                                 attrib::Rng& rng, std::size_t max_coords = 0, double h = 1e-6,
                                 double floor = 1e-3) {
    for (auto& in : inputs) in.zero_grad();
    attrib::tg::backward(loss());
    std::vector<Tensor<double>> analytic;
    for (auto& in : inputs)
        analytic.push_back(in.has_grad() ? in.grad() : Tensor<double>(in.shape(), 0.0));

    GradCheckResult res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor<double>& value = inputs[k].value();
        const std::size_t n = value.numel();
        std::vector<std::size_t> coords;
        if (max_coords == 0 || max_coords >= n) {
            for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.uniform_index(n));
        }
        for (std::size_t i : coords) {
            const double orig = value[i];
            value[i] = orig + h;
            const double up = loss().value().item();
            value[i] = orig - h;
            const double down = loss().value().item();
            value[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
            ++res.checked;
        }
    }
    return res;
}

// Directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("attrib_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
