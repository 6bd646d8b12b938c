#include "attrib/optim.hpp"

#include <cmath>
#include <set>

#include "attrib/error.hpp"

namespace attrib::tg {

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    std::set<std::string> names;
    for (const auto& p : params_) {
        if (!names.insert(p.name).second) throw UsageError("duplicate parameter name '" + p.name + "'");
        if (!p.var.requires_grad()) throw UsageError("parameter '" + p.name + "' does not require gradients");
        m_.emplace_back(p.var.shape(), T(0));
        v_.emplace_back(p.var.shape(), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    for (const auto& p : params_)
        if (!p.var.has_grad()) throw UsageError("adam step: parameter '" + p.name + "' has no gradient");
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Var<T> var = params_[k].var;
        T* w = var.value().raw();
        const T* g = var.grad().raw();
        T* m = m_[k].raw();
        T* v = v_[k].raw();
        for (std::size_t i = 0; i < var.value().numel(); ++i) {
            m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g[i]);
            v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] = static_cast<T>(w[i] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) {
        Var<T> v = p.var;
        v.zero_grad();
    }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace attrib::tg
