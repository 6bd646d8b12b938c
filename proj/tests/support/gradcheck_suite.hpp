#pragma once

// Named gradient checks in double precision, one entry per differentiable
// op plus the composed network + dual-margin loss graph.

#include <functional>
#include <string>
#include <vector>

#include "attrib/defl.hpp"
#include "attrib/dmcloss.hpp"
#include "attrib/filterbank.hpp"
#include "attrib/tensor.hpp"
#include "support.hpp"

namespace testing {

struct GradCheckCase {
    std::string name;
    std::function<GradCheckResult(std::uint64_t seed)> run;
};

inline Var<double> grad_param(const Shape& s, attrib::Rng& rng, double scale = 1.0) {
    return Var<double>::leaf(random_tensor(s, rng, scale), true);
}

inline GradCheckResult composed_gradcheck(std::uint64_t seed) {
    using namespace attrib;
    using namespace attrib::tg;
    using V = Var<double>;
    static const FilterBank bank = build_mhf_set();
    const PairLabels labels{{0, 0, 1, 2}, {Family::Real, Family::Real, Family::Gan, Family::Dm}};
    Rng rng(seed + 7);
    DeflConfig cfg;
    cfg.fingerprint_dim = 6;
    cfg.hidden_dim = 8;
    cfg.semantic_dim = 5;
    cfg.init_seed = seed;
    DeflModel<double> model = init_defl<double>(cfg, partition_filters(bank, seed), bank);
    const V images = V::leaf(random_tensor({4, 1, 8, 8}, rng));
    const V semantic = V::leaf(random_tensor({4, 5}, rng));

    DMCConfig dmc;
    {
        NoGradGuard guard;
        const auto d = l2_distance_matrix(model.fingerprint(images, semantic, true)).value();
        double mean = 0;
        for (double v : d.storage()) mean += v;
        mean /= 12.0;
        dmc = {0.8 * mean, 1.6 * mean};
    }

    std::vector<V> inputs;
    for (const auto& p : model.parameters())
        if (p.name.rfind("head.", 0) != 0) inputs.push_back(p.var);
    auto loss = [&] { return dmc_loss(model.fingerprint(images, semantic, true), labels, dmc); };
    // A smaller step keeps perturbations from pushing any of the ~40k
    // ReLU inputs across zero.
    return gradcheck(loss, inputs, rng, 4, 1e-7);
}

inline std::vector<GradCheckCase> gradcheck_cases() {
    using namespace attrib;
    using namespace attrib::tg;
    using V = Var<double>;
    std::vector<GradCheckCase> cases;
    auto push = [&](std::string name, std::function<GradCheckResult(Rng&)> f) {
        cases.push_back({std::move(name), [f](std::uint64_t seed) {
                             Rng rng(seed + 100);
                             return f(rng);
                         }});
    };
    push("conv2d", [](Rng& rng) {
        auto x = grad_param({2, 3, 5, 5}, rng), w = grad_param({4, 3, 3, 3}, rng), b = grad_param({4}, rng);
        const V proj = V::leaf(random_tensor({2, 4, 5, 5}, rng));
        return gradcheck([&] { return sum(mul(conv2d(x, w, &b), proj)); }, {x, w, b}, rng);
    });
    for (bool train : {true, false}) {
        push(train ? "batchnorm/train" : "batchnorm/eval", [train](Rng& rng) {
            auto x = grad_param({3, 2, 3, 3}, rng), g = grad_param({2}, rng), b = grad_param({2}, rng);
            BatchNormState<double> st(2);
            st.running_mean[0] = 0.3;
            st.running_var[1] = 2.0;
            const V proj = V::leaf(random_tensor({3, 2, 3, 3}, rng));
            return gradcheck(
                [&] {
                    BatchNormState<double> local = st;
                    return sum(mul(batchnorm(x, g, b, local, train), proj));
                },
                {x, g, b}, rng);
        });
    }
    push("relu", [](Rng& rng) {
        auto x = grad_param({2, 3, 4, 4}, rng);
        const V proj = V::leaf(random_tensor({2, 3, 4, 4}, rng));
        return gradcheck([&] { return sum(mul(relu(x), proj)); }, {x}, rng);
    });
    push("avgpool2x2", [](Rng& rng) {
        auto x = grad_param({2, 3, 4, 6}, rng);
        const V proj = V::leaf(random_tensor({2, 3, 2, 3}, rng));
        return gradcheck([&] { return sum(mul(avgpool2x2(x), proj)); }, {x}, rng);
    });
    push("global_avgpool", [](Rng& rng) {
        auto x = grad_param({2, 3, 4, 3}, rng);
        const V proj = V::leaf(random_tensor({2, 3}, rng));
        return gradcheck([&] { return sum(mul(global_avgpool(x), proj)); }, {x}, rng);
    });
    push("concat", [](Rng& rng) {
        auto a = grad_param({2, 3}, rng), b = grad_param({2, 1}, rng), c = grad_param({2, 2}, rng);
        const V proj = V::leaf(random_tensor({2, 6}, rng));
        return gradcheck([&] { return sum(mul(concat_channels<double>({a, b, c}), proj)); }, {a, b, c}, rng);
    });
    push("linear", [](Rng& rng) {
        auto x = grad_param({3, 5}, rng), w = grad_param({4, 5}, rng), b = grad_param({4}, rng);
        const V proj = V::leaf(random_tensor({3, 4}, rng));
        return gradcheck([&] { return sum(mul(linear(x, w, &b), proj)); }, {x, w, b}, rng);
    });
    push("mul/add/scale", [](Rng& rng) {
        auto a = grad_param({2, 3}, rng), b = grad_param({2, 3}, rng);
        const V proj = V::leaf(random_tensor({2, 3}, rng));
        return gradcheck([&] { return sum(mul(add(mul(a, b), scale(a, 0.7)), proj)); }, {a, b}, rng);
    });
    push("l2_distance_matrix", [](Rng& rng) {
        auto f = grad_param({5, 4}, rng);
        const V proj = V::leaf(random_tensor({5, 5}, rng));
        return gradcheck([&] { return sum(mul(l2_distance_matrix(f), proj)); }, {f}, rng);
    });
    push("cross_entropy", [](Rng& rng) {
        auto logits = grad_param({4, 3}, rng, 2.0);
        const std::vector<int> labels{0, 2, 1, 2};
        return gradcheck([&] { return cross_entropy(logits, labels); }, {logits}, rng);
    });
    const PairLabels labels{{0, 0, 1, 2, 2, 3},
                            {Family::Real, Family::Real, Family::Gan, Family::Dm, Family::Dm, Family::Dm}};
    push("dmc_loss", [labels](Rng& rng) {
        auto f = grad_param({6, 3}, rng);
        // Margins straddle the typical distance so both hinges are active.
        const DMCConfig cfg{1.5, 3.0};
        return gradcheck([&] { return dmc_loss(f, labels, cfg); }, {f}, rng);
    });
    push("single_margin_loss", [labels](Rng& rng) {
        auto f = grad_param({6, 3}, rng);
        return gradcheck([&] { return single_margin_loss(f, labels, 2.0); }, {f}, rng);
    });
    cases.push_back({"composed network + dmc_loss", composed_gradcheck});
    return cases;
}

}  // namespace testing
