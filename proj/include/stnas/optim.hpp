#pragma once

#include <cmath>
#include <vector>

#include "stnas/errors.hpp"
#include "stnas/graph.hpp"

namespace stnas {

// SGD with momentum and decoupled-from-nothing classic weight decay:
//   v <- momentum * v + grad + weight_decay * w
//   w <- w - lr * v
template <typename T>
class SgdOptimizer {
public:
    explicit SgdOptimizer(ComputeGraph<T>& graph) : graph_(graph) {
        velocity_.reserve(graph.params().size());
        for (const auto& p : graph.params()) velocity_.emplace_back(p->value.shape());
    }

    void step(double lr, double momentum, double weight_decay) {
        const auto& params = graph_.params();
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            ParamGroup<T>& p = *params[pi];
            Tensor<T>& v = velocity_[pi];
            const std::int64_t n = p.value.numel();
            for (std::int64_t i = 0; i < n; ++i) {
                const T g = p.grad[i];
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericError(p.name, "non-finite gradient in sgd step");
                v[i] = static_cast<T>(momentum) * v[i] + g + static_cast<T>(weight_decay) * p.value[i];
                p.value[i] -= static_cast<T>(lr) * v[i];
            }
        }
    }

    void reset() {
        for (auto& v : velocity_) v.zero();
    }

private:
    ComputeGraph<T>& graph_;
    std::vector<Tensor<T>> velocity_;
};

}  // namespace stnas
