#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <functional>
#include <vector>

namespace stylos::testing {

/// Largest relative error between autograd and central-difference gradients
/// of a scalar function, per input: ||a - n||_inf / max(||a||_inf, ||n||_inf).
/// Inputs should be double tensors.
inline double gradcheck(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                        std::vector<torch::Tensor> inputs, double eps = 1e-6) {
    for (auto& x : inputs) x = x.detach().clone().set_requires_grad(true);
    auto out = f(inputs);
    auto grads = torch::autograd::grad({out}, inputs, {}, false, false, true);
    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto base = inputs[i].detach().clone();
        auto flat = base.view({-1});
        auto numeric = torch::zeros_like(flat);
        for (int64_t k = 0; k < flat.numel(); ++k) {
            const double orig = flat[k].item<double>();
            std::vector<torch::Tensor> args;
            for (size_t j = 0; j < inputs.size(); ++j) args.push_back(inputs[j].detach());
            flat[k] = orig + eps;
            args[i] = base.clone();
            const double up = f(args).item<double>();
            flat[k] = orig - eps;
            args[i] = base.clone();
            const double down = f(args).item<double>();
            flat[k] = orig;
            numeric[k] = (up - down) / (2 * eps);
        }
        auto analytic = grads[i].defined() ? grads[i].reshape({-1}) : torch::zeros_like(numeric);
        const double scale = std::max({analytic.abs().max().item<double>(), numeric.abs().max().item<double>(), 1e-12});
        worst = std::max(worst, (analytic - numeric).abs().max().item<double>() / scale);
    }
    return worst;
}

} // namespace stylos::testing
