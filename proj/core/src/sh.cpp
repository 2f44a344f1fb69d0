#include "stylos/sh.hpp"
#include "stylos/errors.hpp"

namespace stylos {

torch::Tensor sh_basis(int64_t degree, const torch::Tensor& dirs) {
    if (degree < 0 || degree > kMaxShDegree) throw ConfigError("unsupported SH degree " + std::to_string(degree));
    auto y00 = torch::full({dirs.size(0)}, kShC0, dirs.options());
    if (degree == 0) return y00.unsqueeze(-1);
    auto x = dirs.select(-1, 0), y = dirs.select(-1, 1), z = dirs.select(-1, 2);
    return torch::stack({y00, -kShC1 * y, kShC1 * z, -kShC1 * x}, -1);
}

torch::Tensor eval_sh(int64_t degree, const torch::Tensor& coeffs, const torch::Tensor& dirs) {
    const int64_t bands = (degree + 1) * (degree + 1);
    TORCH_CHECK(coeffs.dim() == 3 && coeffs.size(1) == 3 && coeffs.size(2) == bands,
                "eval_sh: coefficients must be [M, 3, ", bands, "]");
    auto basis = sh_basis(degree, dirs).unsqueeze(1); // [M, 1, nb]
    return ((coeffs * basis).sum(-1) + 0.5).clamp(0.0, 1.0);
}

} // namespace stylos
