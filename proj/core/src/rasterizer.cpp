#include "stylos/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace stylos {

namespace {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

// Pixel -> list of Gaussians (CSR), each list in front-to-back order.
struct Binning {
    std::vector<int64_t> offsets;
    std::vector<int64_t> ids;
};

template <typename T>
Binning bin_gaussians(const T* means, const T* conics, const int64_t* order, int64_t m, int64_t h, int64_t w,
                      double cutoff) {
    std::vector<std::pair<int64_t, int64_t>> pairs; // (pixel, gaussian)
    for (int64_t r = 0; r < m; ++r) {
        const int64_t g = order[r];
        const double a = conics[g * 3], b = conics[g * 3 + 1], c = conics[g * 3 + 2];
        const double det = a * c - b * b;
        if (!(det > 0) || !(a > 0)) continue;
        const double mx = means[g * 2], my = means[g * 2 + 1];
        if (!std::isfinite(mx) || !std::isfinite(my)) continue;
        const double ex = std::sqrt(cutoff * c / det), ey = std::sqrt(cutoff * a / det);
        const double jlo = std::ceil(mx - ex - 0.5), jhi = std::floor(mx + ex - 0.5);
        const double ilo = std::ceil(my - ey - 0.5), ihi = std::floor(my + ey - 0.5);
        if (jhi < 0 || ihi < 0 || jlo > static_cast<double>(w - 1) || ilo > static_cast<double>(h - 1)) continue;
        const auto j0 = static_cast<int64_t>(std::max(jlo, 0.0));
        const auto j1 = static_cast<int64_t>(std::min(jhi, static_cast<double>(w - 1)));
        const auto i0 = static_cast<int64_t>(std::max(ilo, 0.0));
        const auto i1 = static_cast<int64_t>(std::min(ihi, static_cast<double>(h - 1)));
        for (int64_t i = i0; i <= i1; ++i) {
            const double dy = static_cast<double>(i) + 0.5 - my;
            for (int64_t j = j0; j <= j1; ++j) {
                const double dx = static_cast<double>(j) + 0.5 - mx;
                const double q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
                if (q <= cutoff) pairs.emplace_back(i * w + j, g);
            }
        }
    }
    // Stable counting sort by pixel keeps the depth order within each pixel.
    Binning bins;
    bins.offsets.assign(static_cast<size_t>(h * w + 1), 0);
    for (const auto& p : pairs) ++bins.offsets[static_cast<size_t>(p.first + 1)];
    for (size_t k = 1; k < bins.offsets.size(); ++k) bins.offsets[k] += bins.offsets[k - 1];
    bins.ids.resize(pairs.size());
    std::vector<int64_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
    for (const auto& p : pairs) bins.ids[static_cast<size_t>(cursor[static_cast<size_t>(p.first)]++)] = p.second;
    return bins;
}

struct RasterState {
    Binning bins;
    std::vector<int64_t> used;    // contributors actually composited per pixel
    std::vector<double> t_before; // transmittance before each (pixel, gaussian) entry
    std::vector<double> t_final;  // per pixel
};

torch::Tensor to_tensor(const std::vector<int64_t>& v) {
    return torch::from_blob(const_cast<int64_t*>(v.data()), {static_cast<int64_t>(v.size())}, torch::kLong).clone();
}
torch::Tensor to_tensor(const std::vector<double>& v) {
    return torch::from_blob(const_cast<double*>(v.data()), {static_cast<int64_t>(v.size())}, torch::kFloat64).clone();
}
template <typename V>
V to_vector(const torch::Tensor& t) {
    using E = typename V::value_type;
    const E* p = t.data_ptr<E>();
    return V(p, p + t.numel());
}

template <typename T>
void forward_impl(const T* means, const T* conics, const T* opac, const T* feats, int64_t f, int64_t h, int64_t w,
                  const RasterSettings& s, RasterState& st, T* accum, T* alpha) {
    const int64_t npix = h * w;
    st.used.assign(static_cast<size_t>(npix), 0);
    st.t_final.assign(static_cast<size_t>(npix), 1.0);
    st.t_before.assign(st.bins.ids.size(), 1.0);
    for (int64_t p = 0; p < npix; ++p) {
        const double px = static_cast<double>(p % w) + 0.5, py = static_cast<double>(p / w) + 0.5;
        double t = 1.0;
        const auto begin = st.bins.offsets[static_cast<size_t>(p)], end = st.bins.offsets[static_cast<size_t>(p + 1)];
        int64_t k = begin;
        for (; k < end; ++k) {
            const int64_t g = st.bins.ids[static_cast<size_t>(k)];
            const double dx = px - means[g * 2], dy = py - means[g * 2 + 1];
            const double q = conics[g * 3] * dx * dx + 2.0 * conics[g * 3 + 1] * dx * dy + conics[g * 3 + 2] * dy * dy;
            const double a = std::min(s.max_alpha, static_cast<double>(opac[g]) * std::exp(-0.5 * q));
            st.t_before[static_cast<size_t>(k)] = t;
            const double wgt = a * t;
            for (int64_t c = 0; c < f; ++c) accum[p * f + c] += static_cast<T>(wgt * feats[g * f + c]);
            t *= 1.0 - a;
            if (t < s.min_transmittance) {
                ++k;
                break;
            }
        }
        st.used[static_cast<size_t>(p)] = k - begin;
        st.t_final[static_cast<size_t>(p)] = t;
        alpha[p] = static_cast<T>(1.0 - t);
    }
}

template <typename T>
void backward_impl(const T* means, const T* conics, const T* opac, const T* feats, int64_t f, int64_t h, int64_t w,
                   const RasterSettings& s, const RasterState& st, const T* g_accum, const T* g_alpha, T* d_means,
                   T* d_conics, T* d_opac, T* d_feats) {
    const int64_t npix = h * w;
    std::vector<double> later(static_cast<size_t>(f));
    for (int64_t p = 0; p < npix; ++p) {
        const auto begin = st.bins.offsets[static_cast<size_t>(p)];
        const auto n = st.used[static_cast<size_t>(p)];
        if (n == 0) continue;
        const double px = static_cast<double>(p % w) + 0.5, py = static_cast<double>(p / w) + 0.5;
        const double t_final = st.t_final[static_cast<size_t>(p)];
        const double ga = g_alpha ? static_cast<double>(g_alpha[p]) : 0.0;
        std::fill(later.begin(), later.end(), 0.0);
        for (int64_t k = begin + n - 1; k >= begin; --k) {
            const int64_t g = st.bins.ids[static_cast<size_t>(k)];
            const double a_c = conics[g * 3], b_c = conics[g * 3 + 1], c_c = conics[g * 3 + 2];
            const double dx = px - means[g * 2], dy = py - means[g * 2 + 1];
            const double q = a_c * dx * dx + 2.0 * b_c * dx * dy + c_c * dy * dy;
            const double gauss = std::exp(-0.5 * q);
            const double raw = static_cast<double>(opac[g]) * gauss;
            const bool clamped = raw > s.max_alpha;
            const double a = clamped ? s.max_alpha : raw;
            const double t = st.t_before[static_cast<size_t>(k)];
            const double wgt = a * t;

            double d_a = ga * t_final / (1.0 - a);
            for (int64_t c = 0; c < f; ++c) {
                const double gc = g_accum[p * f + c];
                const double fv = feats[g * f + c];
                d_feats[g * f + c] += static_cast<T>(wgt * gc);
                d_a += gc * (t * fv - later[static_cast<size_t>(c)] / (1.0 - a));
                later[static_cast<size_t>(c)] += wgt * fv;
            }
            if (clamped) continue;
            d_opac[g] += static_cast<T>(d_a * gauss);
            const double d_q = d_a * static_cast<double>(opac[g]) * gauss * -0.5;
            d_means[g * 2] += static_cast<T>(-d_q * (2.0 * a_c * dx + 2.0 * b_c * dy));
            d_means[g * 2 + 1] += static_cast<T>(-d_q * (2.0 * b_c * dx + 2.0 * c_c * dy));
            d_conics[g * 3] += static_cast<T>(d_q * dx * dx);
            d_conics[g * 3 + 1] += static_cast<T>(d_q * 2.0 * dx * dy);
            d_conics[g * 3 + 2] += static_cast<T>(d_q * dy * dy);
        }
    }
}

class RasterizeFunction : public torch::autograd::Function<RasterizeFunction> {
public:
    static variable_list forward(AutogradContext* ctx, torch::Tensor means, torch::Tensor conics,
                                 torch::Tensor opacities, torch::Tensor features, torch::Tensor depths,
                                 RasterSettings settings) {
        means = means.contiguous();
        conics = conics.contiguous();
        opacities = opacities.contiguous();
        features = features.contiguous();
        const int64_t m = means.size(0), f = features.size(1), h = settings.height, w = settings.width;
        auto order = torch::argsort(depths.detach().to(torch::kFloat64), /*stable=*/true, 0, false).contiguous();

        auto state = std::make_shared<RasterState>();
        auto accum = torch::zeros({h, w, f}, features.options());
        auto alpha = torch::zeros({h, w}, features.options());
        AT_DISPATCH_FLOATING_TYPES(features.scalar_type(), "rasterize_forward", [&] {
            state->bins = bin_gaussians<scalar_t>(means.data_ptr<scalar_t>(), conics.data_ptr<scalar_t>(),
                                                  order.data_ptr<int64_t>(), m, h, w, settings.cutoff);
            forward_impl<scalar_t>(means.data_ptr<scalar_t>(), conics.data_ptr<scalar_t>(),
                                   opacities.data_ptr<scalar_t>(), features.data_ptr<scalar_t>(), f, h, w, settings,
                                   *state, accum.data_ptr<scalar_t>(), alpha.data_ptr<scalar_t>());
        });
        ctx->save_for_backward({means, conics, opacities, features});
        ctx->saved_data["settings_h"] = h;
        ctx->saved_data["settings_w"] = w;
        ctx->saved_data["max_alpha"] = settings.max_alpha;
        ctx->saved_data["min_t"] = settings.min_transmittance;
        ctx->saved_data["cutoff"] = settings.cutoff;
        ctx->saved_data["offsets"] = to_tensor(state->bins.offsets);
        ctx->saved_data["ids"] = to_tensor(state->bins.ids);
        ctx->saved_data["used"] = to_tensor(state->used);
        ctx->saved_data["t_before"] = to_tensor(state->t_before);
        ctx->saved_data["t_final"] = to_tensor(state->t_final);
        return {accum, alpha};
    }

    static variable_list backward(AutogradContext* ctx, variable_list grads) {
        auto saved = ctx->get_saved_variables();
        auto means = saved[0], conics = saved[1], opacities = saved[2], features = saved[3];
        RasterSettings s;
        s.height = ctx->saved_data["settings_h"].toInt();
        s.width = ctx->saved_data["settings_w"].toInt();
        s.max_alpha = ctx->saved_data["max_alpha"].toDouble();
        s.min_transmittance = ctx->saved_data["min_t"].toDouble();
        s.cutoff = ctx->saved_data["cutoff"].toDouble();
        RasterState state;
        state.bins.offsets = to_vector<std::vector<int64_t>>(ctx->saved_data["offsets"].toTensor());
        state.bins.ids = to_vector<std::vector<int64_t>>(ctx->saved_data["ids"].toTensor());
        state.used = to_vector<std::vector<int64_t>>(ctx->saved_data["used"].toTensor());
        state.t_before = to_vector<std::vector<double>>(ctx->saved_data["t_before"].toTensor());
        state.t_final = to_vector<std::vector<double>>(ctx->saved_data["t_final"].toTensor());
        const int64_t f = features.size(1);

        auto g_accum = grads[0].defined() ? grads[0].contiguous() : torch::zeros({s.height, s.width, f}, features.options());
        auto g_alpha = grads[1].defined() ? grads[1].contiguous() : torch::Tensor();
        auto d_means = torch::zeros_like(means), d_conics = torch::zeros_like(conics);
        auto d_opac = torch::zeros_like(opacities), d_feats = torch::zeros_like(features);
        AT_DISPATCH_FLOATING_TYPES(features.scalar_type(), "rasterize_backward", [&] {
            backward_impl<scalar_t>(means.data_ptr<scalar_t>(), conics.data_ptr<scalar_t>(),
                                    opacities.data_ptr<scalar_t>(), features.data_ptr<scalar_t>(), f, s.height,
                                    s.width, s, state, g_accum.data_ptr<scalar_t>(),
                                    g_alpha.defined() ? g_alpha.data_ptr<scalar_t>() : nullptr,
                                    d_means.data_ptr<scalar_t>(), d_conics.data_ptr<scalar_t>(),
                                    d_opac.data_ptr<scalar_t>(), d_feats.data_ptr<scalar_t>());
        });
        return {d_means, d_conics, d_opac, d_feats, torch::Tensor(), torch::Tensor()};
    }
};

} // namespace

std::pair<torch::Tensor, torch::Tensor> rasterize(const torch::Tensor& means2d, const torch::Tensor& conics,
                                                  const torch::Tensor& opacities, const torch::Tensor& features,
                                                  const torch::Tensor& depths, const RasterSettings& settings) {
    TORCH_CHECK(settings.height > 0 && settings.width > 0, "rasterize: empty image");
    TORCH_CHECK(means2d.dim() == 2 && means2d.size(1) == 2, "rasterize: means2d must be [M, 2]");
    TORCH_CHECK(conics.dim() == 2 && conics.size(1) == 3, "rasterize: conics must be [M, 3]");
    TORCH_CHECK(features.dim() == 2 && features.size(0) == means2d.size(0), "rasterize: features must be [M, F]");
    auto dtype = features.scalar_type();
    auto out = RasterizeFunction::apply(means2d.to(dtype), conics.to(dtype), opacities.to(dtype).reshape({-1}),
                                        features, depths.reshape({-1}), settings);
    return {out[0], out[1]};
}

} // namespace stylos
