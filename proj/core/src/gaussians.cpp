#include "stylos/gaussians.hpp"
#include "stylos/errors.hpp"
#include "stylos/heads.hpp"

#include "json.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stylos {

namespace F = torch::nn::functional;

GaussianSet GaussianSet::index_select(const torch::Tensor& indices) const {
    GaussianSet g;
    g.means = means.index_select(0, indices);
    g.opacities = opacities.index_select(0, indices);
    g.rotations = rotations.index_select(0, indices);
    g.scales = scales.index_select(0, indices);
    g.sh = sh.index_select(0, indices);
    g.confidences = confidences.index_select(0, indices);
    g.sh_degree = sh_degree;
    return g;
}

GaussianSet GaussianSet::detach() const {
    GaussianSet g = *this;
    g.means = means.detach();
    g.opacities = opacities.detach();
    g.rotations = rotations.detach();
    g.scales = scales.detach();
    g.sh = sh.detach();
    g.confidences = confidences.detach();
    return g;
}

GaussianSet GaussianSet::concat(const std::vector<GaussianSet>& sets) {
    if (sets.empty()) throw InputError("cannot concatenate zero Gaussian sets");
    std::vector<torch::Tensor> m, o, r, s, c, w;
    for (const auto& g : sets) {
        if (g.sh_degree != sets.front().sh_degree) throw ConfigError("Gaussian sets disagree on SH degree");
        m.push_back(g.means);
        o.push_back(g.opacities);
        r.push_back(g.rotations);
        s.push_back(g.scales);
        c.push_back(g.sh);
        w.push_back(g.confidences);
    }
    GaussianSet out;
    out.means = torch::cat(m);
    out.opacities = torch::cat(o);
    out.rotations = torch::cat(r);
    out.scales = torch::cat(s);
    out.sh = torch::cat(c);
    out.confidences = torch::cat(w);
    out.sh_degree = sets.front().sh_degree;
    return out;
}

void GaussianSet::validate() const {
    auto finite = [](const torch::Tensor& t) { return torch::isfinite(t).all().item<bool>(); };
    if (!finite(means) || !finite(opacities) || !finite(rotations) || !finite(scales) || !finite(sh) ||
        !finite(confidences)) {
        throw InvariantError("Gaussian set contains non-finite values");
    }
    if (size() == 0) return;
    auto qn = rotations.detach().to(torch::kFloat64).norm(2, -1);
    if ((qn - 1.0).abs().max().item<double>() > 1e-6) throw InvariantError("Gaussian quaternions are not unit-norm");
    if (scales.min().item<double>() <= 0.0) throw InvariantError("Gaussian scales must be positive");
    if (opacities.min().item<double>() <= 0.0 || opacities.max().item<double>() >= 1.0) {
        throw InvariantError("Gaussian opacities must lie in (0, 1)");
    }
    if (confidences.min().item<double>() < 0.0) throw InvariantError("Gaussian confidences must be >= 0");
}

GaussianSet gaussian_adapter(const torch::Tensor& geom, const torch::Tensor& sh, const torch::Tensor& depth,
                             const torch::Tensor& confidence, const CameraTensors& cams,
                             const AdapterOptions& options, const torch::Tensor& valid) {
    namespace gc = geometry_channels;
    TORCH_CHECK(geom.dim() == 4 && geom.size(-1) == gc::count, "geometry maps must be [V, H, W, 11]");
    const int64_t v = geom.size(0), w = geom.size(2);
    TORCH_CHECK(cams.size() == v, "one camera per view required");

    std::vector<torch::Tensor> anchors, footprints;
    for (int64_t i = 0; i < v; ++i) {
        anchors.push_back(unproject_depth(depth[i], cams.rotation[i], cams.translation[i], cams.fov[i]));
        auto fx = 0.5 * static_cast<double>(w) / torch::tan(0.5 * cams.fov[i][0]);
        footprints.push_back(depth[i] / fx);
    }
    auto anchor = torch::stack(anchors);     // [V, H, W, 3]
    auto footprint = torch::stack(footprints); // [V, H, W]

    auto offset_raw = geom.slice(-1, gc::offset, gc::offset + 3);
    auto means = options.voxel_size > 0 ? anchor + torch::tanh(offset_raw) * options.voxel_size : anchor;
    auto scales = F::softplus(geom.slice(-1, gc::scale, gc::scale + 3)) * footprint.unsqueeze(-1);
    auto rot = geom.slice(-1, gc::rotation, gc::rotation + 4);
    auto rot_norm = rot.norm(2, -1, true);
    // a zero raw quaternion maps to identity
    auto identity = torch::zeros_like(rot);
    identity.select(-1, 0).fill_(1.0);
    rot = torch::where(rot_norm > 1e-8, rot / rot_norm.clamp_min(1e-8), identity);
    auto opacity = torch::sigmoid(geom.select(-1, gc::opacity));

    auto mask = torch::isfinite(depth) & (depth > 0);
    if (valid.defined()) mask = mask & valid.to(torch::kBool);
    auto idx = mask.reshape({-1}).nonzero().squeeze(1);

    const int64_t bands = sh.size(-1);
    GaussianSet g;
    g.means = means.reshape({-1, 3}).index_select(0, idx);
    g.scales = scales.reshape({-1, 3}).index_select(0, idx);
    g.rotations = rot.reshape({-1, 4}).index_select(0, idx);
    g.opacities = opacity.reshape({-1}).index_select(0, idx);
    g.sh = sh.reshape({-1, 3, bands}).index_select(0, idx);
    g.confidences = confidence.reshape({-1}).index_select(0, idx);
    g.sh_degree = static_cast<int64_t>(std::lround(std::sqrt(static_cast<double>(bands)))) - 1;
    return voxel_merge(g, options.voxel_size);
}

GaussianSet voxel_merge(const GaussianSet& gaussians, double voxel_size) {
    if (voxel_size <= 0.0 || gaussians.size() == 0) return gaussians;
    auto keys = torch::floor(gaussians.means.detach() / voxel_size).to(torch::kLong);
    auto [uniq, inverse, counts] = at::unique_dim(keys, 0, /*sorted=*/true, /*return_inverse=*/true);
    const int64_t u = uniq.size(0);
    if (u == gaussians.size()) {
        // Distinct voxels: nothing to fuse, keep values bit-exact.
        return gaussians;
    }

    auto w = gaussians.confidences;
    auto total = torch::zeros({u}, w.options()).index_add(0, inverse, w);
    // Voxels whose confidences sum to zero fall back to uniform weights.
    auto degenerate = (total <= 0).index_select(0, inverse);
    auto weights = torch::where(degenerate, torch::ones_like(w), w);
    auto norm = torch::zeros({u}, w.options()).index_add(0, inverse, weights);

    auto average = [&](const torch::Tensor& x) {
        std::vector<int64_t> wshape(static_cast<size_t>(x.dim()), 1);
        wshape[0] = -1;
        auto shape = x.sizes().vec();
        shape[0] = u;
        auto sum = torch::zeros(shape, x.options()).index_add(0, inverse, x * weights.view(wshape));
        return sum / norm.view(wshape);
    };

    GaussianSet out;
    out.sh_degree = gaussians.sh_degree;
    out.means = average(gaussians.means);
    out.scales = average(gaussians.scales);
    out.sh = average(gaussians.sh);
    out.opacities = average(gaussians.opacities);
    auto sign = torch::where(gaussians.rotations.select(-1, 0) < 0, -1.0, 1.0).to(gaussians.rotations.dtype());
    auto q = average(gaussians.rotations * sign.unsqueeze(-1));
    out.rotations = q / q.norm(2, -1, true).clamp_min(1e-12);
    out.confidences = total;
    return out;
}

namespace {

constexpr uint32_t kGaussianFormatVersion = 1;
constexpr int64_t kGaussianHeaderBytes = 24;

void write_column(std::ofstream& out, const torch::Tensor& t) {
    auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    out.write(reinterpret_cast<const char*>(c.data_ptr<float>()), static_cast<std::streamsize>(c.numel() * 4));
}

torch::Tensor read_column(std::ifstream& in, std::vector<int64_t> shape) {
    auto t = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
    return t;
}

} // namespace

void export_gaussians(const GaussianSet& g, const std::filesystem::path& path, double voxel_size) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    const int64_t m = g.size();
    const uint32_t bands = static_cast<uint32_t>((g.sh_degree + 1) * (g.sh_degree + 1));
    const uint32_t degree = static_cast<uint32_t>(g.sh_degree);
    const uint64_t count = static_cast<uint64_t>(m);
    out.write("SGSP", 4);
    out.write(reinterpret_cast<const char*>(&kGaussianFormatVersion), 4);
    out.write(reinterpret_cast<const char*>(&degree), 4);
    out.write(reinterpret_cast<const char*>(&bands), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    write_column(out, g.means);
    write_column(out, g.opacities);
    write_column(out, g.rotations);
    write_column(out, g.scales);
    write_column(out, g.sh);
    write_column(out, g.confidences);

    nlohmann::json columns = nlohmann::json::array();
    int64_t offset = kGaussianHeaderBytes;
    for (auto [name, comps] : std::vector<std::pair<std::string, int64_t>>{
             {"means", 3}, {"opacities", 1}, {"rotations", 4}, {"scales", 3},
             {"sh", 3 * static_cast<int64_t>(bands)}, {"confidences", 1}}) {
        columns.push_back({{"name", name}, {"components", comps}, {"offset", offset}, {"dtype", "float32"}});
        offset += comps * m * 4;
    }
    nlohmann::json meta{{"format", "stylos-gaussians"},
                        {"version", kGaussianFormatVersion},
                        {"count", count},
                        {"sh_degree", degree},
                        {"sh_bands", bands},
                        {"voxel_size", voxel_size},
                        {"header_bytes", kGaussianHeaderBytes},
                        {"total_bytes", offset},
                        {"columns", columns}};
    std::ofstream(path.string() + ".json") << meta.dump(2) << "\n";
}

GaussianSet import_gaussians(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    char magic[4];
    uint32_t version = 0, degree = 0, bands = 0;
    uint64_t count = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&degree), 4);
    in.read(reinterpret_cast<char*>(&bands), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || std::memcmp(magic, "SGSP", 4) != 0 || version != kGaussianFormatVersion) {
        throw InputError("not a Gaussian export: " + path.string());
    }
    const auto m = static_cast<int64_t>(count);
    GaussianSet g;
    g.sh_degree = degree;
    g.means = read_column(in, {m, 3});
    g.opacities = read_column(in, {m});
    g.rotations = read_column(in, {m, 4});
    g.scales = read_column(in, {m, 3});
    g.sh = read_column(in, {m, 3, static_cast<int64_t>(bands)});
    g.confidences = read_column(in, {m});
    if (!in) throw InputError("truncated Gaussian export: " + path.string());
    return g;
}

} // namespace stylos
