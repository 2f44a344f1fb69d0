#include "stylos/scene_data.hpp"
#include "stylos/errors.hpp"
#include "stylos/image_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace stylos {

namespace fs = std::filesystem;

bool SceneBatch::has_geometry() const {
    return std::all_of(views.begin(), views.end(),
                       [](const View& v) { return v.depth_gt.has_value() && v.pose_gt.has_value(); });
}

torch::Tensor SceneBatch::images_nchw() const {
    std::vector<torch::Tensor> imgs;
    imgs.reserve(views.size());
    for (const auto& v : views) imgs.push_back(v.image.permute({2, 0, 1}));
    return torch::stack(imgs).contiguous();
}

torch::Tensor SceneBatch::style_chw() const { return style.permute({2, 0, 1}).contiguous(); }

std::vector<CameraParams> SceneBatch::poses() const {
    std::vector<CameraParams> out;
    for (const auto& v : views) {
        if (!v.pose_gt) throw InputError("scene " + scene_id + " has no ground-truth poses");
        out.push_back(*v.pose_gt);
    }
    return out;
}

torch::Tensor SceneBatch::depths() const {
    std::vector<torch::Tensor> out;
    for (const auto& v : views) {
        if (!v.depth_gt) throw InputError("scene " + scene_id + " has no ground-truth depth");
        out.push_back(*v.depth_gt);
    }
    return torch::stack(out);
}

torch::Tensor SceneBatch::masks() const {
    std::vector<torch::Tensor> out;
    for (const auto& v : views) out.push_back(v.valid_mask);
    return torch::stack(out);
}

SceneBatch SceneBatch::subset(const std::vector<int64_t>& indices) const {
    SceneBatch out;
    out.style = style;
    out.scene_id = scene_id;
    for (auto i : indices) out.views.push_back(views.at(static_cast<size_t>(i)));
    return out;
}

void SceneBatch::validate() const {
    if (views.empty()) throw InputError("scene " + scene_id + " has no views");
    const auto h = height(), w = width();
    for (const auto& v : views) {
        if (v.image.dim() != 3 || v.image.size(0) != h || v.image.size(1) != w || v.image.size(2) != 3) {
            throw InputError("scene " + scene_id + ": views must share one H x W x 3 shape");
        }
        if (!torch::isfinite(v.image).all().item<bool>() || v.image.min().item<double>() < 0.0 ||
            v.image.max().item<double>() > 1.0) {
            throw InputError("scene " + scene_id + ": image values must be finite and in [0, 1]");
        }
        if (v.depth_gt) {
            auto d = v.depth_gt->masked_select(v.valid_mask);
            if (d.numel() > 0 && d.min().item<double>() <= 0.0) {
                throw InputError("scene " + scene_id + ": depth must be positive on valid pixels");
            }
        }
    }
    if (style.dim() != 3 || style.size(0) != h || style.size(1) != w) {
        throw InputError("scene " + scene_id + ": style must be resized to the view resolution");
    }
}

// ---------------------------------------------------------------------------
// Synthetic scenes

namespace {

using Vec3 = std::array<double, 3>;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

constexpr Vec3 kLookAt = kOrbitTarget;
constexpr double kGroundHalfExtent = 3.0;
constexpr double kDomeRadius = 8.0;

struct Sphere {
    Vec3 center;
    double radius;
    Vec3 color;
};

struct Box {
    Vec3 center;
    Vec3 half;
    double yaw;
    Vec3 color;
};

struct Scene {
    std::vector<Sphere> spheres;
    std::vector<Box> boxes;
    Vec3 ground_a, ground_b, sky_low, sky_high;
};

Vec3 hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 1.0) * 6.0;
    const int i = static_cast<int>(std::floor(h)) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

Scene make_scene(uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Scene s;
    const int count = 3 + static_cast<int>(seed % 2);
    std::vector<std::pair<double, double>> placed;
    for (int k = 0; k < count; ++k) {
        double x = 0, y = 0;
        for (int attempt = 0; attempt < 50; ++attempt) {
            const double r = 1.3 * std::sqrt(u01(rng));
            const double a = 2 * std::numbers::pi * u01(rng);
            x = r * std::cos(a);
            y = r * std::sin(a);
            bool ok = true;
            for (auto [px, py] : placed) ok = ok && std::hypot(px - x, py - y) > 0.9;
            if (ok) break;
        }
        placed.emplace_back(x, y);
        const Vec3 color = hsv_to_rgb(u01(rng), 0.55 + 0.35 * u01(rng), 0.75 + 0.2 * u01(rng));
        if (k % 2 == 0) {
            const double r = 0.3 + 0.25 * u01(rng);
            s.spheres.push_back({{x, y, r}, r, color});
        } else {
            const Vec3 half{0.2 + 0.2 * u01(rng), 0.2 + 0.2 * u01(rng), 0.2 + 0.3 * u01(rng)};
            s.boxes.push_back({{x, y, half[2]}, half, std::numbers::pi * u01(rng), color});
        }
    }
    s.ground_a = hsv_to_rgb(u01(rng), 0.2, 0.75);
    s.ground_b = hsv_to_rgb(u01(rng), 0.3, 0.5);
    s.sky_low = hsv_to_rgb(u01(rng), 0.25, 0.9);
    s.sky_high = hsv_to_rgb(u01(rng), 0.45, 0.6);
    return s;
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal{0, 0, 1};
    Vec3 color{0, 0, 0};
    bool lit = true;
};

const Vec3 kLightDir = normalized({0.4, -0.3, 0.85});

void intersect_sphere(const Sphere& sp, const Vec3& o, const Vec3& d, Hit& hit) {
    const Vec3 oc = o - sp.center;
    const double a = dot(d, d), b = 2 * dot(oc, d), c = dot(oc, oc) - sp.radius * sp.radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return;
    const double t = (-b - std::sqrt(disc)) / (2 * a);
    if (t > 1e-6 && t < hit.t) {
        hit.t = t;
        const Vec3 p = o + t * d;
        hit.normal = normalized(p - sp.center);
        const double stripe = 0.5 + 0.5 * std::sin(8.0 * (p[2] - sp.center[2]) / sp.radius);
        hit.color = (0.8 + 0.2 * stripe) * sp.color;
        hit.lit = true;
    }
}

void intersect_box(const Box& bx, const Vec3& o, const Vec3& d, Hit& hit) {
    const double c = std::cos(bx.yaw), s = std::sin(bx.yaw);
    auto to_local = [&](const Vec3& v) { return Vec3{c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]}; };
    const Vec3 lo = to_local(o - bx.center), ld = to_local(d);
    double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
    int axis = 0;
    double sign = 1;
    for (int k = 0; k < 3; ++k) {
        const auto kk = static_cast<size_t>(k);
        if (std::abs(ld[kk]) < 1e-12) {
            if (std::abs(lo[kk]) > bx.half[kk]) return;
            continue;
        }
        double t1 = (-bx.half[kk] - lo[kk]) / ld[kk], t2 = (bx.half[kk] - lo[kk]) / ld[kk];
        double sg = -1;
        if (t1 > t2) {
            std::swap(t1, t2);
            sg = 1;
        }
        if (t1 > tmin) {
            tmin = t1;
            axis = k;
            sign = sg;
        }
        tmax = std::min(tmax, t2);
    }
    if (tmin > tmax || tmin <= 1e-6 || tmin >= hit.t) return;
    hit.t = tmin;
    Vec3 ln{0, 0, 0};
    ln[static_cast<size_t>(axis)] = sign;
    hit.normal = {c * ln[0] - s * ln[1], s * ln[0] + c * ln[1], ln[2]};
    const double shade = axis == 2 ? 1.0 : 0.9;
    hit.color = shade * bx.color;
    hit.lit = true;
}

void intersect_ground(const Scene& sc, const Vec3& o, const Vec3& d, Hit& hit) {
    if (std::abs(d[2]) < 1e-12) return;
    const double t = -o[2] / d[2];
    if (t <= 1e-6 || t >= hit.t) return;
    const Vec3 p = o + t * d;
    if (std::abs(p[0]) > kGroundHalfExtent || std::abs(p[1]) > kGroundHalfExtent) return;
    hit.t = t;
    hit.normal = {0, 0, 1};
    // Soft checker: smooth enough to stay alias-free at desk resolutions.
    const double w = 0.5 + 0.5 * std::tanh(3.0 * std::sin(std::numbers::pi * p[0] / 0.6) *
                                           std::sin(std::numbers::pi * p[1] / 0.6));
    hit.color = w * sc.ground_a + (1 - w) * sc.ground_b;
    hit.lit = true;
}

void intersect_dome(const Scene& sc, const Vec3& o, const Vec3& d, Hit& hit) {
    const double a = dot(d, d), b = 2 * dot(o, d), c = dot(o, o) - kDomeRadius * kDomeRadius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return;
    const double t = (-b + std::sqrt(disc)) / (2 * a);
    if (t <= 1e-6 || t >= hit.t) return;
    hit.t = t;
    const Vec3 p = o + t * d;
    const double elev = std::clamp(p[2] / kDomeRadius, -1.0, 1.0);
    const double az = std::atan2(p[1], p[0]);
    const double band = 0.5 + 0.5 * std::sin(3.0 * az);
    const double g = std::clamp(0.5 + 1.5 * elev, 0.0, 1.0);
    hit.color = (0.85 + 0.15 * band) * ((1 - g) * sc.sky_low + g * sc.sky_high);
    hit.lit = false;
}

Vec3 shade(const Hit& hit) {
    if (!hit.lit) return hit.color;
    const double lambert = std::max(0.0, dot(hit.normal, kLightDir));
    return (0.4 + 0.6 * lambert) * hit.color;
}

void render_view(const Scene& sc, const CameraParams& cam, int64_t res, View& view) {
    const auto rot = quaternion_to_matrix(cam.rotation);
    const auto k = intrinsics_from_fov(cam.fov, res, res);
    auto image = torch::empty({res, res, 3}, torch::kFloat32);
    auto depth = torch::empty({res, res}, torch::kFloat32);
    auto ia = image.accessor<float, 3>();
    auto da = depth.accessor<float, 2>();
    const Vec3 origin{cam.translation[0], cam.translation[1], cam.translation[2]};
    for (int64_t i = 0; i < res; ++i) {
        for (int64_t j = 0; j < res; ++j) {
            const double xc = (static_cast<double>(j) + 0.5 - k.cx) / k.fx;
            const double yc = (static_cast<double>(i) + 0.5 - k.cy) / k.fy;
            // Unnormalized direction with unit camera-z, so the hit parameter t is z-depth.
            const Vec3 d{rot[0] * xc + rot[1] * yc + rot[2], rot[3] * xc + rot[4] * yc + rot[5],
                         rot[6] * xc + rot[7] * yc + rot[8]};
            Hit hit;
            for (const auto& s : sc.spheres) intersect_sphere(s, origin, d, hit);
            for (const auto& b : sc.boxes) intersect_box(b, origin, d, hit);
            intersect_ground(sc, origin, d, hit);
            intersect_dome(sc, origin, d, hit);
            const Vec3 c = shade(hit);
            for (size_t ch = 0; ch < 3; ++ch) ia[i][j][static_cast<int64_t>(ch)] = static_cast<float>(std::clamp(c[ch], 0.0, 1.0));
            da[i][j] = static_cast<float>(hit.t);
        }
    }
    view.image = image;
    view.depth_gt = depth;
    view.pose_gt = cam;
    view.valid_mask = torch::isfinite(depth) & (depth > 0);
}

} // namespace

std::vector<CameraParams> orbit_cameras(int64_t n_views, const SyntheticSceneOptions& options) {
    std::vector<CameraParams> cams;
    const double elev = options.elevation_deg * std::numbers::pi / 180.0;
    const double fov = options.fov_deg * std::numbers::pi / 180.0;
    for (int64_t i = 0; i < n_views; ++i) {
        const double az = static_cast<double>(i) * options.azimuth_step_deg * std::numbers::pi / 180.0;
        const Vec3 center{kLookAt[0] + options.orbit_radius * std::cos(elev) * std::cos(az),
                          kLookAt[1] + options.orbit_radius * std::cos(elev) * std::sin(az),
                          kLookAt[2] + options.orbit_radius * std::sin(elev)};
        const Vec3 forward = normalized(kLookAt - center);
        const Vec3 right = normalized(cross(forward, {0, 0, 1}));
        const Vec3 down = cross(forward, right);
        const std::array<double, 9> m{right[0], down[0], forward[0], right[1], down[1],
                                      forward[1], right[2], down[2], forward[2]};
        CameraParams c;
        c.rotation = matrix_to_quaternion(m);
        c.translation = center;
        c.fov = {fov, fov};
        cams.push_back(c);
    }
    return cams;
}

SceneBatch generate_synthetic_scene(uint64_t seed, int64_t n_views, int64_t resolution,
                                    const SyntheticSceneOptions& options) {
    if (n_views < 1) throw ConfigError("generate_synthetic_scene: n_views must be >= 1");
    if (resolution <= 0 || resolution % options.patch_size != 0) {
        throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by patch size " +
                          std::to_string(options.patch_size));
    }
    const Scene sc = make_scene(seed);
    SceneBatch batch;
    batch.scene_id = "synthetic_" + std::to_string(seed);
    for (const auto& cam : orbit_cameras(n_views, options)) {
        View v;
        render_view(sc, cam, resolution, v);
        batch.views.push_back(std::move(v));
    }
    batch.style = synthetic_style_image(seed + 1000, resolution);
    return batch;
}

torch::Tensor synthetic_style_image(uint64_t seed, int64_t resolution) {
    std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + 3);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double base_hue = u01(rng);
    std::array<Vec3, 3> palette{hsv_to_rgb(base_hue, 0.8, 0.9), hsv_to_rgb(base_hue + 0.33, 0.7, 0.5),
                                hsv_to_rgb(base_hue + 0.6, 0.9, 0.25)};
    const double fx = 2 + 6 * u01(rng), fy = 2 + 6 * u01(rng), ph = 6.28 * u01(rng);
    const double swirl = 3 * u01(rng);
    auto img = torch::empty({resolution, resolution, 3}, torch::kFloat32);
    auto a = img.accessor<float, 3>();
    for (int64_t i = 0; i < resolution; ++i) {
        for (int64_t j = 0; j < resolution; ++j) {
            const double x = static_cast<double>(j) / static_cast<double>(resolution) - 0.5;
            const double y = static_cast<double>(i) / static_cast<double>(resolution) - 0.5;
            const double r = std::hypot(x, y);
            const double s1 = 0.5 + 0.5 * std::sin(fx * 6.28 * x + swirl * std::sin(fy * 6.28 * y) + ph);
            const double s2 = 0.5 + 0.5 * std::cos(12.0 * r * fy + ph);
            Vec3 c = (s1 * (1 - s2)) * palette[0] + (s2 * (1 - s1)) * palette[1] +
                     (1 - s1 * (1 - s2) - s2 * (1 - s1)) * palette[2];
            for (size_t ch = 0; ch < 3; ++ch) a[i][j][static_cast<int64_t>(ch)] = static_cast<float>(std::clamp(c[ch], 0.0, 1.0));
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Folder I/O

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& folder) {
    if (!fs::is_directory(folder)) throw InputError("not a directory: " + folder.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(folder)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

std::string frame_name(size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04zu%s", i, ext);
    return buf;
}

} // namespace

SceneBatch load_image_folder(const fs::path& folder, const fs::path& style_path, int64_t resolution) {
    const auto files = list_images(folder);
    if (files.empty()) throw InputError("no images found in " + folder.string());
    SceneBatch batch;
    batch.scene_id = folder.filename().string();
    for (const auto& f : files) {
        View v;
        v.image = center_crop_resize(read_image(f), resolution);
        v.valid_mask = torch::ones({resolution, resolution}, torch::kBool);
        batch.views.push_back(std::move(v));
    }
    batch.style = center_crop_resize(read_image(style_path), resolution);
    return batch;
}

void save_scene_folder(const SceneBatch& scene, const fs::path& folder) {
    fs::create_directories(folder / "styles");
    nlohmann::json cams = nlohmann::json::object();
    cams["scene_id"] = scene.scene_id;
    cams["height"] = scene.height();
    cams["width"] = scene.width();
    cams["frames"] = nlohmann::json::array();
    for (size_t i = 0; i < scene.views.size(); ++i) {
        const auto& v = scene.views[i];
        write_png(folder / frame_name(i, ".png"), v.image);
        nlohmann::json frame{{"file", frame_name(i, ".png")}};
        if (v.depth_gt) {
            write_depth(folder / frame_name(i, ".depth"), *v.depth_gt);
            frame["depth"] = frame_name(i, ".depth");
        }
        if (v.pose_gt) {
            frame["rotation"] = v.pose_gt->rotation;
            frame["translation"] = v.pose_gt->translation;
            frame["fov"] = v.pose_gt->fov;
        }
        cams["frames"].push_back(frame);
    }
    std::ofstream(folder / "cameras.json") << cams.dump(2) << "\n";
    if (scene.style.defined()) write_png(folder / "styles" / "style.png", scene.style);
}

SceneBatch load_scene_folder(const fs::path& folder, const std::optional<fs::path>& style_path) {
    const auto files = list_images(folder);
    if (files.empty()) throw InputError("no images found in " + folder.string());
    SceneBatch batch;
    batch.scene_id = folder.filename().string();
    nlohmann::json cams;
    if (fs::exists(folder / "cameras.json")) {
        std::ifstream in(folder / "cameras.json");
        try {
            cams = nlohmann::json::parse(in);
        } catch (const std::exception& e) {
            throw InputError("malformed cameras.json in " + folder.string() + ": " + e.what());
        }
        batch.scene_id = cams.value("scene_id", batch.scene_id);
    }
    for (size_t i = 0; i < files.size(); ++i) {
        View v;
        v.image = read_image(files[i]);
        v.valid_mask = torch::ones({v.image.size(0), v.image.size(1)}, torch::kBool);
        if (cams.contains("frames") && i < cams["frames"].size()) {
            const auto& fr = cams["frames"][i];
            if (fr.contains("depth")) {
                v.depth_gt = read_depth(folder / fr["depth"].get<std::string>());
                v.valid_mask = torch::isfinite(*v.depth_gt) & (*v.depth_gt > 0);
            }
            if (fr.contains("rotation")) {
                CameraParams c;
                c.rotation = fr["rotation"].get<std::array<double, 4>>();
                c.translation = fr["translation"].get<std::array<double, 3>>();
                c.fov = fr["fov"].get<std::array<double, 2>>();
                v.pose_gt = c;
            }
        }
        batch.views.push_back(std::move(v));
    }
    const fs::path sp = style_path.value_or(folder / "styles" / "style.png");
    if (fs::exists(sp)) {
        batch.style = center_crop_resize(read_image(sp), batch.height());
    } else {
        batch.style = batch.views.front().image.clone();
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Color jitter

namespace {

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    const float delta = mx - mn;
    s = mx > 0 ? delta / mx : 0.0f;
    if (delta <= 0) {
        h = 0;
        return;
    }
    if (mx == r) {
        h = (g - b) / delta;
    } else if (mx == g) {
        h = 2.0f + (b - r) / delta;
    } else {
        h = 4.0f + (r - g) / delta;
    }
    h /= 6.0f;
    if (h < 0) h += 1.0f;
}

void hsv_to_rgb_f(float h, float s, float v, float& r, float& g, float& b) {
    if (s <= 0) {
        r = g = b = v;
        return;
    }
    const Vec3 c = hsv_to_rgb(h, s, v);
    r = static_cast<float>(c[0]);
    g = static_cast<float>(c[1]);
    b = static_cast<float>(c[2]);
}

} // namespace

torch::Tensor color_jitter(const torch::Tensor& image, uint64_t seed, const ColorJitterRanges& ranges) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double b = 1.0 + ranges.brightness * u(rng);
    const double c = 1.0 + ranges.contrast * u(rng);
    const double s = 1.0 + ranges.saturation * u(rng);
    const double h = ranges.hue * u(rng);

    auto img = image.detach().to(torch::kFloat32).contiguous().clone();
    if (ranges.brightness != 0.0) img = (img * b).clamp(0.0, 1.0);
    auto luma = [](const torch::Tensor& x) {
        return 0.299 * x.select(-1, 0) + 0.587 * x.select(-1, 1) + 0.114 * x.select(-1, 2);
    };
    if (ranges.contrast != 0.0) {
        const auto mean = luma(img).mean();
        img = ((img - mean) * c + mean).clamp(0.0, 1.0);
    }
    if (ranges.saturation != 0.0) {
        auto gray = luma(img).unsqueeze(-1);
        img = ((img - gray) * s + gray).clamp(0.0, 1.0);
    }
    if (ranges.hue != 0.0) {
        img = img.contiguous();
        float* p = img.data_ptr<float>();
        const int64_t n = img.numel() / 3;
        for (int64_t k = 0; k < n; ++k) {
            float hh, ss, vv;
            rgb_to_hsv(p[3 * k], p[3 * k + 1], p[3 * k + 2], hh, ss, vv);
            if (ss <= 0) continue; // achromatic pixels have no hue to rotate
            hh = static_cast<float>(std::fmod(hh + h + 1.0, 1.0));
            hsv_to_rgb_f(hh, ss, vv, p[3 * k], p[3 * k + 1], p[3 * k + 2]);
        }
        img = img.clamp(0.0, 1.0);
    }
    return img;
}

} // namespace stylos
