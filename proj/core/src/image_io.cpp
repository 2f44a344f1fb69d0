#include "stylos/image_io.hpp"
#include "stylos/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <cstring>
#include <fstream>

namespace stylos {

namespace {

torch::Tensor mat_to_tensor(const cv::Mat& rgb_float) {
    auto t = torch::from_blob(rgb_float.data, {rgb_float.rows, rgb_float.cols, 3}, torch::kFloat32);
    return t.clone();
}

cv::Mat tensor_to_mat(const torch::Tensor& image) {
    auto img = image.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    TORCH_CHECK(img.dim() == 3 && img.size(2) == 3, "expected an [H, W, 3] image");
    cv::Mat m(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)), CV_32FC3);
    std::memcpy(m.data, img.data_ptr<float>(), static_cast<size_t>(img.numel()) * sizeof(float));
    return m;
}

} // namespace

torch::Tensor read_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw InputError("cannot decode image " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    return mat_to_tensor(f);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    cv::Mat f = tensor_to_mat(image.clamp(0.0, 1.0));
    cv::Mat u8;
    f.convertTo(u8, CV_8UC3, 255.0); // convertTo rounds to nearest
    cv::Mat bgr;
    cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw InputError("cannot write image " + path.string());
}

torch::Tensor center_crop_resize(const torch::Tensor& image, int64_t resolution) {
    cv::Mat m = tensor_to_mat(image);
    const int side = std::min(m.rows, m.cols);
    cv::Rect roi((m.cols - side) / 2, (m.rows - side) / 2, side, side);
    cv::Mat crop = m(roi).clone();
    cv::Mat out;
    const int interp = side > resolution ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(crop, out, cv::Size(static_cast<int>(resolution), static_cast<int>(resolution)), 0, 0, interp);
    return mat_to_tensor(out).clamp(0.0, 1.0);
}

void write_depth(const std::filesystem::path& path, const torch::Tensor& depth) {
    auto d = depth.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    TORCH_CHECK(d.dim() == 2, "depth must be [H, W]");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write depth file " + path.string());
    const std::array<uint32_t, 2> dims{static_cast<uint32_t>(d.size(0)), static_cast<uint32_t>(d.size(1))};
    out.write("SDEP", 4);
    out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
    out.write(reinterpret_cast<const char*>(d.data_ptr<float>()),
              static_cast<std::streamsize>(d.numel() * sizeof(float)));
}

torch::Tensor read_depth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open depth file " + path.string());
    char magic[4];
    std::array<uint32_t, 2> dims{};
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
    if (!in || std::memcmp(magic, "SDEP", 4) != 0) throw InputError("not a depth file: " + path.string());
    auto d = torch::empty({static_cast<int64_t>(dims[0]), static_cast<int64_t>(dims[1])}, torch::kFloat32);
    in.read(reinterpret_cast<char*>(d.data_ptr<float>()), static_cast<std::streamsize>(d.numel() * sizeof(float)));
    if (!in) throw InputError("truncated depth file: " + path.string());
    return d;
}

} // namespace stylos
