#include "stylos/checkpoint.hpp"
#include "stylos/errors.hpp"

#include <cstring>
#include <fstream>

namespace stylos {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'Y', 'L', 'O', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InputError("truncated checkpoint " + path.string());
    return v;
}

uint8_t dtype_code(torch::ScalarType t) {
    switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw InputError(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
    }
}

torch::ScalarType code_dtype(uint8_t c, const std::filesystem::path& path) {
    switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw InputError("checkpoint: bad dtype code in " + path.string());
    }
}

} // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a temporary name first so an interrupted save never clobbers a good file.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("cannot write checkpoint " + path.string());
        out.write(kMagic, 8);
        put(out, kVersion);
        put(out, static_cast<uint32_t>(stage));
        put(out, step);
        const auto text = config.dump();
        put(out, static_cast<uint64_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        put(out, static_cast<uint64_t>(tensors.size()));
        for (const auto& [name, t] : tensors) {
            auto c = t.detach().contiguous().cpu();
            put(out, static_cast<uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put(out, dtype_code(c.scalar_type()));
            put(out, static_cast<uint32_t>(c.dim()));
            for (auto d : c.sizes()) put(out, static_cast<int64_t>(d));
            out.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.nbytes()));
        }
        if (!out) throw InputError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw InputError("not a checkpoint: " + path.string());
    if (get<uint32_t>(in, path) != kVersion) throw InputError("unsupported checkpoint version in " + path.string());
    Checkpoint ck;
    ck.stage = static_cast<int>(get<uint32_t>(in, path));
    ck.step = get<int64_t>(in, path);
    const auto text_len = get<uint64_t>(in, path);
    std::string text(text_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text_len));
    ck.config = KeyValueConfig::parse(text);
    const auto count = get<uint64_t>(in, path);
    for (uint64_t i = 0; i < count; ++i) {
        const auto name_len = get<uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto dtype = code_dtype(get<uint8_t>(in, path), path);
        const auto ndim = get<uint32_t>(in, path);
        std::vector<int64_t> dims(ndim);
        for (auto& d : dims) d = get<int64_t>(in, path);
        auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
        if (!in) throw InputError("truncated checkpoint " + path.string());
        ck.tensors[name] = t;
    }
    return ck;
}

void store_module(const torch::nn::Module& module, Checkpoint& ckpt) {
    for (const auto& p : module.named_parameters()) ckpt.tensors[p.key()] = p.value().detach().clone();
    for (const auto& b : module.named_buffers()) ckpt.tensors[b.key()] = b.value().detach().clone();
}

void restore_module(torch::nn::Module& module, const Checkpoint& ckpt) {
    torch::NoGradGuard ng;
    auto copy = [&](const std::string& name, torch::Tensor& dst) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw InputError("checkpoint lacks tensor '" + name + "'");
        if (it->second.sizes() != dst.sizes()) throw InputError("checkpoint shape mismatch for '" + name + "'");
        dst.copy_(it->second);
    };
    for (auto& p : module.named_parameters()) copy(p.key(), p.value());
    for (auto& b : module.named_buffers()) copy(b.key(), b.value());
}

void store_adam(const torch::optim::Adam& optimizer, const torch::nn::Module& module, Checkpoint& ckpt) {
    const auto& state = optimizer.state();
    for (const auto& p : module.named_parameters()) {
        auto it = state.find(p.value().unsafeGetTensorImpl());
        if (it == state.end()) continue;
        const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const auto base = "optim/" + p.key() + "/";
        ckpt.tensors[base + "exp_avg"] = s.exp_avg().clone();
        ckpt.tensors[base + "exp_avg_sq"] = s.exp_avg_sq().clone();
        ckpt.tensors[base + "step"] = torch::tensor({s.step()}, torch::kInt64);
    }
}

void restore_adam(torch::optim::Adam& optimizer, const torch::nn::Module& module, const Checkpoint& ckpt) {
    auto& state = optimizer.state();
    for (const auto& p : module.named_parameters()) {
        const auto base = "optim/" + p.key() + "/";
        auto avg = ckpt.tensors.find(base + "exp_avg");
        if (avg == ckpt.tensors.end()) continue;
        auto s = std::make_unique<torch::optim::AdamParamState>();
        s->exp_avg(avg->second.clone());
        s->exp_avg_sq(ckpt.tensors.at(base + "exp_avg_sq").clone());
        s->step(ckpt.tensors.at(base + "step").item<int64_t>());
        state[p.value().unsafeGetTensorImpl()] = std::move(s);
    }
}

uint64_t parameter_checksum(const std::vector<torch::Tensor>& params) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params) {
        auto c = p.detach().contiguous().cpu();
        const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
        for (size_t i = 0; i < c.nbytes(); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

} // namespace stylos
