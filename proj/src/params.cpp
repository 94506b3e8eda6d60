#include "thyme/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "thyme/error.hpp"
#include "thyme/rng.hpp"

namespace thyme {

Parameter& ParamStore::insert(const std::string& name, Tensor value, bool trainable) {
    for (const auto& p : params_)
        if (p->name == name) fail("duplicate-parameter", "parameter '" + name + "' already exists");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(value);
    p->trainable = trainable;
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParamStore::add_uniform(const std::string& name, Shape shape, long fan_in,
                                   std::uint64_t seed) {
    Rng rng(seed_for(seed, name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return insert(name, Tensor::from(std::move(shape), std::move(v), true), true);
}

Parameter& ParamStore::add_constant(const std::string& name, Shape shape, double fill,
                                    bool trainable) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), fill);
    return insert(name, Tensor::from(std::move(shape), std::move(v), trainable), trainable);
}

Parameter& ParamStore::get(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return *p;
    fail("unknown-parameter", "no parameter named '" + name + "'");
}

const Parameter& ParamStore::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return *p;
    fail("unknown-parameter", "no parameter named '" + name + "'");
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->value.zero_grad();
}

void ParamStore::sgd_step(double lr) {
    for (auto& p : params_) {
        if (!p->trainable) continue;
        const auto& g = p->value.grad();
        if (g.empty()) continue;
        auto& v = p->value.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
}

void ParamStore::save(const std::string& path) const {
    std::vector<std::pair<std::string, Tensor>> entries;
    entries.reserve(params_.size());
    for (const auto& p : params_) entries.emplace_back(p->name, p->value);
    write_checkpoint(path, entries);
}

void ParamStore::load(const std::string& path) {
    auto entries = read_checkpoint(path);
    if (entries.size() != params_.size())
        fail("checkpoint-mismatch", "checkpoint holds " + std::to_string(entries.size()) +
                                        " tensors, model expects " + std::to_string(params_.size()));
    for (auto& [name, tensor] : entries) {
        Parameter& p = get(name);
        if (p.value.shape() != tensor.shape())
            fail("checkpoint-mismatch", "shape of '" + name + "' is " + shape_str(tensor.shape()) +
                                            ", model expects " + shape_str(p.value.shape()));
        p.value.mutable_values() = tensor.values();
    }
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u32(std::ifstream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

bool get_u64(std::ifstream& in, std::uint64_t& v) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace

void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, Tensor>>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("io-write", "cannot open '" + path + "' for writing");
    out.write("THYM", 4);
    put_u32(out, kCheckpointVersion);
    for (const auto& [name, tensor] : entries) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
        for (long d : tensor.shape()) put_u64(out, static_cast<std::uint64_t>(d));
        for (double v : tensor.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(out, bits);
        }
    }
    if (!out) fail("io-write", "failed writing checkpoint '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("missing-file", "cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "THYM", 4) != 0)
        fail("bad-magic", "'" + path + "' is not a THYM checkpoint");
    std::uint32_t version = 0;
    if (!get_u32(in, version) || version != kCheckpointVersion)
        fail("bad-version", "unsupported checkpoint version in '" + path + "'");

    std::vector<std::pair<std::string, Tensor>> entries;
    std::uint32_t name_len = 0;
    while (get_u32(in, name_len)) {
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) fail("bad-magic", "truncated checkpoint '" + path + "'");
        std::uint32_t rank = 0;
        if (!get_u32(in, rank)) fail("bad-magic", "truncated checkpoint '" + path + "'");
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint64_t d = 0;
            if (!get_u64(in, d)) fail("bad-magic", "truncated checkpoint '" + path + "'");
            shape[i] = static_cast<long>(d);
        }
        std::vector<double> values(static_cast<std::size_t>(numel(shape)));
        for (double& v : values) {
            std::uint64_t bits = 0;
            if (!get_u64(in, bits)) fail("bad-magic", "truncated checkpoint '" + path + "'");
            std::memcpy(&v, &bits, 8);
        }
        entries.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    return entries;
}

} // namespace thyme
