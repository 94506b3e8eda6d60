#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "thyme/tensor.hpp"

namespace thyme {

struct Parameter {
    std::string name;
    Tensor value; // leaf tensor; requires_grad mirrors trainable
    bool trainable = true;
};

// Owns every learnable tensor of a model. Insertion order is the checkpoint
// order; names are unique. One training loop owns a store at a time.
class ParamStore {
public:
    // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], stream seeded from
    // (seed, name) so the draw is independent of allocation order.
    Parameter& add_uniform(const std::string& name, Shape shape, long fan_in, std::uint64_t seed);
    Parameter& add_constant(const std::string& name, Shape shape, double fill, bool trainable = true);

    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

    void zero_grads();
    void sgd_step(double lr); // value -= lr * grad on trainable params

    void save(const std::string& path) const;
    void load(const std::string& path); // binds by name; shape mismatch is an error

private:
    Parameter& insert(const std::string& name, Tensor value, bool trainable);
    std::vector<std::unique_ptr<Parameter>> params_;
};

// Flat binary checkpoint: magic "THYM", u32 version, then per record
// u32 name length, name bytes, u32 rank, u64 dims, f64 payload.
// All integers and doubles little-endian.
void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);

} // namespace thyme
