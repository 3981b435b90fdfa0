#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/nn/tensor.hpp"

namespace spotv2::nn {

/// Named trainable tensors in a fixed order (checkpoint and optimizer order).
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    void add(std::string name, Tensor t);
    void zero_grad();
    std::size_t count() const;  // scalar parameters
    Tensor& at(const std::string& name);
};

struct OptimConfig {
    std::string name = "adamw";  // adamw | adam | rmsprop
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double alpha = 0.99;  // rmsprop smoothing
};

OptimConfig optim_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OptimConfig& c);

class Optimizer {
  public:
    virtual ~Optimizer() = default;
    /// Updates every tensor in place from its accumulated gradient.
    virtual void step(ParamSet& params) = 0;
};

/// Adam with weight decay folded into the gradient; AdamW decouples it.
/// RMSprop follows the uncentred form without momentum.
std::unique_ptr<Optimizer> make_optimizer(const OptimConfig& cfg);

}  // namespace spotv2::nn
