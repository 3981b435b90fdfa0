#include "spotv2/nn/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "spotv2/error.hpp"

namespace spotv2::nn {

void ParamSet::add(std::string name, Tensor t) {
    for (const auto& n : names) {
        if (n == name) throw Error(ErrorKind::Internal, fmt::format("duplicate parameter '{}'", name));
    }
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
}

void ParamSet::zero_grad() {
    for (auto& t : tensors) t.zero_grad();
}

std::size_t ParamSet::count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.value().size();
    return n;
}

Tensor& ParamSet::at(const std::string& name) {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return tensors[k];
    }
    throw Error(ErrorKind::Argument, fmt::format("no parameter named '{}'", name));
}

OptimConfig optim_from_json(const nlohmann::json& j) {
    OptimConfig c;
    c.name = j.value("optimizer", c.name);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.alpha = j.value("alpha", c.alpha);
    return c;
}

nlohmann::json to_json(const OptimConfig& c) {
    return {{"optimizer", c.name}, {"lr", c.lr},   {"beta1", c.beta1},
            {"beta2", c.beta2},    {"eps", c.eps}, {"weight_decay", c.weight_decay},
            {"alpha", c.alpha}};
}

namespace {

class Adam final : public Optimizer {
  public:
    Adam(const OptimConfig& c, bool decoupled) : c_(c), decoupled_(decoupled) {}

    void step(ParamSet& params) override {
        if (m_.empty()) {
            for (const auto& t : params.tensors) {
                m_.emplace_back(t.value().size(), 0.0);
                v_.emplace_back(t.value().size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
        for (std::size_t p = 0; p < params.tensors.size(); ++p) {
            auto& theta = params.tensors[p].value().data;
            const auto& grad = params.tensors[p].grad().data;
            auto& m = m_[p];
            auto& v = v_[p];
            for (std::size_t k = 0; k < theta.size(); ++k) {
                double g = grad[k];
                if (decoupled_) {
                    theta[k] *= 1.0 - c_.lr * c_.weight_decay;
                } else if (c_.weight_decay != 0.0) {
                    g += c_.weight_decay * theta[k];
                }
                m[k] = c_.beta1 * m[k] + (1.0 - c_.beta1) * g;
                v[k] = c_.beta2 * v[k] + (1.0 - c_.beta2) * g * g;
                const double mhat = m[k] / bc1;
                const double vhat = v[k] / bc2;
                theta[k] -= c_.lr * mhat / (std::sqrt(vhat) + c_.eps);
            }
        }
    }

  private:
    OptimConfig c_;
    bool decoupled_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

class RmsProp final : public Optimizer {
  public:
    explicit RmsProp(const OptimConfig& c) : c_(c) {}

    void step(ParamSet& params) override {
        if (sq_.empty()) {
            for (const auto& t : params.tensors) sq_.emplace_back(t.value().size(), 0.0);
        }
        for (std::size_t p = 0; p < params.tensors.size(); ++p) {
            auto& theta = params.tensors[p].value().data;
            const auto& grad = params.tensors[p].grad().data;
            auto& s = sq_[p];
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const double g = grad[k] + c_.weight_decay * theta[k];
                s[k] = c_.alpha * s[k] + (1.0 - c_.alpha) * g * g;
                theta[k] -= c_.lr * g / (std::sqrt(s[k]) + c_.eps);
            }
        }
    }

  private:
    OptimConfig c_;
    std::vector<std::vector<double>> sq_;
};

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(const OptimConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw Error(ErrorKind::Config, fmt::format("learning rate must be positive (got {})", cfg.lr));
    if (cfg.weight_decay < 0.0) throw Error(ErrorKind::Config, "weight_decay must be non-negative");
    if (cfg.name == "adamw") return std::make_unique<Adam>(cfg, true);
    if (cfg.name == "adam") return std::make_unique<Adam>(cfg, false);
    if (cfg.name == "rmsprop") return std::make_unique<RmsProp>(cfg);
    throw Error(ErrorKind::Config, fmt::format("unknown optimizer '{}'", cfg.name));
}

}  // namespace spotv2::nn
