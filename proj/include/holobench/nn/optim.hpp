#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "holobench/nn/tensor.hpp"

namespace holo::nn {

enum class OptimizerKind { rmsprop, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::rmsprop ? "rmsprop" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "rmsprop") return OptimizerKind::rmsprop;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::rmsprop;
    double learning_rate = 1e-4;
    double rho = 0.9;      // RMSProp decay
    double beta1 = 0.9;    // ADAM
    double beta2 = 0.999;  // ADAM
    double eps = 1e-8;
};

// RMSProp / ADAM over a fixed parameter list. Moments start at zero.
class Optimizer {
public:
    Optimizer(std::vector<Param*> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        if (!(cfg_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        for (Param* p : params_) {
            first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

    void step() {
        for (Param* p : params_)
            if (!p->grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
        ++t_;
        const double lr = cfg_.learning_rate;
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Param& p = *params_[k];
            if (cfg_.kind == OptimizerKind::rmsprop) {
                second_[k] = cfg_.rho * second_[k].array() + (1.0 - cfg_.rho) * p.grad.array().square();
                p.value.array() -= lr * p.grad.array() / (second_[k].array().sqrt() + cfg_.eps);
            } else {
                first_[k] = cfg_.beta1 * first_[k].array() + (1.0 - cfg_.beta1) * p.grad.array();
                second_[k] = cfg_.beta2 * second_[k].array() + (1.0 - cfg_.beta2) * p.grad.array().square();
                const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
                const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
                p.value.array() -=
                    lr * (first_[k].array() / c1) / ((second_[k].array() / c2).sqrt() + cfg_.eps);
            }
        }
    }

    void visit_state(const std::string& prefix, const StateVisitor& visit) {
        for (std::size_t k = 0; k < params_.size(); ++k) {
            visit(prefix + "." + std::to_string(k) + ".m", first_[k]);
            visit(prefix + "." + std::to_string(k) + ".v", second_[k]);
        }
        step_tensor_ = Matrix::Constant(1, 1, static_cast<double>(t_));
        visit(prefix + ".t", step_tensor_);
        t_ = static_cast<long long>(step_tensor_(0, 0));
    }

    void set_learning_rate(double lr) {
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        cfg_.learning_rate = lr;
    }

    long long steps() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    std::vector<Param*> params_;
    OptimizerConfig cfg_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long long t_ = 0;
    Matrix step_tensor_;
};

} // namespace holo::nn
