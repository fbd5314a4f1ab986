#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lrnmt/tensor.hpp"

namespace lrnmt {

// Adam / AdamW state. Slots are parallel to the parameter list handed to
// each step; the step counter advances once per step, not per parameter.
template <class T>
struct OptimizerState {
    struct Slot {
        std::vector<T> m, v;
    };
    std::vector<Slot> slots;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;  // AdamW only

    void bind(const std::vector<Var<T>>& params) {
        slots.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            slots[i].m.assign(params[i]->numel(), T(0));
            slots[i].v.assign(params[i]->numel(), T(0));
        }
    }
};

namespace detail {

template <class T>
void adam_like_step(std::vector<Var<T>>& params, OptimizerState<T>& state, double lr,
                    bool decoupled_decay) {
    if (state.slots.size() != params.size()) state.bind(params);
    // Validate all gradients before touching any parameter so a bad step
    // leaves every parameter untouched.
    for (const Var<T>& p : params) {
        if (p->grad.empty()) continue;
        for (T g : p->grad)
            if (!std::isfinite(static_cast<double>(g)))
                throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var<T>& p = params[i];
        auto& slot = state.slots[i];
        if (slot.m.size() != p->numel())
            throw ShapeError("optimizer slot does not match parameter '" + p->name + "'");
        if (decoupled_decay && state.weight_decay > 0) {
            const T decay = static_cast<T>(lr * state.weight_decay);
            for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] -= decay * p->value[j];
        }
        if (p->grad.empty()) continue;  // zero gradient: Adam update is a no-op
        for (std::size_t j = 0; j < p->value.size(); ++j) {
            const double g = static_cast<double>(p->grad[j]);
            const double m = state.beta1 * static_cast<double>(slot.m[j]) + (1.0 - state.beta1) * g;
            const double v = state.beta2 * static_cast<double>(slot.v[j]) + (1.0 - state.beta2) * g * g;
            slot.m[j] = static_cast<T>(m);
            slot.v[j] = static_cast<T>(v);
            const double update = (m / bc1) / (std::sqrt(v / bc2) + state.eps);
            p->value[j] -= static_cast<T>(lr * update);
        }
    }
}

}  // namespace detail

template <class T>
void adam_step(std::vector<Var<T>>& params, OptimizerState<T>& state, double lr) {
    detail::adam_like_step(params, state, lr, false);
}

// AdamW: decoupled weight decay lr*wd*theta applied before the Adam update.
template <class T>
void adamw_step(std::vector<Var<T>>& params, OptimizerState<T>& state, double lr) {
    detail::adam_like_step(params, state, lr, true);
}

template <class T>
void zero_grads(std::vector<Var<T>>& params) {
    for (Var<T>& p : params) p->zero_grad();
}

// --- learning-rate schedules ------------------------------------------------

enum class ScheduleKind { kConstant, kLinear, kPlateau, kCyclic };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "constant") return ScheduleKind::kConstant;
    if (s == "linear") return ScheduleKind::kLinear;
    if (s == "plateau") return ScheduleKind::kPlateau;
    if (s == "cyclic") return ScheduleKind::kCyclic;
    throw ConfigError("unknown schedule kind: " + s);
}

inline const char* schedule_kind_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::kConstant: return "constant";
        case ScheduleKind::kLinear: return "linear";
        case ScheduleKind::kPlateau: return "plateau";
        case ScheduleKind::kCyclic: return "cyclic";
    }
    throw ConfigError("unknown schedule kind");
}

struct LrSchedule {
    ScheduleKind kind = ScheduleKind::kConstant;
    double base_lr = 1e-4;
    double max_lr = 0.0;          // cyclic peak
    double min_lr = 1e-10;
    double decrease_factor = 0.5; // plateau
    std::int64_t step_size = 1;   // cyclic half-period, in steps
    std::int64_t total_steps = 0; // linear horizon
    int patience = 4;             // plateau: validations without improvement
};

// Emitted learning rate at step t. `val_history` is the sequence of
// validation scores seen so far (higher is better); only the plateau
// schedule consumes it.
inline double lr_at(const LrSchedule& schedule, std::int64_t t,
                    const std::vector<double>& val_history = {}) {
    if (t < 0) throw ConfigError("lr_at: negative step");
    double lr;
    switch (schedule.kind) {
        case ScheduleKind::kConstant:
            lr = schedule.base_lr;
            break;
        case ScheduleKind::kLinear: {
            if (schedule.total_steps <= 0)
                throw ConfigError("linear schedule needs total_steps > 0");
            const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(schedule.total_steps);
            lr = schedule.base_lr * std::max(0.0, frac);
            break;
        }
        case ScheduleKind::kPlateau: {
            if (schedule.patience <= 0) throw ConfigError("plateau schedule needs patience > 0");
            int decays = 0;
            int stagnant = 0;
            double best = -std::numeric_limits<double>::infinity();
            for (double score : val_history) {
                if (score > best) {
                    best = score;
                    stagnant = 0;
                } else if (++stagnant >= schedule.patience) {
                    ++decays;
                    stagnant = 0;
                }
            }
            lr = schedule.base_lr * std::pow(schedule.decrease_factor, decays);
            break;
        }
        case ScheduleKind::kCyclic: {
            if (schedule.step_size <= 0) throw ConfigError("cyclic schedule needs step_size > 0");
            if (schedule.max_lr <= 0) throw ConfigError("cyclic schedule needs max_lr > 0");
            const double s = static_cast<double>(schedule.step_size);
            const double cycle = std::floor(1.0 + static_cast<double>(t) / (2.0 * s));
            const double x = std::abs(static_cast<double>(t) / s - 2.0 * cycle + 1.0);
            lr = schedule.min_lr + (schedule.max_lr - schedule.min_lr) * std::max(0.0, 1.0 - x);
            break;
        }
        default:
            throw ConfigError("unknown schedule kind");
    }
    const double hi = std::max(schedule.base_lr, schedule.max_lr);
    return std::min(std::max(lr, schedule.min_lr), hi);
}

}  // namespace lrnmt
