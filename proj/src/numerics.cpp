#include "llmcipher/numerics.hpp"

#include <numbers>

#include "llmcipher/prng.hpp"

namespace llmcipher {

double Pcg32::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, T lr) {
    if (params.size() != grads.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    if (state.first_moment.empty() && state.step == 0) {
        state.first_moment.assign(params.size(), T(0));
        state.second_moment.assign(params.size(), T(0));
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
        throw DimensionError("adam_step: moment buffers do not match parameter shape");
    if (!(lr > T(0))) throw DomainError("adam_step: learning rate must be positive");

    ++state.step;
    const T b1 = state.beta1, b2 = state.beta2;
    const auto t = static_cast<T>(state.step);
    const T correction1 = T(1) - std::pow(b1, t);
    const T correction2 = T(1) - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        T& m = state.first_moment[i];
        T& v = state.second_moment[i];
        m = b1 * m + (T(1) - b1) * g;
        v = b2 * v + (T(1) - b2) * g * g;
        const T m_hat = m / correction1;
        const T v_hat = v / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, float);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double);

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h) {
    if (!(h > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                               std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace llmcipher
