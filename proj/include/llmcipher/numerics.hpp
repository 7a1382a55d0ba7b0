#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "llmcipher/errors.hpp"

namespace llmcipher {

/// ||a - b||_2, accumulated in double regardless of the element type so the
/// result is independent of the vector's storage precision.
template <typename T>
double euclidean_distance(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw DimensionError("euclidean_distance: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

template <typename T>
double euclidean_distance(const std::vector<T>& a, const std::vector<T>& b) {
    return euclidean_distance(std::span<const T>(a), std::span<const T>(b));
}

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero vector");
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

template <typename T>
double cosine_similarity(const std::vector<T>& a, const std::vector<T>& b) {
    return cosine_similarity(std::span<const T>(a), std::span<const T>(b));
}

template <typename T>
bool all_finite(std::span<const T> values) {
    for (const T v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Moment buffers for one parameter tensor.
template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    std::vector<T> first_moment;
    std::vector<T> second_moment;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);

    AdamState() = default;
    explicit AdamState(std::size_t size) : first_moment(size, T(0)), second_moment(size, T(0)) {}
};

/// One bias-corrected Adam update applied in place to `params`.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, T lr);

/// Central-difference gradient of `f` at `x`. Throws NumericError if any
/// evaluation is non-finite.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h = 1e-5);

}  // namespace llmcipher
