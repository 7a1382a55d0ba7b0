#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "llmcipher/errors.hpp"
#include "llmcipher/numerics.hpp"
#include "llmcipher/prng.hpp"

namespace llmcipher {

/// Fully connected stack: affine + ReLU on every layer except the last,
/// which is affine only. Batches are row-major with one sample per row.
template <typename T>
class DenseNetwork {
public:
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

    struct Layer {
        Matrix weight;  // out x in
        Vector bias;    // out
    };

    /// Post-activation outputs of every layer; activations[0] is the input
    /// batch and activations.back() holds the raw outputs (logits).
    struct Trace {
        std::vector<Matrix> activations;
    };

    struct Gradients {
        std::vector<Matrix> weight;
        std::vector<Vector> bias;
    };

    DenseNetwork() = default;

    /// Zero-initialised network with the given layer widths.
    explicit DenseNetwork(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        if (dims_.size() < 2) throw ConfigError("network needs at least an input and an output width");
        for (const auto d : dims_)
            if (d == 0) throw ConfigError("network layer widths must be positive");
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
            layers_.push_back({Matrix::Zero(dims_[l + 1], dims_[l]), Vector::Zero(dims_[l + 1])});
    }

    /// Uniform fan-in initialisation U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
    static DenseNetwork he_uniform(std::vector<std::size_t> dims, std::uint64_t seed) {
        DenseNetwork net(std::move(dims));
        Pcg32 rng(seed, 0);
        for (auto& layer : net.layers_) {
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
                layer.weight.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
        }
        return net;
    }

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    std::size_t input_dim() const noexcept { return dims_.front(); }
    std::size_t output_dim() const noexcept { return dims_.back(); }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    Trace forward(const Matrix& batch) const {
        if (static_cast<std::size_t>(batch.cols()) != input_dim())
            throw DimensionError("network input width " + std::to_string(batch.cols()) + ", expected " +
                                 std::to_string(input_dim()));
        Trace trace;
        trace.activations.reserve(layers_.size() + 1);
        trace.activations.push_back(batch);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            Matrix z = trace.activations.back() * layer.weight.transpose();
            z.rowwise() += layer.bias.transpose();
            if (l + 1 < layers_.size()) z = z.cwiseMax(T(0));
            trace.activations.push_back(std::move(z));
        }
        return trace;
    }

    Matrix output(const Matrix& batch) const { return std::move(forward(batch).activations.back()); }

    /// Backpropagates dLoss/dOutput (same shape as the output batch).
    Gradients backward(const Trace& trace, const Matrix& output_grad) const {
        Gradients g;
        g.weight.resize(layers_.size());
        g.bias.resize(layers_.size());
        Matrix delta = output_grad;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const Matrix& input = trace.activations[l];
            g.weight[l] = delta.transpose() * input;
            g.bias[l] = delta.colwise().sum().transpose();
            if (l == 0) break;
            Matrix upstream = delta * layers_[l].weight;
            // ReLU derivative: the post-activation is positive exactly where the pre-activation was.
            delta = (input.array() > T(0)).select(upstream, Matrix::Zero(upstream.rows(), upstream.cols()));
        }
        return g;
    }

    /// Parameters flattened layer by layer as (weights row-major, then bias).
    std::vector<T> flatten() const {
        std::vector<T> out;
        out.reserve(parameter_count());
        for (const auto& l : layers_) {
            out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
            out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
        }
        return out;
    }

    void assign(std::span<const T> flat) {
        if (flat.size() != parameter_count()) throw DimensionError("parameter vector has the wrong length");
        std::size_t at = 0;
        for (auto& l : layers_) {
            std::copy_n(flat.begin() + at, l.weight.size(), l.weight.data());
            at += static_cast<std::size_t>(l.weight.size());
            std::copy_n(flat.begin() + at, l.bias.size(), l.bias.data());
            at += static_cast<std::size_t>(l.bias.size());
        }
    }

    template <typename U>
    DenseNetwork<U> cast() const {
        DenseNetwork<U> out(dims_);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            out.layers()[l].weight = layers_[l].weight.template cast<U>();
            out.layers()[l].bias = layers_[l].bias.template cast<U>();
        }
        return out;
    }

    bool parameters_finite() const {
        for (const auto& l : layers_)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    bool operator==(const DenseNetwork& other) const {
        if (dims_ != other.dims_) return false;
        for (std::size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].weight != other.layers_[l].weight || layers_[l].bias != other.layers_[l].bias)
                return false;
        return true;
    }

private:
    std::vector<std::size_t> dims_;
    std::vector<Layer> layers_;
};

/// Adam over every weight and bias tensor of a DenseNetwork.
template <typename T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(const DenseNetwork<T>& net) {
        for (const auto& l : net.layers()) {
            states_.emplace_back(static_cast<std::size_t>(l.weight.size()));
            states_.emplace_back(static_cast<std::size_t>(l.bias.size()));
        }
    }

    void step(DenseNetwork<T>& net, const typename DenseNetwork<T>::Gradients& grads, T lr) {
        auto& layers = net.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& w = layers[l].weight;
            auto& b = layers[l].bias;
            adam_step<T>({w.data(), static_cast<std::size_t>(w.size())},
                         {grads.weight[l].data(), static_cast<std::size_t>(grads.weight[l].size())},
                         states_[2 * l], lr);
            adam_step<T>({b.data(), static_cast<std::size_t>(b.size())},
                         {grads.bias[l].data(), static_cast<std::size_t>(grads.bias[l].size())},
                         states_[2 * l + 1], lr);
        }
    }

    std::uint64_t steps() const { return states_.empty() ? 0 : states_.front().step; }

private:
    std::vector<AdamState<T>> states_;
};

/// Copies a list of vectors into a row-major batch matrix.
template <typename T, typename Rows>
typename DenseNetwork<T>::Matrix to_batch(const Rows& rows, std::size_t width) {
    typename DenseNetwork<T>::Matrix batch(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        if (row.size() != width)
            throw DimensionError("row width " + std::to_string(row.size()) + ", expected " + std::to_string(width));
        for (std::size_t c = 0; c < width; ++c) batch(r, static_cast<Eigen::Index>(c)) = static_cast<T>(row[c]);
        ++r;
    }
    return batch;
}

/// `layers:[{w_b64, b_b64}, ...]` with little-endian f32 payloads, weights row-major out x in.
nlohmann::json layers_to_json(const DenseNetwork<float>& net);
DenseNetwork<float> layers_from_json(const std::vector<std::size_t>& dims, const nlohmann::json& layers);

}  // namespace llmcipher
