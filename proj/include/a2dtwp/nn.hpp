// Copyright 2026 The a2dtwp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Fully-connected classifier: ReLU hidden layers, softmax output, mean
// cross-entropy loss, momentum SGD with L2 weight decay.
//
// Gradients are accumulated per sample and combined by pairwise (midpoint
// split) summation. Splitting a power-of-two batch into contiguous equal
// worker slices therefore produces subtrees of the same summation tree, and
// the gathered result is bit-identical for any power-of-two worker count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2dtwp {
namespace nn {

class ShapeMismatch : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// Dense layer; weights are row-major fan_in x fan_out (row i feeds every output).
template <typename T>
struct DenseLayer
{
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::vector<T> weights;
    std::vector<T> biases;

    T& weight(std::size_t i, std::size_t j) { return weights[i * fan_out + j]; }
    const T& weight(std::size_t i, std::size_t j) const { return weights[i * fan_out + j]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

template <typename T>
class BasicNetwork
{
  public:
    BasicNetwork() = default;

    /// widths = {inputs, hidden..., classes}; parameters start at zero.
    explicit BasicNetwork(const std::vector<std::size_t>& widths)
    {
        if (widths.size() < 2)
            throw ShapeMismatch("a network needs at least an input and an output width");
        for (std::size_t w : widths)
            if (w == 0)
                throw ShapeMismatch("layer widths must be positive");
        for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        {
            DenseLayer<T> layer;
            layer.fan_in = widths[l];
            layer.fan_out = widths[l + 1];
            layer.weights.assign(layer.fan_in * layer.fan_out, T{0});
            layer.biases.assign(layer.fan_out, T{0});
            layers_.push_back(std::move(layer));
        }
    }

    std::size_t layer_count() const noexcept { return layers_.size(); }
    std::size_t input_width() const noexcept { return layers_.empty() ? 0 : layers_.front().fan_in; }
    std::size_t output_width() const noexcept { return layers_.empty() ? 0 : layers_.back().fan_out; }

    std::vector<DenseLayer<T>>& layers() noexcept { return layers_; }
    const std::vector<DenseLayer<T>>& layers() const noexcept { return layers_; }
    DenseLayer<T>& layer(std::size_t l) { return layers_.at(l); }
    const DenseLayer<T>& layer(std::size_t l) const { return layers_.at(l); }

    std::vector<std::size_t> widths() const
    {
        std::vector<std::size_t> w;
        if (layers_.empty())
            return w;
        w.push_back(layers_.front().fan_in);
        for (const auto& layer : layers_)
            w.push_back(layer.fan_out);
        return w;
    }

    std::size_t parameter_count() const noexcept
    {
        std::size_t n = 0;
        for (const auto& layer : layers_)
            n += layer.weights.size() + layer.biases.size();
        return n;
    }

    bool all_finite() const noexcept
    {
        for (const auto& layer : layers_)
        {
            for (T w : layer.weights)
                if (!std::isfinite(w))
                    return false;
            for (T b : layer.biases)
                if (!std::isfinite(b))
                    return false;
        }
        return true;
    }

    template <typename U>
    BasicNetwork<U> cast() const
    {
        BasicNetwork<U> out(widths());
        for (std::size_t l = 0; l < layers_.size(); ++l)
        {
            auto& dst = out.layers()[l];
            const auto& src = layers_[l];
            for (std::size_t k = 0; k < src.weights.size(); ++k)
                dst.weights[k] = static_cast<U>(src.weights[k]);
            for (std::size_t k = 0; k < src.biases.size(); ++k)
                dst.biases[k] = static_cast<U>(src.biases[k]);
        }
        return out;
    }

    friend bool operator==(const BasicNetwork&, const BasicNetwork&) = default;

  private:
    std::vector<DenseLayer<T>> layers_;
};

using Network = BasicNetwork<float>;

/// Zero-mean normal weights with the given variance, zero biases.
template <typename T, typename Rng>
void init_normal(BasicNetwork<T>& net, Rng& rng, double variance = 1e-2)
{
    std::normal_distribution<double> dist(0.0, std::sqrt(variance));
    for (auto& layer : net.layers())
    {
        for (auto& w : layer.weights)
            w = static_cast<T>(dist(rng));
        std::fill(layer.biases.begin(), layer.biases.end(), T{0});
    }
}

/// Per-layer outputs of one forward pass. values[0] is the input batch,
/// values[l + 1] the output of layer l (ReLU for hidden layers, softmax
/// probabilities for the last one), each row-major batch x width.
template <typename T>
struct Activations
{
    std::size_t batch_size = 0;
    std::vector<std::vector<T>> values;
    std::vector<int> labels;
    double loss = 0.0; // mean cross-entropy

    std::span<const T> probabilities() const { return values.back(); }
};

namespace detail {

template <typename T>
void check_labels(std::span<const int> labels, std::size_t classes)
{
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw ShapeMismatch("label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
}

} // namespace detail

template <typename T>
Activations<T> forward(const BasicNetwork<T>& net, std::span<const T> inputs, std::span<const int> labels)
{
    if (net.layer_count() == 0)
        throw ShapeMismatch("network has no layers");
    const std::size_t in = net.input_width();
    const std::size_t n = labels.size();
    if (n == 0)
        throw ShapeMismatch("empty batch");
    if (inputs.size() != n * in)
        throw ShapeMismatch("input holds " + std::to_string(inputs.size()) + " values, expected " +
                            std::to_string(n) + " x " + std::to_string(in));
    detail::check_labels<T>(labels, net.output_width());

    Activations<T> acts;
    acts.batch_size = n;
    acts.labels.assign(labels.begin(), labels.end());
    acts.values.reserve(net.layer_count() + 1);
    acts.values.emplace_back(inputs.begin(), inputs.end());

    for (std::size_t l = 0; l < net.layer_count(); ++l)
    {
        const auto& layer = net.layers()[l];
        const auto& x = acts.values.back();
        std::vector<T> z(n * layer.fan_out);
        for (std::size_t s = 0; s < n; ++s)
        {
            T* zs = z.data() + s * layer.fan_out;
            for (std::size_t j = 0; j < layer.fan_out; ++j)
                zs[j] = layer.biases[j];
            const T* xs = x.data() + s * layer.fan_in;
            for (std::size_t i = 0; i < layer.fan_in; ++i)
            {
                const T xi = xs[i];
                const T* row = layer.weights.data() + i * layer.fan_out;
                for (std::size_t j = 0; j < layer.fan_out; ++j)
                    zs[j] += xi * row[j];
            }
        }

        const bool last = l + 1 == net.layer_count();
        if (!last)
        {
            for (T& v : z)
                v = v > T{0} ? v : T{0};
        }
        else
        {
            double loss = 0.0;
            for (std::size_t s = 0; s < n; ++s)
            {
                T* zs = z.data() + s * layer.fan_out;
                T max = zs[0];
                for (std::size_t j = 1; j < layer.fan_out; ++j)
                    max = std::max(max, zs[j]);
                T sum{0};
                for (std::size_t j = 0; j < layer.fan_out; ++j)
                    sum += std::exp(zs[j] - max);
                const T log_sum = std::log(sum) + max;
                loss += static_cast<double>(log_sum - zs[static_cast<std::size_t>(labels[s])]);
                for (std::size_t j = 0; j < layer.fan_out; ++j)
                    zs[j] = std::exp(zs[j] - log_sum);
            }
            acts.loss = loss / static_cast<double>(n);
        }
        acts.values.push_back(std::move(z));
    }
    return acts;
}

/// Index of the largest output per sample.
template <typename T>
std::vector<int> predict(const BasicNetwork<T>& net, std::span<const T> inputs, std::size_t batch_size)
{
    std::vector<int> dummy(batch_size, 0);
    const auto acts = forward(net, inputs, dummy);
    const auto probs = acts.probabilities();
    const std::size_t c = net.output_width();
    std::vector<int> out(batch_size);
    for (std::size_t s = 0; s < batch_size; ++s)
    {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (probs[s * c + j] > probs[s * c + best])
                best = j;
        out[s] = static_cast<int>(best);
    }
    return out;
}

/// Sum of per-sample loss gradients over `sample_count` samples; divide by
/// sample_count for the gradient of the mean loss.
template <typename T>
struct BasicGradientSet
{
    std::vector<std::vector<T>> weights;
    std::vector<std::vector<T>> biases;
    std::size_t sample_count = 0;

    static BasicGradientSet zeros_like(const BasicNetwork<T>& net)
    {
        BasicGradientSet g;
        for (const auto& layer : net.layers())
        {
            g.weights.emplace_back(layer.weights.size(), T{0});
            g.biases.emplace_back(layer.biases.size(), T{0});
        }
        return g;
    }

    bool matches(const BasicNetwork<T>& net) const noexcept
    {
        if (weights.size() != net.layer_count() || biases.size() != net.layer_count())
            return false;
        for (std::size_t l = 0; l < net.layer_count(); ++l)
            if (weights[l].size() != net.layers()[l].weights.size() ||
                biases[l].size() != net.layers()[l].biases.size())
                return false;
        return true;
    }

    std::size_t byte_size() const noexcept
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += (weights[l].size() + biases[l].size()) * sizeof(T);
        return n;
    }

    BasicGradientSet& operator+=(const BasicGradientSet& other)
    {
        for (std::size_t l = 0; l < weights.size(); ++l)
        {
            for (std::size_t k = 0; k < weights[l].size(); ++k)
                weights[l][k] += other.weights[l][k];
            for (std::size_t k = 0; k < biases[l].size(); ++k)
                biases[l][k] += other.biases[l][k];
        }
        sample_count += other.sample_count;
        return *this;
    }
};

using GradientSet = BasicGradientSet<float>;

namespace detail {

template <typename T>
class BackwardPass
{
  public:
    BackwardPass(const BasicNetwork<T>& net, const Activations<T>& acts) : net_(net), acts_(acts)
    {
        std::size_t depth = 1;
        for (std::size_t n = acts.batch_size; n > 1; n = (n + 1) / 2)
            ++depth;
        scratch_.assign(depth + 1, BasicGradientSet<T>::zeros_like(net));
        std::size_t widest = 0;
        for (const auto& layer : net.layers())
            widest = std::max({widest, layer.fan_in, layer.fan_out});
        delta_.resize(widest);
        delta_prev_.resize(widest);
    }

    BasicGradientSet<T> run(std::size_t begin, std::size_t end)
    {
        reduce(begin, end, 0);
        return std::move(scratch_[0]);
    }

  private:
    // Writes the pairwise sum over samples [begin, end) into scratch_[level].
    void reduce(std::size_t begin, std::size_t end, std::size_t level)
    {
        if (end - begin == 1)
        {
            single(begin, scratch_[level]);
            return;
        }
        const std::size_t mid = begin + (end - begin) / 2;
        reduce(begin, mid, level);
        reduce(mid, end, level + 1);
        auto& acc = scratch_[level];
        const auto& right = scratch_[level + 1];
        for (std::size_t l = 0; l < acc.weights.size(); ++l)
        {
            T* dw = acc.weights[l].data();
            const T* rw = right.weights[l].data();
            for (std::size_t k = 0, e = acc.weights[l].size(); k < e; ++k)
                dw[k] += rw[k];
            for (std::size_t k = 0; k < acc.biases[l].size(); ++k)
                acc.biases[l][k] += right.biases[l][k];
        }
        acc.sample_count = end - begin;
    }

    void single(std::size_t s, BasicGradientSet<T>& out)
    {
        const std::size_t layers = net_.layer_count();
        const std::size_t classes = net_.output_width();
        const T* probs = acts_.values[layers].data() + s * classes;
        for (std::size_t j = 0; j < classes; ++j)
            delta_[j] = probs[j];
        delta_[static_cast<std::size_t>(acts_.labels[s])] -= T{1};

        for (std::size_t l = layers; l-- > 0;)
        {
            const auto& layer = net_.layers()[l];
            const T* a_prev = acts_.values[l].data() + s * layer.fan_in;
            T* dw = out.weights[l].data();
            for (std::size_t i = 0; i < layer.fan_in; ++i)
            {
                const T ai = a_prev[i];
                T* row = dw + i * layer.fan_out;
                for (std::size_t j = 0; j < layer.fan_out; ++j)
                    row[j] = ai * delta_[j];
            }
            for (std::size_t j = 0; j < layer.fan_out; ++j)
                out.biases[l][j] = delta_[j];

            if (l == 0)
                break;
            // Propagate through W and the ReLU of the previous layer's output.
            for (std::size_t i = 0; i < layer.fan_in; ++i)
            {
                if (!(a_prev[i] > T{0}))
                {
                    delta_prev_[i] = T{0};
                    continue;
                }
                const T* row = layer.weights.data() + i * layer.fan_out;
                T sum{0};
                for (std::size_t j = 0; j < layer.fan_out; ++j)
                    sum += row[j] * delta_[j];
                delta_prev_[i] = sum;
            }
            std::swap(delta_, delta_prev_);
        }
        out.sample_count = 1;
    }

    const BasicNetwork<T>& net_;
    const Activations<T>& acts_;
    std::vector<BasicGradientSet<T>> scratch_;
    std::vector<T> delta_;
    std::vector<T> delta_prev_;
};

} // namespace detail

/// Summed per-sample gradients over every sample of `acts`.
template <typename T>
BasicGradientSet<T> backward(const BasicNetwork<T>& net, const Activations<T>& acts)
{
    if (acts.values.size() != net.layer_count() + 1 || acts.batch_size == 0)
        throw ShapeMismatch("activations do not come from a forward pass of this network");
    for (std::size_t l = 0; l <= net.layer_count(); ++l)
    {
        const std::size_t width = l == 0 ? net.input_width() : net.layers()[l - 1].fan_out;
        if (acts.values[l].size() != acts.batch_size * width)
            throw ShapeMismatch("activation " + std::to_string(l) + " has the wrong width");
    }
    detail::check_labels<T>(acts.labels, net.output_width());
    detail::BackwardPass<T> pass(net, acts);
    return pass.run(0, acts.batch_size);
}

struct SgdConfig
{
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 64;
    // Exponential step decay: lr * factor^(floor(step / every)). 0 disables.
    std::size_t lr_decay_every = 0;
    double lr_decay_factor = 0.16;

    void validate() const
    {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw std::invalid_argument("learning_rate must be finite and >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("momentum must be in [0, 1)");
        if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
            throw std::invalid_argument("weight_decay must be finite and >= 0");
        if (batch_size == 0)
            throw std::invalid_argument("batch_size must be >= 1");
        if (lr_decay_every > 0 && !(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
            throw std::invalid_argument("lr_decay_factor must be in (0, 1]");
    }

    double learning_rate_at(std::size_t step) const
    {
        if (lr_decay_every == 0)
            return learning_rate;
        return learning_rate * std::pow(lr_decay_factor, static_cast<double>(step / lr_decay_every));
    }
};

/// Momentum buffers and the update counter.
template <typename T>
struct BasicSgdState
{
    std::vector<std::vector<T>> weight_velocity;
    std::vector<std::vector<T>> bias_velocity;
    std::size_t step = 0;

    static BasicSgdState for_network(const BasicNetwork<T>& net)
    {
        BasicSgdState s;
        for (const auto& layer : net.layers())
        {
            s.weight_velocity.emplace_back(layer.weights.size(), T{0});
            s.bias_velocity.emplace_back(layer.biases.size(), T{0});
        }
        return s;
    }
};

using SgdState = BasicSgdState<float>;

/// Pairwise sum of contributions in the given order.
template <typename T>
BasicGradientSet<T> reduce_pairwise(std::span<const BasicGradientSet<T>> parts)
{
    if (parts.empty())
        throw ShapeMismatch("no gradient contributions");
    if (parts.size() == 1)
        return parts[0];
    const std::size_t mid = parts.size() / 2;
    BasicGradientSet<T> left = reduce_pairwise(parts.first(mid));
    left += reduce_pairwise(parts.subspan(mid));
    return left;
}

/// Averages the contributions over their total sample count, adds L2 decay on
/// weights, then v <- m v + g and w <- w - lr v. Biases are not decayed.
template <typename T>
void gather_and_update(BasicNetwork<T>& net, std::span<const BasicGradientSet<T>> contributions,
                       const SgdConfig& cfg, BasicSgdState<T>& state)
{
    for (const auto& c : contributions)
        if (!c.matches(net))
            throw ShapeMismatch("gradient contribution does not match the network shape");
    if (state.weight_velocity.size() != net.layer_count())
        state = BasicSgdState<T>::for_network(net);

    const BasicGradientSet<T> total = reduce_pairwise(contributions);
    if (total.sample_count == 0)
        throw ShapeMismatch("gradient contributions cover zero samples");

    const T n = static_cast<T>(total.sample_count);
    const T lr = static_cast<T>(cfg.learning_rate_at(state.step));
    const T mom = static_cast<T>(cfg.momentum);
    const T decay = static_cast<T>(cfg.weight_decay);

    for (std::size_t l = 0; l < net.layer_count(); ++l)
    {
        auto& layer = net.layers()[l];
        auto& vw = state.weight_velocity[l];
        for (std::size_t k = 0; k < layer.weights.size(); ++k)
        {
            const T g = total.weights[l][k] / n + decay * layer.weights[k];
            vw[k] = mom * vw[k] + g;
            layer.weights[k] -= lr * vw[k];
        }
        auto& vb = state.bias_velocity[l];
        for (std::size_t k = 0; k < layer.biases.size(); ++k)
        {
            const T g = total.biases[l][k] / n;
            vb[k] = mom * vb[k] + g;
            layer.biases[k] -= lr * vb[k];
        }
    }
    ++state.step;
    if (!net.all_finite())
        throw std::runtime_error("non-finite parameter after update step " + std::to_string(state.step));
}

} // namespace nn
} // namespace a2dtwp
