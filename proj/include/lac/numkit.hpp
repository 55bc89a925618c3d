#pragma once

// Dense feed-forward networks with hand-written backward passes. Templated on
// the parameter scalar: the library runs on float, gradient checks on double.

#include "lac/binary_io.hpp"
#include "lac/error.hpp"
#include "lac/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <string>
#include <vector>

namespace lac {

enum class Activation : std::uint8_t { identity = 0, relu = 1 };
enum class Mode { train, eval };

template <class T>
struct BasicMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    BasicMatrix() = default;
    BasicMatrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool all_finite() const
    {
        return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
    }

    bool operator==(const BasicMatrix&) const = default;
};

using Matrix = BasicMatrix<float>;

struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::identity;
    double dropout = 0.0;
};

template <class T>
struct BasicLayer {
    BasicMatrix<T> weight; // out x in
    std::vector<T> bias;
    Activation activation = Activation::identity;
    double dropout = 0.0;

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }
    bool operator==(const BasicLayer&) const = default;
};

namespace detail {
inline std::uint64_t next_generation()
{
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
} // namespace detail

template <class T>
class BasicDenseNet {
public:
    BasicDenseNet() = default;

    /// Glorot-uniform weights, zero biases.
    BasicDenseNet(const std::vector<LayerSpec>& specs, Rng& rng)
    {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            if (s.in_dim == 0 || s.out_dim == 0) throw ConfigError("layer with zero width");
            if (i > 0 && specs[i - 1].out_dim != s.in_dim)
                throw ConfigError("layer " + std::to_string(i) + " input dim does not match previous output");
            if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
            BasicLayer<T> layer;
            layer.weight = BasicMatrix<T>(s.out_dim, s.in_dim);
            layer.bias.assign(s.out_dim, T{});
            layer.activation = s.activation;
            layer.dropout = s.dropout;
            const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
            for (auto& w : layer.weight.data) w = static_cast<T>(rng.uniform(-limit, limit));
            layers_.push_back(std::move(layer));
        }
    }

    explicit BasicDenseNet(std::vector<BasicLayer<T>> layers) : layers_(std::move(layers)) { check_shapes(); }

    /// Same architecture and parameters, different scalar type.
    template <class U>
    BasicDenseNet<U> cast() const
    {
        std::vector<BasicLayer<U>> out;
        for (const auto& l : layers_) {
            BasicLayer<U> c;
            c.weight = BasicMatrix<U>(l.weight.rows, l.weight.cols);
            std::transform(l.weight.data.begin(), l.weight.data.end(), c.weight.data.begin(),
                [](T v) { return static_cast<U>(v); });
            c.bias.assign(l.bias.begin(), l.bias.end());
            c.activation = l.activation;
            c.dropout = l.dropout;
            out.push_back(std::move(c));
        }
        return BasicDenseNet<U>(std::move(out));
    }

    const std::vector<BasicLayer<T>>& layers() const { return layers_; }

    /// Mutable access invalidates outstanding tapes.
    std::vector<BasicLayer<T>>& mutable_layers()
    {
        touch();
        return layers_;
    }

    std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.data.size() + l.bias.size();
        return n;
    }

    bool all_finite() const
    {
        for (const auto& l : layers_) {
            if (!l.weight.all_finite()) return false;
            for (auto v : l.bias)
                if (!std::isfinite(v)) return false;
        }
        return true;
    }

    /// Flat parameter order: layer by layer, weights row-major then biases.
    T& parameter(std::size_t index)
    {
        touch();
        return const_cast<T&>(std::as_const(*this).parameter(index));
    }

    const T& parameter(std::size_t index) const
    {
        for (const auto& l : layers_) {
            if (index < l.weight.data.size()) return l.weight.data[index];
            index -= l.weight.data.size();
            if (index < l.bias.size()) return l.bias[index];
            index -= l.bias.size();
        }
        throw UsageError("parameter index out of range");
    }

    std::uint64_t generation() const noexcept { return generation_; }
    void touch() noexcept { generation_ = detail::next_generation(); }

    std::vector<LayerSpec> specs() const
    {
        std::vector<LayerSpec> out;
        for (const auto& l : layers_) out.push_back({l.in_dim(), l.out_dim(), l.activation, l.dropout});
        return out;
    }

    bool operator==(const BasicDenseNet& other) const { return layers_ == other.layers_; }

private:
    void check_shapes() const
    {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            if (l.bias.size() != l.out_dim()) throw ConfigError("bias length does not match layer width");
            if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
                throw ConfigError("layer " + std::to_string(i) + " input dim does not match previous output");
        }
    }

    std::vector<BasicLayer<T>> layers_;
    std::uint64_t generation_ = detail::next_generation();
};

using DenseNet = BasicDenseNet<float>;

/// Activation record of one forward pass.
template <class T>
struct Tape {
    std::uint64_t generation = 0;
    std::vector<std::vector<T>> inputs;      // input to each layer
    std::vector<std::vector<T>> pre;         // pre-activation of each layer
    std::vector<std::vector<T>> dropout;     // per-unit scale, empty when inactive
};

template <class T>
struct ForwardResult {
    std::vector<T> output;
    Tape<T> tape;
};

template <class T>
struct BasicGradients {
    std::vector<BasicMatrix<T>> weight;
    std::vector<std::vector<T>> bias;
    std::vector<T> input;

    static BasicGradients zeros_like(const BasicDenseNet<T>& net)
    {
        BasicGradients g;
        for (const auto& l : net.layers()) {
            g.weight.emplace_back(l.weight.rows, l.weight.cols);
            g.bias.emplace_back(l.bias.size(), T{});
        }
        g.input.assign(net.input_dim(), T{});
        return g;
    }

    void add(const BasicGradients& other)
    {
        for (std::size_t i = 0; i < weight.size(); ++i) {
            for (std::size_t j = 0; j < weight[i].data.size(); ++j) weight[i].data[j] += other.weight[i].data[j];
            for (std::size_t j = 0; j < bias[i].size(); ++j) bias[i][j] += other.bias[i][j];
        }
    }

    void scale(T factor)
    {
        for (auto& w : weight)
            for (auto& v : w.data) v *= factor;
        for (auto& b : bias)
            for (auto& v : b) v *= factor;
    }

    const T& flat(std::size_t index) const
    {
        for (std::size_t i = 0; i < weight.size(); ++i) {
            if (index < weight[i].data.size()) return weight[i].data[index];
            index -= weight[i].data.size();
            if (index < bias[i].size()) return bias[i][index];
            index -= bias[i].size();
        }
        throw UsageError("gradient index out of range");
    }

    bool all_finite() const
    {
        for (std::size_t i = 0; i < weight.size(); ++i) {
            if (!weight[i].all_finite()) return false;
            for (auto v : bias[i])
                if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

using Gradients = BasicGradients<float>;

/// `rng` is consulted only for dropout in train mode and may be null otherwise.
template <class T>
ForwardResult<T> forward(const BasicDenseNet<T>& net, std::span<const T> input, Mode mode = Mode::eval,
    Rng* rng = nullptr)
{
    if (net.layers().empty()) throw ConfigError("forward through an empty network");
    if (input.size() != net.input_dim())
        throw ConfigError("input length " + std::to_string(input.size()) + " does not match network input dim " +
            std::to_string(net.input_dim()));

    ForwardResult<T> result;
    auto& tape = result.tape;
    tape.generation = net.generation();
    std::vector<T> x(input.begin(), input.end());
    for (const auto& layer : net.layers()) {
        const std::size_t out = layer.out_dim();
        const std::size_t in = layer.in_dim();
        std::vector<T> z(out);
        for (std::size_t r = 0; r < out; ++r) {
            double acc = static_cast<double>(layer.bias[r]);
            const T* w = layer.weight.data.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) acc += static_cast<double>(w[c]) * static_cast<double>(x[c]);
            z[r] = static_cast<T>(acc);
        }
        std::vector<T> a = z;
        if (layer.activation == Activation::relu)
            for (auto& v : a) v = v > T{} ? v : T{};
        std::vector<T> drop;
        if (mode == Mode::train && layer.dropout > 0.0) {
            if (rng == nullptr) throw UsageError("train-mode dropout needs a random stream");
            const T keep_scale = static_cast<T>(1.0 / (1.0 - layer.dropout));
            drop.resize(out);
            for (std::size_t r = 0; r < out; ++r) {
                drop[r] = rng->uniform() < layer.dropout ? T{} : keep_scale;
                a[r] *= drop[r];
            }
        }
        tape.inputs.push_back(std::move(x));
        tape.pre.push_back(std::move(z));
        tape.dropout.push_back(std::move(drop));
        x = std::move(a);
    }
    result.output = std::move(x);
    return result;
}

template <class T>
std::vector<T> predict(const BasicDenseNet<T>& net, std::span<const T> input)
{
    return forward(net, input, Mode::eval).output;
}

template <class T>
std::vector<T> predict(const BasicDenseNet<T>& net, std::span<T> input)
{
    return predict(net, std::span<const T>(input));
}

template <class T>
BasicGradients<T> backward(const BasicDenseNet<T>& net, const Tape<T>& tape, std::span<const T> output_gradient)
{
    if (tape.generation != net.generation() || tape.inputs.size() != net.layers().size())
        throw UsageError("tape does not belong to the current parameters of this network");
    if (output_gradient.size() != net.output_dim()) throw ConfigError("output gradient has wrong length");

    auto grads = BasicGradients<T>::zeros_like(net);
    std::vector<T> delta(output_gradient.begin(), output_gradient.end());
    for (std::size_t li = net.layers().size(); li-- > 0;) {
        const auto& layer = net.layers()[li];
        const std::size_t out = layer.out_dim();
        const std::size_t in = layer.in_dim();
        if (!tape.dropout[li].empty())
            for (std::size_t r = 0; r < out; ++r) delta[r] *= tape.dropout[li][r];
        if (layer.activation == Activation::relu)
            for (std::size_t r = 0; r < out; ++r)
                if (!(tape.pre[li][r] > T{})) delta[r] = T{};
        const auto& x = tape.inputs[li];
        std::vector<double> dx(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            const T d = delta[r];
            if (d == T{}) continue;
            grads.bias[li][r] = d;
            T* gw = grads.weight[li].data.data() + r * in;
            const T* w = layer.weight.data.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) {
                gw[c] = d * x[c];
                dx[c] += static_cast<double>(d) * static_cast<double>(w[c]);
            }
        }
        delta.assign(in, T{});
        for (std::size_t c = 0; c < in; ++c) delta[c] = static_cast<T>(dx[c]);
    }
    grads.input = std::move(delta);
    return grads;
}

/// Max-shifted softmax evaluated in double precision.
template <class T>
std::vector<double> softmax(std::span<const T> logits)
{
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    double m = -std::numeric_limits<double>::infinity();
    for (auto v : logits) m = std::max(m, static_cast<double>(v));
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - m);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

template <class T>
std::vector<double> softmax(const std::vector<T>& logits)
{
    return softmax(std::span<const T>(logits));
}

inline constexpr double kProbabilityFloor = 1e-12;

/// -log p[label], with p floored so confident mistakes stay finite.
template <class T>
double cross_entropy(std::span<const T> probs, std::size_t label)
{
    if (label >= probs.size())
        throw UsageError("label " + std::to_string(label) + " outside " + std::to_string(probs.size()) + " classes");
    return -std::log(std::max(static_cast<double>(probs[label]), kProbabilityFloor));
}

template <class T>
double cross_entropy(const std::vector<T>& probs, std::size_t label)
{
    return cross_entropy(std::span<const T>(probs), label);
}

template <class T>
std::size_t argmax(std::span<const T> values)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

template <class T>
std::size_t argmax(const std::vector<T>& values)
{
    return argmax(std::span<const T>(values));
}

enum class OptimizerKind { sgd, adam };

template <class T>
struct BasicOptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    BasicGradients<T> first_moment;
    BasicGradients<T> second_moment;

    static BasicOptimizerState make(OptimizerKind kind, double learning_rate)
    {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        BasicOptimizerState s;
        s.kind = kind;
        s.learning_rate = learning_rate;
        return s;
    }
};

using OptimizerState = BasicOptimizerState<float>;

/// Applies one update. Non-finite gradients abort the step with the
/// parameters untouched.
template <class T>
void optimizer_step(BasicDenseNet<T>& net, const BasicGradients<T>& grads, BasicOptimizerState<T>& state)
{
    if (grads.weight.size() != net.layers().size()) throw ConfigError("gradient shape does not match network");
    for (std::size_t i = 0; i < grads.weight.size(); ++i) {
        const auto& l = net.layers()[i];
        if (grads.weight[i].rows != l.weight.rows || grads.weight[i].cols != l.weight.cols ||
            grads.bias[i].size() != l.bias.size())
            throw ConfigError("gradient shape does not match layer " + std::to_string(i));
    }
    if (!grads.all_finite()) throw NumericError("non-finite gradient; optimizer step skipped");

    auto& layers = net.mutable_layers();
    if (state.kind == OptimizerKind::sgd) {
        const T lr = static_cast<T>(state.learning_rate);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            for (std::size_t j = 0; j < layers[i].weight.data.size(); ++j)
                layers[i].weight.data[j] -= lr * grads.weight[i].data[j];
            for (std::size_t j = 0; j < layers[i].bias.size(); ++j) layers[i].bias[j] -= lr * grads.bias[i][j];
        }
        ++state.step;
        return;
    }

    if (state.first_moment.weight.size() != layers.size()) {
        state.first_moment = BasicGradients<T>::zeros_like(net);
        state.second_moment = BasicGradients<T>::zeros_like(net);
    }
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    auto update = [&](T& p, T g, T& m, T& v) {
        m = static_cast<T>(b1 * m + (1.0 - b1) * g);
        v = static_cast<T>(b2 * v + (1.0 - b2) * static_cast<double>(g) * g);
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        p = static_cast<T>(p - state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        for (std::size_t j = 0; j < l.weight.data.size(); ++j)
            update(l.weight.data[j], grads.weight[i].data[j], state.first_moment.weight[i].data[j],
                state.second_moment.weight[i].data[j]);
        for (std::size_t j = 0; j < l.bias.size(); ++j)
            update(l.bias[j], grads.bias[i][j], state.first_moment.bias[i][j], state.second_moment.bias[i][j]);
    }
}

struct FitConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
};

/// Minibatch Adam on a per-example output gradient `loss_grad(i, output)`;
/// the batch mean is taken here.
template <class LossGrad>
void fit_minibatch(DenseNet& net, const Matrix& features, const FitConfig& cfg, LossGrad&& loss_grad)
{
    const std::size_t n = features.rows;
    if (n == 0) throw ConfigError("cannot fit on an empty dataset");
    auto opt = OptimizerState::make(OptimizerKind::adam, cfg.learning_rate);
    std::vector<std::size_t> order(n);
    Rng rng(mix_seed({cfg.seed, 0xF17ull}));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, n - start);
            auto grads = Gradients::zeros_like(net);
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t i = order[start + b];
                auto fr = forward(net, features.row(i), Mode::train, &rng);
                auto d = loss_grad(i, fr.output);
                for (auto& v : d) v /= static_cast<float>(B);
                grads.add(backward(net, fr.tape, std::span<const float>(d)));
            }
            optimizer_step(net, grads, opt);
        }
    }
}

// Checkpoint layout (all little-endian):
//   "LACNN1\0\0"
//   u32 layer_count
//   per layer: u32 in_dim, u32 out_dim, u8 activation (0 identity, 1 relu),
//              f32 dropout, f32 weights[out*in] row-major, f32 bias[out]
inline constexpr std::string_view kNetMagic{"LACNN1\0\0", 8};

inline void append_checkpoint(std::vector<std::uint8_t>& out, const DenseNet& net)
{
    io::put_bytes(out, kNetMagic);
    io::put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& l : net.layers()) {
        io::put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
        io::put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
        io::put_u8(out, static_cast<std::uint8_t>(l.activation));
        io::put_f32(out, static_cast<float>(l.dropout));
        for (float w : l.weight.data) io::put_f32(out, w);
        for (float b : l.bias) io::put_f32(out, b);
    }
}

inline DenseNet read_checkpoint(io::Reader& in)
{
    const std::size_t start = in.offset();
    if (in.bytes(kNetMagic.size(), "network magic") != kNetMagic)
        throw FormatError(FormatErrorCode::bad_magic, start, "not a network checkpoint");
    const std::uint32_t n_layers = in.u32("layer count");
    std::vector<BasicLayer<float>> layers;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        BasicLayer<float> l;
        const std::uint32_t in_dim = in.u32("layer input dim");
        const std::uint32_t out_dim = in.u32("layer output dim");
        const std::size_t act_offset = in.offset();
        const std::uint8_t act = in.u8("activation code");
        if (act > 1) throw FormatError(FormatErrorCode::out_of_range, act_offset, "unknown activation code");
        l.activation = static_cast<Activation>(act);
        l.dropout = in.f32("dropout rate");
        in.require(static_cast<std::size_t>(in_dim) * out_dim * 4 + static_cast<std::size_t>(out_dim) * 4,
            "layer parameters");
        l.weight = Matrix(out_dim, in_dim);
        for (auto& w : l.weight.data) w = in.f32("weights");
        l.bias.resize(out_dim);
        for (auto& b : l.bias) b = in.f32("bias");
        layers.push_back(std::move(l));
    }
    try {
        return DenseNet(std::move(layers));
    } catch (const ConfigError& e) {
        throw FormatError(FormatErrorCode::count_mismatch, in.offset(), e.what());
    }
}

inline void save_checkpoint(const DenseNet& net, const std::string& path)
{
    std::vector<std::uint8_t> bytes;
    append_checkpoint(bytes, net);
    io::write_file(path, bytes);
}

inline DenseNet load_checkpoint(const std::string& path)
{
    const auto bytes = io::read_file(path);
    io::Reader in(bytes);
    auto net = read_checkpoint(in);
    if (in.remaining() != 0) throw FormatError(FormatErrorCode::truncated, in.offset(), "trailing bytes");
    return net;
}

} // namespace lac
