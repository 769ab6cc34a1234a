#pragma once

#include "freqlens/dataset.hpp"
#include "freqlens/errors.hpp"
#include "freqlens/io_util.hpp"
#include "freqlens/rng.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace freqlens {

enum class Activation { kTanh, kRelu };
enum class LossKind { kMse, kSoftmaxCrossEntropy };
enum class OptimizerKind { kSgd, kAdam };

inline std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }
inline std::string to_string(LossKind l) {
    return l == LossKind::kMse ? "mse" : "softmax_cross_entropy";
}
inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::kSgd ? "sgd" : "adam"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::kTanh;
    if (s == "relu") return Activation::kRelu;
    throw config_error("unknown activation '" + s + "' (want tanh|relu)");
}
inline LossKind loss_from_string(const std::string& s) {
    if (s == "mse") return LossKind::kMse;
    if (s == "softmax_cross_entropy") return LossKind::kSoftmaxCrossEntropy;
    throw config_error("unknown loss '" + s + "' (want mse|softmax_cross_entropy)");
}
inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::kSgd;
    if (s == "adam") return OptimizerKind::kAdam;
    throw config_error("unknown optimizer '" + s + "' (want sgd|adam)");
}

// Architecture of an L-layer feedforward network: layer_sizes holds
// [m_0 = d, m_1, ..., m_L = d_o]. Hidden layers apply the activation; the
// output layer is affine. With residual set, an identity skip wraps every
// hidden transform whose in/out widths match.
struct NetworkSpec {
    std::vector<int> layer_sizes;
    Activation activation = Activation::kTanh;
    bool residual = false;
    LossKind loss_kind = LossKind::kMse;
    std::uint64_t seed = 0;

    int depth() const { return static_cast<int>(layer_sizes.size()) - 1; }  // L
    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }

    bool skip_at(int l) const {  // transform producing f^[l], 1 <= l <= L-1
        return residual && layer_sizes[static_cast<std::size_t>(l - 1)] ==
                               layer_sizes[static_cast<std::size_t>(l)];
    }

    void validate() const {
        if (layer_sizes.size() < 2) throw config_error("network needs at least one layer (L >= 1)");
        for (const int m : layer_sizes) {
            if (m < 1) throw config_error("all layer sizes must be >= 1");
        }
        if (residual) {
            for (std::size_t l = 2; l + 1 < layer_sizes.size(); ++l) {
                if (layer_sizes[l] != layer_sizes[1]) {
                    throw config_error("residual network requires equal hidden widths");
                }
            }
        }
    }
};

// Weights W^[l] (m_{l+1} x m_l) and biases b^[l] for l = 0..L-1.
struct NetworkParams {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    void check_shapes(const NetworkSpec& spec) const {
        const std::size_t layers = static_cast<std::size_t>(spec.depth());
        if (weights.size() != layers || biases.size() != layers) {
            throw shape_error("parameter count does not match network depth");
        }
        for (std::size_t l = 0; l < layers; ++l) {
            if (weights[l].rows() != spec.layer_sizes[l + 1] || weights[l].cols() != spec.layer_sizes[l] ||
                biases[l].size() != spec.layer_sizes[l + 1]) {
                throw shape_error("parameter shapes do not match spec at layer " + std::to_string(l));
            }
        }
    }
};

using Gradients = NetworkParams;

// Maps the negative layer convention onto positive indices: layer -1 is the
// output layer, -2 the last hidden layer, -L the first hidden layer.
inline int layer_by_negative_index(int l_neg, int layer_count) {
    if (l_neg < -layer_count || l_neg > -1) {
        throw invalid_parameter_error("negative layer index " + std::to_string(l_neg) +
                                      " out of range [-" + std::to_string(layer_count) + ", -1]");
    }
    return layer_count + l_neg + 1;
}

// Fan-in Gaussian initialization: W^[l] entries are i.i.d. normal with
// standard deviation 1/sqrt(m_l); biases start at zero. Deterministic for a
// fixed seed.
inline NetworkParams init_network(const NetworkSpec& spec) {
    spec.validate();
    NormalSampler normal(spec.seed);
    NetworkParams params;
    const int layers = spec.depth();
    params.weights.reserve(static_cast<std::size_t>(layers));
    params.biases.reserve(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        const int fan_in = spec.layer_sizes[static_cast<std::size_t>(l)];
        const int fan_out = spec.layer_sizes[static_cast<std::size_t>(l) + 1];
        const double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                w(i, j) = sigma * normal.next();
            }
        }
        params.weights.push_back(std::move(w));
        params.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return params;
}

namespace detail {

inline Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
    if (act == Activation::kTanh) return z.array().tanh();
    return z.cwiseMax(0.0);
}

// Derivative expressed through the activation output s = sigma(z):
// tanh' = 1 - s^2, relu' = [s > 0].
inline Eigen::ArrayXXd activation_derivative(const Eigen::MatrixXd& s, Activation act) {
    if (act == Activation::kTanh) return 1.0 - s.array().square();
    return (s.array() > 0.0).cast<double>();
}

}  // namespace detail

// Everything the backward pass needs: activations[l] holds f^[l] (so
// activations[0] is the input batch) and sigma_outputs[l-1] holds
// sigma(W f^[l-1] + b) before any residual add. Samples are columns.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> activations;
    std::vector<Eigen::MatrixXd> sigma_outputs;

    const Eigen::MatrixXd& output() const { return activations.back(); }
};

// Batched recursion f^[l] = sigma(W^[l-1] f^[l-1] + b^[l-1]) for hidden
// layers (plus the identity skip where enabled) and an affine output layer.
inline ForwardTrace forward_batch(const NetworkParams& params, const NetworkSpec& spec,
                                  const Eigen::MatrixXd& inputs) {
    spec.validate();
    params.check_shapes(spec);
    if (inputs.rows() != spec.input_dim()) {
        throw shape_error("forward: input dimension " + std::to_string(inputs.rows()) +
                          " does not match network input " + std::to_string(spec.input_dim()));
    }
    const int layers = spec.depth();
    ForwardTrace trace;
    trace.activations.reserve(static_cast<std::size_t>(layers) + 1);
    trace.sigma_outputs.reserve(static_cast<std::size_t>(layers) - 1);
    trace.activations.push_back(inputs);

    for (int l = 1; l < layers; ++l) {
        const Eigen::MatrixXd& prev = trace.activations.back();
        Eigen::MatrixXd z = params.weights[static_cast<std::size_t>(l - 1)] * prev;
        z.colwise() += params.biases[static_cast<std::size_t>(l - 1)];
        Eigen::MatrixXd s = detail::apply_activation(z, spec.activation);
        trace.activations.push_back(spec.skip_at(l) ? Eigen::MatrixXd(prev + s) : s);
        trace.sigma_outputs.push_back(std::move(s));
    }

    Eigen::MatrixXd out = params.weights.back() * trace.activations.back();
    out.colwise() += params.biases.back();
    trace.activations.push_back(std::move(out));
    return trace;
}

// Single-sample forward pass; returns the output and all hidden activations
// f^[1..L-1].
inline std::pair<Eigen::VectorXd, std::vector<Eigen::VectorXd>> forward(const NetworkParams& params,
                                                                        const NetworkSpec& spec,
                                                                        const Eigen::VectorXd& x) {
    const ForwardTrace trace = forward_batch(params, spec, x);
    std::vector<Eigen::VectorXd> hidden;
    hidden.reserve(trace.activations.size() - 2);
    for (std::size_t l = 1; l + 1 < trace.activations.size(); ++l) {
        hidden.emplace_back(trace.activations[l].col(0));
    }
    return {trace.output().col(0), std::move(hidden)};
}

namespace detail {

inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p = logits;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        p.col(c).array() -= p.col(c).maxCoeff();
        p.col(c) = p.col(c).array().exp();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

inline void require_probability_target(const Eigen::VectorXd& target) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (target[i] < 0.0) {
            throw invalid_parameter_error("cross-entropy target has a negative component");
        }
        sum += target[i];
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw invalid_parameter_error("cross-entropy target does not sum to 1 (got " +
                                      format_double(sum) + ")");
    }
}

}  // namespace detail

// Per-sample loss. MSE averages squared error over the output components;
// softmax cross-entropy applies a softmax to the output and scores against a
// one-hot or probability target.
inline double loss_value(const Eigen::VectorXd& output, const Eigen::VectorXd& target,
                         LossKind kind) {
    if (output.size() != target.size()) {
        throw shape_error("loss: output size " + std::to_string(output.size()) +
                          " vs target size " + std::to_string(target.size()));
    }
    if (kind == LossKind::kMse) {
        return (output - target).squaredNorm() / static_cast<double>(output.size());
    }
    detail::require_probability_target(target);
    const Eigen::MatrixXd p = detail::softmax_columns(output);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (target[i] > 0.0) ce -= target[i] * std::log(std::max(p(i, 0), 1e-300));
    }
    return ce;
}

// Mean per-sample loss given already-computed network outputs (columns are
// samples).
inline double loss_from_outputs(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets,
                                LossKind kind) {
    if (targets.rows() != outputs.rows() || targets.cols() != outputs.cols()) {
        throw shape_error("batch loss: target shape mismatch");
    }
    if (outputs.cols() == 0) throw invalid_parameter_error("batch loss: batch is empty");
    if (kind == LossKind::kMse) {
        return (outputs - targets).squaredNorm() /
               (static_cast<double>(outputs.rows()) * static_cast<double>(outputs.cols()));
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < outputs.cols(); ++c) {
        total += loss_value(outputs.col(c), targets.col(c), kind);
    }
    return total / static_cast<double>(outputs.cols());
}

// Mean per-sample loss over a column batch.
inline double batch_loss(const NetworkParams& params, const NetworkSpec& spec,
                         const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
    const ForwardTrace trace = forward_batch(params, spec, inputs);
    return loss_from_outputs(trace.output(), targets, spec.loss_kind);
}

// Reverse-mode gradient of the mean batch loss with respect to every weight
// and bias. Samples are columns of inputs/targets.
inline Gradients backprop(const NetworkParams& params, const NetworkSpec& spec,
                          const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          double* batch_loss_out = nullptr) {
    if (inputs.cols() == 0) throw invalid_parameter_error("backprop: batch is empty");
    const ForwardTrace trace = forward_batch(params, spec, inputs);
    const Eigen::MatrixXd& out = trace.output();
    if (targets.rows() != out.rows() || targets.cols() != out.cols()) {
        throw shape_error("backprop: target shape mismatch");
    }
    const double batch = static_cast<double>(inputs.cols());
    const int layers = spec.depth();

    Eigen::MatrixXd grad_out;  // dLoss/dOutput
    if (spec.loss_kind == LossKind::kMse) {
        grad_out = 2.0 * (out - targets) / (static_cast<double>(out.rows()) * batch);
        if (batch_loss_out) {
            *batch_loss_out = (out - targets).squaredNorm() / (static_cast<double>(out.rows()) * batch);
        }
    } else {
        for (Eigen::Index c = 0; c < targets.cols(); ++c) {
            detail::require_probability_target(targets.col(c));
        }
        const Eigen::MatrixXd p = detail::softmax_columns(out);
        grad_out = (p - targets) / batch;
        if (batch_loss_out) {
            double total = 0.0;
            for (Eigen::Index c = 0; c < out.cols(); ++c) {
                for (Eigen::Index i = 0; i < out.rows(); ++i) {
                    if (targets(i, c) > 0.0) total -= targets(i, c) * std::log(std::max(p(i, c), 1e-300));
                }
            }
            *batch_loss_out = total / batch;
        }
    }

    Gradients grads;
    grads.weights.resize(static_cast<std::size_t>(layers));
    grads.biases.resize(static_cast<std::size_t>(layers));

    // Output layer is affine.
    grads.weights.back() = grad_out * trace.activations[static_cast<std::size_t>(layers - 1)].transpose();
    grads.biases.back() = grad_out.rowwise().sum();
    Eigen::MatrixXd grad_act = params.weights.back().transpose() * grad_out;

    for (int l = layers - 1; l >= 1; --l) {
        const Eigen::MatrixXd grad_z =
            grad_act.array() *
            detail::activation_derivative(trace.sigma_outputs[static_cast<std::size_t>(l - 1)],
                                          spec.activation);
        grads.weights[static_cast<std::size_t>(l - 1)] =
            grad_z * trace.activations[static_cast<std::size_t>(l - 1)].transpose();
        grads.biases[static_cast<std::size_t>(l - 1)] = grad_z.rowwise().sum();
        if (l > 1) {
            Eigen::MatrixXd next = params.weights[static_cast<std::size_t>(l - 1)].transpose() * grad_z;
            if (spec.skip_at(l)) next += grad_act;  // identity branch
            grad_act = std::move(next);
        }
    }
    return grads;
}

// Adam moments and hyperparameters, or plain SGD when kind says so. Moments
// are zero-initialized and the step counter starts at zero.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::kAdam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    NetworkParams first_moment;
    NetworkParams second_moment;

    static OptimizerState sgd(double lr) {
        OptimizerState s;
        s.kind = OptimizerKind::kSgd;
        s.learning_rate = lr;
        return s;
    }

    static OptimizerState adam(double lr) {
        OptimizerState s;
        s.kind = OptimizerKind::kAdam;
        s.learning_rate = lr;
        return s;
    }
};

namespace detail {

inline void ensure_moments(OptimizerState& state, const NetworkParams& params) {
    if (!state.first_moment.weights.empty()) return;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        state.first_moment.weights.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(),
                                                                   params.weights[l].cols()));
        state.first_moment.biases.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
        state.second_moment.weights.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(),
                                                                    params.weights[l].cols()));
        state.second_moment.biases.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
    }
}

template <typename Tensor>
void adam_update(Tensor& theta, Tensor& m, Tensor& v, const Tensor& g, const OptimizerState& s,
                 double bias1, double bias2) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = (s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square()).matrix();
    const auto m_hat = m.array() / bias1;
    const auto v_hat = v.array() / bias2;
    theta.array() -= s.learning_rate * m_hat / (v_hat.sqrt() + s.epsilon);
}

}  // namespace detail

// One parameter update. SGD: theta -= lr * g. Adam: bias-corrected
// first/second moment update with the stored hyperparameters.
inline void optimizer_step(OptimizerState& state, NetworkParams& params, const Gradients& grads) {
    if (grads.weights.size() != params.weights.size()) {
        throw shape_error("optimizer step: gradient/parameter layer count mismatch");
    }
    if (state.kind == OptimizerKind::kSgd) {
        for (std::size_t l = 0; l < params.weights.size(); ++l) {
            params.weights[l] -= state.learning_rate * grads.weights[l];
            params.biases[l] -= state.learning_rate * grads.biases[l];
        }
        ++state.step;
        return;
    }
    detail::ensure_moments(state, params);
    ++state.step;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        detail::adam_update(params.weights[l], state.first_moment.weights[l],
                            state.second_moment.weights[l], grads.weights[l], state, bias1, bias2);
        detail::adam_update(params.biases[l], state.first_moment.biases[l],
                            state.second_moment.biases[l], grads.biases[l], state, bias1, bias2);
    }
}

// One pass over the dataset in shuffled minibatches. The shuffle is a pure
// function of (shuffle_seed, epoch). Returns the mean of the per-batch
// losses, each evaluated before its update.
inline double train_epoch(NetworkParams& params, OptimizerState& state, const NetworkSpec& spec,
                          const LabeledDataset& data, int batch_size, std::uint64_t shuffle_seed,
                          int epoch) {
    data.validate();
    if (batch_size < 1) throw invalid_parameter_error("batch size must be >= 1");
    const Eigen::Index n = data.size();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    deterministic_shuffle(order, rng);

    const Eigen::MatrixXd inputs_t = data.points.transpose();    // d x n
    const Eigen::MatrixXd targets_t = data.targets.transpose();  // d_o x n

    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
        const Eigen::Index count = std::min<Eigen::Index>(batch_size, n - start);
        Eigen::MatrixXd batch_x(inputs_t.rows(), count);
        Eigen::MatrixXd batch_y(targets_t.rows(), count);
        for (Eigen::Index c = 0; c < count; ++c) {
            batch_x.col(c) = inputs_t.col(order[static_cast<std::size_t>(start + c)]);
            batch_y.col(c) = targets_t.col(order[static_cast<std::size_t>(start + c)]);
        }
        double batch_loss_value = 0.0;
        const Gradients grads = backprop(params, spec, batch_x, batch_y, &batch_loss_value);
        optimizer_step(state, params, grads);
        loss_sum += batch_loss_value;
        ++batches;
    }
    return loss_sum / static_cast<double>(batches);
}

// ---------------------------------------------------------------------------
// Checkpoint format (text, version-tagged):
//   freqlens-checkpoint v1
//   layers <m_0> ... <m_L>
//   activation tanh|relu
//   residual 0|1
//   loss mse|softmax_cross_entropy
//   seed <n>
//   W<l> then row-major values, one row per line; b<l> on one line.
// ---------------------------------------------------------------------------

inline std::string checkpoint_to_string(const NetworkSpec& spec, const NetworkParams& params) {
    params.check_shapes(spec);
    std::string out = "freqlens-checkpoint v1\n";
    out += "layers";
    for (const int m : spec.layer_sizes) out += " " + std::to_string(m);
    out += "\nactivation " + to_string(spec.activation);
    out += "\nresidual " + std::string(spec.residual ? "1" : "0");
    out += "\nloss " + to_string(spec.loss_kind);
    out += "\nseed " + std::to_string(spec.seed);
    out += "\n";
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        out += "W" + std::to_string(l) + "\n";
        for (Eigen::Index i = 0; i < params.weights[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < params.weights[l].cols(); ++j) {
                out += format_double(params.weights[l](i, j));
                out += (j + 1 < params.weights[l].cols()) ? " " : "\n";
            }
        }
        out += "b" + std::to_string(l) + "\n";
        for (Eigen::Index i = 0; i < params.biases[l].size(); ++i) {
            out += format_double(params.biases[l][i]);
            out += (i + 1 < params.biases[l].size()) ? " " : "\n";
        }
    }
    return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                            const NetworkParams& params) {
    write_file_atomic(path, checkpoint_to_string(spec, params));
}

inline std::pair<NetworkSpec, NetworkParams> load_checkpoint(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "freqlens-checkpoint v1") {
        throw parse_error(path.string() + ": not a freqlens-checkpoint v1 file");
    }
    NetworkSpec spec;
    auto next_line = [&](const std::string& what) {
        if (!std::getline(in, line)) throw parse_error(path.string() + ": truncated before " + what);
        return line;
    };
    {
        std::istringstream fields(next_line("layers"));
        std::string tag;
        fields >> tag;
        if (tag != "layers") throw parse_error(path.string() + ": expected 'layers'");
        int m = 0;
        while (fields >> m) spec.layer_sizes.push_back(m);
    }
    {
        std::istringstream fields(next_line("activation"));
        std::string tag, value;
        fields >> tag >> value;
        spec.activation = activation_from_string(value);
    }
    {
        std::istringstream fields(next_line("residual"));
        std::string tag, value;
        fields >> tag >> value;
        spec.residual = value == "1";
    }
    {
        std::istringstream fields(next_line("loss"));
        std::string tag, value;
        fields >> tag >> value;
        spec.loss_kind = loss_from_string(value);
    }
    {
        std::istringstream fields(next_line("seed"));
        std::string tag;
        fields >> tag >> spec.seed;
    }
    spec.validate();

    NetworkParams params;
    for (int l = 0; l < spec.depth(); ++l) {
        const Eigen::Index rows = spec.layer_sizes[static_cast<std::size_t>(l) + 1];
        const Eigen::Index cols = spec.layer_sizes[static_cast<std::size_t>(l)];
        if (next_line("W" + std::to_string(l)) != "W" + std::to_string(l)) {
            throw parse_error(path.string() + ": expected W" + std::to_string(l));
        }
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            std::istringstream fields(next_line("weight row"));
            for (Eigen::Index j = 0; j < cols; ++j) {
                if (!(fields >> w(i, j))) throw parse_error(path.string() + ": short weight row");
            }
        }
        if (next_line("b" + std::to_string(l)) != "b" + std::to_string(l)) {
            throw parse_error(path.string() + ": expected b" + std::to_string(l));
        }
        Eigen::VectorXd b(rows);
        std::istringstream fields(next_line("bias row"));
        for (Eigen::Index i = 0; i < rows; ++i) {
            if (!(fields >> b[i])) throw parse_error(path.string() + ": short bias row");
        }
        params.weights.push_back(std::move(w));
        params.biases.push_back(std::move(b));
    }
    params.check_shapes(spec);
    return {spec, params};
}

}  // namespace freqlens
