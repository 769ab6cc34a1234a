#include "freqlens/network.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

using namespace freqlens;

namespace {

NetworkParams zero_params(const NetworkSpec& spec) {
    NetworkParams params;
    for (int l = 0; l < spec.depth(); ++l) {
        params.weights.push_back(Eigen::MatrixXd::Zero(spec.layer_sizes[static_cast<std::size_t>(l) + 1],
                                                       spec.layer_sizes[static_cast<std::size_t>(l)]));
        params.biases.push_back(Eigen::VectorXd::Zero(spec.layer_sizes[static_cast<std::size_t>(l) + 1]));
    }
    return params;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    NormalSampler gauss(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gauss.next();
    }
    return m;
}

double central_diff(NetworkParams& params, const NetworkSpec& spec, const Eigen::MatrixXd& x,
                    const Eigen::MatrixXd& y, double& slot) {
    const double h = 1e-6;
    const double orig = slot;
    slot = orig + h;
    const double up = batch_loss(params, spec, x, y);
    slot = orig - h;
    const double down = batch_loss(params, spec, x, y);
    slot = orig;
    return (up - down) / (2.0 * h);
}

// Compares every analytic gradient component against a central difference.
void check_gradients(const NetworkSpec& spec, NetworkParams& params, const Eigen::MatrixXd& x,
                     const Eigen::MatrixXd& y) {
    const Gradients grads = backprop(params, spec, x, y);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < params.weights[l].size(); ++i) {
            const double fd = central_diff(params, spec, x, y, params.weights[l].data()[i]);
            const double an = grads.weights[l].data()[i];
            CAPTURE(l, i, an, fd);
            CHECK(std::abs(an - fd) <= 1e-5 * std::max({std::abs(an), std::abs(fd), 1e-5}));
        }
        for (Eigen::Index i = 0; i < params.biases[l].size(); ++i) {
            const double fd = central_diff(params, spec, x, y, params.biases[l][i]);
            const double an = grads.biases[l][i];
            CAPTURE(l, i, an, fd);
            CHECK(std::abs(an - fd) <= 1e-5 * std::max({std::abs(an), std::abs(fd), 1e-5}));
        }
    }
}

Eigen::MatrixXd one_hot_columns(const std::vector<int>& labels, Eigen::Index classes) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(classes, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t c = 0; c < labels.size(); ++c) {
        y(labels[c], static_cast<Eigen::Index>(c)) = 1.0;
    }
    return y;
}

}  // namespace

TEST_CASE("enum string conversions round-trip and reject unknowns", "[network]") {
    CHECK(activation_from_string("tanh") == Activation::kTanh);
    CHECK(activation_from_string("relu") == Activation::kRelu);
    CHECK(to_string(loss_from_string("mse")) == "mse");
    CHECK(to_string(loss_from_string("softmax_cross_entropy")) == "softmax_cross_entropy");
    CHECK(to_string(optimizer_from_string("adam")) == "adam");
    CHECK_THROWS_AS(activation_from_string("sigmoid"), config_error);
    CHECK_THROWS_AS(loss_from_string("mae"), config_error);
    CHECK_THROWS_AS(optimizer_from_string("rmsprop"), config_error);
}

TEST_CASE("network specs validate layer lists and residual width rules", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 5, 1};
    CHECK_NOTHROW(spec.validate());
    CHECK(spec.depth() == 2);
    CHECK(spec.input_dim() == 2);
    CHECK(spec.output_dim() == 1);

    spec.layer_sizes = {5};
    CHECK_THROWS_AS(spec.validate(), config_error);
    spec.layer_sizes = {2, 0, 1};
    CHECK_THROWS_AS(spec.validate(), config_error);

    spec.layer_sizes = {1, 3, 4, 1};
    spec.residual = true;
    CHECK_THROWS_AS(spec.validate(), config_error);
    spec.layer_sizes = {1, 3, 3, 1};
    CHECK_NOTHROW(spec.validate());
    CHECK_FALSE(spec.skip_at(1));  // input width 1 != hidden width 3
    CHECK(spec.skip_at(2));
    spec.layer_sizes = {3, 3, 1};
    CHECK(spec.skip_at(1));  // input transform skips when d == m_1
    spec.residual = false;
    CHECK_FALSE(spec.skip_at(1));
}

TEST_CASE("negative layer indices map onto the positive convention", "[network]") {
    CHECK(layer_by_negative_index(-1, 5) == 5);  // output layer
    CHECK(layer_by_negative_index(-2, 5) == 4);  // last hidden layer
    CHECK(layer_by_negative_index(-5, 5) == 1);
    CHECK_THROWS_AS(layer_by_negative_index(0, 5), invalid_parameter_error);
    CHECK_THROWS_AS(layer_by_negative_index(-6, 5), invalid_parameter_error);
    CHECK_THROWS_AS(layer_by_negative_index(1, 5), invalid_parameter_error);
}

TEST_CASE("initialization: shapes, zero biases, seed determinism, fan-in scale", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 5, 1};
    spec.seed = 3;
    const NetworkParams params = init_network(spec);
    REQUIRE(params.weights.size() == 2);
    CHECK(params.weights[0].rows() == 5);
    CHECK(params.weights[0].cols() == 2);
    CHECK(params.weights[1].rows() == 1);
    CHECK(params.weights[1].cols() == 5);
    CHECK(params.biases[0].isZero(0.0));
    CHECK(params.biases[1].isZero(0.0));

    const NetworkParams repeat = init_network(spec);
    CHECK(params.weights[0] == repeat.weights[0]);
    NetworkSpec other = spec;
    other.seed = 4;
    CHECK(init_network(other).weights[0] != params.weights[0]);

    // 1e5 draws with fan-in 2: sample standard deviation within 2% of 1/sqrt(2).
    NetworkSpec wide;
    wide.layer_sizes = {2, 50000, 1};
    wide.seed = 12;
    const Eigen::MatrixXd w = init_network(wide).weights[0];
    const double mean = w.mean();
    const double stddev = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size()));
    CHECK(std::abs(stddev - 1.0 / std::sqrt(2.0)) <= 0.02 / std::sqrt(2.0));
}

TEST_CASE("forward pass basics", "[network]") {
    SECTION("all-zero parameters send everything to zero") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 3, 1};
        NetworkParams params = zero_params(spec);
        const auto [out, hidden] = forward(params, spec, Eigen::Vector2d(0.4, -1.7));
        CHECK(out.size() == 1);
        CHECK(out[0] == 0.0);
        REQUIRE(hidden.size() == 1);
        CHECK(hidden[0].isZero(0.0));
    }
    SECTION("depth-1 identity weights reproduce the input") {
        NetworkSpec spec;
        spec.layer_sizes = {3, 3};
        NetworkParams params;
        params.weights.push_back(Eigen::MatrixXd::Identity(3, 3));
        params.biases.push_back(Eigen::VectorXd::Zero(3));
        const Eigen::Vector3d x(0.2, -5.0, 3.25);
        const auto [out, hidden] = forward(params, spec, x);
        CHECK(hidden.empty());
        CHECK(out == x);
    }
    SECTION("2-3-1 tanh net matches a scalar hand computation") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 3, 1};
        NetworkParams params;
        Eigen::MatrixXd w0(3, 2);
        w0 << 0.5, -0.2, 0.1, 0.3, -0.4, 0.6;
        Eigen::VectorXd b0(3);
        b0 << 0.05, -0.1, 0.2;
        Eigen::MatrixXd w1(1, 3);
        w1 << 1.0, -1.5, 0.25;
        Eigen::VectorXd b1(1);
        b1 << 0.3;
        params.weights = {w0, w1};
        params.biases = {b0, b1};
        const Eigen::Vector2d x(0.7, -0.4);

        double hidden[3];
        for (int i = 0; i < 3; ++i) {
            hidden[i] = std::tanh(w0(i, 0) * x[0] + w0(i, 1) * x[1] + b0[i]);
        }
        const double expected = w1(0, 0) * hidden[0] + w1(0, 1) * hidden[1] + w1(0, 2) * hidden[2] + b1[0];
        const auto [out, activations] = forward(params, spec, x);
        CHECK(out[0] == Catch::Approx(expected).epsilon(1e-14));
        CHECK(activations[0][1] == Catch::Approx(hidden[1]).epsilon(1e-14));
    }
    SECTION("residual net with zero parameters is the identity on hidden layers") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 2, 2, 1};
        spec.residual = true;
        NetworkParams params = zero_params(spec);
        const Eigen::Vector2d x(1.5, -0.7);
        const auto [out, hidden] = forward(params, spec, x);
        REQUIRE(hidden.size() == 2);
        CHECK(hidden[0] == x);  // tanh(0) + skip = x
        CHECK(hidden[1] == x);
        CHECK(out[0] == 0.0);
    }
    SECTION("batch forward agrees with per-sample forward") {
        NetworkSpec spec;
        spec.layer_sizes = {3, 4, 2};
        spec.seed = 8;
        const NetworkParams params = init_network(spec);
        const Eigen::MatrixXd batch = random_matrix(3, 5, 99);
        const ForwardTrace trace = forward_batch(params, spec, batch);
        REQUIRE(trace.output().cols() == 5);
        for (Eigen::Index c = 0; c < 5; ++c) {
            const Eigen::VectorXd out = forward(params, spec, batch.col(c)).first;
            CHECK((trace.output().col(c) - out).cwiseAbs().maxCoeff() <= 1e-14);
        }
    }
    SECTION("input dimension mismatch is rejected") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 3, 1};
        const NetworkParams params = zero_params(spec);
        CHECK_THROWS_AS(forward_batch(params, spec, Eigen::MatrixXd::Zero(3, 1)), shape_error);
    }
}

TEST_CASE("loss values match hand computations", "[network]") {
    Eigen::VectorXd y(2);
    y << 1.0, 3.0;
    CHECK(loss_value(y, y, LossKind::kMse) == 0.0);
    Eigen::VectorXd t(2);
    t << 0.0, 1.0;
    CHECK(loss_value(y, t, LossKind::kMse) == Catch::Approx(2.5).epsilon(1e-15));  // (1 + 4) / 2

    Eigen::VectorXd logits = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(4);
    one_hot[2] = 1.0;
    CHECK(loss_value(logits, one_hot, LossKind::kSoftmaxCrossEntropy) ==
          Catch::Approx(std::log(4.0)).epsilon(1e-12));

    Eigen::VectorXd short_t(1);
    CHECK_THROWS_AS(loss_value(y, short_t, LossKind::kMse), shape_error);
}

TEST_CASE("cross-entropy targets must be probability vectors", "[network]") {
    Eigen::VectorXd logits(3);
    logits << 0.2, -0.1, 0.5;
    Eigen::VectorXd bad(3);
    bad << 0.5, 0.6, -0.1;
    CHECK_THROWS_AS(loss_value(logits, bad, LossKind::kSoftmaxCrossEntropy), invalid_parameter_error);
    bad << 0.5, 0.4, 0.2;  // sums to 1.1
    CHECK_THROWS_AS(loss_value(logits, bad, LossKind::kSoftmaxCrossEntropy), invalid_parameter_error);
    Eigen::VectorXd close(3);
    close << 0.5, 0.3, 0.2 + 5e-7;  // inside the 1e-6 tolerance
    CHECK_NOTHROW(loss_value(logits, close, LossKind::kSoftmaxCrossEntropy));
}

TEST_CASE("softmax columns are probability distributions", "[network]") {
    const Eigen::MatrixXd logits = random_matrix(5, 7, 123);
    const Eigen::MatrixXd p = detail::softmax_columns(logits);
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        CHECK(p.col(c).sum() == Catch::Approx(1.0).margin(1e-12));
        CHECK(p.col(c).minCoeff() > 0.0);
    }
    // Shift invariance: adding a constant per column changes nothing.
    Eigen::MatrixXd shifted = logits;
    shifted.array() += 3.7;
    CHECK((detail::softmax_columns(shifted) - p).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("batch loss is the mean of per-sample losses", "[network]") {
    const Eigen::MatrixXd out = random_matrix(3, 4, 55);
    const Eigen::MatrixXd targets = random_matrix(3, 4, 56);
    double expected = 0.0;
    for (Eigen::Index c = 0; c < 4; ++c) {
        expected += loss_value(out.col(c), targets.col(c), LossKind::kMse);
    }
    expected /= 4.0;
    CHECK(loss_from_outputs(out, targets, LossKind::kMse) == Catch::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS(loss_from_outputs(out, targets.leftCols(3), LossKind::kMse), shape_error);
    CHECK_THROWS_AS(loss_from_outputs(Eigen::MatrixXd(3, 0), Eigen::MatrixXd(3, 0), LossKind::kMse),
                    invalid_parameter_error);
}

TEST_CASE("backprop closed form for a single affine layer", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 3};
    NetworkParams params;
    params.weights.push_back(random_matrix(3, 2, 7));
    params.biases.push_back(random_matrix(3, 1, 8).col(0));
    const Eigen::Vector2d x(0.3, -1.1);
    Eigen::Vector3d y(0.5, 0.0, -0.25);

    const Eigen::Vector3d resid = params.weights[0] * x + params.biases[0] - y;
    const Eigen::MatrixXd expected_w = 2.0 * resid * x.transpose() / 3.0;
    const Eigen::Vector3d expected_b = 2.0 * resid / 3.0;

    const Gradients grads = backprop(params, spec, x, y);
    CHECK((grads.weights[0] - expected_w).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((grads.biases[0] - expected_b).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("backprop at an exact fit returns zero gradients", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 4, 2};
    spec.seed = 5;
    const NetworkParams params = init_network(spec);
    const Eigen::MatrixXd x = random_matrix(2, 3, 31);
    const Eigen::MatrixXd y = forward_batch(params, spec, x).output();
    const Gradients grads = backprop(params, spec, x, y);
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        CHECK(grads.weights[l].isZero(0.0));
        CHECK(grads.biases[l].isZero(0.0));
    }
}

TEST_CASE("analytic gradients match central differences", "[network][property]") {
    SECTION("tanh net, MSE") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 4, 3, 1};
        spec.seed = 11;
        NetworkParams params = init_network(spec);
        const Eigen::MatrixXd x = random_matrix(2, 3, 41);
        const Eigen::MatrixXd y = random_matrix(1, 3, 42);
        check_gradients(spec, params, x, y);
    }
    SECTION("tanh net, softmax cross-entropy") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 4, 3, 3};
        spec.loss_kind = LossKind::kSoftmaxCrossEntropy;
        spec.seed = 13;
        NetworkParams params = init_network(spec);
        const Eigen::MatrixXd x = random_matrix(2, 4, 43);
        const Eigen::MatrixXd y = one_hot_columns({0, 2, 1, 2}, 3);
        check_gradients(spec, params, x, y);
    }
    SECTION("residual tanh net") {
        NetworkSpec spec;
        spec.layer_sizes = {2, 4, 4, 1};
        spec.residual = true;
        spec.seed = 17;
        NetworkParams params = init_network(spec);
        const Eigen::MatrixXd x = random_matrix(2, 3, 44);
        const Eigen::MatrixXd y = random_matrix(1, 3, 45);
        check_gradients(spec, params, x, y);
    }
    SECTION("relu net with pre-activations held away from the kink") {
        NetworkSpec spec;
        spec.layer_sizes = {1, 2, 1};
        spec.activation = Activation::kRelu;
        NetworkParams params;
        Eigen::MatrixXd w0(2, 1);
        w0 << 1.0, -1.0;
        Eigen::VectorXd b0(2);
        b0 << 0.3, 0.4;
        Eigen::MatrixXd w1(1, 2);
        w1 << 0.8, -0.5;
        Eigen::VectorXd b1(1);
        b1 << 0.1;
        params.weights = {w0, w1};
        params.biases = {b0, b1};
        Eigen::MatrixXd x(1, 2);
        x << 0.7, -0.9;  // pre-activations stay at least 0.1 from zero
        Eigen::MatrixXd y(1, 2);
        y << 0.2, -0.3;
        check_gradients(spec, params, x, y);
    }
}

TEST_CASE("backprop input validation", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 3, 1};
    spec.seed = 1;
    const NetworkParams params = init_network(spec);
    CHECK_THROWS_AS(backprop(params, spec, Eigen::MatrixXd(2, 0), Eigen::MatrixXd(1, 0)),
                    invalid_parameter_error);
    CHECK_THROWS_AS(backprop(params, spec, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)),
                    shape_error);
}

TEST_CASE("sgd steps are plain scaled subtraction", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {1, 1};
    NetworkParams params = zero_params(spec);
    params.weights[0](0, 0) = 2.0;
    params.biases[0][0] = -1.0;
    Gradients grads = zero_params(spec);
    grads.weights[0](0, 0) = 0.5;
    grads.biases[0][0] = -2.0;
    OptimizerState state = OptimizerState::sgd(0.1);
    optimizer_step(state, params, grads);
    CHECK(params.weights[0](0, 0) == Catch::Approx(1.95).epsilon(1e-15));
    CHECK(params.biases[0][0] == Catch::Approx(-0.8).epsilon(1e-15));
    CHECK(state.step == 1);
}

TEST_CASE("adam from fresh state: zero gradients change nothing", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 3, 1};
    spec.seed = 21;
    NetworkParams params = init_network(spec);
    const NetworkParams before = params;
    OptimizerState state = OptimizerState::adam(1e-3);
    optimizer_step(state, params, zero_params(spec));
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        CHECK(params.weights[l] == before.weights[l]);
        CHECK(params.biases[l] == before.biases[l]);
    }
    CHECK(state.step == 1);
}

TEST_CASE("adam first step moves by about lr times the gradient sign", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {1, 1};
    NetworkParams params = zero_params(spec);
    params.weights[0](0, 0) = 0.75;
    Gradients grads = zero_params(spec);
    grads.weights[0](0, 0) = -0.03;
    OptimizerState state = OptimizerState::adam(1e-3);
    optimizer_step(state, params, grads);
    CHECK(params.weights[0](0, 0) == Catch::Approx(0.75 + 1e-3).margin(1e-7));
}

TEST_CASE("adam three-step scalar oracle", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {1, 1};
    NetworkParams params = zero_params(spec);
    params.weights[0](0, 0) = 0.5;
    OptimizerState state = OptimizerState::adam(0.01);

    double theta = 0.5;
    double m = 0.0;
    double v = 0.0;
    const double grads_seq[3] = {0.3, -0.2, 0.1};
    for (int step = 1; step <= 3; ++step) {
        const double g = grads_seq[step - 1];
        Gradients grads = zero_params(spec);
        grads.weights[0](0, 0) = g;
        optimizer_step(state, params, grads);

        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double m_hat = m / (1.0 - std::pow(0.9, step));
        const double v_hat = v / (1.0 - std::pow(0.999, step));
        theta -= 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
        CHECK(params.weights[0](0, 0) == Catch::Approx(theta).epsilon(1e-14));
    }
}

TEST_CASE("optimizer rejects mismatched gradient layouts", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 3, 1};
    spec.seed = 2;
    NetworkParams params = init_network(spec);
    Gradients wrong;
    wrong.weights.push_back(Eigen::MatrixXd::Zero(3, 2));
    wrong.biases.push_back(Eigen::VectorXd::Zero(3));
    OptimizerState state = OptimizerState::sgd(0.1);
    CHECK_THROWS_AS(optimizer_step(state, params, wrong), shape_error);
}

TEST_CASE("train_epoch: zero learning rate only evaluates", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 3, 2};
    spec.seed = 6;
    NetworkParams params = init_network(spec);
    LabeledDataset data;
    data.points = random_matrix(5, 2, 61);
    data.targets = random_matrix(5, 2, 62);

    const std::string before = checkpoint_to_string(spec, params);
    OptimizerState state = OptimizerState::sgd(0.0);
    const double reported = train_epoch(params, state, spec, data, 2, 909, 4);
    CHECK(checkpoint_to_string(spec, params) == before);

    // Replicate the batching exactly: same shuffle stream, same column order.
    std::vector<Eigen::Index> order(5);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(mix_seed(909, 4));
    deterministic_shuffle(order, rng);
    const Eigen::MatrixXd inputs_t = data.points.transpose();
    const Eigen::MatrixXd targets_t = data.targets.transpose();
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < 5; start += 2) {
        const Eigen::Index count = std::min<Eigen::Index>(2, 5 - start);
        Eigen::MatrixXd bx(2, count);
        Eigen::MatrixXd by(2, count);
        for (Eigen::Index c = 0; c < count; ++c) {
            bx.col(c) = inputs_t.col(order[static_cast<std::size_t>(start + c)]);
            by.col(c) = targets_t.col(order[static_cast<std::size_t>(start + c)]);
        }
        loss_sum += batch_loss(params, spec, bx, by);
        ++batches;
    }
    CHECK(reported == Catch::Approx(loss_sum / batches).epsilon(1e-14));
}

TEST_CASE("train_epoch is deterministic for a fixed seed", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {1, 8, 1};
    spec.seed = 30;
    LabeledDataset data;
    data.points = random_matrix(12, 1, 71);
    data.targets = data.points.array().sin().matrix();

    auto run = [&]() {
        NetworkParams params = init_network(spec);
        OptimizerState state = OptimizerState::adam(1e-2);
        for (int epoch = 0; epoch < 3; ++epoch) train_epoch(params, state, spec, data, 4, 5, epoch);
        return checkpoint_to_string(spec, params);
    };
    CHECK(run() == run());
}

TEST_CASE("train_epoch drives a linear model's loss down monotonically", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {1, 1};
    NetworkParams params = zero_params(spec);
    LabeledDataset data;
    data.points = random_matrix(16, 1, 81);
    data.targets = (2.0 * data.points.array() - 1.0).matrix();

    OptimizerState state = OptimizerState::sgd(0.05);
    double prev = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < 10; ++epoch) {
        const double loss = train_epoch(params, state, spec, data, 16, 1, epoch);
        CHECK(loss < prev);
        prev = loss;
    }
    CHECK_THROWS_AS(train_epoch(params, state, spec, data, 0, 1, 0), invalid_parameter_error);
}

TEST_CASE("checkpoints round-trip bitwise", "[network]") {
    NetworkSpec spec;
    spec.layer_sizes = {2, 4, 1};
    spec.activation = Activation::kRelu;
    spec.loss_kind = LossKind::kSoftmaxCrossEntropy;
    spec.seed = 77;
    const NetworkParams params = init_network(spec);

    const auto dir = std::filesystem::temp_directory_path() / "freqlens_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "net.txt";
    save_checkpoint(path, spec, params);
    CHECK(read_file(path) == checkpoint_to_string(spec, params));

    const auto [loaded_spec, loaded] = load_checkpoint(path);
    CHECK(loaded_spec.layer_sizes == spec.layer_sizes);
    CHECK(loaded_spec.activation == spec.activation);
    CHECK(loaded_spec.residual == spec.residual);
    CHECK(loaded_spec.loss_kind == spec.loss_kind);
    CHECK(loaded_spec.seed == spec.seed);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        CHECK(loaded.weights[l] == params.weights[l]);
        CHECK(loaded.biases[l] == params.biases[l]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects foreign and truncated files", "[network]") {
    const auto dir = std::filesystem::temp_directory_path() / "freqlens_ckpt_bad";
    std::filesystem::create_directories(dir);

    const auto magic = dir / "magic.txt";
    write_file_atomic(magic, "some-other-format v9\n");
    CHECK_THROWS_AS(load_checkpoint(magic), parse_error);

    NetworkSpec spec;
    spec.layer_sizes = {2, 2, 1};
    spec.seed = 9;
    std::string text = checkpoint_to_string(spec, init_network(spec));
    text.resize(text.size() / 2);  // cut mid-file
    const auto cut = dir / "cut.txt";
    write_file_atomic(cut, text);
    CHECK_THROWS_AS(load_checkpoint(cut), parse_error);

    std::filesystem::remove_all(dir);
}
