#pragma once

// Complex linear algebra helpers and a small fixed-topology MLP with exact
// reverse-mode gradients. Everything here is double precision so analytic
// gradients can be checked against finite differences.

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ntn {

using cd = std::complex<double>;
using ComplexMat = Eigen::MatrixXcd;
using ComplexVec = Eigen::VectorXcd;
using RealVec = Eigen::VectorXd;
using RealMat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Complex linear algebra
// ---------------------------------------------------------------------------

ComplexMat cmat_mul(const ComplexMat& a, const ComplexMat& b);
ComplexMat hermitian(const ComplexMat& a);
ComplexVec kron_vec(const ComplexVec& a, const ComplexVec& b);

// ---------------------------------------------------------------------------
// Multilayer perceptron
// ---------------------------------------------------------------------------

enum class Activation { tanh };

struct HeadSpec {
    enum class Kind { scalar, categorical, bernoulli };
    Kind kind = Kind::scalar;
    int size = 1;

    static HeadSpec scalar() { return {Kind::scalar, 1}; }
    static HeadSpec categorical(int n) { return {Kind::categorical, n}; }
    static HeadSpec bernoulli(int n) { return {Kind::bernoulli, n}; }
    bool operator==(const HeadSpec&) const = default;
};

struct DenseLayer {
    RealMat weights; // out x in
    RealVec bias;    // out
};

/// Feed-forward network: tanh hidden layers, one linear output layer whose
/// outputs are sliced into heads in declaration order.
struct MlpParams {
    std::vector<int> layer_sizes; // input, hidden..., total head outputs
    std::vector<DenseLayer> layers;
    std::vector<HeadSpec> heads;
    Activation hidden_activation = Activation::tanh;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;
    bool all_finite() const;

    /// Parameters flattened layer by layer (weights row-major, then bias).
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
};

struct Gradients {
    std::vector<DenseLayer> layers;

    static Gradients zeros_like(const MlpParams& p);
    void add(const Gradients& other, double scale = 1.0);
    void scale(double s);
    bool all_finite() const;
    double max_abs() const;
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
};

/// Per-head raw outputs: logits for categorical/bernoulli heads, a single
/// value for scalar heads.
using HeadOutputs = std::vector<RealVec>;

MlpParams make_mlp(int input_size, const std::vector<int>& hidden, const std::vector<HeadSpec>& heads,
                   Rng& rng);
MlpParams zero_mlp(int input_size, const std::vector<int>& hidden, const std::vector<HeadSpec>& heads);

HeadOutputs mlp_forward(const MlpParams& p, const RealVec& x);

/// Gradient of sum_h <upstream[h], output[h]> with respect to every parameter.
Gradients mlp_backward(const MlpParams& p, const RealVec& x, const HeadOutputs& upstream);

/// Convenience for scalar-head value networks.
double mlp_value(const MlpParams& p, const RealVec& x);

double max_abs_change(const MlpParams& a, const MlpParams& b);

// ---------------------------------------------------------------------------
// Adaptive moment estimation
// ---------------------------------------------------------------------------

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t steps = 0;
    Gradients first;
    Gradients second;
};

AdamState make_adam_state(const MlpParams& p);

/// One descent step against `g` (g is the gradient of a loss to minimise).
MlpParams apply_update(const MlpParams& p, const Gradients& g, double step, AdamState& state);

// Distribution helpers shared by the policy code.
RealVec softmax(const RealVec& logits);
RealVec log_softmax(const RealVec& logits);
double sigmoid(double z);
double log_sigmoid(double z);

} // namespace ntn
