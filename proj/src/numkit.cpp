#include "ntn/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ntn {

ComplexMat cmat_mul(const ComplexMat& a, const ComplexMat& b)
{
    if (a.cols() != b.rows()) {
        std::ostringstream os;
        os << "cmat_mul: inner dimensions differ (" << a.rows() << "x" << a.cols() << " * " << b.rows()
           << "x" << b.cols() << ")";
        throw InvalidArgument(os.str());
    }
    return a * b;
}

ComplexMat hermitian(const ComplexMat& a) { return a.adjoint(); }

ComplexVec kron_vec(const ComplexVec& a, const ComplexVec& b)
{
    ComplexVec out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

// ---------------------------------------------------------------------------

std::size_t MlpParams::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers)
        n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

bool MlpParams::all_finite() const
{
    return std::all_of(layers.begin(), layers.end(),
                       [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

static void flatten_layers(const std::vector<DenseLayer>& layers, std::vector<double>& out)
{
    for (const auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                out.push_back(l.weights(r, c));
        for (Eigen::Index r = 0; r < l.bias.size(); ++r)
            out.push_back(l.bias(r));
    }
}

std::vector<double> MlpParams::flatten() const
{
    std::vector<double> out;
    out.reserve(parameter_count());
    flatten_layers(layers, out);
    return out;
}

static void assign_layers(std::vector<DenseLayer>& layers, std::span<const double> flat, const char* who)
{
    std::size_t n = 0;
    for (const auto& l : layers)
        n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    if (flat.size() != n)
        throw InvalidArgument(std::string(who) + ": parameter count mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                l.weights(r, c) = flat[k++];
        for (Eigen::Index r = 0; r < l.bias.size(); ++r)
            l.bias(r) = flat[k++];
    }
}

void MlpParams::assign(std::span<const double> flat) { assign_layers(layers, flat, "MlpParams::assign"); }

Gradients Gradients::zeros_like(const MlpParams& p)
{
    Gradients g;
    g.layers.reserve(p.layers.size());
    for (const auto& l : p.layers)
        g.layers.push_back({RealMat::Zero(l.weights.rows(), l.weights.cols()), RealVec::Zero(l.bias.size())});
    return g;
}

void Gradients::add(const Gradients& other, double s)
{
    if (other.layers.size() != layers.size())
        throw InvalidArgument("Gradients::add: shape mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weights += s * other.layers[i].weights;
        layers[i].bias += s * other.layers[i].bias;
    }
}

void Gradients::scale(double s)
{
    for (auto& l : layers) {
        l.weights *= s;
        l.bias *= s;
    }
}

bool Gradients::all_finite() const
{
    return std::all_of(layers.begin(), layers.end(),
                       [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

double Gradients::max_abs() const
{
    double m = 0.0;
    for (const auto& l : layers) {
        if (l.weights.size() > 0)
            m = std::max(m, l.weights.cwiseAbs().maxCoeff());
        if (l.bias.size() > 0)
            m = std::max(m, l.bias.cwiseAbs().maxCoeff());
    }
    return m;
}

std::vector<double> Gradients::flatten() const
{
    std::vector<double> out;
    flatten_layers(layers, out);
    return out;
}

void Gradients::assign(std::span<const double> flat) { assign_layers(layers, flat, "Gradients::assign"); }

// ---------------------------------------------------------------------------

static std::vector<int> build_sizes(int input_size, const std::vector<int>& hidden,
                                    const std::vector<HeadSpec>& heads)
{
    if (input_size < 1)
        throw InvalidArgument("mlp: input size must be >= 1");
    if (heads.empty())
        throw InvalidArgument("mlp: at least one output head is required");
    int outputs = 0;
    for (const auto& h : heads) {
        if (h.size < 1 || (h.kind == HeadSpec::Kind::scalar && h.size != 1))
            throw InvalidArgument("mlp: invalid head size");
        outputs += h.size;
    }
    std::vector<int> sizes{input_size};
    for (int h : hidden) {
        if (h < 1)
            throw InvalidArgument("mlp: hidden width must be >= 1");
        sizes.push_back(h);
    }
    sizes.push_back(outputs);
    return sizes;
}

MlpParams zero_mlp(int input_size, const std::vector<int>& hidden, const std::vector<HeadSpec>& heads)
{
    MlpParams p;
    p.layer_sizes = build_sizes(input_size, hidden, heads);
    p.heads = heads;
    for (std::size_t i = 0; i + 1 < p.layer_sizes.size(); ++i)
        p.layers.push_back({RealMat::Zero(p.layer_sizes[i + 1], p.layer_sizes[i]),
                            RealVec::Zero(p.layer_sizes[i + 1])});
    return p;
}

MlpParams make_mlp(int input_size, const std::vector<int>& hidden, const std::vector<HeadSpec>& heads, Rng& rng)
{
    MlpParams p = zero_mlp(input_size, hidden, heads);
    for (auto& l : p.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                l.weights(r, c) = dist(rng);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r)
            l.bias(r) = dist(rng);
    }
    return p;
}

namespace {

// Post-activation values of every layer; acts[0] is the input.
std::vector<RealVec> forward_trace(const MlpParams& p, const RealVec& x)
{
    if (x.size() != p.input_size()) {
        std::ostringstream os;
        os << "mlp_forward: input has " << x.size() << " entries, network expects " << p.input_size();
        throw InvalidArgument(os.str());
    }
    std::vector<RealVec> acts;
    acts.reserve(p.layers.size() + 1);
    acts.push_back(x);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        RealVec z = p.layers[i].weights * acts.back() + p.layers[i].bias;
        if (i + 1 < p.layers.size())
            z = z.array().tanh().matrix();
        acts.push_back(std::move(z));
    }
    return acts;
}

} // namespace

HeadOutputs mlp_forward(const MlpParams& p, const RealVec& x)
{
    const auto acts = forward_trace(p, x);
    const RealVec& out = acts.back();
    HeadOutputs heads;
    heads.reserve(p.heads.size());
    Eigen::Index offset = 0;
    for (const auto& h : p.heads) {
        heads.push_back(out.segment(offset, h.size));
        offset += h.size;
    }
    return heads;
}

double mlp_value(const MlpParams& p, const RealVec& x) { return mlp_forward(p, x).front()(0); }

Gradients mlp_backward(const MlpParams& p, const RealVec& x, const HeadOutputs& upstream)
{
    if (upstream.size() != p.heads.size())
        throw InvalidArgument("mlp_backward: upstream head count mismatch");
    RealVec delta(p.output_size());
    Eigen::Index offset = 0;
    for (std::size_t h = 0; h < p.heads.size(); ++h) {
        if (upstream[h].size() != p.heads[h].size)
            throw InvalidArgument("mlp_backward: upstream head size mismatch");
        delta.segment(offset, p.heads[h].size) = upstream[h];
        offset += p.heads[h].size;
    }

    const auto acts = forward_trace(p, x);
    Gradients g = Gradients::zeros_like(p);
    for (std::size_t i = p.layers.size(); i-- > 0;) {
        g.layers[i].weights.noalias() = delta * acts[i].transpose();
        g.layers[i].bias = delta;
        if (i == 0)
            break;
        RealVec back = p.layers[i].weights.transpose() * delta;
        // acts[i] is tanh output of layer i-1; d tanh = 1 - tanh^2
        delta = back.array() * (1.0 - acts[i].array().square());
    }
    return g;
}

double max_abs_change(const MlpParams& a, const MlpParams& b)
{
    if (a.layers.size() != b.layers.size())
        throw InvalidArgument("max_abs_change: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        m = std::max(m, (a.layers[i].weights - b.layers[i].weights).cwiseAbs().maxCoeff());
        m = std::max(m, (a.layers[i].bias - b.layers[i].bias).cwiseAbs().maxCoeff());
    }
    return m;
}

// ---------------------------------------------------------------------------

AdamState make_adam_state(const MlpParams& p)
{
    AdamState s;
    s.first = Gradients::zeros_like(p);
    s.second = Gradients::zeros_like(p);
    return s;
}

MlpParams apply_update(const MlpParams& p, const Gradients& g, double step, AdamState& state)
{
    if (!(step > 0.0))
        throw InvalidArgument("apply_update: step must be positive");
    if (g.layers.size() != p.layers.size())
        throw InvalidArgument("apply_update: gradient shape mismatch");
    if (!g.all_finite())
        throw NumericalError("apply_update: non-finite gradient");
    if (state.first.layers.size() != p.layers.size())
        state = make_adam_state(p);

    state.steps += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.steps));

    MlpParams out = p;
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * grad;
        v = state.beta2 * v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
        param.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        update(out.layers[i].weights, g.layers[i].weights, state.first.layers[i].weights,
               state.second.layers[i].weights);
        update(out.layers[i].bias, g.layers[i].bias, state.first.layers[i].bias, state.second.layers[i].bias);
    }
    if (!out.all_finite())
        throw NumericalError("apply_update: parameters became non-finite");
    return out;
}

// ---------------------------------------------------------------------------

RealVec softmax(const RealVec& logits)
{
    const double mx = logits.maxCoeff();
    RealVec e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

RealVec log_softmax(const RealVec& logits)
{
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return (logits.array() - lse).matrix();
}

double sigmoid(double z)
{
    if (z >= 0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(sigmoid(z)) without overflow
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

} // namespace ntn
