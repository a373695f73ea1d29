#include "ntn/collab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ntn {

using json = nlohmann::json;

namespace {

double to_db_feature(double snr, double scale) { return 10.0 * std::log10(1.0 + std::max(snr, 0.0)) / scale; }

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// P(Poisson(lambda) <= k)
double poisson_cdf(double k, double lambda)
{
    if (k < 0.0)
        return 0.0;
    const double kmax = std::floor(k);
    double term = std::exp(-lambda);
    double acc = term;
    for (int i = 1; i <= kmax; ++i) {
        term *= lambda / i;
        acc += term;
        if (i > lambda && term < 1e-18 * acc)
            break;
    }
    return std::min(acc, 1.0);
}

} // namespace

RealVec low_features(const LowState& s, const FeatureScales& f)
{
    RealVec v(static_cast<Eigen::Index>(s.size()));
    Eigen::Index k = 0;
    for (double x : s.rb_snr)
        v(k++) = to_db_feature(x, f.snr_db);
    for (double x : s.rx_strength)
        v(k++) = x / f.strength;
    if (s.demand)
        v(k++) = *s.demand / f.demand;
    return v;
}

RealVec high_features(const HighState& s, const FeatureScales& f)
{
    RealVec v(3 + static_cast<Eigen::Index>(s.mean_snr.size()));
    v(0) = s.position.x / f.position;
    v(1) = s.position.y / f.position;
    v(2) = s.position.z / f.position;
    for (std::size_t i = 0; i < s.mean_snr.size(); ++i)
        v(3 + static_cast<Eigen::Index>(i)) = to_db_feature(s.mean_snr[i], f.snr_db);
    return v;
}

void AgentConfig::validate() const
{
    auto sizes_ok = [](const std::vector<int>& h) {
        return std::all_of(h.begin(), h.end(), [](int n) { return n >= 1; });
    };
    if (!sizes_ok(policy_hidden) || !sizes_ok(value_hidden) || !sizes_ok(tail_hidden))
        throw InvalidArgument("agent: hidden layer sizes must be >= 1");
    if (!(gamma_low >= 0.0 && gamma_low <= 1.0) || !(gamma_high >= 0.0 && gamma_high <= 1.0))
        throw InvalidArgument("agent: discount factors must lie in [0, 1]");
    if (!(learning_rate > 0.0))
        throw InvalidArgument("agent: learning_rate must be positive");
    if (!(clip > 0.0 && clip < 1.0))
        throw InvalidArgument("agent: clip must lie in (0, 1)");
    if (!(kl_stop > 0.0))
        throw InvalidArgument("agent: kl_stop must be positive");
    if (epochs < 1 || minibatch < 1 || tail_batch < 1)
        throw InvalidArgument("agent: epochs and batch sizes must be >= 1");
    if (replay_low < 1 || replay_high < 1)
        throw InvalidArgument("agent: replay capacities must be >= 1");
    if (rollout_depth < 1)
        throw InvalidArgument("agent: rollout_depth must be >= 1");
    if (!(reward_scale > 0.0))
        throw InvalidArgument("agent: reward_scale must be positive");
}

// ---------------------------------------------------------------------------
// Lower tier
// ---------------------------------------------------------------------------

std::vector<HeadSpec> LowPolicyLayout::heads() const
{
    return {HeadSpec::categorical(offsets), HeadSpec::categorical(offsets), HeadSpec::bernoulli(groups)};
}

static void check_policy(const MlpParams& policy)
{
    if (policy.heads.size() != 3 || policy.heads[0].kind != HeadSpec::Kind::categorical ||
        policy.heads[1].kind != HeadSpec::Kind::categorical || policy.heads[2].kind != HeadSpec::Kind::bernoulli)
        throw InvalidArgument("policy: expected two categorical heads and one bernoulli head");
}

static void check_action(const MlpParams& policy, const LowAction& a)
{
    const int k = policy.heads[0].size;
    const int g = policy.heads[2].size;
    if (a.rx.theta < 0 || a.rx.theta >= k || a.rx.phi < 0 || a.rx.phi >= policy.heads[1].size)
        throw InvalidArgument("policy: offset index out of range");
    if (g < 32 && (a.groups >> g) != 0)
        throw InvalidArgument("policy: group mask has bits beyond the bernoulli head");
}

static double log_prob_from_outputs(const HeadOutputs& out, const LowAction& a)
{
    double lp = log_softmax(out[0])(a.rx.theta) + log_softmax(out[1])(a.rx.phi);
    for (Eigen::Index g = 0; g < out[2].size(); ++g) {
        const double z = out[2](g);
        lp += (a.groups >> g) & 1u ? log_sigmoid(z) : log_sigmoid(-z);
    }
    return lp;
}

/// d log pi(a|s) / d head outputs.
static HeadOutputs log_prob_upstream(const HeadOutputs& out, const LowAction& a)
{
    HeadOutputs up(3);
    up[0] = -softmax(out[0]);
    up[0](a.rx.theta) += 1.0;
    up[1] = -softmax(out[1]);
    up[1](a.rx.phi) += 1.0;
    up[2].resize(out[2].size());
    for (Eigen::Index g = 0; g < out[2].size(); ++g)
        up[2](g) = static_cast<double>((a.groups >> g) & 1u) - sigmoid(out[2](g));
    return up;
}

double action_log_prob(const MlpParams& policy, const RealVec& features, const LowAction& a)
{
    check_policy(policy);
    check_action(policy, a);
    return log_prob_from_outputs(mlp_forward(policy, features), a);
}

ActResult act_low(const MlpParams& policy, const RealVec& features, Rng& rng, ActMode mode)
{
    check_policy(policy);
    const HeadOutputs out = mlp_forward(policy, features);
    if (!std::all_of(out.begin(), out.end(), [](const RealVec& v) { return v.allFinite(); }))
        throw NumericalError("act_low: non-finite policy output");

    auto pick = [&](const RealVec& logits) {
        if (mode == ActMode::greedy) {
            Eigen::Index best = 0;
            for (Eigen::Index i = 1; i < logits.size(); ++i)
                if (logits(i) > logits(best))
                    best = i;
            return static_cast<int>(best);
        }
        const RealVec p = softmax(logits);
        std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
        return dist(rng);
    };

    ActResult r;
    r.action.rx.theta = pick(out[0]);
    r.action.rx.phi = pick(out[1]);
    r.action.groups = 0;
    for (Eigen::Index g = 0; g < out[2].size(); ++g) {
        bool on;
        if (mode == ActMode::greedy)
            on = out[2](g) >= 0.0;
        else
            on = std::bernoulli_distribution(sigmoid(out[2](g)))(rng);
        if (on)
            r.action.groups |= 1u << g;
    }
    r.log_prob = log_prob_from_outputs(out, r.action);
    return r;
}

double advantage_low(double reward, const RealVec& state, const RealVec& next_state, const MlpParams& value,
                     double gamma)
{
    return reward + gamma * mlp_value(value, next_state) - mlp_value(value, state);
}

double advantage_high(double reward, const RealVec& state, const RealVec& next_state, const MlpParams& tail,
                      double gamma)
{
    return reward + gamma * mlp_value(tail, next_state) - mlp_value(tail, state);
}

std::vector<double> truncated_returns(std::span<const double> rewards, double gamma)
{
    std::vector<double> out(rewards.size());
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    return out;
}

PolicyLoss policy_loss(std::span<const PolicySample> batch, const MlpParams& policy, double clip,
                       bool with_gradient)
{
    check_policy(policy);
    if (batch.empty())
        throw InvalidArgument("policy_loss: empty batch");
    PolicyLoss out;
    if (with_gradient)
        out.gradient = Gradients::zeros_like(policy);
    const double n = static_cast<double>(batch.size());
    int clipped = 0;
    for (const auto& s : batch) {
        check_action(policy, s.action);
        const HeadOutputs heads = mlp_forward(policy, s.features);
        const double lp = log_prob_from_outputs(heads, s.action);
        const double ratio = std::exp(lp - s.old_log_prob);
        const double a = s.advantage;
        const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
        out.objective += std::min(ratio * a, clipped_ratio * a);
        out.approx_kl += s.old_log_prob - lp;
        const bool clip_active = (a > 0.0 && ratio > 1.0 + clip) || (a < 0.0 && ratio < 1.0 - clip);
        if (clip_active) {
            ++clipped;
            continue;
        }
        if (with_gradient) {
            HeadOutputs up = log_prob_upstream(heads, s.action);
            const double w = a * ratio / n;
            for (auto& h : up)
                h *= w;
            out.gradient.add(mlp_backward(policy, s.features, up));
        }
    }
    out.objective /= n;
    out.approx_kl /= n;
    out.clip_fraction = clipped / n;
    return out;
}

ValueLoss value_loss(std::span<const RealVec> states, std::span<const double> targets, const MlpParams& value,
                     bool with_gradient)
{
    if (states.size() != targets.size())
        throw InvalidArgument("value_loss: states and targets differ in length");
    if (states.empty())
        throw InvalidArgument("value_loss: empty batch");
    ValueLoss out;
    if (with_gradient)
        out.gradient = Gradients::zeros_like(value);
    const double n = static_cast<double>(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double v = mlp_value(value, states[i]);
        const double e = v - targets[i];
        out.loss += e * e / n;
        if (with_gradient) {
            HeadOutputs up{RealVec::Constant(1, 2.0 * e / n)};
            out.gradient.add(mlp_backward(value, states[i], up));
        }
    }
    return out;
}

LowAgent LowAgent::create(int state_size, const LowPolicyLayout& layout, const AgentConfig& cfg, Rng& rng)
{
    if (state_size < 1 || layout.offsets < 1 || layout.groups < 1 || layout.groups > 16)
        throw InvalidArgument("LowAgent: bad state size or action layout");
    LowAgent a;
    a.layout = layout;
    a.policy = make_mlp(state_size, cfg.policy_hidden, layout.heads(), rng);
    a.policy_old = a.policy;
    a.value = make_mlp(state_size, cfg.value_hidden, {HeadSpec::scalar()}, rng);
    a.policy_opt = make_adam_state(a.policy);
    a.value_opt = make_adam_state(a.value);
    a.replay = Replay<LowExperience>(cfg.replay_low);
    return a;
}

UpdateStats update_low(LowAgent& agent, std::span<const LowExperience> batch, const AgentConfig& cfg, Rng& rng)
{
    UpdateStats st;
    if (batch.empty())
        return st;
    agent.policy_old = agent.policy;

    std::vector<PolicySample> samples;
    std::vector<RealVec> states;
    std::vector<double> targets;
    samples.reserve(batch.size());
    for (const auto& e : batch) {
        const double a_low = advantage_low(e.reward, e.state, e.next_state, agent.value, cfg.gamma_low);
        const double a_high = cfg.use_high_advantage ? e.high_advantage : 0.0;
        samples.push_back({e.state, e.action, e.log_prob, a_low + a_high});
        states.push_back(e.state);
        targets.push_back(e.target);
    }

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t mb = static_cast<std::size_t>(cfg.minibatch);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += mb) {
            const std::size_t end = std::min(order.size(), start + mb);
            std::vector<PolicySample> ps;
            std::vector<RealVec> vs;
            std::vector<double> vt;
            for (std::size_t i = start; i < end; ++i) {
                ps.push_back(samples[order[i]]);
                vs.push_back(states[order[i]]);
                vt.push_back(targets[order[i]]);
            }
            PolicyLoss pl = policy_loss(ps, agent.policy, cfg.clip);
            pl.gradient.scale(-1.0); // ascend the surrogate
            agent.policy = apply_update(agent.policy, pl.gradient, cfg.learning_rate, agent.policy_opt);
            const ValueLoss vl = value_loss(vs, vt, agent.value);
            agent.value = apply_update(agent.value, vl.gradient, cfg.learning_rate, agent.value_opt);
        }
        ++st.epochs_run;
        st.approx_kl = policy_loss(samples, agent.policy, cfg.clip, false).approx_kl;
        if (st.approx_kl > cfg.kl_stop)
            break;
    }
    st.policy_objective = policy_loss(samples, agent.policy, cfg.clip, false).objective;
    st.value_loss = value_loss(states, targets, agent.value, false).loss;
    return st;
}

DecisionTrajectory gen_trajectory(const MlpParams& policy, const RealVec& state, int horizon)
{
    if (horizon < 0)
        throw InvalidArgument("gen_trajectory: negative horizon");
    DecisionTrajectory t;
    Rng unused;
    const LowAction a = act_low(policy, state, unused, ActMode::greedy).action;
    t.actions.assign(horizon, a);
    t.predicted_states.assign(horizon, state);
    return t;
}

// ---------------------------------------------------------------------------
// Higher tier
// ---------------------------------------------------------------------------

namespace {

struct TreeSearch {
    const MlpParams& tail;
    const FeatureScales& features;
    double gamma;
    int depth;
    CycleModel& model;

    double tail_value(const HighState& s) const { return mlp_value(tail, high_features(s, features)); }

    double q(int d, const HighState& s, int c) const
    {
        const double r = model.reward(d, c, s);
        const HighState next = model.next_state(d, c, s);
        return r + gamma * best(d + 1, next);
    }

    double best(int d, const HighState& s) const
    {
        if (d == depth)
            return tail_value(s);
        double b = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < model.candidate_count(); ++c)
            b = std::max(b, q(d, s, c));
        return b;
    }
};

} // namespace

RolloutResult rollout_high(const MlpParams& tail, const FeatureScales& features, double gamma, int depth,
                           const HighState& s, CycleModel& model)
{
    if (depth < 1)
        throw InvalidArgument("rollout_high: depth must be >= 1");
    const int n = model.candidate_count();
    if (n < 1)
        throw InvalidArgument("rollout_high: no candidates");
    TreeSearch search{tail, features, gamma, depth, model};
    RolloutResult out;
    out.candidate_values.resize(n);

    if (model.open_loop()) {
        // Stage values no longer depend on the earlier choices, so the
        // optimal continuation is a sum of per-stage maxima.
        double cont = 0.0;
        if (depth >= 2) {
            double last = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < n; ++c)
                last = std::max(last, model.reward(depth - 1, c, s) +
                                          gamma * search.tail_value(model.next_state(depth - 1, c, s)));
            cont = last;
            for (int d = depth - 2; d >= 1; --d) {
                double b = -std::numeric_limits<double>::infinity();
                for (int c = 0; c < n; ++c)
                    b = std::max(b, model.reward(d, c, s));
                cont = b + gamma * cont;
            }
        }
        for (int c = 0; c < n; ++c) {
            const double tailv = depth >= 2 ? cont : search.tail_value(model.next_state(0, c, s));
            out.candidate_values[c] = model.reward(0, c, s) + gamma * tailv;
        }
    } else {
        for (int c = 0; c < n; ++c)
            out.candidate_values[c] = search.q(0, s, c);
    }

    out.candidate = 0;
    for (int c = 1; c < n; ++c)
        if (out.candidate_values[c] > out.candidate_values[out.candidate])
            out.candidate = c;
    out.value = out.candidate_values[out.candidate];
    return out;
}

int high_candidate_count(int offsets, int groups)
{
    if (offsets < 1 || groups < 1 || groups > 16)
        throw InvalidArgument("high candidates: bad offset grid or group count");
    return offsets * offsets * ((1 << groups) - 1);
}

HighAction high_action_from_index(int index, int offsets, int groups)
{
    if (index < 0 || index >= high_candidate_count(offsets, groups))
        throw InvalidArgument("high candidates: index out of range");
    const int subsets = (1 << groups) - 1;
    HighAction a;
    a.groups = static_cast<std::uint32_t>(index % subsets) + 1u;
    const int tx = index / subsets;
    a.tx.theta = tx / offsets;
    a.tx.phi = tx % offsets;
    return a;
}

int high_action_index(const HighAction& a, int offsets, int groups)
{
    const int subsets = (1 << groups) - 1;
    if (a.tx.theta < 0 || a.tx.theta >= offsets || a.tx.phi < 0 || a.tx.phi >= offsets || a.groups == 0 ||
        a.groups > static_cast<std::uint32_t>(subsets))
        throw InvalidArgument("high candidates: action outside the table");
    return (a.tx.theta * offsets + a.tx.phi) * subsets + static_cast<int>(a.groups) - 1;
}

HighAgent HighAgent::create(int state_size, const AgentConfig& cfg, Rng& rng)
{
    if (state_size < 1)
        throw InvalidArgument("HighAgent: bad state size");
    HighAgent a;
    a.tail = make_mlp(state_size, cfg.tail_hidden, {HeadSpec::scalar()}, rng);
    a.tail_opt = make_adam_state(a.tail);
    a.replay = Replay<HighExperience>(cfg.replay_high);
    return a;
}

double update_tail_value(HighAgent& agent, std::span<const HighExperience> batch, const AgentConfig& cfg)
{
    if (batch.empty())
        return 0.0;
    std::vector<RealVec> states;
    std::vector<double> targets;
    for (const auto& e : batch) {
        states.push_back(e.state);
        targets.push_back(e.target);
    }
    const ValueLoss vl = value_loss(states, targets, agent.tail);
    agent.tail = apply_update(agent.tail, vl.gradient, cfg.learning_rate, agent.tail_opt);
    return vl.loss;
}

// ---------------------------------------------------------------------------

SimulatedCycleModel::SimulatedCycleModel(Inputs in) : in_(std::move(in))
{
    if (!in_.channel)
        throw InvalidArgument("cycle model: missing channel");
    if (in_.slots_per_cycle < 1 || in_.trajectory.empty() ||
        in_.trajectory.size() % static_cast<std::size_t>(in_.slots_per_cycle) != 0)
        throw InvalidArgument("cycle model: trajectory must cover whole cycles");
    const int depth = static_cast<int>(in_.trajectory.size()) / in_.slots_per_cycle;
    if (static_cast<int>(in_.positions.size()) < depth)
        throw InvalidArgument("cycle model: need one satellite position per simulated cycle");
    const int k = in_.grid.size();
    cache_.assign(depth, std::vector<std::optional<CycleRates>>(static_cast<std::size_t>(k * k)));
}

int SimulatedCycleModel::candidate_count() const { return high_candidate_count(in_.grid.size(), in_.pool.num_groups()); }

const SimulatedCycleModel::CycleRates& SimulatedCycleModel::rates(int depth, int tx_index)
{
    if (depth < 0 || depth >= static_cast<int>(cache_.size()))
        throw InvalidArgument("cycle model: depth beyond the decision trajectory");
    auto& slot = cache_[depth][tx_index];
    if (slot)
        return *slot;
    const int k = in_.grid.size();
    const int T = in_.slots_per_cycle;
    const AnglePair tx = apply_offsets(in_.base.tx, BeamOffsets{tx_index / k, tx_index % k}, in_.grid);
    CycleRates cr;
    cr.rb_rate.resize(T);
    cr.mean_snr.resize(T);
    for (int q = 0; q < T; ++q) {
        const LowAction& la = in_.trajectory[static_cast<std::size_t>(depth * T + q)];
        const AnglePair rx = apply_offsets(in_.base.rx, la.rx, in_.grid);
        const long n = static_cast<long>(in_.first_slot) + static_cast<long>(depth) * T + q;
        const GroupRates gr =
            group_rates(in_.channel->slot(n, in_.pool.num_rbs), {tx, rx}, in_.array, in_.pool, in_.link,
                        in_.path_gain);
        evaluations_ += in_.pool.num_rbs;
        cr.rb_rate[q] = gr.rb_rate;
        cr.mean_snr[q] = std::accumulate(gr.rb_snr.begin(), gr.rb_snr.end(), 0.0) / in_.pool.num_rbs;
    }
    slot = std::move(cr);
    return *slot;
}

double SimulatedCycleModel::reward(int depth, int candidate, const HighState&)
{
    const HighAction a = high_action_from_index(candidate, in_.grid.size(), in_.pool.num_groups());
    const CycleRates& cr = rates(depth, a.tx.theta * in_.grid.size() + a.tx.phi);
    const int T = in_.slots_per_cycle;
    double acc = 0.0;
    for (int q = 0; q < T; ++q) {
        const LowAction& la = in_.trajectory[static_cast<std::size_t>(depth * T + q)];
        const RbAllocation alloc = expand_groups(in_.pool, la.groups, a.groups);
        const double served = served_rate(alloc.bits, cr.rb_rate[q]);
        const double p_sat = poisson_cdf(served / in_.demand.unit + 1e-9, in_.demand.lambda);
        acc += p_sat * mean_selected_rate(alloc.bits, cr.rb_rate[q]);
    }
    return in_.reward_scale * acc / T;
}

HighState SimulatedCycleModel::next_state(int depth, int candidate, const HighState&)
{
    const HighAction a = high_action_from_index(candidate, in_.grid.size(), in_.pool.num_groups());
    const CycleRates& cr = rates(depth, a.tx.theta * in_.grid.size() + a.tx.phi);
    return {in_.positions[depth], cr.mean_snr};
}

SimulatedCycleModel::Inputs cycle_model_inputs(const Environment& env, const DecisionTrajectory& trajectory,
                                               int depth, double reward_scale)
{
    const EnvConfig& cfg = env.config();
    SimulatedCycleModel::Inputs in;
    in.channel = &env.last_observed_channel();
    in.array = cfg.array;
    in.link = cfg.link;
    in.pool = env.pool();
    in.grid = cfg.offsets;
    in.base = env.base_beams();
    in.path_gain = env.cycle_path_gain();
    in.first_slot = env.slot();
    in.slots_per_cycle = cfg.time.slots_per_cycle;
    in.demand = cfg.demand;
    in.trajectory = trajectory.actions;
    in.trajectory.resize(static_cast<std::size_t>(depth * cfg.time.slots_per_cycle),
                         trajectory.actions.empty() ? LowAction{} : trajectory.actions.back());
    const int k = env.cycle();
    for (int d = 0; d < depth; ++d)
        in.positions.push_back(env.satellite_position(k + d + 1));
    in.reward_scale = reward_scale;
    return in;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

CollaborativeTrainer::CollaborativeTrainer(EnvConfig env_cfg, AgentConfig agent_cfg, std::uint64_t seed)
    : env_cfg_(std::move(env_cfg)), agent_cfg_(std::move(agent_cfg)), seed_(seed), env_(env_cfg_), rng_(seed)
{
    agent_cfg_.validate();
    const int low_size = static_cast<int>(env_.low_state().size());
    const int high_size = 3 + env_cfg_.time.slots_per_cycle;
    low_ = LowAgent::create(low_size, {env_cfg_.offsets.size(), env_cfg_.num_groups}, agent_cfg_, rng_);
    high_ = HighAgent::create(high_size, agent_cfg_, rng_);
    low_.high_value_mirror = high_.tail;
}

std::uint64_t CollaborativeTrainer::training_episode_seed(int index) const
{
    return splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

HighAction CollaborativeTrainer::decide_high(const DecisionTrajectory& trajectory, const HighState& s,
                                             std::int64_t& evaluations)
{
    SimulatedCycleModel model(
        cycle_model_inputs(env_, trajectory, agent_cfg_.rollout_depth, agent_cfg_.reward_scale));
    const RolloutResult r =
        rollout_high(high_.tail, agent_cfg_.features, agent_cfg_.gamma_high, agent_cfg_.rollout_depth, s, model);
    evaluations += model.evaluations();
    return high_action_from_index(r.candidate, env_cfg_.offsets.size(), env_cfg_.num_groups);
}

EpisodeResult CollaborativeTrainer::run_episode(std::uint64_t episode_seed, bool learn, ActMode mode,
                                                TrainingLog* log)
{
    const AgentConfig& cfg = agent_cfg_;
    const int T = env_cfg_.time.slots_per_cycle;
    const int horizon = cfg.rollout_depth * T;
    env_.reset(episode_seed);

    EpisodeResult out;
    RealVec low_feat = low_features(env_.low_state(), cfg.features);
    DecisionTrajectory traj = gen_trajectory(low_.policy, low_feat, horizon);
    HighState hs = env_.high_state();
    HighAction ah = decide_high(traj, hs, out.evaluations);
    std::vector<HighExperience> episode_high;

    while (!env_.done()) {
        const int k = env_.cycle();
        const MlpParams policy0 = low_.policy;
        const MlpParams value0 = low_.value;
        const MlpParams tail0 = high_.tail;

        env_.step_high(ah);
        std::vector<LowExperience> cycle_exp;
        double sum_low = 0.0;
        for (int p = 0; p < T; ++p) {
            const ActResult ar = act_low(low_.policy, low_feat, rng_, mode);
            const LowStepResult r = env_.step_low(ar.action);
            RealVec next = low_features(r.state, cfg.features);
            if (learn) {
                LowExperience e;
                e.state = low_feat;
                e.action = ar.action;
                e.log_prob = ar.log_prob;
                e.reward = cfg.reward_scale * r.reward;
                e.next_state = next;
                e.cycle = k;
                e.slot = p;
                cycle_exp.push_back(std::move(e));
            }
            sum_low += r.reward;
            low_feat = std::move(next);
        }
        out.low_return += sum_low;

        const CycleOutcome oc = env_.cycle_outcome();
        out.high_rewards.push_back(oc.reward);
        out.high_return += oc.reward;

        if (learn) {
            const RealVec hf = high_features(hs, cfg.features);
            const RealVec hf_next = high_features(oc.next_state, cfg.features);
            const double adv_high =
                cfg.use_high_advantage
                    ? advantage_high(cfg.reward_scale * oc.reward, hf, hf_next, low_.high_value_mirror,
                                     cfg.gamma_high)
                    : 0.0;
            std::vector<double> rewards;
            for (const auto& e : cycle_exp)
                rewards.push_back(e.reward);
            const std::vector<double> targets = truncated_returns(rewards, cfg.gamma_low);
            for (std::size_t i = 0; i < cycle_exp.size(); ++i) {
                cycle_exp[i].target = targets[i];
                cycle_exp[i].high_advantage = adv_high;
                low_.replay.push(cycle_exp[i]);
            }

            if (!cfg.sequential)
                traj = gen_trajectory(low_.policy, low_feat, horizon);
            const UpdateStats us = update_low(low_, cycle_exp, cfg, rng_);
            if (cfg.sequential)
                traj = gen_trajectory(low_.policy, low_feat, horizon);

            episode_high.push_back({hf, ah, cfg.reward_scale * oc.reward, hf_next, k, 0.0});
            double tail_loss = 0.0;
            if (!high_.replay.empty()) {
                const std::size_t n = std::min<std::size_t>(high_.replay.size(), cfg.tail_batch);
                std::uniform_int_distribution<std::size_t> pick(0, high_.replay.size() - 1);
                std::vector<HighExperience> batch;
                for (std::size_t i = 0; i < n; ++i)
                    batch.push_back(high_.replay[pick(rng_)]);
                tail_loss = update_tail_value(high_, batch, cfg);
            }
            low_.high_value_mirror = high_.tail;

            if (log) {
                StageLog s;
                s.episode = episodes_trained_;
                s.cycle = k;
                s.mean_low_reward = sum_low / T;
                s.high_reward = oc.reward;
                s.policy_objective = us.policy_objective;
                s.value_loss = us.value_loss;
                s.tail_loss = tail_loss;
                s.approx_kl = us.approx_kl;
                s.param_change = std::max({max_abs_change(policy0, low_.policy), max_abs_change(value0, low_.value),
                                           max_abs_change(tail0, high_.tail)});
                log->stages.push_back(s);
            }
        } else {
            traj = gen_trajectory(low_.policy, low_feat, horizon);
        }

        hs = oc.next_state;
        if (!env_.done())
            ah = decide_high(traj, hs, out.evaluations);
    }

    if (learn) {
        double g = 0.0;
        for (std::size_t i = episode_high.size(); i-- > 0;) {
            g = episode_high[i].reward + cfg.gamma_high * g;
            episode_high[i].target = g;
        }
        for (auto& e : episode_high)
            high_.replay.push(std::move(e));
    }

    out.trace = env_.trace();
    out.decisions = static_cast<int>(out.trace.size());
    return out;
}

TrainingLog CollaborativeTrainer::train(int episodes, double epsilon)
{
    if (episodes < 0)
        throw InvalidArgument("train: negative episode budget");
    TrainingLog log;
    for (int i = 0; i < episodes; ++i) {
        const std::size_t first_stage = log.stages.size();
        const EpisodeResult r = run_episode(training_episode_seed(episodes_trained_), true, ActMode::sample, &log);
        ++episodes_trained_;
        log.episode_low_return.push_back(r.low_return);
        log.episode_high_return.push_back(r.high_return);
        if (!low_.policy.all_finite() || !low_.value.all_finite() || !high_.tail.all_finite())
            throw NumericalError("train: parameters became non-finite");
        if (epsilon > 0.0 &&
            std::any_of(log.stages.begin() + static_cast<std::ptrdiff_t>(first_stage), log.stages.end(),
                        [&](const StageLog& s) { return s.param_change < epsilon; })) {
            log.converged = true;
            break;
        }
    }
    return log;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "ntn-collab-checkpoint";
constexpr int kCheckpointVersion = 1;

const char* head_kind_name(HeadSpec::Kind k)
{
    switch (k) {
    case HeadSpec::Kind::scalar:
        return "scalar";
    case HeadSpec::Kind::categorical:
        return "categorical";
    case HeadSpec::Kind::bernoulli:
        return "bernoulli";
    }
    return "scalar";
}

json net_to_json(const MlpParams& p)
{
    json heads = json::array();
    for (const auto& h : p.heads)
        heads.push_back({{"kind", head_kind_name(h.kind)}, {"size", h.size}});
    return {{"layer_sizes", p.layer_sizes}, {"heads", heads}, {"params", p.flatten()}};
}

json adam_to_json(const AdamState& s)
{
    return {{"steps", s.steps}, {"first", s.first.flatten()}, {"second", s.second.flatten()}};
}

void net_from_json(const json& j, MlpParams& p, const std::string& name)
{
    if (j.at("layer_sizes").get<std::vector<int>>() != p.layer_sizes)
        throw InvalidArgument("checkpoint: network '" + name + "' has a different shape");
    const json& heads = j.at("heads");
    if (heads.size() != p.heads.size())
        throw InvalidArgument("checkpoint: network '" + name + "' has different heads");
    for (std::size_t i = 0; i < p.heads.size(); ++i)
        if (heads[i].at("kind").get<std::string>() != head_kind_name(p.heads[i].kind) ||
            heads[i].at("size").get<int>() != p.heads[i].size)
            throw InvalidArgument("checkpoint: network '" + name + "' has different heads");
    p.assign(j.at("params").get<std::vector<double>>());
}

void adam_from_json(const json& j, AdamState& s)
{
    s.steps = j.at("steps").get<std::int64_t>();
    s.first.assign(j.at("first").get<std::vector<double>>());
    s.second.assign(j.at("second").get<std::vector<double>>());
}

} // namespace

void CollaborativeTrainer::save_checkpoint(const std::filesystem::path& path) const
{
    std::ostringstream rng_state;
    rng_state << rng_;
    json j = {
        {"format", kCheckpointFormat},
        {"version", kCheckpointVersion},
        {"seed", seed_},
        {"episodes_trained", episodes_trained_},
        {"rng", rng_state.str()},
        {"networks",
         {{"policy", net_to_json(low_.policy)},
          {"value", net_to_json(low_.value)},
          {"tail", net_to_json(high_.tail)}}},
        {"optimizers",
         {{"policy", adam_to_json(low_.policy_opt)},
          {"value", adam_to_json(low_.value_opt)},
          {"tail", adam_to_json(high_.tail_opt)}}},
        // replay contents are not persisted; a resumed run refills them
        {"replay",
         {{"low", {{"capacity", low_.replay.capacity()}, {"size", low_.replay.size()}, {"cursor", low_.replay.cursor()}}},
          {"high",
           {{"capacity", high_.replay.capacity()}, {"size", high_.replay.size()}, {"cursor", high_.replay.cursor()}}}}},
    };
    std::ofstream f(path);
    if (!f)
        throw InvalidArgument("checkpoint: cannot write " + path.string());
    f << j.dump(1) << '\n';
}

void CollaborativeTrainer::load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw InvalidArgument("checkpoint: cannot read " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat)
        throw InvalidArgument("checkpoint: not a collaborative-learner checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw InvalidArgument("checkpoint: unsupported version");
    try {
        LowAgent low = low_;
        HighAgent high = high_;
        net_from_json(j.at("networks").at("policy"), low.policy, "policy");
        net_from_json(j.at("networks").at("value"), low.value, "value");
        net_from_json(j.at("networks").at("tail"), high.tail, "tail");
        adam_from_json(j.at("optimizers").at("policy"), low.policy_opt);
        adam_from_json(j.at("optimizers").at("value"), low.value_opt);
        adam_from_json(j.at("optimizers").at("tail"), high.tail_opt);
        std::istringstream rs(j.at("rng").get<std::string>());
        Rng rng;
        rs >> rng;
        if (!rs)
            throw InvalidArgument("checkpoint: bad RNG state");
        low.policy_old = low.policy;
        low.high_value_mirror = high.tail;
        low_ = std::move(low);
        high_ = std::move(high);
        rng_ = rng;
        episodes_trained_ = j.at("episodes_trained").get<int>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("checkpoint: ") + e.what());
    }
}

} // namespace ntn
