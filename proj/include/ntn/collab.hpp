#pragma once

// Two-tier collaborative learner. The UE (lower tier) runs a clipped
// ratio-surrogate policy update driven by the sum of its own TD advantage and
// the satellite's cycle advantage; the satellite (higher tier) picks its
// per-cycle action by an n-step rollout against the UE's decision trajectory,
// closing the horizon with a learned tail value.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ntn/env.hpp"

namespace ntn {

/// Fixed-capacity FIFO replay memory.
template <typename T>
class Replay {
public:
    explicit Replay(std::size_t capacity = 1) : capacity_(capacity) {}

    void push(T item)
    {
        items_.push_back(std::move(item));
        if (items_.size() > capacity_) {
            items_.pop_front();
            ++evicted_;
        }
    }
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const T& operator[](std::size_t i) const { return items_[i]; }
    /// Total pushes so far; the write cursor of the ring.
    std::uint64_t cursor() const { return evicted_ + items_.size(); }
    void clear()
    {
        items_.clear();
        evicted_ = 0;
    }

private:
    std::size_t capacity_;
    std::deque<T> items_;
    std::uint64_t evicted_ = 0;
};

/// Input normalisation for the networks. Environment quantities span many
/// orders of magnitude (SNRs ~1e7, positions ~1e7 m).
struct FeatureScales {
    double snr_db = 100.0;
    double position = 1e7;
    double strength = 1.0;
    double demand = 1e8;
};

RealVec low_features(const LowState& s, const FeatureScales& f);
RealVec high_features(const HighState& s, const FeatureScales& f);

struct AgentConfig {
    std::vector<int> policy_hidden{64, 64};
    std::vector<int> value_hidden{64, 64};
    std::vector<int> tail_hidden{64, 64};
    double gamma_low = 0.99;
    double gamma_high = 0.99;
    double learning_rate = 3e-4;
    double clip = 0.2;
    double kl_stop = 0.015;
    int epochs = 4;
    int minibatch = 32;
    std::size_t replay_low = 9600;
    std::size_t replay_high = 1200;
    int tail_batch = 32;
    int rollout_depth = 2;
    double reward_scale = 1e-7; // rewards enter the learner in units of reward_scale * bit/s
    FeatureScales features;
    bool use_high_advantage = true; // false: single-estimation ablation
    bool sequential = true;         // false: independent ablation (trajectory from the pre-update policy)

    void validate() const;
};

// ---------------------------------------------------------------------------
// Lower tier
// ---------------------------------------------------------------------------

enum class ActMode { sample, greedy };

struct LowPolicyLayout {
    int offsets = 7; // categorical size per angle
    int groups = 3;  // bernoulli heads
    std::vector<HeadSpec> heads() const;
};

struct ActResult {
    LowAction action;
    double log_prob = 0.0;
};

double action_log_prob(const MlpParams& policy, const RealVec& features, const LowAction& a);
ActResult act_low(const MlpParams& policy, const RealVec& features, Rng& rng, ActMode mode);

struct LowExperience {
    RealVec state;
    LowAction action;
    double log_prob = 0.0; // under the behaviour parameters
    double reward = 0.0;   // scaled R_L
    RealVec next_state;
    int cycle = 0;
    int slot = 0;
    double high_advantage = 0.0; // broadcast cycle advantage
    double target = 0.0;         // cycle-truncated discounted return
};

struct HighExperience {
    RealVec state;
    HighAction action;
    double reward = 0.0; // scaled R_H
    RealVec next_state;
    int cycle = 0;
    double target = 0.0; // discounted return over the remaining cycles of the episode
};

double advantage_low(double reward, const RealVec& state, const RealVec& next_state, const MlpParams& value,
                     double gamma);
double advantage_high(double reward, const RealVec& state, const RealVec& next_state, const MlpParams& tail,
                      double gamma);

/// sum_{l=0}^{len-1-p} gamma^l r_{p+l} for every p in the block.
std::vector<double> truncated_returns(std::span<const double> rewards, double gamma);

struct PolicySample {
    RealVec features;
    LowAction action;
    double old_log_prob = 0.0;
    double advantage = 0.0; // A_L + A_H
};

struct PolicyLoss {
    double objective = 0.0; // batch mean of the clipped surrogate, to maximise
    Gradients gradient;     // d objective / d params
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
};

PolicyLoss policy_loss(std::span<const PolicySample> batch, const MlpParams& policy, double clip,
                       bool with_gradient = true);

struct ValueLoss {
    double loss = 0.0; // mean squared error
    Gradients gradient;
};

ValueLoss value_loss(std::span<const RealVec> states, std::span<const double> targets, const MlpParams& value,
                     bool with_gradient = true);

struct LowAgent {
    MlpParams policy;
    MlpParams policy_old;
    MlpParams value;
    AdamState policy_opt;
    AdamState value_opt;
    Replay<LowExperience> replay{9600};
    MlpParams high_value_mirror; // synchronised copy of the satellite's tail value
    LowPolicyLayout layout;

    static LowAgent create(int state_size, const LowPolicyLayout& layout, const AgentConfig& cfg, Rng& rng);
};

struct UpdateStats {
    double policy_objective = 0.0;
    double value_loss = 0.0;
    double approx_kl = 0.0;
    int epochs_run = 0;
};

/// Clipped-surrogate update over `batch` (typically the most recent cycle)
/// followed by value regression; stops early once the KL estimate exceeds kl_stop.
UpdateStats update_low(LowAgent& agent, std::span<const LowExperience> batch, const AgentConfig& cfg, Rng& rng);

struct DecisionTrajectory {
    std::vector<LowAction> actions;
    std::vector<RealVec> predicted_states;
};

/// Greedy actions over `horizon` slots against a persistence prediction of the state.
DecisionTrajectory gen_trajectory(const MlpParams& policy, const RealVec& state, int horizon);

// ---------------------------------------------------------------------------
// Higher tier
// ---------------------------------------------------------------------------

/// Lookahead model the satellite queries during rollout.
class CycleModel {
public:
    virtual ~CycleModel() = default;
    virtual int candidate_count() const = 0;
    virtual double reward(int depth, int candidate, const HighState& s) = 0;
    virtual HighState next_state(int depth, int candidate, const HighState& s) = 0;
    /// True when reward and next_state ignore the incoming state; lets the
    /// lookahead decompose stage by stage instead of enumerating the tree.
    virtual bool open_loop() const { return false; }
};

struct RolloutResult {
    int candidate = 0;
    double value = 0.0;
    std::vector<double> candidate_values;
};

/// argmax over first-cycle candidates of
///   sum_{p<depth} gamma^p R(p) + gamma^depth V_tail(s_{k+depth}),
/// with the later cycles' actions chosen optimally. Ties go to the lowest index.
RolloutResult rollout_high(const MlpParams& tail, const FeatureScales& features, double gamma, int depth,
                           const HighState& s, CycleModel& model);

/// Candidate table: tx offset pair x non-empty reserved group subset.
int high_candidate_count(int offsets, int groups);
HighAction high_action_from_index(int index, int offsets, int groups);
int high_action_index(const HighAction& a, int offsets, int groups);

struct HighAgent {
    MlpParams tail;
    AdamState tail_opt;
    Replay<HighExperience> replay{1200};

    static HighAgent create(int state_size, const AgentConfig& cfg, Rng& rng);
};

double update_tail_value(HighAgent& agent, std::span<const HighExperience> batch, const AgentConfig& cfg);

/// Persistence-based cycle simulator: the last observed multipath profile
/// with deterministic phase evolution, the UE's decision trajectory for the
/// receive side, and the demand distribution for the satisfaction indicator.
class SimulatedCycleModel final : public CycleModel {
public:
    struct Inputs {
        const ChannelRealization* channel = nullptr;
        ArrayGeometry array;
        LinkBudget link;
        RbPool pool;
        OffsetGrid grid;
        BeamConfig base;
        double path_gain = 0.0;
        int first_slot = 0; // global slot index of the first simulated cycle
        int slots_per_cycle = 1;
        DemandProcess demand;
        std::vector<LowAction> trajectory;     // depth * T actions
        std::vector<EcefPosition> positions;   // satellite position at the start of cycles k+1..k+depth
        double reward_scale = 1.0;
    };

    explicit SimulatedCycleModel(Inputs in);

    int candidate_count() const override;
    double reward(int depth, int candidate, const HighState& s) override;
    HighState next_state(int depth, int candidate, const HighState& s) override;
    bool open_loop() const override { return true; }

    /// Beam-gain evaluations performed so far.
    std::int64_t evaluations() const { return evaluations_; }

private:
    struct CycleRates {
        std::vector<std::vector<double>> rb_rate; // [slot][rb]
        std::vector<double> mean_snr;             // [slot]
    };
    const CycleRates& rates(int depth, int tx_index);

    Inputs in_;
    std::vector<std::vector<std::optional<CycleRates>>> cache_;
    std::int64_t evaluations_ = 0;
};

SimulatedCycleModel::Inputs cycle_model_inputs(const Environment& env, const DecisionTrajectory& trajectory,
                                               int depth, double reward_scale);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct StageLog {
    int episode = 0;
    int cycle = 0;
    double mean_low_reward = 0.0; // unscaled R_L averaged over the cycle
    double high_reward = 0.0;     // unscaled R_H
    double policy_objective = 0.0;
    double value_loss = 0.0;
    double tail_loss = 0.0;
    double approx_kl = 0.0;
    double param_change = 0.0;
};

struct EpisodeResult {
    std::vector<SlotRecord> trace;
    std::vector<double> high_rewards; // unscaled R_H per cycle
    double low_return = 0.0;          // sum of R_L
    double high_return = 0.0;         // sum of R_H
    std::int64_t evaluations = 0;     // rollout beam-gain evaluations
    int decisions = 0;                // slots
};

struct TrainingLog {
    std::vector<StageLog> stages;
    std::vector<double> episode_low_return;
    std::vector<double> episode_high_return;
    bool converged = false;
};

class CollaborativeTrainer {
public:
    CollaborativeTrainer(EnvConfig env_cfg, AgentConfig agent_cfg, std::uint64_t seed);

    /// Runs the two-phase update loop for up to `episodes` episodes; stops
    /// early once a stage changes no parameter by more than `epsilon`.
    TrainingLog train(int episodes, double epsilon = 0.0);

    /// Plays one episode. With learn = false, the agents are only queried.
    EpisodeResult run_episode(std::uint64_t episode_seed, bool learn, ActMode mode, TrainingLog* log = nullptr);

    Environment& env() { return env_; }
    const LowAgent& low() const { return low_; }
    const HighAgent& high() const { return high_; }
    LowAgent& low() { return low_; }
    HighAgent& high() { return high_; }
    const AgentConfig& agent_config() const { return agent_cfg_; }
    int episodes_trained() const { return episodes_trained_; }

    void save_checkpoint(const std::filesystem::path& path) const;
    void load_checkpoint(const std::filesystem::path& path);

private:
    std::uint64_t training_episode_seed(int index) const;
    HighAction decide_high(const DecisionTrajectory& trajectory, const HighState& s, std::int64_t& evaluations);

    EnvConfig env_cfg_;
    AgentConfig agent_cfg_;
    std::uint64_t seed_;
    Environment env_;
    Rng rng_;
    LowAgent low_;
    HighAgent high_;
    int episodes_trained_ = 0;
};

} // namespace ntn
