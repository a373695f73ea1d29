#pragma once

// Separated-optimisation comparison schemes (brute-force sweep or periodic
// geometric pointing for beams, greedy or UCB1 bandit for RB groups) and a
// common runner that also drives the learned scheme and its ablations.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntn/collab.hpp"

namespace ntn {

/// Interior angle grid step, 2*step, ... strictly inside (0, pi).
std::vector<double> sweep_grid(double step);

struct BeamSearchResult {
    BeamConfig beams;
    double gain = 0.0;
    std::int64_t evaluations = 0;
};

/// Joint transmit/receive sweep over the grid, one H_m per RB of the snapshot.
/// Maximises sum_m |w_r^H H_m w_t|^2, or with snr_per_gain > 0 the rate proxy
/// sum_m log2(1 + snr_per_gain |w_r^H H_m w_t|^2); `gain` holds the maximised value.
/// Candidates are ordered (theta_t, phi_t, theta_r, phi_r) lexicographically; ties keep the first.
BeamSearchResult bfs_beam(std::span<const ComplexMat> hs, const ArrayGeometry& g, double step,
                          double snr_per_gain = 0.0);
BeamSearchResult bfs_beam(const ComplexMat& h, const ArrayGeometry& g, double step);

/// Receive-only sweep with the transmit beam held fixed.
BeamSearchResult bfs_rx(std::span<const ComplexMat> hs, const ArrayGeometry& g, const AnglePair& tx, double step,
                        double snr_per_gain = 0.0);
BeamSearchResult bfs_rx(const ComplexMat& h, const ArrayGeometry& g, const AnglePair& tx, double step);

/// Nearest codebook angle on the uniform grid of the given step, kept inside (0, pi).
double snap_angle(double angle, double step);

/// Geometric pointing at the line-of-sight boresight, snapped to the codebook.
BeamConfig pbu_beam(const GeometrySample& geo, double step);

/// Shortest prefix of the groups sorted by rate (descending, stable) whose sum
/// reaches the demand; all groups when none does; the empty set for demand 0.
std::uint32_t greedy_alloc(std::span<const double> group_rates, double demand);

struct MabState {
    std::vector<std::int64_t> counts;
    std::vector<double> means;
    double exploration = std::numbers::sqrt2;

    static MabState create(int groups, double exploration = std::numbers::sqrt2);
    std::int64_t total() const;
    /// UCB1 score; the bonus is scaled by the largest empirical mean so the
    /// index is invariant to the rate unit.
    double score(int group) const;
};

/// Groups ranked by score (unpulled first) and added until the estimated rate sum reaches the demand.
std::uint32_t mab_select(const MabState& s, double demand);
void mab_update(MabState& s, std::uint32_t selected, std::span<const double> realized_group_rates);

enum class BeamStrategy { bfs, pbu, learned };
enum class AllocStrategy { greedy, mab, learned };
enum class Ablation { none, independent, single_estimation };

struct SchemeId {
    BeamStrategy beam = BeamStrategy::learned;
    AllocStrategy alloc = AllocStrategy::learned;
    Ablation ablation = Ablation::none;

    bool valid() const;
    std::string name() const;
    static SchemeId parse(const std::string& name);
    bool operator==(const SchemeId&) const = default;

    static SchemeId bfs_greedy() { return {BeamStrategy::bfs, AllocStrategy::greedy, Ablation::none}; }
    static SchemeId pbu_greedy() { return {BeamStrategy::pbu, AllocStrategy::greedy, Ablation::none}; }
    static SchemeId bfs_mab() { return {BeamStrategy::bfs, AllocStrategy::mab, Ablation::none}; }
    static SchemeId pbu_mab() { return {BeamStrategy::pbu, AllocStrategy::mab, Ablation::none}; }
    static SchemeId proposed() { return {}; }
    static SchemeId independent() { return {BeamStrategy::learned, AllocStrategy::learned, Ablation::independent}; }
    static SchemeId single_estimation()
    {
        return {BeamStrategy::learned, AllocStrategy::learned, Ablation::single_estimation};
    }
};

struct BaselineConfig {
    double bfs_step = 10.0 * std::numbers::pi / 180.0;
    double pbu_step = 10.0 * std::numbers::pi / 180.0; // the codebook BFS sweeps
    double mab_exploration = std::numbers::sqrt2;

    void validate() const;
};

struct SchemeMetrics {
    std::string scheme;
    double satisfactory_error = 0.0; // mean |Omega| per slot
    double rb_groups = 0.0;          // mean groups used per slot
    double throughput = 0.0;         // mean min(served, demand) per slot
    double decision_proxy = 0.0;     // beam-gain/SNR evaluations per slot decision
    double mean_reward = 0.0;        // mean smoothed R_L per slot
    std::int64_t evaluations = 0;
    std::int64_t decisions = 0;
    std::vector<double> episode_error;
    std::vector<double> episode_groups;
    std::vector<double> episode_throughput;
    std::vector<double> episode_reward;
    std::vector<double> slot_reward;     // concatenated over evaluation episodes
    std::vector<double> slot_throughput; // concatenated over evaluation episodes
    TrainingLog training;                // learned schemes only
};

struct SchemeRunOptions {
    int episodes = 1;       // evaluation episodes
    int train_episodes = 0; // learned schemes only
    double epsilon = 0.0;   // convergence threshold for training
};

AgentConfig apply_ablation(AgentConfig cfg, Ablation a);

/// Seed of evaluation episode `index` for a run seed; shared by all schemes so runs are paired.
std::uint64_t evaluation_episode_seed(std::uint64_t seed, int index);

SchemeMetrics run_scheme(const SchemeId& id, const EnvConfig& env_cfg, const AgentConfig& agent_cfg,
                         const BaselineConfig& base_cfg, std::uint64_t seed, const SchemeRunOptions& opts);

/// Accumulate a finished episode trace into `m`.
void accumulate_trace(SchemeMetrics& m, std::span<const SlotRecord> trace, std::int64_t evaluations);
void finalize_metrics(SchemeMetrics& m);

} // namespace ntn
