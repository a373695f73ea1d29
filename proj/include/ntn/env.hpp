#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "ntn/link.hpp"

namespace ntn {

/// Slot bookkeeping shared by both tiers. Cycle index k = n / T, slot-in-cycle p = n % T.
struct TimeScales {
    int slots_per_cycle = 100; // T
    int total_slots = 1000;    // N, a multiple of T
    double slot_len = 1e-3;

    int cycles() const { return total_slots / slots_per_cycle; }
    /// Index of the cycle containing slot N-1, i.e. floor((N-1)/T).
    int last_cycle_index() const { return (total_slots - 1) / slots_per_cycle; }
    int cycle_of(int slot) const { return slot / slots_per_cycle; }
    int phase_of(int slot) const { return slot % slots_per_cycle; }
    void validate() const;
};

/// Per-slot rate demand: unit * Poisson(lambda). The unit is expressed in the
/// same bit/s scale as the per-RB Shannon rates it is compared against.
struct DemandProcess {
    double lambda = 2.0;
    double unit = 10e6;

    double sample(Rng& rng) const;
    double mean() const { return lambda * unit; }
    void validate() const;
};

struct HighState {
    EcefPosition position;
    std::vector<double> mean_snr; // T entries, previous cycle

    RealVec to_vector() const;
};

struct HighAction {
    BeamOffsets tx;
    std::uint32_t groups = 1; // reserved RB groups, non-empty
    bool operator==(const HighAction&) const = default;
};

struct LowState {
    std::vector<double> rb_snr;      // M entries, previous slot
    std::vector<double> rx_strength; // N_r entries, (1/M) sum_m |H w_t|
    std::optional<double> demand;    // only when the environment exposes the current demand

    RealVec to_vector() const;
    std::size_t size() const { return rb_snr.size() + rx_strength.size() + (demand ? 1 : 0); }
};

struct LowAction {
    BeamOffsets rx;
    std::uint32_t groups = 0; // requested RB groups, masked by the reserved set
    bool operator==(const LowAction&) const = default;
};

/// FIFO of instantaneous rewards; the smoothed reward is the mean of its contents.
class RewardBuffer {
public:
    explicit RewardBuffer(std::size_t capacity = 20);
    double push(double instantaneous);
    double mean() const;
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    void clear() { items_.clear(); }

private:
    std::size_t capacity_;
    std::deque<double> items_;
};

struct Satisfaction {
    double omega = 0.0; // <= 0
    bool satisfied = true;
};

double served_rate(std::span<const std::uint8_t> bits, std::span<const double> rates);
/// Mean rate of the selected RBs, 0 when nothing is selected.
double mean_selected_rate(std::span<const std::uint8_t> bits, std::span<const double> rates);
Satisfaction satisfaction(std::span<const std::uint8_t> bits, std::span<const double> rates, double demand);

struct LowReward {
    double instantaneous = 0.0;
    double smoothed = 0.0;
};

LowReward low_reward(std::span<const std::uint8_t> bits, std::span<const double> rates, double demand, double eta,
                     RewardBuffer& buffer);

struct SlotRecord {
    int slot = 0;
    int cycle = 0;
    double demand = 0.0;
    std::uint32_t groups = 0; // effective (after masking)
    int groups_used = 0;
    std::vector<std::uint8_t> bits;
    std::vector<double> rb_rate;
    double served = 0.0;
    double mean_rate = 0.0;
    double omega = 0.0;
    bool satisfied = true;
    double reward_instant = 0.0;
    double reward = 0.0; // smoothed R_L
    double mean_snr = 0.0;
    AnglePair tx;
    AnglePair rx;
};

/// R_H = (1/T) sum_p 1[satisfied_p] * mean selected rate_p.
double high_reward(std::span<const SlotRecord> cycle_log, int slots_per_cycle);

struct EnvConfig {
    OrbitConfig orbit;
    std::optional<double> overhead_time = 600.0; // when set, raan/phase are solved so the pass peaks here
    EcefPosition ue{5045.27e3, 3881.81e3, -393.28e3};
    double min_elevation = std::numbers::pi / 6;
    ArrayGeometry array;
    ChannelConfig channel;
    LinkBudget link;
    int num_rbs = 60;
    int num_groups = 3;
    TimeScales time;
    DemandProcess demand;
    double eta = 1.0;
    int fifo_capacity = 20;
    OffsetGrid offsets = OffsetGrid::standard();
    bool expose_demand = false; // append the current demand to the low-tier state

    void validate() const;
    OrbitConfig resolved_orbit() const;
};

struct HighStepResult {
    HighState state;
    double reward = 0.0; // R_H of the cycle that just finished
    bool has_reward = false;
};

struct LowStepResult {
    LowState state;
    double reward = 0.0; // smoothed R_L
    std::vector<double> rb_rate;
    double omega = 0.0;
    bool cycle_complete = false;
    bool done = false;
};

struct CycleOutcome {
    double reward = 0.0; // R_H of the completed cycle
    HighState next_state;
};

/// Two-time-scale downlink environment: one step_high per T step_low calls.
class Environment {
public:
    explicit Environment(EnvConfig cfg);

    void reset(std::uint64_t episode_seed);

    const EnvConfig& config() const { return cfg_; }
    const RbPool& pool() const { return pool_; }
    const OrbitConfig& orbit() const { return orbit_; }
    const ServiceWindow& window() const { return window_; }
    int slot() const { return slot_; }
    int cycle() const { return cfg_.time.cycle_of(slot_); }
    bool at_cycle_boundary() const { return cfg_.time.phase_of(slot_) == 0 && !cycle_started_; }
    bool done() const { return slot_ >= cfg_.time.total_slots; }

    HighState high_state() const;
    const LowState& low_state() const { return low_state_; }
    double current_demand() const { return demand_; }

    /// Orbit time at which cycle k starts.
    double cycle_time(int k) const;
    EcefPosition satellite_position(int k) const;

    // Geometry and channel of the current (or, at a boundary, upcoming) cycle.
    const GeometrySample& cycle_geometry() const { return geometry_; }
    double cycle_path_gain() const { return path_gain_; }
    const ChannelRealization& cycle_channel() const { return channel_; }
    /// Channel of the cycle before the current one; the current one at cycle 0.
    const ChannelRealization& last_observed_channel() const;
    BeamConfig base_beams() const { return {geometry_.boresight_aod, geometry_.boresight_aoa}; }
    const AnglePair& tx_beam() const { return tx_beam_; }
    std::uint32_t reserved_groups() const { return reserved_; }

    HighStepResult step_high(const HighAction& a);
    /// Absolute-angle variant used by the baseline schemes.
    HighStepResult begin_cycle(const AnglePair& tx, std::uint32_t reserved_groups);
    /// Re-points the transmit beam inside an open cycle; only the per-slot sweep baseline uses it.
    void retarget_tx(const AnglePair& tx);
    /// R_H and next high state once the T-th slot of a cycle has executed.
    CycleOutcome cycle_outcome() const;

    LowStepResult step_low(const LowAction& a);
    LowStepResult step_slot(const AnglePair& rx, std::uint32_t groups);

    const std::vector<SlotRecord>& trace() const { return trace_; }
    std::span<const SlotRecord> cycle_log(int k) const;

private:
    void load_cycle(int k);
    HighState state_for_cycle(int k, const std::vector<double>& trace) const;
    void draw_demand();

    EnvConfig cfg_;
    RbPool pool_;
    OrbitConfig orbit_;
    ServiceWindow window_;

    Rng channel_rng_;
    Rng demand_rng_;
    int slot_ = 0;
    bool cycle_started_ = false;
    int loaded_cycle_ = -1;
    GeometrySample geometry_;
    double path_gain_ = 0.0;
    ChannelRealization channel_;
    std::optional<ChannelRealization> previous_channel_;
    AnglePair tx_beam_;
    std::uint32_t reserved_ = 0;
    double demand_ = 0.0;
    RewardBuffer buffer_;
    LowState low_state_;
    std::vector<double> prev_trace_;
    std::vector<double> cur_trace_;
    std::vector<SlotRecord> trace_;
};

} // namespace ntn
