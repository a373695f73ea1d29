#include "ntn/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace ntn {

void TimeScales::validate() const
{
    if (slots_per_cycle < 1)
        throw InvalidArgument("time: slots_per_cycle must be >= 1");
    if (total_slots < slots_per_cycle || total_slots % slots_per_cycle != 0)
        throw InvalidArgument("time: total_slots must be a positive multiple of slots_per_cycle");
    if (!(slot_len > 0.0))
        throw InvalidArgument("time: slot_len must be positive");
}

double DemandProcess::sample(Rng& rng) const
{
    if (lambda == 0.0)
        return 0.0;
    std::poisson_distribution<int> dist(lambda);
    return unit * static_cast<double>(dist(rng));
}

void DemandProcess::validate() const
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InvalidArgument("demand: lambda must be finite and non-negative");
    if (!(unit > 0.0))
        throw InvalidArgument("demand: unit must be positive");
}

RealVec HighState::to_vector() const
{
    RealVec v(3 + mean_snr.size());
    v(0) = position.x;
    v(1) = position.y;
    v(2) = position.z;
    for (std::size_t i = 0; i < mean_snr.size(); ++i)
        v(3 + i) = mean_snr[i];
    return v;
}

RealVec LowState::to_vector() const
{
    RealVec v(size());
    Eigen::Index k = 0;
    for (double x : rb_snr)
        v(k++) = x;
    for (double x : rx_strength)
        v(k++) = x;
    if (demand)
        v(k++) = *demand;
    return v;
}

// ---------------------------------------------------------------------------

RewardBuffer::RewardBuffer(std::size_t capacity) : capacity_(capacity)
{
    if (capacity_ == 0)
        throw InvalidArgument("RewardBuffer: capacity must be >= 1");
}

double RewardBuffer::push(double x)
{
    items_.push_back(x);
    if (items_.size() > capacity_)
        items_.pop_front();
    return mean();
}

double RewardBuffer::mean() const
{
    if (items_.empty())
        return 0.0;
    return std::accumulate(items_.begin(), items_.end(), 0.0) / static_cast<double>(items_.size());
}

double served_rate(std::span<const std::uint8_t> bits, std::span<const double> rates)
{
    if (bits.size() != rates.size())
        throw InvalidArgument("served_rate: bits and rates differ in length");
    double s = 0.0;
    for (std::size_t m = 0; m < bits.size(); ++m)
        if (bits[m])
            s += rates[m];
    return s;
}

double mean_selected_rate(std::span<const std::uint8_t> bits, std::span<const double> rates)
{
    const auto n = std::count(bits.begin(), bits.end(), std::uint8_t{1});
    return n == 0 ? 0.0 : served_rate(bits, rates) / static_cast<double>(n);
}

Satisfaction satisfaction(std::span<const std::uint8_t> bits, std::span<const double> rates, double demand)
{
    const double s = served_rate(bits, rates);
    return {std::min(s - demand, 0.0), s >= demand};
}

LowReward low_reward(std::span<const std::uint8_t> bits, std::span<const double> rates, double demand, double eta,
                     RewardBuffer& buffer)
{
    if (!(eta >= 0.0))
        throw InvalidArgument("low_reward: eta must be non-negative");
    const double instant = mean_selected_rate(bits, rates) + eta * satisfaction(bits, rates, demand).omega;
    return {instant, buffer.push(instant)};
}

double high_reward(std::span<const SlotRecord> cycle_log, int slots_per_cycle)
{
    if (slots_per_cycle < 1)
        throw InvalidArgument("high_reward: slots_per_cycle must be >= 1");
    double acc = 0.0;
    for (const auto& r : cycle_log)
        if (r.satisfied)
            acc += r.mean_rate;
    return acc / static_cast<double>(slots_per_cycle);
}

// ---------------------------------------------------------------------------

void EnvConfig::validate() const
{
    orbit.validate();
    array.validate();
    channel.validate();
    link.validate();
    time.validate();
    demand.validate();
    RbPool::contiguous(num_rbs, num_groups).validate();
    if (!(eta >= 0.0))
        throw InvalidArgument("env: eta must be non-negative");
    if (fifo_capacity < 1)
        throw InvalidArgument("env: fifo_capacity must be >= 1");
    if (offsets.values.empty())
        throw InvalidArgument("env: offset grid must not be empty");
    if (!(min_elevation > -std::numbers::pi / 2 && min_elevation < std::numbers::pi / 2))
        throw InvalidArgument("env: min_elevation out of range");
}

OrbitConfig EnvConfig::resolved_orbit() const
{
    if (!overhead_time)
        return orbit;
    return orbit_through(ue, orbit.altitude, orbit.inclination, *overhead_time, orbit);
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)), buffer_(1)
{
    cfg_.validate();
    pool_ = RbPool::contiguous(cfg_.num_rbs, cfg_.num_groups);
    orbit_ = cfg_.resolved_orbit();
    const double horizon = cfg_.overhead_time ? 2.0 * *cfg_.overhead_time : orbit_.period();
    auto w = find_service_window(orbit_, cfg_.ue, cfg_.min_elevation, 0.0, std::max(horizon, 1.0), 1.0);
    if (!w || !(w->duration() > 0.0))
        throw InvalidArgument("env: the configured orbit never brings the satellite above the minimum elevation");
    window_ = *w;
    reset(0);
}

double Environment::cycle_time(int k) const
{
    // The pass is compressed onto the episode's cycles; slots inside a cycle are contiguous.
    const int c = cfg_.time.cycles();
    return window_.rise + (static_cast<double>(k) + 0.5) * window_.duration() / static_cast<double>(c);
}

EcefPosition Environment::satellite_position(int k) const { return propagate(orbit_, cycle_time(k)).position; }

void Environment::reset(std::uint64_t episode_seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(episode_seed), static_cast<std::uint32_t>(episode_seed >> 32),
                      0x6e746eu};
    std::array<std::uint64_t, 2> seeds{};
    {
        std::array<std::uint32_t, 4> raw{};
        seq.generate(raw.begin(), raw.end());
        seeds[0] = (static_cast<std::uint64_t>(raw[0]) << 32) | raw[1];
        seeds[1] = (static_cast<std::uint64_t>(raw[2]) << 32) | raw[3];
    }
    channel_rng_.seed(seeds[0]);
    demand_rng_.seed(seeds[1]);

    slot_ = 0;
    cycle_started_ = false;
    loaded_cycle_ = -1;
    previous_channel_.reset();
    buffer_ = RewardBuffer(static_cast<std::size_t>(cfg_.fifo_capacity));
    trace_.clear();
    prev_trace_.assign(cfg_.time.slots_per_cycle, 0.0);
    cur_trace_.clear();
    low_state_ = LowState{std::vector<double>(cfg_.num_rbs, 0.0), std::vector<double>(cfg_.array.nr(), 0.0),
                          std::nullopt};
    load_cycle(0);
    draw_demand();
    if (cfg_.expose_demand)
        low_state_.demand = demand_;
    tx_beam_ = geometry_.boresight_aod;
    reserved_ = pool_.all_groups_mask();
}

void Environment::load_cycle(int k)
{
    if (loaded_cycle_ >= 0)
        previous_channel_ = channel_;
    const OrbitState s = propagate(orbit_, cycle_time(k));
    geometry_ = geometry(s.position, s.velocity, cfg_.ue);
    path_gain_ = pathloss(geometry_.slant_distance, cfg_.link.carrier);
    channel_ = ChannelRealization(sample_paths(channel_rng_, geometry_, cfg_.channel, cfg_.array.wavelength),
                                  cfg_.array);
    loaded_cycle_ = k;
}

void Environment::draw_demand() { demand_ = cfg_.demand.sample(demand_rng_); }

const ChannelRealization& Environment::last_observed_channel() const
{
    return previous_channel_ ? *previous_channel_ : channel_;
}

HighState Environment::state_for_cycle(int k, const std::vector<double>& trace) const
{
    return {satellite_position(k), trace};
}

HighState Environment::high_state() const { return state_for_cycle(cycle(), prev_trace_); }

HighStepResult Environment::step_high(const HighAction& a)
{
    if (a.groups == 0 || (a.groups & ~pool_.all_groups_mask()) != 0)
        throw InvalidArgument("step_high: reserved group set must be a non-empty subset of the pool");
    return begin_cycle(apply_offsets(geometry_.boresight_aod, a.tx, cfg_.offsets), a.groups);
}

HighStepResult Environment::begin_cycle(const AnglePair& tx, std::uint32_t reserved_groups)
{
    if (done() || !at_cycle_boundary())
        throw InvalidState("step_high: only valid at a cycle boundary of an active episode");
    if (reserved_groups == 0 || (reserved_groups & ~pool_.all_groups_mask()) != 0)
        throw InvalidArgument("step_high: reserved group set must be a non-empty subset of the pool");
    HighStepResult out;
    if (slot_ > 0) {
        const CycleOutcome o = cycle_outcome();
        out.reward = o.reward;
        out.has_reward = true;
    }
    tx_beam_ = tx;
    reserved_ = reserved_groups;
    cycle_started_ = true;
    cur_trace_.clear();
    out.state = high_state();
    return out;
}

void Environment::retarget_tx(const AnglePair& tx)
{
    if (done() || !cycle_started_)
        throw InvalidState("retarget_tx: no open cycle");
    tx_beam_ = tx;
}

CycleOutcome Environment::cycle_outcome() const
{
    if (slot_ == 0 || cfg_.time.phase_of(slot_) != 0 || cycle_started_)
        throw InvalidState("cycle_outcome: no completed cycle pending");
    const int k = cycle() - 1;
    return {high_reward(cycle_log(k), cfg_.time.slots_per_cycle), state_for_cycle(k + 1, prev_trace_)};
}

std::span<const SlotRecord> Environment::cycle_log(int k) const
{
    const int T = cfg_.time.slots_per_cycle;
    const int begin = k * T;
    if (k < 0 || begin >= static_cast<int>(trace_.size()))
        return {};
    const int end = std::min<int>(begin + T, static_cast<int>(trace_.size()));
    return std::span<const SlotRecord>(trace_).subspan(begin, end - begin);
}

LowStepResult Environment::step_low(const LowAction& a)
{
    return step_slot(apply_offsets(geometry_.boresight_aoa, a.rx, cfg_.offsets), a.groups);
}

LowStepResult Environment::step_slot(const AnglePair& rx, std::uint32_t groups)
{
    if (done())
        throw InvalidState("step_low: episode finished");
    if (!cycle_started_)
        throw InvalidState("step_low: step_high must open the cycle first");

    const int M = cfg_.num_rbs;
    const auto channels = channel_.slot(slot_, M);
    const BeamConfig beams{tx_beam_, rx};
    const GroupRates gr = group_rates(channels, beams, cfg_.array, pool_, cfg_.link, path_gain_);
    const RbAllocation alloc = expand_groups(pool_, groups, reserved_);
    const Satisfaction sat = satisfaction(alloc.bits, gr.rb_rate, demand_);
    const LowReward rew = low_reward(alloc.bits, gr.rb_rate, demand_, cfg_.eta, buffer_);

    SlotRecord rec;
    rec.slot = slot_;
    rec.cycle = cycle();
    rec.demand = demand_;
    rec.groups = groups & reserved_;
    rec.groups_used = count_groups(rec.groups);
    rec.bits = alloc.bits;
    rec.rb_rate = gr.rb_rate;
    rec.served = served_rate(alloc.bits, gr.rb_rate);
    rec.mean_rate = mean_selected_rate(alloc.bits, gr.rb_rate);
    rec.omega = sat.omega;
    rec.satisfied = sat.satisfied;
    rec.reward_instant = rew.instantaneous;
    rec.reward = rew.smoothed;
    rec.mean_snr = std::accumulate(gr.rb_snr.begin(), gr.rb_snr.end(), 0.0) / M;
    rec.tx = tx_beam_;
    rec.rx = rx;
    trace_.push_back(rec);
    cur_trace_.push_back(rec.mean_snr);

    // next low-tier state from this slot's observations
    const ComplexVec w_t = steering_tx(cfg_.array, tx_beam_);
    RealVec strength = RealVec::Zero(cfg_.array.nr());
    for (const auto& h : channels)
        strength += (h * w_t).cwiseAbs();
    strength /= static_cast<double>(M);
    low_state_.rb_snr = gr.rb_snr;
    low_state_.rx_strength.assign(strength.data(), strength.data() + strength.size());

    LowStepResult out;
    out.reward = rew.smoothed;
    out.rb_rate = gr.rb_rate;
    out.omega = sat.omega;

    ++slot_;
    if (cfg_.time.phase_of(slot_) == 0) {
        out.cycle_complete = true;
        cycle_started_ = false;
        prev_trace_ = cur_trace_;
        if (!done())
            load_cycle(cycle());
    }
    out.done = done();
    if (!out.done)
        draw_demand();
    low_state_.demand = cfg_.expose_demand ? std::optional<double>(demand_) : std::nullopt;
    out.state = low_state_;
    return out;
}

} // namespace ntn
