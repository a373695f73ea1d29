#pragma once

#include <cstdint>
#include <vector>

#include "ntn/channel.hpp"

namespace ntn {

struct LinkBudget {
    double tx_power = 1000.0; // W (30 dBW)
    double tx_gain_dbi = 30.0;
    double rx_gain_dbi = 30.0;
    double boltzmann = 1.380649e-23;
    double noise_temp = 290.0;
    double rb_bandwidth = 180e3;
    double carrier = 4e9;

    /// Transmit power with both antenna gains folded in, linear watts.
    double effective_tx_power() const;
    double wavelength() const { return kSpeedOfLight / carrier; }
    void validate() const;
};

double noise_power(const LinkBudget& lb);

/// Partition of the RB pool into allocation groups.
struct RbPool {
    int num_rbs = 0;
    std::vector<std::vector<int>> groups;

    int num_groups() const { return static_cast<int>(groups.size()); }
    std::uint32_t all_groups_mask() const { return (1u << num_groups()) - 1u; }
    void validate() const;

    /// Contiguous, near-equal groups.
    static RbPool contiguous(int num_rbs, int num_groups);
};

struct BeamConfig {
    AnglePair tx;
    AnglePair rx;
};

/// Expanded per-RB selection bits b_m plus the reserved group set.
struct RbAllocation {
    std::vector<std::uint8_t> bits;
    std::uint32_t candidate_groups = 0;

    int selected_count() const;
};

/// Expand group-level choices into RB bits; groups outside `candidate_groups` are masked out.
RbAllocation expand_groups(const RbPool& pool, std::uint32_t chosen_groups, std::uint32_t candidate_groups);
int count_groups(std::uint32_t mask);

double beam_gain(const ComplexMat& h, const ComplexVec& w_r, const ComplexVec& w_t);

double snr(const ComplexMat& h, const BeamConfig& beams, const ArrayGeometry& g, const LinkBudget& lb,
           double path_gain);
double snr_with_vectors(const ComplexMat& h, const ComplexVec& w_r, const ComplexVec& w_t, const LinkBudget& lb,
                        double path_gain);

double rate(double snr, double bandwidth);

/// Discrete angle offsets added to a base beam direction.
struct OffsetGrid {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
    int zero_index() const;
    static OffsetGrid standard(); // {-10, -5, -2, 0, 2, 5, 10} degrees
};

struct BeamOffsets {
    int theta = 0;
    int phi = 0;
    bool operator==(const BeamOffsets&) const = default;
};

inline constexpr double kAngleMargin = 1e-3;

AnglePair apply_offsets(const AnglePair& base, const BeamOffsets& offsets, const OffsetGrid& grid);
BeamConfig apply_offsets(const BeamConfig& base, const BeamOffsets& tx, const BeamOffsets& rx,
                         const OffsetGrid& grid);

struct GroupRates {
    std::vector<double> rb_snr;
    std::vector<double> rb_rate;
    std::vector<double> group_rate; // sum over member RBs
};

GroupRates group_rates(const std::vector<ComplexMat>& channels, const BeamConfig& beams, const ArrayGeometry& g,
                       const RbPool& pool, const LinkBudget& lb, double path_gain);

} // namespace ntn
