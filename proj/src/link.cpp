#include "ntn/link.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace ntn {

using std::numbers::pi;

double LinkBudget::effective_tx_power() const
{
    return tx_power * std::pow(10.0, tx_gain_dbi / 10.0) * std::pow(10.0, rx_gain_dbi / 10.0);
}

void LinkBudget::validate() const
{
    if (!(tx_power > 0) || !(boltzmann > 0) || !(noise_temp >= 0) || !(rb_bandwidth > 0) || !(carrier > 0))
        throw InvalidArgument("link budget: powers, bandwidth and carrier must be positive");
}

double noise_power(const LinkBudget& lb) { return lb.boltzmann * lb.noise_temp * lb.rb_bandwidth; }

void RbPool::validate() const
{
    if (num_rbs < 1 || groups.empty() || groups.size() > 16)
        throw InvalidArgument("rb pool: need >= 1 RB and 1..16 groups");
    std::vector<int> seen(num_rbs, 0);
    for (const auto& grp : groups)
        for (int m : grp) {
            if (m < 0 || m >= num_rbs)
                throw InvalidArgument("rb pool: RB index out of range");
            seen[m]++;
        }
    if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
        throw InvalidArgument("rb pool: groups must partition the RB pool");
}

RbPool RbPool::contiguous(int num_rbs, int num_groups)
{
    if (num_rbs < 1 || num_groups < 1 || num_groups > num_rbs)
        throw InvalidArgument("rb pool: need 1 <= groups <= RBs");
    RbPool pool;
    pool.num_rbs = num_rbs;
    pool.groups.resize(num_groups);
    for (int m = 0; m < num_rbs; ++m)
        pool.groups[static_cast<std::size_t>(m) * num_groups / num_rbs].push_back(m);
    return pool;
}

int RbAllocation::selected_count() const
{
    return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

int count_groups(std::uint32_t mask) { return std::popcount(mask); }

RbAllocation expand_groups(const RbPool& pool, std::uint32_t chosen_groups, std::uint32_t candidate_groups)
{
    RbAllocation a;
    a.bits.assign(pool.num_rbs, 0);
    a.candidate_groups = candidate_groups;
    const std::uint32_t effective = chosen_groups & candidate_groups;
    for (int g = 0; g < pool.num_groups(); ++g)
        if (effective & (1u << g))
            for (int m : pool.groups[g])
                a.bits[m] = 1;
    return a;
}

double beam_gain(const ComplexMat& h, const ComplexVec& w_r, const ComplexVec& w_t)
{
    if (h.rows() != w_r.size() || h.cols() != w_t.size())
        throw InvalidArgument("beam_gain: beam vectors do not match the channel dimensions");
    return std::norm(w_r.dot(h * w_t)); // dot() conjugates its left operand
}

double snr_with_vectors(const ComplexMat& h, const ComplexVec& w_r, const ComplexVec& w_t, const LinkBudget& lb,
                        double path_gain)
{
    const double noise = noise_power(lb);
    const double signal = lb.effective_tx_power() * path_gain * beam_gain(h, w_r, w_t);
    return signal / (static_cast<double>(h.rows()) * noise);
}

double snr(const ComplexMat& h, const BeamConfig& beams, const ArrayGeometry& g, const LinkBudget& lb,
           double path_gain)
{
    if (h.rows() != g.nr() || h.cols() != g.nt())
        throw InvalidArgument("snr: channel is not N_r x N_t");
    return snr_with_vectors(h, steering_rx(g, beams.rx), steering_tx(g, beams.tx), lb, path_gain);
}

double rate(double snr, double bandwidth) { return bandwidth * std::log2(1.0 + snr); }

int OffsetGrid::zero_index() const
{
    for (int i = 0; i < size(); ++i)
        if (values[i] == 0.0)
            return i;
    return 0;
}

OffsetGrid OffsetGrid::standard()
{
    const double deg = pi / 180.0;
    return {{-10 * deg, -5 * deg, -2 * deg, 0.0, 2 * deg, 5 * deg, 10 * deg}};
}

AnglePair apply_offsets(const AnglePair& base, const BeamOffsets& offsets, const OffsetGrid& grid)
{
    if (offsets.theta < 0 || offsets.theta >= grid.size() || offsets.phi < 0 || offsets.phi >= grid.size())
        throw InvalidArgument("apply_offsets: offset index out of range");
    auto clamp = [](double a) { return std::clamp(a, kAngleMargin, pi - kAngleMargin); };
    return {clamp(base.theta + grid.values[offsets.theta]), clamp(base.phi + grid.values[offsets.phi])};
}

BeamConfig apply_offsets(const BeamConfig& base, const BeamOffsets& tx, const BeamOffsets& rx,
                         const OffsetGrid& grid)
{
    return {apply_offsets(base.tx, tx, grid), apply_offsets(base.rx, rx, grid)};
}

GroupRates group_rates(const std::vector<ComplexMat>& channels, const BeamConfig& beams, const ArrayGeometry& g,
                       const RbPool& pool, const LinkBudget& lb, double path_gain)
{
    if (static_cast<int>(channels.size()) != pool.num_rbs)
        throw InvalidArgument("group_rates: need one channel matrix per RB");
    const ComplexVec w_r = steering_rx(g, beams.rx);
    const ComplexVec w_t = steering_tx(g, beams.tx);
    GroupRates out;
    out.rb_snr.resize(pool.num_rbs);
    out.rb_rate.resize(pool.num_rbs);
    for (int m = 0; m < pool.num_rbs; ++m) {
        out.rb_snr[m] = snr_with_vectors(channels[m], w_r, w_t, lb, path_gain);
        out.rb_rate[m] = rate(out.rb_snr[m], lb.rb_bandwidth);
    }
    out.group_rate.assign(pool.num_groups(), 0.0);
    for (int grp = 0; grp < pool.num_groups(); ++grp)
        for (int m : pool.groups[grp])
            out.group_rate[grp] += out.rb_rate[m];
    return out;
}

} // namespace ntn
