#include "ntn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ntn {

using std::numbers::pi;

std::vector<double> sweep_grid(double step)
{
    if (!(step > 0.0) || !(step < pi))
        throw InvalidArgument("sweep_grid: step must lie in (0, pi)");
    std::vector<double> out;
    for (int k = 1; k * step < pi - 1e-12; ++k)
        out.push_back(k * step);
    return out;
}

namespace {

std::vector<ComplexVec> steering_table(int nx, int ny, double spacing, double wavelength,
                                       const std::vector<double>& grid)
{
    std::vector<ComplexVec> out;
    out.reserve(grid.size() * grid.size());
    for (double th : grid)
        for (double ph : grid)
            out.push_back(upa_steering(nx, ny, spacing, wavelength, {th, ph}));
    return out;
}

AnglePair grid_pair(const std::vector<double>& grid, std::size_t index)
{
    return {grid[index / grid.size()], grid[index % grid.size()]};
}

// Sum over RBs of the per-RB objective. The rate proxy is accumulated as a
// log of chunked products to avoid one log per term.
class SweepObjective {
public:
    explicit SweepObjective(double snr_per_gain) : k_(snr_per_gain) {}

    template <class Gains>
    double operator()(const Gains& gain_of, std::size_t count) const
    {
        double s = 0.0;
        if (k_ <= 0.0) {
            for (std::size_t m = 0; m < count; ++m)
                s += gain_of(m);
            return s;
        }
        double prod = 1.0;
        for (std::size_t m = 0; m < count; ++m) {
            prod *= 1.0 + k_ * gain_of(m);
            if (prod > 1e200) {
                s += std::log2(prod);
                prod = 1.0;
            }
        }
        return s + std::log2(prod);
    }

private:
    double k_;
};

void check_snapshot(std::span<const ComplexMat> hs, const ArrayGeometry& g, const char* who)
{
    if (hs.empty())
        throw InvalidArgument(std::string(who) + ": empty channel snapshot");
    for (const auto& h : hs)
        if (h.rows() != g.nr() || h.cols() != g.nt())
            throw InvalidArgument(std::string(who) + ": channel is not N_r x N_t");
}


// Columns H_m w_t of one transmit candidate, one per RB.
ComplexMat received(std::span<const ComplexMat> hs, const ComplexVec& wt)
{
    ComplexMat v(hs.front().rows(), static_cast<Eigen::Index>(hs.size()));
    for (std::size_t m = 0; m < hs.size(); ++m)
        v.col(static_cast<Eigen::Index>(m)) = hs[m] * wt;
    return v;
}

// Best receive candidate for fixed columns v; rows of rx_h are w_r^H.
std::pair<std::size_t, double> best_rx(const ComplexMat& rx_h, const ComplexMat& v, const SweepObjective& objective)
{
    const Eigen::MatrixXd gains = (rx_h * v).cwiseAbs2();
    std::pair<std::size_t, double> best{0, -1.0};
    for (Eigen::Index j = 0; j < gains.rows(); ++j) {
        const double score = objective([&](std::size_t m) { return gains(j, static_cast<Eigen::Index>(m)); },
                                       static_cast<std::size_t>(gains.cols()));
        if (score > best.second)
            best = {static_cast<std::size_t>(j), score};
    }
    return best;
}

ComplexMat adjoint_rows(const std::vector<ComplexVec>& vs)
{
    ComplexMat out(static_cast<Eigen::Index>(vs.size()), vs.front().size());
    for (std::size_t j = 0; j < vs.size(); ++j)
        out.row(static_cast<Eigen::Index>(j)) = vs[j].adjoint();
    return out;
}

} // namespace

BeamSearchResult bfs_beam(std::span<const ComplexMat> hs, const ArrayGeometry& g, double step, double snr_per_gain)
{
    check_snapshot(hs, g, "bfs_beam");
    const auto grid = sweep_grid(step);
    const auto tx = steering_table(g.nt_x, g.nt_y, g.d_t, g.wavelength, grid);
    const ComplexMat rx_h = adjoint_rows(steering_table(g.nr_x, g.nr_y, g.d_r, g.wavelength, grid));
    const SweepObjective objective(snr_per_gain);
    BeamSearchResult best;
    best.gain = -1.0;
    std::size_t bt = 0, br = 0;
    for (std::size_t i = 0; i < tx.size(); ++i) {
        const auto [j, score] = best_rx(rx_h, received(hs, tx[i]), objective);
        if (score > best.gain) {
            best.gain = score;
            bt = i;
            br = j;
        }
    }
    best.evaluations = static_cast<std::int64_t>(tx.size() * static_cast<std::size_t>(rx_h.rows()) * hs.size());
    best.beams = {grid_pair(grid, bt), grid_pair(grid, br)};
    return best;
}

BeamSearchResult bfs_beam(const ComplexMat& h, const ArrayGeometry& g, double step)
{
    return bfs_beam(std::span<const ComplexMat>(&h, 1), g, step, 0.0);
}

BeamSearchResult bfs_rx(std::span<const ComplexMat> hs, const ArrayGeometry& g, const AnglePair& tx, double step,
                        double snr_per_gain)
{
    check_snapshot(hs, g, "bfs_rx");
    const auto grid = sweep_grid(step);
    const ComplexMat rx_h = adjoint_rows(steering_table(g.nr_x, g.nr_y, g.d_r, g.wavelength, grid));
    const auto [j, score] = best_rx(rx_h, received(hs, steering_tx(g, tx)), SweepObjective(snr_per_gain));
    BeamSearchResult best;
    best.gain = score;
    best.evaluations = static_cast<std::int64_t>(static_cast<std::size_t>(rx_h.rows()) * hs.size());
    best.beams = {tx, grid_pair(grid, j)};
    return best;
}

BeamSearchResult bfs_rx(const ComplexMat& h, const ArrayGeometry& g, const AnglePair& tx, double step)
{
    return bfs_rx(std::span<const ComplexMat>(&h, 1), g, tx, step, 0.0);
}

double snap_angle(double angle, double step)
{
    const auto grid = sweep_grid(step);
    const long k = std::lround(angle / step);
    return std::clamp<long>(k, 1, static_cast<long>(grid.size())) * step;
}

BeamConfig pbu_beam(const GeometrySample& geo, double step)
{
    auto snap = [&](const AnglePair& a) { return AnglePair{snap_angle(a.theta, step), snap_angle(a.phi, step)}; };
    return {snap(geo.boresight_aod), snap(geo.boresight_aoa)};
}

std::uint32_t greedy_alloc(std::span<const double> group_rates, double demand)
{
    if (group_rates.size() > 32)
        throw InvalidArgument("greedy_alloc: at most 32 groups");
    for (double r : group_rates)
        if (!(r >= 0.0))
            throw InvalidArgument("greedy_alloc: rates must be non-negative");
    if (demand <= 0.0)
        return 0;
    std::vector<int> order(group_rates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return group_rates[a] > group_rates[b]; });
    std::uint32_t mask = 0;
    double sum = 0.0;
    for (int g : order) {
        mask |= 1u << g;
        sum += group_rates[g];
        if (sum >= demand)
            break;
    }
    return mask;
}

// ---------------------------------------------------------------------------

MabState MabState::create(int groups, double exploration)
{
    if (groups < 1 || groups > 32)
        throw InvalidArgument("mab: need 1..32 groups");
    if (!(exploration >= 0.0))
        throw InvalidArgument("mab: exploration constant must be non-negative");
    MabState s;
    s.counts.assign(groups, 0);
    s.means.assign(groups, 0.0);
    s.exploration = exploration;
    return s;
}

std::int64_t MabState::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

double MabState::score(int g) const
{
    if (counts[g] == 0)
        return std::numeric_limits<double>::infinity();
    const double scale = std::max(*std::max_element(means.begin(), means.end()), 0.0);
    const double n = static_cast<double>(total());
    return means[g] + exploration * scale * std::sqrt(std::log(n) / static_cast<double>(counts[g]));
}

std::uint32_t mab_select(const MabState& s, double demand)
{
    if (demand <= 0.0)
        return 0;
    const int G = static_cast<int>(s.counts.size());
    std::vector<int> order(G);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(G);
    for (int g = 0; g < G; ++g)
        score[g] = s.score(g);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
    std::uint32_t mask = 0;
    double estimate = 0.0;
    for (int g : order) {
        mask |= 1u << g;
        // an unpulled arm is optimistic: assume it covers the remaining demand
        estimate += s.counts[g] == 0 ? std::numeric_limits<double>::infinity() : s.means[g];
        if (estimate >= demand)
            break;
    }
    return mask;
}

void mab_update(MabState& s, std::uint32_t selected, std::span<const double> realized)
{
    if (realized.size() != s.counts.size())
        throw InvalidArgument("mab_update: one realized rate per group required");
    for (std::size_t g = 0; g < s.counts.size(); ++g) {
        if (!(selected & (1u << g)))
            continue;
        if (!std::isfinite(realized[g]))
            throw InvalidArgument("mab_update: realized rates must be finite");
        ++s.counts[g];
        s.means[g] += (realized[g] - s.means[g]) / static_cast<double>(s.counts[g]);
    }
}

// ---------------------------------------------------------------------------

bool SchemeId::valid() const
{
    const bool learned = beam == BeamStrategy::learned || alloc == AllocStrategy::learned;
    if (learned)
        return beam == BeamStrategy::learned && alloc == AllocStrategy::learned;
    return ablation == Ablation::none;
}

std::string SchemeId::name() const
{
    if (!valid())
        throw InvalidArgument("scheme: invalid combination");
    if (beam == BeamStrategy::learned) {
        switch (ablation) {
        case Ablation::none:
            return "proposed";
        case Ablation::independent:
            return "independent";
        case Ablation::single_estimation:
            return "single-estimation";
        }
    }
    const std::string b = beam == BeamStrategy::bfs ? "bfs" : "pbu";
    const std::string a = alloc == AllocStrategy::greedy ? "greedy" : "mab";
    return b + "-" + a;
}

SchemeId SchemeId::parse(const std::string& name)
{
    for (const SchemeId& id : {bfs_greedy(), pbu_greedy(), bfs_mab(), pbu_mab(), proposed(), independent(),
                               single_estimation()})
        if (id.name() == name)
            return id;
    throw InvalidArgument("scheme: unknown id '" + name +
                          "' (expected bfs-greedy, pbu-greedy, bfs-mab, pbu-mab, proposed, independent, "
                          "single-estimation)");
}

void BaselineConfig::validate() const
{
    sweep_grid(bfs_step);
    sweep_grid(pbu_step);
    if (!(mab_exploration >= 0.0))
        throw InvalidArgument("baselines: mab_exploration must be non-negative");
}

AgentConfig apply_ablation(AgentConfig cfg, Ablation a)
{
    switch (a) {
    case Ablation::none:
        break;
    case Ablation::independent:
        cfg.use_high_advantage = false;
        cfg.sequential = false;
        break;
    case Ablation::single_estimation:
        cfg.use_high_advantage = false;
        break;
    }
    return cfg;
}

std::uint64_t evaluation_episode_seed(std::uint64_t seed, int index)
{
    std::uint64_t x = seed * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull + static_cast<std::uint64_t>(index);
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    return x ^ (x >> 33);
}

void accumulate_trace(SchemeMetrics& m, std::span<const SlotRecord> trace, std::int64_t evaluations)
{
    if (trace.empty())
        return;
    double err = 0.0, groups = 0.0, thr = 0.0, rew = 0.0;
    for (const auto& r : trace) {
        const double delivered = std::min(r.served, r.demand);
        err += std::abs(r.omega);
        groups += r.groups_used;
        thr += delivered;
        rew += r.reward;
        m.slot_reward.push_back(r.reward);
        m.slot_throughput.push_back(delivered);
    }
    const double n = static_cast<double>(trace.size());
    m.episode_error.push_back(err / n);
    m.episode_groups.push_back(groups / n);
    m.episode_throughput.push_back(thr / n);
    m.episode_reward.push_back(rew / n);
    // running sums until finalize_metrics
    m.satisfactory_error += err;
    m.rb_groups += groups;
    m.throughput += thr;
    m.mean_reward += rew;
    m.evaluations += evaluations;
    m.decisions += static_cast<std::int64_t>(trace.size());
}

void finalize_metrics(SchemeMetrics& m)
{
    if (m.decisions == 0)
        return;
    const double n = static_cast<double>(m.decisions);
    m.satisfactory_error /= n;
    m.rb_groups /= n;
    m.throughput /= n;
    m.mean_reward /= n;
    m.decision_proxy = static_cast<double>(m.evaluations) / n;
}

namespace {

void run_baseline_episode(Environment& env, const SchemeId& id, const BaselineConfig& cfg, MabState& mab,
                          std::int64_t& evals)
{
    const EnvConfig& ec = env.config();
    const RbPool& pool = env.pool();
    const int T = ec.time.slots_per_cycle;
    const int M = pool.num_rbs;

    // BFS re-sweeps both beams every slot on the rate proxy of all RBs; PBU
    // points once per cycle from the geometry.
    while (!env.done()) {
        const double snr_per_gain =
            ec.link.effective_tx_power() * env.cycle_path_gain() / (ec.array.nr() * noise_power(ec.link));
        auto sweep = [&] {
            const BeamSearchResult r =
                bfs_beam(env.cycle_channel().slot(env.slot(), M), ec.array, cfg.bfs_step, snr_per_gain);
            evals += r.evaluations;
            return r.beams;
        };
        BeamConfig beams = id.beam == BeamStrategy::bfs ? sweep() : pbu_beam(env.cycle_geometry(), cfg.pbu_step);
        env.begin_cycle(beams.tx, pool.all_groups_mask());

        for (int p = 0; p < T; ++p) {
            if (id.beam == BeamStrategy::bfs && p > 0) {
                beams = sweep();
                env.retarget_tx(beams.tx);
            }
            const double demand = env.current_demand();
            std::uint32_t mask = 0;
            if (id.alloc == AllocStrategy::greedy) {
                const GroupRates gr = group_rates(env.cycle_channel().slot(env.slot(), M), beams, ec.array, pool,
                                                  ec.link, env.cycle_path_gain());
                evals += M;
                mask = greedy_alloc(gr.group_rate, demand);
            } else {
                mask = mab_select(mab, demand);
            }
            env.step_slot(beams.rx, mask);
            if (id.alloc == AllocStrategy::mab) {
                const SlotRecord& rec = env.trace().back();
                std::vector<double> realized(pool.num_groups(), 0.0);
                for (int g = 0; g < pool.num_groups(); ++g)
                    for (int m : pool.groups[g])
                        realized[g] += rec.rb_rate[m];
                mab_update(mab, mask, realized);
            }
        }
    }
}

} // namespace

SchemeMetrics run_scheme(const SchemeId& id, const EnvConfig& env_cfg, const AgentConfig& agent_cfg,
                         const BaselineConfig& base_cfg, std::uint64_t seed, const SchemeRunOptions& opts)
{
    if (!id.valid())
        throw InvalidArgument("run_scheme: invalid scheme combination");
    if (opts.episodes < 1 || opts.train_episodes < 0)
        throw InvalidArgument("run_scheme: need >= 1 evaluation episode and a non-negative training budget");
    base_cfg.validate();

    SchemeMetrics m;
    m.scheme = id.name();
    if (id.beam == BeamStrategy::learned) {
        CollaborativeTrainer trainer(env_cfg, apply_ablation(agent_cfg, id.ablation), seed);
        m.training = trainer.train(opts.train_episodes, opts.epsilon);
        for (int e = 0; e < opts.episodes; ++e) {
            const EpisodeResult r = trainer.run_episode(evaluation_episode_seed(seed, e), false, ActMode::greedy);
            accumulate_trace(m, r.trace, r.evaluations);
        }
    } else {
        Environment env(env_cfg);
        MabState mab = MabState::create(env.pool().num_groups(), base_cfg.mab_exploration);
        for (int e = 0; e < opts.episodes; ++e) {
            env.reset(evaluation_episode_seed(seed, e));
            std::int64_t evals = 0;
            run_baseline_episode(env, id, base_cfg, mab, evals);
            accumulate_trace(m, env.trace(), evals);
        }
    }
    finalize_metrics(m);
    return m;
}

} // namespace ntn
