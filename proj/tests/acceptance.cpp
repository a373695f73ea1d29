// Acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "ntn/expcli.hpp"
#include "oracles.hpp"

using namespace ntn;
using oracle::cd;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

void require(Verdict& v, bool ok, const std::string& what)
{
    if (!ok) {
        v.pass = false;
        v.detail += (v.detail.empty() ? "" : "; ") + what;
    }
}

std::string num(double x) { return format_number(x); }

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("ntn_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

// ---------------------------------------------------------------------------

struct HeadLoss {
    std::vector<HeadSpec> heads;

    double operator()(const MlpParams& p, const RealVec& x) const
    {
        const auto out = mlp_forward(p, x);
        double l = 0.0;
        for (std::size_t h = 0; h < heads.size(); ++h) {
            const RealVec& o = out[h];
            switch (heads[h].kind) {
            case HeadSpec::Kind::scalar:
                l += 0.7 * o(0);
                break;
            case HeadSpec::Kind::categorical:
                l += log_softmax(o)(o.size() - 1);
                break;
            case HeadSpec::Kind::bernoulli:
                for (int i = 0; i < o.size(); ++i)
                    l += i % 2 ? log_sigmoid(-o(i)) : log_sigmoid(o(i));
                break;
            }
        }
        return l;
    }

    HeadOutputs upstream(const MlpParams& p, const RealVec& x) const
    {
        const auto out = mlp_forward(p, x);
        HeadOutputs u(heads.size());
        for (std::size_t h = 0; h < heads.size(); ++h) {
            const RealVec& o = out[h];
            switch (heads[h].kind) {
            case HeadSpec::Kind::scalar:
                u[h] = RealVec::Constant(1, 0.7);
                break;
            case HeadSpec::Kind::categorical:
                u[h] = -softmax(o);
                u[h](o.size() - 1) += 1.0;
                break;
            case HeadSpec::Kind::bernoulli:
                u[h] = RealVec(o.size());
                for (int i = 0; i < o.size(); ++i)
                    u[h](i) = (i % 2 ? 0.0 : 1.0) - sigmoid(o(i));
                break;
            }
        }
        return u;
    }
};

Verdict numerics()
{
    Verdict v;
    Rng rng(1001);
    double worst_fd = 0.0;
    const std::vector<std::vector<HeadSpec>> head_sets{
        {HeadSpec::scalar()},
        {HeadSpec::categorical(7)},
        {HeadSpec::bernoulli(3)},
        {HeadSpec::scalar(), HeadSpec::categorical(5), HeadSpec::bernoulli(4)},
    };
    for (const auto& heads : head_sets)
        for (int t = 0; t < 3; ++t) {
            const MlpParams p = make_mlp(6, {10, 7}, heads, rng);
            const RealVec x = RealVec::Random(6);
            const HeadLoss loss{heads};
            const auto g = mlp_backward(p, x, loss.upstream(p, x)).flatten();
            worst_fd = std::max(worst_fd, oracle::fd_max_rel_error(p, g, [&](const MlpParams& m) { return loss(m, x); }));
        }

    // the two training losses through their own gradients
    const LowPolicyLayout layout{7, 3};
    const MlpParams pol = make_mlp(5, {12}, layout.heads(), rng);
    std::vector<PolicySample> batch;
    for (int i = 0; i < 8; ++i) {
        const RealVec x = RealVec::Random(5);
        const auto a = act_low(pol, x, rng, ActMode::sample);
        batch.push_back({x, a.action, a.log_prob + 0.03, 0.4 * i - 1.5});
    }
    const auto pl = policy_loss(batch, pol, 0.2);
    worst_fd = std::max(worst_fd, oracle::fd_max_rel_error(pol, pl.gradient.flatten(), [&](const MlpParams& m) {
                            return policy_loss(batch, m, 0.2, false).objective;
                        }));
    const MlpParams val = make_mlp(5, {9}, {HeadSpec::scalar()}, rng);
    std::vector<RealVec> xs;
    std::vector<double> ts;
    for (int i = 0; i < 8; ++i) {
        xs.push_back(RealVec::Random(5));
        ts.push_back(0.3 * i);
    }
    worst_fd = std::max(worst_fd, oracle::fd_max_rel_error(val, value_loss(xs, ts, val).gradient.flatten(),
                                                           [&](const MlpParams& m) { return value_loss(xs, ts, m, false).loss; }));
    require(v, worst_fd <= 1e-5, "fd rel err " + num(worst_fd));

    double worst_norm = 0.0;
    std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);
    for (auto [nx, ny] : {std::pair{2, 2}, {4, 4}, {1, 8}, {3, 5}})
        for (int i = 0; i < 200; ++i) {
            const ComplexVec s = upa_steering(nx, ny, 0.0375, 0.075, {ang(rng), ang(rng)});
            worst_norm = std::max(worst_norm, std::abs(s.norm() - 1.0));
        }
    require(v, worst_norm <= 1e-12, "steering norm dev " + num(worst_norm));

    double worst_h = 0.0;
    const ArrayGeometry g;
    GeometrySample geo;
    geo.boresight_aod = {0.8, 1.4};
    geo.boresight_aoa = {2.0, 0.9};
    const ChannelConfig cc;
    for (int t = 0; t < 5; ++t) {
        MultipathProfile prof = sample_paths(rng, geo, cc, g.wavelength);
        for (auto& p : prof.paths)
            p.doppler = 40e3 * (ang(rng) - 1.5);
        for (long n : {0L, 7L, 1000L})
            for (int m : {0, 5, 59}) {
                const ComplexMat h = channel_matrix(prof, g, n, m);
                for (int r = 0; r < g.nr(); ++r)
                    for (int c = 0; c < g.nt(); ++c)
                        worst_h = std::max(worst_h, std::abs(h(r, c) - oracle::channel_entry(prof, g, n, m, r, c)));
            }
    }
    require(v, worst_h <= 1e-10, "channel dev " + num(worst_h));
    v.detail = "fd " + num(worst_fd) + ", norm " + num(worst_norm) + ", H " + num(worst_h) +
               (v.pass ? "" : " | " + v.detail);
    return v;
}

Verdict link_math()
{
    Verdict v;
    Rng rng(1002);
    std::uniform_real_distribution<double> ang(0.1, std::numbers::pi - 0.1), amp(-2, 2);
    double worst_gain = 0.0;
    for (const ArrayGeometry& g : {ArrayGeometry{}, ArrayGeometry{2, 8, 1, 4, 0.0375, 0.0375, 0.075}})
        for (int t = 0; t < 100; ++t) {
            const cd alpha(amp(rng), amp(rng));
            const AnglePair aod{ang(rng), ang(rng)}, aoa{ang(rng), ang(rng)};
            MultipathProfile p;
            p.paths.push_back(PathParams{alpha, 500.0, 1e-7, aod, aoa});
            const ComplexMat h = channel_matrix(p, g, 3, 2);
            worst_gain = std::max(worst_gain,
                                  std::abs(beam_gain(h, steering_rx(g, aoa), steering_tx(g, aod)) - std::norm(alpha)));
        }
    require(v, worst_gain <= 1e-9, "gain dev " + num(worst_gain));

    const double r1 = rate(1.0, 180e3), r3 = rate(3.0, 180e3), r0 = rate(0.0, 180e3);
    require(v, std::abs(r1 - 180e3) <= 1e-9, "rate(1) " + num(r1));
    require(v, std::abs(r3 - 360e3) <= 1e-9, "rate(3) " + num(r3));
    require(v, r0 == 0.0, "rate(0) " + num(r0));

    // path gain chosen so that a matched unit path gives SNR exactly 1 on a single-antenna link
    const ArrayGeometry one{1, 1, 1, 1, 0.0375, 0.0375, 0.075};
    LinkBudget lb;
    ComplexMat h(1, 1);
    h(0, 0) = 1.0;
    const double pg = noise_power(lb) / lb.effective_tx_power();
    const double s = snr(h, {{1.0, 1.0}, {1.0, 1.0}}, one, lb, pg);
    require(v, std::abs(s - 1.0) <= 1e-9, "snr hand case " + num(s));
    require(v, std::abs(rate(s, lb.rb_bandwidth) - 180e3) <= 1e-9 * 180e3, "hand-case rate");
    v.detail = "gain dev " + num(worst_gain) + ", rate(1) " + num(r1) + ", snr " + num(s) +
               (v.pass ? "" : " | " + v.detail);
    return v;
}

class HandModel : public CycleModel {
public:
    int candidate_count() const override { return 3; }
    double reward(int, int c, const HighState& s) override
    {
        const double base[3] = {5.0, 3.0, 4.0};
        return base[c] + (c == 1 ? 2.0 : 1.0) * s.mean_snr[0];
    }
    HighState next_state(int, int c, const HighState& s) override
    {
        const double shift[3] = {-2.0, 3.0, 0.5};
        return {{0, 0, 0}, {s.mean_snr[0] + shift[c]}};
    }
};

Verdict oracles()
{
    Verdict v;
    Rng rng(1003);
    std::uniform_real_distribution<double> u(0, 1), d(-0.2, 2.5);
    int card = 0, feas = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::vector<double> rates{u(rng), u(rng), u(rng)};
        const double demand = d(rng);
        const std::uint32_t mask = greedy_alloc(rates, demand);
        double s = 0.0;
        for (int g = 0; g < 3; ++g)
            if (mask & (1u << g))
                s += rates[std::size_t(g)];
        const auto want = oracle::min_feasible_subset(rates, demand);
        card += std::popcount(mask) == want.cardinality;
        feas += (s >= demand) == want.feasible;
    }
    require(v, card == 1000 && feas == 1000, "greedy agreement " + std::to_string(card) + "/" + std::to_string(feas));

    HandModel hand;
    const FeatureScales f{1.0, 1.0, 1.0, 1.0};
    int agree = 0, trials = 0, deeper = 0;
    for (int t = 0; t < 20; ++t) {
        const MlpParams tail = t == 0 ? zero_mlp(4, {}, {HeadSpec::scalar()}) : make_mlp(4, {6}, {HeadSpec::scalar()}, rng);
        const HighState s{{0, 0, 0}, {0.25 * t - 2.0}};
        const int got = rollout_high(tail, f, 0.9, 2, s, hand).candidate;
        const int want = oracle::tree_argmax(hand, tail, f, 0.9, 2, s);
        agree += got == want;
        deeper += got != rollout_high(tail, f, 0.9, 1, s, hand).candidate;
        ++trials;
    }
    require(v, agree == trials, "rollout agreement " + std::to_string(agree) + "/" + std::to_string(trials));

    const MlpParams pol = make_mlp(5, {12}, LowPolicyLayout{7, 3}.heads(), rng);
    bool exact = true;
    for (int t = 0; t < 20; ++t) {
        std::vector<PolicySample> batch;
        double mean = 0.0;
        const int n = 1 + t;
        for (int i = 0; i < n; ++i) {
            const RealVec x = RealVec::Random(5);
            const auto a = act_low(pol, x, rng, ActMode::sample);
            const double adv = d(rng) - 1.0;
            batch.push_back({x, a.action, action_log_prob(pol, x, a.action), adv});
        }
        for (const auto& b : batch)
            mean += b.advantage;
        mean /= n;
        exact = exact && policy_loss(batch, pol, 0.2, false).objective == mean;
    }
    require(v, exact, "policy_loss identity not exact");
    v.detail = "greedy " + std::to_string(card) + "/1000, rollout " + std::to_string(agree) + "/" +
               std::to_string(trials) + " (" + std::to_string(deeper) + " differ from depth 1), identity " +
               (exact ? "exact" : "inexact") + (v.pass ? "" : " | " + v.detail);
    return v;
}

struct TierStats {
    double median = 0.0;
    oracle::Interval ci;
};

Verdict monotonic(std::FILE* log)
{
    Verdict v;
    EnvConfig env = desk_env_config();
    env.validate();
    const int stages = 20, evals = 30;
    CollaborativeTrainer trainer(env, AgentConfig{}, 2024);

    std::vector<TierStats> low, high;
    for (int k = 0; k < stages; ++k) {
        trainer.train(1);
        std::vector<double> lo, hi;
        for (int e = 0; e < evals; ++e) {
            const EpisodeResult r = trainer.run_episode(evaluation_episode_seed(7, e), false, ActMode::greedy);
            lo.push_back(r.low_return);
            hi.push_back(r.high_return);
        }
        low.push_back({oracle::median(lo), oracle::bootstrap_median(lo, 2000, 0.95, 500 + k)});
        high.push_back({oracle::median(hi), oracle::bootstrap_median(hi, 2000, 0.95, 900 + k)});
        std::fprintf(log, "  stage %2d  low median %.6g [%.6g, %.6g]  high median %.6g [%.6g, %.6g]\n", k + 1,
                     low.back().median, low.back().ci.lo, low.back().ci.hi, high.back().median, high.back().ci.lo,
                     high.back().ci.hi);
    }

    auto check = [&](const std::vector<TierStats>& s, const char* tier) {
        double lo = s[0].median, hi = lo;
        for (const auto& t : s) {
            lo = std::min(lo, t.median);
            hi = std::max(hi, t.median);
        }
        const double range = hi - lo;
        int significant = 0;
        double worst = 0.0;
        for (std::size_t k = 1; k < s.size(); ++k) {
            const double drop = s[k - 1].median - s[k].median;
            worst = std::max(worst, drop);
            const bool outside = s[k].ci.hi < s[k - 1].ci.lo;
            if (outside && drop > 0.05 * range)
                ++significant;
        }
        require(v, significant == 0, std::string(tier) + " has " + std::to_string(significant) + " significant regressions");
        return std::string(tier) + " range " + num(range) + " worst drop " + num(worst) + " (" +
               num(range > 0 ? worst / range : 0.0) + " of range)";
    };
    const std::string a = check(low, "low"), b = check(high, "high");
    v.detail = a + ", " + b + (v.pass ? "" : " | " + v.detail);
    return v;
}

ExperimentConfig desk_config(const fs::path& out)
{
    ExperimentConfig c = load_experiment_config(fs::path(NTN_SOURCE_DIR) / "configs" / "desk.json");
    c.demand_units_mb = {10.0};
    c.output_dir = out.string();
    return c;
}

const SchemeMetrics& find(const DemandBlock& b, const std::string& name)
{
    for (const auto& m : b.schemes)
        if (m.scheme == name)
            return m;
    throw InvalidArgument("missing scheme " + name);
}

std::size_t index_of(const DemandBlock& b, const std::string& name)
{
    for (std::size_t i = 0; i < b.schemes.size(); ++i)
        if (b.schemes[i].scheme == name)
            return i;
    throw InvalidArgument("missing scheme " + name);
}

Verdict baseline_order(const DemandBlock& b)
{
    Verdict v;
    const double top = find(b, "bfs-greedy").throughput;
    std::string d = "throughput:";
    for (const auto& m : b.schemes) {
        d += " " + m.scheme + "=" + num(m.throughput);
        if (m.scheme != "bfs-greedy")
            require(v, top >= m.throughput, "bfs-greedy below " + m.scheme);
    }
    d += "; error:";
    const auto err = [&](const char* s) { return find(b, s).satisfactory_error; };
    for (const char* alloc : {"greedy", "mab"}) {
        const std::string pbu = std::string("pbu-") + alloc, bfs = std::string("bfs-") + alloc;
        require(v, err(pbu.c_str()) >= err(bfs.c_str()), pbu + " error below " + bfs);
    }
    const double pbu_mean = 0.5 * (err("pbu-greedy") + err("pbu-mab"));
    const double bfs_mean = 0.5 * (err("bfs-greedy") + err("bfs-mab"));
    require(v, pbu_mean >= bfs_mean, "pbu mean error below bfs mean");
    for (const char* s : {"bfs-greedy", "bfs-mab", "pbu-greedy", "pbu-mab"})
        d += " " + std::string(s) + "=" + num(err(s));
    d += " means pbu=" + num(pbu_mean) + " bfs=" + num(bfs_mean);
    v.detail = d + (v.pass ? "" : " | " + v.detail);
    return v;
}

Verdict table_direction(const DemandBlock& b)
{
    Verdict v;
    const auto& u = b.utilities[0]; // weights 1/3, 1/3, 1/3
    const double up = u[index_of(b, "proposed")];
    for (const char* s : {"pbu-greedy", "pbu-mab"})
        require(v, up < u[index_of(b, s)], std::string("utility not below ") + s);
    const double ep = find(b, "proposed").satisfactory_error, em = find(b, "bfs-mab").satisfactory_error;
    const double rel = em > 0 ? std::abs(ep - em) / em : (ep == 0 ? 0.0 : std::numeric_limits<double>::infinity());
    require(v, rel <= 0.25, "error off bfs-mab by " + num(rel));
    std::string d = "utility:";
    for (const auto& m : b.schemes)
        d += " " + m.scheme + "=" + num(u[index_of(b, m.scheme)]);
    d += "; error proposed=" + num(ep) + " bfs-mab=" + num(em) + " (rel " + num(rel) + ")";
    d += "; groups proposed=" + num(find(b, "proposed").rb_groups) + " bfs-mab=" + num(find(b, "bfs-mab").rb_groups);
    v.detail = d + (v.pass ? "" : " | " + v.detail);
    return v;
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.path().extension() != ".csv" && e.path().extension() != ".json")
            continue;
        std::ifstream f(e.path(), std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        out[name] = s.str();
    }
    return out;
}

Verdict determinism()
{
    Verdict v;
    const fs::path dir = scratch("determinism");
    ExperimentConfig c = desk_config(dir);
    c.num_seeds = 2;
    c.train_episodes = 10;
    c.demand_units_mb = {10.0, 15.0};
    run_experiment(c);
    const auto a = snapshot(dir);
    fs::remove_all(dir);
    run_experiment(c);
    const auto b = snapshot(dir);
    std::size_t bytes = 0;
    for (const auto& [k, s] : a)
        bytes += s.size();
    require(v, !a.empty() && a == b, "outputs differ");
    v.detail = std::to_string(a.size()) + " csv/json files, " + std::to_string(bytes) + " bytes compared" +
               (v.pass ? "" : " | " + v.detail);
    fs::remove_all(dir);
    return v;
}

Verdict bookkeeping()
{
    Verdict v;
    EnvConfig c = desk_env_config();
    c.time.total_slots = 2 * c.time.slots_per_cycle;
    const int T = c.time.slots_per_cycle;

    // environment driven directly with arbitrary actions
    Environment env(c);
    env.reset(31);
    Rng rng(1008);
    std::uniform_int_distribution<int> off(0, int(c.offsets.values.size()) - 1), grp(1, 7);
    int highs = 0, lows = 0;
    bool cadence = true, guarded = true;
    std::vector<double> emitted_low, emitted_high;
    while (!env.done()) {
        if (env.at_cycle_boundary()) {
            cadence = cadence && lows == highs * T;
            const auto h = env.step_high({{off(rng), off(rng)}, std::uint32_t(grp(rng))});
            if (h.has_reward)
                emitted_high.push_back(h.reward);
            ++highs;
        } else {
            try {
                env.step_high({{0, 0}, 1});
                guarded = false;
            } catch (const InvalidState&) {
            }
        }
        emitted_low.push_back(env.step_low({{off(rng), off(rng)}, std::uint32_t(grp(rng))}).reward);
        ++lows;
    }
    emitted_high.push_back(env.cycle_outcome().reward);
    auto total_gap = [&](const std::vector<SlotRecord>& trace, const std::vector<double>& el,
                         const std::vector<double>& eh) {
        const auto re = oracle::recompute_rewards(trace, T, c.eta, std::size_t(c.fifo_capacity));
        if (re.low.size() != el.size() || re.high.size() != eh.size())
            return std::numeric_limits<double>::infinity();
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < el.size(); ++i) {
            a += el[i];
            b += re.low[i];
        }
        for (std::size_t i = 0; i < eh.size(); ++i) {
            a += eh[i];
            b += re.high[i];
        }
        return std::abs(a - b) / std::max(1.0, std::abs(b));
    };
    const double gap_env = total_gap(env.trace(), emitted_low, emitted_high);

    // the same identity along an episode played by the learned agents
    CollaborativeTrainer trainer(c, AgentConfig{}, 77);
    trainer.train(2);
    const EpisodeResult r = trainer.run_episode(99, true, ActMode::sample);
    std::vector<double> rl;
    for (const auto& s : r.trace)
        rl.push_back(s.reward);
    const double gap_agent = total_gap(r.trace, rl, r.high_rewards);

    require(v, gap_env <= 1e-9, "env gap " + num(gap_env));
    require(v, gap_agent <= 1e-9, "agent gap " + num(gap_agent));
    require(v, highs == 2 && lows == 2 * T && cadence, "step cadence");
    require(v, guarded, "step_high accepted mid-cycle");
    require(v, r.high_rewards.size() == 2 && r.trace.size() == std::size_t(2 * T), "agent episode shape");
    v.detail = "rel gap env " + num(gap_env) + ", agents " + num(gap_agent) + "; " + std::to_string(highs) +
               " high / " + std::to_string(lows) + " low steps" + (v.pass ? "" : " | " + v.detail);
    return v;
}

} // namespace

int main()
{
    int failed = 0;
    auto report = [&](int id, const char* name, double limit_s, const std::function<Verdict()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = body();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double s = seconds_since(t0);
        if (limit_s > 0 && s >= limit_s) {
            v.pass = false;
            v.detail += "; over time budget";
        }
        failed += !v.pass;
        std::printf("[%s] %d %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", id, name, s, v.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "numerics", 30.0, numerics);
    report(2, "link math", 0.0, link_math);
    report(3, "oracle equivalences", 0.0, oracles);
    report(4, "monotonic improvement", 300.0, [] { return monotonic(stdout); });

    const fs::path desk_dir = scratch("desk");
    ExperimentResult desk;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        desk = run_experiment(desk_config(desk_dir));
    } catch (const std::exception& e) {
        std::printf("desk experiment failed: %s\n", e.what());
    }
    std::printf("  desk experiment: 10 seeds, 200 training episodes, %.1f s\n", seconds_since(t0));
    auto on_desk = [&](Verdict (*f)(const DemandBlock&)) {
        return [&desk, f] {
            if (desk.blocks.empty())
                return Verdict{false, "no desk results"};
            return f(desk.blocks[0]);
        };
    };
    report(5, "baseline ordering", 0.0, on_desk(baseline_order));
    report(6, "utility direction", 0.0, on_desk(table_direction));
    fs::remove_all(desk_dir);

    report(7, "determinism", 0.0, determinism);
    report(8, "bookkeeping", 0.0, bookkeeping);

    std::printf("%d of 8 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
