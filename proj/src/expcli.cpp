#include "ntn/expcli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ntn {

using json = nlohmann::json;
using std::numbers::pi;

namespace {

constexpr double kDeg = pi / 180.0;

/// Reads the keys of one JSON object and rejects any it was not asked about.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_ + ": expected an object");
    }

    std::string path(const std::string& key) const { return path_ + "." + key; }

    const json* find(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number())
                throw ConfigError(path(key) + ": expected a number");
            out = v->get<double>();
        }
    }

    void integer(const std::string& key, int& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number_integer())
                throw ConfigError(path(key) + ": expected an integer");
            out = v->get<int>();
        }
    }

    void unsigned_integer(const std::string& key, std::uint64_t& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
                throw ConfigError(path(key) + ": expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void size(const std::string& key, std::size_t& out)
    {
        std::uint64_t v = out;
        unsigned_integer(key, v);
        out = static_cast<std::size_t>(v);
    }

    void boolean(const std::string& key, bool& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_boolean())
                throw ConfigError(path(key) + ": expected true or false");
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_string())
                throw ConfigError(path(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }

    template <typename T>
    void list(const std::string& key, std::vector<T>& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_array())
                throw ConfigError(path(key) + ": expected an array");
            std::vector<T> tmp;
            for (std::size_t i = 0; i < v->size(); ++i) {
                const json& e = (*v)[i];
                const std::string p = path(key) + "[" + std::to_string(i) + "]";
                if constexpr (std::is_same_v<T, std::string>) {
                    if (!e.is_string())
                        throw ConfigError(p + ": expected a string");
                } else if constexpr (std::is_integral_v<T>) {
                    if (!e.is_number_integer())
                        throw ConfigError(p + ": expected an integer");
                } else {
                    if (!e.is_number())
                        throw ConfigError(p + ": expected a number");
                }
                tmp.push_back(e.get<T>());
            }
            out = std::move(tmp);
        }
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(path(it.key()) + ": unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
void section(ObjectReader& parent, const std::string& key, F&& body)
{
    if (const json* v = parent.find(key)) {
        ObjectReader r(*v, parent.path(key));
        body(r);
        r.finish();
    }
}

void read_orbit(ObjectReader& r, OrbitConfig& o)
{
    double alt_km = o.altitude / 1e3, incl = o.inclination / kDeg, raan = o.raan / kDeg,
           phase = o.initial_phase / kDeg;
    r.number("altitude_km", alt_km);
    r.number("inclination_deg", incl);
    r.number("raan_deg", raan);
    r.number("initial_phase_deg", phase);
    o.altitude = alt_km * 1e3;
    o.inclination = incl * kDeg;
    o.raan = raan * kDeg;
    o.initial_phase = phase * kDeg;
}

void read_env(ObjectReader& r, EnvConfig& e)
{
    section(r, "orbit", [&](ObjectReader& s) { read_orbit(s, e.orbit); });
    if (const json* v = r.find("overhead_time_s")) {
        if (v->is_null())
            e.overhead_time.reset();
        else if (v->is_number())
            e.overhead_time = v->get<double>();
        else
            throw ConfigError(r.path("overhead_time_s") + ": expected a number or null");
    }
    std::vector<double> ue{e.ue.x / 1e3, e.ue.y / 1e3, e.ue.z / 1e3};
    r.list("ue_ecef_km", ue);
    if (ue.size() != 3)
        throw ConfigError(r.path("ue_ecef_km") + ": expected three coordinates");
    e.ue = {ue[0] * 1e3, ue[1] * 1e3, ue[2] * 1e3};
    double min_el = e.min_elevation / kDeg;
    r.number("min_elevation_deg", min_el);
    e.min_elevation = min_el * kDeg;
    section(r, "array", [&](ObjectReader& s) {
        s.integer("nt_x", e.array.nt_x);
        s.integer("nt_y", e.array.nt_y);
        s.integer("nr_x", e.array.nr_x);
        s.integer("nr_y", e.array.nr_y);
        s.number("spacing_tx_m", e.array.d_t);
        s.number("spacing_rx_m", e.array.d_r);
        s.number("wavelength_m", e.array.wavelength);
    });
    section(r, "channel", [&](ObjectReader& s) {
        double spread = e.channel.angle_spread / kDeg, delay = e.channel.delay_spread * 1e9,
               ts = e.channel.symbol_duration * 1e6;
        s.integer("num_paths", e.channel.num_paths);
        s.number("rician_k_db", e.channel.rician_k_db);
        s.number("angle_spread_deg", spread);
        s.number("delay_spread_ns", delay);
        s.number("symbol_duration_us", ts);
        e.channel.angle_spread = spread * kDeg;
        e.channel.delay_spread = delay * 1e-9;
        e.channel.symbol_duration = ts * 1e-6;
    });
    section(r, "link", [&](ObjectReader& s) {
        double dbw = 10.0 * std::log10(e.link.tx_power);
        s.number("tx_power_dbw", dbw);
        e.link.tx_power = std::pow(10.0, dbw / 10.0);
        s.number("tx_gain_dbi", e.link.tx_gain_dbi);
        s.number("rx_gain_dbi", e.link.rx_gain_dbi);
        s.number("noise_temp_k", e.link.noise_temp);
        s.number("rb_bandwidth_hz", e.link.rb_bandwidth);
        s.number("carrier_hz", e.link.carrier);
    });
    r.integer("num_rbs", e.num_rbs);
    r.integer("num_groups", e.num_groups);
    section(r, "time", [&](ObjectReader& s) {
        s.integer("slots_per_cycle", e.time.slots_per_cycle);
        s.integer("total_slots", e.time.total_slots);
        s.number("slot_len_s", e.time.slot_len);
    });
    section(r, "demand", [&](ObjectReader& s) {
        double unit_mb = e.demand.unit / 1e6;
        s.number("lambda", e.demand.lambda);
        s.number("unit_mb", unit_mb);
        e.demand.unit = unit_mb * 1e6;
    });
    r.number("eta", e.eta);
    r.integer("fifo_capacity", e.fifo_capacity);
    std::vector<double> offs;
    for (double v : e.offsets.values)
        offs.push_back(v / kDeg);
    r.list("offsets_deg", offs);
    e.offsets.values.clear();
    for (double v : offs)
        e.offsets.values.push_back(v * kDeg);
    r.boolean("expose_demand", e.expose_demand);
}

void read_agent(ObjectReader& r, AgentConfig& a)
{
    r.list("policy_hidden", a.policy_hidden);
    r.list("value_hidden", a.value_hidden);
    r.list("tail_hidden", a.tail_hidden);
    r.number("gamma_low", a.gamma_low);
    r.number("gamma_high", a.gamma_high);
    r.number("learning_rate", a.learning_rate);
    r.number("clip", a.clip);
    r.number("kl_stop", a.kl_stop);
    r.integer("epochs", a.epochs);
    r.integer("minibatch", a.minibatch);
    r.size("replay_low", a.replay_low);
    r.size("replay_high", a.replay_high);
    r.integer("tail_batch", a.tail_batch);
    r.integer("rollout_depth", a.rollout_depth);
    r.number("reward_scale", a.reward_scale);
    section(r, "features", [&](ObjectReader& s) {
        s.number("snr_db", a.features.snr_db);
        s.number("position", a.features.position);
        s.number("strength", a.features.strength);
        s.number("demand", a.features.demand);
    });
}

template <typename F>
void wrap_validation(const std::string& path, F&& f)
{
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string unit_tag(double mb)
{
    std::string s = format_number(mb);
    std::replace(s.begin(), s.end(), '.', 'p');
    return "u" + s;
}

std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot read " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '&':
            out += "&amp;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

const std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                          "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double x, int digits = 2)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string axis_label(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const
{
    wrap_validation("$.env", [&] { env.validate(); });
    wrap_validation("$.agent", [&] { agent.validate(); });
    wrap_validation("$.baselines", [&] { baselines.validate(); });
    if (schemes.empty())
        throw ConfigError("$.schemes: must list at least one scheme");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < schemes.size(); ++i) {
        wrap_validation("$.schemes[" + std::to_string(i) + "]", [&] { SchemeId::parse(schemes[i]); });
        if (!seen.insert(schemes[i]).second)
            throw ConfigError("$.schemes[" + std::to_string(i) + "]: duplicate scheme");
    }
    if (episodes < 1)
        throw ConfigError("$.episodes: must be >= 1");
    if (train_episodes < 0)
        throw ConfigError("$.train_episodes: must be >= 0");
    if (!(epsilon >= 0.0))
        throw ConfigError("$.epsilon: must be >= 0");
    if (num_seeds < 1)
        throw ConfigError("$.num_seeds: must be >= 1");
    if (demand_units_mb.empty())
        throw ConfigError("$.demand_units_mb: must not be empty");
    for (std::size_t i = 0; i < demand_units_mb.size(); ++i)
        if (!(demand_units_mb[i] > 0.0))
            throw ConfigError("$.demand_units_mb[" + std::to_string(i) + "]: must be positive");
    if (moving_average_window < 1)
        throw ConfigError("$.moving_average_window: must be >= 1");
    if (output_dir.empty())
        throw ConfigError("$.output_dir: must not be empty");
}

EnvConfig desk_env_config()
{
    EnvConfig e;
    e.num_rbs = 12;
    e.num_groups = 3;
    e.time.slots_per_cycle = 10;
    e.time.total_slots = 60;
    return e;
}

ExperimentConfig parse_experiment_config(const json& j)
{
    ExperimentConfig cfg;
    ObjectReader r(j, "$");
    section(r, "env", [&](ObjectReader& s) { read_env(s, cfg.env); });
    section(r, "agent", [&](ObjectReader& s) { read_agent(s, cfg.agent); });
    section(r, "baselines", [&](ObjectReader& s) {
        double bfs = cfg.baselines.bfs_step / kDeg, pbu = cfg.baselines.pbu_step / kDeg;
        s.number("bfs_step_deg", bfs);
        s.number("pbu_step_deg", pbu);
        s.number("mab_exploration", cfg.baselines.mab_exploration);
        cfg.baselines.bfs_step = bfs * kDeg;
        cfg.baselines.pbu_step = pbu * kDeg;
    });
    r.list("schemes", cfg.schemes);
    r.integer("episodes", cfg.episodes);
    r.integer("train_episodes", cfg.train_episodes);
    r.number("epsilon", cfg.epsilon);
    r.unsigned_integer("seed", cfg.seed);
    r.integer("num_seeds", cfg.num_seeds);
    r.list("demand_units_mb", cfg.demand_units_mb);
    r.integer("moving_average_window", cfg.moving_average_window);
    r.string("output_dir", cfg.output_dir);
    r.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("$: malformed JSON: ") + e.what());
    }
    return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& c)
{
    const EnvConfig& e = c.env;
    std::vector<double> offs;
    for (double v : e.offsets.values)
        offs.push_back(v / kDeg);
    json env = {
        {"orbit",
         {{"altitude_km", e.orbit.altitude / 1e3},
          {"inclination_deg", e.orbit.inclination / kDeg},
          {"raan_deg", e.orbit.raan / kDeg},
          {"initial_phase_deg", e.orbit.initial_phase / kDeg}}},
        {"overhead_time_s", e.overhead_time ? json(*e.overhead_time) : json(nullptr)},
        {"ue_ecef_km", {e.ue.x / 1e3, e.ue.y / 1e3, e.ue.z / 1e3}},
        {"min_elevation_deg", e.min_elevation / kDeg},
        {"array",
         {{"nt_x", e.array.nt_x},
          {"nt_y", e.array.nt_y},
          {"nr_x", e.array.nr_x},
          {"nr_y", e.array.nr_y},
          {"spacing_tx_m", e.array.d_t},
          {"spacing_rx_m", e.array.d_r},
          {"wavelength_m", e.array.wavelength}}},
        {"channel",
         {{"num_paths", e.channel.num_paths},
          {"rician_k_db", e.channel.rician_k_db},
          {"angle_spread_deg", e.channel.angle_spread / kDeg},
          {"delay_spread_ns", e.channel.delay_spread * 1e9},
          {"symbol_duration_us", e.channel.symbol_duration * 1e6}}},
        {"link",
         {{"tx_power_dbw", 10.0 * std::log10(e.link.tx_power)},
          {"tx_gain_dbi", e.link.tx_gain_dbi},
          {"rx_gain_dbi", e.link.rx_gain_dbi},
          {"noise_temp_k", e.link.noise_temp},
          {"rb_bandwidth_hz", e.link.rb_bandwidth},
          {"carrier_hz", e.link.carrier}}},
        {"num_rbs", e.num_rbs},
        {"num_groups", e.num_groups},
        {"time",
         {{"slots_per_cycle", e.time.slots_per_cycle},
          {"total_slots", e.time.total_slots},
          {"slot_len_s", e.time.slot_len}}},
        {"demand", {{"lambda", e.demand.lambda}, {"unit_mb", e.demand.unit / 1e6}}},
        {"eta", e.eta},
        {"fifo_capacity", e.fifo_capacity},
        {"offsets_deg", offs},
        {"expose_demand", e.expose_demand},
    };
    const AgentConfig& a = c.agent;
    json agent = {
        {"policy_hidden", a.policy_hidden},
        {"value_hidden", a.value_hidden},
        {"tail_hidden", a.tail_hidden},
        {"gamma_low", a.gamma_low},
        {"gamma_high", a.gamma_high},
        {"learning_rate", a.learning_rate},
        {"clip", a.clip},
        {"kl_stop", a.kl_stop},
        {"epochs", a.epochs},
        {"minibatch", a.minibatch},
        {"replay_low", a.replay_low},
        {"replay_high", a.replay_high},
        {"tail_batch", a.tail_batch},
        {"rollout_depth", a.rollout_depth},
        {"reward_scale", a.reward_scale},
        {"features",
         {{"snr_db", a.features.snr_db},
          {"position", a.features.position},
          {"strength", a.features.strength},
          {"demand", a.features.demand}}},
    };
    return {
        {"env", env},
        {"agent", agent},
        {"baselines",
         {{"bfs_step_deg", c.baselines.bfs_step / kDeg},
          {"pbu_step_deg", c.baselines.pbu_step / kDeg},
          {"mab_exploration", c.baselines.mab_exploration}}},
        {"schemes", c.schemes},
        {"episodes", c.episodes},
        {"train_episodes", c.train_episodes},
        {"epsilon", c.epsilon},
        {"seed", c.seed},
        {"num_seeds", c.num_seeds},
        {"demand_units_mb", c.demand_units_mb},
        {"moving_average_window", c.moving_average_window},
        {"output_dir", c.output_dir},
    };
}

// ---------------------------------------------------------------------------

double satisfactory_error(std::span<const SlotRecord> trace)
{
    if (trace.empty())
        throw InvalidArgument("satisfactory_error: empty trace");
    double s = 0.0;
    for (const auto& r : trace)
        s += std::abs(r.omega);
    return s / static_cast<double>(trace.size());
}

std::vector<double> moving_average(std::span<const double> series, int window)
{
    if (window < 1)
        throw InvalidArgument("moving_average: window must be >= 1");
    std::vector<double> out(series.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        acc += series[i];
        if (i >= static_cast<std::size_t>(window))
            acc -= series[i - window];
        const std::size_t n = std::min<std::size_t>(window, i + 1);
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

void UtilityWeights::validate() const
{
    double s = 0.0;
    for (double x : w) {
        if (!(x >= 0.0))
            throw InvalidArgument("utility weights must be non-negative");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw InvalidArgument("utility weights must sum to 1");
}

std::vector<UtilityWeights> standard_weight_rows()
{
    return {{{1.0 / 3, 1.0 / 3, 1.0 / 3}}, {{0.5, 0.25, 0.25}}, {{0.25, 0.5, 0.25}}, {{0.25, 0.25, 0.5}}};
}

std::vector<double> weighted_utility(std::span<const UtilityInputs> schemes, const UtilityWeights& w)
{
    if (schemes.size() < 2)
        throw InvalidArgument("weighted_utility: need at least two schemes");
    w.validate();
    std::vector<double> out(schemes.size(), 0.0);
    auto component = [&](auto get, double weight) {
        double lo = get(schemes[0]), hi = lo;
        for (const auto& s : schemes) {
            lo = std::min(lo, get(s));
            hi = std::max(hi, get(s));
        }
        if (!(hi > lo))
            return;
        for (std::size_t i = 0; i < schemes.size(); ++i)
            out[i] += weight * (get(schemes[i]) - lo) / (hi - lo);
    };
    component([](const UtilityInputs& u) { return u.satisfactory_error; }, w.w[0]);
    component([](const UtilityInputs& u) { return u.rb_groups; }, w.w[1]);
    component([](const UtilityInputs& u) { return u.decision_proxy; }, w.w[2]);
    return out;
}

SchemeMetrics merge_metrics(std::span<const SchemeMetrics> runs)
{
    if (runs.empty())
        throw InvalidArgument("merge_metrics: nothing to merge");
    SchemeMetrics m;
    m.scheme = runs.front().scheme;
    for (const auto& r : runs) {
        const double n = static_cast<double>(r.decisions);
        m.satisfactory_error += r.satisfactory_error * n;
        m.rb_groups += r.rb_groups * n;
        m.throughput += r.throughput * n;
        m.mean_reward += r.mean_reward * n;
        m.evaluations += r.evaluations;
        m.decisions += r.decisions;
        auto append = [](std::vector<double>& dst, const std::vector<double>& src) {
            dst.insert(dst.end(), src.begin(), src.end());
        };
        append(m.episode_error, r.episode_error);
        append(m.episode_groups, r.episode_groups);
        append(m.episode_throughput, r.episode_throughput);
        append(m.episode_reward, r.episode_reward);
        append(m.slot_reward, r.slot_reward);
        append(m.slot_throughput, r.slot_throughput);
        m.training.stages.insert(m.training.stages.end(), r.training.stages.begin(), r.training.stages.end());
        append(m.training.episode_low_return, r.training.episode_low_return);
        append(m.training.episode_high_return, r.training.episode_high_return);
    }
    finalize_metrics(m);
    return m;
}

// ---------------------------------------------------------------------------

std::string format_number(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot write " + path.string());
    f << text;
    if (!f)
        throw IoError("write failed for " + path.string());
}

std::string series_csv(const SchemeMetrics& m, std::span<const std::uint64_t> seeds, int episodes_per_seed)
{
    std::string out = "scheme,seed,episode,satisfactory_error,rb_groups,throughput,mean_reward\n";
    for (std::size_t i = 0; i < m.episode_error.size(); ++i) {
        const std::size_t s = i / static_cast<std::size_t>(episodes_per_seed);
        out += csv_escape(m.scheme) + "," + std::to_string(s < seeds.size() ? seeds[s] : 0) + "," +
               std::to_string(i % static_cast<std::size_t>(episodes_per_seed)) + "," +
               format_number(m.episode_error[i]) + "," + format_number(m.episode_groups[i]) + "," +
               format_number(m.episode_throughput[i]) + "," + format_number(m.episode_reward[i]) + "\n";
    }
    return out;
}

std::string slots_csv(const SchemeMetrics& m, int window)
{
    const auto rew_ma = moving_average(m.slot_reward, window);
    const auto thr_ma = moving_average(m.slot_throughput, window);
    std::string out = "index,reward,throughput,reward_ma,throughput_ma\n";
    for (std::size_t i = 0; i < m.slot_reward.size(); ++i)
        out += std::to_string(i) + "," + format_number(m.slot_reward[i]) + "," +
               format_number(m.slot_throughput[i]) + "," + format_number(rew_ma[i]) + "," +
               format_number(thr_ma[i]) + "\n";
    return out;
}

std::string training_log_csv(const TrainingLog& log)
{
    std::string out = "stage,episode,cycle,mean_low_reward,high_reward,policy_objective,value_loss,tail_loss,"
                      "approx_kl,param_change\n";
    for (std::size_t i = 0; i < log.stages.size(); ++i) {
        const StageLog& s = log.stages[i];
        out += std::to_string(i) + "," + std::to_string(s.episode) + "," + std::to_string(s.cycle) + "," +
               format_number(s.mean_low_reward) + "," + format_number(s.high_reward) + "," +
               format_number(s.policy_objective) + "," + format_number(s.value_loss) + "," +
               format_number(s.tail_loss) + "," + format_number(s.approx_kl) + "," +
               format_number(s.param_change) + "\n";
    }
    return out;
}

json metrics_json(const SchemeMetrics& m)
{
    return {
        {"scheme", m.scheme},
        {"satisfactory_error", m.satisfactory_error},
        {"rb_groups", m.rb_groups},
        {"throughput", m.throughput},
        {"decision_proxy", m.decision_proxy},
        {"mean_reward", m.mean_reward},
        {"evaluations", m.evaluations},
        {"decisions", m.decisions},
        {"training_episodes", m.training.episode_low_return.size()},
    };
}

// ---------------------------------------------------------------------------

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          std::span<const PlotSeries> series)
{
    const double W = 720, H = 420, L = 80, R = 170, Tm = 40, B = 50;
    const double pw = W - L - R, ph = H - Tm - B;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n_max = 1;
    for (const auto& s : series) {
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        n_max = std::max(n_max, s.values.size());
    }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    auto X = [&](double i) { return L + pw * (n_max > 1 ? i / static_cast<double>(n_max - 1) : 0.5); };
    auto Y = [&](double v) { return Tm + ph * (1.0 - (v - lo) / (hi - lo)); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
      << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << Tm + ph << "\" x2=\"" << L + pw << "\" y2=\"" << Tm + ph
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << Tm + ph
      << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        o << "<text x=\"" << L - 6 << "\" y=\"" << fixed(Y(v) + 4, 1) << "\" text-anchor=\"end\">"
          << axis_label(v) << "</text>\n";
        o << "<line x1=\"" << L << "\" y1=\"" << fixed(Y(v), 1) << "\" x2=\"" << L + pw << "\" y2=\""
          << fixed(Y(v), 1) << "\" stroke=\"#ddd\"/>\n";
    }
    o << "<text x=\"" << L << "\" y=\"" << Tm + ph + 18 << "\">0</text>\n";
    o << "<text x=\"" << L + pw << "\" y=\"" << Tm + ph + 18 << "\" text-anchor=\"end\">" << n_max - 1
      << "</text>\n";
    o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << Tm + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << Tm + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& v = series[s].values;
        const char* color = kPalette[s % kPalette.size()];
        // at most ~1500 vertices per line
        const std::size_t stride = std::max<std::size_t>(1, v.size() / 1500);
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < v.size(); i += stride)
            o << fixed(X(static_cast<double>(i)), 1) << "," << fixed(Y(v[i]), 1) << " ";
        o << "\"/>\n";
        const double ly = Tm + 16 + 18.0 * static_cast<double>(s);
        o << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 34 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
        o << "<text x=\"" << L + pw + 40 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[s].label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string svg_bar_chart(const std::string& title, const std::string& y_label, std::span<const std::string> labels,
                          std::span<const double> values)
{
    if (labels.size() != values.size())
        throw InvalidArgument("svg_bar_chart: labels and values differ in length");
    const double W = 640, H = 400, L = 80, R = 20, Tm = 40, B = 70;
    const double pw = W - L - R, ph = H - Tm - B;
    double hi = 0.0;
    for (double v : values)
        hi = std::max(hi, v);
    if (!(hi > 0.0))
        hi = 1.0;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
      << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << Tm + ph << "\" x2=\"" << L + pw << "\" y2=\"" << Tm + ph
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"16\" y=\"" << Tm + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << Tm + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    const double slot = values.empty() ? pw : pw / static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double h = ph * std::max(values[i], 0.0) / hi;
        const double x = L + slot * static_cast<double>(i) + slot * 0.15;
        o << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(Tm + ph - h, 1) << "\" width=\""
          << fixed(slot * 0.7, 1) << "\" height=\"" << fixed(h, 1) << "\" fill=\"" << kPalette[i % kPalette.size()]
          << "\"/>\n";
        o << "<text x=\"" << fixed(x + slot * 0.35, 1) << "\" y=\"" << fixed(Tm + ph - h - 4, 1)
          << "\" text-anchor=\"middle\">" << axis_label(values[i]) << "</text>\n";
        o << "<text x=\"" << fixed(x + slot * 0.35, 1) << "\" y=\"" << Tm + ph + 18
          << "\" text-anchor=\"middle\">" << xml_escape(labels[i]) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

namespace {

std::vector<std::filesystem::path> write_plots(const std::filesystem::path& dir, const std::string& tag,
                                               const std::vector<std::string>& names,
                                               const std::vector<std::vector<double>>& reward_ma,
                                               const std::vector<std::vector<double>>& throughput_ma,
                                               const std::vector<double>& errors, const std::vector<double>& groups)
{
    std::vector<PlotSeries> rew, thr;
    for (std::size_t i = 0; i < names.size(); ++i) {
        rew.push_back({names[i], reward_ma[i]});
        thr.push_back({names[i], throughput_ma[i]});
    }
    std::vector<std::filesystem::path> files{dir / ("reward_" + tag + ".svg"), dir / ("throughput_" + tag + ".svg"),
                                             dir / ("error_" + tag + ".svg"), dir / ("groups_" + tag + ".svg")};
    write_text_file(files[0], svg_line_plot("Moving-average reward (" + tag + ")", "evaluation slot",
                                            "smoothed R_L", rew));
    write_text_file(files[1], svg_line_plot("Moving-average throughput (" + tag + ")", "evaluation slot",
                                            "delivered rate", thr));
    write_text_file(files[2], svg_bar_chart("Satisfactory error (" + tag + ")", "mean |Omega|", names, errors));
    write_text_file(files[3], svg_bar_chart("RB groups used (" + tag + ")", "mean groups per slot", names, groups));
    return files;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    const std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory " + dir.string());

    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.num_seeds; ++i)
        seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));

    const auto rows = standard_weight_rows();
    ExperimentResult res;
    std::string comparison = "demand_unit_mb,scheme,satisfactory_error,rb_groups,throughput,decision_proxy,"
                             "mean_reward,utility_w0,utility_w1,utility_w2,utility_w3\n";
    json blocks = json::array();

    for (double unit : cfg.demand_units_mb) {
        EnvConfig env = cfg.env;
        env.demand.unit = unit * 1e6;
        const std::string tag = unit_tag(unit);
        DemandBlock block;
        block.demand_unit_mb = unit;

        for (const std::string& name : cfg.schemes) {
            const SchemeId id = SchemeId::parse(name);
            std::vector<SchemeMetrics> runs;
            for (std::uint64_t s : seeds)
                runs.push_back(run_scheme(id, env, cfg.agent, cfg.baselines, s,
                                          {cfg.episodes, cfg.train_episodes, cfg.epsilon}));
            SchemeMetrics merged = merge_metrics(runs);
            merged.scheme = name;

            const auto series_path = dir / ("series_" + name + "_" + tag + ".csv");
            write_text_file(series_path, series_csv(merged, seeds, cfg.episodes));
            res.files.push_back(series_path);
            const auto slots_path = dir / ("slots_" + name + "_" + tag + ".csv");
            write_text_file(slots_path, slots_csv(merged, cfg.moving_average_window));
            res.files.push_back(slots_path);
            if (id.beam == BeamStrategy::learned) {
                std::string text;
                for (std::size_t i = 0; i < runs.size(); ++i) {
                    std::string part = training_log_csv(runs[i].training);
                    // prefix each row with its seed; keep one header
                    std::stringstream ss(part);
                    std::string line;
                    bool header = true;
                    while (std::getline(ss, line)) {
                        if (header) {
                            if (i == 0)
                                text += "seed," + line + "\n";
                            header = false;
                            continue;
                        }
                        text += std::to_string(seeds[i]) + "," + line + "\n";
                    }
                }
                const auto train_path = dir / ("training_" + name + "_" + tag + ".csv");
                write_text_file(train_path, text);
                res.files.push_back(train_path);
            }
            block.schemes.push_back(std::move(merged));
        }

        std::vector<UtilityInputs> inputs;
        for (const auto& m : block.schemes)
            inputs.push_back({m.satisfactory_error, m.rb_groups, m.decision_proxy});
        for (const auto& w : rows)
            block.utilities.push_back(inputs.size() >= 2 ? weighted_utility(inputs, w)
                                                         : std::vector<double>(inputs.size(), 0.0));

        json jb = {{"demand_unit_mb", unit}};
        json schemes = json::array();
        for (std::size_t i = 0; i < block.schemes.size(); ++i) {
            const SchemeMetrics& m = block.schemes[i];
            comparison += format_number(unit) + "," + csv_escape(m.scheme) + "," +
                          format_number(m.satisfactory_error) + "," + format_number(m.rb_groups) + "," +
                          format_number(m.throughput) + "," + format_number(m.decision_proxy) + "," +
                          format_number(m.mean_reward);
            for (const auto& u : block.utilities)
                comparison += "," + format_number(u[i]);
            comparison += "\n";
            schemes.push_back(metrics_json(m));
        }
        jb["schemes"] = schemes;
        json utils = json::array();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            json values = json::object();
            for (std::size_t i = 0; i < block.schemes.size(); ++i)
                values[block.schemes[i].scheme] = block.utilities[r][i];
            utils.push_back({{"weights", rows[r].w}, {"utility", values}});
        }
        jb["utilities"] = utils;
        blocks.push_back(jb);

        std::vector<std::string> names;
        std::vector<std::vector<double>> rew, thr;
        std::vector<double> errs, grps;
        for (const auto& m : block.schemes) {
            names.push_back(m.scheme);
            rew.push_back(moving_average(m.slot_reward, cfg.moving_average_window));
            thr.push_back(moving_average(m.slot_throughput, cfg.moving_average_window));
            errs.push_back(m.satisfactory_error);
            grps.push_back(m.rb_groups);
        }
        for (auto& f : write_plots(dir, tag, names, rew, thr, errs, grps))
            res.files.push_back(f);
        res.blocks.push_back(std::move(block));
    }

    const auto comparison_path = dir / "comparison.csv";
    write_text_file(comparison_path, comparison);
    res.files.push_back(comparison_path);

    json summary = {
        {"metadata",
         {{"decision_proxy", "beam-gain / SNR evaluations per slot decision"},
          {"satisfactory_error", "mean |Omega| per slot, bit/s"},
          {"throughput", "mean min(served rate, demand) per slot, bit/s"},
          {"rb_groups", "mean RB groups used per slot"},
          {"utility", "min-max normalised (error, groups, decision proxy) across schemes, weighted sum, lower is "
                      "better"},
          {"seeds", seeds}}},
        {"config", to_json(cfg)},
        {"results", blocks},
    };
    const auto summary_path = dir / "summary.json";
    write_text_file(summary_path, summary.dump(2) + "\n");
    res.files.push_back(summary_path);
    return res;
}

std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir)
{
    const auto rows = read_csv(dir / "comparison.csv");
    if (rows.empty())
        throw IoError("comparison.csv is empty");
    // demand unit -> (scheme names, errors, groups)
    std::map<double, std::tuple<std::vector<std::string>, std::vector<double>, std::vector<double>>> by_unit;
    std::vector<double> unit_order;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 4)
            throw IoError("comparison.csv: malformed row " + std::to_string(i));
        const double unit = std::stod(r[0]);
        if (!by_unit.count(unit))
            unit_order.push_back(unit);
        auto& [names, errs, grps] = by_unit[unit];
        names.push_back(r[1]);
        errs.push_back(std::stod(r[2]));
        grps.push_back(std::stod(r[3]));
    }
    std::vector<std::filesystem::path> files;
    for (double unit : unit_order) {
        const auto& [names, errs, grps] = by_unit[unit];
        const std::string tag = unit_tag(unit);
        std::vector<std::vector<double>> rew, thr;
        for (const auto& name : names) {
            const auto slot_rows = read_csv(dir / ("slots_" + name + "_" + tag + ".csv"));
            std::vector<double> r, t;
            for (std::size_t i = 1; i < slot_rows.size(); ++i) {
                if (slot_rows[i].size() < 5)
                    throw IoError("slots csv: malformed row");
                r.push_back(std::stod(slot_rows[i][3]));
                t.push_back(std::stod(slot_rows[i][4]));
            }
            rew.push_back(std::move(r));
            thr.push_back(std::move(t));
        }
        for (auto& f : write_plots(dir, tag, names, rew, thr, errs, grps))
            files.push_back(f);
    }
    return files;
}

} // namespace ntn
