#pragma once

// Experiment orchestration: JSON configuration, metrics, the comparison sweep
// and its CSV / JSON / SVG outputs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntn/baselines.hpp"

namespace ntn {

/// Raised for configuration problems; the message starts with the offending JSON path.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    EnvConfig env;
    AgentConfig agent;
    BaselineConfig baselines;
    std::vector<std::string> schemes{"bfs-greedy", "pbu-greedy", "bfs-mab", "pbu-mab", "proposed"};
    int episodes = 3;        // evaluation episodes per seed
    int train_episodes = 200; // learned schemes
    double epsilon = 0.0;
    std::uint64_t seed = 1;
    int num_seeds = 1; // seeds seed, seed+1, ...
    std::vector<double> demand_units_mb{10.0, 15.0, 20.0};
    int moving_average_window = 50;
    std::string output_dir = "out";

    void validate() const;
};

/// The reduced environment used by tests and desk-scale runs:
/// 12 RBs in 3 groups, T = 10, 6 cycles, 4x4 transmit and 2x2 receive arrays.
EnvConfig desk_env_config();

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Mean |Omega| over the trace.
double satisfactory_error(std::span<const SlotRecord> trace);

/// Trailing mean over min(window, index + 1) entries.
std::vector<double> moving_average(std::span<const double> series, int window);

struct UtilityWeights {
    std::array<double, 3> w{1.0 / 3, 1.0 / 3, 1.0 / 3}; // satisfactory error, RB groups, decision proxy
    void validate() const;
};

/// Weight rows of the comparison table.
std::vector<UtilityWeights> standard_weight_rows();

struct UtilityInputs {
    double satisfactory_error = 0.0;
    double rb_groups = 0.0;
    double decision_proxy = 0.0;
};

/// Per-metric min-max normalisation across schemes, then the weighted sum. Lower is better.
std::vector<double> weighted_utility(std::span<const UtilityInputs> schemes, const UtilityWeights& w);

/// Mean of several per-seed metric sets; series are concatenated in seed order.
SchemeMetrics merge_metrics(std::span<const SchemeMetrics> runs);

struct DemandBlock {
    double demand_unit_mb = 0.0;
    std::vector<SchemeMetrics> schemes;
    std::vector<std::vector<double>> utilities; // [weight row][scheme]
};

struct ExperimentResult {
    std::vector<DemandBlock> blocks;
    std::vector<std::filesystem::path> files;
};

/// Runs every configured scheme over every seed and demand unit and writes
/// the artifact bundle into cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Output helpers, exposed for the CLI and tests.
std::string format_number(double x); // shortest text that round-trips
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string series_csv(const SchemeMetrics& m, std::span<const std::uint64_t> seeds, int episodes_per_seed);
std::string slots_csv(const SchemeMetrics& m, int window);
std::string training_log_csv(const TrainingLog& log);
nlohmann::json metrics_json(const SchemeMetrics& m);

struct PlotSeries {
    std::string label;
    std::vector<double> values;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          std::span<const PlotSeries> series);
std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          std::span<const std::string> labels, std::span<const double> values);

/// Re-renders the SVG plots from the slot and comparison CSVs in `dir`.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir);

} // namespace ntn
