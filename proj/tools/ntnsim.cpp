#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ntn/expcli.hpp"

namespace fs = std::filesystem;
using namespace ntn;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string scheme;
    std::optional<int> episodes;
};

ExperimentConfig load(const Options& o)
{
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
    if (o.seed)
        cfg.seed = *o.seed;
    if (!o.out.empty())
        cfg.output_dir = o.out;
    cfg.validate();
    return cfg;
}

fs::path prepare_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory " + dir);
    return dir;
}

void print_metrics(const SchemeMetrics& m)
{
    std::printf("%-18s error %.4g b/s  groups %.3f  throughput %.4g b/s  proxy %.1f evals/decision\n",
                m.scheme.c_str(), m.satisfactory_error, m.rb_groups, m.throughput, m.decision_proxy);
}

int cmd_validate(const Options& o)
{
    const ExperimentConfig cfg = load(o);
    std::printf("config ok: %zu schemes, %d seed(s), %zu demand unit(s), %d slots/episode\n", cfg.schemes.size(),
                cfg.num_seeds, cfg.demand_units_mb.size(), cfg.env.time.total_slots);
    return 0;
}

int cmd_train(const Options& o)
{
    ExperimentConfig cfg = load(o);
    const SchemeId id = SchemeId::parse(o.scheme.empty() ? "proposed" : o.scheme);
    if (id.beam != BeamStrategy::learned)
        throw ConfigError("--scheme: train expects proposed, independent or single-estimation");
    const int episodes = o.episodes.value_or(cfg.train_episodes);
    const fs::path dir = prepare_dir(cfg.output_dir);

    CollaborativeTrainer trainer(cfg.env, apply_ablation(cfg.agent, id.ablation), cfg.seed);
    const TrainingLog log = trainer.train(episodes, cfg.epsilon);
    write_text_file(dir / "training.csv", training_log_csv(log));
    trainer.save_checkpoint(dir / "checkpoint.json");

    SchemeMetrics m;
    m.scheme = id.name();
    for (int i = 0; i < cfg.episodes; ++i) {
        const auto r = trainer.run_episode(evaluation_episode_seed(cfg.seed, i), false, ActMode::greedy);
        accumulate_trace(m, r.trace, r.evaluations);
    }
    finalize_metrics(m);
    write_text_file(dir / "metrics.json", metrics_json(m).dump(2) + "\n");
    std::printf("trained %zu episode(s)%s\n", log.episode_low_return.size(), log.converged ? " (converged)" : "");
    print_metrics(m);
    return 0;
}

int cmd_baseline(const Options& o)
{
    ExperimentConfig cfg = load(o);
    if (o.episodes)
        cfg.episodes = *o.episodes;
    cfg.validate();
    const std::vector<std::string> names =
        o.scheme.empty() ? std::vector<std::string>{"bfs-greedy", "pbu-greedy", "bfs-mab", "pbu-mab"}
                         : std::vector<std::string>{o.scheme};
    const fs::path dir = prepare_dir(cfg.output_dir);
    const std::vector<std::uint64_t> seeds{cfg.seed};
    nlohmann::json all = nlohmann::json::array();
    for (const auto& name : names) {
        const SchemeId id = SchemeId::parse(name);
        SchemeMetrics m = run_scheme(id, cfg.env, cfg.agent, cfg.baselines, cfg.seed,
                                     {cfg.episodes, cfg.train_episodes, cfg.epsilon});
        m.scheme = name;
        write_text_file(dir / ("series_" + name + ".csv"), series_csv(m, seeds, cfg.episodes));
        write_text_file(dir / ("slots_" + name + ".csv"), slots_csv(m, cfg.moving_average_window));
        all.push_back(metrics_json(m));
        print_metrics(m);
    }
    write_text_file(dir / "metrics.json", all.dump(2) + "\n");
    return 0;
}

int cmd_compare(const Options& o)
{
    ExperimentConfig cfg = load(o);
    if (o.episodes)
        cfg.episodes = *o.episodes;
    if (!o.scheme.empty())
        cfg.schemes = {o.scheme};
    cfg.validate();
    const ExperimentResult res = run_experiment(cfg);
    for (const auto& b : res.blocks) {
        std::printf("demand unit %g Mb\n", b.demand_unit_mb);
        for (std::size_t i = 0; i < b.schemes.size(); ++i) {
            std::printf("  ");
            print_metrics(b.schemes[i]);
            std::printf("  %-18s utility", "");
            for (const auto& row : b.utilities)
                std::printf(" %.4f", row[i]);
            std::printf("\n");
        }
    }
    std::printf("wrote %zu file(s) to %s\n", res.files.size(), cfg.output_dir.c_str());
    return 0;
}

int cmd_plot(const Options& o)
{
    const std::string dir = o.out.empty() ? load(o).output_dir : o.out;
    const auto files = render_plots(dir);
    std::printf("rendered %zu plot(s) in %s\n", files.size(), dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Two-tier beam and RB-group scheduling simulator for a LEO downlink"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "base seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--scheme", o.scheme, "scheme id");
        sub->add_option("--episodes", o.episodes, "episode count")->check(CLI::PositiveNumber);
    };
    auto* validate = app.add_subcommand("validate", "check a config file");
    auto* train = app.add_subcommand("train", "train the learned scheme and evaluate it");
    auto* baseline = app.add_subcommand("baseline", "run separated-optimisation schemes");
    auto* compare = app.add_subcommand("compare", "full comparison sweep over schemes and demand units");
    auto* plot = app.add_subcommand("plot", "re-render plots from CSV output");
    for (auto* s : {validate, train, baseline, compare, plot})
        common(s);
    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate)
            return cmd_validate(o);
        if (*train)
            return cmd_train(o);
        if (*baseline)
            return cmd_baseline(o);
        if (*compare)
            return cmd_compare(o);
        return cmd_plot(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
