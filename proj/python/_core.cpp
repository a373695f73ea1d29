#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ntn/expcli.hpp"

namespace py = pybind11;
using namespace ntn;
using nlohmann::json;

namespace {

ExperimentConfig config_from(const std::string& text) { return parse_experiment_config(json::parse(text)); }

py::dict metrics_dict(const SchemeMetrics& m)
{
    py::dict d;
    d["scheme"] = m.scheme;
    d["satisfactory_error"] = m.satisfactory_error;
    d["rb_groups"] = m.rb_groups;
    d["throughput"] = m.throughput;
    d["decision_proxy"] = m.decision_proxy;
    d["mean_reward"] = m.mean_reward;
    d["evaluations"] = m.evaluations;
    d["decisions"] = m.decisions;
    d["episode_error"] = m.episode_error;
    d["episode_groups"] = m.episode_groups;
    d["episode_throughput"] = m.episode_throughput;
    d["slot_reward"] = m.slot_reward;
    d["slot_throughput"] = m.slot_throughput;
    d["training_low_return"] = m.training.episode_low_return;
    d["training_high_return"] = m.training.episode_high_return;
    return d;
}

py::dict slot_dict(const SlotRecord& r)
{
    py::dict d;
    d["slot"] = r.slot;
    d["cycle"] = r.cycle;
    d["demand"] = r.demand;
    d["groups"] = r.groups;
    d["groups_used"] = r.groups_used;
    d["served"] = r.served;
    d["omega"] = r.omega;
    d["reward"] = r.reward;
    d["rb_rate"] = r.rb_rate;
    d["tx"] = py::make_tuple(r.tx.theta, r.tx.phi);
    d["rx"] = py::make_tuple(r.rx.theta, r.rx.phi);
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Two-time-scale LEO downlink simulator, collaborative agents and comparison schemes.";

    auto invalid = py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", invalid.ptr());
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<InvalidState>(m, "InvalidState", PyExc_RuntimeError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("_normalize_config", [](const std::string& text) { return to_json(config_from(text)).dump(); });
    m.def("_desk_env_config", [] {
        ExperimentConfig c;
        c.env = desk_env_config();
        return to_json(c)["env"].dump();
    });

    m.def(
        "steering",
        [](int nx, int ny, double spacing, double wavelength, std::pair<double, double> a) {
            return ComplexVec(upa_steering(nx, ny, spacing, wavelength, {a.first, a.second}));
        },
        py::arg("nx"), py::arg("ny"), py::arg("spacing"), py::arg("wavelength"),
          py::arg("angles"));
    m.def("rate", &rate, py::arg("snr"), py::arg("bandwidth"));
    m.def(
        "greedy_alloc", [](const std::vector<double>& r, double d) { return greedy_alloc(r, d); }, py::arg("rates"),
        py::arg("demand"));
    m.def(
        "moving_average", [](const std::vector<double>& s, int w) { return moving_average(s, w); },
        py::arg("series"), py::arg("window"));
    m.def(
        "weighted_utility",
        [](const std::vector<std::array<double, 3>>& rows, const std::array<double, 3>& w) {
            std::vector<UtilityInputs> in;
            for (const auto& r : rows)
                in.push_back({r[0], r[1], r[2]});
            return weighted_utility(in, UtilityWeights{w});
        },
        py::arg("metrics"), py::arg("weights"));

    m.def(
        "_run_scheme",
        [](const std::string& name, const std::string& cfg_text, std::uint64_t seed, int episodes,
           int train_episodes) {
            const ExperimentConfig c = config_from(cfg_text);
            SchemeRunOptions o;
            o.episodes = episodes;
            o.train_episodes = train_episodes;
            o.epsilon = c.epsilon;
            SchemeMetrics r;
            {
                py::gil_scoped_release release;
                r = run_scheme(SchemeId::parse(name), c.env, c.agent, c.baselines, seed, o);
            }
            return metrics_dict(r);
        },
        py::arg("scheme"), py::arg("config"), py::arg("seed"), py::arg("episodes"), py::arg("train_episodes"));

    m.def(
        "_run_experiment",
        [](const std::string& cfg_text) {
            const ExperimentConfig c = config_from(cfg_text);
            std::vector<std::string> files;
            {
                py::gil_scoped_release release;
                for (const auto& f : run_experiment(c).files)
                    files.push_back(f.string());
            }
            return files;
        },
        py::arg("config"));

    py::class_<Environment>(m, "_Environment")
        .def(py::init([](const std::string& env_text) {
            return Environment(config_from(json{{"env", json::parse(env_text)}}.dump()).env);
        }))
        .def("reset", &Environment::reset, py::arg("seed"))
        .def_property_readonly("slot", &Environment::slot)
        .def_property_readonly("cycle", &Environment::cycle)
        .def_property_readonly("done", &Environment::done)
        .def_property_readonly("at_cycle_boundary", &Environment::at_cycle_boundary)
        .def_property_readonly("num_groups", [](const Environment& e) { return e.pool().num_groups(); })
        .def_property_readonly("num_offsets", [](const Environment& e) { return e.config().offsets.size(); })
        .def_property_readonly("current_demand", &Environment::current_demand)
        .def(
            "step_high",
            [](Environment& e, int theta, int phi, std::uint32_t groups) {
                const HighStepResult r = e.step_high({{theta, phi}, groups});
                py::dict d;
                d["state"] = r.state.to_vector();
                d["reward"] = r.has_reward ? py::cast(r.reward) : py::none();
                return d;
            },
            py::arg("theta"), py::arg("phi"), py::arg("groups"))
        .def(
            "step_low",
            [](Environment& e, int theta, int phi, std::uint32_t groups) {
                const LowStepResult r = e.step_low({{theta, phi}, groups});
                py::dict d;
                d["state"] = r.state.to_vector();
                d["reward"] = r.reward;
                d["omega"] = r.omega;
                d["cycle_complete"] = r.cycle_complete;
                d["done"] = r.done;
                return d;
            },
            py::arg("theta"), py::arg("phi"), py::arg("groups"))
        .def("final_high_reward", [](const Environment& e) { return e.cycle_outcome().reward; })
        .def("trace", [](const Environment& e) {
            py::list out;
            for (const auto& r : e.trace())
                out.append(slot_dict(r));
            return out;
        });
}
