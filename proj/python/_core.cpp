#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "codesign/harness.hpp"

namespace py = pybind11;
using namespace codesign;

namespace {

std::vector<KeyValue> to_keys(const py::dict& d) {
  std::vector<KeyValue> out;
  for (const auto& [k, v] : d) {
    std::string value;
    if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& x : v) value += (value.empty() ? "" : ",") + py::str(x).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    out.push_back({py::str(k).cast<std::string>(), value, 0});
  }
  return out;
}

py::dict obs_dict(const Observation& o) {
  py::dict d;
  d["task"] = o.task;
  d["phase"] = o.phase == Phase::design ? "design" : "control";
  d["design"] = std::vector<double>{o.design_echo.lengths[0], o.design_echo.lengths[1], o.design_echo.lengths[2],
                                    o.design_echo.angles[0], o.design_echo.angles[1]};
  return d;
}

py::tuple step_tuple(const StepResult& r) {
  py::dict info;
  info["success"] = r.info.success;
  info["success_credit"] = r.info.success_credit;
  info["d_used"] = r.info.d_used;
  info["c_used"] = r.info.c_used;
  info["task_reward"] = r.info.task_reward;
  info["tradeoff_reward"] = r.info.tradeoff_reward;
  return py::make_tuple(obs_dict(r.observation), r.reward, r.done, info);
}

DesignVector design_of(const std::vector<double>& lengths, const std::vector<double>& angles) {
  if (lengths.size() != kNumLinks || angles.size() != kNumJoints) {
    throw std::invalid_argument("a design has 3 lengths and 2 angles");
  }
  DesignVector d;
  std::copy(lengths.begin(), lengths.end(), d.lengths.begin());
  std::copy(angles.begin(), angles.end(), d.angles.begin());
  return d;
}

// Owns its config so the environment never outlives it.
class PyEnv {
 public:
  PyEnv(const std::string& task, const py::dict& overrides) {
    cfg_ = TaskConfig::defaults(parse_task(task));
    for (const auto& kv : to_keys(overrides)) {
      if (!apply_task_setting(cfg_, kv.key, kv.value)) throw std::invalid_argument("unknown task key '" + kv.key + "'");
    }
    cfg_.validate();
    env_ = Environment::make(cfg_);
  }

  py::dict reset(const std::vector<double>& goal, std::uint64_t seed) {
    return obs_dict(env_->reset(goal_from_values(cfg_.task, goal), seed));
  }
  py::tuple step_design(const std::vector<double>& action) { return step_tuple(env_->step_design_action(action)); }
  py::tuple step_control(const std::vector<double>& action) { return step_tuple(env_->step_control(action)); }
  int control_dim() const { return env_->control_dim(); }
  std::vector<double> sample_goal(std::uint64_t seed) const {
    Rng rng(seed);
    return goal_values(codesign::sample_goal(cfg_, rng));
  }

 private:
  TaskConfig cfg_;
  std::unique_ptr<Environment> env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tool designer/controller co-design: environments, geometry export and experiment commands.";
  m.attr("__version__") = code_version();

  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("tradeoff_reward",
        [](double k, double alpha, double d_used, double c_used, double d_max, double c_max) {
          return tradeoff_reward({k, alpha, d_max, c_max}, d_used, c_used);
        },
        py::arg("k"), py::arg("alpha"), py::arg("d_used"), py::arg("c_used"), py::arg("d_max"), py::arg("c_max"));

  m.def("export_stl",
        [](const std::vector<double>& lengths, const std::vector<double>& angles, double thickness, double radius) {
          return py::bytes(export_stl(build_tool(design_of(lengths, angles), radius), thickness));
        },
        py::arg("lengths"), py::arg("angles"), py::arg("thickness") = 0.5, py::arg("radius") = kToolRadius,
        "Binary STL of a three-link tool.");

  py::class_<PyEnv>(m, "Environment")
      .def(py::init<const std::string&, const py::dict&>(), py::arg("task"), py::arg("overrides") = py::dict())
      .def("reset", &PyEnv::reset, py::arg("goal"), py::arg("seed") = 0)
      .def("step_design", &PyEnv::step_design, py::arg("action"))
      .def("step_control", &PyEnv::step_control, py::arg("action"))
      .def("sample_goal", &PyEnv::sample_goal, py::arg("seed"))
      .def_property_readonly("control_dim", &PyEnv::control_dim);

  py::class_<Cma>(m, "Cma")
      .def(py::init([](const std::vector<double>& mean, int population, double sigma0) {
             CmaOptions o;
             o.population = population;
             o.sigma0 = sigma0;
             return Cma(Eigen::Map<const VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())), o);
           }),
           py::arg("mean"), py::arg("population") = 24, py::arg("sigma0") = 0.1)
      .def("ask",
           [](const Cma& c, std::uint64_t seed) {
             Rng rng(seed);
             std::vector<std::vector<double>> out;
             for (const VectorXd& v : c.ask(rng)) out.emplace_back(v.data(), v.data() + v.size());
             return out;
           },
           py::arg("seed"))
      .def("tell",
           [](Cma& c, const std::vector<std::vector<double>>& cands, const std::vector<double>& fitness) {
             std::vector<VectorXd> v;
             for (const auto& x : cands) v.push_back(Eigen::Map<const VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
             return c.tell(v, fitness);
           })
      .def_property_readonly("mean", [](const Cma& c) { return std::vector<double>(c.mean().data(), c.mean().data() + c.dim()); })
      .def_property_readonly("sigma", &Cma::sigma)
      .def_property_readonly("best_fitness", &Cma::best_fitness)
      .def_property_readonly("generation", &Cma::generation);

  // Experiment commands take the same keys as the CLI.
  m.def("train", [](const py::dict& config) { return cmd_train(load_experiment_config({}, to_keys(config))).dir; },
        py::arg("config"));
  m.def("evaluate",
        [](const py::dict& config, const std::filesystem::path& checkpoint) {
          const EvalReport r = cmd_eval(load_experiment_config({}, to_keys(config)), checkpoint);
          return r.to_json().dump();
        },
        py::arg("config"), py::arg("checkpoint"), "Runs the eval command; returns the report as a JSON string.");
  m.def("export_tool",
        [](const py::dict& config, const std::filesystem::path& checkpoint, const std::vector<double>& goal,
           const std::string& name) {
          const ExportResult r = cmd_export_tool(load_experiment_config({}, to_keys(config)), checkpoint, goal, name);
          return py::make_tuple(r.stl, r.json);
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("goal"), py::arg("name") = "tool");
}
