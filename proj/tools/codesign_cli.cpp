// codesign: train and evaluate tool designer/controller agents.
//
//   codesign train --task catch_balls --seeds 0,1,2 --out runs/catch
//   codesign eval --checkpoint runs/push/seed_0/checkpoint.json --out eval/push
//   codesign export-tool --checkpoint ckpt.json --goal 18,17
//
// Any config key can be passed as --key value (or --key=value); dashes in
// keys are read as underscores. Precedence: preset < --config file < flags.

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "codesign/harness.hpp"

using namespace codesign;

namespace {

std::vector<KeyValue> extra_keys(const std::vector<std::string>& args) {
  std::vector<KeyValue> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw std::invalid_argument("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw std::invalid_argument("missing value for '" + a + "'");
      value = args[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    out.push_back({key, value, 0});
  }
  return out;
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

ExperimentConfig resolve(const Common& c, CLI::App* sub) {
  std::vector<KeyValue> file;
  if (!c.config.empty()) file = read_key_values(c.config);
  std::vector<KeyValue> cli;
  for (const std::string& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    cli.push_back({s.substr(0, eq), s.substr(eq + 1), 0});
  }
  for (auto& kv : extra_keys(sub->remaining())) cli.push_back(std::move(kv));
  return load_experiment_config(file, cli);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "flat key = value config file");
  sub->add_option("--set", c.sets, "key=value override (repeatable)");
  sub->allow_extras();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tool designer/controller co-design experiments"};
  app.require_subcommand(1);

  Common c_train, c_eval, c_ft, c_alpha, c_export;
  std::string checkpoint, goal, name = "tool", output = "compare.csv";
  std::vector<std::string> runs;

  auto* train = app.add_subcommand("train", "train one method over all seeds");
  add_common(train, c_train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over a goal grid");
  add_common(eval, c_eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint or policy JSON")->required();

  auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on target goals vs training from scratch");
  add_common(ft, c_ft);
  ft->add_option("--checkpoint", checkpoint, "trainer checkpoint JSON")->required();

  auto* alpha = app.add_subcommand("alpha-sweep", "train one agent per tradeoff alpha and report usage ratios");
  add_common(alpha, c_alpha);

  auto* exp = app.add_subcommand("export-tool", "write the designed tool for a goal as STL + JSON");
  add_common(exp, c_export);
  exp->add_option("--checkpoint", checkpoint, "checkpoint or policy JSON")->required();
  exp->add_option("--goal", goal, "goal values, comma separated")->required();
  exp->add_option("--name", name, "output file stem");

  auto* cmp = app.add_subcommand("compare", "stack aggregate evaluation curves of several runs");
  cmp->add_option("--runs", runs, "run directories written by train")->required();
  cmp->add_option("--output", output, "output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const ExperimentConfig cfg = resolve(c_train, train);
      const TrainArtifacts a = cmd_train(cfg);
      std::cout << "wrote " << a.dir.string() << "\n";
    } else if (eval->parsed()) {
      ExperimentConfig cfg = resolve(c_eval, eval);
      const EvalReport r = cmd_eval(cfg, checkpoint);
      std::cout << "training " << r.training.count << " goals, return " << r.training.mean_return << "\n"
                << "cutout   " << r.cutout.count << " goals, return " << r.cutout.mean_return << "\n"
                << "outside  " << r.outside.count << " goals, return " << r.outside.mean_return << "\n";
    } else if (ft->parsed()) {
      const ExperimentConfig cfg = resolve(c_ft, ft);
      cmd_finetune(cfg, checkpoint);
      std::cout << "wrote " << resolve_output(cfg.out).string() << "\n";
    } else if (alpha->parsed()) {
      const ExperimentConfig cfg = resolve(c_alpha, alpha);
      for (const AlphaRow& r : cmd_alpha_sweep(cfg)) {
        std::cout << "alpha " << r.alpha << " seed " << r.seed << " ratio " << r.ratio << "\n";
      }
    } else if (exp->parsed()) {
      const ExperimentConfig cfg = resolve(c_export, exp);
      const std::vector<double> g = parse_numbers("goal", goal);
      const ExportResult r = cmd_export_tool(cfg, checkpoint, g, name);
      std::cout << "wrote " << r.stl.string() << " and " << r.json.string() << "\n";
    } else if (cmp->parsed()) {
      std::vector<std::filesystem::path> paths(runs.begin(), runs.end());
      cmd_compare(paths, output);
      std::cout << "wrote " << output << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
