#include "codesign/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace codesign {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::istream& is) {
  std::vector<KeyValue> out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(n) + ": expected 'key = value'");
    }
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
    if (kv.key.empty()) throw std::invalid_argument("config line " + std::to_string(n) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path.string());
  return parse_key_values(is);
}

double parse_number(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a number");
  }
  return d;
}

std::vector<double> parse_numbers(const std::string& key, const std::string& value) {
  std::string v = trim(value);
  if (!v.empty() && (v.front() == '(' || v.front() == '[')) v.erase(0, 1);
  if (!v.empty() && (v.back() == ')' || v.back() == ']')) v.pop_back();
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(key, item));
  return out;
}

namespace {

using Pair = std::array<double, 2>;
using Triple = std::array<double, 3>;
using TaskField = std::variant<int TaskConfig::*, double TaskConfig::*, Vec2 TaskConfig::*, Pair TaskConfig::*,
                               Triple TaskConfig::*, Rect TaskConfig::*>;

const std::vector<std::pair<std::string, TaskField>>& task_fields() {
  static const std::vector<std::pair<std::string, TaskField>> f = {
      {"max_episode_steps", &TaskConfig::max_episode_steps},
      {"slack_reward", &TaskConfig::slack_reward},
      {"tool_position_init", &TaskConfig::tool_position_init},
      {"tool_length_init", &TaskConfig::tool_length_init},
      {"tool_length_ratio", &TaskConfig::tool_length_ratio},
      {"tool_angle_init", &TaskConfig::tool_angle_init},
      {"tool_angle_ratio", &TaskConfig::tool_angle_ratio},
      {"tool_angle_scale", &TaskConfig::tool_angle_scale},
      {"control_steps_per_action", &TaskConfig::control_steps_per_action},
      {"tradeoff_k", &TaskConfig::tradeoff_k},
      {"tradeoff_alpha", &TaskConfig::tradeoff_alpha},
      {"success_reward", &TaskConfig::success_reward},
      {"max_tool_speed", &TaskConfig::max_tool_speed},
      {"max_tool_angular_speed", &TaskConfig::max_tool_angular_speed},
      {"tool_radius", &TaskConfig::tool_radius},
      {"push_goal_region", &TaskConfig::push_goal_region},
      {"puck_start", &TaskConfig::puck_start},
      {"puck_radius", &TaskConfig::puck_radius},
      {"puck_damping", &TaskConfig::puck_damping},
      {"push_shaping_weight", &TaskConfig::push_shaping_weight},
      {"push_success_distance", &TaskConfig::push_success_distance},
      {"push_success_speed", &TaskConfig::push_success_speed},
      {"push_friction", &TaskConfig::push_friction},
      {"ball_radius", &TaskConfig::ball_radius},
      {"catch_spawn_x", &TaskConfig::catch_spawn_x},
      {"catch_spawn_height", &TaskConfig::catch_spawn_height},
      {"catch_tool_x_range", &TaskConfig::catch_tool_x_range},
      {"catch_friction", &TaskConfig::catch_friction},
      {"catch_speed_tolerance", &TaskConfig::catch_speed_tolerance},
      {"catch_hold_steps", &TaskConfig::catch_hold_steps},
      {"scoop_ball_count", &TaskConfig::scoop_ball_count},
      {"scoop_ball_radius", &TaskConfig::scoop_ball_radius},
      {"scoop_max_goal", &TaskConfig::scoop_max_goal},
      {"scoop_floor_y", &TaskConfig::scoop_floor_y},
      {"scoop_rim_height", &TaskConfig::scoop_rim_height},
      {"scoop_container_x", &TaskConfig::scoop_container_x},
      {"scoop_friction", &TaskConfig::scoop_friction},
      {"scoop_settle_steps", &TaskConfig::scoop_settle_steps},
  };
  return f;
}

std::vector<double> expect_size(const std::string& key, std::vector<double> v, std::size_t n) {
  if (v.size() != n) {
    throw std::invalid_argument("config key '" + key + "': expected " + std::to_string(n) + " values, got " +
                                std::to_string(v.size()));
  }
  return v;
}

int to_int(const std::string& key, double d) {
  if (d != std::floor(d)) throw std::invalid_argument("config key '" + key + "': expected an integer");
  return static_cast<int>(d);
}

void set_task_field(TaskConfig& cfg, const std::string& key, const TaskField& field, const std::vector<double>& v) {
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, int>) {
          cfg.*member = to_int(key, expect_size(key, v, 1)[0]);
        } else if constexpr (std::is_same_v<T, double>) {
          cfg.*member = expect_size(key, v, 1)[0];
        } else if constexpr (std::is_same_v<T, Vec2>) {
          const auto x = expect_size(key, v, 2);
          cfg.*member = Vec2(x[0], x[1]);
        } else if constexpr (std::is_same_v<T, Pair>) {
          const auto x = expect_size(key, v, 2);
          cfg.*member = {x[0], x[1]};
        } else if constexpr (std::is_same_v<T, Triple>) {
          const auto x = expect_size(key, v, 3);
          cfg.*member = {x[0], x[1], x[2]};
        } else {
          const auto x = expect_size(key, v, 4);
          cfg.*member = Rect{x[0], x[1], x[2], x[3]};
        }
      },
      field);
}

nlohmann::json get_task_field(const TaskConfig& cfg, const TaskField& field) {
  return std::visit(
      [&](auto member) -> nlohmann::json {
        using T = std::remove_cvref_t<decltype(cfg.*member)>;
        const T& v = cfg.*member;
        if constexpr (std::is_same_v<T, int> || std::is_same_v<T, double>) {
          return v;
        } else if constexpr (std::is_same_v<T, Vec2>) {
          return {v.x(), v.y()};
        } else if constexpr (std::is_same_v<T, Pair> || std::is_same_v<T, Triple>) {
          return v;
        } else {
          return {v.x0, v.y0, v.x1, v.y1};
        }
      },
      field);
}

}  // namespace

bool apply_task_setting(TaskConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "task") {
    // Switching task resets every task field to that task's defaults.
    const Task t = parse_task(trim(value));
    if (t != cfg.task) cfg = TaskConfig::defaults(t);
    return true;
  }
  if (key == "cutout_fraction") {
    cfg.cutout = CutoutSpec::centered_pair(cfg.push_goal_region, parse_number(key, value));
    return true;
  }
  for (const auto& [name, field] : task_fields()) {
    if (name == key) {
      set_task_field(cfg, key, field, parse_numbers(key, value));
      return true;
    }
  }
  return false;
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = trim(value);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a boolean");
}

std::vector<int> parse_ints(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (double d : parse_numbers(key, value)) out.push_back(to_int(key, d));
  return out;
}

}  // namespace

bool apply_train_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto num = [&] { return parse_number(key, value); };
  auto integer = [&] { return to_int(key, num()); };
  if (key == "policy_lr") cfg.policy_lr = num();
  else if (key == "value_lr") cfg.value_lr = num();
  else if (key == "entropy_beta") cfg.entropy_beta = num();
  else if (key == "kl_threshold") cfg.kl_threshold = num();
  else if (key == "batch_size") cfg.batch_size = integer();
  else if (key == "minibatch_size") cfg.minibatch_size = integer();
  else if (key == "ppo_epochs") cfg.ppo_epochs = integer();
  else if (key == "gamma") cfg.gamma = num();
  else if (key == "gae_lambda") cfg.gae_lambda = num();
  else if (key == "clip_epsilon") cfg.clip_epsilon = num();
  else if (key == "max_grad_norm") cfg.max_grad_norm = num();
  else if (key == "num_workers") cfg.num_workers = integer();
  else if (key == "total_steps") cfg.total_steps = static_cast<long long>(num());
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(num());
  else if (key == "eval_every") cfg.eval_every = integer();
  else if (key == "architecture") cfg.agent.architecture = parse_architecture(trim(value));
  else if (key == "hidden") cfg.agent.hidden = parse_ints(key, value);
  else if (key == "value_hidden") cfg.agent.value_hidden = parse_ints(key, value);
  else if (key == "shared_width") cfg.agent.shared_width = integer();
  else if (key == "shared_depth") cfg.agent.shared_depth = integer();
  else if (key == "design_log_std") cfg.agent.design_log_std = num();
  else if (key == "control_log_std") cfg.agent.control_log_std = num();
  else if (key == "fix_std") cfg.agent.fix_std = parse_bool(key, value);
  else return false;
  return true;
}

nlohmann::json to_json(const TaskConfig& cfg) {
  nlohmann::json j;
  j["task"] = task_name(cfg.task);
  for (const auto& [name, field] : task_fields()) j[name] = get_task_field(cfg, field);
  nlohmann::json rects = nlohmann::json::array();
  for (const Rect& r : cfg.cutout.rects) rects.push_back({r.x0, r.y0, r.x1, r.y1});
  j["cutout"] = {{"fraction", cfg.cutout.fraction}, {"rects", rects}};
  return j;
}

TaskConfig task_config_from_json(const nlohmann::json& j) {
  TaskConfig cfg = TaskConfig::defaults(parse_task(j.at("task").get<std::string>()));
  for (const auto& [name, field] : task_fields()) {
    if (!j.contains(name)) continue;
    const auto& v = j.at(name);
    std::vector<double> values = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
    set_task_field(cfg, name, field, values);
  }
  if (j.contains("cutout")) {
    cfg.cutout.fraction = j.at("cutout").at("fraction");
    cfg.cutout.rects.clear();
    for (const auto& r : j.at("cutout").at("rects")) {
      cfg.cutout.rects.push_back({r.at(0), r.at(1), r.at(2), r.at(3)});
    }
  }
  return cfg;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"policy_lr", c.policy_lr},
          {"value_lr", c.value_lr},
          {"entropy_beta", c.entropy_beta},
          {"kl_threshold", c.kl_threshold},
          {"batch_size", c.batch_size},
          {"minibatch_size", c.minibatch_size},
          {"ppo_epochs", c.ppo_epochs},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_epsilon", c.clip_epsilon},
          {"max_grad_norm", c.max_grad_norm},
          {"num_workers", c.num_workers},
          {"total_steps", c.total_steps},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"architecture", architecture_name(c.agent.architecture)},
          {"hidden", c.agent.hidden},
          {"value_hidden", c.agent.value_hidden},
          {"shared_width", c.agent.shared_width},
          {"shared_depth", c.agent.shared_depth},
          {"design_log_std", c.agent.design_log_std},
          {"control_log_std", c.agent.control_log_std},
          {"fix_std", c.agent.fix_std}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.policy_lr = j.at("policy_lr");
  c.value_lr = j.at("value_lr");
  c.entropy_beta = j.at("entropy_beta");
  c.kl_threshold = j.at("kl_threshold");
  c.batch_size = j.at("batch_size");
  c.minibatch_size = j.at("minibatch_size");
  c.ppo_epochs = j.at("ppo_epochs");
  c.gamma = j.at("gamma");
  c.gae_lambda = j.at("gae_lambda");
  c.clip_epsilon = j.at("clip_epsilon");
  c.max_grad_norm = j.at("max_grad_norm");
  c.num_workers = j.at("num_workers");
  c.total_steps = j.at("total_steps");
  c.seed = j.at("seed");
  c.eval_every = j.at("eval_every");
  c.agent.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.agent.hidden = j.at("hidden").get<std::vector<int>>();
  c.agent.value_hidden = j.at("value_hidden").get<std::vector<int>>();
  c.agent.shared_width = j.at("shared_width");
  c.agent.shared_depth = j.at("shared_depth");
  c.agent.design_log_std = j.at("design_log_std");
  c.agent.control_log_std = j.at("control_log_std");
  c.agent.fix_std = j.at("fix_std");
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  os.flush();
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t config_hash(const TaskConfig& task, const TrainConfig& cfg) {
  return fnv1a64(to_json(task).dump() + "|" + to_json(cfg).dump());
}

}  // namespace codesign
