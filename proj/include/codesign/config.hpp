#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "codesign/envs.hpp"
#include "codesign/ppo.hpp"

namespace codesign {

// Flat `key = value` text. '#' starts a comment; vector values are written as
// comma separated numbers, optionally wrapped in parentheses or brackets.
struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KeyValue> parse_key_values(std::istream& is);
std::vector<KeyValue> read_key_values(const std::filesystem::path& path);

double parse_number(const std::string& key, const std::string& value);
std::vector<double> parse_numbers(const std::string& key, const std::string& value);

// Return false when the key is not a field of the config.
bool apply_task_setting(TaskConfig& cfg, const std::string& key, const std::string& value);
bool apply_train_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

nlohmann::json to_json(const TaskConfig& cfg);
TaskConfig task_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace codesign
