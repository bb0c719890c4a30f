#pragma once

#include <string>
#include <vector>

#include "fabric/semantics.hpp"

namespace fabric {

enum class LogLevel { Quiet = 0, Error, Warn, Info, Debug };

/// Parsed from FABRIC_LOG (quiet|error|warn|info|debug); warn when unset or unknown.
LogLevel log_level();
void log(LogLevel level, const std::string& message);

struct SceneSequence {
  std::vector<SceneState> frames;
  std::vector<std::string> warnings;
};

/// Accepts `{"frames":[...]}` or a bare array of frames. Every schema violation is collected and
/// reported in one InputError whose pointer is the first offending field.
SceneSequence parse_scene_sequence(const std::string& text);
SceneSequence load_scene_sequence(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Shortest round-trip decimal ("inf", "-inf", "nan" for non-finite values).
std::string format_number(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(std::vector<std::string> cells);
  std::string str() const;
  size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace fabric
