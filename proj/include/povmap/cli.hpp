#pragma once

#include <map>
#include <string>
#include <vector>

namespace povmap {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

// Flat key=value settings. Files may carry '#' comments; unknown keys are rejected.
class RunConfig {
 public:
  static const std::vector<std::string>& known_keys();
  static RunConfig defaults();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::string echo() const;  // sorted key=value lines

 private:
  std::map<std::string, std::string> values_;
};

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace povmap
