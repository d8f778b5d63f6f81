#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "charseg/corpus.hpp"
#include "charseg/crf.hpp"
#include "charseg/embed.hpp"
#include "charseg/features.hpp"
#include "charseg/srn.hpp"

namespace charseg::cli {

/// Settings shared by every subcommand. Loaded from an INI file with one
/// section per module; command-line flags override it.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::array<double, 4> split = {0.4, 0.4, 0.1, 0.1};
  SynthConfig synth = SynthConfig::defaults();
  SrnConfig srn;
  FeaturizeOptions features;
  NeighborOptions neighbors;
  TrainOptions crf;
  std::vector<double> fractions = {12.5, 25, 50, 100};
  bool concurrent_curve = false;
};

/// Applies `[section] key = value` settings from `path` on top of `config`.
/// Unknown sections or keys are usage errors.
void load_config(const std::string& path, ExperimentConfig& config);

/// Machine summary line: `<command> key=value ...`. Values are
/// percent-encoded so they never contain whitespace, `=` or `%`.
struct Summary {
  std::string command;
  std::vector<std::pair<std::string, std::string>> fields;

  std::string format() const;
  static std::optional<Summary> parse(std::string_view line);
  const std::string* get(std::string_view key) const;

  friend bool operator==(const Summary&, const Summary&) = default;
};

/// Runs one command line (without the program name). Returns the process
/// exit status: 0 ok, 2 usage, 3 I/O or malformed input, 4 model mismatch,
/// 5 training diverged.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace charseg::cli
