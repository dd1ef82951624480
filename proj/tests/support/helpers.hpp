#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "stepdbg/cli.hpp"

namespace testing_support {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun cli(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  CliRun r;
  r.code = stepdbg::run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

// Drops the caret lines drawn under redexes when color is off.
inline std::vector<std::string> state_lines(const std::string& text) {
  std::vector<std::string> out;
  for (auto& l : lines_of(text))
    if (!stepdbg::is_marker_line(l)) out.push_back(l);
  return out;
}

// First and last column of the carets in a marker line.
inline std::pair<size_t, size_t> caret_span(const std::string& marker) {
  size_t a = marker.find('^');
  size_t b = marker.rfind('^');
  return {a, b + 1};
}

inline std::string corpus(const std::string& name) {
  return std::string(STEPDBG_CORPUS_DIR) + "/" + name;
}

}  // namespace testing_support
