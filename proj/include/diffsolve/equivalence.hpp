#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsolve/graph_analysis.hpp"
#include "diffsolve/schedule.hpp"

namespace diffsolve::graph {

struct EquivalenceOptions {
  double module_tolerance = 1e-5;
  double end_to_end_tolerance = 1e-4;
  double physical_tolerance_m = 2e-3;
  double position_scale_m = 20.0;  // normalized unit -> meters
  VpSchedule schedule{};
  double t_start = kDefaultTStart;
  double t_end = kDefaultTEnd;
  std::uint64_t seed = 0;
};

struct ModuleError {
  std::string name;
  double max_abs_error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_abs_error < tolerance; }
};

struct ErrorReport {
  std::size_t trials = 0;
  std::size_t n_steps = 0;
  std::vector<ModuleError> modules;  // encoder, core[i], head
  ModuleError end_to_end;
  double physical_bound_m = 0.0;
  double physical_tolerance_m = 0.0;
  bool turn_classes_match = true;
  std::vector<std::string> problems;

  double max_module_error() const;
  bool modules_pass() const;
  bool physical_pass() const { return physical_bound_m < physical_tolerance_m; }
  bool pass() const;
  std::string to_json() const;
};

// Feeds `trials` standard-normal inputs through the monolith and through the
// modules. Each module is checked on the monolith's own intermediates; the
// end-to-end run chains encoder, core and a first-order solver over the
// n_steps grid into the head. Never throws for numeric mismatch; problems
// (such as n_steps disagreeing with the copy count) fail the report.
ErrorReport validate_equivalence(const Graph& mono, const Modules& modules, std::size_t n_steps, std::size_t trials,
                                 const EquivalenceOptions& options = {});

}  // namespace diffsolve::graph
