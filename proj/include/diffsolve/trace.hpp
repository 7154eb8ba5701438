#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "diffsolve/solvers.hpp"

namespace diffsolve {

// Which waypoint to log per step and how to map it to meters.
struct TraceProbe {
  std::size_t agent = kEgoAgent;
  double scale = 1.0;
  std::array<double, 2> offset{0.0, 0.0};
};

// ||x0_i - x0_last|| / ||x0_last|| (plain difference norm when the last is zero).
std::vector<double> relative_errors_to_final(const DenoisingTrace& trace);

// One JSON object per entry; the last entry is the final prediction and is
// flagged as such. Throws std::invalid_argument on an empty trace.
void write_trace_jsonl(std::ostream& os, const DenoisingTrace& trace, const TraceProbe& probe = {});
// Throws std::ios_base::failure when the file cannot be written.
void export_trace(const DenoisingTrace& trace, const std::string& path, const TraceProbe& probe = {});

}  // namespace diffsolve
