#include "diffsolve/trace.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "json.hpp"

namespace diffsolve {

std::vector<double> relative_errors_to_final(const DenoisingTrace& trace) {
  std::vector<double> out;
  if (trace.entries.empty()) return out;
  const Tensor& last = trace.entries.back().x0_hat;
  const double denom = l2_norm(last);
  for (const TraceEntry& e : trace.entries) {
    require_same_shape(e.x0_hat, last, "relative_errors_to_final");
    double s = 0.0;
    for (std::size_t i = 0; i < last.size(); ++i) {
      const double d = e.x0_hat[i] - last[i];
      s += d * d;
    }
    out.push_back(denom > 0.0 ? std::sqrt(s) / denom : std::sqrt(s));
  }
  return out;
}

void write_trace_jsonl(std::ostream& os, const DenoisingTrace& trace, const TraceProbe& probe) {
  if (trace.entries.empty()) throw std::invalid_argument("write_trace_jsonl: empty trace");
  const std::vector<double> rel = relative_errors_to_final(trace);
  for (std::size_t i = 0; i < trace.entries.size(); ++i) {
    const TraceEntry& e = trace.entries[i];
    nlohmann::json j;
    j["step"] = e.step;
    j["t"] = e.t;
    j["final"] = (i + 1 == trace.entries.size());
    if (e.x0_hat.rank() == 3 && e.x0_hat.shape()[2] >= 2 && probe.agent < e.x0_hat.shape()[0]) {
      const std::size_t last = e.x0_hat.shape()[1] - 1;
      j["probe"] = {{"agent", probe.agent},
                    {"waypoint", last},
                    {"x", e.x0_hat.at({probe.agent, last, 0}) * probe.scale + probe.offset[0]},
                    {"y", e.x0_hat.at({probe.agent, last, 1}) * probe.scale + probe.offset[1]}};
    }
    j["norm"] = l2_norm(e.x0_hat);
    j["rel_err_to_final"] = rel[i];
    os << j.dump() << '\n';
  }
}

void export_trace(const DenoisingTrace& trace, const std::string& path, const TraceProbe& probe) {
  std::ofstream f(path);
  if (!f) throw std::ios_base::failure("cannot open " + path + " for writing");
  write_trace_jsonl(f, trace, probe);
  if (!f) throw std::ios_base::failure("write failed: " + path);
}

}  // namespace diffsolve
