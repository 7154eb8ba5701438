#include <bit>
#include <cstring>

#include "diffsolve/denoiser.hpp"
#include "diffsolve/rng.hpp"

namespace diffsolve {

SceneLayout SceneLayout::compact() {
  SceneLayout l;
  l.ego_history = {4, 4};
  l.neighbor_tracks = {1, 2, 4};
  l.lane_geometry = {1, 1, 4};
  l.route = {1, 2};
  l.traffic_signals = {1};
  l.goal_pose = {1};
  return l;
}

std::size_t SceneLayout::total_size() const {
  return element_count(ego_history) + element_count(neighbor_tracks) + element_count(lane_geometry) +
         element_count(route) + element_count(traffic_signals) + element_count(goal_pose);
}

const std::array<const char*, SceneContext::kFieldCount>& SceneContext::field_names() {
  static const std::array<const char*, kFieldCount> names{"ego_history",     "neighbor_tracks", "lane_geometry",
                                                          "route",           "traffic_signals", "goal_pose"};
  return names;
}

SceneContext::SceneContext(const SceneLayout& layout)
    : fields_{Tensor(layout.ego_history),   Tensor(layout.neighbor_tracks), Tensor(layout.lane_geometry),
              Tensor(layout.route),         Tensor(layout.traffic_signals), Tensor(layout.goal_pose)} {}

std::size_t SceneContext::total_size() const {
  std::size_t n = 0;
  for (const Tensor& f : fields_) n += f.size();
  return n;
}

std::vector<double> SceneContext::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const Tensor& f : fields_) out.insert(out.end(), f.values().begin(), f.values().end());
  return out;
}

namespace {

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

std::string SceneContext::canonical_bytes() const {
  std::string out;
  out.reserve(total_size() * 8 + 256);
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    out.append(field_names()[i]);
    out.push_back('\0');
    append_u64(out, fields_[i].rank());
    for (std::size_t d : fields_[i].shape()) append_u64(out, d);
    for (double v : fields_[i].values()) append_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::uint64_t SceneContext::content_hash() const {
  const std::string bytes = canonical_bytes();
  Fnv1a h;
  h.update(bytes.data(), bytes.size());
  return h.digest();
}

}  // namespace diffsolve
