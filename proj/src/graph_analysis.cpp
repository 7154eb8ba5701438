#include "diffsolve/graph_analysis.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "diffsolve/rng.hpp"
#include "json.hpp"

namespace diffsolve::graph {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

template <class... Ts>
std::uint64_t combine(const Ts&... vs) {
  Fnv1a h;
  (h.update_value(vs), ...);
  return h.digest();
}

std::uint64_t hash_string(const std::string& s) {
  Fnv1a h;
  h.update(s.data(), s.size());
  return h.digest();
}

// Structural identity of a node: op, attributes (Constant values excluded)
// and the weight bound to each input slot.
struct NodeKeys {
  std::vector<std::uint64_t> color;
  std::vector<std::string> key;
  std::vector<bool> has_weight;

  explicit NodeKeys(const Graph& g) {
    for (const Node& n : g.nodes) {
      const std::uint64_t c = attribute_hash(n, false);
      std::string k = std::to_string(c);
      bool w = false;
      for (const std::string& in : n.inputs) {
        k += '|';
        if (g.is_weight(in)) {
          k += in;
          w = true;
        }
      }
      color.push_back(c);
      key.push_back(std::move(k));
      has_weight.push_back(w);
    }
  }
};

// (region, candidate node) pairs, one per region alive when built.
using Expansion = std::vector<std::pair<std::size_t, std::size_t>>;

class Grower {
 public:
  Grower(const Graph& g, const Dataflow& df, const NodeKeys& keys)
      : g_(g), df_(df), keys_(keys), owner_(g.nodes.size(), kNone) {}

  void seed(const std::vector<std::size_t>& nodes) {
    Expansion e;
    for (std::size_t n : nodes) {
      members_.push_back({n});
      alive_.push_back(true);
      owner_[n] = members_.size() - 1;
      e.emplace_back(members_.size() - 1, n);
    }
    // Seeds may already disagree (a weight used by differently shaped ops).
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < nodes.size(); ++r) groups[keys_.key[nodes[r]]].push_back(r);
    if (groups.size() > 1) {
      auto best = largest(groups);
      for (const auto& [key, rs] : groups) {
        if (key == best->first) continue;
        for (std::size_t r : rs) drop(r, "seed node has a different op or attributes");
      }
    }
  }

  void grow() {
    std::deque<std::size_t> queue{0};
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (const Expansion& e : expansions(p)) {
        Expansion live;
        for (const auto& rc : e)
          if (alive_[rc.first]) live.push_back(rc);
        if (live.size() < 2) return;
        if (accept(live)) queue.push_back(members_[live.front().first].size() - 1);
      }
    }
  }

  std::vector<std::size_t> alive_regions() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < alive_.size(); ++i)
      if (alive_[i]) r.push_back(i);
    return r;
  }

  const std::vector<std::size_t>& members(std::size_t r) const { return members_[r]; }

  void drop(std::size_t r, const std::string& why) {
    alive_[r] = false;
    for (std::size_t n : members_[r])
      if (owner_[n] == r) owner_[n] = kNone;
    diagnostics_.push_back("outlier copy seeded at '" + g_.nodes[members_[r].front()].id + "': " + why);
  }

  std::vector<std::string>& diagnostics() { return diagnostics_; }

 private:
  template <class M>
  static typename M::const_iterator largest(const M& groups) {
    return std::max_element(groups.begin(), groups.end(),
                            [](const auto& a, const auto& b) { return a.second.size() < b.second.size(); });
  }

  std::vector<Expansion> expansions(std::size_t p) const {
    const std::vector<std::size_t> regions = alive_regions();
    std::vector<Expansion> out;
    if (regions.size() < 2) return out;

    const std::size_t arity = g_.nodes[members_[regions[0]][p]].inputs.size();
    for (std::size_t s = 0; s < arity; ++s) {
      Expansion e;
      for (std::size_t r : regions) {
        const Node& n = g_.nodes[members_[r][p]];
        auto it = s < n.inputs.size() ? df_.producer.find(n.inputs[s]) : df_.producer.end();
        e.emplace_back(r, it == df_.producer.end() ? kNone : it->second);
      }
      out.push_back(std::move(e));
    }

    // Consumers matched by (key, slot); a signature seen twice in one region is ambiguous.
    std::vector<std::map<std::string, std::vector<std::size_t>>> by_sig(regions.size());
    std::set<std::string> sigs;
    for (std::size_t j = 0; j < regions.size(); ++j) {
      for (const std::string& t : g_.nodes[members_[regions[j]][p]].outputs) {
        auto it = df_.consumers.find(t);
        if (it == df_.consumers.end()) continue;
        for (const auto& [node, slot] : it->second) {
          std::string sig = keys_.key[node] + "#" + std::to_string(slot);
          by_sig[j][sig].push_back(node);
          sigs.insert(std::move(sig));
        }
      }
    }
    for (const std::string& sig : sigs) {
      Expansion e;
      for (std::size_t j = 0; j < regions.size(); ++j) {
        auto it = by_sig[j].find(sig);
        e.emplace_back(regions[j], it == by_sig[j].end() || it->second.size() != 1 ? kNone : it->second.front());
      }
      out.push_back(std::move(e));
    }
    return out;
  }

  // Every alive region takes its candidate or none does. A weight
  // disagreement against a strict majority that shares its weights drops the
  // dissenting copies instead.
  bool accept(const Expansion& e) {
    std::set<std::size_t> distinct;
    for (const auto& [r, c] : e) {
      if (c == kNone || owner_[c] != kNone) return false;
      distinct.insert(c);
    }
    if (distinct.size() != e.size()) return false;

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t j = 0; j < e.size(); ++j) groups[keys_.key[e[j].second]].push_back(j);
    std::vector<std::size_t> keep;
    if (groups.size() == 1) {
      for (std::size_t j = 0; j < e.size(); ++j) keep.push_back(j);
    } else {
      const std::uint64_t color = keys_.color[e.front().second];
      for (const auto& rc : e)
        if (keys_.color[rc.second] != color) return false;
      auto best = largest(groups);
      const std::size_t size = best->second.size();
      if (size < 2 || 2 * size <= e.size() || !keys_.has_weight[e[best->second.front()].second]) return false;
      for (const auto& [key, idx] : groups) {
        if (key == best->first) continue;
        for (std::size_t j : idx) {
          drop(e[j].first, "node '" + g_.nodes[e[j].second].id + "' binds different weights than " +
                               std::to_string(size) + " matching copies");
        }
      }
      keep = best->second;
    }
    for (std::size_t j : keep) {
      members_[e[j].first].push_back(e[j].second);
      owner_[e[j].second] = e[j].first;
    }
    return true;
  }

  const Graph& g_;
  const Dataflow& df_;
  const NodeKeys& keys_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<bool> alive_;
  std::vector<std::size_t> owner_;
  std::vector<std::string> diagnostics_;
};

// Weisfeiler-Leman refinement over one region's induced subgraph. Initial
// colors come from node keys plus how each input slot is fed from outside:
// by a weight, by a tensor every region shares, or by something else.
std::uint64_t region_label(const Graph& g, const Dataflow& df, const NodeKeys& keys,
                           const std::vector<std::size_t>& nodes, const std::vector<std::vector<bool>>& shared_slot) {
  const std::size_t m = nodes.size();
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t p = 0; p < m; ++p) pos[nodes[p]] = p;

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> in_edges(m), out_edges(m);  // (slot, position)
  std::vector<std::uint64_t> label(m);
  for (std::size_t p = 0; p < m; ++p) {
    const Node& n = g.nodes[nodes[p]];
    std::uint64_t h = hash_string(keys.key[nodes[p]]);
    for (std::size_t s = 0; s < n.inputs.size(); ++s) {
      auto it = df.producer.find(n.inputs[s]);
      auto q = it == df.producer.end() ? pos.end() : pos.find(it->second);
      if (q != pos.end()) {
        in_edges[p].emplace_back(s, q->second);
        out_edges[q->second].emplace_back(s, p);
        h = combine(h, std::uint64_t{1});
      } else if (g.is_weight(n.inputs[s])) {
        h = combine(h, std::uint64_t{2});
      } else {
        h = combine(h, std::uint64_t{shared_slot[p][s] ? 3u : 4u});
      }
    }
    label[p] = h;
  }

  std::size_t classes = std::set<std::uint64_t>(label.begin(), label.end()).size();
  for (std::size_t round = 0; round < m; ++round) {
    std::vector<std::uint64_t> next(m);
    for (std::size_t p = 0; p < m; ++p) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> ins, outs;
      for (auto [s, q] : in_edges[p]) ins.emplace_back(s, label[q]);
      for (auto [s, q] : out_edges[p]) outs.emplace_back(s, label[q]);
      std::sort(ins.begin(), ins.end());
      std::sort(outs.begin(), outs.end());
      std::uint64_t h = label[p];
      for (auto [s, l] : ins) h = combine(h, s, l);
      h = combine(h, std::uint64_t{0xff});
      for (auto [s, l] : outs) h = combine(h, s, l);
      next[p] = h;
    }
    label = std::move(next);
    const std::size_t c = std::set<std::uint64_t>(label.begin(), label.end()).size();
    if (c == classes && round > 0) break;
    classes = c;
  }
  std::sort(label.begin(), label.end());
  std::uint64_t h = combine(std::uint64_t{m});
  for (std::uint64_t l : label) h = combine(h, l);
  return h;
}

std::vector<bool> reach(const std::vector<std::vector<std::size_t>>& adj, const std::vector<std::size_t>& from) {
  std::vector<bool> seen(adj.size(), false);
  std::vector<std::size_t> stack;
  for (std::size_t f : from) {
    for (std::size_t n : adj[f]) {
      if (!seen[n]) {
        seen[n] = true;
        stack.push_back(n);
      }
    }
  }
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    for (std::size_t m : adj[n]) {
      if (!seen[m]) {
        seen[m] = true;
        stack.push_back(m);
      }
    }
  }
  return seen;
}

std::vector<std::size_t> indices_of(const Graph& g, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) out.push_back(g.node_index(id));
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const std::string& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

RepeatDetection detect_repeats(const Graph& g) {
  validate(g);
  const Dataflow df(g);
  const NodeKeys keys(g);
  RepeatDetection out;

  std::map<std::string, std::set<std::size_t>> users;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (const std::string& in : g.nodes[i].inputs)
      if (g.is_weight(in)) users[in].insert(i);
  const std::string* seed = nullptr;
  std::size_t fan_out = 1;
  for (const auto& [name, nodes] : users) {
    if (nodes.size() > fan_out) {
      fan_out = nodes.size();
      seed = &name;
    }
  }
  if (!seed) return out;
  out.seed_weight = *seed;

  std::vector<std::size_t> seeds(users[*seed].begin(), users[*seed].end());
  std::sort(seeds.begin(), seeds.end(), [&](std::size_t a, std::size_t b) { return g.nodes[a].id < g.nodes[b].id; });
  Grower grower(g, df, keys);
  grower.seed(seeds);
  grower.grow();

  std::vector<std::size_t> regions = grower.alive_regions();
  if (regions.size() < 2) {
    out.diagnostics = std::move(grower.diagnostics());
    return out;
  }

  // Which (position, slot) pairs read the same outside tensor in every region.
  const std::vector<std::size_t>& first = grower.members(regions[0]);
  std::vector<std::vector<bool>> shared(first.size());
  for (std::size_t p = 0; p < first.size(); ++p) {
    const Node& n = g.nodes[first[p]];
    shared[p].assign(n.inputs.size(), true);
    for (std::size_t s = 0; s < n.inputs.size(); ++s)
      for (std::size_t r : regions)
        if (g.nodes[grower.members(r)[p]].inputs[s] != n.inputs[s]) shared[p][s] = false;
  }

  std::map<std::uint64_t, std::vector<std::size_t>> by_label;
  for (std::size_t r : regions) by_label[region_label(g, df, keys, grower.members(r), shared)].push_back(r);
  auto best = std::max_element(by_label.begin(), by_label.end(),
                               [](const auto& a, const auto& b) { return a.second.size() < b.second.size(); });
  for (const auto& [label, rs] : by_label) {
    if (label == best->first) continue;
    for (std::size_t r : rs) grower.drop(r, "not isomorphic to the other copies");
  }
  out.canonical_label = best->first;
  out.diagnostics = std::move(grower.diagnostics());
  if (best->second.size() < 2) return out;

  const std::vector<std::size_t> depth = node_depths(g, df);
  for (std::size_t r : best->second) {
    CopyRegion region;
    for (std::size_t n : grower.members(r)) {
      region.nodes.push_back(g.nodes[n].id);
      region.depth = std::max(region.depth, depth[n]);
    }
    out.regions.push_back(std::move(region));
  }
  std::sort(out.regions.begin(), out.regions.end(), [](const CopyRegion& a, const CopyRegion& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return *std::min_element(a.nodes.begin(), a.nodes.end()) < *std::min_element(b.nodes.begin(), b.nodes.end());
  });
  return out;
}

EncoderSplit identify_encoder(const Graph& g, const std::vector<CopyRegion>& copies) {
  if (copies.empty()) throw ExtractionError("identify_encoder: no copies");
  const Dataflow df(g);

  std::vector<std::set<std::string>> external(copies.size());
  std::vector<std::size_t> all;
  for (std::size_t r = 0; r < copies.size(); ++r) {
    std::set<std::string> produced;
    const std::vector<std::size_t> idx = indices_of(g, copies[r].nodes);
    all.insert(all.end(), idx.begin(), idx.end());
    for (std::size_t n : idx)
      for (const std::string& t : g.nodes[n].outputs) produced.insert(t);
    for (std::size_t n : idx)
      for (const std::string& t : g.nodes[n].inputs)
        if (!produced.count(t) && !g.is_weight(t)) external[r].insert(t);
  }

  std::set<std::string> common = external[0];
  for (std::size_t r = 1; r < external.size(); ++r) {
    std::set<std::string> keep;
    std::set_intersection(common.begin(), common.end(), external[r].begin(), external[r].end(),
                          std::inserter(keep, keep.end()));
    common = std::move(keep);
  }
  if (common.empty()) {
    std::size_t r = 0;
    while (r + 1 < copies.size() && !external[r].empty()) ++r;
    throw ExtractionError("copy starting at '" + copies[r].nodes.front() +
                          "' consumes no upstream tensor shared with the other copies");
  }

  EncoderSplit out;
  out.boundary.assign(common.begin(), common.end());
  std::vector<std::size_t> producers;
  for (const std::string& t : out.boundary) {
    auto it = df.producer.find(t);
    if (it != df.producer.end()) producers.push_back(it->second);
  }
  std::vector<bool> enc = reach(df.preds, producers);
  for (std::size_t p : producers) enc[p] = true;

  const std::vector<bool> downstream = reach(df.succs, all);
  std::vector<bool> in_copy(g.nodes.size(), false);
  for (std::size_t n : all) in_copy[n] = true;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!enc[i]) continue;
    if (downstream[i] || in_copy[i]) {
      throw ExtractionError("node '" + g.nodes[i].id + "' lies upstream of the copies but is fed by a copy");
    }
  }
  for (std::size_t i : canonical_order(g))
    if (enc[i]) out.nodes.push_back(g.nodes[i].id);
  return out;
}

std::string DecompositionReport::to_json() const {
  nlohmann::json j;
  j["monolithic_node_count"] = monolithic_node_count;
  j["copies_found"] = copies_found;
  j["encoder_node_count"] = encoder_node_count;
  j["core_node_count"] = core_node_count;
  j["head_node_count"] = head_node_count;
  j["nodes_pruned"] = {{"duplicates", duplicate_nodes_pruned},
                       {"glue", glue_nodes_pruned},
                       {"dead", dead_nodes_pruned},
                       {"total", nodes_pruned()}};
  j["boundary_tensors"] = boundary_tensors;
  j["diagnostics"] = diagnostics;
  j["duplicated_weights"] = duplicated_weights;
  j["promoted_constant"] = promoted_constant;
  j["copy_timesteps"] = copy_timesteps;
  j["copy_inputs"] = copy_inputs;
  j["copy_outputs"] = copy_outputs;
  j["trajectory_input"] = trajectory_input;
  j["trajectory_output"] = trajectory_output;
  j["head_outputs"] = head_outputs;
  j["core_io"] = {{"trajectory", core_trajectory_input}, {"timestep", core_timestep_input}, {"output", core_output}};
  return j.dump(1);
}

namespace {

// Renames tensors throughout a module graph (node I/O, metadata, boundary lists).
void rename_tensors(Graph& m, const std::map<std::string, std::string>& names) {
  auto map = [&](std::string& t) {
    auto it = names.find(t);
    if (it != names.end()) t = it->second;
  };
  for (Node& n : m.nodes) {
    for (std::string& t : n.inputs) map(t);
    for (std::string& t : n.outputs) map(t);
  }
  for (std::string& t : m.inputs) map(t);
  for (std::string& t : m.outputs) map(t);
  std::map<std::string, TensorInfo> tensors;
  for (auto& [name, info] : m.tensors) {
    auto it = names.find(name);
    tensors[it == names.end() ? name : it->second] = info;
  }
  m.tensors = std::move(tensors);
}

double constant_scalar(const Node& n) { return attr_reals(n, "value").front(); }

}  // namespace

Modules extract_modules(const Graph& g) {
  const RepeatDetection det = detect_repeats(g);
  if (det.regions.size() < 2) {
    throw ExtractionError("extract_modules: found " + std::to_string(det.regions.size()) +
                          " repeated core copies, need at least 2");
  }
  const EncoderSplit enc = identify_encoder(g, det.regions);
  const Dataflow df(g);
  const std::size_t n = g.nodes.size();
  const std::size_t copies = det.regions.size();

  std::vector<std::vector<std::size_t>> region(copies);
  std::vector<std::size_t> region_of(n, kNone);
  std::vector<std::size_t> all_region;
  for (std::size_t r = 0; r < copies; ++r) {
    region[r] = indices_of(g, det.regions[r].nodes);
    for (std::size_t i : region[r]) region_of[i] = r;
    all_region.insert(all_region.end(), region[r].begin(), region[r].end());
  }
  std::vector<bool> in_encoder(n, false);
  for (std::size_t i : indices_of(g, enc.nodes)) in_encoder[i] = true;

  const std::vector<bool> anc_any = reach(df.preds, all_region);
  const std::vector<bool> desc_last = reach(df.succs, region.back());
  std::vector<std::size_t> output_producers;
  for (const std::string& t : g.outputs) {
    auto it = df.producer.find(t);
    if (it != df.producer.end()) output_producers.push_back(it->second);
  }
  std::vector<bool> live = reach(df.preds, output_producers);
  for (std::size_t p : output_producers) live[p] = true;

  DecompositionReport rep;
  rep.monolithic_node_count = n;
  rep.copies_found = copies;
  rep.boundary_tensors = enc.boundary;
  rep.diagnostics = det.diagnostics;

  std::vector<std::size_t> head_nodes, unassigned;
  for (std::size_t i : canonical_order(g)) {
    if (in_encoder[i]) {
      ++rep.encoder_node_count;
    } else if (region_of[i] == 0) {
      ++rep.core_node_count;
    } else if (region_of[i] != kNone) {
      ++rep.duplicate_nodes_pruned;
    } else if (anc_any[i]) {
      ++rep.glue_nodes_pruned;
    } else if (!live[i]) {
      ++rep.dead_nodes_pruned;
    } else if (desc_last[i]) {
      head_nodes.push_back(i);
    } else {
      unassigned.push_back(i);
    }
  }
  rep.head_node_count = head_nodes.size();
  if (!unassigned.empty()) {
    std::vector<std::string> ids;
    for (std::size_t i : unassigned) ids.push_back(g.nodes[i].id);
    throw ExtractionError("extraction incomplete: unassigned nodes " + join(ids));
  }

  // Timestep: the one Constant position whose value differs across copies.
  const std::vector<std::size_t>& tmpl = region[0];
  std::size_t promoted = kNone;
  for (std::size_t p = 0; p < tmpl.size(); ++p) {
    if (g.nodes[tmpl[p]].op != OpKind::Constant) continue;
    bool differs = false;
    for (std::size_t r = 1; r < copies; ++r)
      if (g.nodes[region[r][p]].attrs != g.nodes[tmpl[p]].attrs) differs = true;
    if (!differs) continue;
    if (promoted != kNone) {
      throw ExtractionError("ambiguous timestep: constants '" + g.nodes[tmpl[promoted]].id + "' and '" +
                            g.nodes[tmpl[p]].id + "' both differ across copies");
    }
    promoted = p;
  }
  if (promoted != kNone) {
    rep.promoted_constant = g.nodes[tmpl[promoted]].id;
    for (std::size_t r = 0; r < copies; ++r) rep.copy_timesteps.push_back(constant_scalar(g.nodes[region[r][promoted]]));
  }

  // Per-copy interface, aligned by position.
  auto region_io = [&](std::size_t r, std::vector<std::pair<std::size_t, std::size_t>>* dyn_slots,
                       std::vector<std::size_t>* out_pos) {
    std::set<std::string> produced;
    for (std::size_t i : region[r])
      for (const std::string& t : g.nodes[i].outputs) produced.insert(t);
    const std::set<std::string> boundary(enc.boundary.begin(), enc.boundary.end());
    for (std::size_t p = 0; p < region[r].size(); ++p) {
      const Node& node = g.nodes[region[r][p]];
      for (std::size_t s = 0; s < node.inputs.size(); ++s) {
        const std::string& t = node.inputs[s];
        if (!produced.count(t) && !g.is_weight(t) && !boundary.count(t)) dyn_slots->emplace_back(p, s);
      }
      for (const std::string& t : node.outputs) {
        bool escapes = std::find(g.outputs.begin(), g.outputs.end(), t) != g.outputs.end();
        auto it = df.consumers.find(t);
        if (it != df.consumers.end())
          for (const auto& [c, slot] : it->second)
            if (region_of[c] != r) escapes = true;
        if (escapes) out_pos->push_back(p);
      }
    }
  };
  std::vector<std::pair<std::size_t, std::size_t>> dyn;
  std::vector<std::size_t> outs;
  region_io(0, &dyn, &outs);
  std::set<std::string> dyn_tensors;
  for (auto [p, s] : dyn) dyn_tensors.insert(g.nodes[tmpl[p]].inputs[s]);
  if (dyn_tensors.size() != 1 || outs.size() != 1) {
    throw ExtractionError("core copy must have exactly one trajectory input and one output, found " +
                          std::to_string(dyn_tensors.size()) + " and " + std::to_string(outs.size()));
  }
  const auto [dyn_p, dyn_s] = dyn.front();
  const std::size_t out_p = outs.front();
  for (std::size_t r = 0; r < copies; ++r) {
    rep.copy_inputs.push_back(g.nodes[region[r][dyn_p]].inputs[dyn_s]);
    rep.copy_outputs.push_back(g.nodes[region[r][out_p]].outputs[0]);
  }
  rep.trajectory_input = rep.copy_inputs.front();
  rep.trajectory_output = rep.copy_outputs.back();

  Modules m;

  // Encoder.
  {
    std::vector<std::string> inputs;
    std::set<std::string> produced;
    const std::vector<std::size_t> idx = indices_of(g, enc.nodes);
    for (std::size_t i : idx)
      for (const std::string& t : g.nodes[i].outputs) produced.insert(t);
    for (const std::string& t : g.inputs) {
      bool used = std::find(enc.boundary.begin(), enc.boundary.end(), t) != enc.boundary.end();
      for (std::size_t i : idx)
        for (const std::string& in : g.nodes[i].inputs)
          if (in == t) used = true;
      if (used) inputs.push_back(t);
    }
    m.encoder = subgraph(g, idx, inputs, enc.boundary, g.name + ".encoder");
  }

  // Core.
  {
    std::vector<std::size_t> keep;
    for (std::size_t p = 0; p < tmpl.size(); ++p)
      if (p != promoted) keep.push_back(tmpl[p]);
    std::vector<std::string> inputs{rep.trajectory_input};
    inputs.insert(inputs.end(), enc.boundary.begin(), enc.boundary.end());
    std::map<std::string, std::string> names{{rep.trajectory_input, rep.core_trajectory_input},
                                             {rep.copy_outputs.front(), rep.core_output}};
    if (promoted != kNone) {
      const std::string& t_tensor = g.nodes[tmpl[promoted]].outputs[0];
      inputs.push_back(t_tensor);
      names[t_tensor] = rep.core_timestep_input;
    }
    m.core = subgraph(g, keep, inputs, {rep.copy_outputs.front()}, g.name + ".core");
    rename_tensors(m.core, names);
    canonicalize(m.core);
  }

  // Head.
  {
    std::set<std::string> produced;
    for (std::size_t i : head_nodes)
      for (const std::string& t : g.nodes[i].outputs) produced.insert(t);
    std::vector<std::string> inputs;
    std::set<std::string> seen;
    for (std::size_t i : head_nodes) {
      for (const std::string& t : g.nodes[i].inputs) {
        if (produced.count(t) || g.is_weight(t) || seen.count(t)) continue;
        seen.insert(t);
        const bool ok = t == rep.trajectory_output || g.is_input(t) ||
                        std::find(enc.boundary.begin(), enc.boundary.end(), t) != enc.boundary.end();
        if (!ok) throw ExtractionError("head node '" + g.nodes[i].id + "' reads intermediate tensor '" + t + "'");
        inputs.push_back(t);
      }
    }
    std::sort(inputs.begin(), inputs.end(), [&](const std::string& a, const std::string& b) {
      if ((a == rep.trajectory_output) != (b == rep.trajectory_output)) return a == rep.trajectory_output;
      return a < b;
    });
    for (const std::string& t : g.outputs)
      if (produced.count(t)) rep.head_outputs.push_back(t);
    m.head = subgraph(g, head_nodes, inputs, rep.head_outputs, g.name + ".head");
    rename_tensors(m.head, {{rep.trajectory_output, rep.core_output}});
    canonicalize(m.head);
  }

  std::map<std::string, int> weight_modules;
  for (const Graph* mod : {&m.encoder, &m.core, &m.head})
    for (const auto& [name, w] : mod->weights) ++weight_modules[name];
  for (const auto& [name, count] : weight_modules)
    if (count > 1) rep.duplicated_weights.push_back(name);

  m.report = std::move(rep);
  return m;
}

}  // namespace diffsolve::graph
