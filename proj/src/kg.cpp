#include "kg.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "rng.hpp"

namespace kgcdr {

uint32_t KnowledgeGraph::entity_id(const std::string& name) const {
  auto it = entity_dict_.find(name);
  if (it == entity_dict_.end()) fail(ErrorCategory::data, "unknown entity '" + name + "'");
  return it->second;
}

uint32_t KnowledgeGraph::relation_id(const std::string& name) const {
  auto it = relation_dict_.find(name);
  if (it == relation_dict_.end()) fail(ErrorCategory::data, "unknown relation '" + name + "'");
  return it->second;
}

bool KnowledgeGraph::has_triple(uint32_t h, uint32_t r, uint32_t t) const {
  const auto& outs = out_adj_[r][h];
  return std::find(outs.begin(), outs.end(), t) != outs.end();
}

KnowledgeGraph KnowledgeGraph::from_raw(const std::vector<RawTriple>& raw) {
  KnowledgeGraph g;
  auto entity = [&g](const std::string& name) -> uint32_t {
    auto it = g.entity_dict_.find(name);
    if (it != g.entity_dict_.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(g.entity_names_.size());
    g.entity_dict_.emplace(name, id);
    g.entity_names_.push_back(name);
    return id;
  };
  auto relation = [&g](const std::string& name) -> uint32_t {
    auto it = g.relation_dict_.find(name);
    if (it != g.relation_dict_.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(g.relation_names_.size());
    g.relation_dict_.emplace(name, id);
    g.relation_names_.push_back(name);
    return id;
  };
  g.triples_.reserve(raw.size());
  for (const RawTriple& rt : raw) {
    g.triples_.push_back({entity(rt.head), relation(rt.relation), entity(rt.tail)});
  }
  const size_t n_e = g.entity_names_.size();
  const size_t n_r = g.relation_names_.size();
  g.in_adj_.assign(n_r, std::vector<std::vector<uint32_t>>(n_e));
  g.out_adj_.assign(n_r, std::vector<std::vector<uint32_t>>(n_e));
  for (const Triple& t : g.triples_) {
    g.out_adj_[t.relation][t.head].push_back(t.tail);
    g.in_adj_[t.relation][t.tail].push_back(t.head);
  }
  return g;
}

std::vector<RawTriple> load_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open triple file '" + path + "'");
  std::vector<RawTriple> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      fail(ErrorCategory::parse, path + ":" + std::to_string(line_no) +
                                     ": expected 3 tab-separated fields, got " +
                                     std::to_string(fields.size()));
    }
    out.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
  }
  return out;
}

void write_triples(const std::string& path, const std::vector<RawTriple>& triples) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  for (const RawTriple& t : triples) {
    out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }
  if (!out) fail(ErrorCategory::io, "write failed for '" + path + "'");
}

std::vector<RawTriple> to_raw_triples(const KnowledgeGraph& g) {
  std::vector<RawTriple> out;
  out.reserve(g.triples().size());
  for (const Triple& t : g.triples()) {
    out.push_back({g.entity_name(t.head), g.relation_name(t.relation), g.entity_name(t.tail)});
  }
  return out;
}

namespace {

struct TripleKeyHash {
  size_t operator()(const RawTriple& t) const {
    size_t h = fnv1a64(t.head);
    h = h * 1315423911u ^ fnv1a64(t.relation);
    h = h * 1315423911u ^ fnv1a64(t.tail);
    return h;
  }
};

}  // namespace

KnowledgeGraph filter_kg(const std::vector<RawTriple>& raw, uint32_t min_entity_freq,
                         uint32_t min_relation_triples) {
  // Deduplicate, preserving first-occurrence order.
  std::vector<RawTriple> triples;
  {
    std::unordered_set<RawTriple, TripleKeyHash> seen;
    triples.reserve(raw.size());
    for (const RawTriple& t : raw) {
      if (seen.insert(t).second) triples.push_back(t);
    }
  }

  bool changed = true;
  while (changed) {
    changed = false;

    std::unordered_map<std::string, size_t> relation_count;
    for (const RawTriple& t : triples) ++relation_count[t.relation];
    std::vector<RawTriple> kept;
    kept.reserve(triples.size());
    for (RawTriple& t : triples) {
      if (relation_count[t.relation] >= min_relation_triples) {
        kept.push_back(std::move(t));
      } else {
        changed = true;
      }
    }
    triples = std::move(kept);

    // Entity degree counts head and tail occurrences combined.
    std::unordered_map<std::string, size_t> degree;
    for (const RawTriple& t : triples) {
      ++degree[t.head];
      ++degree[t.tail];
    }
    std::vector<RawTriple> kept2;
    kept2.reserve(triples.size());
    for (RawTriple& t : triples) {
      if (degree[t.head] >= min_entity_freq && degree[t.tail] >= min_entity_freq) {
        kept2.push_back(std::move(t));
      } else {
        changed = true;
      }
    }
    triples = std::move(kept2);
  }

  if (triples.empty()) {
    fail(ErrorCategory::empty_graph, "filter_kg: no triples survive thresholds (min_entity_freq=" +
                                         std::to_string(min_entity_freq) +
                                         ", min_relation_triples=" +
                                         std::to_string(min_relation_triples) + ")");
  }
  return KnowledgeGraph::from_raw(triples);
}

KnowledgeGraph khop_subgraph(const KnowledgeGraph& g, const std::vector<uint32_t>& seeds,
                             uint32_t k) {
  const size_t n = g.entity_count();
  constexpr uint32_t kUnreached = UINT32_MAX;
  std::vector<uint32_t> dist(n, kUnreached);
  std::deque<uint32_t> frontier;
  for (uint32_t s : seeds) {
    if (s >= n) fail(ErrorCategory::data, "khop_subgraph: seed id out of range");
    if (dist[s] != 0) {
      dist[s] = 0;
      frontier.push_back(s);
    }
  }
  // Undirected BFS across all relations.
  while (!frontier.empty()) {
    uint32_t e = frontier.front();
    frontier.pop_front();
    if (dist[e] >= k) continue;
    for (size_t r = 0; r < g.relation_count(); ++r) {
      for (uint32_t nb : g.out_neighbors(e, static_cast<uint32_t>(r))) {
        if (dist[nb] == kUnreached) {
          dist[nb] = dist[e] + 1;
          frontier.push_back(nb);
        }
      }
      for (uint32_t nb : g.in_neighbors(e, static_cast<uint32_t>(r))) {
        if (dist[nb] == kUnreached) {
          dist[nb] = dist[e] + 1;
          frontier.push_back(nb);
        }
      }
    }
  }

  std::vector<RawTriple> kept;
  for (const Triple& t : g.triples()) {
    if (dist[t.head] <= k && dist[t.tail] <= k) {
      kept.push_back({g.entity_name(t.head), g.relation_name(t.relation), g.entity_name(t.tail)});
    }
  }
  return KnowledgeGraph::from_raw(kept);
}

AlignmentTable load_alignment(const std::string& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open alignment file '" + path + "'");
  AlignmentTable table;
  std::map<std::string, std::string> claimed_entity[kDomainCount];
  std::unordered_set<uint32_t> used_entity[kDomainCount];
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag, item, entity;
    if (!std::getline(ss, tag, '\t') || !std::getline(ss, item, '\t') ||
        !std::getline(ss, entity, '\t') || tag.empty() || item.empty() || entity.empty()) {
      fail(ErrorCategory::parse,
           path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    const Domain d = domain_from_tag(tag);
    const int di = domain_index(d);
    auto prev = claimed_entity[di].find(item);
    if (prev != claimed_entity[di].end()) {
      if (prev->second != entity) {
        fail(ErrorCategory::data, path + ":" + std::to_string(line_no) + ": item '" + item +
                                      "' in domain " + tag + " mapped to both '" + prev->second +
                                      "' and '" + entity + "'");
      }
      continue;
    }
    claimed_entity[di].emplace(item, entity);
    if (!g.has_entity(entity)) {
      ++table.dropped_count;
      continue;
    }
    const uint32_t eid = g.entity_id(entity);
    if (!used_entity[di].insert(eid).second) {
      fail(ErrorCategory::data, path + ":" + std::to_string(line_no) + ": entity '" + entity +
                                    "' claimed by more than one item in domain " + tag);
    }
    table.items[di].emplace(item, eid);
  }
  return table;
}

void write_alignment(const std::string& path, const AlignmentTable& table,
                     const KnowledgeGraph& g) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  for (Domain d : {Domain::S, Domain::T}) {
    for (const auto& [item, eid] : table.domain_items(d)) {
      out << domain_tag(d) << '\t' << item << '\t' << g.entity_name(eid) << '\n';
    }
  }
  if (!out) fail(ErrorCategory::io, "write failed for '" + path + "'");
}

}  // namespace kgcdr
