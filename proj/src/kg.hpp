#ifndef KGCDR_KG_HPP
#define KGCDR_KG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace kgcdr {

struct RawTriple {
  std::string head;
  std::string relation;
  std::string tail;

  bool operator==(const RawTriple& o) const {
    return head == o.head && relation == o.relation && tail == o.tail;
  }
};

struct Triple {
  uint32_t head;
  uint32_t relation;
  uint32_t tail;
};

/// Immutable multi-relational graph with dense entity/relation ids and
/// per-(entity, relation) adjacency. Built by filter_kg / khop_subgraph.
class KnowledgeGraph {
 public:
  size_t entity_count() const { return entity_names_.size(); }
  size_t relation_count() const { return relation_names_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }

  const std::string& entity_name(uint32_t id) const { return entity_names_[id]; }
  const std::string& relation_name(uint32_t id) const { return relation_names_[id]; }

  bool has_entity(const std::string& name) const { return entity_dict_.count(name) != 0; }
  uint32_t entity_id(const std::string& name) const;
  uint32_t relation_id(const std::string& name) const;

  /// Heads h of triples (h, r, e): the message sources for entity e under r.
  const std::vector<uint32_t>& in_neighbors(uint32_t entity, uint32_t relation) const {
    return in_adj_[relation][entity];
  }
  /// Tails t of triples (e, r, t).
  const std::vector<uint32_t>& out_neighbors(uint32_t entity, uint32_t relation) const {
    return out_adj_[relation][entity];
  }

  bool has_triple(uint32_t h, uint32_t r, uint32_t t) const;

  static KnowledgeGraph from_raw(const std::vector<RawTriple>& raw);

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, uint32_t> entity_dict_;
  std::unordered_map<std::string, uint32_t> relation_dict_;
  std::vector<Triple> triples_;
  // adjacency[relation][entity] -> neighbor list, insertion order = triple order
  std::vector<std::vector<std::vector<uint32_t>>> in_adj_;
  std::vector<std::vector<std::vector<uint32_t>>> out_adj_;
};

/// Parses a tab-separated triple file. Order preserved; blank lines skipped.
std::vector<RawTriple> load_triples(const std::string& path);

void write_triples(const std::string& path, const std::vector<RawTriple>& triples);

std::vector<RawTriple> to_raw_triples(const KnowledgeGraph& g);

/// Deduplicates, then iterates relation-count and entity-degree filtering to a
/// fixed point, so both thresholds hold simultaneously in the result.
KnowledgeGraph filter_kg(const std::vector<RawTriple>& raw, uint32_t min_entity_freq,
                         uint32_t min_relation_triples);

/// Subgraph of the triples whose endpoints both lie within undirected
/// distance k of a seed. Ids are re-densified.
KnowledgeGraph khop_subgraph(const KnowledgeGraph& g, const std::vector<uint32_t>& seeds,
                             uint32_t k);

/// Partial map (domain, item string) -> dense entity id. Items whose entity
/// is not in the graph are dropped and counted in dropped_count.
struct AlignmentTable {
  std::map<std::string, uint32_t> items[kDomainCount];
  size_t dropped_count = 0;

  const std::map<std::string, uint32_t>& domain_items(Domain d) const {
    return items[domain_index(d)];
  }
  size_t size() const { return items[0].size() + items[1].size(); }
};

AlignmentTable load_alignment(const std::string& path, const KnowledgeGraph& g);

void write_alignment(const std::string& path, const AlignmentTable& table,
                     const KnowledgeGraph& g);

}  // namespace kgcdr

#endif
