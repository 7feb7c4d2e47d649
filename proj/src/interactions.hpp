#ifndef KGCDR_INTERACTIONS_HPP
#define KGCDR_INTERACTIONS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace kgcdr {

/// User id dictionary, shared between the two domains' matrices.
class UserDict {
 public:
  uint32_t id_for(const std::string& name);
  bool has(const std::string& name) const { return dict_.count(name) != 0; }
  uint32_t lookup(const std::string& name) const;
  const std::string& name(uint32_t id) const { return names_[id]; }
  size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, uint32_t> dict_;
};

struct Record {
  uint32_t user;
  uint32_t item;
  uint8_t rating;  // 1..5
};

struct InteractionMatrix {
  Domain domain = Domain::S;
  std::shared_ptr<UserDict> users;
  std::vector<std::string> item_names;
  std::unordered_map<std::string, uint32_t> item_dict;
  std::vector<Record> records;
  size_t duplicate_warnings = 0;

  size_t n_items() const { return item_names.size(); }
  uint32_t item_id(const std::string& name) const;
};

/// Loads one domain's ratings. `users` is the dictionary shared across both
/// domains; pass the same instance when loading the second file.
InteractionMatrix load_ratings(const std::string& path, Domain domain,
                               std::shared_ptr<UserDict> users);

void write_ratings(const std::string& path, const InteractionMatrix& m);

/// Ordinal rating 1..5 -> (r-1)/4 in [0,1].
double normalize_rating(int rating);

enum class SplitMode { standard, cold_start };

struct SplitPart {
  std::vector<Record> train;
  std::vector<Record> validation;
  std::vector<Record> test;

  size_t total() const { return train.size() + validation.size() + test.size(); }
};

/// Shuffle, then 60/20/20 by record count: validation and test take
/// floor(n/5) each, the remainder goes to train.
SplitPart split_standard(const InteractionMatrix& m, uint64_t seed);

/// Samples floor(cold_fraction * #rated-items) items; all of their records
/// become the test set, the rest splits 75/25 into train/validation.
SplitPart split_cold_start(const InteractionMatrix& m, double cold_fraction, uint64_t seed,
                           std::vector<uint32_t>* cold_items_out = nullptr);

struct DatasetSplit {
  SplitPart parts[kDomainCount];
  SplitMode mode = SplitMode::standard;
  double cold_fraction = 0.0;

  SplitPart& part(Domain d) { return parts[domain_index(d)]; }
  const SplitPart& part(Domain d) const { return parts[domain_index(d)]; }
};

DatasetSplit split_dataset(const InteractionMatrix& s, const InteractionMatrix& t, SplitMode mode,
                           double cold_fraction, uint64_t seed);

}  // namespace kgcdr

#endif
