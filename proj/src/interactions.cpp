#include "interactions.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rng.hpp"

namespace kgcdr {

uint32_t UserDict::id_for(const std::string& name) {
  auto it = dict_.find(name);
  if (it != dict_.end()) return it->second;
  uint32_t id = static_cast<uint32_t>(names_.size());
  dict_.emplace(name, id);
  names_.push_back(name);
  return id;
}

uint32_t UserDict::lookup(const std::string& name) const {
  auto it = dict_.find(name);
  if (it == dict_.end()) fail(ErrorCategory::data, "unknown user '" + name + "'");
  return it->second;
}

uint32_t InteractionMatrix::item_id(const std::string& name) const {
  auto it = item_dict.find(name);
  if (it == item_dict.end()) {
    fail(ErrorCategory::data, "unknown item '" + name + "' in domain " +
                                  std::string(1, domain_tag(domain)));
  }
  return it->second;
}

InteractionMatrix load_ratings(const std::string& path, Domain domain,
                               std::shared_ptr<UserDict> users) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open ratings file '" + path + "'");
  if (!users) fail(ErrorCategory::config, "load_ratings: user dictionary is required");

  InteractionMatrix m;
  m.domain = domain;
  m.users = users;

  // (user,item) -> index into records, for keep-last duplicate handling
  std::unordered_map<uint64_t, size_t> seen;

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string user_s, item_s, rating_s;
    if (!std::getline(ss, user_s, '\t') || !std::getline(ss, item_s, '\t') ||
        !std::getline(ss, rating_s, '\t') || user_s.empty() || item_s.empty() ||
        rating_s.empty()) {
      fail(ErrorCategory::parse,
           path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    int rating = 0;
    try {
      size_t pos = 0;
      rating = std::stoi(rating_s, &pos);
      if (pos != rating_s.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorCategory::parse, path + ":" + std::to_string(line_no) +
                                     ": rating '" + rating_s + "' is not an integer");
    }
    if (rating < 1 || rating > 5) {
      fail(ErrorCategory::data, path + ":" + std::to_string(line_no) + ": rating " +
                                    std::to_string(rating) + " outside 1..5");
    }
    const uint32_t user = users->id_for(user_s);
    uint32_t item;
    auto it = m.item_dict.find(item_s);
    if (it != m.item_dict.end()) {
      item = it->second;
    } else {
      item = static_cast<uint32_t>(m.item_names.size());
      m.item_dict.emplace(item_s, item);
      m.item_names.push_back(item_s);
    }
    const uint64_t key = (static_cast<uint64_t>(user) << 32) | item;
    auto dup = seen.find(key);
    if (dup != seen.end()) {
      m.records[dup->second].rating = static_cast<uint8_t>(rating);
      ++m.duplicate_warnings;
      continue;
    }
    seen.emplace(key, m.records.size());
    m.records.push_back({user, item, static_cast<uint8_t>(rating)});
  }
  return m;
}

void write_ratings(const std::string& path, const InteractionMatrix& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  for (const Record& r : m.records) {
    out << m.users->name(r.user) << '\t' << m.item_names[r.item] << '\t'
        << static_cast<int>(r.rating) << '\n';
  }
  if (!out) fail(ErrorCategory::io, "write failed for '" + path + "'");
}

double normalize_rating(int rating) {
  if (rating < 1 || rating > 5) {
    fail(ErrorCategory::data, "normalize_rating: rating " + std::to_string(rating) +
                                  " outside 1..5");
  }
  return (rating - 1) / 4.0;
}

SplitPart split_standard(const InteractionMatrix& m, uint64_t seed) {
  if (m.records.size() < 5) {
    fail(ErrorCategory::data, "split_standard: need at least 5 records, have " +
                                  std::to_string(m.records.size()));
  }
  std::vector<Record> shuffled = m.records;
  Rng rng(Rng::derive(seed, "split_standard"));
  rng.shuffle(shuffled);
  const size_t n = shuffled.size();
  const size_t n_val = n / 5;
  const size_t n_test = n / 5;
  const size_t n_train = n - n_val - n_test;
  SplitPart part;
  part.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  part.validation.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
  part.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
  return part;
}

SplitPart split_cold_start(const InteractionMatrix& m, double cold_fraction, uint64_t seed,
                           std::vector<uint32_t>* cold_items_out) {
  if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) {
    fail(ErrorCategory::config, "split_cold_start: cold_fraction must lie in (0,1)");
  }
  // Candidates are the items that actually have records.
  std::vector<uint32_t> rated_items;
  {
    std::vector<bool> has(m.n_items(), false);
    for (const Record& r : m.records) has[r.item] = true;
    for (uint32_t i = 0; i < m.n_items(); ++i) {
      if (has[i]) rated_items.push_back(i);
    }
  }
  const size_t n_cold = static_cast<size_t>(cold_fraction * static_cast<double>(rated_items.size()));
  if (n_cold == 0) {
    fail(ErrorCategory::config, "split_cold_start: cold item set is empty at fraction " +
                                    std::to_string(cold_fraction));
  }
  if (n_cold >= rated_items.size()) {
    fail(ErrorCategory::config, "split_cold_start: cold item set covers all rated items");
  }
  Rng rng(Rng::derive(seed, "split_cold_start"));
  rng.shuffle(rated_items);
  std::vector<bool> is_cold(m.n_items(), false);
  for (size_t i = 0; i < n_cold; ++i) is_cold[rated_items[i]] = true;
  if (cold_items_out) {
    cold_items_out->assign(rated_items.begin(), rated_items.begin() + n_cold);
    std::sort(cold_items_out->begin(), cold_items_out->end());
  }

  SplitPart part;
  std::vector<Record> warm;
  for (const Record& r : m.records) {
    if (is_cold[r.item]) {
      part.test.push_back(r);
    } else {
      warm.push_back(r);
    }
  }
  rng.shuffle(warm);
  const size_t n_val = warm.size() / 4;
  part.validation.assign(warm.begin(), warm.begin() + n_val);
  part.train.assign(warm.begin() + n_val, warm.end());
  return part;
}

DatasetSplit split_dataset(const InteractionMatrix& s, const InteractionMatrix& t, SplitMode mode,
                           double cold_fraction, uint64_t seed) {
  DatasetSplit split;
  split.mode = mode;
  split.cold_fraction = mode == SplitMode::cold_start ? cold_fraction : 0.0;
  for (Domain d : {Domain::S, Domain::T}) {
    const InteractionMatrix& m = d == Domain::S ? s : t;
    const uint64_t domain_seed = Rng::derive(seed, d == Domain::S ? "domain_s" : "domain_t");
    split.part(d) = mode == SplitMode::standard
                        ? split_standard(m, domain_seed)
                        : split_cold_start(m, cold_fraction, domain_seed);
  }
  return split;
}

}  // namespace kgcdr
