#ifndef KGCDR_EVAL_HPP
#define KGCDR_EVAL_HPP

#include <map>
#include <string>
#include <vector>

#include "interactions.hpp"
#include "kg.hpp"

namespace kgcdr {

/// 100 * mean absolute error, the paper-style percentage on unit-scaled
/// ratings.
double mae(const std::vector<double>& predictions, const std::vector<double>& targets);

/// F1 (x100) with ground-truth positive = raw rating >= 4 and predicted
/// positive = normalized prediction >= 0.75. Zero when there are no
/// predicted positives or no true positives.
double f1_at_threshold(const std::vector<double>& predictions,
                       const std::vector<int>& raw_targets);

struct MetricSample {
  double mae = 0.0;
  double f1 = 0.0;
  size_t n_test = 0;
};

struct MetricStats {
  double mae_mean = 0.0;
  double mae_std = 0.0;
  double f1_mean = 0.0;
  double f1_std = 0.0;
  size_t n_seeds = 0;
  size_t n_test = 0;  // from the first seed
};

/// Unbiased sample standard deviation; 0 for a single value.
double sample_std(const std::vector<double>& values);

MetricStats aggregate_samples(const std::vector<MetricSample>& samples);

/// Report rows keyed by (model, setting, domain). `setting` is "standard"
/// or "cold_<fraction>".
struct ReportKey {
  std::string model;
  std::string setting;
  Domain domain;

  bool operator<(const ReportKey& o) const {
    if (model != o.model) return model < o.model;
    if (setting != o.setting) return setting < o.setting;
    return domain_index(domain) < domain_index(o.domain);
  }
};

struct MetricReport {
  std::map<ReportKey, MetricStats> rows;
  std::vector<std::string> seed_errors;

  std::string to_table() const;
  std::string to_records() const;  // model \t domain \t metric \t mean \t std \t n_seeds
};

struct SyntheticSpec {
  int n_users = 300;
  int n_items_s = 200;
  int n_items_t = 200;
  int latent_dim = 8;
  int n_communities = 4;
  double noise = 0.1;
  double density_s = 0.05;
  double density_t = 0.02;
  uint64_t seed = 7;

  void validate() const;
};

struct SyntheticData {
  KnowledgeGraph graph;
  AlignmentTable alignment;
  std::shared_ptr<UserDict> users;
  InteractionMatrix ratings_s;
  InteractionMatrix ratings_t;
};

/// Plants community-structured item factors with user and item main effects;
/// the KG links every item to a community hub shared across domains and to a
/// finer domain-specific attribute entity. Ratings come from thresholded
/// noisy scores subsampled to the target density.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace kgcdr

#endif
