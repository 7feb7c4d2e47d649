#ifndef KGCDR_BASELINES_HPP
#define KGCDR_BASELINES_HPP

#include "neucmf.hpp"

namespace kgcdr {

/// Biased matrix factorization for one domain:
/// sigmoid(global + b_u + b_i + u·i).
class MfModel {
 public:
  MfModel(size_t n_users, size_t n_items, const TrainConfig& cfg);

  double predict(uint32_t user, uint32_t item) const;
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  size_t dim() const { return dim_; }
  size_t n_users() const { return n_users_; }
  size_t n_items() const { return n_items_; }

 private:
  friend struct MfGradOps;
  size_t n_users_;
  size_t n_items_;
  size_t dim_;
  ParameterStore params_;
};

struct MfResult {
  MfModel model;
  std::vector<EpochLog> log;
  int best_epoch;
};

MfResult train_mf(const InteractionMatrix& m, const SplitPart& split, const TrainConfig& cfg);

/// NCF is the single-domain reduction of the plain collective model: same
/// architecture and code path, trained with the other domain left empty.
StageTwoResult train_ncf(const InteractionMatrix& m, const SplitPart& split,
                         const TrainConfig& cfg);

/// Collective MF: shared user table and user bias, per-domain item tables
/// and global/item biases. Trained by alternating per-domain minibatches.
class CmfModel {
 public:
  CmfModel(size_t n_users, size_t n_items_s, size_t n_items_t, const TrainConfig& cfg);

  double predict(uint32_t user, ItemRef item) const;
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  size_t dim() const { return dim_; }
  size_t n_users() const { return n_users_; }
  size_t n_items(Domain d) const { return n_items_[domain_index(d)]; }

  static std::string item_table_name(Domain d);
  static std::string item_bias_name(Domain d);
  static std::string global_bias_name(Domain d);

 private:
  friend struct CmfGradOps;
  size_t n_users_;
  size_t n_items_[kDomainCount];
  size_t dim_;
  ParameterStore params_;
};

struct CmfResult {
  CmfModel model;
  std::vector<EpochLog> log;
  int best_epoch;
};

CmfResult train_cmf(const InteractionMatrix& matrix_s, const InteractionMatrix& matrix_t,
                    const DatasetSplit& split, const TrainConfig& cfg);

}  // namespace kgcdr

#endif
