#ifndef KGCDR_NEUCMF_HPP
#define KGCDR_NEUCMF_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "interactions.hpp"
#include "kg.hpp"
#include "params.hpp"

namespace kgcdr {

/// Stage-2 model family. `plain` is the two-tower collective model with no
/// KG input; the three kg_* variants differ in how the frozen entity
/// embeddings enter the prediction path (or the loss, for mul).
enum class Variant { plain, nmf_kg, ncmf_kg_t, ncmf_kg_mul };

Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);
bool variant_uses_kg(Variant v);

struct TrainConfig {
  int embedding_dim = 16;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;  // the lambda of the total loss
  int max_epochs = 200;
  int early_stop_window = 10;
  int batch_size = 128;
  int mi_batch_size = 0;  // positives per MI batch; 0 means batch_size
  uint64_t seed = 1;

  void validate() const;
  int effective_mi_batch() const { return mi_batch_size > 0 ? mi_batch_size : batch_size; }
};

struct ItemRef {
  Domain domain;
  uint32_t item;
};

/// Shared user table, per-domain item tables and affine+sigmoid heads, plus
/// the variant-specific coupling parameters (MI discriminator, KG refiner,
/// unknown-entity vectors). KG embeddings are frozen constants.
class NeuCmfModel {
 public:
  NeuCmfModel(Variant variant, size_t n_users, size_t n_items_s, size_t n_items_t,
              Tensor2 kg_embeddings, std::vector<int64_t> item_entity_s,
              std::vector<int64_t> item_entity_t, const TrainConfig& cfg);

  double predict(uint32_t user, ItemRef item) const;

  Variant variant() const { return variant_; }
  size_t dim() const { return dim_; }
  size_t kg_dim() const { return kg_embeddings_.cols; }
  size_t n_users() const { return n_users_; }
  size_t n_items(Domain d) const { return item_entity_[domain_index(d)].size(); }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  const Tensor2& kg_embeddings() const { return kg_embeddings_; }
  int64_t item_entity(ItemRef item) const {
    return item_entity_[domain_index(item.domain)][item.item];
  }
  /// Items with a KG row, per domain (the MI sampling pool).
  const std::vector<uint32_t>& aligned_items(Domain d) const {
    return aligned_items_[domain_index(d)];
  }

  static std::string item_table_name(Domain d);
  static std::string head_weight_name(Domain d);
  static std::string head_bias_name(Domain d);
  static std::string unknown_entity_name(Domain d);

  size_t head_input_width() const;

 private:
  friend struct NeuCmfGradOps;
  Variant variant_;
  size_t n_users_;
  size_t dim_;
  ParameterStore params_;
  Tensor2 kg_embeddings_;
  std::vector<int64_t> item_entity_[kDomainCount];
  std::vector<uint32_t> aligned_items_[kDomainCount];
};

/// Mean squared error between predictions and normalized ratings.
double domain_loss(const NeuCmfModel& model, const std::vector<Record>& records, Domain domain);

/// sigmoid(itemᵀ · W · kg): probability that the pair is genuine.
double mi_discriminator(const NeuCmfModel& model, std::span<const double> item_embedding,
                        std::span<const double> kg_embedding);

struct MiPair {
  ItemRef item;
  uint32_t kg_row;
  uint8_t label;  // 1 true pair, 0 shuffled
};
using MiBatch = std::vector<MiPair>;

/// batch_size positives (half per domain, sampled from aligned items), plus
/// the same items paired with derangement-shuffled KG rows as negatives.
MiBatch make_mi_batch(const NeuCmfModel& model, int batch_size, Rng& rng);

/// Mean binary cross-entropy of discriminator scores over the batch.
double mi_loss(const NeuCmfModel& model, const MiBatch& batch);

/// L_S + L_T + L_mul + lambda * sum of squared parameters. Empty record lists
/// and an empty MI batch contribute zero.
double total_loss(const NeuCmfModel& model, const std::vector<Record>& records_s,
                  const std::vector<Record>& records_t, const MiBatch& mi_batch, double lambda);

struct LossParts {
  double loss_s = 0.0;
  double loss_t = 0.0;
  double loss_mi = 0.0;
  double total = 0.0;
};

/// As total_loss, but accumulates the exact gradient (including the
/// regularizer term) into the model's store.
LossParts total_loss_grad(NeuCmfModel& model, const std::vector<Record>& records_s,
                          const std::vector<Record>& records_t, const MiBatch& mi_batch,
                          double lambda);

struct EpochLog {
  int epoch;
  double train_loss_s;
  double train_loss_t;
  double train_loss_mi;
  double validation_loss;
};

struct StageTwoResult {
  NeuCmfModel model;
  std::vector<EpochLog> log;
  int best_epoch;
};

/// Minibatch Adam on the total loss with early stopping on the validation
/// reconstruction loss; returns the parameters of the best epoch. The
/// alignment's entity ids must index rows of `kg_embeddings`.
StageTwoResult train_neucmf(Variant variant, const InteractionMatrix& matrix_s,
                            const InteractionMatrix& matrix_t, const DatasetSplit& split,
                            const Tensor2* kg_embeddings, const AlignmentTable* alignment,
                            const TrainConfig& cfg);

/// dense item id -> KG embedding row (or -1 when unaligned).
std::vector<int64_t> resolve_item_entities(const InteractionMatrix& m,
                                           const AlignmentTable& alignment);

}  // namespace kgcdr

#endif
