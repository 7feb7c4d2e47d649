#ifndef KGCDR_KG_ENCODER_HPP
#define KGCDR_KG_ENCODER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "kg.hpp"
#include "params.hpp"

namespace kgcdr {

struct Stage1Config {
  int embedding_dim = 16;
  int n_layers = 2;
  int max_epochs = 200;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  bool resample_negatives = true;  // fresh corruptions each epoch
  uint64_t seed = 1;

  void validate() const;
};

struct LabeledTriple {
  Triple triple;
  uint8_t label;  // 1 positive, 0 corrupted
};

using LabeledTripleBatch = std::vector<LabeledTriple>;

/// Non-owning view of one RGCN layer's weights.
struct RgcnLayerRefs {
  const Tensor2* self_weight;
  std::vector<const Tensor2*> relation_weights;  // indexed by dense relation id
};

/// Stage-1 parameters: entity embedding table, per-layer RGCN weights, and
/// the DistMult relation diagonals. All tensors live in one ParameterStore.
class KgEncoderModel {
 public:
  KgEncoderModel(size_t n_entities, size_t n_relations, const Stage1Config& cfg);

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  int n_layers() const { return n_layers_; }
  size_t n_relations() const { return n_relations_; }
  size_t dim() const { return dim_; }

  Tensor2& entity_embedding() { return params_.value("entity_embedding"); }
  const Tensor2& entity_embedding() const { return params_.value("entity_embedding"); }
  const Tensor2& self_weight(int layer) const;
  const Tensor2& relation_weight(int layer, uint32_t relation) const;
  const Tensor2& relation_diag() const { return params_.value("relation_diag"); }

  RgcnLayerRefs layer_refs(int layer) const;

  static std::string self_weight_name(int layer);
  static std::string relation_weight_name(int layer, uint32_t relation);

 private:
  ParameterStore params_;
  int n_layers_;
  size_t n_relations_;
  size_t dim_;
};

/// One RGCN layer: out_i = relu(h_i·W0 + Σ_r mean_{j ∈ in_r(i)} h_j·W_r).
/// If preact_out is given it receives the pre-activation matrix.
Tensor2 rgcn_layer_forward(const RgcnLayerRefs& layer, const KnowledgeGraph& g,
                           const Tensor2& h_in, Tensor2* preact_out = nullptr);

struct EncodeTrace {
  std::vector<Tensor2> inputs;    // inputs[l] = state entering layer l; inputs[0] = embedding
  std::vector<Tensor2> preacts;   // preacts[l] = pre-activation of layer l
};

Tensor2 encode(const KgEncoderModel& model, const KnowledgeGraph& g,
               EncodeTrace* trace = nullptr);

/// Backpropagates d_out (gradient w.r.t. encode's output) through every layer
/// into the store's grad buffers, including the entity embedding table.
void encode_backward(KgEncoderModel& model, const KnowledgeGraph& g, const EncodeTrace& trace,
                     const Tensor2& d_out);

double distmult_raw(std::span<const double> e_head, std::span<const double> r_diag,
                    std::span<const double> e_tail);

/// Logistic-squashed DistMult score, the probability used by the stage-1 loss.
double distmult_score(std::span<const double> e_head, std::span<const double> r_diag,
                      std::span<const double> e_tail);

/// One corruption per positive (head or tail replaced uniformly; corruptions
/// that exist in g are rejected up to 100 retries, then accepted).
LabeledTripleBatch sample_negatives(const KnowledgeGraph& g, const std::vector<Triple>& positives,
                                    Rng& rng);

/// Mean binary cross-entropy of DistMult probabilities over the batch,
/// probabilities clamped to [1e-12, 1-1e-12] before the logs.
double kg_loss(const KgEncoderModel& model, const KnowledgeGraph& g,
               const LabeledTripleBatch& batch);

/// As kg_loss, but also accumulates gradients into the model's store.
double kg_loss_grad(KgEncoderModel& model, const KnowledgeGraph& g,
                    const LabeledTripleBatch& batch);

struct Stage1Result {
  Tensor2 embeddings;  // n_entities x dim, frozen for stage 2
  std::vector<double> epoch_loss;
};

Stage1Result train_kg_encoder(const KnowledgeGraph& g, const Stage1Config& cfg);

/// Text embedding file: "n d" header, then one row of %.17g values per entity.
void write_embeddings(const std::string& path, const Tensor2& embeddings);
Tensor2 load_embeddings(const std::string& path);

}  // namespace kgcdr

#endif
