#include "kg_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "loss_util.hpp"

namespace kgcdr {

void Stage1Config::validate() const {
  if (embedding_dim <= 0) fail(ErrorCategory::config, "stage1: embedding_dim must be > 0");
  if (n_layers < 0) fail(ErrorCategory::config, "stage1: n_layers must be >= 0");
  if (max_epochs < 0) fail(ErrorCategory::config, "stage1: max_epochs must be >= 0");
  if (batch_size <= 0) fail(ErrorCategory::config, "stage1: batch_size must be > 0");
  if (!(learning_rate >= 0.0)) fail(ErrorCategory::config, "stage1: learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) fail(ErrorCategory::config, "stage1: weight_decay must be >= 0");
}

std::string KgEncoderModel::self_weight_name(int layer) {
  return "layer" + std::to_string(layer) + ".self_weight";
}

std::string KgEncoderModel::relation_weight_name(int layer, uint32_t relation) {
  return "layer" + std::to_string(layer) + ".rel_weight." + std::to_string(relation);
}

KgEncoderModel::KgEncoderModel(size_t n_entities, size_t n_relations, const Stage1Config& cfg)
    : n_layers_(cfg.n_layers), n_relations_(n_relations), dim_(cfg.embedding_dim) {
  cfg.validate();
  if (n_entities == 0) fail(ErrorCategory::empty_graph, "kg encoder: graph has no entities");
  auto init_param = [&](const std::string& name, size_t rows, size_t cols, bool embedding_like) {
    Tensor2& t = params_.create(name, rows, cols);
    Rng rng(Rng::derive(cfg.seed, name));
    if (embedding_like) {
      init_uniform(t, rng, -0.05, 0.05);
    } else {
      init_glorot_uniform(t, rng);
    }
  };
  init_param("entity_embedding", n_entities, dim_, true);
  for (int l = 0; l < n_layers_; ++l) {
    init_param(self_weight_name(l), dim_, dim_, false);
    for (uint32_t r = 0; r < n_relations; ++r) {
      init_param(relation_weight_name(l, r), dim_, dim_, false);
    }
  }
  init_param("relation_diag", n_relations, dim_, true);
}

const Tensor2& KgEncoderModel::self_weight(int layer) const {
  return params_.value(self_weight_name(layer));
}

const Tensor2& KgEncoderModel::relation_weight(int layer, uint32_t relation) const {
  return params_.value(relation_weight_name(layer, relation));
}

RgcnLayerRefs KgEncoderModel::layer_refs(int layer) const {
  RgcnLayerRefs refs;
  refs.self_weight = &self_weight(layer);
  refs.relation_weights.reserve(n_relations_);
  for (uint32_t r = 0; r < n_relations_; ++r) {
    refs.relation_weights.push_back(&relation_weight(layer, r));
  }
  return refs;
}

Tensor2 rgcn_layer_forward(const RgcnLayerRefs& layer, const KnowledgeGraph& g,
                           const Tensor2& h_in, Tensor2* preact_out) {
  if (h_in.rows != g.entity_count()) {
    fail(ErrorCategory::shape, "rgcn_layer_forward: state row count != entity count");
  }
  if (layer.self_weight->rows != h_in.cols) {
    fail(ErrorCategory::shape, "rgcn_layer_forward: state width != weight input width");
  }
  if (layer.relation_weights.size() != g.relation_count()) {
    fail(ErrorCategory::shape, "rgcn_layer_forward: one weight per relation required");
  }

  Tensor2 z = matmul(h_in, *layer.self_weight);
  const size_t d_out = z.cols;
  for (uint32_t r = 0; r < g.relation_count(); ++r) {
    const Tensor2& w_r = *layer.relation_weights[r];
    if (w_r.rows != h_in.cols || w_r.cols != d_out) {
      fail(ErrorCategory::shape, "rgcn_layer_forward: relation weight shape mismatch");
    }
    const Tensor2 messages = matmul(h_in, w_r);
    for (size_t i = 0; i < g.entity_count(); ++i) {
      const auto& neigh = g.in_neighbors(static_cast<uint32_t>(i), r);
      if (neigh.empty()) continue;
      double* zrow = z.data.data() + i * d_out;
      const double norm = 1.0 / static_cast<double>(neigh.size());
      for (size_t c = 0; c < d_out; ++c) {
        double acc = 0.0;
        for (uint32_t j : neigh) acc += messages.at(j, c);
        zrow[c] += acc * norm;
      }
    }
  }
  if (preact_out) *preact_out = z;
  Tensor2 out = z;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor2 encode(const KgEncoderModel& model, const KnowledgeGraph& g, EncodeTrace* trace) {
  if (model.entity_embedding().rows != g.entity_count()) {
    fail(ErrorCategory::shape, "encode: embedding rows != entity count");
  }
  Tensor2 h = model.entity_embedding();
  if (trace) {
    trace->inputs.clear();
    trace->preacts.clear();
  }
  for (int l = 0; l < model.n_layers(); ++l) {
    Tensor2 preact;
    if (trace) trace->inputs.push_back(h);
    h = rgcn_layer_forward(model.layer_refs(l), g, h, trace ? &preact : nullptr);
    if (trace) trace->preacts.push_back(std::move(preact));
  }
  return h;
}

void encode_backward(KgEncoderModel& model, const KnowledgeGraph& g, const EncodeTrace& trace,
                     const Tensor2& d_out) {
  Tensor2 dh = d_out;
  for (int l = model.n_layers() - 1; l >= 0; --l) {
    const Tensor2& h_in = trace.inputs[l];
    const Tensor2& z = trace.preacts[l];
    const size_t d_o = z.cols;

    Tensor2 dz = dh;
    for (size_t i = 0; i < dz.data.size(); ++i) {
      if (!(z.data[i] > 0.0)) dz.data[i] = 0.0;
    }

    accumulate_matmul_trans_a(model.params().grad(KgEncoderModel::self_weight_name(l)), h_in, dz);
    Tensor2 dh_prev = matmul_trans_b(dz, model.self_weight(l));

    for (uint32_t r = 0; r < g.relation_count(); ++r) {
      // u = M_rᵀ·dz, the per-source share of aggregated gradient
      Tensor2 u(h_in.rows, d_o);
      bool any = false;
      for (size_t i = 0; i < g.entity_count(); ++i) {
        const auto& neigh = g.in_neighbors(static_cast<uint32_t>(i), r);
        if (neigh.empty()) continue;
        any = true;
        const double norm = 1.0 / static_cast<double>(neigh.size());
        const double* dzrow = dz.data.data() + i * d_o;
        for (uint32_t j : neigh) {
          double* urow = u.data.data() + static_cast<size_t>(j) * d_o;
          for (size_t c = 0; c < d_o; ++c) urow[c] += dzrow[c] * norm;
        }
      }
      if (!any) continue;
      accumulate_matmul_trans_a(model.params().grad(KgEncoderModel::relation_weight_name(l, r)),
                                h_in, u);
      add_scaled(dh_prev, matmul_trans_b(u, model.relation_weight(l, r)), 1.0);
    }
    dh = std::move(dh_prev);
  }
  add_scaled(model.params().grad("entity_embedding"), dh, 1.0);
}

double distmult_raw(std::span<const double> e_head, std::span<const double> r_diag,
                    std::span<const double> e_tail) {
  if (e_head.size() != r_diag.size() || e_head.size() != e_tail.size()) {
    fail(ErrorCategory::shape, "distmult: vector length mismatch");
  }
  // (e_h*e_t)*r keeps the score bitwise symmetric in head and tail.
  double acc = 0.0;
  for (size_t k = 0; k < e_head.size(); ++k) acc += (e_head[k] * e_tail[k]) * r_diag[k];
  return acc;
}

double distmult_score(std::span<const double> e_head, std::span<const double> r_diag,
                      std::span<const double> e_tail) {
  return sigmoid(distmult_raw(e_head, r_diag, e_tail));
}

LabeledTripleBatch sample_negatives(const KnowledgeGraph& g, const std::vector<Triple>& positives,
                                    Rng& rng) {
  if (g.entity_count() == 0) fail(ErrorCategory::empty_graph, "sample_negatives: empty graph");
  LabeledTripleBatch batch;
  batch.reserve(2 * positives.size());
  const uint64_t n_entities = g.entity_count();
  for (const Triple& pos : positives) {
    batch.push_back({pos, 1});
    Triple neg = pos;
    for (int attempt = 0; attempt < 100; ++attempt) {
      neg = pos;
      const uint32_t replacement = static_cast<uint32_t>(rng.uniform_index(n_entities));
      if (rng.coin()) {
        neg.head = replacement;
      } else {
        neg.tail = replacement;
      }
      if (!g.has_triple(neg.head, neg.relation, neg.tail)) break;
    }
    batch.push_back({neg, 0});
  }
  return batch;
}

double kg_loss(const KgEncoderModel& model, const KnowledgeGraph& g,
               const LabeledTripleBatch& batch) {
  if (batch.empty()) fail(ErrorCategory::train, "kg_loss: empty batch");
  const Tensor2 h = encode(model, g);
  const Tensor2& diag = model.relation_diag();
  double total = 0.0;
  for (const LabeledTriple& s : batch) {
    const double raw =
        distmult_raw(h.row(s.triple.head), diag.row(s.triple.relation), h.row(s.triple.tail));
    total += bce_on_raw(raw, s.label).loss;
  }
  return total / static_cast<double>(batch.size());
}

double kg_loss_grad(KgEncoderModel& model, const KnowledgeGraph& g,
                    const LabeledTripleBatch& batch) {
  if (batch.empty()) fail(ErrorCategory::train, "kg_loss: empty batch");
  EncodeTrace trace;
  const Tensor2 h = encode(model, g, &trace);
  const Tensor2& diag = model.relation_diag();
  Tensor2& d_diag = model.params().grad("relation_diag");
  Tensor2 dh(h.rows, h.cols);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  double total = 0.0;
  for (const LabeledTriple& s : batch) {
    const auto eh = h.row(s.triple.head);
    const auto et = h.row(s.triple.tail);
    const auto rd = diag.row(s.triple.relation);
    const BceTerm term = bce_on_raw(distmult_raw(eh, rd, et), s.label);
    total += term.loss;
    const double scale = term.d_raw * inv_n;
    if (scale == 0.0) continue;
    double* dh_h = dh.data.data() + s.triple.head * dh.cols;
    double* dh_t = dh.data.data() + s.triple.tail * dh.cols;
    double* dd = d_diag.data.data() + s.triple.relation * d_diag.cols;
    for (size_t k = 0; k < h.cols; ++k) {
      dh_h[k] += scale * rd[k] * et[k];
      dh_t[k] += scale * rd[k] * eh[k];
      dd[k] += scale * eh[k] * et[k];
    }
  }
  encode_backward(model, g, trace, dh);
  return total * inv_n;
}

Stage1Result train_kg_encoder(const KnowledgeGraph& g, const Stage1Config& cfg) {
  cfg.validate();
  if (g.triples().empty()) fail(ErrorCategory::empty_graph, "train_kg_encoder: graph is empty");

  KgEncoderModel model(g.entity_count(), g.relation_count(), cfg);
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = cfg.weight_decay;

  std::vector<Triple> positives = g.triples();
  LabeledTripleBatch fixed_negatives;
  if (!cfg.resample_negatives) {
    Rng neg_rng(Rng::derive(cfg.seed, "stage1_negatives"));
    fixed_negatives = sample_negatives(g, positives, neg_rng);
  }

  Stage1Result result;
  uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng epoch_rng(Rng::derive(cfg.seed, "stage1_epoch" + std::to_string(epoch)));
    double epoch_total = 0.0;
    size_t epoch_samples = 0;

    if (cfg.resample_negatives) {
      epoch_rng.shuffle(positives);
      for (size_t start = 0; start < positives.size();
           start += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(positives.size(), start + static_cast<size_t>(cfg.batch_size));
        std::vector<Triple> slice(positives.begin() + start, positives.begin() + end);
        const LabeledTripleBatch batch = sample_negatives(g, slice, epoch_rng);
        const double loss = kg_loss_grad(model, g, batch);
        if (!std::isfinite(loss)) {
          fail(ErrorCategory::train,
               "train_kg_encoder: non-finite loss at epoch " + std::to_string(epoch));
        }
        adam_step(model.params(), adam, ++step);
        epoch_total += loss * static_cast<double>(batch.size());
        epoch_samples += batch.size();
      }
    } else {
      LabeledTripleBatch samples = fixed_negatives;
      epoch_rng.shuffle(samples);
      for (size_t start = 0; start < samples.size();
           start += 2 * static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(samples.size(), start + 2 * static_cast<size_t>(cfg.batch_size));
        const LabeledTripleBatch batch(samples.begin() + start, samples.begin() + end);
        const double loss = kg_loss_grad(model, g, batch);
        if (!std::isfinite(loss)) {
          fail(ErrorCategory::train,
               "train_kg_encoder: non-finite loss at epoch " + std::to_string(epoch));
        }
        adam_step(model.params(), adam, ++step);
        epoch_total += loss * static_cast<double>(batch.size());
        epoch_samples += batch.size();
      }
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_samples));
  }

  result.embeddings = encode(model, g);
  if (!result.embeddings.all_finite()) {
    fail(ErrorCategory::train, "train_kg_encoder: non-finite embeddings after training");
  }
  return result;
}

void write_embeddings(const std::string& path, const Tensor2& embeddings) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  out << embeddings.rows << ' ' << embeddings.cols << '\n';
  char buf[40];
  for (size_t i = 0; i < embeddings.rows; ++i) {
    for (size_t j = 0; j < embeddings.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", embeddings.at(i, j));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorCategory::io, "write failed for '" + path + "'");
}

Tensor2 load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open embedding file '" + path + "'");
  size_t n = 0, d = 0;
  if (!(in >> n >> d)) fail(ErrorCategory::parse, "embedding file '" + path + "': bad header");
  Tensor2 emb(n, d);
  for (size_t i = 0; i < n * d; ++i) {
    if (!(in >> emb.data[i])) {
      fail(ErrorCategory::parse, "embedding file '" + path + "': truncated values");
    }
  }
  if (!emb.all_finite()) {
    fail(ErrorCategory::data, "embedding file '" + path + "': non-finite values");
  }
  return emb;
}

}  // namespace kgcdr
