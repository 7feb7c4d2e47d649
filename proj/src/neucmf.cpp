#include "neucmf.hpp"

#include <algorithm>
#include <cmath>

#include "loss_util.hpp"

namespace kgcdr {

Variant variant_from_string(const std::string& s) {
  if (s == "neucmf") return Variant::plain;
  if (s == "nmf_kg") return Variant::nmf_kg;
  if (s == "ncmf_kg_t") return Variant::ncmf_kg_t;
  if (s == "ncmf_kg_mul") return Variant::ncmf_kg_mul;
  fail(ErrorCategory::config, "unknown model variant '" + s + "'");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::plain: return "neucmf";
    case Variant::nmf_kg: return "nmf_kg";
    case Variant::ncmf_kg_t: return "ncmf_kg_t";
    case Variant::ncmf_kg_mul: return "ncmf_kg_mul";
  }
  return "?";
}

bool variant_uses_kg(Variant v) { return v != Variant::plain; }

void TrainConfig::validate() const {
  if (embedding_dim <= 0) fail(ErrorCategory::config, "train: embedding_dim must be > 0");
  if (!(learning_rate >= 0.0)) fail(ErrorCategory::config, "train: learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) fail(ErrorCategory::config, "train: weight_decay must be >= 0");
  if (max_epochs < 0) fail(ErrorCategory::config, "train: max_epochs must be >= 0");
  if (early_stop_window < 1) fail(ErrorCategory::config, "train: early_stop_window must be >= 1");
  if (batch_size <= 0) fail(ErrorCategory::config, "train: batch_size must be > 0");
  if (mi_batch_size < 0) fail(ErrorCategory::config, "train: mi_batch_size must be >= 0");
}

std::string NeuCmfModel::item_table_name(Domain d) {
  return d == Domain::S ? "item_table.S" : "item_table.T";
}
std::string NeuCmfModel::head_weight_name(Domain d) {
  return d == Domain::S ? "head.S.weight" : "head.T.weight";
}
std::string NeuCmfModel::head_bias_name(Domain d) {
  return d == Domain::S ? "head.S.bias" : "head.T.bias";
}
std::string NeuCmfModel::unknown_entity_name(Domain d) {
  return d == Domain::S ? "kg_unknown.S" : "kg_unknown.T";
}

size_t NeuCmfModel::head_input_width() const {
  switch (variant_) {
    case Variant::plain:
    case Variant::ncmf_kg_mul:
      return 2 * dim_;
    case Variant::nmf_kg:
      return 2 * dim_ + kg_embeddings_.cols;
    case Variant::ncmf_kg_t:
      return 3 * dim_;
  }
  return 0;
}

NeuCmfModel::NeuCmfModel(Variant variant, size_t n_users, size_t n_items_s, size_t n_items_t,
                         Tensor2 kg_embeddings, std::vector<int64_t> item_entity_s,
                         std::vector<int64_t> item_entity_t, const TrainConfig& cfg)
    : variant_(variant),
      n_users_(n_users),
      dim_(static_cast<size_t>(cfg.embedding_dim)),
      kg_embeddings_(std::move(kg_embeddings)) {
  cfg.validate();
  if (variant_uses_kg(variant_)) {
    if (kg_embeddings_.rows == 0 || kg_embeddings_.cols == 0) {
      fail(ErrorCategory::config, std::string(variant_name(variant_)) +
                                      " requires frozen KG embeddings");
    }
  }
  item_entity_s.resize(n_items_s, -1);
  item_entity_t.resize(n_items_t, -1);
  item_entity_[0] = std::move(item_entity_s);
  item_entity_[1] = std::move(item_entity_t);
  for (int di = 0; di < kDomainCount; ++di) {
    for (size_t i = 0; i < item_entity_[di].size(); ++i) {
      const int64_t ent = item_entity_[di][i];
      if (ent >= 0) {
        if (static_cast<size_t>(ent) >= kg_embeddings_.rows) {
          fail(ErrorCategory::shape, "item entity row out of range of KG embeddings");
        }
        aligned_items_[di].push_back(static_cast<uint32_t>(i));
      }
    }
  }

  auto add = [&](const std::string& name, size_t rows, size_t cols, bool embedding_like) {
    Tensor2& t = params_.create(name, rows, cols);
    Rng rng(Rng::derive(cfg.seed, name));
    if (embedding_like) {
      init_uniform(t, rng, -0.05, 0.05);
    } else {
      init_glorot_uniform(t, rng);
    }
  };

  add("user_table", n_users, dim_, true);
  add(item_table_name(Domain::S), n_items_s, dim_, true);
  add(item_table_name(Domain::T), n_items_t, dim_, true);
  const size_t head_w = head_input_width();
  add(head_weight_name(Domain::S), head_w, 1, false);
  params_.create(head_bias_name(Domain::S), 1, 1);
  add(head_weight_name(Domain::T), head_w, 1, false);
  params_.create(head_bias_name(Domain::T), 1, 1);

  if (variant_ == Variant::ncmf_kg_mul) {
    add("disc_weight", dim_, kg_embeddings_.cols, false);
  }
  if (variant_ == Variant::ncmf_kg_t) {
    add("refiner.weight", kg_embeddings_.cols, dim_, false);
    params_.create("refiner.bias", 1, dim_);
  }
  if (variant_ == Variant::nmf_kg || variant_ == Variant::ncmf_kg_t) {
    add(unknown_entity_name(Domain::S), 1, kg_embeddings_.cols, true);
    add(unknown_entity_name(Domain::T), 1, kg_embeddings_.cols, true);
  }
}

namespace {

// Forward pieces of one prediction, kept for the backward pass.
struct PredictTrace {
  double score = 0.0;
  double prob = 0.0;
  std::vector<double> kg_input;       // raw KG (or unknown) vector, fusion variants
  std::vector<double> refiner_preact; // ncmf_kg_t only
  std::vector<double> refined;        // ncmf_kg_t only
  bool used_unknown = false;
};

}  // namespace

struct NeuCmfGradOps {
  static PredictTrace forward(const NeuCmfModel& m, uint32_t user, ItemRef item) {
    if (user >= m.n_users_) fail(ErrorCategory::data, "predict: user id out of range");
    const int di = domain_index(item.domain);
    if (item.item >= m.item_entity_[di].size()) {
      fail(ErrorCategory::data, "predict: item id out of range");
    }
    const ParameterStore& p = m.params_;
    const auto u = p.value("user_table").row(user);
    const auto iv = p.value(NeuCmfModel::item_table_name(item.domain)).row(item.item);
    const auto w = p.value(NeuCmfModel::head_weight_name(item.domain));
    const double bias = p.value(NeuCmfModel::head_bias_name(item.domain)).data[0];
    const size_t d = m.dim_;

    PredictTrace tr;
    double s = bias;
    for (size_t k = 0; k < d; ++k) s += w.data[k] * u[k];
    for (size_t k = 0; k < d; ++k) s += w.data[d + k] * iv[k];

    if (m.variant_ == Variant::nmf_kg || m.variant_ == Variant::ncmf_kg_t) {
      const int64_t ent = m.item_entity_[di][item.item];
      if (ent >= 0) {
        const auto row = m.kg_embeddings_.row(static_cast<size_t>(ent));
        tr.kg_input.assign(row.begin(), row.end());
      } else {
        const auto row = p.value(NeuCmfModel::unknown_entity_name(item.domain)).row(0);
        tr.kg_input.assign(row.begin(), row.end());
        tr.used_unknown = true;
      }
      if (m.variant_ == Variant::nmf_kg) {
        for (size_t k = 0; k < tr.kg_input.size(); ++k) s += w.data[2 * d + k] * tr.kg_input[k];
      } else {
        const Tensor2& rw = p.value("refiner.weight");
        const Tensor2& rb = p.value("refiner.bias");
        tr.refiner_preact.assign(d, 0.0);
        for (size_t k = 0; k < d; ++k) tr.refiner_preact[k] = rb.data[k];
        for (size_t j = 0; j < rw.rows; ++j) {
          const double x = tr.kg_input[j];
          if (x == 0.0) continue;
          const double* wrow = rw.data.data() + j * rw.cols;
          for (size_t k = 0; k < d; ++k) tr.refiner_preact[k] += x * wrow[k];
        }
        tr.refined.assign(d, 0.0);
        for (size_t k = 0; k < d; ++k) {
          tr.refined[k] = tr.refiner_preact[k] > 0.0 ? tr.refiner_preact[k] : 0.0;
        }
        for (size_t k = 0; k < d; ++k) s += w.data[2 * d + k] * tr.refined[k];
      }
    }
    tr.score = s;
    tr.prob = sigmoid(s);
    return tr;
  }

  /// Accumulates gradients for one record given d(loss)/d(score).
  static void backward(NeuCmfModel& m, uint32_t user, ItemRef item, const PredictTrace& tr,
                       double d_score) {
    if (d_score == 0.0) return;
    ParameterStore& p = m.params_;
    const size_t d = m.dim_;
    const auto u = p.value("user_table").row(user);
    const auto iv = p.value(NeuCmfModel::item_table_name(item.domain)).row(item.item);
    const Tensor2& w = p.value(NeuCmfModel::head_weight_name(item.domain));

    Tensor2& dw = p.grad(NeuCmfModel::head_weight_name(item.domain));
    Tensor2& db = p.grad(NeuCmfModel::head_bias_name(item.domain));
    auto du = p.grad("user_table").row(user);
    auto div = p.grad(NeuCmfModel::item_table_name(item.domain)).row(item.item);

    db.data[0] += d_score;
    for (size_t k = 0; k < d; ++k) {
      dw.data[k] += d_score * u[k];
      dw.data[d + k] += d_score * iv[k];
      du[k] += d_score * w.data[k];
      div[k] += d_score * w.data[d + k];
    }

    if (m.variant_ == Variant::nmf_kg) {
      const size_t dk = tr.kg_input.size();
      for (size_t k = 0; k < dk; ++k) dw.data[2 * d + k] += d_score * tr.kg_input[k];
      if (tr.used_unknown) {
        auto dun = p.grad(NeuCmfModel::unknown_entity_name(item.domain)).row(0);
        for (size_t k = 0; k < dk; ++k) dun[k] += d_score * w.data[2 * d + k];
      }
    } else if (m.variant_ == Variant::ncmf_kg_t) {
      const Tensor2& rw = p.value("refiner.weight");
      Tensor2& drw = p.grad("refiner.weight");
      Tensor2& drb = p.grad("refiner.bias");
      std::vector<double> d_pre(d, 0.0);
      for (size_t k = 0; k < d; ++k) {
        dw.data[2 * d + k] += d_score * tr.refined[k];
        if (tr.refiner_preact[k] > 0.0) d_pre[k] = d_score * w.data[2 * d + k];
      }
      for (size_t k = 0; k < d; ++k) drb.data[k] += d_pre[k];
      for (size_t j = 0; j < rw.rows; ++j) {
        const double x = tr.kg_input[j];
        double* drow = drw.data.data() + j * rw.cols;
        for (size_t k = 0; k < d; ++k) drow[k] += x * d_pre[k];
      }
      if (tr.used_unknown) {
        auto dun = p.grad(NeuCmfModel::unknown_entity_name(item.domain)).row(0);
        for (size_t j = 0; j < rw.rows; ++j) {
          const double* wrow = rw.data.data() + j * rw.cols;
          double acc = 0.0;
          for (size_t k = 0; k < d; ++k) acc += wrow[k] * d_pre[k];
          dun[j] += acc;
        }
      }
    }
  }
};

double NeuCmfModel::predict(uint32_t user, ItemRef item) const {
  return NeuCmfGradOps::forward(*this, user, item).prob;
}

double domain_loss(const NeuCmfModel& model, const std::vector<Record>& records, Domain domain) {
  if (records.empty()) fail(ErrorCategory::eval, "domain_loss: empty record list");
  double total = 0.0;
  for (const Record& r : records) {
    const double pred = model.predict(r.user, {domain, r.item});
    const double err = pred - normalize_rating(r.rating);
    total += err * err;
  }
  return total / static_cast<double>(records.size());
}

double mi_discriminator(const NeuCmfModel& model, std::span<const double> item_embedding,
                        std::span<const double> kg_embedding) {
  const Tensor2& w = model.params().value("disc_weight");
  if (item_embedding.size() != w.rows || kg_embedding.size() != w.cols) {
    fail(ErrorCategory::shape, "mi_discriminator: vector widths do not match disc_weight");
  }
  double raw = 0.0;
  for (size_t i = 0; i < w.rows; ++i) {
    const double xi = item_embedding[i];
    if (xi == 0.0) continue;
    const double* wrow = w.data.data() + i * w.cols;
    double acc = 0.0;
    for (size_t j = 0; j < w.cols; ++j) acc += wrow[j] * kg_embedding[j];
    raw += xi * acc;
  }
  return sigmoid(raw);
}

MiBatch make_mi_batch(const NeuCmfModel& model, int batch_size, Rng& rng) {
  if (batch_size < 2) fail(ErrorCategory::config, "make_mi_batch: batch_size must be >= 2");
  const int per_domain = std::max(1, batch_size / 2);
  for (Domain d : {Domain::S, Domain::T}) {
    if (model.aligned_items(d).empty()) {
      fail(ErrorCategory::config, std::string("make_mi_batch: no aligned items in domain ") +
                                      domain_tag(d));
    }
  }

  MiBatch positives;
  positives.reserve(2 * per_domain);
  for (Domain d : {Domain::S, Domain::T}) {
    const auto& pool = model.aligned_items(d);
    for (int i = 0; i < per_domain; ++i) {
      const uint32_t item = pool[rng.uniform_index(pool.size())];
      const int64_t ent = model.item_entity({d, item});
      positives.push_back({{d, item}, static_cast<uint32_t>(ent), 1});
    }
  }

  // Derangement-style shuffle of the KG rows across the positives.
  const size_t n = positives.size();
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  for (size_t i = 0; i < n; ++i) {
    if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % n]);
  }

  MiBatch batch = positives;
  for (size_t i = 0; i < n; ++i) {
    batch.push_back({positives[i].item, positives[perm[i]].kg_row, 0});
  }
  return batch;
}

double mi_loss(const NeuCmfModel& model, const MiBatch& batch) {
  if (batch.empty()) fail(ErrorCategory::eval, "mi_loss: empty batch");
  const ParameterStore& p = model.params();
  double total = 0.0;
  for (const MiPair& pair : batch) {
    const auto item_emb =
        p.value(NeuCmfModel::item_table_name(pair.item.domain)).row(pair.item.item);
    const auto kg_emb = model.kg_embeddings().row(pair.kg_row);
    const Tensor2& w = p.value("disc_weight");
    double raw = 0.0;
    for (size_t i = 0; i < w.rows; ++i) {
      const double* wrow = w.data.data() + i * w.cols;
      double acc = 0.0;
      for (size_t j = 0; j < w.cols; ++j) acc += wrow[j] * kg_emb[j];
      raw += item_emb[i] * acc;
    }
    total += bce_on_raw(raw, pair.label).loss;
  }
  return total / static_cast<double>(batch.size());
}

namespace {

double mi_loss_grad(NeuCmfModel& model, const MiBatch& batch) {
  ParameterStore& p = model.params();
  const Tensor2& w = p.value("disc_weight");
  Tensor2& dw = p.grad("disc_weight");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const MiPair& pair : batch) {
    const auto item_emb =
        p.value(NeuCmfModel::item_table_name(pair.item.domain)).row(pair.item.item);
    const auto kg_emb = model.kg_embeddings().row(pair.kg_row);
    double raw = 0.0;
    for (size_t i = 0; i < w.rows; ++i) {
      const double* wrow = w.data.data() + i * w.cols;
      double acc = 0.0;
      for (size_t j = 0; j < w.cols; ++j) acc += wrow[j] * kg_emb[j];
      raw += item_emb[i] * acc;
    }
    const BceTerm term = bce_on_raw(raw, pair.label);
    total += term.loss;
    const double scale = term.d_raw * inv_n;
    if (scale == 0.0) continue;
    auto d_item = p.grad(NeuCmfModel::item_table_name(pair.item.domain)).row(pair.item.item);
    for (size_t i = 0; i < w.rows; ++i) {
      const double* wrow = w.data.data() + i * w.cols;
      double* dwrow = dw.data.data() + i * w.cols;
      double acc = 0.0;
      const double xi = item_emb[i];
      for (size_t j = 0; j < w.cols; ++j) {
        acc += wrow[j] * kg_emb[j];
        dwrow[j] += scale * xi * kg_emb[j];
      }
      d_item[i] += scale * acc;
    }
  }
  return total * inv_n;
}

double domain_loss_grad(NeuCmfModel& model, const std::vector<Record>& records, Domain domain) {
  const double inv_n = 1.0 / static_cast<double>(records.size());
  double total = 0.0;
  for (const Record& r : records) {
    const ItemRef item{domain, r.item};
    const PredictTrace tr = NeuCmfGradOps::forward(model, r.user, item);
    const double err = tr.prob - normalize_rating(r.rating);
    total += err * err;
    const double d_score = 2.0 * err * inv_n * tr.prob * (1.0 - tr.prob);
    NeuCmfGradOps::backward(model, r.user, item, tr, d_score);
  }
  return total * inv_n;
}

}  // namespace

double total_loss(const NeuCmfModel& model, const std::vector<Record>& records_s,
                  const std::vector<Record>& records_t, const MiBatch& mi_batch, double lambda) {
  double loss = 0.0;
  if (!records_s.empty()) loss += domain_loss(model, records_s, Domain::S);
  if (!records_t.empty()) loss += domain_loss(model, records_t, Domain::T);
  if (!mi_batch.empty()) loss += mi_loss(model, mi_batch);
  if (lambda != 0.0) loss += lambda * model.params().sum_squared_values();
  return loss;
}

LossParts total_loss_grad(NeuCmfModel& model, const std::vector<Record>& records_s,
                          const std::vector<Record>& records_t, const MiBatch& mi_batch,
                          double lambda) {
  LossParts parts;
  if (!records_s.empty()) parts.loss_s = domain_loss_grad(model, records_s, Domain::S);
  if (!records_t.empty()) parts.loss_t = domain_loss_grad(model, records_t, Domain::T);
  if (!mi_batch.empty()) parts.loss_mi = mi_loss_grad(model, mi_batch);
  parts.total = parts.loss_s + parts.loss_t + parts.loss_mi;
  if (lambda != 0.0) {
    parts.total += lambda * model.params().sum_squared_values();
    model.params().add_value_gradient(2.0 * lambda);
  }
  return parts;
}

std::vector<int64_t> resolve_item_entities(const InteractionMatrix& m,
                                           const AlignmentTable& alignment) {
  std::vector<int64_t> out(m.n_items(), -1);
  const auto& table = alignment.domain_items(m.domain);
  for (const auto& [item_name, entity_id] : table) {
    auto it = m.item_dict.find(item_name);
    if (it == m.item_dict.end()) continue;  // aligned item without ratings
    out[it->second] = static_cast<int64_t>(entity_id);
  }
  return out;
}

StageTwoResult train_neucmf(Variant variant, const InteractionMatrix& matrix_s,
                            const InteractionMatrix& matrix_t, const DatasetSplit& split,
                            const Tensor2* kg_embeddings, const AlignmentTable* alignment,
                            const TrainConfig& cfg) {
  cfg.validate();
  const SplitPart& part_s = split.part(Domain::S);
  const SplitPart& part_t = split.part(Domain::T);
  if (part_s.train.empty() && part_t.train.empty()) {
    fail(ErrorCategory::train, "train_neucmf: no training records in either domain");
  }

  Tensor2 kg_emb;
  std::vector<int64_t> ents_s(matrix_s.n_items(), -1);
  std::vector<int64_t> ents_t(matrix_t.n_items(), -1);
  if (variant_uses_kg(variant)) {
    if (!kg_embeddings || !alignment) {
      fail(ErrorCategory::config, std::string(variant_name(variant)) +
                                      " requires frozen KG embeddings and an alignment");
    }
    kg_emb = *kg_embeddings;
    ents_s = resolve_item_entities(matrix_s, *alignment);
    ents_t = resolve_item_entities(matrix_t, *alignment);
  }

  NeuCmfModel model(variant, matrix_s.users->size(), matrix_s.n_items(), matrix_t.n_items(),
                    std::move(kg_emb), std::move(ents_s), std::move(ents_t), cfg);

  struct TaggedRecord {
    Domain domain;
    Record record;
  };
  std::vector<TaggedRecord> train;
  train.reserve(part_s.train.size() + part_t.train.size());
  for (const Record& r : part_s.train) train.push_back({Domain::S, r});
  for (const Record& r : part_t.train) train.push_back({Domain::T, r});

  const bool with_mi = variant == Variant::ncmf_kg_mul;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = 0.0;  // the lambda term lives inside the total loss

  auto validation_loss = [&]() {
    double v = 0.0;
    if (!part_s.validation.empty()) v += domain_loss(model, part_s.validation, Domain::S);
    if (!part_t.validation.empty()) v += domain_loss(model, part_t.validation, Domain::T);
    return v;
  };

  StageTwoResult result{std::move(model), {}, 0};
  NeuCmfModel& net = result.model;
  EarlyStopper stopper(cfg.early_stop_window);
  std::map<std::string, Tensor2> best_values = net.params().snapshot_values();
  uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng epoch_rng(Rng::derive(cfg.seed, "stage2_epoch" + std::to_string(epoch)));
    epoch_rng.shuffle(train);

    double sum_s = 0.0, sum_t = 0.0, sum_mi = 0.0;
    size_t count_s = 0, count_t = 0, mi_batches = 0;
    std::vector<Record> batch_s, batch_t;
    for (size_t start = 0; start < train.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(train.size(), start + static_cast<size_t>(cfg.batch_size));
      batch_s.clear();
      batch_t.clear();
      for (size_t i = start; i < end; ++i) {
        (train[i].domain == Domain::S ? batch_s : batch_t).push_back(train[i].record);
      }
      MiBatch mi_batch;
      if (with_mi) mi_batch = make_mi_batch(net, cfg.effective_mi_batch(), epoch_rng);
      const LossParts parts =
          total_loss_grad(net, batch_s, batch_t, mi_batch, cfg.weight_decay);
      if (!std::isfinite(parts.total)) {
        fail(ErrorCategory::train,
             "train_neucmf: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam_step(net.params(), adam, ++step);
      sum_s += parts.loss_s * static_cast<double>(batch_s.size());
      sum_t += parts.loss_t * static_cast<double>(batch_t.size());
      count_s += batch_s.size();
      count_t += batch_t.size();
      if (with_mi) {
        sum_mi += parts.loss_mi;
        ++mi_batches;
      }
    }

    const double val = validation_loss();
    if (!std::isfinite(val)) {
      fail(ErrorCategory::train,
           "train_neucmf: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back({epoch, count_s ? sum_s / static_cast<double>(count_s) : 0.0,
                          count_t ? sum_t / static_cast<double>(count_t) : 0.0,
                          mi_batches ? sum_mi / static_cast<double>(mi_batches) : 0.0, val});
    const bool stop = stopper.observe(epoch, val);
    if (stopper.improved_at(epoch)) best_values = net.params().snapshot_values();
    if (stop) break;
  }

  net.params().restore_values(best_values);
  result.best_epoch = stopper.best_epoch();
  return result;
}

}  // namespace kgcdr
