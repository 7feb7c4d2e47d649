#include "baselines.hpp"

#include <algorithm>
#include <cmath>

#include "loss_util.hpp"

namespace kgcdr {

MfModel::MfModel(size_t n_users, size_t n_items, const TrainConfig& cfg)
    : n_users_(n_users), n_items_(n_items), dim_(static_cast<size_t>(cfg.embedding_dim)) {
  cfg.validate();
  auto add_table = [&](const std::string& name, size_t rows, size_t cols) {
    Tensor2& t = params_.create(name, rows, cols);
    Rng rng(Rng::derive(cfg.seed, name));
    init_uniform(t, rng, -0.05, 0.05);
  };
  add_table("user_table", n_users, dim_);
  add_table("item_table", n_items, dim_);
  params_.create("user_bias", n_users, 1);
  params_.create("item_bias", n_items, 1);
  params_.create("global_bias", 1, 1);
}

double MfModel::predict(uint32_t user, uint32_t item) const {
  if (user >= n_users_ || item >= n_items_) {
    fail(ErrorCategory::data, "mf_predict: id out of range");
  }
  const double raw = params_.value("global_bias").data[0] +
                     params_.value("user_bias").data[user] +
                     params_.value("item_bias").data[item] +
                     dot(params_.value("user_table").row(user),
                         params_.value("item_table").row(item));
  return sigmoid(raw);
}

struct MfGradOps {
  // Returns the batch MSE, accumulating gradients.
  static double batch_grad(MfModel& m, const std::vector<Record>& records) {
    ParameterStore& p = m.params_;
    const double inv_n = 1.0 / static_cast<double>(records.size());
    double total = 0.0;
    for (const Record& r : records) {
      const auto u = p.value("user_table").row(r.user);
      const auto iv = p.value("item_table").row(r.item);
      const double raw = p.value("global_bias").data[0] + p.value("user_bias").data[r.user] +
                         p.value("item_bias").data[r.item] + dot(u, iv);
      const double pred = sigmoid(raw);
      const double err = pred - normalize_rating(r.rating);
      total += err * err;
      const double d_raw = 2.0 * err * inv_n * pred * (1.0 - pred);
      p.grad("global_bias").data[0] += d_raw;
      p.grad("user_bias").data[r.user] += d_raw;
      p.grad("item_bias").data[r.item] += d_raw;
      auto du = p.grad("user_table").row(r.user);
      auto div = p.grad("item_table").row(r.item);
      for (size_t k = 0; k < m.dim_; ++k) {
        du[k] += d_raw * iv[k];
        div[k] += d_raw * u[k];
      }
    }
    return total * inv_n;
  }
};

namespace {

double part_mse(const std::function<double(const Record&)>& predict,
                const std::vector<Record>& records) {
  if (records.empty()) return 0.0;
  double total = 0.0;
  for (const Record& r : records) {
    const double err = predict(r) - normalize_rating(r.rating);
    total += err * err;
  }
  return total / static_cast<double>(records.size());
}

}  // namespace

MfResult train_mf(const InteractionMatrix& m, const SplitPart& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) fail(ErrorCategory::train, "train_mf: empty training set");

  MfResult result{MfModel(m.users->size(), m.n_items(), cfg), {}, 0};
  MfModel& model = result.model;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = 0.0;

  auto val_loss = [&]() {
    return part_mse([&](const Record& r) { return model.predict(r.user, r.item); },
                    split.validation);
  };

  EarlyStopper stopper(cfg.early_stop_window);
  std::map<std::string, Tensor2> best = model.params().snapshot_values();
  std::vector<Record> train = split.train;
  uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, "mf_epoch" + std::to_string(epoch)));
    rng.shuffle(train);
    double sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < train.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(train.size(), start + static_cast<size_t>(cfg.batch_size));
      const std::vector<Record> batch(train.begin() + start, train.begin() + end);
      const double loss = MfGradOps::batch_grad(model, batch);
      if (!std::isfinite(loss)) {
        fail(ErrorCategory::train, "train_mf: non-finite loss at epoch " + std::to_string(epoch));
      }
      model.params().add_value_gradient(2.0 * cfg.weight_decay);
      adam_step(model.params(), adam, ++step);
      sum += loss * static_cast<double>(batch.size());
      count += batch.size();
    }
    const double val = val_loss();
    const double train_mean = count ? sum / static_cast<double>(count) : 0.0;
    const bool is_s = m.domain == Domain::S;
    result.log.push_back({epoch, is_s ? train_mean : 0.0, is_s ? 0.0 : train_mean, 0.0, val});
    const bool stop = stopper.observe(epoch, val);
    if (stopper.improved_at(epoch)) best = model.params().snapshot_values();
    if (stop) break;
  }
  model.params().restore_values(best);
  result.best_epoch = stopper.best_epoch();
  return result;
}

StageTwoResult train_ncf(const InteractionMatrix& m, const SplitPart& split,
                         const TrainConfig& cfg) {
  InteractionMatrix empty;
  empty.domain = m.domain == Domain::S ? Domain::T : Domain::S;
  empty.users = m.users;

  DatasetSplit both;
  both.mode = SplitMode::standard;
  both.part(m.domain) = split;

  const InteractionMatrix& s = m.domain == Domain::S ? m : empty;
  const InteractionMatrix& t = m.domain == Domain::S ? empty : m;
  return train_neucmf(Variant::plain, s, t, both, nullptr, nullptr, cfg);
}

std::string CmfModel::item_table_name(Domain d) {
  return d == Domain::S ? "item_table.S" : "item_table.T";
}
std::string CmfModel::item_bias_name(Domain d) {
  return d == Domain::S ? "item_bias.S" : "item_bias.T";
}
std::string CmfModel::global_bias_name(Domain d) {
  return d == Domain::S ? "global_bias.S" : "global_bias.T";
}

CmfModel::CmfModel(size_t n_users, size_t n_items_s, size_t n_items_t, const TrainConfig& cfg)
    : n_users_(n_users), n_items_{n_items_s, n_items_t},
      dim_(static_cast<size_t>(cfg.embedding_dim)) {
  cfg.validate();
  auto add_table = [&](const std::string& name, size_t rows, size_t cols) {
    Tensor2& t = params_.create(name, rows, cols);
    Rng rng(Rng::derive(cfg.seed, name));
    init_uniform(t, rng, -0.05, 0.05);
  };
  add_table("user_table", n_users, dim_);
  add_table(item_table_name(Domain::S), n_items_s, dim_);
  add_table(item_table_name(Domain::T), n_items_t, dim_);
  params_.create("user_bias", n_users, 1);
  params_.create(item_bias_name(Domain::S), n_items_s, 1);
  params_.create(item_bias_name(Domain::T), n_items_t, 1);
  params_.create(global_bias_name(Domain::S), 1, 1);
  params_.create(global_bias_name(Domain::T), 1, 1);
}

double CmfModel::predict(uint32_t user, ItemRef item) const {
  const int di = domain_index(item.domain);
  if (user >= n_users_ || item.item >= n_items_[di]) {
    fail(ErrorCategory::data, "cmf_predict: id out of range");
  }
  const double raw = params_.value(global_bias_name(item.domain)).data[0] +
                     params_.value("user_bias").data[user] +
                     params_.value(item_bias_name(item.domain)).data[item.item] +
                     dot(params_.value("user_table").row(user),
                         params_.value(item_table_name(item.domain)).row(item.item));
  return sigmoid(raw);
}

struct CmfGradOps {
  static double batch_grad(CmfModel& m, const std::vector<Record>& records, Domain domain) {
    ParameterStore& p = m.params_;
    const double inv_n = 1.0 / static_cast<double>(records.size());
    double total = 0.0;
    for (const Record& r : records) {
      const auto u = p.value("user_table").row(r.user);
      const auto iv = p.value(CmfModel::item_table_name(domain)).row(r.item);
      const double raw = p.value(CmfModel::global_bias_name(domain)).data[0] +
                         p.value("user_bias").data[r.user] +
                         p.value(CmfModel::item_bias_name(domain)).data[r.item] + dot(u, iv);
      const double pred = sigmoid(raw);
      const double err = pred - normalize_rating(r.rating);
      total += err * err;
      const double d_raw = 2.0 * err * inv_n * pred * (1.0 - pred);
      p.grad(CmfModel::global_bias_name(domain)).data[0] += d_raw;
      p.grad("user_bias").data[r.user] += d_raw;
      p.grad(CmfModel::item_bias_name(domain)).data[r.item] += d_raw;
      auto du = p.grad("user_table").row(r.user);
      auto div = p.grad(CmfModel::item_table_name(domain)).row(r.item);
      for (size_t k = 0; k < m.dim_; ++k) {
        du[k] += d_raw * iv[k];
        div[k] += d_raw * u[k];
      }
    }
    return total * inv_n;
  }
};

CmfResult train_cmf(const InteractionMatrix& matrix_s, const InteractionMatrix& matrix_t,
                    const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  const SplitPart& part_s = split.part(Domain::S);
  const SplitPart& part_t = split.part(Domain::T);
  if (part_s.train.empty() && part_t.train.empty()) {
    fail(ErrorCategory::train, "train_cmf: no training records in either domain");
  }

  CmfResult result{CmfModel(matrix_s.users->size(), matrix_s.n_items(), matrix_t.n_items(), cfg),
                   {},
                   0};
  CmfModel& model = result.model;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = 0.0;

  auto val_loss = [&]() {
    double v = 0.0;
    v += part_mse([&](const Record& r) { return model.predict(r.user, {Domain::S, r.item}); },
                  part_s.validation);
    v += part_mse([&](const Record& r) { return model.predict(r.user, {Domain::T, r.item}); },
                  part_t.validation);
    return v;
  };

  EarlyStopper stopper(cfg.early_stop_window);
  std::map<std::string, Tensor2> best = model.params().snapshot_values();
  std::vector<Record> train_s = part_s.train;
  std::vector<Record> train_t = part_t.train;
  uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, "cmf_epoch" + std::to_string(epoch)));
    rng.shuffle(train_s);
    rng.shuffle(train_t);

    const size_t bs = static_cast<size_t>(cfg.batch_size);
    const size_t n_batches_s = (train_s.size() + bs - 1) / bs;
    const size_t n_batches_t = (train_t.size() + bs - 1) / bs;
    double sum_s = 0.0, sum_t = 0.0;

    // Alternate domains batch by batch until both streams are exhausted.
    for (size_t b = 0; b < std::max(n_batches_s, n_batches_t); ++b) {
      for (Domain d : {Domain::S, Domain::T}) {
        const std::vector<Record>& train = d == Domain::S ? train_s : train_t;
        const size_t n_batches = d == Domain::S ? n_batches_s : n_batches_t;
        if (b >= n_batches) continue;
        const size_t start = b * bs;
        const size_t end = std::min(train.size(), start + bs);
        const std::vector<Record> batch(train.begin() + start, train.begin() + end);
        const double loss = CmfGradOps::batch_grad(model, batch, d);
        if (!std::isfinite(loss)) {
          fail(ErrorCategory::train,
               "train_cmf: non-finite loss at epoch " + std::to_string(epoch));
        }
        model.params().add_value_gradient(2.0 * cfg.weight_decay);
        adam_step(model.params(), adam, ++step);
        (d == Domain::S ? sum_s : sum_t) += loss * static_cast<double>(batch.size());
      }
    }

    const double val = val_loss();
    result.log.push_back({epoch,
                          train_s.empty() ? 0.0 : sum_s / static_cast<double>(train_s.size()),
                          train_t.empty() ? 0.0 : sum_t / static_cast<double>(train_t.size()),
                          0.0, val});
    const bool stop = stopper.observe(epoch, val);
    if (stopper.improved_at(epoch)) best = model.params().snapshot_values();
    if (stop) break;
  }
  model.params().restore_values(best);
  result.best_epoch = stopper.best_epoch();
  return result;
}

}  // namespace kgcdr
