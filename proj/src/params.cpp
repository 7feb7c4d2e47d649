#include "params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace kgcdr {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCategory::config, "adam: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail(ErrorCategory::config, "adam: beta1 must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail(ErrorCategory::config, "adam: beta2 must be in [0,1)");
  if (!(epsilon > 0.0)) fail(ErrorCategory::config, "adam: epsilon must be > 0");
  if (!(weight_decay >= 0.0)) fail(ErrorCategory::config, "adam: weight_decay must be >= 0");
}

Tensor2& ParameterStore::create(const std::string& name, size_t rows, size_t cols) {
  if (entries_.count(name) != 0) {
    fail(ErrorCategory::data, "parameter '" + name + "' already exists");
  }
  ParamEntry e;
  e.value = Tensor2(rows, cols);
  e.grad = Tensor2(rows, cols);
  e.adam_m = Tensor2(rows, cols);
  e.adam_v = Tensor2(rows, cols);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  return it->second.value;
}

ParamEntry& ParameterStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorCategory::data, "unknown parameter '" + name + "'");
  return it->second;
}

const ParamEntry& ParameterStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorCategory::data, "unknown parameter '" + name + "'");
  return it->second;
}

size_t ParameterStore::total_size() const {
  size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.set_zero();
}

double ParameterStore::sum_squared_values() const {
  double acc = 0.0;
  for (const auto& [name, e] : entries_) {
    for (double v : e.value.data) acc += v * v;
  }
  return acc;
}

void ParameterStore::add_value_gradient(double coeff) {
  if (coeff == 0.0) return;
  for (auto& [name, e] : entries_) add_scaled(e.grad, e.value, coeff);
}

std::map<std::string, Tensor2> ParameterStore::snapshot_values() const {
  std::map<std::string, Tensor2> snap;
  for (const auto& [name, e] : entries_) snap.emplace(name, e.value);
  return snap;
}

void ParameterStore::restore_values(const std::map<std::string, Tensor2>& snapshot) {
  for (const auto& [name, v] : snapshot) entry(name).value = v;
}

void adam_step(ParameterStore& store, const AdamConfig& cfg, uint64_t step_index) {
  cfg.validate();
  if (step_index < 1) fail(ErrorCategory::train, "adam_step: step_index must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
  for (auto& [name, e] : store.entries()) {
    if (!e.grad.all_finite()) {
      fail(ErrorCategory::train, "non-finite gradient for parameter '" + name + "'");
    }
    for (size_t i = 0; i < e.value.data.size(); ++i) {
      const double g = e.grad.data[i] + cfg.weight_decay * e.value.data[i];
      e.adam_m.data[i] = cfg.beta1 * e.adam_m.data[i] + (1.0 - cfg.beta1) * g;
      e.adam_v.data[i] = cfg.beta2 * e.adam_v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = e.adam_m.data[i] / bc1;
      const double v_hat = e.adam_v.data[i] / bc2;
      e.value.data[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    e.grad.set_zero();
  }
}

double finite_diff_check(const std::function<double()>& loss_fn, ParameterStore& store,
                         int probe_count, double h, Rng& rng) {
  if (!(h > 0.0)) fail(ErrorCategory::config, "finite_diff_check: h must be > 0");
  const size_t total = store.total_size();
  if (total == 0) return 0.0;

  // Analytic gradients were accumulated by the caller; copy them since the
  // loss re-evaluations below may clobber grad buffers.
  std::map<std::string, Tensor2> analytic;
  for (const auto& [name, e] : store.entries()) analytic.emplace(name, e.grad);

  double max_rel = 0.0;
  for (int p = 0; p < probe_count; ++p) {
    size_t flat = static_cast<size_t>(rng.uniform_index(total));
    // Locate the owning parameter of the flat coordinate.
    std::string pname;
    size_t offset = 0;
    for (const auto& [name, e] : store.entries()) {
      if (flat < e.value.size()) {
        pname = name;
        offset = flat;
        break;
      }
      flat -= e.value.size();
    }
    double& coord = store.value(pname).data[offset];
    const double saved = coord;
    coord = saved + h;
    const double loss_plus = loss_fn();
    coord = saved - h;
    const double loss_minus = loss_fn();
    coord = saved;
    const double g_fd = (loss_plus - loss_minus) / (2.0 * h);
    const double g_an = analytic.at(pname).data[offset];
    const double denom = std::max(1e-8, std::fabs(g_an) + std::fabs(g_fd));
    const double rel = std::fabs(g_an - g_fd) / denom;
    if (rel > max_rel) max_rel = rel;
  }
  return max_rel;
}

namespace {

constexpr char kCheckpointMagic[8] = {'K', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const ParameterStore& store, uint64_t adam_step_count, std::ostream& out) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64(out, adam_step_count);
  write_u64(out, store.entries().size());
  for (const auto& [name, e] : store.entries()) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, e.value.rows);
    write_u64(out, e.value.cols);
    write_doubles(out, e.value.data);
    write_doubles(out, e.adam_m.data);
    write_doubles(out, e.adam_v.data);
  }
  if (!out) fail(ErrorCategory::io, "checkpoint: write failed");
}

void save_checkpoint(const ParameterStore& store, uint64_t adam_step_count,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::io, "checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(store, adam_step_count, out);
}

uint64_t load_checkpoint(ParameterStore& store, std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    fail(ErrorCategory::parse, "checkpoint: bad magic");
  }
  const uint64_t step = read_u64(in);
  const uint64_t n = read_u64(in);
  for (uint64_t i = 0; i < n; ++i) {
    const uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint64_t rows = read_u64(in);
    const uint64_t cols = read_u64(in);
    if (!in) fail(ErrorCategory::parse, "checkpoint: truncated header");
    ParamEntry* e = nullptr;
    if (store.has(name)) {
      e = &store.entry(name);
      if (e->value.rows != rows || e->value.cols != cols) {
        fail(ErrorCategory::shape, "checkpoint: shape mismatch for parameter '" + name + "'");
      }
    } else {
      store.create(name, rows, cols);
      e = &store.entry(name);
    }
    read_doubles(in, e->value.data);
    read_doubles(in, e->adam_m.data);
    read_doubles(in, e->adam_v.data);
    if (!in) fail(ErrorCategory::parse, "checkpoint: truncated tensor data");
  }
  return step;
}

uint64_t load_checkpoint(ParameterStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "checkpoint: cannot open '" + path + "'");
  return load_checkpoint(store, in);
}

}  // namespace kgcdr
