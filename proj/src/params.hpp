#ifndef KGCDR_PARAMS_HPP
#define KGCDR_PARAMS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>

#include "tensor.hpp"

namespace kgcdr {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

struct ParamEntry {
  Tensor2 value;
  Tensor2 grad;
  Tensor2 adam_m;
  Tensor2 adam_v;
};

/// Named parameter tensors with paired gradient buffers and Adam state.
/// Entries are kept in name order so every iteration is deterministic.
class ParameterStore {
 public:
  Tensor2& create(const std::string& name, size_t rows, size_t cols);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor2& value(const std::string& name) { return entry(name).value; }
  const Tensor2& value(const std::string& name) const { return entry(name).value; }
  Tensor2& grad(const std::string& name) { return entry(name).grad; }
  const Tensor2& grad(const std::string& name) const { return entry(name).grad; }

  ParamEntry& entry(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;

  std::map<std::string, ParamEntry>& entries() { return entries_; }
  const std::map<std::string, ParamEntry>& entries() const { return entries_; }

  size_t total_size() const;
  void zero_grads();

  double sum_squared_values() const;

  /// grad += coeff * value, every parameter.
  void add_value_gradient(double coeff);

  std::map<std::string, Tensor2> snapshot_values() const;
  void restore_values(const std::map<std::string, Tensor2>& snapshot);

 private:
  std::map<std::string, ParamEntry> entries_;
};

/// One bias-corrected Adam update over every parameter. weight_decay*value is
/// added to the raw gradient before the moment update; grads are zeroed after.
/// step_index starts at 1.
void adam_step(ParameterStore& store, const AdamConfig& cfg, uint64_t step_index);

/// Central-difference check of the gradients currently held in `store`
/// against `loss_fn` (which must read the same store). Probes `probe_count`
/// random coordinates; returns max |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
/// Parameter values are restored before returning.
double finite_diff_check(const std::function<double()>& loss_fn, ParameterStore& store,
                         int probe_count, double h, Rng& rng);

/// Binary checkpoint: parameter values + Adam moments + step counter.
/// Values round-trip bit-exactly.
void save_checkpoint(const ParameterStore& store, uint64_t adam_step_count,
                     const std::string& path);
void save_checkpoint(const ParameterStore& store, uint64_t adam_step_count, std::ostream& out);
uint64_t load_checkpoint(ParameterStore& store, const std::string& path);
uint64_t load_checkpoint(ParameterStore& store, std::istream& in);

}  // namespace kgcdr

#endif
