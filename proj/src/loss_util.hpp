#ifndef KGCDR_LOSS_UTIL_HPP
#define KGCDR_LOSS_UTIL_HPP

#include <algorithm>
#include <cmath>
#include <limits>

#include "tensor.hpp"

namespace kgcdr {

constexpr double kProbClampEps = 1e-12;

struct BceTerm {
  double loss;
  double d_raw;  // d(loss)/d(pre-sigmoid score)
};

/// Cross-entropy of sigmoid(raw) against a 0/1 label, probability clamped to
/// [eps, 1-eps] before the log. The derivative honors the clamp so central
/// differences match exactly.
inline BceTerm bce_on_raw(double raw, int label) {
  const double p = sigmoid(raw);
  const double pc = std::min(std::max(p, kProbClampEps), 1.0 - kProbClampEps);
  BceTerm term;
  term.loss = -(label * std::log(pc) + (1 - label) * std::log(1.0 - pc));
  const bool interior = p > kProbClampEps && p < 1.0 - kProbClampEps;
  term.d_raw = interior ? (p - label) : 0.0;
  return term;
}

/// Tracks the best validation loss; stop() turns true once the loss has
/// failed to improve for `window` consecutive epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int window) : window_(window) {}

  /// Returns true if training should stop after this epoch.
  bool observe(int epoch, double validation_loss) {
    if (validation_loss < best_loss_) {
      best_loss_ = validation_loss;
      best_epoch_ = epoch;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return stale_ >= window_;
  }

  bool improved_at(int epoch) const { return best_epoch_ == epoch; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int window_;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

}  // namespace kgcdr

#endif
