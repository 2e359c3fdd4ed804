#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "shortlist/jsonl.hpp"

namespace shortlist {

struct TrainConfig {
  double lr = 1e-2;
  int max_epochs = 5;
  std::size_t batch_size = 16;
  std::int64_t seed = 0;
  int early_stop_patience = 5;
  double weight_decay = 0.0;
  std::array<int, 3> stage_epochs{1, 1, 3};  // round 1 only: card, semantic, group
};

struct EpochRecord {
  std::string stage;
  int epoch = 0;  // 1-based, counted across stages
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  bool stopped_early = false;
  double lr = 0.0;     // the learning rate actually used
};

/// True iff the last `patience` epochs brought no strict improvement over
/// the best validation loss seen before them.
inline bool early_stop_check(const std::vector<double>& val_losses, int patience) {
  if (val_losses.empty() || patience < 1) return false;
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < val_losses[best]) best = i;
  }
  return static_cast<int>(val_losses.size() - 1 - best) >= patience;
}

inline bool early_stop_check(const TrainTrace& trace, int patience) {
  std::vector<double> v;
  for (const auto& e : trace.epochs) v.push_back(e.val_loss);
  return early_stop_check(v, patience);
}

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw Error(ErrorCode::ConfigInvalid, "lr must be > 0");
  if (cfg.max_epochs < 0) throw Error(ErrorCode::ConfigInvalid, "max_epochs must be >= 0");
  if (cfg.batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
  if (cfg.early_stop_patience < 1) throw Error(ErrorCode::ConfigInvalid, "patience must be >= 1");
  if (cfg.weight_decay < 0.0) throw Error(ErrorCode::ConfigInvalid, "weight_decay must be >= 0");
  for (int e : cfg.stage_epochs) {
    if (e < 0) throw Error(ErrorCode::ConfigInvalid, "stage epochs must be >= 0");
  }
}

/// Shared bookkeeping for the three training loops: evaluates stopping and
/// remembers the parameters of the best validation epoch.
template <typename Model>
class BestTracker {
 public:
  bool record(TrainTrace& trace, EpochRecord rec, const Model& model) {
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      trace.epochs.push_back(rec);
      throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite",
                  rec.stage + " epoch " + std::to_string(rec.epoch));
    }
    trace.epochs.push_back(rec);
    if (rec.val_loss < best_val_) {
      best_val_ = rec.val_loss;
      best_ = model;
      trace.best_epoch = rec.epoch;
      return true;
    }
    return false;
  }

  bool has_best() const noexcept { return best_val_ < std::numeric_limits<double>::infinity(); }
  const Model& best() const { return best_; }

 private:
  double best_val_ = std::numeric_limits<double>::infinity();
  Model best_{};
};

inline json to_json(const EpochRecord& e) {
  return {{"stage", e.stage}, {"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
}

inline void save_trace(const std::filesystem::path& path, const TrainTrace& trace,
                       const Stamp* stamp = nullptr) {
  auto out = open_output(path);
  write_stamp_comment(out, stamp);
  out << "# best_epoch=" << trace.best_epoch << " stopped_early=" << (trace.stopped_early ? 1 : 0)
      << " lr=" << json(trace.lr).dump() << "\n";
  for (const auto& e : trace.epochs) out << to_json(e).dump() << "\n";
}

}  // namespace shortlist
