#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splitfed/metrics.hpp"
#include "splitfed/optim.hpp"
#include "splitfed/rng.hpp"

namespace splitfed {

// Optimisation schedule shared by remote clients and in-process trainers.
struct TrainSchedule {
  std::uint64_t iterations = 2000;
  std::size_t batch_size = 4;
  float learning_rate = 2e-4f;
  float decay_factor = 0.5f;
  std::uint64_t decay_interval = 500;
  // Evaluate (and keep the best-mIoU parameters) every this many iterations
  // and after the last one. 0 disables intermediate evaluation.
  std::uint64_t eval_interval = 250;

  AdamConfig adam() const { return AdamConfig{learning_rate}; }
  float learning_rate_at(std::uint64_t iteration) const {
    return decayed_learning_rate(learning_rate, decay_factor, decay_interval, iteration);
  }
  bool evaluates_at(std::uint64_t iteration) const {
    return iteration == iterations || (eval_interval > 0 && iteration % eval_interval == 0);
  }
};

// Draws batches from successive seeded permutations of [0, n). Batches may
// straddle an epoch boundary.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct LossRecord {
  std::uint64_t iteration;
  float loss;
};

struct EvalRecord {
  std::uint64_t iteration;
  double miou;
  double dice;
};

struct TrainTrace {
  std::vector<LossRecord> losses;
  std::vector<EvalRecord> evals;
  std::uint64_t best_iteration = 0;
  double best_miou = -1.0;
  std::filesystem::path checkpoint;

  // Records an evaluation; returns true if it is a new best (strictly greater mIoU).
  bool record_eval(std::uint64_t iteration, const MetricReport& report);
};

// "iter,loss" and "iter,miou,dice" files.
void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& loss_csv,
                     const std::filesystem::path& eval_csv);

}  // namespace splitfed
