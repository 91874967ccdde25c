#include "splitfed/training.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

namespace splitfed {

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed), order_(n) {
  if (n == 0) throw ValidationError("cannot sample batches from an empty set");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = n_; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng_.below(i));
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == n_) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

bool TrainTrace::record_eval(std::uint64_t iteration, const MetricReport& report) {
  evals.push_back({iteration, report.miou, report.dice});
  if (report.miou > best_miou) {
    best_miou = report.miou;
    best_iteration = iteration;
    return true;
  }
  return false;
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& loss_csv,
                     const std::filesystem::path& eval_csv) {
  for (const auto& p : {loss_csv, eval_csv}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream loss(loss_csv);
  loss << "iter,loss\n";
  char buf[64];
  for (const auto& r : trace.losses) {
    std::snprintf(buf, sizeof buf, "%llu,%.6f\n", static_cast<unsigned long long>(r.iteration),
                  static_cast<double>(r.loss));
    loss << buf;
  }
  std::ofstream eval(eval_csv);
  eval << "iter,miou,dice\n";
  for (const auto& r : trace.evals) {
    std::snprintf(buf, sizeof buf, "%llu,%.4f,%.4f\n", static_cast<unsigned long long>(r.iteration),
                  r.miou, r.dice);
    eval << buf;
  }
  if (!loss || !eval) throw Error("failed writing trace CSVs");
}

}  // namespace splitfed
