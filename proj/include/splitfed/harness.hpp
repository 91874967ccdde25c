#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitfed/client.hpp"
#include "splitfed/metrics.hpp"
#include "splitfed/segnet.hpp"
#include "splitfed/synthdata.hpp"
#include "splitfed/training.hpp"
#include "splitfed/wire.hpp"

namespace splitfed {

// An encoder/decoder pair with its parameters.
struct SegModel {
  EncoderSpec encoder_spec;
  DecoderSpec decoder_spec;
  ParamSet encoder;
  ParamSet decoder;
};

enum class Trainable { both, encoder, decoder };

struct BatchGradients {
  float loss = 0.0f;
  ParamSet encoder;  // empty unless the encoder is trainable
  ParamSet decoder;  // empty unless the decoder is trainable
};

// Loss and summed per-image gradients for one batch, computed in-process
// through encoder and decoder.
BatchGradients batch_gradients(const Encoder& encoder, const Decoder& decoder, const ParamSet& enc,
                               const ParamSet& dec, std::span<const Sample> samples,
                               std::span<const std::size_t> batch, Trainable trainable);

MetricReport evaluate_local(const SegModel& model, std::span<const Sample> samples);

struct LocalTrainResult {
  SegModel best;   // parameters at the best evaluation point
  SegModel final;  // parameters after the last iteration
  TrainTrace trace;
  MetricReport best_report;
};

// Generic in-process trainer. Only the `trainable` half receives Adam
// updates; batches come from BatchSampler(derive_seed(seed, "batches")),
// matching the remote client so the two paths can be compared step by step.
LocalTrainResult train_local(SegModel init, Trainable trainable, std::span<const Sample> train,
                             std::span<const Sample> eval, const TrainSchedule& schedule, std::uint64_t seed);

struct HarnessOptions {
  TrainSchedule schedule;
  EncoderVariant variant = EncoderVariant::small;
  DecoderSpec decoder;
  // FedAvg rounds; 0 means schedule.iterations.
  std::uint64_t fedavg_rounds = 0;
  std::size_t fedavg_local_batches = 1;
};

enum class Scale { small, standard };
Scale parse_scale(std::string_view s);
HarnessOptions harness_options(Scale scale);

EncoderSpec encoder_spec_for(const HarnessOptions& options, const DatasetSplit& split);

// Joint encoder+decoder training from random init on one centre. Encoder and
// decoder draw from derive_seed(seed, "encoder-init") / "decoder-init".
LocalTrainResult train_source(const DatasetSplit& split, std::uint64_t seed, const HarnessOptions& options);

// Independent per-centre model; the same procedure as train_source.
LocalTrainResult run_indp(const DatasetSplit& split, std::uint64_t seed, const HarnessOptions& options);

struct MultiCentreResult {
  SegModel model;
  TrainTrace trace;
  std::vector<MetricReport> per_centre;  // aligned with the input splits
  std::size_t pooled_train_size = 0;
};

// One model trained on the union of all train sets, evaluated per centre.
MultiCentreResult run_comb(std::span<const DatasetSplit> splits, std::uint64_t seed, const HarnessOptions& options);

struct FedAvgResult : MultiCentreResult {
  // The copy of the global model each centre holds after the last broadcast.
  std::vector<SegModel> replicas;
};

// Per round every centre computes its batch gradient on its replica of the
// global model, the gradients are averaged with equal weights, and one Adam
// step is applied to the global model, which is then re-broadcast. Centre k
// samples from derive_seed(seed, "fedavg/<domain id>").
FedAvgResult run_fedavg(std::span<const DatasetSplit> splits, std::uint64_t rounds, std::size_t local_batches,
                        std::uint64_t seed, const HarnessOptions& options);

// Unweighted mean of per-centre gradients, in centre order.
ParamSet average_gradients(std::span<const ParamSet> grads);

// Encoder frozen at the source weights; decoder fine-tuned on the target.
LocalTrainResult run_ftde(const SegModel& source, const DatasetSplit& split, std::uint64_t seed,
                          const HarnessOptions& options);

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> kMethods{"INDP", "COMB", "FedAvg", "FtDe", "RandEn", "FtEn"};
  return kMethods;
}

struct ResultRow {
  std::string centre;
  std::string method;
  std::optional<MetricReport> report;  // nullopt renders as N/A
  std::string note;                    // why a cell is N/A
};

// Decoder / encoder parameter sets held across all participants of a method.
struct StorageRecord {
  std::string method;
  std::size_t decoder_sets = 0;
  std::size_t decoder_parameters = 0;
  std::size_t encoder_sets = 0;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 7;
  Scale scale = Scale::standard;
  std::optional<std::filesystem::path> out_dir;
  // Overrides harness_options(scale) when set.
  std::optional<HarnessOptions> options;
  // Dataset override; default_centres(derive_seed(master_seed, "data")) otherwise.
  std::optional<std::vector<DatasetSplit>> centres;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<StorageRecord> storage;
  std::size_t centre_count = 0;
  std::size_t decoder_parameter_count = 0;  // one decoder's worth
  Digest decoder_hash_before{};
  Digest decoder_hash_after{};
  std::map<std::string, TrainTrace> traces;  // "<method>_<centre>"
  double seconds = 0.0;

  const ResultRow* find(std::string_view centre, std::string_view method) const;
};

// Generates data, trains the source, hosts its decoder on a loopback server,
// trains RandEn/FtEn clients over the wire, runs the in-process baselines
// and writes results.csv, traces/, checkpoints/ and report.md under out_dir.
// A failing sub-run becomes an N/A row carrying the error.
ExperimentResult run_full_experiment(const ExperimentConfig& config);

std::string results_csv(const ExperimentResult& result);
std::string render_report(const ExperimentResult& result, std::uint64_t seed);

}  // namespace splitfed
