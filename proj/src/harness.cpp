#include "splitfed/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "splitfed/layers.hpp"
#include "splitfed/rng.hpp"
#include "splitfed/server.hpp"

namespace splitfed {

namespace {

bool trains_encoder(Trainable t) { return t != Trainable::decoder; }
bool trains_decoder(Trainable t) { return t != Trainable::encoder; }

void accumulate(ParamSet& acc, ParamSet g, bool first) {
  if (first) {
    acc = std::move(g);
  } else {
    add_inplace(acc, g);
  }
}

// Decoder-only training against cached latents; the encoder never changes.
BatchGradients decoder_batch_gradients(const Decoder& decoder, const ParamSet& dec,
                                       std::span<const Tensor> latents, std::span<const Sample> samples,
                                       std::span<const std::size_t> batch) {
  std::vector<Tensor> logits, masks;
  std::vector<NetworkCache> caches;
  for (auto idx : batch) {
    auto [out, cache] = decoder.forward(dec, latents[idx]);
    logits.push_back(std::move(out));
    caches.push_back(std::move(cache));
    masks.push_back(samples[idx].mask);
  }
  auto loss = bce_from_logits(stack(logits), stack(masks));
  const auto d_logits = unstack(loss.d_logits);
  BatchGradients out;
  out.loss = loss.loss;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    accumulate(out.decoder, decoder.backward(dec, caches[b], d_logits[b], {false, true}).params, b == 0);
  }
  return out;
}

MetricReport evaluate_cached(const Decoder& decoder, const ParamSet& dec, std::span<const Tensor> latents,
                             std::span<const Sample> samples) {
  std::vector<Tensor> probs, masks;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    probs.push_back(sigmoid(decoder.infer(dec, latents[i])));
    masks.push_back(samples[i].mask);
  }
  return segmentation_metrics(probs, masks);
}

std::vector<Tensor> encode_all(const Encoder& encoder, const ParamSet& enc, std::span<const Sample> samples) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encoder.infer(enc, s.image));
  return out;
}

std::vector<Sample> pooled_train(std::span<const DatasetSplit> splits) {
  std::vector<Sample> out;
  for (const auto& s : splits) out.insert(out.end(), s.train.begin(), s.train.end());
  return out;
}

std::vector<Sample> pooled_test(std::span<const DatasetSplit> splits) {
  std::vector<Sample> out;
  for (const auto& s : splits) out.insert(out.end(), s.test.begin(), s.test.end());
  return out;
}

}  // namespace

BatchGradients batch_gradients(const Encoder& encoder, const Decoder& decoder, const ParamSet& enc,
                               const ParamSet& dec, std::span<const Sample> samples,
                               std::span<const std::size_t> batch, Trainable trainable) {
  const bool enc_grads = trains_encoder(trainable);
  const bool dec_grads = trains_decoder(trainable);
  std::vector<NetworkCache> enc_caches, dec_caches;
  std::vector<Tensor> logits, masks;
  for (auto idx : batch) {
    const Sample& s = samples[idx];
    Tensor latent;
    if (enc_grads) {
      auto [l, cache] = encoder.forward(enc, s.image);
      latent = std::move(l);
      enc_caches.push_back(std::move(cache));
    } else {
      latent = encoder.infer(enc, s.image);
    }
    auto [out, cache] = decoder.forward(dec, latent);
    logits.push_back(std::move(out));
    dec_caches.push_back(std::move(cache));
    masks.push_back(s.mask);
  }
  auto loss = bce_from_logits(stack(logits), stack(masks));
  const auto d_logits = unstack(loss.d_logits);
  BatchGradients out;
  out.loss = loss.loss;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto dg = decoder.backward(dec, dec_caches[b], d_logits[b], {enc_grads, dec_grads});
    if (dec_grads) accumulate(out.decoder, std::move(dg.params), b == 0);
    if (enc_grads) accumulate(out.encoder, encoder.backward(enc, enc_caches[b], dg.d_latent), b == 0);
  }
  return out;
}

MetricReport evaluate_local(const SegModel& model, std::span<const Sample> samples) {
  const Encoder encoder(model.encoder_spec);
  const Decoder decoder(model.decoder_spec);
  std::vector<Tensor> probs, masks;
  for (const auto& s : samples) {
    probs.push_back(sigmoid(decoder.infer(model.decoder, encoder.infer(model.encoder, s.image))));
    masks.push_back(s.mask);
  }
  return segmentation_metrics(probs, masks);
}

LocalTrainResult train_local(SegModel init, Trainable trainable, std::span<const Sample> train,
                             std::span<const Sample> eval, const TrainSchedule& schedule, std::uint64_t seed) {
  const Encoder encoder(init.encoder_spec);
  const Decoder decoder(init.decoder_spec);
  if (encoder.latent_shape() != decoder.latent_shape()) {
    throw ConfigError("encoder latent " + to_string(encoder.latent_shape()) + " does not match decoder latent " +
                      to_string(decoder.latent_shape()));
  }

  // The optimiser sees one ParamSet: the trainable half, or both concatenated.
  ParamSet params = trainable == Trainable::both      ? concat(init.encoder, init.decoder)
                    : trainable == Trainable::encoder ? init.encoder
                                                      : init.decoder;
  const ParamSet& enc = trains_encoder(trainable) ? params : init.encoder;
  const ParamSet& dec = trains_decoder(trainable) ? params : init.decoder;

  std::vector<Tensor> train_latents, eval_latents;
  if (trainable == Trainable::decoder) {
    train_latents = encode_all(encoder, init.encoder, train);
    eval_latents = encode_all(encoder, init.encoder, eval);
  }

  auto snapshot = [&](SegModel& dst) {
    dst.encoder_spec = init.encoder_spec;
    dst.decoder_spec = init.decoder_spec;
    dst.encoder = trains_encoder(trainable) ? params.with_prefix(kEncoderPrefix) : init.encoder;
    dst.decoder = trains_decoder(trainable) ? params.with_prefix(kDecoderPrefix) : init.decoder;
  };
  auto evaluate = [&]() {
    if (trainable == Trainable::decoder) return evaluate_cached(decoder, params, eval_latents, eval);
    SegModel m;
    snapshot(m);
    return evaluate_local(m, eval);
  };

  AdamState adam = AdamState::for_params(params, schedule.adam());
  BatchSampler sampler(train.size(), schedule.batch_size, derive_seed(seed, "batches"));
  LocalTrainResult result;
  snapshot(result.best);

  for (std::uint64_t it = 1; it <= schedule.iterations; ++it) {
    const auto batch = sampler.next();
    BatchGradients g = trainable == Trainable::decoder
                           ? decoder_batch_gradients(decoder, params, train_latents, train, batch)
                           : batch_gradients(encoder, decoder, enc, dec, train, batch, trainable);
    if (!std::isfinite(g.loss)) throw Error("training diverged: non-finite loss at iteration " + std::to_string(it));
    const ParamSet grads = trainable == Trainable::both      ? concat(g.encoder, g.decoder)
                           : trainable == Trainable::encoder ? std::move(g.encoder)
                                                             : std::move(g.decoder);
    adam.config.learning_rate = schedule.learning_rate_at(it - 1);
    adam_step(params, grads, adam);
    result.trace.losses.push_back({it, g.loss});

    if (!eval.empty() && schedule.evaluates_at(it)) {
      auto report = evaluate();
      if (result.trace.record_eval(it, report)) {
        snapshot(result.best);
        result.best_report = std::move(report);
      }
    }
  }
  snapshot(result.final);
  if (eval.empty()) result.best = result.final;
  return result;
}

Scale parse_scale(std::string_view s) {
  if (s == "small") return Scale::small;
  if (s == "default" || s == "standard") return Scale::standard;
  throw ConfigError("unknown scale '" + std::string(s) + "' (expected small|default)");
}

HarnessOptions harness_options(Scale scale) {
  HarnessOptions o;
  if (scale == Scale::small) {
    o.schedule.iterations = 300;
    o.schedule.decay_interval = 100;
    o.schedule.eval_interval = 100;
  }
  return o;
}

EncoderSpec encoder_spec_for(const HarnessOptions& options, const DatasetSplit& split) {
  const Sample& s = split.train.empty() ? split.test.at(0) : split.train.front();
  return encoder_spec_for(options.variant, s.image, options.decoder.latent.channels);
}

LocalTrainResult train_source(const DatasetSplit& split, std::uint64_t seed, const HarnessOptions& options) {
  if (split.train.empty()) throw ValidationError("source split '" + split.domain_id + "' has no training data");
  SegModel init;
  init.encoder_spec = encoder_spec_for(options, split);
  init.decoder_spec = options.decoder;
  init.decoder_spec.latent = Encoder(init.encoder_spec).latent_shape();
  init.encoder = Encoder(init.encoder_spec).init(derive_seed(seed, "encoder-init"));
  init.decoder = Decoder(init.decoder_spec).init(derive_seed(seed, "decoder-init"));
  return train_local(std::move(init), Trainable::both, split.train, split.test, options.schedule, seed);
}

LocalTrainResult run_indp(const DatasetSplit& split, std::uint64_t seed, const HarnessOptions& options) {
  return train_source(split, seed, options);
}

MultiCentreResult run_comb(std::span<const DatasetSplit> splits, std::uint64_t seed, const HarnessOptions& options) {
  if (splits.empty()) throw ValidationError("COMB needs at least one centre");
  const auto train = pooled_train(splits);
  const auto test = pooled_test(splits);
  SegModel init;
  init.encoder_spec = encoder_spec_for(options, splits.front());
  init.decoder_spec = options.decoder;
  init.decoder_spec.latent = Encoder(init.encoder_spec).latent_shape();
  init.encoder = Encoder(init.encoder_spec).init(derive_seed(seed, "encoder-init"));
  init.decoder = Decoder(init.decoder_spec).init(derive_seed(seed, "decoder-init"));
  auto trained = train_local(std::move(init), Trainable::both, train, test, options.schedule, seed);

  MultiCentreResult out;
  out.model = std::move(trained.best);
  out.trace = std::move(trained.trace);
  out.pooled_train_size = train.size();
  for (const auto& s : splits) out.per_centre.push_back(evaluate_local(out.model, s.test));
  return out;
}

ParamSet average_gradients(std::span<const ParamSet> grads) {
  if (grads.empty()) throw ValidationError("nothing to average");
  ParamSet acc = grads.front();
  for (std::size_t i = 1; i < grads.size(); ++i) add_inplace(acc, grads[i]);
  scale_inplace(acc, 1.0f / static_cast<float>(grads.size()));
  return acc;
}

FedAvgResult run_fedavg(std::span<const DatasetSplit> splits, std::uint64_t rounds, std::size_t local_batches,
                        std::uint64_t seed, const HarnessOptions& options) {
  if (splits.size() < 2) throw ValidationError("FedAvg needs at least 2 centres");
  if (local_batches == 0) throw ConfigError("FedAvg needs at least one local batch per round");
  const auto& schedule = options.schedule;

  SegModel global;
  global.encoder_spec = encoder_spec_for(options, splits.front());
  global.decoder_spec = options.decoder;
  global.decoder_spec.latent = Encoder(global.encoder_spec).latent_shape();
  const Encoder encoder(global.encoder_spec);
  const Decoder decoder(global.decoder_spec);
  global.encoder = encoder.init(derive_seed(seed, "encoder-init"));
  global.decoder = decoder.init(derive_seed(seed, "decoder-init"));

  ParamSet params = concat(global.encoder, global.decoder);
  AdamState adam = AdamState::for_params(params, schedule.adam());
  std::vector<BatchSampler> samplers;
  for (const auto& s : splits) {
    samplers.emplace_back(s.train.size(), schedule.batch_size, derive_seed(seed, "fedavg/" + s.domain_id));
  }
  const auto test = pooled_test(splits);

  FedAvgResult out;
  auto current = [&] {
    SegModel m = global;
    m.encoder = params.with_prefix(kEncoderPrefix);
    m.decoder = params.with_prefix(kDecoderPrefix);
    return m;
  };
  out.model = current();
  out.replicas.assign(splits.size(), out.model);

  for (std::uint64_t round = 1; round <= rounds; ++round) {
    std::vector<ParamSet> centre_grads;
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < splits.size(); ++k) {
      const SegModel& replica = out.replicas[k];
      std::vector<ParamSet> local;
      for (std::size_t lb = 0; lb < local_batches; ++lb) {
        const auto batch = samplers[k].next();
        auto g = batch_gradients(encoder, decoder, replica.encoder, replica.decoder, splits[k].train, batch,
                                 Trainable::both);
        loss_sum += g.loss;
        local.push_back(concat(g.encoder, g.decoder));
      }
      centre_grads.push_back(local.size() == 1 ? std::move(local.front()) : average_gradients(local));
    }
    const float mean_loss = static_cast<float>(loss_sum / static_cast<double>(splits.size() * local_batches));
    if (!std::isfinite(mean_loss)) throw Error("FedAvg diverged at round " + std::to_string(round));
    adam.config.learning_rate = schedule.learning_rate_at(round - 1);
    adam_step(params, average_gradients(centre_grads), adam);
    out.trace.losses.push_back({round, mean_loss});

    // Broadcast.
    const SegModel updated = current();
    for (auto& r : out.replicas) r = updated;

    if (round == rounds || (schedule.eval_interval > 0 && round % schedule.eval_interval == 0)) {
      if (out.trace.record_eval(round, evaluate_local(updated, test))) out.model = updated;
    }
  }
  for (const auto& s : splits) out.per_centre.push_back(evaluate_local(out.model, s.test));
  out.pooled_train_size = pooled_train(splits).size();
  return out;
}

LocalTrainResult run_ftde(const SegModel& source, const DatasetSplit& split, std::uint64_t seed,
                          const HarnessOptions& options) {
  return train_local(source, Trainable::decoder, split.train, split.test, options.schedule, seed);
}

const ResultRow* ExperimentResult::find(std::string_view centre, std::string_view method) const {
  for (const auto& r : rows) {
    if (r.centre == centre && r.method == method) return &r;
  }
  return nullptr;
}

std::string results_csv(const ExperimentResult& result) {
  std::string out = "centre,method,miou,dice,n_images\n";
  for (const auto& row : result.rows) {
    if (row.report) {
      out += metric_csv_row(row.centre, row.method, *row.report) + "\n";
    } else {
      out += row.centre + "," + row.method + ",N/A,N/A,N/A\n";
    }
  }
  return out;
}

std::string render_report(const ExperimentResult& result, std::uint64_t seed) {
  std::ostringstream md;
  std::vector<std::string> centres;
  for (const auto& r : result.rows) {
    if (std::find(centres.begin(), centres.end(), r.centre) == centres.end()) centres.push_back(r.centre);
  }
  auto table = [&](bool dice) {
    md << "| Centre |";
    for (const auto& m : method_names()) md << " " << m << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < method_names().size(); ++i) md << "---|";
    md << "\n";
    for (const auto& c : centres) {
      md << "| " << c << (c == centres.front() ? " (source)" : "") << " |";
      for (const auto& m : method_names()) {
        const auto* row = result.find(c, m);
        md << " " << (row && row->report ? format_percent(dice ? row->report->dice : row->report->miou) : "N/A")
           << " |";
      }
      md << "\n";
    }
  };
  md << "# Cross-centre segmentation results (seed " << seed << ")\n\n";
  md << "## mIoU (x100)\n\n";
  table(false);
  md << "\n## Dice (x100)\n\n";
  table(true);
  md << "\n## Decoder attestation\n\n";
  md << "- hash before client training: `" << digest_hex(result.decoder_hash_before) << "`\n";
  md << "- hash after client training:  `" << digest_hex(result.decoder_hash_after) << "`\n";
  md << "- unchanged: " << (result.decoder_hash_before == result.decoder_hash_after ? "yes" : "NO") << "\n";
  md << "\n## Parameter storage across " << result.centre_count << " centres\n\n";
  md << "| Method | decoder sets | decoder parameters | encoder sets |\n|---|---|---|---|\n";
  for (const auto& s : result.storage) {
    md << "| " << s.method << " | " << s.decoder_sets << " | " << s.decoder_parameters << " | " << s.encoder_sets
       << " |\n";
  }
  bool any_notes = false;
  for (const auto& r : result.rows) {
    if (!r.note.empty()) {
      if (!any_notes) md << "\n## Notes\n\n";
      any_notes = true;
      md << "- " << r.centre << " / " << r.method << ": " << r.note << "\n";
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", result.seconds);
  md << "\nWall time: " << buf << " s\n";
  return md.str();
}

namespace {

template <class F>
void attempt(ExperimentResult& result, const std::string& centre, const std::string& method, F&& run) {
  ResultRow row{centre, method, std::nullopt, ""};
  try {
    row.report = run();
  } catch (const std::exception& e) {
    row.note = std::string("failed: ") + e.what();
  }
  result.rows.push_back(std::move(row));
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

}  // namespace

ExperimentResult run_full_experiment(const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const HarnessOptions options = config.options.value_or(harness_options(config.scale));
  const std::uint64_t seed = config.master_seed;
  const std::vector<DatasetSplit> centres =
      config.centres.value_or(default_centres(derive_seed(seed, "data")));
  if (centres.size() < 2) throw ConfigError("experiment needs a source and at least one target centre");
  const auto& out_dir = config.out_dir;

  ExperimentResult result;
  result.centre_count = centres.size();
  const std::string source_id = centres.front().domain_id;

  // Source centre: joint training; its decoder becomes the shared server half.
  const LocalTrainResult source = train_source(centres.front(), derive_seed(seed, "train/" + source_id), options);
  const SegModel& src = source.best;
  result.decoder_parameter_count = src.decoder.parameter_count();
  result.traces["INDP_" + source_id] = source.trace;
  if (out_dir) {
    save_encoder_checkpoint(*out_dir / "checkpoints" / "source_encoder.sfps", src.encoder_spec, src.encoder);
    save_decoder_checkpoint(*out_dir / "checkpoints" / "source_decoder.sfps", src.decoder_spec, src.decoder);
  }

  std::map<std::string, std::map<std::string, MetricReport>> cells;  // method -> centre -> report
  std::map<std::string, std::map<std::string, std::string>> notes;
  std::map<std::string, ParamSet> client_encoders;                  // "<method>_<centre>"
  cells["INDP"][source_id] = source.best_report;
  cells["RandEn"][source_id] = source.best_report;

  // Frozen decoder behind a real loopback server; clients only hold encoders.
  {
    auto host = std::make_shared<const DecoderHost>(src.decoder_spec, src.decoder, src.encoder,
                                                    DecoderHost::Options{true});
    result.decoder_hash_before = host->decoder_hash();
    Server server(host, ServerOptions{{"127.0.0.1", 0},
                                      out_dir ? std::optional(*out_dir / "server.log") : std::nullopt});
    server.start();
    for (std::size_t c = 1; c < centres.size(); ++c) {
      const auto& split = centres[c];
      for (const auto& [method, mode] : {std::pair{std::string("RandEn"), InitMode::random},
                                         std::pair{std::string("FtEn"), InitMode::from_server}}) {
        try {
          ClientConfig cfg;
          cfg.centre_id = split.domain_id;
          cfg.server = server.endpoint();
          cfg.variant = options.variant;
          cfg.init_mode = mode;
          cfg.schedule = options.schedule;
          cfg.seed = derive_seed(seed, "client/" + split.domain_id);
          auto r = train_remote(cfg, split);
          cells[method][split.domain_id] = r.best_report;
          result.traces[method + "_" + split.domain_id] = r.trace;
          client_encoders[method + "_" + split.domain_id] = r.best_encoder;
          if (out_dir) {
            save_encoder_checkpoint(*out_dir / "checkpoints" / (method + "_" + split.domain_id + "_encoder.sfps"),
                                    r.spec, r.best_encoder);
          }
        } catch (const std::exception& e) {
          notes[method][split.domain_id] = std::string("failed: ") + e.what();
        }
      }
    }
    try {
      RemoteDecoder probe(server.endpoint(), "attestation");
      result.decoder_hash_after = probe.decoder_hash();
    } catch (const std::exception&) {
      result.decoder_hash_after = Digest{};
    }
    server.stop();
  }

  // Baselines in-process.
  std::size_t indp_decoders = 1;  // the source run
  for (std::size_t c = 1; c < centres.size(); ++c) {
    const auto& split = centres[c];
    try {
      auto r = run_indp(split, derive_seed(seed, "train/" + split.domain_id), options);
      cells["INDP"][split.domain_id] = r.best_report;
      result.traces["INDP_" + split.domain_id] = r.trace;
      ++indp_decoders;
    } catch (const std::exception& e) {
      notes["INDP"][split.domain_id] = std::string("failed: ") + e.what();
    }
  }

  try {
    auto comb = run_comb(centres, derive_seed(seed, "comb"), options);
    for (std::size_t c = 0; c < centres.size(); ++c) cells["COMB"][centres[c].domain_id] = comb.per_centre[c];
    result.traces["COMB_all"] = comb.trace;
  } catch (const std::exception& e) {
    for (const auto& s : centres) notes["COMB"][s.domain_id] = std::string("failed: ") + e.what();
  }

  std::size_t fedavg_replicas = 0;
  try {
    const std::uint64_t rounds = options.fedavg_rounds ? options.fedavg_rounds : options.schedule.iterations;
    auto fed = run_fedavg(centres, rounds, options.fedavg_local_batches, derive_seed(seed, "fedavg"), options);
    for (std::size_t c = 0; c < centres.size(); ++c) cells["FedAvg"][centres[c].domain_id] = fed.per_centre[c];
    result.traces["FedAvg_all"] = fed.trace;
    fedavg_replicas = fed.replicas.size();
  } catch (const std::exception& e) {
    for (const auto& s : centres) notes["FedAvg"][s.domain_id] = std::string("failed: ") + e.what();
  }

  std::size_t ftde_decoders = 1;  // the source decoder the source centre keeps
  std::size_t ftde_encoders = 1;  // one frozen source encoder, shared
  for (std::size_t c = 1; c < centres.size(); ++c) {
    const auto& split = centres[c];
    try {
      auto r = run_ftde(src, split, derive_seed(seed, "ftde/" + split.domain_id), options);
      if (r.best.encoder != src.encoder) throw Error("FtDe modified the frozen encoder");
      cells["FtDe"][split.domain_id] = r.best_report;
      result.traces["FtDe_" + split.domain_id] = r.trace;
      ++ftde_decoders;
    } catch (const std::exception& e) {
      notes["FtDe"][split.domain_id] = std::string("failed: ") + e.what();
    }
  }
  notes["FtDe"][source_id] = "not applicable to the source centre";
  notes["FtEn"][source_id] = "not applicable to the source centre";

  for (const auto& s : centres) {
    for (const auto& m : method_names()) {
      ResultRow row{s.domain_id, m, std::nullopt, ""};
      if (auto it = cells[m].find(s.domain_id); it != cells[m].end()) row.report = it->second;
      if (auto it = notes[m].find(s.domain_id); it != notes[m].end() && !row.report) row.note = it->second;
      result.rows.push_back(std::move(row));
    }
  }

  // Storage: count the decoder ParamSets each method leaves with its participants.
  const std::size_t n = centres.size();
  const std::size_t per_decoder = result.decoder_parameter_count;
  auto client_decoder_sets = [&](const std::string& method) {
    std::size_t sets = 0;
    for (const auto& [key, enc] : client_encoders) {
      if (key.starts_with(method + "_") && !enc.with_prefix(kDecoderPrefix).empty()) ++sets;
    }
    return sets;
  };
  result.storage = {
      {"INDP", indp_decoders, indp_decoders * per_decoder, indp_decoders},
      {"COMB", 1, per_decoder, 1},
      {"FedAvg", fedavg_replicas, fedavg_replicas * per_decoder, fedavg_replicas},
      {"FtDe", ftde_decoders, ftde_decoders * per_decoder, ftde_encoders},
      {"RandEn", 1 + client_decoder_sets("RandEn"), (1 + client_decoder_sets("RandEn")) * per_decoder, n},
      {"FtEn", 1 + client_decoder_sets("FtEn"), (1 + client_decoder_sets("FtEn")) * per_decoder, n},
  };

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (out_dir) {
    write_text(*out_dir / "results.csv", results_csv(result));
    write_text(*out_dir / "report.md", render_report(result, seed));
    for (const auto& [key, trace] : result.traces) {
      write_trace_csv(trace, *out_dir / "traces" / (key + "_loss.csv"), *out_dir / "traces" / (key + "_eval.csv"));
    }
  }
  return result;
}

}  // namespace splitfed
