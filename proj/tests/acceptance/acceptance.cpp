// Acceptance gate: one PASS/FAIL line per criterion. `--criterion N` runs a
// single criterion; the exit status is non-zero if any selected one fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "protocol_cases.hpp"
#include "splitfed/client.hpp"
#include "splitfed/harness.hpp"
#include "splitfed/serialize.hpp"
#include "splitfed/server.hpp"

namespace fs = std::filesystem;
using namespace splitfed;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path cli;
  fs::path work;
  std::vector<std::uint64_t> seeds{7, 8, 9};
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Finite-difference gradient checks on every layer and the fused loss.
Outcome gradient_suite(const Context&) {
  const auto start = std::chrono::steady_clock::now();
  const auto checks = ref::check_all_layers(20, 20240601);
  const double secs = seconds_since(start);
  bool ok = secs < 30.0;
  std::string detail;
  for (const auto& c : checks) {
    ok = ok && c.instances >= 20 && c.max_rel_error < 1e-3;
    detail += fmt("%s n=%zu max_rel=%.2e; ", c.layer.c_str(), c.instances, c.max_rel_error);
  }
  return {ok, detail + fmt("%.1f s (limit 30 s)", secs)};
}

// 2. Ten iterations over the live wire equal the in-process encoder-only run.
Outcome split_vs_monolithic(const Context&) {
  const auto start = std::chrono::steady_clock::now();
  const auto centres = default_centres(derive_seed(7, "data"));
  const DatasetSplit& target = centres.at(1);
  const Decoder decoder;
  const ParamSet frozen = decoder.init(derive_seed(7, "decoder-init"));
  auto host = std::make_shared<const DecoderHost>(decoder.spec(), frozen);
  Server server(host, ServerOptions{});
  server.start();

  ClientConfig cfg;
  cfg.centre_id = target.domain_id;
  cfg.server = server.endpoint();
  cfg.seed = 7;
  cfg.schedule.iterations = 10;
  cfg.schedule.eval_interval = 0;
  const auto remote = train_remote(cfg, target);
  server.stop();

  const Encoder encoder(remote.spec);
  SegModel init{remote.spec, decoder.spec(), encoder.init(derive_seed(cfg.seed, "encoder-init")), frozen};
  const auto local = train_local(init, Trainable::encoder, target.train, {}, cfg.schedule, cfg.seed);
  const double diff = max_abs_diff(remote.final_encoder, local.final.encoder);
  const double secs = seconds_since(start);
  const bool moved = max_abs_diff(remote.final_encoder, init.encoder) > 0.0;
  return {diff <= 1e-6 && moved && secs < 60.0,
          fmt("max|split - monolithic| = %.3e (limit 1e-6), encoder moved: %s, %.1f s (limit 60 s)", diff,
              moved ? "yes" : "no", secs)};
}

// 3. Four concurrent clients x 50 train steps leave the decoder hash unchanged.
Outcome decoder_freeze(const Context&) {
  const auto centres = default_centres(derive_seed(7, "data"));
  const Decoder decoder;
  const ParamSet params = decoder.init(derive_seed(7, "decoder-init"));
  const Digest before = decoder_hash(params);
  auto host = std::make_shared<const DecoderHost>(decoder.spec(), params);
  Server server(host, ServerOptions{});
  server.start();
  std::atomic<int> finished{0};
  std::vector<std::thread> clients;
  for (int c = 0; c < 4; ++c) {
    clients.emplace_back([&, c] {
      try {
        const auto& split = centres.at(static_cast<std::size_t>(c));
        ClientConfig cfg;
        cfg.centre_id = split.domain_id;
        cfg.server = server.endpoint();
        cfg.seed = static_cast<std::uint64_t>(c);
        cfg.schedule.iterations = 50;
        cfg.schedule.eval_interval = 0;
        train_remote(cfg, split);
        ++finished;
      } catch (const std::exception& e) {
        std::fprintf(stderr, "client %d: %s\n", c, e.what());
      }
    });
  }
  for (auto& t : clients) t.join();
  RemoteDecoder probe(server.endpoint(), "probe");
  const Digest remote_after = probe.decoder_hash();
  const auto served = server.requests_served();
  server.stop();
  const Digest after = decoder_hash(host->decoder_params());
  const bool ok = finished == 4 && after == before && remote_after == before;
  return {ok, fmt("%d/4 clients finished, %llu requests, hash %s -> %s", finished.load(),
                  static_cast<unsigned long long>(served), digest_hex(before).substr(0, 16).c_str(),
                  digest_hex(after).substr(0, 16).c_str())};
}

// 4. Golden frames round-trip; mutation fuzz never crashes or overreads.
Outcome protocol(const Context&) {
  std::size_t exact = 0;
  const auto cases = ref::golden_cases();
  for (const auto& c : cases) {
    if (encode_message(c.message) == c.frame && decode_message(c.frame) == c.message) ++exact;
  }
  const auto stats = ref::fuzz_decode(100000, 0xF022);
  const bool ok = cases.size() == 11 && exact == 11 && stats.unexpected == 0 && stats.non_canonical == 0 &&
                  stats.cases == 100000;
  return {ok, fmt("golden %zu/11 exact; fuzz %zu cases: %zu rejected, %zu accepted, %zu non-canonical, "
                  "%zu unexpected",
                  exact, stats.cases, stats.rejected, stats.accepted, stats.non_canonical, stats.unexpected)};
}

// 5. IoU/Dice on constructed masks, BCE at zero logits.
Outcome metric_identities(const Context&) {
  auto half = [](std::size_t from, std::size_t to) {
    Tensor t({1, 16, 32});
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = from; x < to; ++x) t.values()[y * 32 + x] = 1.0f;
    }
    return t;
  };
  const Tensor a = half(0, 16), disjoint = half(16, 32), shifted = half(8, 24);
  auto iou_of = [](const Tensor& p, const Tensor& m) {
    return segmentation_metrics(std::span(&p, 1), std::span(&m, 1));
  };
  const auto same = iou_of(a, a), none = iou_of(disjoint, a), third = iou_of(shifted, a);
  bool dice_ok = true;
  for (const auto* r : {&same, &none, &third}) {
    dice_ok = dice_ok && std::abs(r->dice - 2 * r->miou / (1 + r->miou)) <= 1e-12;
  }
  const Tensor masks = half(4, 20).reshaped({1, 1, 16, 32});
  const double bce = bce_from_logits(Tensor({1, 1, 16, 32}), masks).loss;
  const bool ok = same.miou == 1.0 && none.miou == 0.0 && std::abs(third.miou - 1.0 / 3.0) <= 1e-12 && dice_ok &&
                  std::abs(bce - std::numbers::ln2) <= 1e-6;
  return {ok, fmt("IoU identical=%.6f disjoint=%.6f half-overlap=%.6f; dice identity %s; BCE(0)=%.8f (ln2=%.8f)",
                  same.miou, none.miou, third.miou, dice_ok ? "holds" : "violated", bce, std::numbers::ln2)};
}

// 6. FedAvg over identical centres is one centralized step.
Outcome fedavg_identity(const Context&) {
  HarnessOptions o;
  o.schedule.iterations = 1;
  const auto source = default_centres(derive_seed(7, "data")).front();
  DatasetSplit split = source;
  split.test.resize(8);
  const std::vector<DatasetSplit> centres(4, split);
  const std::uint64_t seed = 7;
  const auto fed = run_fedavg(centres, 1, 1, seed, o);

  const Encoder enc(encoder_spec_for(o, split));
  DecoderSpec ds = o.decoder;
  ds.latent = enc.latent_shape();
  const Decoder dec(ds);
  ParamSet params = concat(enc.init(derive_seed(seed, "encoder-init")), dec.init(derive_seed(seed, "decoder-init")));
  BatchSampler sampler(split.train.size(), o.schedule.batch_size, derive_seed(seed, "fedavg/" + split.domain_id));
  const auto g = batch_gradients(enc, dec, params.with_prefix(kEncoderPrefix), params.with_prefix(kDecoderPrefix),
                                 split.train, sampler.next(), Trainable::both);
  AdamState adam = AdamState::for_params(params, o.schedule.adam());
  adam.config.learning_rate = o.schedule.learning_rate_at(0);
  adam_step(params, concat(g.encoder, g.decoder), adam);

  double worst = 0.0;
  for (const auto& r : fed.replicas) worst = std::max(worst, max_abs_diff(concat(r.encoder, r.decoder), params));
  return {worst <= 1e-6, fmt("max|FedAvg round - centralized step| = %.3e over %zu replicas (limit 1e-6)", worst,
                             fed.replicas.size())};
}

// 7. FtEn beats INDP on the smallest target centre, mean over seeds.
Outcome adaptation(const Context& ctx) {
  double ften = 0.0, indp = 0.0, randen = 0.0, worst_secs = 0.0;
  std::string per_seed;
  std::size_t smallest = 1;
  const auto sizes = default_centre_sizes();
  for (std::size_t c = 1; c < sizes.size(); ++c) {
    if (sizes[c].first < sizes[smallest].first) smallest = c;
  }
  for (auto seed : ctx.seeds) {
    ExperimentConfig cfg;
    cfg.master_seed = seed;
    cfg.out_dir = ctx.work / "criterion7" / ("seed_" + std::to_string(seed));
    const auto r = run_full_experiment(cfg);
    const std::string centre = default_domain_specs()[smallest].domain_id;
    const auto* f = r.find(centre, "FtEn");
    const auto* i = r.find(centre, "INDP");
    const auto* re = r.find(centre, "RandEn");
    if (!f || !f->report || !i || !i->report) return {false, fmt("seed %llu: missing FtEn/INDP cell", seed)};
    ften += f->report->miou;
    indp += i->report->miou;
    if (re && re->report) randen += re->report->miou;
    worst_secs = std::max(worst_secs, r.seconds);
    per_seed += fmt("seed %llu %s FtEn=%.1f RandEn=%.1f INDP=%.1f (%.0f s); ", static_cast<unsigned long long>(seed),
                    centre.c_str(), 100 * f->report->miou, re && re->report ? 100 * re->report->miou : NAN,
                    100 * i->report->miou, r.seconds);
  }
  const double n = static_cast<double>(ctx.seeds.size());
  const double gap = 100.0 * (ften - indp) / n;
  const bool ok = ctx.seeds.size() >= 3 && gap > 2.0 && worst_secs < 15 * 60;
  return {ok, per_seed + fmt("mean FtEn - INDP = %+.2f points (need > 2), mean RandEn - INDP = %+.2f, "
                             "slowest run %.0f s (limit 900 s)",
                             gap, 100.0 * (randen - indp) / n, worst_secs)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8. Two CLI runs with the same seed write byte-identical results.csv.
Outcome determinism(const Context& ctx) {
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) return {false, "splitfed CLI not found; pass --cli"};
  std::vector<std::string> csvs;
  for (const char* run : {"a", "b"}) {
    const fs::path out = ctx.work / "criterion8" / run;
    fs::remove_all(out);
    const std::string cmd = "\"" + ctx.cli.string() + "\" experiment --seed 7 --out \"" + out.string() + "\" > \"" +
                            (ctx.work / "criterion8" / (std::string(run) + ".log")).string() + "\" 2>&1";
    fs::create_directories(ctx.work / "criterion8");
    if (std::system(cmd.c_str()) != 0) return {false, std::string("CLI run ") + run + " failed: " + cmd};
    csvs.push_back(slurp(out / "results.csv"));
  }
  const bool ok = !csvs[0].empty() && csvs[0] == csvs[1];
  return {ok, fmt("results.csv %zu bytes vs %zu bytes, %s", csvs[0].size(), csvs[1].size(),
                  csvs[0] == csvs[1] ? "byte-identical" : "DIFFER")};
}

// 9. Decoder parameter storage per method across an n-centre run.
Outcome storage(const Context& ctx) {
  ExperimentConfig cfg;
  cfg.master_seed = 7;
  cfg.scale = Scale::small;  // storage is structural; the schedule length does not change it
  cfg.out_dir = ctx.work / "criterion9";
  const auto r = run_full_experiment(cfg);
  const std::size_t n = r.centre_count;
  bool ok = true;
  std::string detail = fmt("n=%zu centres, one decoder = %zu params; ", n, r.decoder_parameter_count);
  for (const auto& s : r.storage) {
    std::size_t expected = 0;
    if (s.method == "RandEn" || s.method == "FtEn" || s.method == "FtDe") expected = 1;
    if (s.method == "INDP" || s.method == "FedAvg") expected = n;
    const bool row_ok = expected == 0 || (s.decoder_sets == expected &&
                                          s.decoder_parameters == expected * r.decoder_parameter_count);
    ok = ok && row_ok;
    detail += fmt("%s=%zu%s ", s.method.c_str(), s.decoder_sets,
                  expected == 0 ? "" : (row_ok ? "" : fmt("(expected %zu)", expected).c_str()));
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitfed acceptance gate"};
  int only = 0;
  Context ctx;
  ctx.work = fs::temp_directory_path() / "splitfed_acceptance";
  app.add_option("--criterion", only, "Run only this criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--cli", ctx.cli, "Path to the splitfed binary (criterion 8)");
  app.add_option("--work", ctx.work, "Scratch directory for experiment outputs");
  app.add_option("--seeds", ctx.seeds, "Master seeds for criterion 7");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome(const Context&)>>> criteria{
      {"gradient suite", gradient_suite},   {"split vs monolithic", split_vs_monolithic},
      {"decoder freeze", decoder_freeze},   {"protocol", protocol},
      {"metric identities", metric_identities}, {"FedAvg identity", fedavg_identity},
      {"desk-scale adaptation", adaptation}, {"determinism", determinism},
      {"decoder storage", storage},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %zu %-22s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
