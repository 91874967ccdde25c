// splitfed command-line front end.
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "splitfed/client.hpp"
#include "splitfed/harness.hpp"
#include "splitfed/serialize.hpp"
#include "splitfed/server.hpp"
#include "splitfed/synthdata.hpp"

using namespace splitfed;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_shutdown{false};

void on_signal(int) { g_shutdown = true; }

struct ScheduleFlags {
  std::optional<std::uint64_t> iters;
  std::optional<std::size_t> batch;
  std::optional<float> lr;
  std::optional<std::uint64_t> eval_every;

  void attach(CLI::App* app) {
    app->add_option("--iters", iters, "Training iterations");
    app->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Base learning rate")->check(CLI::PositiveNumber);
    app->add_option("--eval-every", eval_every, "Evaluate every N iterations (0: only at the end)");
  }
  void apply(TrainSchedule& s) const {
    if (iters) s.iterations = *iters;
    if (batch) s.batch_size = *batch;
    if (lr) s.learning_rate = *lr;
    if (eval_every) s.eval_interval = *eval_every;
  }
};

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

void print_report(std::string_view label, const MetricReport& r) {
  std::printf("%s: mIoU %s  Dice %s  (%zu test images)\n", std::string(label).c_str(),
              format_percent(r.miou).c_str(), format_percent(r.dice).c_str(), r.count());
}

void save_trace(const TrainTrace& trace, const fs::path& dir, const std::string& stem) {
  write_trace_csv(trace, dir / "traces" / (stem + "_loss.csv"), dir / "traces" / (stem + "_eval.csv"));
}

// Mean over seeds of every (centre, method) cell that has a value in all runs.
std::string seeds_summary(const std::vector<std::pair<std::uint64_t, ExperimentResult>>& runs) {
  std::string out = "centre,method,seeds,mean_miou,mean_dice\n";
  const auto& first = runs.front().second;
  for (const auto& row : first.rows) {
    double miou = 0, dice = 0;
    std::size_t n = 0;
    for (const auto& [seed, r] : runs) {
      const auto* cell = r.find(row.centre, row.method);
      if (cell && cell->report) {
        miou += cell->report->miou;
        dice += cell->report->dice;
        ++n;
      }
    }
    if (n == runs.size()) {
      out += row.centre + "," + row.method + "," + std::to_string(n) + "," + format_percent(miou / n) + "," +
             format_percent(dice / n) + "\n";
    } else {
      out += row.centre + "," + row.method + "," + std::to_string(n) + ",N/A,N/A\n";
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split encoder/decoder training across centres with a shared frozen decoder"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic 4-centre benchmark as SFDS files");
  std::uint64_t gen_seed = 7;
  fs::path gen_out;
  std::size_t gen_pgm = 0;
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--pgm", gen_pgm, "Also export the first N test images per centre as PGM");

  // train-source
  auto* src = app.add_subcommand("train-source", "Train encoder+decoder jointly on the source centre");
  fs::path src_data, src_out;
  std::uint64_t src_seed = 7;
  std::string src_scale = "default", src_variant = "small";
  ScheduleFlags src_sched;
  src->add_option("--data", src_data, "Source centre SFDS")->required()->check(CLI::ExistingFile);
  src->add_option("--seed", src_seed, "Seed");
  src->add_option("--out", src_out, "Output directory")->required();
  src->add_option("--scale", src_scale, "small|default");
  src->add_option("--variant", src_variant, "Encoder size: small|medium|large");
  src_sched.attach(src);

  // serve
  auto* serve = app.add_subcommand("serve", "Host a frozen decoder over TCP");
  fs::path serve_decoder, serve_log;
  std::optional<fs::path> serve_encoder;
  std::string serve_listen = "127.0.0.1:5151";
  serve->add_option("--decoder", serve_decoder, "Decoder checkpoint (SFPS)")->required()->check(CLI::ExistingFile);
  serve->add_option("--source-encoder", serve_encoder, "Source encoder checkpoint offered to FtEn clients")
      ->check(CLI::ExistingFile);
  serve->add_option("--listen", serve_listen, "host:port (port 0 picks a free one)");
  serve->add_option("--log", serve_log, "Request log file");

  // client
  auto* cli = app.add_subcommand("client", "Train a centre's encoder against a running server");
  std::string cli_centre, cli_server, cli_variant = "small", cli_init = "random";
  fs::path cli_data, cli_out;
  std::uint64_t cli_seed = 7;
  ScheduleFlags cli_sched;
  cli->add_option("--centre", cli_centre, "Centre id")->required();
  cli->add_option("--server", cli_server, "host:port")->required();
  cli->add_option("--data", cli_data, "Centre SFDS")->required()->check(CLI::ExistingFile);
  cli->add_option("--variant", cli_variant, "small|medium|large");
  cli->add_option("--init", cli_init, "random|server");
  cli->add_option("--seed", cli_seed, "Seed");
  cli->add_option("--out", cli_out, "Output directory")->required();
  cli_sched.attach(cli);

  // baseline
  auto* base = app.add_subcommand("baseline", "Run one in-process baseline");
  std::string base_method;
  std::vector<fs::path> base_data;
  fs::path base_out;
  std::optional<fs::path> base_encoder, base_decoder;
  std::uint64_t base_seed = 7;
  std::string base_scale = "default", base_variant = "small";
  ScheduleFlags base_sched;
  base->add_option("method", base_method, "indp|comb|fedavg|ftde")
      ->required()
      ->check(CLI::IsMember({"indp", "comb", "fedavg", "ftde"}));
  base->add_option("--data", base_data, "Centre SFDS file(s); comb/fedavg take several")
      ->required()
      ->check(CLI::ExistingFile);
  base->add_option("--source-encoder", base_encoder, "Source encoder checkpoint (ftde)")->check(CLI::ExistingFile);
  base->add_option("--decoder", base_decoder, "Source decoder checkpoint (ftde)")->check(CLI::ExistingFile);
  base->add_option("--seed", base_seed, "Seed");
  base->add_option("--out", base_out, "Output directory")->required();
  base->add_option("--scale", base_scale, "small|default");
  base->add_option("--variant", base_variant, "small|medium|large");
  base_sched.attach(base);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run every method on every centre");
  std::uint64_t exp_seed = 7;
  std::size_t exp_repeat = 1;
  fs::path exp_out;
  std::string exp_scale = "default", exp_variant = "small";
  ScheduleFlags exp_sched;
  exp->add_option("--seed", exp_seed, "Master seed");
  exp->add_option("--out", exp_out, "Output directory")->required();
  exp->add_option("--seeds-repeat", exp_repeat, "Run seeds S..S+K-1 and summarise")->check(CLI::PositiveNumber);
  exp->add_option("--scale", exp_scale, "small|default");
  exp->add_option("--variant", exp_variant, "Encoder size: small|medium|large");
  exp_sched.attach(exp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto centres = default_centres(derive_seed(gen_seed, "data"));
      for (const auto& c : centres) {
        const auto path = gen_out / (c.domain_id + ".sfds");
        save_split(c, path);
        std::printf("%s: %zu train / %zu test -> %s\n", c.domain_id.c_str(), c.train.size(), c.test.size(),
                    path.c_str());
        for (std::size_t i = 0; i < std::min(gen_pgm, c.test.size()); ++i) {
          export_pgm(c.test[i], gen_out / "pgm", c.domain_id + "_test_" + std::to_string(i));
        }
      }
      return 0;
    }

    if (*src) {
      HarnessOptions options = harness_options(parse_scale(src_scale));
      options.variant = parse_variant(src_variant);
      src_sched.apply(options.schedule);
      const auto split = load_split(src_data);
      const auto r = train_source(split, src_seed, options);
      save_encoder_checkpoint(src_out / "checkpoints" / "source_encoder.sfps", r.best.encoder_spec, r.best.encoder);
      save_decoder_checkpoint(src_out / "checkpoints" / "source_decoder.sfps", r.best.decoder_spec, r.best.decoder);
      save_trace(r.trace, src_out, "source_" + split.domain_id);
      print_report("source " + split.domain_id, r.best_report);
      return 0;
    }

    if (*serve) {
      auto [spec, params] = load_decoder_checkpoint(serve_decoder);
      std::optional<ParamSet> encoder;
      if (serve_encoder) encoder = load_encoder_checkpoint(*serve_encoder).second;
      auto host = std::make_shared<const DecoderHost>(spec, std::move(params), std::move(encoder));
      ServerOptions options;
      options.listen = parse_endpoint(serve_listen);
      if (!serve_log.empty()) options.log_path = serve_log;
      Server server(host, options);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      std::printf("serving decoder %s on %s:%u\n", digest_hex(host->decoder_hash()).c_str(),
                  options.listen.host.c_str(), static_cast<unsigned>(server.port()));
      std::fflush(stdout);
      server.serve(g_shutdown);
      std::printf("served %llu request(s)\n", static_cast<unsigned long long>(server.requests_served()));
      return 0;
    }

    if (*cli) {
      ClientConfig config;
      config.centre_id = cli_centre;
      config.server = parse_endpoint(cli_server);
      config.variant = parse_variant(cli_variant);
      config.init_mode = parse_init_mode(cli_init);
      cli_sched.apply(config.schedule);
      config.seed = cli_seed;
      config.out_dir = cli_out;
      const auto split = load_split(cli_data);
      const auto r = train_remote(config, split);
      print_report("centre " + cli_centre, r.best_report);
      return 0;
    }

    if (*base) {
      HarnessOptions options = harness_options(parse_scale(base_scale));
      options.variant = parse_variant(base_variant);
      base_sched.apply(options.schedule);
      std::vector<DatasetSplit> splits;
      for (const auto& p : base_data) splits.push_back(load_split(p));

      if (base_method == "indp") {
        for (const auto& s : splits) {
          auto r = run_indp(s, base_seed, options);
          save_trace(r.trace, base_out, "INDP_" + s.domain_id);
          print_report("INDP " + s.domain_id, r.best_report);
        }
      } else if (base_method == "comb" || base_method == "fedavg") {
        const bool comb = base_method == "comb";
        MultiCentreResult r;
        if (comb) {
          r = run_comb(splits, base_seed, options);
        } else {
          const auto rounds = options.fedavg_rounds ? options.fedavg_rounds : options.schedule.iterations;
          r = run_fedavg(splits, rounds, options.fedavg_local_batches, base_seed, options);
        }
        const std::string name = comb ? "COMB" : "FedAvg";
        save_trace(r.trace, base_out, name + "_all");
        save_encoder_checkpoint(base_out / "checkpoints" / (name + "_encoder.sfps"), r.model.encoder_spec,
                                r.model.encoder);
        save_decoder_checkpoint(base_out / "checkpoints" / (name + "_decoder.sfps"), r.model.decoder_spec,
                                r.model.decoder);
        for (std::size_t i = 0; i < splits.size(); ++i) print_report(name + " " + splits[i].domain_id, r.per_centre[i]);
      } else {
        if (!base_encoder || !base_decoder) throw ConfigError("ftde needs --source-encoder and --decoder");
        SegModel source;
        std::tie(source.encoder_spec, source.encoder) = load_encoder_checkpoint(*base_encoder);
        std::tie(source.decoder_spec, source.decoder) = load_decoder_checkpoint(*base_decoder);
        for (const auto& s : splits) {
          auto r = run_ftde(source, s, base_seed, options);
          save_trace(r.trace, base_out, "FtDe_" + s.domain_id);
          save_decoder_checkpoint(base_out / "checkpoints" / ("FtDe_" + s.domain_id + "_decoder.sfps"),
                                  r.best.decoder_spec, r.best.decoder);
          print_report("FtDe " + s.domain_id, r.best_report);
        }
      }
      return 0;
    }

    if (*exp) {
      HarnessOptions options = harness_options(parse_scale(exp_scale));
      options.variant = parse_variant(exp_variant);
      exp_sched.apply(options.schedule);
      std::vector<std::pair<std::uint64_t, ExperimentResult>> runs;
      for (std::size_t k = 0; k < exp_repeat; ++k) {
        ExperimentConfig config;
        config.master_seed = exp_seed + k;
        config.options = options;
        config.out_dir = exp_repeat == 1 ? exp_out : exp_out / ("seed_" + std::to_string(config.master_seed));
        auto r = run_full_experiment(config);
        std::printf("seed %llu: %.1f s -> %s\n", static_cast<unsigned long long>(config.master_seed), r.seconds,
                    (*config.out_dir / "results.csv").c_str());
        std::fflush(stdout);
        runs.emplace_back(config.master_seed, std::move(r));
      }
      if (exp_repeat > 1) write_text(exp_out / "summary.csv", seeds_summary(runs));
      std::fputs((exp_repeat > 1 ? seeds_summary(runs) : results_csv(runs.front().second)).c_str(), stdout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "splitfed: %s\n", e.what());
    return 1;
  }
  return 0;
}
