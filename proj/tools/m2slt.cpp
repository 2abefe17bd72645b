#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "m2slt/config.hpp"
#include "m2slt/error.hpp"
#include "m2slt/pipeline.hpp"

namespace {

using namespace m2slt;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "JSON run config");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (out_required) out->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_run_config("{}") : load_run_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-Event sign translation toolkit"};
  app.require_subcommand(1);

  Common c;
  std::string dataset, prototypes, checkpoint, features;
  bool verbose = false, text_events = false, no_smoothing = false;
  std::optional<std::size_t> n_samples, epochs;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, c, true);
  synth->add_option("-n,--samples", n_samples, "number of samples");
  synth->add_flag("--text-events", text_events, "write EVT-TXT instead of EVT-BIN");

  auto* segment = app.add_subcommand("segment", "informative segment proposals as JSON lines");
  add_common(segment, c, false);
  segment->add_option("dataset", dataset)->required();
  segment->add_flag("-v,--verbose", verbose, "include per-branch proposals");

  auto* cluster = app.add_subcommand("cluster", "build macro-sign prototypes");
  add_common(cluster, c, true);
  cluster->add_option("dataset", dataset)->required();

  auto* trn = app.add_subcommand("train", "train a translator");
  add_common(trn, c, true);
  trn->add_option("dataset", dataset)->required();
  trn->add_option("--prototypes", prototypes, "prototype file from `cluster`");
  trn->add_option("--epochs", epochs, "overrides sgd.epochs");

  auto* eval = app.add_subcommand("eval", "score greedy translations");
  add_common(eval, c, false);
  eval->add_option("dataset", dataset)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_flag("--no-smoothing", no_smoothing, "plain BLEU without add-one smoothing");
  eval->add_option("--dump-features", features, "write pooled fused features as JSON lines");

  auto* tr = app.add_subcommand("translate", "greedy translations as JSON lines");
  add_common(tr, c, false);
  tr->add_option("dataset", dataset)->required();
  tr->add_option("--checkpoint", checkpoint)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = resolve(c);
    if (n_samples) cfg.n_samples = *n_samples;
    if (epochs) cfg.train.epochs = *epochs;
    validate(cfg);

    if (*synth) {
      run_synth(cfg, c.out, text_events);
    } else if (*segment) {
      if (c.out.empty()) {
        run_segment(cfg, dataset, verbose, std::cout, std::cerr);
      } else {
        std::ostringstream buf;
        run_segment(cfg, dataset, verbose, buf, std::cerr);
        std::ofstream(c.out) << buf.str();
      }
    } else if (*cluster) {
      run_cluster(cfg, dataset, c.out, std::cout);
    } else if (*trn) {
      std::optional<std::filesystem::path> protos;
      if (!prototypes.empty()) protos = prototypes;
      run_train(cfg, dataset, protos, c.out, std::cerr);
    } else if (*eval) {
      std::optional<std::filesystem::path> dump;
      if (!features.empty()) dump = features;
      std::ostringstream buf;
      run_eval(cfg, dataset, checkpoint, no_smoothing ? BleuSmoothing::none : BleuSmoothing::add_one,
               dump, buf);
      std::cout << buf.str();
      if (!c.out.empty()) std::ofstream(c.out) << buf.str();
    } else if (*tr) {
      run_translate(cfg, dataset, checkpoint, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
