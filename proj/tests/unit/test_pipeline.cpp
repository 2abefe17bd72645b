#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "m2slt/checkpoint.hpp"
#include "m2slt/error.hpp"
#include "m2slt/pipeline.hpp"

using namespace m2slt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("m2slt_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small, fast model for end-to-end runs.
RunConfig small_config(const std::string& extra = "") {
  return parse_run_config(R"({"seed": 3, "synth": {"n_samples": 3},
    "mir": {"n_slots": 16, "d_mem": 16, "hidden": 16},
    "mar": {"hidden": 16},
    "model": {"feature_dim": 16, "encoder_hidden": 16, "decoder": {"hidden": 32}},
    "sgd": {"epochs": 20})" + extra + "}");
}

}  // namespace

TEST_CASE("dataset round trip in both event formats") {
  for (bool text : {false, true}) {
    TempDir dir(text ? "ds_txt" : "ds_bin");
    SynthSpec spec;
    spec.noise_rate = 1.0;
    const auto data = gen_dataset(spec, 2, 5);
    save_dataset(dir.path, data, spec, text);
    CHECK(fs::exists(dir.path / "manifest.json"));
    CHECK(fs::exists(dir.path / "sample_0001" / "rgb.frm"));
    CHECK(fs::exists(dir.path / "sample_0001" / (text ? "events.txt" : "events.evb")));

    const auto loaded = load_dataset(dir.path);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(loaded[i].sample.meta == data[i].sample.meta);
      CHECK(loaded[i].sample.tokens == data[i].sample.tokens);
      CHECK(loaded[i].segments == data[i].segments);
      CHECK(loaded[i].events.events == data[i].events.events);
      CHECK(loaded[i].bin_edges == data[i].bin_edges);
      CHECK(loaded[i].sample.rgb.data == data[i].sample.rgb.data);
      CHECK(loaded[i].sample.evt.data == data[i].sample.evt.data);
    }
  }
}

TEST_CASE("synth output is byte-identical across runs") {
  TempDir a("synth_a"), b("synth_b");
  const RunConfig cfg = small_config();
  run_synth(cfg, a.path, false);
  run_synth(cfg, b.path, false);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(entry.path(), a.path);
    CHECK(slurp(entry.path()) == slurp(b.path / rel));
  }
  CHECK(files == 1 + 2 * cfg.n_samples);
}

TEST_CASE("missing sample files name the sample") {
  TempDir dir("ds_missing");
  SynthSpec spec;
  save_dataset(dir.path, gen_dataset(spec, 2, 1), spec);
  fs::remove(dir.path / "sample_0001" / "events.evb");
  try {
    load_dataset(dir.path);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("sample_0001") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(dir.path / "nowhere"), DataError);
  std::ofstream(dir.path / "manifest.json") << "{not json";
  CHECK_THROWS_AS(load_manifest(dir.path), FormatError);
}

TEST_CASE("segment command recovers ground truth on clean data") {
  TempDir dir("seg");
  const RunConfig cfg = small_config();
  run_synth(cfg, dir.path, false);
  const DatasetManifest manifest = load_manifest(dir.path);
  std::ostringstream out, log, again;
  run_segment(cfg, dir.path, true, out, log);
  run_segment(cfg, dir.path, true, again, log);
  CHECK(out.str() == again.str());
  std::istringstream lines(out.str());
  std::string line;
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    REQUIRE(i < manifest.samples.size());
    CHECK(j["sample"] == manifest.samples[i].id);
    CHECK(j.contains("rgb"));
    CHECK(j.contains("event"));
    const auto& segs = j["segments"];
    REQUIRE(segs.size() == manifest.samples[i].segments.size());
    for (std::size_t k = 0; k < segs.size(); ++k) {
      CHECK(segs[k][0] == manifest.samples[i].segments[k].start);
      CHECK(segs[k][1] == manifest.samples[i].segments[k].end);
    }
    ++i;
  }
  CHECK(i == manifest.samples.size());
}

TEST_CASE("segment on an empty dataset warns and prints nothing") {
  TempDir dir("seg_empty");
  std::ostringstream out, log;
  run_segment(small_config(), dir.path, false, out, log);
  CHECK(out.str().empty());
  CHECK(log.str().find("warning") != std::string::npos);
}

TEST_CASE("clustering constructed geometries") {
  Rng rng(1);
  Matrix near(30, 4);
  for (double& v : near.data()) v = 1.0 + rng.uniform(-1e-3, 1e-3);
  CHECK(cluster_features(near, DbscanConfig{}).prototypes.count() == 1);

  Matrix two(30, 4);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t k = 0; k < 4; ++k) two(i, k) = (i < 15 ? 0.0 : 5.0) + rng.uniform(-1e-2, 1e-2);
  const ClusterResult r = cluster_features(two, DbscanConfig{});
  CHECK(r.prototypes.count() == 2);
  for (std::size_t i = 0; i < 30; ++i)
    if (r.labels[i] >= 0) CHECK(r.labels[i] == r.labels[i < 15 ? 0 : 29]);
}

TEST_CASE("cluster samples: one window per gesture family") {
  // Single-token samples over two symbols: after deduplication two cropped
  // samples remain, each exactly one window long.
  RunConfig cfg = small_config(R"(, "dbscan": {"eps": 1e-6, "min_pts": 1})");
  cfg.synth.vocab_size = 6;
  cfg.synth.tokens_per_sample = 1;
  cfg.synth.noise_rate = 0.0;
  const auto data = gen_dataset(cfg.synth, 12, 4);
  const auto cropped = crop_all(std::span<const SynthSample>(data), cfg.segment);
  const ClusterResult r = cluster_samples(cropped, cfg);
  CHECK(r.labels.size() == 2);
  CHECK(r.prototypes.count() == 2);

  std::vector<AlignedSample> same;
  for (const auto& s : cropped)
    if (s.tokens == cropped.front().tokens) same.push_back(s);
  CHECK(cluster_samples(same, cfg).prototypes.count() == 1);
}

TEST_CASE("prototype files round trip") {
  TempDir dir("protos");
  PrototypeSet set;
  set.prototypes = Matrix{{1.0, 2.0}, {3.0, 4.0}};
  set.sizes = {5, 7};
  save_prototypes(dir.path / "p.m2sw", set);
  const PrototypeSet back = load_prototypes(dir.path / "p.m2sw");
  CHECK(back.prototypes == set.prototypes);
  CHECK(back.sizes == set.sizes);
}

TEST_CASE("cluster, train, eval and translate end to end") {
  TempDir dir("e2e");
  const RunConfig cfg = small_config();
  run_synth(cfg, dir.path / "data", false);

  std::ostringstream report;
  const ClusterResult cr = run_cluster(cfg, dir.path / "data", dir.path / "protos.m2sw", report);
  const json rep = json::parse(report.str());
  CHECK(rep["prototypes"] == cr.prototypes.count());
  CHECK(rep["noise"] == cr.noise);
  CHECK(rep.contains("eps"));

  std::ostringstream log;
  const TrainResult a = run_train(cfg, dir.path / "data", dir.path / "protos.m2sw",
                                  dir.path / "run_a", log);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  run_train(cfg, dir.path / "data", dir.path / "protos.m2sw", dir.path / "run_b", log);
  CHECK(slurp(dir.path / "run_a" / "loss.csv") == slurp(dir.path / "run_b" / "loss.csv"));
  CHECK(slurp(dir.path / "run_a" / "loss.csv").rfind("epoch,mean_loss,lr\n", 0) == 0);
  CHECK(parse_run_config(slurp(dir.path / "run_a" / "config.json")).seed == cfg.seed);

  std::ostringstream eval1, eval2;
  const ScoreReport s = run_eval(cfg, dir.path / "data", dir.path / "run_a" / "model.m2sw",
                                 BleuSmoothing::add_one, dir.path / "features.jsonl", eval1);
  run_eval(cfg, dir.path / "data", dir.path / "run_a" / "model.m2sw", BleuSmoothing::add_one,
           std::nullopt, eval2);
  CHECK(eval1.str() == eval2.str());
  const json j = json::parse(eval1.str());
  for (const char* key : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "n"}) CHECK(j.contains(key));
  CHECK(j["n"] == cfg.n_samples);
  CHECK(s.n_samples == cfg.n_samples);
  CHECK(fs::file_size(dir.path / "features.jsonl") > 0);

  std::ostringstream tr;
  run_translate(cfg, dir.path / "data", dir.path / "run_a" / "model.m2sw", tr);
  const std::string lines = tr.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == static_cast<long>(cfg.n_samples));

  // Dimension mismatches are configuration errors.
  const RunConfig wide = small_config(R"(, "model": {"feature_dim": 24})");
  CHECK_THROWS_AS(run_train(wide, dir.path / "data", dir.path / "protos.m2sw", dir.path / "run_c", log),
                  ConfigError);
  std::ostringstream sink;
  CHECK_THROWS_AS(run_eval(wide, dir.path / "data", dir.path / "run_a" / "model.m2sw",
                           BleuSmoothing::add_one, std::nullopt, sink),
                  ConfigError);
}

TEST_CASE("ablation baseline trains without prototypes") {
  TempDir dir("ablate");
  const RunConfig cfg = small_config(
      R"(, "ablation": {"mir_micro": false, "mir_recurrent": false, "mar": false})");
  run_synth(cfg, dir.path / "data", false);
  std::ostringstream log, out;
  const TrainResult r = run_train(cfg, dir.path / "data", std::nullopt, dir.path / "run", log);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  const Checkpoint ckpt = load_checkpoint(dir.path / "run" / "model.m2sw");
  CHECK(ckpt.find("mar.prototypes") == nullptr);
  CHECK(ckpt.find("mir.alpha") == nullptr);
  run_eval(cfg, dir.path / "data", dir.path / "run" / "model.m2sw", BleuSmoothing::add_one,
           std::nullopt, out);
  CHECK(json::parse(out.str())["n"] == cfg.n_samples);
}

TEST_CASE("a one-sample training set is memorised") {
  TempDir dir("memo");
  RunConfig cfg = small_config(R"(, "sgd": {"epochs": 150, "lr0": 0.05})");
  cfg.n_samples = 1;
  run_synth(cfg, dir.path / "data", false);
  std::ostringstream log, out;
  run_train(cfg, dir.path / "data", std::nullopt, dir.path / "run", log);
  const ScoreReport s = run_eval(cfg, dir.path / "data", dir.path / "run" / "model.m2sw",
                                 BleuSmoothing::add_one, std::nullopt, out);
  CHECK(s.bleu[3] == doctest::Approx(1.0));
  CHECK(s.rouge_l == 1.0);
}

TEST_CASE("tokens outside the model vocabulary are a configuration error") {
  RunConfig cfg = small_config();
  SignTranslator model(cfg.model, PrototypeSet{Matrix(1, 16, 0.5), {1}}, 1);
  std::vector<AlignedSample> bad{align(FrameSequence(4, 8, 8), FrameSequence(4, 8, 8), {4, 99}, "x")};
  CHECK_THROWS_AS(prepare_all(model, bad), ConfigError);
}
