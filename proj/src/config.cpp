#include "m2slt/config.hpp"

#include <set>
#include <type_traits>

#include <json.hpp>

#include "binary_io.hpp"
#include "m2slt/error.hpp"

namespace m2slt {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& node, std::string name) : node_(node), name_(std::move(name)) {
    if (!node_.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const json* v = take(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<T>();
    } else {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<T>();
    }
  }

  Section child(const std::string& key) {
    const json* v = take(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, name_ + "." + key);
  }

  void finish() const {
    for (const auto& item : node_.items())
      if (!seen_.count(item.key())) throw ConfigError("config: unknown key '" + name_ + "." + item.key() + "'");
  }

  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError("config: '" + name_ + "." + key + "' must be " + what);
  }

 private:
  const json& node_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_segment(Section s, SegmentConfig& c) {
  if (const json* v = s.take("theta_r"); v && !v->is_null()) {
    if (!v->is_number()) s.fail("theta_r", "a number or null");
    c.theta_r = v->get<double>();
  }
  s.get("alpha_min", c.alpha_min);
  s.get("pixel_thresh", c.pixel_thresh);
  s.get("gap_merge", c.gap_merge);
  s.finish();
}

void read_window(Section s, WindowConfig& c) {
  s.get("window", c.window);
  s.get("stride", c.stride);
  s.finish();
}

void read_dbscan(Section s, DbscanConfig& c) {
  if (const json* v = s.take("eps")) {
    if (v->is_string() && v->get<std::string>() == "adaptive")
      c.eps.reset();
    else if (v->is_number())
      c.eps = v->get<double>();
    else
      s.fail("eps", "a number or \"adaptive\"");
  }
  s.get("min_pts", c.min_pts);
  s.finish();
}

void read_mir(Section s, ModelConfig& m) {
  s.get("n_slots", m.mir.n_slots);
  s.get("d_mem", m.mir.d_mem);
  s.get("hidden", m.mir.hidden);
  s.get("k", m.mir.k);
  s.get("recurrent_passes", m.recurrent_passes);
  s.finish();
}

void read_mar(Section s, MarConfig& c) {
  s.get("hidden", c.hidden);
  s.get("beta_h", c.beta_h);
  s.get("iterations", c.iterations);
  s.finish();
}

void read_model(Section s, ModelConfig& m) {
  s.get("feature_dim", m.feature_dim);
  s.get("frame_interval", m.frame_interval);
  s.get("max_frames", m.max_frames);
  s.get("encoder_hidden", m.encoder_hidden);
  s.get("vocab_size", m.vocab_size);
  s.get("max_decode_len", m.max_decode_len);
  Section d = s.child("decoder");
  d.get("emb_dim", m.decoder.emb_dim);
  d.get("hidden", m.decoder.hidden);
  d.get("layers", m.decoder.layers);
  d.finish();
  s.finish();
}

void read_sgd(Section s, TrainConfig& t) {
  s.get("lr0", t.lr0);
  s.get("momentum", t.momentum);
  s.get("epochs", t.epochs);
  s.get("freeze_scales", t.freeze_scales);
  s.finish();
}

void read_synth(Section s, SynthSpec& p, std::size_t& n) {
  s.get("n_samples", n);
  s.get("width", p.width);
  s.get("height", p.height);
  s.get("vocab_size", p.vocab_size);
  s.get("tokens_per_sample", p.tokens_per_sample);
  s.get("blob_radius", p.blob_radius);
  s.get("min_speed", p.min_speed);
  s.get("max_speed", p.max_speed);
  s.get("noise_rate", p.noise_rate);
  s.get("active_frames", p.active_frames);
  s.get("idle_frames", p.idle_frames);
  s.get("frame_period_us", p.frame_period_us);
  s.finish();
}

void read_ablation(Section s, AblationSwitches& a) {
  s.get("mir_micro", a.mir_micro);
  s.get("mir_recurrent", a.mir_recurrent);
  s.get("mar", a.mar);
  s.finish();
}

}  // namespace

void validate(const RunConfig& cfg) {
  validate(cfg.segment);
  validate(cfg.window);
  validate(cfg.dbscan);
  validate(cfg.model);
  validate(cfg.synth);
  if (cfg.n_samples < 1) throw ConfigError("config: synth.n_samples must be >= 1");
  if (cfg.train.epochs < 1) throw ConfigError("config: sgd.epochs must be >= 1");
  validate(SgdConfig{cfg.train.lr0, 1, cfg.train.momentum});
  if (cfg.synth.vocab_size > cfg.model.vocab_size)
    throw ConfigError("config: synth.vocab_size exceeds model.vocab_size");
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw ConfigError(std::string("config: invalid JSON: ") + ex.what());
  }
  RunConfig cfg;
  Section root(doc, "config");
  root.get("seed", cfg.seed);
  read_segment(root.child("segment"), cfg.segment);
  read_window(root.child("window"), cfg.window);
  read_dbscan(root.child("dbscan"), cfg.dbscan);
  read_mir(root.child("mir"), cfg.model);
  read_mar(root.child("mar"), cfg.model.mar);
  read_model(root.child("model"), cfg.model);
  read_sgd(root.child("sgd"), cfg.train);
  read_synth(root.child("synth"), cfg.synth, cfg.n_samples);
  read_ablation(root.child("ablation"), cfg.model.ablation);
  root.finish();
  // The segmenter's run-length floor is what the generator must satisfy.
  cfg.synth.min_active_frames = cfg.segment.alpha_min;
  cfg.train.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const DataError& ex) {
    throw ConfigError(ex.what());
  }
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& c) {
  const ModelConfig& m = c.model;
  json doc = {
      {"seed", c.seed},
      {"segment",
       {{"theta_r", c.segment.theta_r ? json(*c.segment.theta_r) : json(nullptr)},
        {"alpha_min", c.segment.alpha_min},
        {"pixel_thresh", c.segment.pixel_thresh},
        {"gap_merge", c.segment.gap_merge}}},
      {"window", {{"window", c.window.window}, {"stride", c.window.stride}}},
      {"dbscan",
       {{"eps", c.dbscan.eps ? json(*c.dbscan.eps) : json("adaptive")},
        {"min_pts", c.dbscan.min_pts}}},
      {"mir",
       {{"n_slots", m.mir.n_slots},
        {"d_mem", m.mir.d_mem},
        {"hidden", m.mir.hidden},
        {"k", m.mir.k},
        {"recurrent_passes", m.recurrent_passes}}},
      {"mar", {{"hidden", m.mar.hidden}, {"beta_h", m.mar.beta_h}, {"iterations", m.mar.iterations}}},
      {"model",
       {{"feature_dim", m.feature_dim},
        {"frame_interval", m.frame_interval},
        {"max_frames", m.max_frames},
        {"encoder_hidden", m.encoder_hidden},
        {"vocab_size", m.vocab_size},
        {"max_decode_len", m.max_decode_len},
        {"decoder",
         {{"emb_dim", m.decoder.emb_dim}, {"hidden", m.decoder.hidden}, {"layers", m.decoder.layers}}}}},
      {"sgd",
       {{"lr0", c.train.lr0},
        {"momentum", c.train.momentum},
        {"epochs", c.train.epochs},
        {"freeze_scales", c.train.freeze_scales}}},
      {"synth",
       {{"n_samples", c.n_samples},
        {"width", c.synth.width},
        {"height", c.synth.height},
        {"vocab_size", c.synth.vocab_size},
        {"tokens_per_sample", c.synth.tokens_per_sample},
        {"blob_radius", c.synth.blob_radius},
        {"min_speed", c.synth.min_speed},
        {"max_speed", c.synth.max_speed},
        {"noise_rate", c.synth.noise_rate},
        {"active_frames", c.synth.active_frames},
        {"idle_frames", c.synth.idle_frames},
        {"frame_period_us", c.synth.frame_period_us}}},
      {"ablation",
       {{"mir_micro", m.ablation.mir_micro},
        {"mir_recurrent", m.ablation.mir_recurrent},
        {"mar", m.ablation.mar}}}};
  return doc.dump(2) + "\n";
}

}  // namespace m2slt
