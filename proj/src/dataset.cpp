#include "m2slt/dataset.hpp"

#include <json.hpp>

#include "binary_io.hpp"
#include "m2slt/error.hpp"

namespace m2slt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

DataError sample_error(const std::string& id, const std::string& what) {
  return DataError("sample '" + id + "': " + what);
}

}  // namespace

void save_dataset(const fs::path& dir, std::span<const SynthSample> samples, const SynthSpec& spec,
                  bool text_events) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  json list = json::array();
  for (const SynthSample& s : samples) {
    const fs::path sub = dir / s.sample.meta;
    fs::create_directories(sub, ec);
    if (ec) throw DataError("cannot create " + sub.string() + ": " + ec.message());
    detail::write_file(sub / "rgb.frm", encode_frames(s.sample.rgb));
    if (text_events)
      detail::write_file(sub / "events.txt", write_event_file(s.events));
    else
      detail::write_file(sub / "events.evb", write_event_bin(s.events));

    json segs = json::array();
    for (const Proposal& p : s.segments) segs.push_back({p.start, p.end});
    list.push_back({{"id", s.sample.meta},
                    {"tokens", s.sample.tokens},
                    {"segments", segs},
                    {"frames", s.sample.rgb.frames}});
  }
  const json doc = {{"frame_period_us", spec.frame_period_us},
                    {"width", spec.width},
                    {"height", spec.height},
                    {"samples", list}};
  detail::write_file(dir / kManifest, doc.dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  DatasetManifest m;
  const fs::path path = dir / kManifest;
  if (!fs::exists(path)) return m;
  try {
    const json doc = json::parse(detail::read_file(path));
    m.frame_period_us = doc.at("frame_period_us").get<std::uint64_t>();
    m.width = doc.at("width").get<std::size_t>();
    m.height = doc.at("height").get<std::size_t>();
    for (const json& s : doc.at("samples")) {
      DatasetEntry e;
      e.id = s.at("id").get<std::string>();
      e.tokens = s.at("tokens").get<TokenSequence>();
      e.frames = s.at("frames").get<std::size_t>();
      for (const json& seg : s.at("segments")) {
        const auto pair = seg.get<std::vector<std::size_t>>();
        if (pair.size() != 2 || pair[0] > pair[1])
          throw sample_error(e.id, "malformed segment in manifest");
        e.segments.push_back({pair[0], pair[1], ProposalSource::merged});
      }
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  if (m.frame_period_us == 0) throw FormatError(path.string() + ": frame_period_us must be > 0");
  return m;
}

LoadedSample load_sample(const fs::path& dir, const DatasetManifest& manifest,
                         const DatasetEntry& entry) {
  const fs::path sub = dir / entry.id;
  LoadedSample out;
  FrameSequence rgb;
  try {
    rgb = decode_frames(detail::read_file(sub / "rgb.frm"));
    const fs::path bin = sub / "events.evb";
    const fs::path txt = sub / "events.txt";
    if (fs::exists(bin))
      out.events = load_events(bin);
    else if (fs::exists(txt))
      out.events = load_events(txt);
    else
      throw DataError("missing events file in " + sub.string());
  } catch (const DataError& ex) {
    throw sample_error(entry.id, ex.what());
  }
  if (rgb.frames != entry.frames) throw sample_error(entry.id, "frame count differs from manifest");
  if (out.events.width != rgb.width || out.events.height != rgb.height)
    throw sample_error(entry.id, "event resolution differs from rgb frames");
  out.bin_edges = periodic_bin_edges(manifest.frame_period_us, rgb.frames);
  FrameSequence evt = events_to_frames(out.events, out.bin_edges);
  out.sample = align(std::move(rgb), std::move(evt), entry.tokens, entry.id);
  out.segments = entry.segments;
  return out;
}

std::vector<LoadedSample> load_dataset(const fs::path& dir) {
  const DatasetManifest m = load_manifest(dir);
  std::vector<LoadedSample> out;
  out.reserve(m.samples.size());
  for (const DatasetEntry& e : m.samples) out.push_back(load_sample(dir, m, e));
  return out;
}

}  // namespace m2slt
