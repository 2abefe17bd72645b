#include "m2slt/event_core.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "m2slt/error.hpp"

namespace m2slt {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

}  // namespace

void validate(const EventStream& stream) {
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const auto& e = stream.events[i];
    if (e.x >= stream.width || e.y >= stream.height) {
      throw BoundsError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + ", " +
                        std::to_string(e.y) + ") outside resolution");
    }
    if (e.p != 1 && e.p != -1) throw ValueError("event " + std::to_string(i) + ": bad polarity");
    if (i > 0 && e.t < stream.events[i - 1].t)
      throw ValueError("event " + std::to_string(i) + ": timestamps not sorted");
  }
}

EventStream parse_event_file(const std::string& text) {
  EventStream stream;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (!have_header) {
      const auto f = split_ws(line);
      if (line_no != 1 || f.size() != 3 || f[0] != "EVT1" ||
          !parse_int(f[1], stream.width) || !parse_int(f[2], stream.height) ||
          stream.width == 0 || stream.height == 0) {
        throw FormatError("EVT-TXT: expected header 'EVT1 <W> <H>'" + at_line(line_no));
      }
      have_header = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;

    const auto f = split_ws(line);
    if (f.size() != 4) throw FormatError("EVT-TXT: expected 'x y t p'" + at_line(line_no));
    std::int64_t x = 0, y = 0, p = 0;
    std::uint64_t t = 0;
    if (!parse_int(f[0], x) || !parse_int(f[1], y) || !parse_int(f[2], t) ||
        !parse_int(f[3], p)) {
      throw FormatError("EVT-TXT: non-integer field" + at_line(line_no));
    }
    if (x < 0 || y < 0 || x >= static_cast<std::int64_t>(stream.width) ||
        y >= static_cast<std::int64_t>(stream.height)) {
      throw BoundsError("EVT-TXT: coordinate (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") outside " + std::to_string(stream.width) + "x" +
                        std::to_string(stream.height) + at_line(line_no));
    }
    if (p != 1 && p != -1) throw ValueError("EVT-TXT: polarity must be 1 or -1" + at_line(line_no));
    stream.events.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), t,
                             static_cast<std::int8_t>(p)});
  }
  if (!have_header) throw FormatError("EVT-TXT: missing header");
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });
  return stream;
}

std::string write_event_file(const EventStream& stream) {
  std::ostringstream os;
  os << "EVT1 " << stream.width << " " << stream.height << "\n";
  for (const auto& e : stream.events)
    os << e.x << " " << e.y << " " << e.t << " " << static_cast<int>(e.p) << "\n";
  return os.str();
}

EventStream parse_event_bin(const std::string& bytes) {
  detail::ByteReader r(bytes, "EVT-BIN");
  if (r.bytes(4) != "EVB1") throw FormatError("EVT-BIN: bad magic");
  EventStream stream;
  stream.width = r.u32();
  stream.height = r.u32();
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / 13) throw FormatError("EVT-BIN: truncated record block");
  stream.events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    EventPoint e;
    e.x = r.u16();
    e.y = r.u16();
    e.t = r.u64();
    e.p = r.i8();
    if (e.x >= stream.width || e.y >= stream.height)
      throw BoundsError("EVT-BIN: record " + std::to_string(i) + " outside resolution");
    if (e.p != 1 && e.p != -1)
      throw ValueError("EVT-BIN: record " + std::to_string(i) + " has bad polarity");
    stream.events.push_back(e);
  }
  if (!r.at_end()) throw FormatError("EVT-BIN: trailing bytes");
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });
  return stream;
}

std::string write_event_bin(const EventStream& stream) {
  detail::ByteWriter w;
  w.bytes("EVB1");
  w.u32(stream.width);
  w.u32(stream.height);
  w.u64(stream.events.size());
  for (const auto& e : stream.events) {
    if (e.x > std::numeric_limits<std::uint16_t>::max() ||
        e.y > std::numeric_limits<std::uint16_t>::max())
      throw BoundsError("EVT-BIN: coordinate does not fit in u16");
    w.u16(static_cast<std::uint16_t>(e.x));
    w.u16(static_cast<std::uint16_t>(e.y));
    w.u64(e.t);
    w.i8(e.p);
  }
  return w.take();
}

EventStream load_events(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  try {
    if (bytes.rfind("EVB1", 0) == 0) return parse_event_bin(bytes);
    return parse_event_file(bytes);
  } catch (const DataError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_events(const std::filesystem::path& path, const EventStream& stream, bool text) {
  detail::write_file(path, text ? write_event_file(stream) : write_event_bin(stream));
}

FrameSequence::FrameSequence(std::size_t t, std::size_t h, std::size_t w)
    : frames(t), height(h), width(w), data(t * h * w * 3, 0.0f) {}

FrameSequence FrameSequence::select(std::span<const std::size_t> indices) const {
  FrameSequence out(indices.size(), height, width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= frames) throw ArgumentError("FrameSequence::select: index out of range");
    const auto src = frame(indices[i]);
    std::copy(src.begin(), src.end(), out.data.begin() + i * frame_size());
  }
  return out;
}

std::string encode_frames(const FrameSequence& frames) {
  detail::ByteWriter w;
  w.bytes("FRM1");
  w.u32(static_cast<std::uint32_t>(frames.frames));
  w.u32(static_cast<std::uint32_t>(frames.height));
  w.u32(static_cast<std::uint32_t>(frames.width));
  for (float v : frames.data) w.f32(v);
  return w.take();
}

FrameSequence decode_frames(const std::string& bytes) {
  detail::ByteReader r(bytes, "FRM1");
  if (r.bytes(4) != "FRM1") throw FormatError("FRM1: bad magic");
  const std::uint32_t t = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint64_t n = static_cast<std::uint64_t>(t) * h * w * 3;
  if (n * 4 != r.remaining()) throw FormatError("FRM1: payload size does not match header");
  FrameSequence out(t, h, w);
  for (float& v : out.data) v = r.f32();
  return out;
}

std::vector<std::uint64_t> uniform_bin_edges(std::uint64_t t_min, std::uint64_t t_max,
                                             std::size_t bins) {
  if (bins == 0) throw ArgumentError("uniform_bin_edges: need at least one bin");
  // The last edge is exclusive, so push it one past t_max to keep that event.
  const std::uint64_t end = t_max + 1;
  if (end - t_min < bins) throw ArgumentError("uniform_bin_edges: span shorter than bin count");
  std::vector<std::uint64_t> edges(bins + 1);
  const long double span = static_cast<long double>(end - t_min);
  for (std::size_t i = 0; i <= bins; ++i)
    edges[i] = t_min + static_cast<std::uint64_t>(span * i / bins);
  return edges;
}

std::vector<std::uint64_t> periodic_bin_edges(std::uint64_t period_us, std::size_t bins) {
  if (period_us == 0) throw ArgumentError("periodic_bin_edges: zero period");
  std::vector<std::uint64_t> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = i * period_us;
  return edges;
}

namespace {

void check_edges(std::span<const std::uint64_t> edges) {
  if (edges.size() < 2) throw ArgumentError("bin edges: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw ArgumentError("bin edges must be strictly increasing");
}

// Bin index for t, or -1 when t lies outside [edges.front(), edges.back()).
std::ptrdiff_t bin_of(std::span<const std::uint64_t> edges, std::uint64_t t) {
  if (t < edges.front() || t >= edges.back()) return -1;
  auto it = std::upper_bound(edges.begin(), edges.end(), t);
  return std::distance(edges.begin(), it) - 1;
}

}  // namespace

FrameSequence events_to_frames(const EventStream& stream,
                               std::span<const std::uint64_t> bin_edges) {
  check_edges(bin_edges);
  const std::size_t bins = bin_edges.size() - 1;
  FrameSequence out(bins, stream.height, stream.width);
  std::vector<std::uint32_t> counts(out.data.size(), 0);
  for (const auto& e : stream.events) {
    const auto b = bin_of(bin_edges, e.t);
    if (b < 0) continue;
    const std::size_t channel = e.p > 0 ? 2 : 0;
    ++counts[((static_cast<std::size_t>(b) * out.height + e.y) * out.width + e.x) * 3 + channel];
  }
  for (std::size_t i = 0; i < counts.size(); ++i)
    out.data[i] = static_cast<float>(std::min(counts[i] / kSaturationCount, 1.0));
  out.frame_times.assign(bin_edges.begin(), bin_edges.end());
  return out;
}

std::vector<std::size_t> event_count_per_frame(const EventStream& stream,
                                               std::span<const std::uint64_t> bin_edges) {
  check_edges(bin_edges);
  std::vector<std::size_t> counts(bin_edges.size() - 1, 0);
  for (const auto& e : stream.events) {
    const auto b = bin_of(bin_edges, e.t);
    if (b >= 0) ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

PolarityCounts polarity_count_per_frame(const EventStream& stream,
                                        std::span<const std::uint64_t> bin_edges) {
  check_edges(bin_edges);
  PolarityCounts pc{std::vector<std::size_t>(bin_edges.size() - 1, 0),
                    std::vector<std::size_t>(bin_edges.size() - 1, 0)};
  for (const auto& e : stream.events) {
    const auto b = bin_of(bin_edges, e.t);
    if (b < 0) continue;
    ++(e.p > 0 ? pc.on : pc.off)[static_cast<std::size_t>(b)];
  }
  return pc;
}

AlignedSample align(FrameSequence rgb, FrameSequence evt, TokenSequence tokens,
                    std::string meta) {
  auto mismatch = [&](const char* axis, std::size_t a, std::size_t b) {
    throw AlignmentError(axis, std::string("align: axis ") + axis + " differs (rgb " +
                                   std::to_string(a) + " vs evt " + std::to_string(b) + ")");
  };
  if (rgb.frames != evt.frames) mismatch("T", rgb.frames, evt.frames);
  if (rgb.height != evt.height) mismatch("H", rgb.height, evt.height);
  if (rgb.width != evt.width) mismatch("W", rgb.width, evt.width);
  return AlignedSample{std::move(rgb), std::move(evt), std::move(tokens), std::move(meta)};
}

Matrix frame_descriptors(const FrameSequence& frames, std::span<const std::size_t> indices) {
  constexpr std::size_t grid = 4;
  if (frames.height < grid || frames.width < grid)
    throw ArgumentError("frame_descriptors: frames smaller than the 4x4 pooling grid");
  Matrix out(indices.size(), kDescriptorDim);
  const double total = static_cast<double>(frames.height * frames.width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t t = indices[i];
    if (t >= frames.frames) throw ArgumentError("frame_descriptors: index out of range");
    auto row = out.row(i);
    for (std::size_t gy = 0; gy < grid; ++gy) {
      const std::size_t y0 = gy * frames.height / grid, y1 = (gy + 1) * frames.height / grid;
      for (std::size_t gx = 0; gx < grid; ++gx) {
        const std::size_t x0 = gx * frames.width / grid, x1 = (gx + 1) * frames.width / grid;
        double sum[3] = {0.0, 0.0, 0.0};
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x)
            for (std::size_t c = 0; c < 3; ++c) sum[c] += frames.at(t, y, x, c);
        const double cell = static_cast<double>((y1 - y0) * (x1 - x0));
        for (std::size_t c = 0; c < 3; ++c) {
          row[3 + (gy * grid + gx) * 3 + c] = sum[c] / cell;
          row[c] += sum[c];
        }
      }
    }
    for (std::size_t c = 0; c < 3; ++c) row[c] /= total;
  }
  return out;
}

Matrix frame_descriptors(const FrameSequence& frames) {
  std::vector<std::size_t> all(frames.frames);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return frame_descriptors(frames, all);
}

}  // namespace m2slt
