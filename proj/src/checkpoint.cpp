#include "m2slt/checkpoint.hpp"

#include <limits>

#include "binary_io.hpp"
#include "m2slt/error.hpp"

namespace m2slt {

void Checkpoint::put(const std::string& name, const Matrix& m) {
  for (auto& [n, t] : tensors) {
    if (n == name) {
      t = m;
      return;
    }
  }
  tensors.emplace_back(name, m);
}

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const Matrix& Checkpoint::require(const std::string& name, std::size_t rows,
                                  std::size_t cols) const {
  const Matrix* m = find(name);
  if (!m) throw ConfigError("checkpoint is missing tensor '" + name + "'");
  if (m->rows() != rows || m->cols() != cols) {
    throw ConfigError("checkpoint tensor '" + name + "' has shape " + shape_string(*m) +
                      ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return *m;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes("M2SW");
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ArgumentError("checkpoint tensor name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(4) != "M2SW") throw FormatError("checkpoint: bad magic");
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name = r.bytes(len);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 4 > r.remaining())
      throw FormatError("checkpoint: tensor '" + name + "' truncated");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = static_cast<double>(r.f32());
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

Checkpoint checkpoint_from_params(const ParamList& params) {
  Checkpoint ckpt;
  for (const auto& [name, p] : params) ckpt.put(name, p->value);
  return ckpt;
}

void load_params(const Checkpoint& ckpt, const ParamList& params) {
  for (const auto& [name, p] : params) {
    p->value = ckpt.require(name, p->value.rows(), p->value.cols());
    p->grad = Matrix(p->value.rows(), p->value.cols());
    p->velocity = Matrix(p->value.rows(), p->value.cols());
  }
}

}  // namespace m2slt
