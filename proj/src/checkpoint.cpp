#include "pep/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace pep {

namespace {

constexpr char kMagic[8] = {'P', 'E', 'P', 'C', 'K', 'P', 'T', '\0'};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0) {
  return static_cast<std::uint32_t>(
      ::crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  std::uint32_t u32(const std::string& where) { return static_cast<std::uint32_t>(le(4, where)); }
  std::uint64_t u64(const std::string& where) { return le(8, where); }
  double f64(const std::string& where) { return std::bit_cast<double>(le(8, where)); }
  const std::uint8_t* take(std::size_t n, const std::string& where) {
    need(n, where);
    const auto* p = buf.data() + pos;
    pos += n;
    return p;
  }
  std::size_t pos = 0;
  const std::vector<std::uint8_t>& buf;

 private:
  void need(std::size_t n, const std::string& where) {
    if (buf.size() - pos < n)
      throw CheckpointError("checkpoint checksum error: file truncated in " + where);
  }
  std::uint64_t le(int n, const std::string& where) {
    need(static_cast<std::size_t>(n), where);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  }
};

void write_block(Writer& w, const std::string& name, const double* values, std::size_t n) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  const std::size_t start = w.buf.size();
  w.bytes(name.data(), name.size());
  w.u64(n);
  const std::size_t data_start = w.buf.size();
  for (std::size_t i = 0; i < n; ++i) w.f64(values[i]);
  std::uint32_t crc = crc32_of(w.buf.data() + start, name.size());
  crc = crc32_of(w.buf.data() + data_start, w.buf.size() - data_start, crc);
  w.u32(crc);
}

std::vector<double> read_block(Reader& r, const std::string& expected) {
  const std::string where = "block '" + expected + "'";
  const std::uint32_t name_len = r.u32(where);
  const auto* name_ptr = r.take(name_len, where);
  const std::string name(reinterpret_cast<const char*>(name_ptr), name_len);
  if (name != expected)
    throw CheckpointError("checkpoint layout error: expected block '" + expected + "', found '" +
                          name + "'");
  const std::uint64_t n = r.u64(where);
  const auto* data = r.take(n * 8, where);
  const std::uint32_t stored = r.u32(where);
  std::uint32_t crc = crc32_of(name_ptr, name_len);
  crc = crc32_of(data, n * 8, crc);
  if (crc != stored) throw CheckpointError("checkpoint checksum error in " + where);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(data[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(v);
  }
  return values;
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const TrainerState& state,
                     const std::string& path) {
  const auto& c = params.config();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  for (std::uint64_t v : {c.layers, c.heads, c.hidden, c.ffn, c.max_positions, c.vocab_size,
                          c.task_proj_dim})
    w.u64(v);
  w.u64(c.task_projection ? 1 : 0);
  w.u64(static_cast<std::uint64_t>(state.stage));
  w.u64(state.step);
  w.u64(state.optimizer_steps);

  const auto& blocks = params.layout().blocks;
  const bool with_adam = !state.adam_m.empty();
  if (with_adam && (state.adam_m.size() != params.size() || state.adam_v.size() != params.size()))
    throw CheckpointError("save_checkpoint: optimizer state size does not match parameters");
  w.u32(static_cast<std::uint32_t>(blocks.size() + (with_adam ? 2 : 0)));
  for (const auto& b : blocks) write_block(w, b.name, params.at(b.offset), b.size());
  if (with_adam) {
    write_block(w, "adamw.m", state.adam_m.data(), state.adam_m.size());
    write_block(w, "adamw.v", state.adam_v.data(), state.adam_v.size());
  }
  w.u32(crc32_of(w.buf.data(), w.buf.size()));

  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.buf.data()),
              static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw CheckpointError("short write on checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
  Reader r(buf);
  const auto* magic = r.take(sizeof kMagic, "header");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointError("not a checkpoint file (bad magic): " + path);
  const std::uint32_t version = r.u32("header");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version error: file has version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kCheckpointVersion));
  EncoderConfig cfg;
  cfg.layers = r.u64("header");
  cfg.heads = r.u64("header");
  cfg.hidden = r.u64("header");
  cfg.ffn = r.u64("header");
  cfg.max_positions = r.u64("header");
  cfg.vocab_size = r.u64("header");
  cfg.task_proj_dim = r.u64("header");
  cfg.task_projection = r.u64("header") != 0;
  TrainerState state;
  state.stage = static_cast<int>(r.u64("header"));
  state.step = r.u64("header");
  state.optimizer_steps = r.u64("header");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint header error: ") + e.what());
  }

  EncoderParams params(cfg);
  const std::uint32_t count = r.u32("header");
  const auto& blocks = params.layout().blocks;
  if (count != blocks.size() && count != blocks.size() + 2)
    throw CheckpointError("checkpoint layout error: " + std::to_string(count) +
                          " blocks do not match the encoder config");
  for (const auto& b : blocks) {
    const auto values = read_block(r, b.name);
    if (values.size() != b.size())
      throw CheckpointError("checkpoint layout error: block '" + b.name + "' has " +
                            std::to_string(values.size()) + " values, expected " +
                            std::to_string(b.size()));
    std::copy(values.begin(), values.end(), params.at(b.offset));
  }
  if (count == blocks.size() + 2) {
    state.adam_m = read_block(r, "adamw.m");
    state.adam_v = read_block(r, "adamw.v");
    if (state.adam_m.size() != params.size() || state.adam_v.size() != params.size())
      throw CheckpointError("checkpoint layout error: optimizer state size mismatch");
  }
  const std::size_t body = r.pos;
  const std::uint32_t trailer = r.u32("trailer");
  if (trailer != crc32_of(buf.data(), body))
    throw CheckpointError("checkpoint checksum error in trailer (file-level CRC mismatch)");
  if (r.pos != buf.size()) throw CheckpointError("checkpoint has trailing bytes after the trailer");
  return {std::move(params), std::move(state)};
}

}  // namespace pep
