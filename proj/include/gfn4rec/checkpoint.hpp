#pragma once

// Checkpoint blob layout (little-endian):
//   magic "GFN4RCKP" | u32 version | u32 n_meta | n_meta x (str key, str value)
//   | u32 n_params | n_params x (str name, u32 rows, u32 cols, rows*cols f64 column-major)
// where str = u32 byte length followed by the bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "gfn4rec/errors.hpp"
#include "gfn4rec/nn.hpp"

namespace gfn4rec {

inline constexpr char kCheckpointMagic[8] = {'G', 'F', 'N', '4', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using CheckpointMeta = std::map<std::string, std::string>;

/// Writes content to path via a temporary file and rename, so readers never
/// observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }
  std::string str() {
    const auto n = u32();
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
  void take(void* dst, std::size_t n) {
    if (pos_ + n > data_.size()) throw DataError("checkpoint truncated");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_{0};
};

}  // namespace detail

inline std::string serialize_checkpoint(const nn::ParameterStore& params, const CheckpointMeta& meta) {
  std::string out(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    detail::put_str(out, k);
    detail::put_str(out, v);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    detail::put_str(out, name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.cols()));
    out.append(reinterpret_cast<const char*>(t.value().data()),
               static_cast<std::size_t>(t.value().size()) * sizeof(double));
  }
  return out;
}

struct CheckpointBlob {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, ag::Matrix>> tensors;
};

inline CheckpointBlob parse_checkpoint(const std::string& data) {
  detail::Reader r(data);
  char magic[8];
  r.take(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError("not a checkpoint file");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  CheckpointBlob blob;
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    blob.meta[k] = r.str();
  }
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    ag::Matrix m(rows, cols);
    r.take(m.data(), static_cast<std::size_t>(rows) * cols * sizeof(double));
    blob.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw DataError("trailing bytes in checkpoint");
  return blob;
}

/// Copies tensors into an existing store; names and shapes must match exactly.
inline void load_into(nn::ParameterStore& params, const CheckpointBlob& blob) {
  if (blob.tensors.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
  for (const auto& [name, m] : blob.tensors) {
    auto& t = params.get(name);
    if (t.rows() != m.rows() || t.cols() != m.cols()) throw DataError("checkpoint shape mismatch for " + name);
    t.mutable_value() = m;
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore& params,
                            const CheckpointMeta& meta) {
  write_file_atomic(path, serialize_checkpoint(params, meta));
}

inline CheckpointBlob load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace gfn4rec
