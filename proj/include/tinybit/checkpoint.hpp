#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tinybit/common.hpp"
#include "tinybit/tensor.hpp"

namespace tinybit {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'B', 'I', 'T', 'C'};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Everything a training run needs to resume or transfer from: the model
/// config, every parameter by name, the training position, and the data-order
/// PRNG state. Saving, loading, and saving again produces byte-identical
/// files.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json config;  // model config + epoch/step + prng state
  std::vector<NamedTensor> tensors;
};

namespace detail {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint: truncated file " + path);
}

}  // namespace detail

/// Binary layout (little-endian):
///   "BITC" | u32 version | u32 config length | config JSON bytes |
///   u64 tensor count | per tensor: u32 name length, name bytes, u32 rank,
///   u32 dims..., raw float32 payload | u32 CRC32 over all payload bytes.
inline void checkpoint_save(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + path);

  out.write(kCheckpointMagic, 4);
  detail::write_raw(out, ckpt.version);
  const std::string blob = ckpt.config.dump();
  detail::write_raw(out, static_cast<std::uint32_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  detail::write_raw(out, static_cast<std::uint64_t>(ckpt.tensors.size()));

  Crc32 crc;
  for (const NamedTensor& nt : ckpt.tensors) {
    detail::write_raw(out, static_cast<std::uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    detail::write_raw(out, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (std::int64_t d : nt.tensor.shape())
      detail::write_raw(out, static_cast<std::uint32_t>(d));
    const auto bytes = static_cast<std::streamsize>(nt.tensor.numel() * 4);
    out.write(reinterpret_cast<const char*>(nt.tensor.data()), bytes);
    crc.update(nt.tensor.data(), static_cast<std::size_t>(bytes));
  }
  detail::write_raw(out, crc.value());
  if (!out) throw IoError("checkpoint: short write to " + path);
}

inline Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ParseError("checkpoint: bad magic in " + path);

  Checkpoint ckpt;
  detail::read_raw(in, ckpt.version, path);
  if (ckpt.version != kCheckpointVersion)
    throw VersionError("checkpoint: " + path + " has version " +
                       std::to_string(ckpt.version) + ", this build reads " +
                       std::to_string(kCheckpointVersion));

  std::uint32_t blob_len = 0;
  detail::read_raw(in, blob_len, path);
  std::string blob(blob_len, '\0');
  in.read(blob.data(), blob_len);
  if (!in) throw ParseError("checkpoint: truncated config blob in " + path);
  ckpt.config = nlohmann::json::parse(blob, nullptr, false);
  if (ckpt.config.is_discarded())
    throw ParseError("checkpoint: config blob in " + path + " is not valid JSON");

  std::uint64_t count = 0;
  detail::read_raw(in, count, path);
  Crc32 crc;
  for (std::uint64_t t = 0; t < count; ++t) {
    std::uint32_t name_len = 0;
    detail::read_raw(in, name_len, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ParseError("checkpoint: truncated tensor name in " + path);

    std::uint32_t rank = 0;
    detail::read_raw(in, rank, path);
    if (rank < 1 || rank > 8)
      throw ShapeError("checkpoint: tensor '" + name + "' in " + path +
                       " has implausible rank " + std::to_string(rank));
    std::vector<std::int64_t> shape;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t dim = 0;
      detail::read_raw(in, dim, path);
      if (dim < 1)
        throw ShapeError("checkpoint: tensor '" + name + "' has a zero dim");
      shape.push_back(dim);
      numel *= dim;
      if (numel > (1LL << 34))
        throw ShapeError("checkpoint: tensor '" + name + "' is implausibly large");
    }
    Tensor tensor(shape);
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(numel * 4));
    if (!in)
      throw ParseError("checkpoint: truncated payload for tensor '" + name +
                       "' in " + path);
    crc.update(tensor.data(), static_cast<std::size_t>(numel * 4));
    ckpt.tensors.push_back({std::move(name), std::move(tensor)});
  }

  std::uint32_t stored_crc = 0;
  detail::read_raw(in, stored_crc, path);
  if (stored_crc != crc.value())
    throw IntegrityError("checkpoint: payload CRC mismatch in " + path +
                         " (stored " + std::to_string(stored_crc) +
                         ", computed " + std::to_string(crc.value()) + ")");
  return ckpt;
}

}  // namespace tinybit
