#include "kdistill/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace kdistill {

namespace {

constexpr char kMagic[4] = {'K', 'D', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);

  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  const ModelConfig& c = m.config();
  write_pod<std::int32_t>(out, c.n_layers);
  write_pod<std::int32_t>(out, c.d_model);
  write_pod<std::int32_t>(out, c.n_heads);
  write_pod<std::int32_t>(out, c.max_seq_len);
  write_pod<std::int32_t>(out, c.vocab_size);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(m.role()));
  write_pod<std::int64_t>(out, m.param_count());

  m.params().visit([&](const std::string&, const auto& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
  });
  write_pod<std::uint64_t>(out, m.params().checksum());
  if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open checkpoint: " + path);

  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("bad magic bytes in checkpoint: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  ModelConfig cfg;
  cfg.n_layers = read_pod<std::int32_t>(in, path);
  cfg.d_model = read_pod<std::int32_t>(in, path);
  cfg.n_heads = read_pod<std::int32_t>(in, path);
  cfg.max_seq_len = read_pod<std::int32_t>(in, path);
  cfg.vocab_size = read_pod<std::int32_t>(in, path);
  const auto role = static_cast<Role>(read_pod<std::int32_t>(in, path));
  const auto declared_count = read_pod<std::int64_t>(in, path);
  cfg.validate();

  Parameters params = Parameters::zeros(cfg);
  if (params.count() != declared_count) {
    throw CheckpointError("parameter count mismatch in checkpoint: " + path);
  }
  params.visit([&](const std::string&, auto& t) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
  });
  if (!in) throw CheckpointError("truncated checkpoint: " + path);
  const auto declared_sum = read_pod<std::uint64_t>(in, path);
  if (params.checksum() != declared_sum) {
    throw CheckpointError("checksum mismatch (corrupt checkpoint): " + path);
  }
  return Model(cfg, std::move(params), role);
}

}  // namespace kdistill
