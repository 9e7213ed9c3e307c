#include <bit>
#include <cstring>
#include <fstream>

#include "tkgd/models.hpp"

namespace tkgd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'K', 'G', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_table(std::ostream& out, const Table& t) {
  put<std::uint64_t>(out, t.rows());
  put<std::uint64_t>(out, t.cols());
  out.write(reinterpret_cast<const char*>(t.flat().data()),
            static_cast<std::streamsize>(t.flat().size() * sizeof(double)));
}

Table get_table(std::istream& in) {
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  if (rows > (1ULL << 32) || cols > (1ULL << 20)) throw std::runtime_error("checkpoint: implausible table shape");
  Table t(rows, cols);
  in.read(reinterpret_cast<char*>(t.flat().data()), static_cast<std::streamsize>(t.flat().size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated table");
  return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.kind));
  put<std::uint64_t>(out, m.dim);
  put_table(out, m.entity);
  put_table(out, m.relation);
  put_table(out, m.time);
  put_table(out, m.lstm.w);
  put_table(out, m.lstm.u);
  put<std::uint64_t>(out, m.lstm.b.size());
  out.write(reinterpret_cast<const char*>(m.lstm.b.data()),
            static_cast<std::streamsize>(m.lstm.b.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  ModelParams m;
  const auto kind = get<std::uint32_t>(in);
  if (kind > 1) throw std::runtime_error("checkpoint: unknown model kind");
  m.kind = static_cast<ModelKind>(kind);
  m.dim = get<std::uint64_t>(in);
  m.entity = get_table(in);
  m.relation = get_table(in);
  m.time = get_table(in);
  m.lstm.w = get_table(in);
  m.lstm.u = get_table(in);
  const auto nb = get<std::uint64_t>(in);
  if (nb != m.lstm.w.rows()) throw std::runtime_error("checkpoint: inconsistent LSTM bias");
  m.lstm.b.resize(nb);
  in.read(reinterpret_cast<char*>(m.lstm.b.data()), static_cast<std::streamsize>(nb * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated LSTM bias");
  for (const Table* t : {&m.entity, &m.relation, &m.time})
    if (t->cols() != m.dim) throw std::runtime_error("checkpoint: table width does not match dim");
  return m;
}

}  // namespace tkgd
