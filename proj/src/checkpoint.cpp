#include "attntul/checkpoint.hpp"

#include "attntul/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace attntul {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'T', 'N', 'T', 'U', 'L', 'C'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint truncated");
  return to_little(v);
}

std::string get_string(std::istream& in) {
  auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw DataError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  const auto& params = ckpt.params.all();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(out, p.name);
    const auto& shape = p.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put<std::uint64_t>(out, e);
    for (double v : p.tensor.values()) put<double>(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("not an attntul checkpoint");
  auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  auto meta = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < meta; ++i) {
    auto k = get_string(in);
    ckpt.metadata[k] = get_string(in);
  }
  auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = get_string(in);
    auto rank = get<std::uint32_t>(in);
    if (rank > 2) throw DataError("checkpoint: parameter " + name + " has rank > 2");
    ad::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
      n *= shape.back();
    }
    std::vector<double> values(n);
    for (auto& v : values) v = get<double>(in);
    // groups are not serialised; restored by assign_parameters onto a fresh model
    ckpt.params.add(std::move(name), ad::Tensor(std::move(shape), std::move(values), true),
                    ParamGroup::linking, true);
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

void assign_parameters(ModelParams& target, const ModelParams& source) {
  for (auto& p : target.all()) {
    if (!source.contains(p.name)) throw DataError("checkpoint lacks parameter " + p.name);
    const auto& src = source.get(p.name);
    if (src.shape() != p.tensor.shape())
      throw DataError("checkpoint parameter " + p.name + " has shape " + ad::to_string(src.shape()) +
                      ", model expects " + ad::to_string(p.tensor.shape()));
    std::copy(src.values().begin(), src.values().end(), p.tensor.mutable_values().begin());
  }
}

}  // namespace attntul
