#include "arc/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace arc {

namespace {
constexpr std::array<char, 4> kMagic{'A', 'R', 'C', 'T'};

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
  }
  return v;
}
}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError(std::string("truncated input while reading ") + what);
  return to_little(v);
}

template <class S>
void write_tensor(std::ostream& out, const Tensor<S>& t) {
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, 4);
  const Shape& s = t.shape();
  for (std::size_t d : {s.c, s.t, s.h, s.w}) write_u32(out, static_cast<std::uint32_t>(d));
  std::vector<std::uint32_t> raw(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) raw[i] = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
  if (!out) throw FormatError("failed writing tensor record");
}

template <class S>
Tensor<S> read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError("truncated input while reading tensor magic");
  if (magic != kMagic) throw FormatError("bad tensor magic, expected ARCT");
  const std::uint32_t rank = read_u32(in, "tensor rank");
  if (rank == 0 || rank > 4) throw FormatError("unsupported tensor rank " + std::to_string(rank));
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  for (std::uint32_t i = 0; i < rank; ++i) dims[4 - rank + i] = read_u32(in, "tensor dims");
  const Shape shape{dims[0], dims[1], dims[2], dims[3]};
  if (shape.size() > (std::size_t{1} << 31)) throw FormatError("tensor record too large: " + shape.str());
  std::vector<std::uint32_t> raw(shape.size());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t))))
    throw FormatError("truncated tensor payload for shape " + shape.str());
  std::vector<S> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) values[i] = static_cast<S>(std::bit_cast<float>(to_little(raw[i])));
  return Tensor<S>(shape, std::move(values));
}

template <class S>
void save_tensor(const std::filesystem::path& path, const Tensor<S>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

template <class S>
Tensor<S> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor<S>(in);
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);
template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);

}  // namespace arc
