#include "cooc/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>

namespace cooc {
namespace {

constexpr std::uint8_t kVersion = 1;

class Writer {
 public:
  void magic(const char (&m)[5]) {
    bytes_.insert(bytes_.end(), m, m + 4);
    bytes_.push_back(kVersion);
  }

  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<unsigned char>(v & 0xFF));
    bytes_.push_back(static_cast<unsigned char>(v >> 8));
  }

  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
  }

  void dim(Index v) {
    if (v < 0 || v > Index(std::numeric_limits<std::uint32_t>::max()))
      throw DomainError("dimension does not fit in 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }

  void f32(float v) {
    if (!std::isfinite(v)) throw ValidationError("refusing to write a non-finite value");
    u32(std::bit_cast<std::uint32_t>(v));
  }

  template <typename Derived>
  void reals(const Eigen::DenseBase<Derived>& m) {
    // Row-major traversal regardless of storage order.
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f32(static_cast<float>(m(r, c)));
  }

  void text(const std::string& s) {
    if (s.size() > 0xFFFF) throw DomainError("id longer than 65535 bytes: " + s.substr(0, 32));
    u16(static_cast<std::uint16_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  void magic(const char (&m)[5]) {
    if (bytes_.size() < 5 || std::memcmp(bytes_.data(), m, 4) != 0)
      throw FormatError(origin_ + ": bad magic, expected \"" + std::string(m) + "\"");
    if (bytes_[4] != kVersion)
      throw FormatError(origin_ + ": unsupported version " + std::to_string(int(bytes_[4])));
    pos_ = 5;
  }

  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  // Fills `m` (already sized) in row-major order and rejects NaN/Inf.
  template <typename Derived>
  void reals(Eigen::DenseBase<Derived>& m) {
    need(std::size_t(m.size()) * 4);
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        const float v = f32();
        if (!std::isfinite(v)) throw ValidationError(origin_ + ": non-finite value in payload");
        m(r, c) = v;
      }
    }
  }

  std::string text() {
    const std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  // Checks the remaining payload is exactly `n` bytes.
  void expect_remaining(std::size_t n) const {
    if (bytes_.size() - pos_ != n)
      throw CorruptionError(origin_ + ": payload is " + std::to_string(bytes_.size() - pos_) +
                            " bytes, header declares " + std::to_string(n));
  }

  void finish() const {
    if (pos_ != bytes_.size())
      throw CorruptionError(origin_ + ": " + std::to_string(bytes_.size() - pos_) +
                            " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptionError(origin_ + ": truncated payload");
  }

  std::span<const unsigned char> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Index positive_dim(std::uint32_t v, const std::string& origin, const char* what) {
  if (v == 0) throw CorruptionError(origin + ": " + what + " is zero");
  return Index(v);
}

}  // namespace

std::vector<unsigned char> encode_tensor(const Tensor<float>& t) {
  Writer w;
  w.magic("COOC");
  w.dim(t.rows());
  w.dim(t.cols());
  w.dim(t.depth());
  w.reals(t.matrix());
  return std::move(w.bytes());
}

Tensor<float> decode_tensor(std::span<const unsigned char> bytes, const std::string& origin) {
  Reader r(bytes, origin);
  r.magic("COOC");
  const Shape shape{positive_dim(r.u32(), origin, "M"), positive_dim(r.u32(), origin, "N"),
                    positive_dim(r.u32(), origin, "D")};
  r.expect_remaining(std::size_t(shape.size()) * 4);
  Tensor<float> t(shape);
  r.reals(t.matrix());
  return t;
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_tensor(bytes, path.string());
}

void save_tensor(const Tensor<float>& t, const std::filesystem::path& path) {
  write_file(encode_tensor(t), path);
}

Descriptor<float> load_descriptor(const std::filesystem::path& path) {
  const Tensor<float> t = load_tensor(path);
  if (t.rows() != 1 || t.cols() != 1)
    throw DimensionError(path.string() + ": descriptor file must have shape 1x1xD, got " +
                      to_string(t.shape()));
  return t.matrix().row(0).transpose();
}

void save_descriptor(const Descriptor<float>& d, const std::filesystem::path& path) {
  save_tensor(Tensor<float>(Shape{1, 1, d.size()}, d.transpose()), path);
}

WhiteningModel<float> load_whitening(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string origin = path.string();
  Reader r(bytes, origin);
  r.magic("COOW");
  const Index in = positive_dim(r.u32(), origin, "input dim");
  const Index out = positive_dim(r.u32(), origin, "output dim");
  r.expect_remaining(std::size_t(in + out * in + out) * 4);
  WhiteningModel<float> m;
  m.mean.resize(in);
  m.projection.resize(out, in);
  m.eigenvalues.resize(out);
  r.reals(m.mean);
  r.reals(m.projection);
  r.reals(m.eigenvalues);
  if ((m.eigenvalues.array() <= 0).any())
    throw ValidationError(origin + ": whitening eigenvalues must be positive");
  return m;
}

void save_whitening(const WhiteningModel<float>& m, const std::filesystem::path& path) {
  Writer w;
  w.magic("COOW");
  w.dim(m.input_dim());
  w.dim(m.output_dim());
  w.reals(m.mean);
  w.reals(m.projection);
  w.reals(m.eigenvalues);
  write_file(w.bytes(), path);
}

DescriptorIndex<float> load_index(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string origin = path.string();
  Reader r(bytes, origin);
  r.magic("COOI");
  const Index count = Index(r.u32());
  const Index dim = Index(r.u32());
  std::vector<std::string> ids;
  ids.reserve(std::size_t(count));
  for (Index i = 0; i < count; ++i) ids.push_back(r.text());
  r.expect_remaining(std::size_t(count * dim) * 4);
  RowMatrix<float> matrix(count, dim);
  r.reals(matrix);
  return DescriptorIndex<float>(std::move(ids), std::move(matrix));
}

void save_index(const DescriptorIndex<float>& idx, const std::filesystem::path& path) {
  Writer w;
  w.magic("COOI");
  w.dim(idx.size());
  w.dim(idx.dim());
  for (const auto& id : idx.ids()) w.text(id);
  w.reals(idx.matrix());
  write_file(w.bytes(), path);
}

CoocFilter<float> load_filter(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string origin = path.string();
  Reader r(bytes, origin);
  r.magic("COOF");
  const Index depth = positive_dim(r.u32(), origin, "D");
  const Index window = positive_dim(r.u32(), origin, "S");
  if (window % 2 == 0) throw CorruptionError(origin + ": window size must be odd");
  r.expect_remaining(std::size_t(depth * depth * window * window) * 4);
  CoocFilter<float> f(depth, (window - 1) / 2);
  for (Index a = 0; a < depth; ++a)
    for (Index b = 0; b < depth; ++b)
      for (Index row = 0; row < window; ++row)
        for (Index col = 0; col < window; ++col) {
          const float v = r.f32();
          if (!std::isfinite(v)) throw ValidationError(origin + ": non-finite filter weight");
          f.at(a, b, row, col) = v;
        }
  f.detect_structure();
  return f;
}

void save_filter(const CoocFilter<float>& f, const std::filesystem::path& path) {
  Writer w;
  w.magic("COOF");
  w.dim(f.depth());
  w.dim(f.window());
  for (Index a = 0; a < f.depth(); ++a)
    for (Index b = 0; b < f.depth(); ++b)
      for (Index row = 0; row < f.window(); ++row)
        for (Index col = 0; col < f.window(); ++col) w.f32(f(a, b, row, col));
  write_file(w.bytes(), path);
}

void write_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_pgm(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  const double lo = m.size() ? m.minCoeff() : 0.0;
  const double hi = m.size() ? m.maxCoeff() : 0.0;
  const double range = hi - lo;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double v = range > 0 ? (m(r, c) - lo) / range * 255.0 : 0.0;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v))));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cooc
