// mfac/io.cpp

// Copyright 2026  The mfac authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mfac/io.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

// Payload values are memcpy'd; the on-disk format is little-endian.
static_assert(std::endian::native == std::endian::little,
              "mfacbin reader/writer assumes a little-endian host");

namespace mfac::io {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  in.seekg(0, std::ios::end);
  std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw IoError("failed reading '" + p.string() + "'");
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

void append_header(std::string& out, DType dt, std::uint8_t kind) {
  out.append(kMagic.data(), kMagic.size());
  out.push_back(char(kVersion));
  out.push_back(char(static_cast<std::uint8_t>(dt)));
  out.push_back(char(kind));
  out.push_back('\0');
}

struct Header {
  DType dtype;
  std::uint8_t kind;
  std::uint64_t a;  // rows (plain) or section count (container)
  std::uint64_t b;  // cols (plain) or reserved (container)
};

Header parse_header(const std::vector<unsigned char>& buf,
                    const std::filesystem::path& p) {
  if (buf.size() < 24)
    throw IoError("'" + p.string() + "': truncated mfacbin header");
  if (std::memcmp(buf.data(), kMagic.data(), 4) != 0)
    throw IoError("'" + p.string() + "': bad magic (not an mfacbin file)");
  if (buf[4] != kVersion)
    throw IoError("'" + p.string() + "': unsupported format version " +
                  std::to_string(int(buf[4])));
  if (buf[5] > 1)
    throw IoError("'" + p.string() + "': unknown dtype code " +
                  std::to_string(int(buf[5])));
  if (buf[6] > kKindContainer)
    throw IoError("'" + p.string() + "': unknown kind byte " +
                  std::to_string(int(buf[6])));
  return {static_cast<DType>(buf[5]), buf[6], get_u64(buf.data() + 8),
          get_u64(buf.data() + 16)};
}

template <typename T>
void save_matrix_impl(const std::filesystem::path& p, const RowMatrix<T>& m) {
  std::string out;
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto cols = static_cast<std::uint64_t>(m.cols());
  out.reserve(24 + std::size_t(rows * cols) * sizeof(T));
  append_header(out, std::is_same_v<T, float> ? DType::f32 : DType::f64,
                kKindMatrix);
  put_u64(out, rows);
  put_u64(out, cols);
  out.append(reinterpret_cast<const char*>(m.data()),
             std::size_t(rows * cols) * sizeof(T));
  write_file(p, out);
}

template <typename T>
RowMatrix<T> parse_payload(const unsigned char* data, std::uint64_t rows,
                           std::uint64_t cols) {
  RowMatrix<T> m(static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
  std::memcpy(m.data(), data, std::size_t(rows * cols) * sizeof(T));
  return m;
}

void check_payload_extent(std::uint64_t rows, std::uint64_t cols, DType dt,
                          std::size_t avail, const std::filesystem::path& p) {
  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols)
    throw IoError("'" + p.string() + "': rows*cols overflows");
  std::uint64_t n = rows * cols;
  if (n > avail / dtype_size(dt))
    throw IoError("'" + p.string() + "': truncated payload (" +
                  std::to_string(n) + " values declared)");
}

}  // namespace

void save_matrix(const std::filesystem::path& p, const RowMatrix<float>& m) {
  save_matrix_impl(p, m);
}

void save_matrix(const std::filesystem::path& p, const RowMatrix<double>& m) {
  save_matrix_impl(p, m);
}

MatrixInfo peek_matrix(const std::filesystem::path& p) {
  auto buf = read_file(p);
  Header h = parse_header(buf, p);
  if (h.kind != kKindMatrix)
    throw IoError("'" + p.string() + "': container file where a plain matrix "
                  "was expected");
  return {h.dtype, h.a, h.b};
}

AnyMatrix load_matrix(const std::filesystem::path& p) {
  auto buf = read_file(p);
  Header h = parse_header(buf, p);
  if (h.kind != kKindMatrix)
    throw IoError("'" + p.string() + "': container file where a plain matrix "
                  "was expected");
  const std::size_t avail = buf.size() - 24;
  check_payload_extent(h.a, h.b, h.dtype, avail, p);
  const std::uint64_t used = h.a * h.b * dtype_size(h.dtype);
  if (avail != used)
    throw IoError("'" + p.string() + "': trailing bytes after payload");
  if (h.dtype == DType::f32)
    return parse_payload<float>(buf.data() + 24, h.a, h.b);
  return parse_payload<double>(buf.data() + 24, h.a, h.b);
}

RowMatrix<double> load_csv_matrix(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  std::vector<double> values;
  std::size_t cols = 0, rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t row_cols = 0;
    const char* s = line.data();
    const char* end = s + line.size();
    while (s < end) {
      while (s < end && (*s == ' ' || *s == '\t')) ++s;
      double v = 0;
      auto [next, ec] = std::from_chars(s, end, v);
      if (ec != std::errc())
        throw IoError("'" + p.string() + "': malformed number on line " +
                      std::to_string(rows + 1));
      values.push_back(v);
      ++row_cols;
      s = next;
      while (s < end && (*s == ' ' || *s == '\t')) ++s;
      if (s < end) {
        if (*s != ',')
          throw IoError("'" + p.string() + "': expected ',' on line " +
                        std::to_string(rows + 1));
        ++s;
      }
    }
    if (rows == 0) {
      cols = row_cols;
    } else if (row_cols != cols) {
      throw IoError("'" + p.string() + "': line " + std::to_string(rows + 1) +
                    " has " + std::to_string(row_cols) + " values, expected " +
                    std::to_string(cols));
    }
    ++rows;
    if (std::uint64_t(rows) * cols > kCsvMaxElements)
      throw ValidationError("CSV gradients limited to " +
                            std::to_string(kCsvMaxElements) +
                            " values; use mfacbin for larger windows");
  }
  RowMatrix<double> m(static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
  std::memcpy(m.data(), values.data(), values.size() * sizeof(double));
  return m;
}

Eigen::VectorXd load_weights(const std::filesystem::path& p) {
  RowMatrix<double> m = load_matrix_as<double>(p);
  if (m.rows() != 1 && m.cols() != 1)
    throw ValidationError("weights: '" + p.string() +
                          "' must hold a 1 x d or d x 1 matrix");
  Eigen::VectorXd w =
      m.rows() == 1 ? Eigen::VectorXd(m.row(0).transpose()) : Eigen::VectorXd(m.col(0));
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!std::isfinite(w[i]))
      throw ValidationError("weights: non-finite entry at index " +
                            std::to_string(i));
  return w;
}

void save_weights(const std::filesystem::path& p, const Eigen::VectorXd& w) {
  RowMatrix<double> m(1, w.size());
  m.row(0) = w.transpose();
  save_matrix(p, m);
}

std::array<char, 4> Container::pack_tag(const std::string& tag) {
  if (tag.empty() || tag.size() > 4)
    throw ValidationError("container: tag must be 1..4 characters");
  std::array<char, 4> t{' ', ' ', ' ', ' '};
  std::memcpy(t.data(), tag.data(), tag.size());
  return t;
}

template <typename T>
void Container::add(const std::string& tag, const RowMatrix<T>& m) {
  Section s;
  s.tag = pack_tag(tag);
  s.dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;
  s.rows = static_cast<std::uint64_t>(m.rows());
  s.cols = static_cast<std::uint64_t>(m.cols());
  s.payload.resize(std::size_t(s.rows * s.cols) * sizeof(T));
  std::memcpy(s.payload.data(), m.data(), s.payload.size());
  sections_.push_back(std::move(s));
}

template void Container::add<float>(const std::string&, const RowMatrix<float>&);
template void Container::add<double>(const std::string&,
                                     const RowMatrix<double>&);

bool Container::has(const std::string& tag) const {
  auto t = pack_tag(tag);
  for (const auto& s : sections_)
    if (s.tag == t) return true;
  return false;
}

const Container::Section& Container::find(const std::string& tag) const {
  auto t = pack_tag(tag);
  for (const auto& s : sections_)
    if (s.tag == t) return s;
  throw IoError("container: missing section '" + tag + "'");
}

template <typename T>
RowMatrix<T> Container::get(const std::string& tag) const {
  const Section& s = find(tag);
  DType want = std::is_same_v<T, float> ? DType::f32 : DType::f64;
  if (s.dtype != want)
    throw IoError("container: section '" + tag + "' is " +
                  dtype_name(s.dtype) + ", expected " + dtype_name(want));
  RowMatrix<T> m(static_cast<Eigen::Index>(s.rows),
                 static_cast<Eigen::Index>(s.cols));
  std::memcpy(m.data(), s.payload.data(), s.payload.size());
  return m;
}

template RowMatrix<float> Container::get<float>(const std::string&) const;
template RowMatrix<double> Container::get<double>(const std::string&) const;

void Container::save(const std::filesystem::path& p) const {
  std::string out;
  append_header(out, dtype, kKindContainer);
  put_u64(out, sections_.size());
  put_u64(out, 0);
  for (const auto& s : sections_) {
    out.append(s.tag.data(), 4);
    out.push_back(char(static_cast<std::uint8_t>(s.dtype)));
    out.append(3, '\0');
    put_u64(out, s.rows);
    put_u64(out, s.cols);
    out.append(reinterpret_cast<const char*>(s.payload.data()),
               s.payload.size());
  }
  write_file(p, out);
}

Container Container::load(const std::filesystem::path& p) {
  auto buf = read_file(p);
  Header h = parse_header(buf, p);
  if (h.kind != kKindContainer)
    throw IoError("'" + p.string() + "': plain matrix where a container was "
                  "expected");
  Container c;
  c.dtype = h.dtype;
  std::size_t off = 24;
  for (std::uint64_t i = 0; i < h.a; ++i) {
    if (buf.size() - off < 24)
      throw IoError("'" + p.string() + "': truncated section header");
    Section s;
    std::memcpy(s.tag.data(), buf.data() + off, 4);
    if (buf[off + 4] > 1)
      throw IoError("'" + p.string() + "': unknown section dtype code");
    s.dtype = static_cast<DType>(buf[off + 4]);
    s.rows = get_u64(buf.data() + off + 8);
    s.cols = get_u64(buf.data() + off + 16);
    off += 24;
    check_payload_extent(s.rows, s.cols, s.dtype, buf.size() - off, p);
    std::size_t bytes = std::size_t(s.rows * s.cols) * dtype_size(s.dtype);
    s.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                     buf.begin() + static_cast<std::ptrdiff_t>(off + bytes));
    off += bytes;
    c.sections_.push_back(std::move(s));
  }
  if (off != buf.size())
    throw IoError("'" + p.string() + "': trailing bytes after last section");
  return c;
}

std::string csv_double(double v) {
  if (v == 0.0) v = 0.0;  // negative zero prints as 0
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mfac::io
