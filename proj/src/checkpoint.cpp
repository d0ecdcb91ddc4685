#include "kiras/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kiras {
namespace {

constexpr char kMagic[4] = {'K', 'I', 'R', 'A'};

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
  const std::string& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size()) throw IoError("truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string take(size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

size_t elem_size(SectionKind k) { return k == SectionKind::F32 ? 4 : k == SectionKind::Str ? 1 : 8; }

std::vector<std::uint8_t> to_le(const double* src, std::uint64_t n) {
  std::vector<std::uint8_t> raw(n * 8);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(src[i]);
    for (int b = 0; b < 8; ++b) raw[i * 8 + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
  }
  return raw;
}

double f64_at(const std::vector<std::uint8_t>& raw, std::uint64_t i) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

float f32_at(const std::vector<std::uint8_t>& raw, std::uint64_t i) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::uint64_t Section::count() const {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) n *= d;
  return dims.empty() ? 1 : n;
}

void CheckpointFile::add_f32(const std::string& name, const Vec& v) {
  Section s;
  s.kind = SectionKind::F32;
  s.dims = {static_cast<std::uint64_t>(v.size())};
  s.raw.resize(static_cast<size_t>(v.size()) * 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v(i)));
    for (int b = 0; b < 4; ++b)
      s.raw[static_cast<size_t>(i) * 4 + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
  }
  sections_.emplace_back(name, std::move(s));
}

void CheckpointFile::add_f64(const std::string& name, const Vec& v) {
  Section s;
  s.kind = SectionKind::F64;
  s.dims = {static_cast<std::uint64_t>(v.size())};
  s.raw = to_le(v.data(), static_cast<std::uint64_t>(v.size()));
  sections_.emplace_back(name, std::move(s));
}

void CheckpointFile::add_f64_mat(const std::string& name, const Mat& m) {
  Section s;
  s.kind = SectionKind::F64;
  s.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  s.raw = to_le(m.data(), static_cast<std::uint64_t>(m.size()));
  sections_.emplace_back(name, std::move(s));
}

void CheckpointFile::add_f64_scalar(const std::string& name, double v) {
  Section s;
  s.kind = SectionKind::F64;
  s.raw = to_le(&v, 1);
  sections_.emplace_back(name, std::move(s));
}

void CheckpointFile::add_i64(const std::string& name, const std::vector<std::int64_t>& v) {
  Section s;
  s.kind = SectionKind::I64;
  s.dims = {v.size()};
  s.raw.resize(v.size() * 8);
  for (size_t i = 0; i < v.size(); ++i) {
    const std::uint64_t bits = static_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < 8; ++b) s.raw[i * 8 + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
  }
  sections_.emplace_back(name, std::move(s));
}

void CheckpointFile::add_i64_scalar(const std::string& name, std::int64_t v) {
  Section s;
  s.kind = SectionKind::I64;
  s.raw.resize(8);
  const std::uint64_t bits = static_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) s.raw[static_cast<size_t>(b)] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
  sections_.emplace_back(name, std::move(s));
}

void CheckpointFile::add_str(const std::string& name, const std::string& str) {
  Section s;
  s.kind = SectionKind::Str;
  s.dims = {str.size()};
  s.raw.assign(str.begin(), str.end());
  sections_.emplace_back(name, std::move(s));
}

const Section& CheckpointFile::find(const std::string& name, SectionKind kind) const {
  for (const auto& [n, s] : sections_) {
    if (n != name) continue;
    if (s.kind != kind) throw IoError("checkpoint section '" + name + "' has the wrong type");
    return s;
  }
  throw IoError("checkpoint section '" + name + "' missing");
}

bool CheckpointFile::has(const std::string& name) const {
  for (const auto& [n, s] : sections_)
    if (n == name) return true;
  return false;
}

void CheckpointFile::add_section(const std::string& name, Section s) {
  sections_.emplace_back(name, std::move(s));
}

Vec CheckpointFile::f32(const std::string& name) const {
  const Section& s = find(name, SectionKind::F32);
  Vec v(static_cast<Eigen::Index>(s.count()));
  for (std::uint64_t i = 0; i < s.count(); ++i)
    v(static_cast<Eigen::Index>(i)) = static_cast<double>(f32_at(s.raw, i));
  return v;
}

Vec CheckpointFile::f64(const std::string& name) const {
  const Section& s = find(name, SectionKind::F64);
  Vec v(static_cast<Eigen::Index>(s.count()));
  for (std::uint64_t i = 0; i < s.count(); ++i) v(static_cast<Eigen::Index>(i)) = f64_at(s.raw, i);
  return v;
}

Mat CheckpointFile::f64_mat(const std::string& name) const {
  const Section& s = find(name, SectionKind::F64);
  if (s.dims.size() != 2) throw IoError("checkpoint section '" + name + "' is not a matrix");
  Mat m(static_cast<Eigen::Index>(s.dims[0]), static_cast<Eigen::Index>(s.dims[1]));
  for (std::uint64_t i = 0; i < s.count(); ++i) m.data()[i] = f64_at(s.raw, i);
  return m;
}

double CheckpointFile::f64_scalar(const std::string& name) const {
  const Section& s = find(name, SectionKind::F64);
  if (s.count() != 1) throw IoError("checkpoint section '" + name + "' is not a scalar");
  return f64_at(s.raw, 0);
}

std::vector<std::int64_t> CheckpointFile::i64(const std::string& name) const {
  const Section& s = find(name, SectionKind::I64);
  std::vector<std::int64_t> v(s.count());
  for (std::uint64_t i = 0; i < s.count(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(s.raw[i * 8 + b]) << (8 * b);
    v[i] = static_cast<std::int64_t>(bits);
  }
  return v;
}

std::int64_t CheckpointFile::i64_scalar(const std::string& name) const {
  const auto v = i64(name);
  if (v.size() != 1) throw IoError("checkpoint section '" + name + "' is not a scalar");
  return v[0];
}

std::string CheckpointFile::str(const std::string& name) const {
  const Section& s = find(name, SectionKind::Str);
  return std::string(s.raw.begin(), s.raw.end());
}

std::string encode_checkpoint(const CheckpointFile& f) {
  std::string out;
  put_bytes(out, kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(f.sections().size()));
  for (const auto& [name, s] : f.sections()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u8(out, static_cast<std::uint8_t>(s.kind));
    put_u32(out, static_cast<std::uint32_t>(s.dims.size()));
    for (std::uint64_t d : s.dims) put_u64(out, d);
    put_u64(out, s.raw.size());
    put_bytes(out, s.raw.data(), s.raw.size());
  }
  return out;
}

CheckpointFile decode_checkpoint(const std::string& bytes) {
  Cursor c{bytes};
  const std::string magic = c.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw IoError("not a checkpoint file (bad magic)");
  const std::uint32_t version = c.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t count = c.u32();
  CheckpointFile f;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = c.u32();
    const std::string name = c.take(name_len);
    Section s;
    const std::uint8_t kind = c.u8();
    if (kind > 3) throw IoError("checkpoint section '" + name + "' has unknown kind");
    s.kind = static_cast<SectionKind>(kind);
    const std::uint32_t rank = c.u32();
    s.dims.resize(rank);
    for (std::uint32_t r = 0; r < rank; ++r) s.dims[r] = c.u64();
    const std::uint64_t raw_len = c.u64();
    if (raw_len != s.count() * elem_size(s.kind) && !(s.dims.empty() && raw_len == elem_size(s.kind)))
      throw IoError("checkpoint section '" + name + "' has inconsistent size");
    const std::string payload = c.take(raw_len);
    s.raw.assign(payload.begin(), payload.end());
    f.add_section(name, std::move(s));
  }
  if (c.pos != bytes.size()) throw IoError("trailing bytes after checkpoint sections");
  return f;
}

void write_checkpoint_file(const std::string& path, const CheckpointFile& f) {
  const std::string bytes = encode_checkpoint(f);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

CheckpointFile read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace kiras
