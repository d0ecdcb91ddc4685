#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kiras/common.hpp"

namespace kiras {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named binary sections: f32/f64 tensors with explicit shapes, i64
// tensors, and raw strings. Little-endian on disk regardless of host.
enum class SectionKind : std::uint8_t { F32 = 0, F64 = 1, I64 = 2, Str = 3 };

struct Section {
  SectionKind kind = SectionKind::F64;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> raw;

  std::uint64_t count() const;
};

class CheckpointFile {
 public:
  // adders; f32 quantizes doubles to single precision on write
  void add_f32(const std::string& name, const Vec& v);
  void add_f64(const std::string& name, const Vec& v);
  void add_f64_mat(const std::string& name, const Mat& m);  // column-major payload
  void add_f64_scalar(const std::string& name, double v);
  void add_i64(const std::string& name, const std::vector<std::int64_t>& v);
  void add_i64_scalar(const std::string& name, std::int64_t v);
  void add_str(const std::string& name, const std::string& s);

  // readers; throw IoError when the section is missing or mistyped
  Vec f32(const std::string& name) const;  // widened back to double
  Vec f64(const std::string& name) const;
  Mat f64_mat(const std::string& name) const;
  double f64_scalar(const std::string& name) const;
  std::vector<std::int64_t> i64(const std::string& name) const;
  std::int64_t i64_scalar(const std::string& name) const;
  std::string str(const std::string& name) const;

  bool has(const std::string& name) const;
  void add_section(const std::string& name, Section s);
  const std::vector<std::pair<std::string, Section>>& sections() const { return sections_; }

 private:
  const Section& find(const std::string& name, SectionKind kind) const;
  std::vector<std::pair<std::string, Section>> sections_;
};

std::string encode_checkpoint(const CheckpointFile& f);
CheckpointFile decode_checkpoint(const std::string& bytes);

// atomic write via a temp file rename
void write_checkpoint_file(const std::string& path, const CheckpointFile& f);
CheckpointFile read_checkpoint_file(const std::string& path);

}  // namespace kiras
