#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdv/layers.hpp"
#include "cdv/tensor.hpp"

namespace cdv::nn {

struct NamedTensor {
  std::string name;
  Tensor2 tensor;
};

/// Self-describing parameter container.
///
/// Layout (little-endian):
///   "CDVCKPT1"                      8-byte magic
///   u64 metadata length, metadata   compact JSON, keys sorted
///   u32 tensor count
///   per tensor: u32 name length, name, u64 rows, u64 cols, rows*cols f64
///
/// Serialisation is canonical: load followed by save reproduces the input
/// bytes exactly.
class Checkpoint {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  void add(std::string name, Tensor2 tensor);
  void add_params(const ParamList& params);
  const Tensor2& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  // Copies stored tensors into params, checking names and shapes.
  void restore_params(const ParamList& params) const;
  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string to_bytes() const;
  std::uint64_t fingerprint() const;

 private:
  std::vector<NamedTensor> tensors_;
};

// Little-endian primitives shared by the binary file formats.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_f32(std::ostream& out, float v);
void write_string(std::ostream& out, const std::string& s);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
float read_f32(std::istream& in);
std::string read_string(std::istream& in);

}  // namespace cdv::nn
