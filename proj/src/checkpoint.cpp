#include "cdv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cdv/error.hpp"
#include "cdv/rng.hpp"

namespace cdv::nn {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'V', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint64_t kMaxBlob = std::uint64_t{1} << 34;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("unexpected end of binary stream");
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return read_le<double>(in); }
float read_f32(std::istream& in) { return read_le<float>(in); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError("truncated string in binary stream");
  return s;
}

void Checkpoint::add(std::string name, Tensor2 tensor) {
  if (contains(name)) throw IntegrityError("duplicate tensor name in checkpoint: " + name);
  tensors_.push_back({std::move(name), std::move(tensor)});
}

void Checkpoint::add_params(const ParamList& params) {
  for (const auto& p : params) add(p.name, *p.value);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return true;
  }
  return false;
}

const Tensor2& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t.tensor;
  }
  throw NotFoundError("checkpoint has no tensor named " + name);
}

void Checkpoint::restore_params(const ParamList& params) const {
  for (const auto& p : params) {
    const Tensor2& stored = get(p.name);
    if (!stored.same_shape(*p.value)) {
      throw ShapeError("checkpoint tensor " + p.name + " is " + shape_string(stored) +
                       ", model expects " + shape_string(*p.value));
    }
    *p.value = stored;
  }
}

void Checkpoint::write(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  const std::string meta = metadata.dump();
  write_u64(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_u32(out, static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    write_string(out, t.name);
    write_u64(out, t.tensor.rows());
    write_u64(out, t.tensor.cols());
    for (double v : t.tensor.values()) write_f64(out, v);
  }
}

Checkpoint Checkpoint::read(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a checkpoint container (bad magic)");
  }
  Checkpoint ckpt;
  const std::uint64_t meta_len = read_u64(in);
  if (meta_len > kMaxBlob) throw ParseError("checkpoint metadata length is implausible");
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw ParseError("truncated checkpoint metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = read_string(in);
    const std::uint64_t rows = read_u64(in);
    const std::uint64_t cols = read_u64(in);
    if (rows * cols > kMaxBlob) throw ParseError("tensor " + name + " is implausibly large");
    std::vector<double> values(rows * cols);
    for (double& v : values) v = read_f64(in);
    ckpt.add(std::move(name), Tensor2(rows, cols, std::move(values)));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in);
}

std::string Checkpoint::to_bytes() const {
  std::ostringstream out(std::ios::binary);
  write(out);
  return out.str();
}

std::uint64_t Checkpoint::fingerprint() const {
  Fingerprint fp;
  fp.update(to_bytes());
  return fp.value();
}

}  // namespace cdv::nn
