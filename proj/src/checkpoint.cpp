#include "glgat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "glgat/error.hpp"

namespace glgat {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'G', 'A', 'T', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const CheckpointTensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw ShapeError("checkpoint tensor '" + t.name + "' has inconsistent shape");
    }
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& t : ckpt.tensors) {
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = take<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw DataError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  pos += len;
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    CheckpointTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_numel(t.shape);
    if (pos + n * sizeof(double) > bytes.size()) throw DataError("checkpoint truncated");
    t.values.resize(n);
    std::memcpy(t.values.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    ckpt.tensors.push_back(std::move(t));
  }
  if (pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace glgat
