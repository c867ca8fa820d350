#include "calloc/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cal {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path + ": " + what);
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void raw(void* dst, size_t n) {
    if (pos_ + n > data_.size()) fail(path_, "truncated file");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  uint16_t u16() {
    uint8_t b[2];
    raw(b, 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32() {
    uint8_t b[4];
    raw(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  bool done() const { return pos_ == data_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

struct NamedTensor {
  const char* name;
  const Tensor* t;
};

std::vector<NamedTensor> named_tensors(const CallocModel& m) {
  return {{"emb_query.w", &m.emb_query.w},       {"emb_query.b", &m.emb_query.b},
          {"emb_original.w", &m.emb_original.w}, {"emb_original.b", &m.emb_original.b},
          {"proj_q.w", &m.proj_q.w},             {"proj_q.b", &m.proj_q.b},
          {"proj_k.w", &m.proj_k.w},             {"proj_k.b", &m.proj_k.b},
          {"head.w", &m.head.w},                 {"head.b", &m.head.b}};
}

}  // namespace

void save_checkpoint(const CallocModel& model, const std::string& path) {
  const ModelDims& d = model.dims();
  std::string buf;
  buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<uint32_t>(d.n_in));
  put_u32(buf, static_cast<uint32_t>(d.emb_dim));
  put_u32(buf, static_cast<uint32_t>(d.key_dim));
  put_u32(buf, static_cast<uint32_t>(d.n_classes));
  put_u32(buf, static_cast<uint32_t>(model.memory().rows()));
  put_u64(buf, model.seed());
  put_u32(buf, static_cast<uint32_t>(model.lesson_reached()));

  auto arrays = named_tensors(model);
  put_u32(buf, static_cast<uint32_t>(arrays.size()));
  for (const NamedTensor& a : arrays) {
    size_t len = std::strlen(a.name);
    put_u16(buf, static_cast<uint16_t>(len));
    buf.append(a.name, len);
    put_u32(buf, static_cast<uint32_t>(a.t->rows));
    put_u32(buf, static_cast<uint32_t>(a.t->cols));
    for (float f : a.t->v) put_f32(buf, f);
  }

  // Write to a sibling temp file and rename so a crash never leaves a
  // half-written checkpoint at the target path.
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(tmp, "cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(tmp, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(path, "rename from temp file failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  char magic[sizeof(kCheckpointMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) fail(path, "bad magic bytes");
  uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(path, "unsupported version " + std::to_string(version));
  }

  ModelDims dims;
  dims.n_in = static_cast<int>(r.u32());
  dims.emb_dim = static_cast<int>(r.u32());
  dims.key_dim = static_cast<int>(r.u32());
  dims.n_classes = static_cast<int>(r.u32());
  int n_memory = static_cast<int>(r.u32());
  uint64_t seed = r.u64();
  int lesson = static_cast<int>(r.u32());
  if (dims.n_in <= 0 || dims.emb_dim <= 0 || dims.key_dim <= 0 || dims.n_classes <= 0) {
    fail(path, "non-positive dimension in header");
  }

  LoadedCheckpoint out;
  out.model = CallocModel::init(dims, seed);
  out.model.set_lesson_reached(lesson);
  out.n_memory = n_memory;

  auto expected = named_tensors(out.model);
  uint32_t n_arrays = r.u32();
  if (n_arrays != expected.size()) {
    fail(path, "expected " + std::to_string(expected.size()) + " arrays, found " +
                   std::to_string(n_arrays));
  }
  for (const NamedTensor& e : expected) {
    uint16_t len = r.u16();
    std::string name(len, '\0');
    r.raw(name.data(), len);
    if (name != e.name) fail(path, "array name mismatch: expected " + std::string(e.name) + ", found " + name);
    int rows = static_cast<int>(r.u32());
    int cols = static_cast<int>(r.u32());
    if (rows != e.t->rows || cols != e.t->cols) {
      fail(path, "shape mismatch for " + name + ": header dims give " +
                     std::to_string(e.t->rows) + "x" + std::to_string(e.t->cols) + ", file has " +
                     std::to_string(rows) + "x" + std::to_string(cols));
    }
    Tensor* dst = const_cast<Tensor*>(e.t);
    for (float& f : dst->v) f = r.f32();
  }
  if (!r.done()) fail(path, "trailing bytes after last array");
  return out;
}

}  // namespace cal
