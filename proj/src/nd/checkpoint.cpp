#include "seqpatch/nd/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace seqpatch {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'P', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void scalar(T v) {
    std::uint8_t buf[sizeof(T)];
    Checkpoint::store_le(v, buf);
    out_.insert(out_.end(), buf, buf + sizeof(T));
  }
  void string(const std::string& s) {
    scalar(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void bytes(const std::uint8_t* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T scalar() {
    need(sizeof(T));
    T v = Checkpoint::load_le<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  std::string string() {
    const auto n = scalar<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& kv : metadata_) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  metadata_.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::meta(const std::string& key) const {
  for (const auto& kv : metadata_)
    if (kv.first == key) return kv.second;
  return std::nullopt;
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

void Checkpoint::insert(CheckpointEntry entry) {
  for (auto& e : entries_) {
    if (e.name == entry.name) {
      e = std::move(entry);
      return;
    }
  }
  entries_.push_back(std::move(entry));
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes(reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic));
  w.scalar(format_version);
  w.scalar(step);
  w.scalar(seed);
  w.scalar(static_cast<std::uint32_t>(metadata_.size()));
  for (const auto& [k, v] : metadata_) {
    w.string(k);
    w.string(v);
  }
  w.scalar(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.string(e.name);
    w.scalar(static_cast<std::uint8_t>(e.dtype));
    w.scalar(static_cast<std::uint32_t>(e.shape.size()));
    for (Index d : e.shape) w.scalar(static_cast<std::uint64_t>(d));
    w.bytes(e.payload.data(), e.payload.size());
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(sizeof(kMagic));
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic)))
    throw CheckpointError("not a checkpoint (bad magic)");
  Checkpoint c;
  c.format_version = r.scalar<std::uint32_t>();
  if (c.format_version != kFormatVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.format_version));
  c.step = r.scalar<std::uint64_t>();
  c.seed = r.scalar<std::uint64_t>();
  const auto n_meta = r.scalar<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.string();
    std::string v = r.string();
    c.metadata_.emplace_back(std::move(k), std::move(v));
  }
  const auto n_entries = r.scalar<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    CheckpointEntry e;
    e.name = r.string();
    const auto tag = r.scalar<std::uint8_t>();
    if (tag != static_cast<std::uint8_t>(DType::f32) && tag != static_cast<std::uint8_t>(DType::f64))
      throw CheckpointError("entry '" + e.name + "' has unknown dtype tag " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    const auto rank = r.scalar<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<Index>(r.scalar<std::uint64_t>()));
    auto payload = r.bytes(dtype_size(e.dtype) * static_cast<std::size_t>(element_count(e.shape)));
    e.payload.assign(payload.begin(), payload.end());
    c.entries_.push_back(std::move(e));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace seqpatch
