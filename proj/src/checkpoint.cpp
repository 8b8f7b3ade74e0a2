#include "povmap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "povmap/error.hpp"

namespace povmap {

namespace {

constexpr char kMagic[8] = {'P', 'V', 'M', 'A', 'P', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_integral_v<U> || std::is_same_v<U, double>);
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<U, double>) {
      bits = std::bit_cast<std::uint64_t>(v);
    } else {
      bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= std::uint64_t{static_cast<unsigned char>(s_[pos_ + i])} << (8 * i);
    pos_ += sizeof(U);
    if constexpr (std::is_same_v<U, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<U>(bits);
    }
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void expect(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(s_.data() + pos_, p, n) != 0) throw IoError("not a checkpoint file (bad magic)");
    pos_ += n;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw IoError("truncated checkpoint");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.tag));
  w.put<std::uint64_t>(ck.step);
  w.put<std::uint64_t>(ck.config_hash);
  w.put<double>(ck.quantile);
  const EncoderConfig& e = ck.model.image.config();
  for (int v : {e.image_px, e.patch_px, e.embed_dim, e.layers, e.heads, e.mlp_ratio}) w.put<std::int32_t>(v);
  w.put<std::uint64_t>(e.seed);
  const int pd = ck.model.poi ? ck.model.poi->input_dim() : 0;
  const int ph = ck.model.poi ? ck.model.poi->hidden_dim() : 0;
  w.put<std::int32_t>(pd);
  w.put<std::int32_t>(ph);
  const auto packs = ck.model.packs();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(packs.size()));
  for (const auto* p : packs) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p->blocks().size()));
    for (const auto& b : p->blocks()) {
      w.put_string(b.name);
      w.put<std::int64_t>(b.rows);
      w.put<std::int64_t>(b.cols);
      w.put<std::uint8_t>(b.decay ? 1 : 0);
    }
  }
  for (const auto* p : packs) {
    for (float v : p->flat()) w.put<double>(static_cast<double>(v));
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kMagic, sizeof kMagic);
  if (r.get<std::uint32_t>() != kVersion) throw IoError("unsupported checkpoint version");
  const auto tag_raw = r.get<std::uint32_t>();
  if (tag_raw > 2) throw IoError("checkpoint has an unknown module tag");
  const auto tag = static_cast<ModuleTag>(tag_raw);
  const auto step = r.get<std::uint64_t>();
  const auto hash = r.get<std::uint64_t>();
  const double q = r.get<double>();
  EncoderConfig e;
  e.image_px = r.get<std::int32_t>();
  e.patch_px = r.get<std::int32_t>();
  e.embed_dim = r.get<std::int32_t>();
  e.layers = r.get<std::int32_t>();
  e.heads = r.get<std::int32_t>();
  e.mlp_ratio = r.get<std::int32_t>();
  e.seed = r.get<std::uint64_t>();
  try {
    e.validate();
  } catch (const DomainError& err) {
    throw IoError(std::string("checkpoint carries an invalid encoder config: ") + err.what());
  }
  const int pd = r.get<std::int32_t>();
  const int ph = r.get<std::int32_t>();
  if (tag == ModuleTag::kAccess && (pd < 1 || ph < 1)) throw IoError("access checkpoint without POI dims");

  TraitModel<float> model(tag, e, tag == ModuleTag::kAccess ? pd : 16, tag == ModuleTag::kAccess ? ph : 64);
  auto packs = model.packs();
  if (r.get<std::uint32_t>() != packs.size()) throw IoError("checkpoint pack count does not match its module");
  for (auto* p : packs) {
    if (r.get<std::uint32_t>() != p->blocks().size()) throw IoError("checkpoint block table mismatch");
    for (const auto& b : p->blocks()) {
      const std::string name = r.get_string();
      const auto rows = r.get<std::int64_t>();
      const auto cols = r.get<std::int64_t>();
      const bool decay = r.get<std::uint8_t>() != 0;
      if (name != b.name || rows != b.rows || cols != b.cols || decay != b.decay) {
        throw IoError("checkpoint block '" + name + "' does not match the expected layout");
      }
    }
  }
  for (auto* p : packs) {
    for (float& v : p->flat()) v = static_cast<float>(r.get<double>());
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return Checkpoint{tag, std::move(model), step, hash, q};
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace povmap
