#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "ppsm/digest.hpp"
#include "ppsm/error.hpp"
#include "ppsm/synthesis.hpp"

namespace ppsm::synthesis {

namespace {

constexpr char kMagic[8] = {'P', 'P', 'S', 'M', 'P', 'O', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* p, std::size_t n) : p_(p), n_(n) {}
  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw IntegrityError("policy file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(p_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(p_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t k) {
    need(k);
    std::string s(p_ + pos_, k);
    pos_ += k;
    return s;
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_policy(const std::filesystem::path& path, const PolicyTable& t) {
  if (t.data.size() != t.horizon * t.belief_count * t.energy_count * t.kernel_size())
    throw std::invalid_argument("policy table data does not match its shape " + t.shape());
  nlohmann::json h = {{"horizon", t.horizon},
                      {"belief_count", t.belief_count},
                      {"energy_count", t.energy_count},
                      {"obs_count", t.obs_count},
                      {"action_count", t.action_count},
                      {"hypotheses", t.hypotheses},
                      {"belief_resolution", t.belief_resolution},
                      {"q", t.q},
                      {"e", t.e},
                      {"actions", t.actions},
                      {"model_digest", t.model_digest},
                      {"ess_digest", t.ess_digest}};
  const std::string header = h.dump();

  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u64(header.size());
  w.raw(header.data(), header.size());
  const std::size_t ny = t.action_count;
  for (std::size_t r = 0; r * ny < t.data.size(); ++r) {
    const double* row = t.data.data() + r * ny;
    std::uint32_t nnz = 0;
    for (std::size_t y = 0; y < ny; ++y) nnz += row[y] != 0.0;
    w.u32(nnz);
    for (std::size_t y = 0; y < ny; ++y)
      if (row[y] != 0.0) {
        w.u32(static_cast<std::uint32_t>(y));
        w.f64(row[y]);
      }
  }
  Digest d;
  d.bytes(w.buffer().data(), w.buffer().size());
  w.u64(d.value());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write policy file " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw std::runtime_error("failed writing policy file " + path.string());
}

PolicyTable load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open policy file " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 4 + 8 + 8) throw IntegrityError("policy file is truncated");
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw IntegrityError("not a policy file (bad magic)");

  const std::size_t body = buf.size() - 8;
  Digest d;
  d.bytes(buf.data(), body);
  Reader tail(buf.data() + body, 8);
  if (tail.u64() != d.value()) throw IntegrityError("policy file checksum mismatch (truncated or corrupted)");

  Reader r(buf.data() + sizeof kMagic, body - sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw IntegrityError("policy file version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kVersion) + ")");
  const std::uint64_t header_len = r.u64();
  if (header_len > r.remaining()) throw IntegrityError("policy file is truncated");
  PolicyTable t;
  try {
    const auto h = nlohmann::json::parse(r.str(header_len));
    t.horizon = h.at("horizon");
    t.belief_count = h.at("belief_count");
    t.energy_count = h.at("energy_count");
    t.obs_count = h.at("obs_count");
    t.action_count = h.at("action_count");
    t.hypotheses = h.at("hypotheses");
    t.belief_resolution = h.at("belief_resolution");
    t.q = h.at("q");
    t.e = h.at("e");
    t.actions = h.at("actions").get<std::vector<double>>();
    t.model_digest = h.at("model_digest");
    t.ess_digest = h.at("ess_digest");
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("policy file header is malformed: ") + e.what());
  }
  const std::size_t rows = t.horizon * t.belief_count * t.energy_count * t.obs_count;
  const std::size_t ny = t.action_count;
  t.data.assign(rows * ny, 0.0);
  for (std::size_t row = 0; row < rows; ++row) {
    const std::uint32_t nnz = r.u32();
    if (nnz > ny) throw IntegrityError("policy file row has too many entries");
    for (std::uint32_t i = 0; i < nnz; ++i) {
      const std::uint32_t y = r.u32();
      if (y >= ny) throw IntegrityError("policy file action index out of range");
      t.data[row * ny + y] = r.f64();
    }
  }
  if (r.remaining() != 0) throw IntegrityError("policy file has trailing data");
  return t;
}

}  // namespace ppsm::synthesis
