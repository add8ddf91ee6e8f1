#pragma once

// Binary checkpoint container for PredictorModel. All integers and floats are
// little-endian regardless of host byte order.
//
//   magic        8 bytes  "INTINFCK"
//   version      u32      kCheckpointVersion
//   vocab_hash   u64      ActionVocabulary::hash()
//   kind         u8       0 = recurrent, 1 = ngram
//   intention    u64
//   vocab_size   u64
//   epochs u64, batch u64, lr f64, embed u64, hidden u64, optimizer u8,
//   seed u64, smoothing f64
//   tensor_count u32
//   per tensor:  name_len u32, name bytes, rank u32, dims u64[rank],
//                values f64[prod(dims)]
//   checksum     u64      FNV-1a over every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "intentinf/error.hpp"
#include "intentinf/predictor.hpp"
#include "intentinf/util.hpp"

namespace intentinf {

inline constexpr std::string_view kCheckpointMagic = "INTINFCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& str() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int k = 0; k < n; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int k = 0; k < n; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

}  // namespace detail

inline std::string save_model(const PredictorModel& model) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(model.vocabulary_hash);
  w.u8(static_cast<std::uint8_t>(model.kind));
  w.u64(model.intention);
  w.u64(model.vocab_size());
  const auto& hp = model.hyperparameters;
  w.u64(hp.epochs);
  w.u64(hp.batch_size);
  w.f64(hp.learning_rate);
  w.u64(hp.embed_dim);
  w.u64(hp.hidden_dim);
  w.u8(static_cast<std::uint8_t>(hp.optimizer));
  w.u64(hp.seed);
  w.f64(hp.smoothing);

  std::vector<detail::NamedTensor> tensors;
  if (const auto* net = std::get_if<RecurrentNet>(&model.body)) {
    auto params = net->parameters();
    for (const auto& t : net->layout())
      tensors.push_back({t.name, t.dims, {params.begin() + t.offset, params.begin() + t.offset + t.size()}});
  } else {
    const auto& bm = std::get<BigramModel>(model.body);
    const std::size_t A = bm.vocab_size();
    auto vec = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
    tensors.push_back({"bigram.counts", {A, A}, vec(bm.bigram_counts())});
    tensors.push_back({"bigram.context_totals", {A}, vec(bm.context_totals())});
    tensors.push_back({"bigram.unigram", {A}, vec(bm.unigram_counts())});
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  w.u64(fnv1a64(w.str()));
  return std::move(w.str());
}

/// Decodes a checkpoint. With `expected_vocabulary_hash` set, a checkpoint
/// trained on any other vocabulary is rejected.
inline PredictorModel load_model(std::string_view bytes,
                                 std::optional<std::uint64_t> expected_vocabulary_hash = std::nullopt) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw Error(ErrorCode::CorruptCheckpoint, "bad magic bytes");
  detail::ByteReader r(bytes);
  r.bytes(kCheckpointMagic.size());
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  if (bytes.size() < 8) throw Error(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
  {
    detail::ByteReader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != fnv1a64(bytes.substr(0, bytes.size() - 8)))
      throw Error(ErrorCode::CorruptCheckpoint, "checksum mismatch (truncated or altered)");
  }

  PredictorModel m;
  m.vocabulary_hash = r.u64();
  if (expected_vocabulary_hash && *expected_vocabulary_hash != m.vocabulary_hash)
    throw Error(ErrorCode::VocabularyMismatch,
                "checkpoint vocabulary " + hex64(m.vocabulary_hash) + ", expected " + hex64(*expected_vocabulary_hash));
  const auto kind = r.u8();
  if (kind > 1) throw Error(ErrorCode::CorruptCheckpoint, "unknown model kind");
  m.kind = static_cast<PredictorKind>(kind);
  m.intention = r.u64();
  const std::size_t A = r.u64();
  auto& hp = m.hyperparameters;
  hp.epochs = r.u64();
  hp.batch_size = r.u64();
  hp.learning_rate = r.f64();
  hp.embed_dim = r.u64();
  hp.hidden_dim = r.u64();
  const auto opt = r.u8();
  if (opt > 1) throw Error(ErrorCode::CorruptCheckpoint, "unknown optimizer tag");
  hp.optimizer = static_cast<OptimizerKind>(opt);
  hp.seed = r.u64();
  hp.smoothing = r.f64();

  const auto count = r.u32();
  std::vector<detail::NamedTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    detail::NamedTensor nt;
    nt.name = std::string(r.bytes(r.u32()));
    const auto rank = r.u32();
    if (rank > 4) throw Error(ErrorCode::CorruptCheckpoint, "tensor rank too large");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      nt.dims.push_back(r.u64());
      n *= nt.dims.back();
    }
    if (n > r.remaining() / 8) throw Error(ErrorCode::CorruptCheckpoint, "tensor larger than payload");
    nt.values.resize(n);
    for (auto& v : nt.values) {
      v = r.f64();
      if (!std::isfinite(v)) throw Error(ErrorCode::CorruptCheckpoint, "non-finite parameter");
    }
    tensors.push_back(std::move(nt));
  }
  if (r.remaining() != 8) throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes after tensors");

  if (m.kind == PredictorKind::Recurrent) {
    RecurrentNet net({A, hp.embed_dim, hp.hidden_dim});
    const auto& layout = net.layout();
    if (tensors.size() != layout.size()) throw Error(ErrorCode::CorruptCheckpoint, "wrong tensor count");
    auto params = net.parameters();
    for (std::size_t k = 0; k < layout.size(); ++k) {
      if (tensors[k].name != layout[k].name || tensors[k].dims != layout[k].dims)
        throw Error(ErrorCode::CorruptCheckpoint, "unexpected tensor '" + tensors[k].name + "'");
      std::copy(tensors[k].values.begin(), tensors[k].values.end(), params.begin() + layout[k].offset);
    }
    m.body = std::move(net);
  } else {
    if (tensors.size() != 3 || tensors[0].name != "bigram.counts" || tensors[1].name != "bigram.context_totals" ||
        tensors[2].name != "bigram.unigram")
      throw Error(ErrorCode::CorruptCheckpoint, "unexpected bigram tensors");
    m.body = BigramModel::from_tables(A, hp.smoothing, std::move(tensors[0].values), std::move(tensors[1].values),
                                      std::move(tensors[2].values));
  }
  return m;
}

}  // namespace intentinf
