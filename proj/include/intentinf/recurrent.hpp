#pragma once

// Next-action classifier: embedding -> single GRU layer -> two affine layers
// (tanh between them) -> softmax over the action vocabulary with PAD masked.
// Parameters live in one flat vector so optimizers and the finite-difference
// check can address every coordinate uniformly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "intentinf/corpus.hpp"
#include "intentinf/error.hpp"

namespace intentinf {

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> dims;
  std::size_t offset = 0;
  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

struct RecurrentShape {
  std::size_t vocab = 0;
  std::size_t embed = 0;
  std::size_t hidden = 0;
  friend bool operator==(const RecurrentShape&, const RecurrentShape&) = default;
};

namespace detail {

// out += W x, W is rows x cols row-major.
inline void gemv_acc(const double* W, const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = W + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += w[c] * x[c];
    out[r] += s;
  }
}

// out += W^T y.
inline void gemv_t_acc(const double* W, const double* y, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = W + r * cols;
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += w[c] * yr;
  }
}

// G += y x^T.
inline void outer_acc(double* G, const double* y, const double* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* g = G + r * cols;
    for (std::size_t c = 0; c < cols; ++c) g[c] += yr * x[c];
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Softmax over every index except PAD; PAD gets exactly 0.
inline void masked_softmax(std::span<const double> logits, std::span<double> probs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < logits.size(); ++a)
    if (a != kPad) mx = std::max(mx, logits[a]);
  double sum = 0.0;
  for (std::size_t a = 0; a < logits.size(); ++a) {
    probs[a] = a == kPad ? 0.0 : std::exp(logits[a] - mx);
    sum += probs[a];
  }
  for (auto& p : probs) p /= sum;
}

}  // namespace detail

class RecurrentNet {
 public:
  RecurrentNet() = default;

  explicit RecurrentNet(RecurrentShape shape) : shape_(shape) {
    if (shape.vocab < 3 || shape.embed < 1 || shape.hidden < 1)
      throw Error(ErrorCode::InvalidHyperparameters, "recurrent shape needs vocab >= 3, embed >= 1, hidden >= 1");
    layout_ = make_layout(shape);
    params_.assign(layout_.back().offset + layout_.back().size(), 0.0);
    index_offsets();
  }

  /// Weights ~ U(-scale, scale), biases zero.
  void initialize(std::uint64_t seed, double scale = 0.08) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (const auto& t : layout_) {
      const bool bias = t.dims.size() == 1;
      for (std::size_t k = 0; k < t.size(); ++k) params_[t.offset + k] = bias ? 0.0 : u(rng);
    }
  }

  static std::vector<TensorInfo> make_layout(RecurrentShape s) {
    const std::size_t A = s.vocab, d = s.embed, h = s.hidden;
    std::vector<TensorInfo> l = {
        {"embedding", {A, d}},
        {"gru.w_z", {h, d}}, {"gru.u_z", {h, h}}, {"gru.b_z", {h}},
        {"gru.w_r", {h, d}}, {"gru.u_r", {h, h}}, {"gru.b_r", {h}},
        {"gru.w_n", {h, d}}, {"gru.u_n", {h, h}}, {"gru.b_n", {h}},
        {"head.w1", {h, h}}, {"head.b1", {h}},
        {"head.w2", {A, h}}, {"head.b2", {A}},
    };
    std::size_t off = 0;
    for (auto& t : l) {
      t.offset = off;
      off += t.size();
    }
    return l;
  }

  const RecurrentShape& shape() const noexcept { return shape_; }
  const std::vector<TensorInfo>& layout() const noexcept { return layout_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  /// Next-action distribution after reading `prefix`.
  std::vector<double> predict(std::span<const ActionIndex> prefix) const {
    if (prefix.empty()) throw Error(ErrorCode::EmptyPrefix, "predict needs at least one action");
    std::vector<double> h(shape_.hidden, 0.0), scratch;
    for (auto a : prefix) step(a, h, scratch);
    return head(h);
  }

  /// Distributions after each prefix seq[0..k), k = 1..|seq|-1, from a single
  /// pass. Identical arithmetic to calling predict() per prefix.
  std::vector<std::vector<double>> predict_prefixes(std::span<const ActionIndex> seq) const {
    std::vector<std::vector<double>> out;
    if (seq.size() < 2) return out;
    std::vector<double> h(shape_.hidden, 0.0), scratch;
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
      step(seq[k], h, scratch);
      out.push_back(head(h));
    }
    return out;
  }

  /// Mean cross-entropy over `batch`; if `grad` is non-null it is resized and
  /// overwritten with the gradient of that mean.
  double loss_and_gradient(std::span<const TrainingPair> batch, std::vector<double>* grad) const {
    if (grad) grad->assign(params_.size(), 0.0);
    double total = 0.0;
    Workspace ws(shape_);
    for (const auto& pair : batch) total += accumulate_pair(pair, grad ? grad->data() : nullptr, ws);
    const double inv = 1.0 / static_cast<double>(batch.size());
    if (grad)
      for (auto& g : *grad) g *= inv;
    return total * inv;
  }

  friend bool operator==(const RecurrentNet& a, const RecurrentNet& b) {
    return a.shape_ == b.shape_ && a.params_ == b.params_;
  }

 private:
  struct Offsets {
    std::size_t E, Wz, Uz, bz, Wr, Ur, br, Wn, Un, bn, W1, b1, W2, b2;
  };

  struct Workspace {
    explicit Workspace(const RecurrentShape& s)
        : logits(s.vocab), probs(s.vocab), u1(s.hidden), dpre1(s.hidden), dh(s.hidden), dh_prev(s.hidden),
          dx(s.embed), dz(s.hidden), dr(s.hidden), dn(s.hidden), drh(s.hidden), rh(s.hidden) {}
    std::vector<double> logits, probs, u1, dpre1, dh, dh_prev, dx, dz, dr, dn, drh, rh;
    // Per time step: h_prev, z, r, n.
    std::vector<double> tape;
  };

  void index_offsets() {
    auto o = [&](std::size_t i) { return layout_[i].offset; };
    off_ = {o(0), o(1), o(2), o(3), o(4), o(5), o(6), o(7), o(8), o(9), o(10), o(11), o(12), o(13)};
  }

  const double* p(std::size_t off) const { return params_.data() + off; }

  // Advances h by one GRU step on action a.
  //   z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br)
  //   n = tanh(Wn x + Un (r*h) + bn), h' = (1-z)*n + z*h
  void step(ActionIndex a, std::vector<double>& h, std::vector<double>& scratch,
            double* tape_out = nullptr) const {
    const std::size_t d = shape_.embed, H = shape_.hidden;
    const double* x = p(off_.E) + a * d;
    scratch.assign(4 * H, 0.0);
    double* z = scratch.data();
    double* r = z + H;
    double* n = r + H;
    double* rh = n + H;
    for (std::size_t j = 0; j < H; ++j) {
      z[j] = p(off_.bz)[j];
      r[j] = p(off_.br)[j];
      n[j] = p(off_.bn)[j];
    }
    detail::gemv_acc(p(off_.Wz), x, z, H, d);
    detail::gemv_acc(p(off_.Uz), h.data(), z, H, H);
    detail::gemv_acc(p(off_.Wr), x, r, H, d);
    detail::gemv_acc(p(off_.Ur), h.data(), r, H, H);
    for (std::size_t j = 0; j < H; ++j) {
      z[j] = detail::sigmoid(z[j]);
      r[j] = detail::sigmoid(r[j]);
      rh[j] = r[j] * h[j];
    }
    detail::gemv_acc(p(off_.Wn), x, n, H, d);
    detail::gemv_acc(p(off_.Un), rh, n, H, H);
    if (tape_out) {
      for (std::size_t j = 0; j < H; ++j) {
        tape_out[j] = h[j];
        tape_out[H + j] = z[j];
        tape_out[2 * H + j] = r[j];
      }
    }
    for (std::size_t j = 0; j < H; ++j) {
      n[j] = std::tanh(n[j]);
      h[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
    }
    if (tape_out)
      for (std::size_t j = 0; j < H; ++j) tape_out[3 * H + j] = n[j];
  }

  void head_logits(const std::vector<double>& h, double* u1, double* logits) const {
    const std::size_t H = shape_.hidden, A = shape_.vocab;
    for (std::size_t j = 0; j < H; ++j) u1[j] = p(off_.b1)[j];
    detail::gemv_acc(p(off_.W1), h.data(), u1, H, H);
    for (std::size_t j = 0; j < H; ++j) u1[j] = std::tanh(u1[j]);
    for (std::size_t a = 0; a < A; ++a) logits[a] = p(off_.b2)[a];
    detail::gemv_acc(p(off_.W2), u1, logits, A, H);
  }

  std::vector<double> head(const std::vector<double>& h) const {
    std::vector<double> u1(shape_.hidden), logits(shape_.vocab), probs(shape_.vocab);
    head_logits(h, u1.data(), logits.data());
    detail::masked_softmax(logits, probs);
    return probs;
  }

  double accumulate_pair(const TrainingPair& pair, double* g, Workspace& ws) const {
    const std::size_t d = shape_.embed, H = shape_.hidden, A = shape_.vocab;
    const std::size_t T = pair.prefix.size();
    ws.tape.assign(T * 4 * H, 0.0);
    std::vector<double> h(H, 0.0), scratch;
    for (std::size_t t = 0; t < T; ++t) step(pair.prefix[t], h, scratch, ws.tape.data() + t * 4 * H);

    head_logits(h, ws.u1.data(), ws.logits.data());
    detail::masked_softmax(ws.logits, ws.probs);
    const double loss = -std::log(ws.probs[pair.target]);
    if (!g) return loss;

    // Head.
    ws.probs[pair.target] -= 1.0;  // dlogits (PAD stays 0)
    const double* dlog = ws.probs.data();
    for (std::size_t a = 0; a < A; ++a) g[off_.b2 + a] += dlog[a];
    detail::outer_acc(g + off_.W2, dlog, ws.u1.data(), A, H);
    std::fill(ws.dpre1.begin(), ws.dpre1.end(), 0.0);
    detail::gemv_t_acc(p(off_.W2), dlog, ws.dpre1.data(), A, H);
    for (std::size_t j = 0; j < H; ++j) ws.dpre1[j] *= 1.0 - ws.u1[j] * ws.u1[j];
    for (std::size_t j = 0; j < H; ++j) g[off_.b1 + j] += ws.dpre1[j];
    detail::outer_acc(g + off_.W1, ws.dpre1.data(), h.data(), H, H);
    std::fill(ws.dh.begin(), ws.dh.end(), 0.0);
    detail::gemv_t_acc(p(off_.W1), ws.dpre1.data(), ws.dh.data(), H, H);

    // Backprop through time.
    for (std::size_t t = T; t-- > 0;) {
      const double* tp = ws.tape.data() + t * 4 * H;
      const double* hp = tp;
      const double* z = tp + H;
      const double* r = tp + 2 * H;
      const double* n = tp + 3 * H;
      const double* x = p(off_.E) + pair.prefix[t] * d;

      for (std::size_t j = 0; j < H; ++j) {
        ws.dh_prev[j] = ws.dh[j] * z[j];
        ws.dn[j] = ws.dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
        ws.dz[j] = ws.dh[j] * (hp[j] - n[j]) * z[j] * (1.0 - z[j]);
        ws.rh[j] = r[j] * hp[j];
      }
      std::fill(ws.dx.begin(), ws.dx.end(), 0.0);
      std::fill(ws.drh.begin(), ws.drh.end(), 0.0);

      for (std::size_t j = 0; j < H; ++j) g[off_.bn + j] += ws.dn[j];
      detail::outer_acc(g + off_.Wn, ws.dn.data(), x, H, d);
      detail::outer_acc(g + off_.Un, ws.dn.data(), ws.rh.data(), H, H);
      detail::gemv_t_acc(p(off_.Wn), ws.dn.data(), ws.dx.data(), H, d);
      detail::gemv_t_acc(p(off_.Un), ws.dn.data(), ws.drh.data(), H, H);

      for (std::size_t j = 0; j < H; ++j) {
        ws.dr[j] = ws.drh[j] * hp[j] * r[j] * (1.0 - r[j]);
        ws.dh_prev[j] += ws.drh[j] * r[j];
      }

      for (std::size_t j = 0; j < H; ++j) {
        g[off_.bz + j] += ws.dz[j];
        g[off_.br + j] += ws.dr[j];
      }
      detail::outer_acc(g + off_.Wz, ws.dz.data(), x, H, d);
      detail::outer_acc(g + off_.Uz, ws.dz.data(), hp, H, H);
      detail::outer_acc(g + off_.Wr, ws.dr.data(), x, H, d);
      detail::outer_acc(g + off_.Ur, ws.dr.data(), hp, H, H);
      detail::gemv_t_acc(p(off_.Wz), ws.dz.data(), ws.dx.data(), H, d);
      detail::gemv_t_acc(p(off_.Wr), ws.dr.data(), ws.dx.data(), H, d);
      detail::gemv_t_acc(p(off_.Uz), ws.dz.data(), ws.dh_prev.data(), H, H);
      detail::gemv_t_acc(p(off_.Ur), ws.dr.data(), ws.dh_prev.data(), H, H);

      double* gE = g + off_.E + pair.prefix[t] * d;
      for (std::size_t c = 0; c < d; ++c) gE[c] += ws.dx[c];
      std::swap(ws.dh, ws.dh_prev);
    }
    return loss;
  }

  RecurrentShape shape_;
  std::vector<TensorInfo> layout_;
  std::vector<double> params_;
  Offsets off_{};
};

}  // namespace intentinf
