#pragma once

// Small attention-pooled encoder with an optional 2-way classifier head and
// an optional first-order greedy decoder. Dense math only; everything is
// templated on the scalar type so gradient checks can run in long double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sentilab/rng.hpp"

namespace sentilab::tinylm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct Dims {
  int vocab = 0;        // encoder input ids
  int embed = 32;       // d
  int hidden = 64;      // H
  int layers = 1;       // tanh MLP layers, residual after the first
  int decoder = 32;     // decoder state size
  int targets = 0;      // decoder output words (0 disables the decoder)
  bool classifier = false;
};

template <typename Scalar>
struct Params {
  Matrix<Scalar> embedding;  // vocab x d, one row per token
  Matrix<Scalar> query_w;    // d x d
  Vector<Scalar> query_b;
  std::vector<Matrix<Scalar>> layer_w;  // H x 2d, then H x H
  std::vector<Vector<Scalar>> layer_b;
  Matrix<Scalar> cls_w;  // 2 x H
  Vector<Scalar> cls_b;
  Matrix<Scalar> dec_w;    // S x H
  Matrix<Scalar> dec_emb;  // S x (targets + 1); last column is <bos>
  Vector<Scalar> dec_b;
  Matrix<Scalar> out_w;  // targets x S
  Vector<Scalar> out_b;

  static Params zeros(const Dims& d) {
    Params p;
    p.embedding = Matrix<Scalar>::Zero(d.vocab, d.embed);
    p.query_w = Matrix<Scalar>::Zero(d.embed, d.embed);
    p.query_b = Vector<Scalar>::Zero(d.embed);
    for (int l = 0; l < d.layers; ++l) {
      p.layer_w.push_back(Matrix<Scalar>::Zero(d.hidden, l == 0 ? 2 * d.embed : d.hidden));
      p.layer_b.push_back(Vector<Scalar>::Zero(d.hidden));
    }
    if (d.classifier) {
      p.cls_w = Matrix<Scalar>::Zero(2, d.hidden);
      p.cls_b = Vector<Scalar>::Zero(2);
    }
    if (d.targets > 0) {
      p.dec_w = Matrix<Scalar>::Zero(d.decoder, d.hidden);
      p.dec_emb = Matrix<Scalar>::Zero(d.decoder, d.targets + 1);
      p.dec_b = Vector<Scalar>::Zero(d.decoder);
      p.out_w = Matrix<Scalar>::Zero(d.targets, d.decoder);
      p.out_b = Vector<Scalar>::Zero(d.targets);
    }
    return p;
  }

  // Fixed tensor order shared by optimizers and serialization. The group is
  // the freezing depth: 0 embedding, 1 attention query, 2+l MLP layer l,
  // -1 heads.
  template <typename F>
  void for_each(F&& f) {
    f("embedding", 0, embedding);
    f("query_w", 1, query_w);
    f("query_b", 1, query_b);
    for (std::size_t l = 0; l < layer_w.size(); ++l) {
      f("layer" + std::to_string(l) + "_w", 2 + static_cast<int>(l), layer_w[l]);
      f("layer" + std::to_string(l) + "_b", 2 + static_cast<int>(l), layer_b[l]);
    }
    if (cls_w.size()) {
      f("cls_w", -1, cls_w);
      f("cls_b", -1, cls_b);
    }
    if (out_w.size()) {
      f("dec_w", -1, dec_w);
      f("dec_emb", -1, dec_emb);
      f("dec_b", -1, dec_b);
      f("out_w", -1, out_w);
      f("out_b", -1, out_b);
    }
  }

  std::size_t count() {
    std::size_t n = 0;
    for_each([&](const std::string&, int, auto& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
};

template <typename Scalar>
void init_params(Params<Scalar>& p, Rng& rng) {
  auto fill = [&](auto& m, double scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.normal() * scale);
  };
  fill(p.embedding, 0.3);
  fill(p.query_w, 1.0 / std::sqrt(static_cast<double>(p.query_w.cols())));
  for (auto& w : p.layer_w) fill(w, 1.0 / std::sqrt(static_cast<double>(w.cols())));
  if (p.cls_w.size()) fill(p.cls_w, 1.0 / std::sqrt(static_cast<double>(p.cls_w.cols())));
  if (p.out_w.size()) {
    fill(p.dec_w, 1.0 / std::sqrt(static_cast<double>(p.dec_w.cols())));
    fill(p.dec_emb, 0.5);
    fill(p.out_w, 1.0 / std::sqrt(static_cast<double>(p.out_w.cols())));
  }
}

template <typename Scalar>
void init_classifier(Params<Scalar>& p, int hidden, Rng& rng) {
  p.cls_w.resize(2, hidden);
  p.cls_b = Vector<Scalar>::Zero(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < p.cls_w.size(); ++i) p.cls_w.data()[i] = static_cast<Scalar>(rng.normal() * scale);
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& z) {
  Vector<Scalar> e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// Activations kept for the backward pass.
template <typename Scalar>
struct EncoderTrace {
  std::vector<int> tokens;
  Matrix<Scalar> x;  // T x d gathered embeddings
  Vector<Scalar> context, query, attention, pooled, input;
  std::vector<Vector<Scalar>> hidden;  // h_1 .. h_L
  std::vector<Vector<Scalar>> branch;  // tanh outputs of residual layers

  const Vector<Scalar>& output() const { return hidden.back(); }
};

template <typename Scalar>
EncoderTrace<Scalar> encode(const Params<Scalar>& p, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode: empty token sequence");
  EncoderTrace<Scalar> t;
  t.tokens.assign(tokens.begin(), tokens.end());
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = p.embedding.cols();
  t.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) t.x.row(i) = p.embedding.row(tokens[static_cast<std::size_t>(i)]);
  t.context = t.x.colwise().mean().transpose();
  t.query = p.query_w * t.context + p.query_b;
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  t.attention = softmax<Scalar>((t.x * t.query) * inv_sqrt_d);
  t.pooled = t.x.transpose() * t.attention;
  t.input.resize(2 * d);
  t.input << t.pooled, t.context;
  t.hidden.push_back((p.layer_w[0] * t.input + p.layer_b[0]).array().tanh().matrix());
  for (std::size_t l = 1; l < p.layer_w.size(); ++l) {
    Vector<Scalar> br = (p.layer_w[l] * t.hidden.back() + p.layer_b[l]).array().tanh().matrix();
    t.hidden.push_back(t.hidden.back() + br);
    t.branch.push_back(std::move(br));
  }
  return t;
}

// Accumulates encoder gradients for d(loss)/d(output) into `g`.
template <typename Scalar>
void encode_backward(const Params<Scalar>& p, const EncoderTrace<Scalar>& t, Vector<Scalar> dh, Params<Scalar>& g) {
  for (std::size_t l = p.layer_w.size(); l-- > 1;) {
    const auto& br = t.branch[l - 1];
    Vector<Scalar> gz = (dh.array() * (Scalar(1) - br.array().square())).matrix();
    g.layer_w[l].noalias() += gz * t.hidden[l - 1].transpose();
    g.layer_b[l] += gz;
    dh.noalias() += p.layer_w[l].transpose() * gz;
  }
  const auto& h1 = t.hidden[0];
  Vector<Scalar> gz = (dh.array() * (Scalar(1) - h1.array().square())).matrix();
  g.layer_w[0].noalias() += gz * t.input.transpose();
  g.layer_b[0] += gz;
  Vector<Scalar> du = p.layer_w[0].transpose() * gz;

  const Eigen::Index d = p.embedding.cols();
  const auto n = t.x.rows();
  const Vector<Scalar> dpooled = du.head(d);
  Vector<Scalar> dcontext = du.tail(d);
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  Matrix<Scalar> dx = t.attention * dpooled.transpose();
  const Vector<Scalar> da = t.x * dpooled;
  const Scalar mix = t.attention.dot(da);
  const Vector<Scalar> ds = (t.attention.array() * (da.array() - mix)).matrix();
  dx.noalias() += (ds * t.query.transpose()) * inv_sqrt_d;
  const Vector<Scalar> dq = (t.x.transpose() * ds) * inv_sqrt_d;
  g.query_w.noalias() += dq * t.context.transpose();
  g.query_b += dq;
  dcontext.noalias() += p.query_w.transpose() * dq;
  dx.rowwise() += (dcontext / static_cast<Scalar>(n)).transpose();
  for (Eigen::Index i = 0; i < n; ++i) g.embedding.row(t.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
}

// Positive-class probability from the 2-way head.
template <typename Scalar>
Scalar classify(const Params<Scalar>& p, const Vector<Scalar>& h) {
  const Vector<Scalar> probs = softmax<Scalar>(p.cls_w * h + p.cls_b);
  return probs(1);
}

// Binary cross-entropy of one example with positive probability clamped to
// [eps, 1-eps]; accumulates head gradients and returns d(loss)/dh.
template <typename Scalar>
Vector<Scalar> classifier_backward(const Params<Scalar>& p, const Vector<Scalar>& h, int target, Params<Scalar>& g,
                                   Scalar* loss, Scalar eps) {
  const Vector<Scalar> probs = softmax<Scalar>(p.cls_w * h + p.cls_b);
  Scalar pos = std::clamp(probs(1), eps, Scalar(1) - eps);
  *loss = target == 1 ? -std::log(pos) : -std::log(Scalar(1) - pos);
  Vector<Scalar> dz = probs;
  dz(target) -= Scalar(1);
  g.cls_w.noalias() += dz * h.transpose();
  g.cls_b += dz;
  return p.cls_w.transpose() * dz;
}

// Token-level cross-entropy of a target word sequence (already ending in
// <eos>) under teacher forcing; returns summed loss and accumulates
// gradients, returning d(loss)/dh.
template <typename Scalar>
Vector<Scalar> decoder_backward(const Params<Scalar>& p, const Vector<Scalar>& h, std::span<const int> targets,
                                Params<Scalar>& g, Scalar* loss) {
  const int bos = static_cast<int>(p.out_w.rows());
  const Vector<Scalar> base = p.dec_w * h + p.dec_b;
  Vector<Scalar> dbase = Vector<Scalar>::Zero(base.size());
  Scalar total = 0;
  int prev = bos;
  for (int y : targets) {
    const Vector<Scalar> s = (base + p.dec_emb.col(prev)).array().tanh().matrix();
    const Vector<Scalar> probs = softmax<Scalar>(p.out_w * s + p.out_b);
    total -= std::log(std::max(probs(y), Scalar(1e-300)));
    Vector<Scalar> dz = probs;
    dz(y) -= Scalar(1);
    g.out_w.noalias() += dz * s.transpose();
    g.out_b += dz;
    const Vector<Scalar> gs = ((p.out_w.transpose() * dz).array() * (Scalar(1) - s.array().square())).matrix();
    g.dec_emb.col(prev) += gs;
    dbase += gs;
    prev = y;
  }
  g.dec_w.noalias() += dbase * h.transpose();
  g.dec_b += dbase;
  *loss = total;
  return p.dec_w.transpose() * dbase;
}

template <typename Scalar>
Scalar decoder_loss(const Params<Scalar>& p, const Vector<Scalar>& h, std::span<const int> targets) {
  const int bos = static_cast<int>(p.out_w.rows());
  const Vector<Scalar> base = p.dec_w * h + p.dec_b;
  Scalar total = 0;
  int prev = bos;
  for (int y : targets) {
    const Vector<Scalar> s = (base + p.dec_emb.col(prev)).array().tanh().matrix();
    total -= std::log(std::max(softmax<Scalar>(p.out_w * s + p.out_b)(y), Scalar(1e-300)));
    prev = y;
  }
  return total;
}

struct Decoded {
  std::vector<int> words;
  double first_step_positive = -1.0;  // filled when both ids are given
};

template <typename Scalar>
Decoded greedy_decode(const Params<Scalar>& p, const Vector<Scalar>& h, int eos, int max_steps, int positive_id = -1,
                      int negative_id = -1) {
  Decoded out;
  const int bos = static_cast<int>(p.out_w.rows());
  const Vector<Scalar> base = p.dec_w * h + p.dec_b;
  int prev = bos;
  for (int step = 0; step < max_steps; ++step) {
    const Vector<Scalar> s = (base + p.dec_emb.col(prev)).array().tanh().matrix();
    const Vector<Scalar> probs = softmax<Scalar>(p.out_w * s + p.out_b);
    if (step == 0 && positive_id >= 0 && negative_id >= 0) {
      const double a = static_cast<double>(probs(positive_id));
      const double b = static_cast<double>(probs(negative_id));
      out.first_step_positive = a + b > 0 ? a / (a + b) : 0.5;
    }
    Eigen::Index best = 0;
    probs.maxCoeff(&best);
    if (static_cast<int>(best) == eos) break;
    out.words.push_back(static_cast<int>(best));
    prev = static_cast<int>(best);
  }
  return out;
}

// Adam with bias correction. Tensors in groups below `frozen_groups` are
// left untouched; heads (group -1) always train.
template <typename Scalar>
class Adam {
 public:
  Adam(Params<Scalar>& params, double lr, int frozen_groups, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), frozen_(frozen_groups) {
    params.for_each([&](const std::string&, int, auto& m) {
      m1_.push_back(Matrix<Scalar>::Zero(m.rows(), m.cols()));
      m2_.push_back(Matrix<Scalar>::Zero(m.rows(), m.cols()));
    });
  }

  // `grads` must have the same layout; it is scaled by `scale` first.
  void step(Params<Scalar>& params, Params<Scalar>& grads, Scalar scale) {
    ++t_;
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(beta1_, t_));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(beta2_, t_));
    std::vector<Scalar*> gdata;
    std::vector<Eigen::Index> gsize;
    grads.for_each([&](const std::string&, int, auto& m) {
      gdata.push_back(m.data());
      gsize.push_back(m.size());
    });
    std::size_t k = 0;
    params.for_each([&](const std::string&, int group, auto& m) {
      const std::size_t idx = k++;
      if (group >= 0 && group < frozen_) return;
      Scalar* w = m.data();
      const Scalar* gr = gdata[idx];
      Scalar* a = m1_[idx].data();
      Scalar* b = m2_[idx].data();
      const auto b1 = static_cast<Scalar>(beta1_);
      const auto b2 = static_cast<Scalar>(beta2_);
      const auto lr = static_cast<Scalar>(lr_);
      const auto ep = static_cast<Scalar>(eps_);
      for (Eigen::Index i = 0; i < gsize[idx]; ++i) {
        const Scalar gi = gr[i] * scale;
        if (gi == Scalar(0) && a[i] == Scalar(0) && b[i] == Scalar(0)) continue;
        a[i] = b1 * a[i] + (Scalar(1) - b1) * gi;
        b[i] = b2 * b[i] + (Scalar(1) - b2) * gi * gi;
        w[i] -= lr * (a[i] / c1) / (std::sqrt(b[i] / c2) + ep);
      }
    });
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int frozen_;
  long t_ = 0;
  std::vector<Matrix<Scalar>> m1_, m2_;
};

template <typename Scalar>
void set_zero(Params<Scalar>& g) {
  g.for_each([](const std::string&, int, auto& m) { m.setZero(); });
}

}  // namespace sentilab::tinylm
