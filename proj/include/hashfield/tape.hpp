// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <thread>
#include <vector>

#include "hashfield/field.hpp"

namespace hashfield {

namespace detail {

// Runs fn(begin, end) over contiguous column ranges. Ranges are a fixed
// function of (n, threads), so results are reproducible per thread count.
template <class F>
void parallel_chunks(Eigen::Index n, int threads, F&& fn) {
  if (threads <= 1 || n < 2 * threads) {
    fn(Eigen::Index(0), n);
    return;
  }
  std::vector<std::thread> pool;
  const Eigen::Index chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const Eigen::Index b = std::min<Eigen::Index>(t * chunk, n);
    const Eigen::Index e = std::min<Eigen::Index>(b + chunk, n);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Record of one forward pass over a batch: interpolation stencils, hashed
// row indices, Gaussian pdf values and decoder activations, one column per
// point. Backward replays these stages in reverse and never re-hashes.
template <class S>
struct Tape {
  Eigen::Index points = 0;
  Eigen::MatrixX<S> positions;  // D x M
  Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic> corners;  // (L*V) x M
  Eigen::MatrixX<S> alphas;                                              // (L*V) x M
  Eigen::MatrixX<S> pdfs;            // (Llag*V*K) x M, Lagrangian levels stacked
  Eigen::MatrixX<S> code;            // (L*F) x M
  std::vector<Eigen::MatrixX<S>> hidden;  // per hidden layer, H x M, post-ReLU
  Eigen::MatrixX<S> output;               // out_dim x M
  std::vector<S> sigmas;                  // per level, frozen at record time
};

namespace detail {

template <class S>
void record_point(const FieldConfig& cfg, const ParameterStore<S>& store, Tape<S>& tape,
                  Eigen::Index i) {
  const int D = cfg.dim, F = cfg.feature_dim, K = cfg.gaussians_per_bucket;
  const int V = cfg.corner_count();
  const S* x = tape.positions.col(i).data();
  int corner[kMaxDim];
  int lag = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    const LevelLayout& lvl = store.layout.levels[l];
    const auto w = interp_weights(x, D, lvl.res);
    S* seg = tape.code.col(i).data() + std::int64_t(l) * F;
    for (int f = 0; f < F; ++f) seg[f] = S(0);
    for (int v = 0; v < V; ++v) {
      w.corner(v, D, corner);
      const std::uint32_t idx = vertex_index(lvl, D, {corner, size_t(D)});
      tape.corners(l * V + v, i) = idx;
      tape.alphas(l * V + v, i) = w.alpha[v];
      if (lvl.kind == LevelKind::Eulerian) {
        const S* row = store.values.data() + lvl.table + std::int64_t(idx) * F;
        for (int f = 0; f < F; ++f) seg[f] += w.alpha[v] * row[f];
      } else {
        const S sigma = tape.sigmas[l];
        const S* means = store.values.data() + lvl.means;
        const S* feats = store.values.data() + lvl.feats;
        for (int k = 0; k < K; ++k) {
          const std::int64_t entry = std::int64_t(idx) * K + k;
          const S pdf = gaussian_pdf(x, means + entry * D, D, sigma);
          tape.pdfs((lag * V + v) * K + k, i) = pdf;
          const S scale = w.alpha[v] * pdf;
          const S* f_k = feats + entry * F;
          for (int f = 0; f < F; ++f) seg[f] += scale * f_k[f];
        }
      }
    }
    if (lvl.kind == LevelKind::Lagrangian) ++lag;
  }

  // decoder
  const auto& mlp = store.layout.mlp;
  Eigen::Map<const Eigen::VectorX<S>> code(tape.code.col(i).data(), cfg.code_dim());
  for (size_t j = 0; j < mlp.size(); ++j) {
    const MlpLayer& lay = mlp[j];
    Eigen::Map<const Eigen::MatrixX<S>> W(store.values.data() + lay.weights, lay.out, lay.in);
    Eigen::Map<const Eigen::VectorX<S>> b(store.values.data() + lay.biases, lay.out);
    const bool last = j + 1 == mlp.size();
    auto in = j == 0 ? code : Eigen::Map<const Eigen::VectorX<S>>(tape.hidden[j - 1].col(i).data(),
                                                                  lay.in);
    if (last) {
      Eigen::Map<Eigen::VectorX<S>> out(tape.output.col(i).data(), lay.out);
      out.noalias() = W * in;
      out += b;
    } else {
      Eigen::Map<Eigen::VectorX<S>> h(tape.hidden[j].col(i).data(), lay.out);
      h.noalias() = W * in;
      h += b;
      h = h.cwiseMax(S(0));
    }
  }
}

}  // namespace detail

template <class S>
void forward_record(const FieldConfig& cfg, const ParameterStore<S>& store,
                    const std::vector<S>& sigmas, const Eigen::MatrixX<S>& positions,
                    Tape<S>& tape, int threads = 1) {
  const Eigen::Index m = positions.cols();
  const int V = cfg.corner_count();
  const int lag_levels = cfg.lagrangian_levels;
  tape.points = m;
  tape.positions = positions;
  tape.sigmas = sigmas;
  tape.corners.resize(cfg.levels * V, m);
  tape.alphas.resize(cfg.levels * V, m);
  tape.pdfs.resize(std::int64_t(lag_levels) * V * cfg.gaussians_per_bucket, m);
  tape.code.resize(cfg.code_dim(), m);
  tape.hidden.assign(store.layout.mlp.size() - 1, {});
  for (size_t j = 0; j + 1 < store.layout.mlp.size(); ++j)
    tape.hidden[j].resize(store.layout.mlp[j].out, m);
  tape.output.resize(cfg.output_dim, m);

  detail::parallel_chunks(m, threads, [&](Eigen::Index b, Eigen::Index e) {
    for (Eigen::Index i = b; i < e; ++i) detail::record_point(cfg, store, tape, i);
  });
}

namespace detail {

template <class S>
void backward_point(const FieldConfig& cfg, const ParameterStore<S>& store, const Tape<S>& tape,
                    const Eigen::MatrixX<S>& dout, Eigen::Index i, S* grads,
                    Eigen::VectorX<S>& dcode, Eigen::VectorX<S>& dvec, Eigen::VectorX<S>& dbuf) {
  const int D = cfg.dim, F = cfg.feature_dim, K = cfg.gaussians_per_bucket;
  const int V = cfg.corner_count();
  const auto& mlp = store.layout.mlp;

  // decoder backward: linear output, ReLU mask from stored activations
  dvec.head(cfg.output_dim) = dout.col(i);
  for (size_t jj = mlp.size(); jj-- > 0;) {
    const MlpLayer& lay = mlp[jj];
    Eigen::Map<const Eigen::MatrixX<S>> W(store.values.data() + lay.weights, lay.out, lay.in);
    auto in = jj == 0 ? Eigen::Map<const Eigen::VectorX<S>>(tape.code.col(i).data(), lay.in)
                      : Eigen::Map<const Eigen::VectorX<S>>(tape.hidden[jj - 1].col(i).data(),
                                                            lay.in);
    auto d = dvec.head(lay.out);
    Eigen::Map<Eigen::MatrixX<S>> dW(grads + lay.weights, lay.out, lay.in);
    Eigen::Map<Eigen::VectorX<S>> db(grads + lay.biases, lay.out);
    dW.noalias() += d * in.transpose();
    db += d;
    dbuf.head(lay.in).noalias() = W.transpose() * d;
    if (jj > 0) {
      dvec.head(lay.in) = dbuf.head(lay.in).cwiseProduct(
          (in.array() > S(0)).template cast<S>().matrix());
    } else {
      dcode = dbuf.head(lay.in);
    }
  }

  // encoding backward
  const S* x = tape.positions.col(i).data();
  int lag = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    const LevelLayout& lvl = store.layout.levels[l];
    const S* dseg = dcode.data() + std::int64_t(l) * F;
    if (lvl.kind == LevelKind::Eulerian) {
      for (int v = 0; v < V; ++v) {
        const S a = tape.alphas(l * V + v, i);
        S* row = grads + lvl.table + std::int64_t(tape.corners(l * V + v, i)) * F;
        for (int f = 0; f < F; ++f) row[f] += a * dseg[f];
      }
    } else {
      const S sigma = tape.sigmas[l];
      const S inv_s2 = S(1) / (sigma * sigma);
      const S* means = store.values.data() + lvl.means;
      const S* feats = store.values.data() + lvl.feats;
      for (int v = 0; v < V; ++v) {
        const S a = tape.alphas(l * V + v, i);
        const std::uint32_t bucket = tape.corners(l * V + v, i);
        for (int k = 0; k < K; ++k) {
          const std::int64_t entry = std::int64_t(bucket) * K + k;
          const S pdf = tape.pdfs((lag * V + v) * K + k, i);
          const S* f_k = feats + entry * F;
          S* df = grads + lvl.feats + entry * F;
          S dot = S(0);
          for (int f = 0; f < F; ++f) {
            df[f] += a * pdf * dseg[f];
            dot += dseg[f] * f_k[f];
          }
          // mean gradient flows through the exponent only; cut where clamped
          const S* mu = means + entry * D;
          S d2 = S(0);
          for (int c = 0; c < D; ++c) {
            const S dx = x[c] - mu[c];
            d2 += dx * dx;
          }
          if (-d2 * S(0.5) * inv_s2 > S(kExponentClamp)) {
            const S dpdf = a * dot * pdf * inv_s2;
            S* dmu = grads + lvl.means + entry * D;
            for (int c = 0; c < D; ++c) dmu[c] += dpdf * (x[c] - mu[c]);
          }
        }
      }
      ++lag;
    }
  }
}

}  // namespace detail

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output). The
// caller owns zeroing `grads`. With threads > 1 each chunk accumulates into
// its own buffer and buffers are reduced in chunk order.
template <class S>
void backward_field(const FieldConfig& cfg, const ParameterStore<S>& store, const Tape<S>& tape,
                    const Eigen::MatrixX<S>& dout, Eigen::VectorX<S>& grads, int threads = 1) {
  if (dout.rows() != cfg.output_dim || dout.cols() != tape.points)
    throw std::invalid_argument("backward_field: output gradient shape mismatch");
  if (grads.size() != store.layout.total)
    throw std::invalid_argument("backward_field: gradient accumulator length mismatch");

  int max_width = std::max(cfg.code_dim(), cfg.output_dim);
  for (const auto& lay : store.layout.mlp) max_width = std::max({max_width, lay.in, lay.out});

  if (threads <= 1 || tape.points < 2 * threads) {
    Eigen::VectorX<S> dcode(cfg.code_dim()), dvec(max_width), dbuf(max_width);
    for (Eigen::Index i = 0; i < tape.points; ++i)
      detail::backward_point(cfg, store, tape, dout, i, grads.data(), dcode, dvec, dbuf);
    return;
  }

  const Eigen::Index chunk = (tape.points + threads - 1) / threads;
  std::vector<Eigen::VectorX<S>> partial(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    const Eigen::Index b = std::min<Eigen::Index>(t * chunk, tape.points);
    const Eigen::Index e = std::min<Eigen::Index>(b + chunk, tape.points);
    if (b >= e) break;
    partial[t] = Eigen::VectorX<S>::Zero(store.layout.total);
    pool.emplace_back([&, t, b, e, max_width] {
      Eigen::VectorX<S> dcode(cfg.code_dim()), dvec(max_width), dbuf(max_width);
      for (Eigen::Index i = b; i < e; ++i)
        detail::backward_point(cfg, store, tape, dout, i, partial[t].data(), dcode, dvec, dbuf);
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& acc : partial)
    if (acc.size() > 0) grads += acc;
}

}  // namespace hashfield
