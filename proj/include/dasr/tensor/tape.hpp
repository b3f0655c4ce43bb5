#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dasr/tensor/tensor.hpp"

namespace dasr {

enum class Padding { Zero, Reflect };

/// Define-by-run reverse-mode tape. Operations append nodes in execution
/// order, which is a valid topological order, so backward() is a single
/// reverse sweep that visits each node at most once. Values are immutable
/// once written by their producing operation.
///
/// Nodes whose inputs all have requires_grad == false record no backward
/// closure; a forward pass through frozen parameters (momentum encoder, queue
/// entries) therefore costs nothing at backward time.
class Tape {
 public:
  using Id = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Id leaf(Tensor v, bool requires_grad = false) {
    return push(std::move(v), requires_grad, nullptr);
  }

  Id constant(Tensor v) { return leaf(std::move(v), false); }

  const Tensor& val(Id id) const { return nodes_[id].value; }

  /// Gradient of the last backward() target w.r.t. node `id`; zeros if the
  /// node was not reached.
  Tensor grad(Id id) const {
    const Node& n = nodes_[id];
    if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
  }

  size_t size() const { return nodes_.size(); }

  // -- elementwise -----------------------------------------------------------

  Id add(Id a, Id b) {
    check_same_shape(val(a), val(b), "add");
    Tensor out = val(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += val(b)[i];
    return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor& g, Id) {
      accumulate(a, g);
      accumulate(b, g);
    });
  }

  Id sub(Id a, Id b) {
    check_same_shape(val(a), val(b), "sub");
    Tensor out = val(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= val(b)[i];
    return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor& g, Id) {
      accumulate(a, g);
      if (needs(b)) {
        Tensor ng = g;
        for (double& v : ng.data) v = -v;
        accumulate(b, ng);
      }
    });
  }

  Id mul(Id a, Id b) {
    check_same_shape(val(a), val(b), "mul");
    Tensor out = val(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= val(b)[i];
    return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor& g, Id) {
      if (needs(a)) {
        Tensor ga = g;
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= val(b)[i];
        accumulate(a, ga);
      }
      if (needs(b)) {
        Tensor gb = g;
        for (int64_t i = 0; i < gb.numel(); ++i) gb[i] *= val(a)[i];
        accumulate(b, gb);
      }
    });
  }

  Id scale(Id a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    return push(std::move(out), needs(a), [this, a, c](const Tensor& g, Id) {
      Tensor ga = g;
      for (double& v : ga.data) v *= c;
      accumulate(a, ga);
    });
  }

  Id leaky_relu(Id x, double slope = 0.1) {
    Tensor out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : slope * v;
    return push(std::move(out), needs(x), [this, x, slope](const Tensor& g, Id) {
      Tensor gx = g;
      const Tensor& in = val(x);
      for (int64_t i = 0; i < gx.numel(); ++i) gx[i] *= in[i] > 0.0 ? 1.0 : slope;
      accumulate(x, gx);
    });
  }

  Id sigmoid(Id x) {
    Tensor out = val(x);
    for (double& v : out.data) {
      if (v >= 0.0) {
        v = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        v = e / (1.0 + e);
      }
    }
    return push(std::move(out), needs(x), [this, x](const Tensor& g, Id self) {
      Tensor gx = g;
      const Tensor& y = val(self);
      for (int64_t i = 0; i < gx.numel(); ++i) gx[i] *= y[i] * (1.0 - y[i]);
      accumulate(x, gx);
    });
  }

  // -- shape ------------------------------------------------------------------

  Id reshape(Id x, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != val(x).numel())
      throw DimensionError("reshape: element count mismatch");
    Tensor out(std::move(shape), val(x).data);
    return push(std::move(out), needs(x), [this, x](const Tensor& g, Id) {
      Tensor gx(val(x).shape, g.data);
      accumulate(x, gx);
    });
  }

  /// [N,A],[N,B] -> [N,A+B]
  Id concat_cols(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
      throw DimensionError("concat_cols: need [N,A] and [N,B]");
    const int n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
    Tensor out({n, ca + cb});
    for (int r = 0; r < n; ++r) {
      for (int i = 0; i < ca; ++i) out.at2(r, i) = ta.at2(r, i);
      for (int i = 0; i < cb; ++i) out.at2(r, ca + i) = tb.at2(r, i);
    }
    return push(std::move(out), needs(a) || needs(b),
                [this, a, b, n, ca, cb](const Tensor& g, Id) {
                  if (needs(a)) {
                    Tensor ga({n, ca});
                    for (int r = 0; r < n; ++r)
                      for (int i = 0; i < ca; ++i) ga.at2(r, i) = g.at2(r, i);
                    accumulate(a, ga);
                  }
                  if (needs(b)) {
                    Tensor gb({n, cb});
                    for (int r = 0; r < n; ++r)
                      for (int i = 0; i < cb; ++i) gb.at2(r, i) = g.at2(r, ca + i);
                    accumulate(b, gb);
                  }
                });
  }

  /// [N,C1,H,W],[N,C2,H,W] -> [N,C1+C2,H,W]
  Id concat_channels(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 4 || tb.rank() != 4 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) ||
        ta.dim(3) != tb.dim(3))
      throw DimensionError("concat_channels: incompatible shapes");
    const int n = ta.dim(0), c1 = ta.dim(1), c2 = tb.dim(1), h = ta.dim(2), w = ta.dim(3);
    Tensor out({n, c1 + c2, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int i = 0; i < n; ++i) {
      std::copy_n(ta.data.begin() + i * c1 * plane, c1 * plane,
                  out.data.begin() + i * (c1 + c2) * plane);
      std::copy_n(tb.data.begin() + i * c2 * plane, c2 * plane,
                  out.data.begin() + i * (c1 + c2) * plane + c1 * plane);
    }
    return push(std::move(out), needs(a) || needs(b),
                [this, a, b, n, c1, c2, plane](const Tensor& g, Id) {
                  if (needs(a)) {
                    Tensor ga(val(a).shape);
                    for (int i = 0; i < n; ++i)
                      std::copy_n(g.data.begin() + i * (c1 + c2) * plane, c1 * plane,
                                  ga.data.begin() + i * c1 * plane);
                    accumulate(a, ga);
                  }
                  if (needs(b)) {
                    Tensor gb(val(b).shape);
                    for (int i = 0; i < n; ++i)
                      std::copy_n(g.data.begin() + i * (c1 + c2) * plane + c1 * plane, c2 * plane,
                                  gb.data.begin() + i * c2 * plane);
                    accumulate(b, gb);
                  }
                });
  }

  // -- linear algebra ---------------------------------------------------------

  /// [M,K] x [K,N] -> [M,N]
  Id matmul(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
      throw DimensionError("matmul: incompatible shapes");
    const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const double av = ta.at2(i, p);
        if (av == 0.0) continue;
        for (int j = 0; j < n; ++j) out.at2(i, j) += av * tb.at2(p, j);
      }
    return push(std::move(out), needs(a) || needs(b),
                [this, a, b, m, k, n](const Tensor& g, Id) {
                  if (needs(a)) {
                    Tensor ga({m, k});
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < n; ++j) {
                        const double gv = g.at2(i, j);
                        for (int p = 0; p < k; ++p) ga.at2(i, p) += gv * val(b).at2(p, j);
                      }
                    accumulate(a, ga);
                  }
                  if (needs(b)) {
                    Tensor gb({k, n});
                    for (int i = 0; i < m; ++i)
                      for (int p = 0; p < k; ++p) {
                        const double av = val(a).at2(i, p);
                        if (av == 0.0) continue;
                        for (int j = 0; j < n; ++j) gb.at2(p, j) += av * g.at2(i, j);
                      }
                    accumulate(b, gb);
                  }
                });
  }

  /// Row-wise dot product: [N,D],[N,D] -> [N,1]
  Id rowwise_dot(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_same_shape(ta, tb, "rowwise_dot");
    if (ta.rank() != 2) throw DimensionError("rowwise_dot: need [N,D]");
    const int n = ta.dim(0), d = ta.dim(1);
    Tensor out({n, 1});
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += ta.at2(i, j) * tb.at2(i, j);
      out[i] = acc;
    }
    return push(std::move(out), needs(a) || needs(b), [this, a, b, n, d](const Tensor& g, Id) {
      if (needs(a)) {
        Tensor ga({n, d});
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) ga.at2(i, j) = g[i] * val(b).at2(i, j);
        accumulate(a, ga);
      }
      if (needs(b)) {
        Tensor gb({n, d});
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb.at2(i, j) = g[i] * val(a).at2(i, j);
        accumulate(b, gb);
      }
    });
  }

  /// Affine map: x [N,Din], w [Dout,Din], b [Dout] -> [N,Dout]
  Id dense(Id x, Id w, Id b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1 || tx.dim(1) != tw.dim(1) ||
        tw.dim(0) != tb.dim(0))
      throw DimensionError("dense: incompatible shapes");
    const int n = tx.dim(0), din = tx.dim(1), dout = tw.dim(0);
    Tensor out({n, dout});
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < dout; ++o) {
        double acc = tb[o];
        const double* xr = tx.data.data() + static_cast<size_t>(i) * din;
        const double* wr = tw.data.data() + static_cast<size_t>(o) * din;
        for (int j = 0; j < din; ++j) acc += xr[j] * wr[j];
        out.at2(i, o) = acc;
      }
    return push(std::move(out), needs(x) || needs(w) || needs(b),
                [this, x, w, b, n, din, dout](const Tensor& g, Id) {
                  if (needs(x)) {
                    Tensor gx({n, din});
                    for (int i = 0; i < n; ++i)
                      for (int o = 0; o < dout; ++o) {
                        const double gv = g.at2(i, o);
                        if (gv == 0.0) continue;
                        for (int j = 0; j < din; ++j) gx.at2(i, j) += gv * val(w).at2(o, j);
                      }
                    accumulate(x, gx);
                  }
                  if (needs(w)) {
                    Tensor gw({dout, din});
                    for (int i = 0; i < n; ++i)
                      for (int o = 0; o < dout; ++o) {
                        const double gv = g.at2(i, o);
                        if (gv == 0.0) continue;
                        for (int j = 0; j < din; ++j) gw.at2(o, j) += gv * val(x).at2(i, j);
                      }
                    accumulate(w, gw);
                  }
                  if (needs(b)) {
                    Tensor gb({dout});
                    for (int i = 0; i < n; ++i)
                      for (int o = 0; o < dout; ++o) gb[o] += g.at2(i, o);
                    accumulate(b, gb);
                  }
                });
  }

  // -- convolution ------------------------------------------------------------

  /// Cross-correlation with same padding: x [N,Cin,H,W], w [Cout,Cin,kh,kw]
  /// (kh, kw odd), bias [Cout]. Output spatial size is ceil(H/stride).
  Id conv2d(Id x, Id w, Id b, int stride = 1, Padding pad = Padding::Zero) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    if (tx.rank() != 4 || tw.rank() != 4 || tb.rank() != 1)
      throw DimensionError("conv2d: need x[N,C,H,W], w[Co,Ci,kh,kw], b[Co]");
    if (tx.dim(1) != tw.dim(1) || tw.dim(0) != tb.dim(0))
      throw DimensionError("conv2d: channel mismatch");
    if (tw.dim(2) % 2 == 0 || tw.dim(3) % 2 == 0)
      throw DimensionError("conv2d: kernel extents must be odd");
    if (stride != 1 && stride != 2) throw ParamError("conv2d: stride must be 1 or 2");
    return conv_impl(x, w, b, stride, pad, /*depthwise=*/false);
  }

  /// Per-channel convolution: x [N,C,H,W], w [C,1,kh,kw]. Channel c of the
  /// output depends only on channel c of the input. No bias, stride 1.
  Id depthwise_conv2d(Id x, Id w, Padding pad = Padding::Zero) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    if (tx.rank() != 4 || tw.rank() != 4 || tw.dim(1) != 1)
      throw DimensionError("depthwise_conv2d: need x[N,C,H,W], w[C,1,kh,kw]");
    if (tx.dim(1) != tw.dim(0)) throw DimensionError("depthwise_conv2d: channel mismatch");
    if (tw.dim(2) % 2 == 0 || tw.dim(3) % 2 == 0)
      throw DimensionError("depthwise_conv2d: kernel extents must be odd");
    return conv_impl(x, w, kNoBias, 1, pad, /*depthwise=*/true);
  }

  // -- reductions and geometry -------------------------------------------------

  /// Spatial mean per channel: [N,C,H,W] -> [N,C]
  Id global_avg_pool(Id x) {
    const Tensor& tx = val(x);
    if (tx.rank() != 4) throw DimensionError("global_avg_pool: need [N,C,H,W]");
    const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor out({n, c});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) acc += tx.at4(i, j, y, xx);
        out.at2(i, j) = acc * inv;
      }
    return push(std::move(out), needs(x), [this, x, n, c, h, w, inv](const Tensor& g, Id) {
      Tensor gx({n, c, h, w});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          const double gv = g.at2(i, j) * inv;
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) gx.at4(i, j, y, xx) = gv;
        }
      accumulate(x, gx);
    });
  }

  /// Sub-pixel rearrangement: [N,C*s*s,H,W] -> [N,C,sH,sW]; a bijection on
  /// elements.
  Id pixel_shuffle(Id x, int s) {
    const Tensor& tx = val(x);
    if (s < 1) throw ParamError("pixel_shuffle: scale must be >= 1");
    if (tx.rank() != 4) throw DimensionError("pixel_shuffle: need [N,C,H,W]");
    if (tx.dim(1) % (s * s) != 0)
      throw DimensionError("pixel_shuffle: channels not divisible by s^2");
    const int n = tx.dim(0), cin = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    const int c = cin / (s * s);
    Tensor out({n, c, h * s, w * s});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx)
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx)
                out.at4(i, j, y * s + dy, xx * s + dx) =
                    tx.at4(i, j * s * s + dy * s + dx, y, xx);
    return push(std::move(out), needs(x), [this, x, s, n, c, h, w](const Tensor& g, Id) {
      Tensor gx(val(x).shape);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
          for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx)
              for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                  gx.at4(i, j * s * s + dy * s + dx, y, xx) =
                      g.at4(i, j, y * s + dy, xx * s + dx);
      accumulate(x, gx);
    });
  }

  /// Unit-normalizes each row of [N,D]. Rows with norm below eps are divided
  /// by eps instead.
  Id l2_normalize(Id x, double eps = 1e-12) {
    const Tensor& tx = val(x);
    if (tx.rank() != 2) throw DimensionError("l2_normalize: need [N,D]");
    const int n = tx.dim(0), d = tx.dim(1);
    Tensor out({n, d});
    auto norms = std::make_shared<std::vector<double>>(n);
    for (int i = 0; i < n; ++i) {
      double sq = 0.0;
      for (int j = 0; j < d; ++j) sq += tx.at2(i, j) * tx.at2(i, j);
      const double r = std::max(std::sqrt(sq), eps);
      (*norms)[i] = r;
      for (int j = 0; j < d; ++j) out.at2(i, j) = tx.at2(i, j) / r;
    }
    return push(std::move(out), needs(x), [this, x, n, d, norms](const Tensor& g, Id self) {
      Tensor gx({n, d});
      const Tensor& y = val(self);
      for (int i = 0; i < n; ++i) {
        double ydotg = 0.0;
        for (int j = 0; j < d; ++j) ydotg += y.at2(i, j) * g.at2(i, j);
        const double inv_r = 1.0 / (*norms)[i];
        for (int j = 0; j < d; ++j)
          gx.at2(i, j) = (g.at2(i, j) - y.at2(i, j) * ydotg) * inv_r;
      }
      accumulate(x, gx);
    });
  }

  /// Per-channel rescale: x [N,C,H,W] by v [Nv,C] with Nv in {1, N}.
  Id channel_scale(Id x, Id v) {
    const Tensor& tx = val(x);
    const Tensor& tv = val(v);
    if (tx.rank() != 4 || tv.rank() != 2 || tv.dim(1) != tx.dim(1) ||
        (tv.dim(0) != 1 && tv.dim(0) != tx.dim(0)))
      throw DimensionError("channel_scale: need x[N,C,H,W], v[1|N,C]");
    const int n = tx.dim(0), c = tx.dim(1), h = tx.dim(2), w = tx.dim(3);
    const bool shared = tv.dim(0) == 1;
    Tensor out({n, c, h, w});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double s = tv.at2(shared ? 0 : i, j);
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) out.at4(i, j, y, xx) = s * tx.at4(i, j, y, xx);
      }
    return push(std::move(out), needs(x) || needs(v),
                [this, x, v, n, c, h, w, shared](const Tensor& g, Id) {
                  if (needs(x)) {
                    Tensor gx({n, c, h, w});
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < c; ++j) {
                        const double s = val(v).at2(shared ? 0 : i, j);
                        for (int y = 0; y < h; ++y)
                          for (int xx = 0; xx < w; ++xx)
                            gx.at4(i, j, y, xx) = s * g.at4(i, j, y, xx);
                      }
                    accumulate(x, gx);
                  }
                  if (needs(v)) {
                    Tensor gv(val(v).shape);
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (int y = 0; y < h; ++y)
                          for (int xx = 0; xx < w; ++xx)
                            acc += g.at4(i, j, y, xx) * val(x).at4(i, j, y, xx);
                        gv.at2(shared ? 0 : i, j) += acc;
                      }
                    accumulate(v, gv);
                  }
                });
  }

  /// [1,D] -> [N,D] by row repetition.
  Id tile_rows(Id x, int n) {
    const Tensor& tx = val(x);
    if (tx.rank() != 2 || tx.dim(0) != 1) throw DimensionError("tile_rows: need [1,D]");
    if (n < 1) throw ParamError("tile_rows: n must be >= 1");
    const int d = tx.dim(1);
    Tensor out({n, d});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) out.at2(i, j) = tx[j];
    return push(std::move(out), needs(x), [this, x, n, d](const Tensor& g, Id) {
      Tensor gx({1, d});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gx[j] += g.at2(i, j);
      accumulate(x, gx);
    });
  }

  /// [N,C] -> [N,C,H,W] constant spatial maps.
  Id broadcast_spatial(Id v, int h, int w) {
    const Tensor& tv = val(v);
    if (tv.rank() != 2) throw DimensionError("broadcast_spatial: need [N,C]");
    const int n = tv.dim(0), c = tv.dim(1);
    Tensor out({n, c, h, w});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double s = tv.at2(i, j);
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) out.at4(i, j, y, xx) = s;
      }
    return push(std::move(out), needs(v), [this, v, n, c, h, w](const Tensor& g, Id) {
      Tensor gv({n, c});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          double acc = 0.0;
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) acc += g.at4(i, j, y, xx);
          gv.at2(i, j) = acc;
        }
      accumulate(v, gv);
    });
  }

  Id sum(Id x) {
    double acc = 0.0;
    for (double v : val(x).data) acc += v;
    return push(Tensor::scalar(acc), needs(x), [this, x](const Tensor& g, Id) {
      Tensor gx(val(x).shape);
      for (double& v : gx.data) v = g[0];
      accumulate(x, gx);
    });
  }

  Id mean(Id x) {
    const double inv = 1.0 / static_cast<double>(val(x).numel());
    double acc = 0.0;
    for (double v : val(x).data) acc += v;
    return push(Tensor::scalar(acc * inv), needs(x), [this, x, inv](const Tensor& g, Id) {
      Tensor gx(val(x).shape);
      for (double& v : gx.data) v = g[0] * inv;
      accumulate(x, gx);
    });
  }

  /// Mean absolute error between same-shaped tensors -> scalar. The
  /// subgradient at exact ties is zero.
  Id mean_abs(Id a, Id b) {
    check_same_shape(val(a), val(b), "mean_abs");
    const int64_t n = val(a).numel();
    const double inv = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += std::fabs(val(a)[i] - val(b)[i]);
    return push(Tensor::scalar(acc * inv), needs(a) || needs(b),
                [this, a, b, n, inv](const Tensor& g, Id) {
                  Tensor ga(val(a).shape);
                  for (int64_t i = 0; i < n; ++i) {
                    const double d = val(a)[i] - val(b)[i];
                    ga[i] = g[0] * inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
                  }
                  if (needs(a)) accumulate(a, ga);
                  if (needs(b)) {
                    for (double& v : ga.data) v = -v;
                    accumulate(b, ga);
                  }
                });
  }

  /// Mean over rows of -log softmax(logits)[target]; max-subtraction for
  /// stability. logits [N,K], one target index per row.
  Id softmax_cross_entropy(Id logits, std::vector<int> targets) {
    const Tensor& tl = val(logits);
    if (tl.rank() != 2) throw DimensionError("softmax_cross_entropy: need [N,K]");
    const int n = tl.dim(0), k = tl.dim(1);
    if (k < 2) throw DimensionError("softmax_cross_entropy: need K >= 2");
    if (static_cast<int>(targets.size()) != n)
      throw DimensionError("softmax_cross_entropy: one target per row required");
    for (int t : targets)
      if (t < 0 || t >= k) throw ParamError("softmax_cross_entropy: target index out of range");
    auto probs = std::make_shared<Tensor>(std::vector<int>{n, k});
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double mx = tl.at2(i, 0);
      for (int j = 1; j < k; ++j) mx = std::max(mx, tl.at2(i, j));
      double z = 0.0;
      for (int j = 0; j < k; ++j) z += std::exp(tl.at2(i, j) - mx);
      const double log_z = std::log(z);
      for (int j = 0; j < k; ++j) probs->at2(i, j) = std::exp(tl.at2(i, j) - mx) / z;
      loss += log_z - (tl.at2(i, targets[i]) - mx);
    }
    loss /= n;
    return push(Tensor::scalar(loss), needs(logits),
                [this, logits, targets = std::move(targets), probs, n, k](const Tensor& g, Id) {
                  Tensor gl({n, k});
                  const double inv = g[0] / n;
                  for (int i = 0; i < n; ++i)
                    for (int j = 0; j < k; ++j)
                      gl.at2(i, j) = (probs->at2(i, j) - (j == targets[i] ? 1.0 : 0.0)) * inv;
                  accumulate(logits, gl);
                });
  }

  // -- backward ---------------------------------------------------------------

  /// Reverse sweep from a scalar loss. Gradients of all reachable nodes with
  /// requires_grad are accumulated; untouched nodes read back as zeros.
  void backward(Id loss) {
    if (val(loss).numel() != 1) throw DimensionError("backward: loss must be scalar");
    ensure_grad(loss)[0] = 1.0;
    for (Id i = loss; i >= 0; --i) {
      Node& node = nodes_[i];
      if (!node.backprop || node.grad.data.empty()) continue;
      node.backprop(node.grad, i);
    }
  }

 private:
  static constexpr Id kNoBias = -1;

  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily
    bool requires_grad = false;
    std::function<void(const Tensor&, Id)> backprop;  // (output grad, own id)
  };

  bool needs(Id id) const { return nodes_[id].requires_grad; }

  Tensor& ensure_grad(Id id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }

  void accumulate(Id id, const Tensor& g) {
    if (!needs(id)) return;
    Tensor& dst = ensure_grad(id);
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
  }

  Id push(Tensor value, bool requires_grad, std::function<void(const Tensor&, Id)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  // Shared forward/backward for conv2d and depthwise_conv2d. For the
  // depthwise case w is [C,1,kh,kw] and the (co, ci) pair degenerates to
  // (c, c). bias == kNoBias means no bias term.
  Id conv_impl(Id x, Id w, Id bias, int stride, Padding pad, bool depthwise) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const int n = tx.dim(0), cin = tx.dim(1), h = tx.dim(2), wd = tx.dim(3);
    const int cout = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
    const int ph = kh / 2, pw = kw / 2;
    const int oh = (h + stride - 1) / stride, ow = (wd + stride - 1) / stride;
    Tensor out({n, cout, oh, ow});
    const bool reflect = pad == Padding::Reflect;

    auto map_y = [h, reflect](int iy) {
      if (iy >= 0 && iy < h) return iy;
      return reflect ? detail_reflect(iy, h) : -1;
    };
    auto map_x = [wd, reflect](int ix) {
      if (ix >= 0 && ix < wd) return ix;
      return reflect ? detail_reflect(ix, wd) : -1;
    };

    for (int i = 0; i < n; ++i)
      for (int co = 0; co < cout; ++co) {
        const double bv = bias == kNoBias ? 0.0 : val(bias)[co];
        const int ci_begin = depthwise ? co : 0;
        const int ci_end = depthwise ? co + 1 : cin;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double acc = bv;
            for (int ci = ci_begin; ci < ci_end; ++ci) {
              const double* wslice =
                  tw.data.data() +
                  (static_cast<size_t>(co) * tw.dim(1) + (depthwise ? 0 : ci)) * kh * kw;
              for (int u = 0; u < kh; ++u) {
                const int iy = map_y(oy * stride + u - ph);
                if (iy < 0) continue;
                for (int v = 0; v < kw; ++v) {
                  const int ix = map_x(ox * stride + v - pw);
                  if (ix < 0) continue;
                  acc += wslice[u * kw + v] * tx.at4(i, ci, iy, ix);
                }
              }
            }
            out.at4(i, co, oy, ox) = acc;
          }
      }

    const bool grads = needs(x) || needs(w) || (bias != kNoBias && needs(bias));
    return push(std::move(out), grads,
                [this, x, w, bias, stride, depthwise, n, h, wd, cout, kh, kw, ph, pw, oh, ow,
                 reflect](const Tensor& g, Id) {
                  const Tensor& tx = val(x);
                  const Tensor& tw = val(w);
                  const bool need_x = needs(x);
                  const bool need_w = needs(w);
                  const bool need_b = bias != kNoBias && needs(bias);
                  Tensor gx = need_x ? Tensor::zeros(tx.shape) : Tensor();
                  Tensor gw = need_w ? Tensor::zeros(tw.shape) : Tensor();
                  Tensor gb = need_b ? Tensor::zeros(val(bias).shape) : Tensor();
                  auto map_y = [h, reflect](int iy) {
                    if (iy >= 0 && iy < h) return iy;
                    return reflect ? detail_reflect(iy, h) : -1;
                  };
                  auto map_x = [wd, reflect](int ix) {
                    if (ix >= 0 && ix < wd) return ix;
                    return reflect ? detail_reflect(ix, wd) : -1;
                  };
                  for (int i = 0; i < n; ++i)
                    for (int co = 0; co < cout; ++co) {
                      const int ci_begin = depthwise ? co : 0;
                      const int ci_end = depthwise ? co + 1 : tx.dim(1);
                      for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                          const double gv = g.at4(i, co, oy, ox);
                          if (gv == 0.0) continue;
                          if (need_b) gb[co] += gv;
                          for (int ci = ci_begin; ci < ci_end; ++ci) {
                            const size_t wbase =
                                (static_cast<size_t>(co) * tw.dim(1) + (depthwise ? 0 : ci)) *
                                kh * kw;
                            for (int u = 0; u < kh; ++u) {
                              const int iy = map_y(oy * stride + u - ph);
                              if (iy < 0) continue;
                              for (int v = 0; v < kw; ++v) {
                                const int ix = map_x(ox * stride + v - pw);
                                if (ix < 0) continue;
                                if (need_x)
                                  gx.at4(i, ci, iy, ix) += gv * tw.data[wbase + u * kw + v];
                                if (need_w)
                                  gw.data[wbase + u * kw + v] += gv * tx.at4(i, ci, iy, ix);
                              }
                            }
                          }
                        }
                    }
                  if (need_x) accumulate(x, gx);
                  if (need_w) accumulate(w, gw);
                  if (need_b) accumulate(bias, gb);
                });
  }

  static int detail_reflect(int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  }

  std::vector<Node> nodes_;
};

}  // namespace dasr
