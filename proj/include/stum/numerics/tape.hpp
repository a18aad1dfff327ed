#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "stum/numerics/parallel.hpp"
#include "stum/numerics/tensor.hpp"

namespace stum::num {

// Trainable tensor with gradient accumulator.
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

using Parameter = ParameterT<float>;

// Reverse-mode tape. Ops append nodes in topological order; backward() walks
// the node list in reverse and accumulates into bound parameters. A tape is
// built for one forward pass and discarded (or reset) afterwards.
template <typename T>
class TapeT {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  void reset() {
    nodes_.clear();
  }

  size_t size() const { return nodes_.size(); }

  // Records elementwise signs of every leaky_relu input when set; used by the
  // gradient checker to detect kink crossings between perturbed evaluations.
  void record_relu_signs(std::vector<uint8_t>* sink) { sign_sink_ = sink; }

  Var input(TensorT<T> v) {
    return push(std::move(v), nullptr, {});
  }

  Var param(ParameterT<T>& p) {
    int id = push(p.value, nullptr, {}).id;
    nodes_[id].bound = &p;
    return Var{id};
  }

  const TensorT<T>& value(Var v) const { return nodes_.at(v.id).val; }
  const TensorT<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

  // ---- elementwise / shape ops ----

  Var add(Var a, Var b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    check(av.shape == bv.shape, "add: shape mismatch");
    TensorT<T> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
    return push(std::move(out), [this](Node& n) {
      accumulate(n.parents[0], n.grad.data);
      accumulate(n.parents[1], n.grad.data);
    }, {a.id, b.id});
  }

  Var scale(Var a, T c) {
    const auto& av = val(a);
    TensorT<T> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * c;
    return push(std::move(out), [this, c](Node& n) {
      auto& pg = nodes_[n.parents[0]].grad;
      for (size_t i = 0; i < pg.numel(); ++i) pg.data[i] += c * n.grad.data[i];
    }, {a.id});
  }

  Var reshape(Var a, std::vector<int> shape) {
    const auto& av = val(a);
    check(TensorT<T>::checked_numel(shape) == av.numel(), "reshape: numel mismatch");
    TensorT<T> out(std::move(shape), av.data);
    return push(std::move(out), [this](Node& n) {
      accumulate(n.parents[0], n.grad.data);
    }, {a.id});
  }

  Var leaky_relu(Var a, T slope) {
    check(slope >= T(0) && slope < T(1), "leaky_relu: slope must be in [0,1)");
    const auto& av = val(a);
    TensorT<T> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) {
      T x = av.data[i];
      out.data[i] = x >= T(0) ? x : slope * x;
    }
    if (sign_sink_) {
      for (size_t i = 0; i < av.numel(); ++i) {
        sign_sink_->push_back(av.data[i] >= T(0) ? 1 : 0);
      }
    }
    return push(std::move(out), [this, slope](Node& n) {
      const auto& x = nodes_[n.parents[0]].val;
      auto& pg = nodes_[n.parents[0]].grad;
      for (size_t i = 0; i < pg.numel(); ++i) {
        pg.data[i] += n.grad.data[i] * (x.data[i] >= T(0) ? T(1) : slope);
      }
    }, {a.id});
  }

  Var sum_all(Var a) {
    const auto& av = val(a);
    T s = 0;
    for (T v : av.data) s += v;
    TensorT<T> out({1});
    out.data[0] = s;
    return push(std::move(out), [this](Node& n) {
      T g = n.grad.data[0];
      auto& pg = nodes_[n.parents[0]].grad;
      for (size_t i = 0; i < pg.numel(); ++i) pg.data[i] += g;
    }, {a.id});
  }

  Var mean_all(Var a) {
    const auto& av = val(a);
    T s = 0;
    for (T v : av.data) s += v;
    T inv = T(1) / static_cast<T>(av.numel());
    TensorT<T> out({1});
    out.data[0] = s * inv;
    return push(std::move(out), [this, inv](Node& n) {
      T g = n.grad.data[0] * inv;
      auto& pg = nodes_[n.parents[0]].grad;
      for (size_t i = 0; i < pg.numel(); ++i) pg.data[i] += g;
    }, {a.id});
  }

  // ---- affine: y[n,o] = sum_i x[n,i] w[o,i] + b[o] ----
  // Input of any rank is flattened per sample; 1-D input is a single sample.

  Var affine(Var x, Var w, Var b) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    const auto& bv = val(b);
    check(wv.ndim() == 2, "affine: weight must be [out,in]");
    const int out_dim = wv.shape[0];
    const int in_dim = wv.shape[1];
    check(bv.ndim() == 1 && bv.shape[0] == out_dim, "affine: bias shape mismatch");
    const bool batched = xv.ndim() > 1;
    const int n_rows = batched ? xv.shape[0] : 1;
    check(xv.numel() == static_cast<size_t>(n_rows) * in_dim,
          "affine: input numel " + std::to_string(xv.numel()) + " does not match in_dim " +
              std::to_string(in_dim));

    TensorT<T> out(batched ? std::vector<int>{n_rows, out_dim} : std::vector<int>{out_dim});
    const T* xd = xv.data.data();
    const T* wd = wv.data.data();
    const T* bd = bv.data.data();
    T* od = out.data.data();
    parallel_for(static_cast<size_t>(n_rows), [&](size_t n) {
      const T* xr = xd + n * in_dim;
      T* orow = od + n * out_dim;
      for (int o = 0; o < out_dim; ++o) {
        const T* wr = wd + static_cast<size_t>(o) * in_dim;
        T acc = bd[o];
        for (int i = 0; i < in_dim; ++i) acc += xr[i] * wr[i];
        orow[o] = acc;
      }
    });

    return push(std::move(out), [this, n_rows, in_dim, out_dim](Node& n) {
      const auto& xv2 = nodes_[n.parents[0]].val;
      const auto& wv2 = nodes_[n.parents[1]].val;
      auto& xg = nodes_[n.parents[0]].grad;
      auto& wg = nodes_[n.parents[1]].grad;
      auto& bg = nodes_[n.parents[2]].grad;
      const T* gd = n.grad.data.data();
      const T* xd2 = xv2.data.data();
      const T* wd2 = wv2.data.data();
      // dX: each sample row owned by one task.
      parallel_for(static_cast<size_t>(n_rows), [&](size_t nn) {
        T* xgr = xg.data.data() + nn * in_dim;
        const T* gr = gd + nn * out_dim;
        for (int o = 0; o < out_dim; ++o) {
          T g = gr[o];
          if (g == T(0)) continue;
          const T* wr = wd2 + static_cast<size_t>(o) * in_dim;
          for (int i = 0; i < in_dim; ++i) xgr[i] += g * wr[i];
        }
      });
      // dW / dB: each output row owned by one task; batch summed in order.
      parallel_for(static_cast<size_t>(out_dim), [&](size_t o) {
        T* wgr = wg.data.data() + o * in_dim;
        T bacc = 0;
        for (int nn = 0; nn < n_rows; ++nn) {
          T g = gd[static_cast<size_t>(nn) * out_dim + o];
          bacc += g;
          if (g == T(0)) continue;
          const T* xr = xd2 + static_cast<size_t>(nn) * in_dim;
          for (int i = 0; i < in_dim; ++i) wgr[i] += g * xr[i];
        }
        bg.data[o] += bacc;
      });
    }, {x.id, w.id, b.id});
  }

  // ---- conv2d: standard cross-correlation ----
  // x: [N,Ci,H,W] or [Ci,H,W]; w: [Co,Ci,k,k]; optional bias [Co].
  // out: H' = floor((H + 2 pad - k)/stride) + 1, same for W'.

  Var conv2d(Var x, Var w, std::optional<Var> b, int stride, int pad) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    check(stride >= 1, "conv2d: stride must be >= 1");
    check(pad >= 0, "conv2d: pad must be >= 0");
    check(wv.ndim() == 4 && wv.shape[2] == wv.shape[3], "conv2d: kernel must be [Co,Ci,k,k]");
    const bool batched = xv.ndim() == 4;
    check(batched || xv.ndim() == 3, "conv2d: input must be 3-D or 4-D");
    const int N = batched ? xv.shape[0] : 1;
    const int Ci = batched ? xv.shape[1] : xv.shape[0];
    const int H = batched ? xv.shape[2] : xv.shape[1];
    const int W = batched ? xv.shape[3] : xv.shape[2];
    const int Co = wv.shape[0];
    const int k = wv.shape[2];
    check(wv.shape[1] == Ci, "conv2d: input channels " + std::to_string(Ci) +
                                 " do not match kernel channels " + std::to_string(wv.shape[1]));
    check(k <= H + 2 * pad && k <= W + 2 * pad, "conv2d: kernel larger than padded input");
    if (b) {
      check(val(*b).ndim() == 1 && val(*b).shape[0] == Co, "conv2d: bias shape mismatch");
    }
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;

    TensorT<T> out(batched ? std::vector<int>{N, Co, OH, OW} : std::vector<int>{Co, OH, OW});
    const T* xd = xv.data.data();
    const T* wd = wv.data.data();
    const T* bd = b ? val(*b).data.data() : nullptr;
    T* od = out.data.data();

    parallel_for(static_cast<size_t>(N) * Co, [&](size_t idx) {
      const int n = static_cast<int>(idx) / Co;
      const int co = static_cast<int>(idx) % Co;
      T* plane = od + (static_cast<size_t>(n) * Co + co) * OH * OW;
      const T bias = bd ? bd[co] : T(0);
      for (int i = 0; i < OH * OW; ++i) plane[i] = bias;
      for (int ci = 0; ci < Ci; ++ci) {
        const T* xplane = xd + (static_cast<size_t>(n) * Ci + ci) * H * W;
        const T* wplane = wd + (static_cast<size_t>(co) * Ci + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const auto [oy_lo, oy_hi] = valid_range(ky, pad, stride, H, OH);
          for (int kx = 0; kx < k; ++kx) {
            const T wval = wplane[ky * k + kx];
            if (wval == T(0)) continue;
            const auto [ox_lo, ox_hi] = valid_range(kx, pad, stride, W, OW);
            for (int oy = oy_lo; oy < oy_hi; ++oy) {
              const int iy = oy * stride + ky - pad;
              const T* xrow = xplane + static_cast<size_t>(iy) * W;
              T* orow = plane + static_cast<size_t>(oy) * OW;
              int ix = ox_lo * stride + kx - pad;
              for (int ox = ox_lo; ox < ox_hi; ++ox, ix += stride) {
                orow[ox] += wval * xrow[ix];
              }
            }
          }
        }
      }
    });

    std::vector<int> parents = b ? std::vector<int>{x.id, w.id, b->id}
                                 : std::vector<int>{x.id, w.id};
    return push(std::move(out),
                [this, N, Ci, H, W, Co, k, OH, OW, stride, pad, has_bias = b.has_value()](Node& n) {
      const auto& xv2 = nodes_[n.parents[0]].val;
      const auto& wv2 = nodes_[n.parents[1]].val;
      auto& xg = nodes_[n.parents[0]].grad;
      auto& wg = nodes_[n.parents[1]].grad;
      const T* gd = n.grad.data.data();
      const T* xd2 = xv2.data.data();
      const T* wd2 = wv2.data.data();

      // dX: each sample owned by one task.
      parallel_for(static_cast<size_t>(N), [&](size_t nn) {
        for (int co = 0; co < Co; ++co) {
          const T* gplane = gd + (nn * Co + co) * OH * OW;
          for (int ci = 0; ci < Ci; ++ci) {
            T* xgplane = xg.data.data() + (nn * Ci + ci) * H * W;
            const T* wplane = wd2 + (static_cast<size_t>(co) * Ci + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const auto [oy_lo, oy_hi] = valid_range(ky, pad, stride, H, OH);
              for (int kx = 0; kx < k; ++kx) {
                const T wval = wplane[ky * k + kx];
                if (wval == T(0)) continue;
                const auto [ox_lo, ox_hi] = valid_range(kx, pad, stride, W, OW);
                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                  const int iy = oy * stride + ky - pad;
                  T* xgrow = xgplane + static_cast<size_t>(iy) * W;
                  const T* grow = gplane + static_cast<size_t>(oy) * OW;
                  int ix = ox_lo * stride + kx - pad;
                  for (int ox = ox_lo; ox < ox_hi; ++ox, ix += stride) {
                    xgrow[ix] += wval * grow[ox];
                  }
                }
              }
            }
          }
        }
      });

      // dW (and dB): each output channel owned by one task, batch summed in
      // a fixed order so results do not depend on the worker count.
      parallel_for(static_cast<size_t>(Co), [&](size_t co) {
        for (int ci = 0; ci < Ci; ++ci) {
          T* wgplane = wg.data.data() + (co * Ci + ci) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const auto [oy_lo, oy_hi] = valid_range(ky, pad, stride, H, OH);
            for (int kx = 0; kx < k; ++kx) {
              const auto [ox_lo, ox_hi] = valid_range(kx, pad, stride, W, OW);
              T acc = 0;
              for (int nn = 0; nn < N; ++nn) {
                const T* gplane = gd + (static_cast<size_t>(nn) * Co + co) * OH * OW;
                const T* xplane = xd2 + (static_cast<size_t>(nn) * Ci + ci) * H * W;
                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                  const int iy = oy * stride + ky - pad;
                  const T* xrow = xplane + static_cast<size_t>(iy) * W;
                  const T* grow = gplane + static_cast<size_t>(oy) * OW;
                  int ix = ox_lo * stride + kx - pad;
                  for (int ox = ox_lo; ox < ox_hi; ++ox, ix += stride) {
                    acc += grow[ox] * xrow[ix];
                  }
                }
              }
              wgplane[ky * k + kx] += acc;
            }
          }
        }
        if (has_bias) {
          auto& bg = nodes_[n.parents[2]].grad;
          T acc = 0;
          for (int nn = 0; nn < N; ++nn) {
            const T* gplane = gd + (static_cast<size_t>(nn) * Co + co) * OH * OW;
            for (int i = 0; i < OH * OW; ++i) acc += gplane[i];
          }
          bg.data[co] += acc;
        }
      });
    }, std::move(parents));
  }

  // ---- batch normalization over (N,H,W) per channel ----
  // Training mode normalizes with biased batch statistics and (optionally)
  // updates the running buffers: run = momentum * run + (1-momentum) * batch.
  // Inference mode normalizes with the running buffers.

  Var batchnorm(Var x, Var gamma, Var beta, TensorT<T>& run_mean, TensorT<T>& run_var,
                bool training, bool update_stats, T momentum, T eps) {
    const auto& xv = val(x);
    check(xv.ndim() == 4, "batchnorm: input must be [N,C,H,W]");
    const int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    check(val(gamma).ndim() == 1 && val(gamma).shape[0] == C, "batchnorm: gamma shape mismatch");
    check(val(beta).ndim() == 1 && val(beta).shape[0] == C, "batchnorm: beta shape mismatch");
    check(run_mean.shape == std::vector<int>{C} && run_var.shape == std::vector<int>{C},
          "batchnorm: running buffer shape mismatch");
    const size_t plane = static_cast<size_t>(H) * W;
    const size_t count = static_cast<size_t>(N) * plane;

    std::vector<T> mean(C), inv_std(C);
    const T* xd = xv.data.data();
    if (training) {
      parallel_for(static_cast<size_t>(C), [&](size_t c) {
        T m = 0;
        for (int nn = 0; nn < N; ++nn) {
          const T* p = xd + (static_cast<size_t>(nn) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) m += p[i];
        }
        m /= static_cast<T>(count);
        T v = 0;
        for (int nn = 0; nn < N; ++nn) {
          const T* p = xd + (static_cast<size_t>(nn) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            T d = p[i] - m;
            v += d * d;
          }
        }
        v /= static_cast<T>(count);
        mean[c] = m;
        inv_std[c] = T(1) / std::sqrt(v + eps);
        if (update_stats) {
          run_mean.data[c] = momentum * run_mean.data[c] + (T(1) - momentum) * m;
          run_var.data[c] = momentum * run_var.data[c] + (T(1) - momentum) * v;
        }
      });
    } else {
      for (int c = 0; c < C; ++c) {
        mean[c] = run_mean.data[c];
        inv_std[c] = T(1) / std::sqrt(run_var.data[c] + eps);
      }
    }

    TensorT<T> out(xv.shape);
    const T* gmd = val(gamma).data.data();
    const T* btd = val(beta).data.data();
    T* od = out.data.data();
    parallel_for(static_cast<size_t>(C), [&](size_t c) {
      const T m = mean[c], is = inv_std[c], gm = gmd[c], bt = btd[c];
      for (int nn = 0; nn < N; ++nn) {
        const T* p = xd + (static_cast<size_t>(nn) * C + c) * plane;
        T* o = od + (static_cast<size_t>(nn) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) o[i] = gm * (p[i] - m) * is + bt;
      }
    });

    return push(std::move(out),
                [this, N, C, plane, count, training, mean, inv_std](Node& n) {
      const auto& xv2 = nodes_[n.parents[0]].val;
      const auto& gmv = nodes_[n.parents[1]].val;
      auto& xg = nodes_[n.parents[0]].grad;
      auto& gmg = nodes_[n.parents[1]].grad;
      auto& btg = nodes_[n.parents[2]].grad;
      const T* xd2 = xv2.data.data();
      const T* gd = n.grad.data.data();
      parallel_for(static_cast<size_t>(C), [&](size_t c) {
        const T m = mean[c], is = inv_std[c], gm = gmv.data[c];
        // Channel reductions: sum(dy), sum(dy * xhat).
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int nn = 0; nn < N; ++nn) {
          const T* xp = xd2 + (static_cast<size_t>(nn) * C + c) * plane;
          const T* gp = gd + (static_cast<size_t>(nn) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            sum_dy += gp[i];
            sum_dy_xhat += gp[i] * (xp[i] - m) * is;
          }
        }
        gmg.data[c] += sum_dy_xhat;
        btg.data[c] += sum_dy;
        const T inv_count = T(1) / static_cast<T>(count);
        for (int nn = 0; nn < N; ++nn) {
          const T* xp = xd2 + (static_cast<size_t>(nn) * C + c) * plane;
          const T* gp = gd + (static_cast<size_t>(nn) * C + c) * plane;
          T* xgp = xg.data.data() + (static_cast<size_t>(nn) * C + c) * plane;
          if (training) {
            for (size_t i = 0; i < plane; ++i) {
              const T xhat = (xp[i] - m) * is;
              xgp[i] += gm * is * (gp[i] - sum_dy * inv_count - xhat * sum_dy_xhat * inv_count);
            }
          } else {
            for (size_t i = 0; i < plane; ++i) xgp[i] += gm * is * gp[i];
          }
        }
      });
    }, {x.id, gamma.id, beta.id});
  }

  // ---- losses / distances ----

  // Rowwise Euclidean distance between matching rows: [B,F],[B,F] -> [B].
  Var rowwise_distance(Var a, Var b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    check(av.ndim() == 2 && av.shape == bv.shape, "rowwise_distance: need matching [B,F]");
    const int B = av.shape[0], F = av.shape[1];
    TensorT<T> out({B});
    for (int i = 0; i < B; ++i) {
      T s = 0;
      const T* ar = av.data.data() + static_cast<size_t>(i) * F;
      const T* br = bv.data.data() + static_cast<size_t>(i) * F;
      for (int j = 0; j < F; ++j) {
        T d = ar[j] - br[j];
        s += d * d;
      }
      out.data[i] = std::sqrt(s);
    }
    return push(std::move(out), [this, B, F](Node& n) {
      const auto& av2 = nodes_[n.parents[0]].val;
      const auto& bv2 = nodes_[n.parents[1]].val;
      auto& ag = nodes_[n.parents[0]].grad;
      auto& bg = nodes_[n.parents[1]].grad;
      for (int i = 0; i < B; ++i) {
        const T d = n.val.data[i];
        if (d <= T(0)) continue;  // zero distance: subgradient 0
        const T g = n.grad.data[i] / d;
        if (g == T(0)) continue;
        const size_t off = static_cast<size_t>(i) * F;
        for (int j = 0; j < F; ++j) {
          const T diff = av2.data[off + j] - bv2.data[off + j];
          ag.data[off + j] += g * diff;
          bg.data[off + j] -= g * diff;
        }
      }
    }, {a.id, b.id});
  }

  // Per-pair contrastive loss on a distance vector:
  //   (1-z) d + z max(0, m - d)            (first-power form)
  //   (1-z) d^2/2 + z max(0, m - d)^2/2    (squared variant)
  Var contrastive(Var d, std::vector<T> z, T margin, bool squared) {
    const auto& dv = val(d);
    check(dv.ndim() == 1, "contrastive: distances must be 1-D");
    check(dv.numel() == z.size(), "contrastive: z length mismatch");
    check(margin > T(0), "contrastive: margin must be positive");
    TensorT<T> out(dv.shape);
    for (size_t i = 0; i < dv.numel(); ++i) {
      const T di = dv.data[i];
      const T hinge = std::max(T(0), margin - di);
      out.data[i] = squared ? ((T(1) - z[i]) * di * di + z[i] * hinge * hinge) / T(2)
                            : (T(1) - z[i]) * di + z[i] * hinge;
    }
    return push(std::move(out), [this, z = std::move(z), margin, squared](Node& n) {
      const auto& dv2 = nodes_[n.parents[0]].val;
      auto& dg = nodes_[n.parents[0]].grad;
      for (size_t i = 0; i < dv2.numel(); ++i) {
        const T di = dv2.data[i];
        const T hinge_on = (margin - di) > T(0) ? T(1) : T(0);
        const T slope = squared ? (T(1) - z[i]) * di - z[i] * hinge_on * (margin - di)
                                : (T(1) - z[i]) - z[i] * hinge_on;
        dg.data[i] += n.grad.data[i] * slope;
      }
    }, {d.id});
  }

  // Alignment loss terms |d_i - h_i| against fixed targets.
  Var l1_to_targets(Var d, std::vector<T> targets) {
    const auto& dv = val(d);
    check(dv.ndim() == 1, "l1_to_targets: distances must be 1-D");
    check(dv.numel() == targets.size(), "l1_to_targets: length mismatch");
    TensorT<T> out(dv.shape);
    for (size_t i = 0; i < dv.numel(); ++i) out.data[i] = std::abs(dv.data[i] - targets[i]);
    return push(std::move(out), [this, targets = std::move(targets)](Node& n) {
      const auto& dv2 = nodes_[n.parents[0]].val;
      auto& dg = nodes_[n.parents[0]].grad;
      for (size_t i = 0; i < dv2.numel(); ++i) {
        const T diff = dv2.data[i] - targets[i];
        const T s = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
        dg.data[i] += n.grad.data[i] * s;
      }
    }, {d.id});
  }

  // Mean squared error against a fixed target tensor -> scalar.
  Var mse(Var pred, TensorT<T> target) {
    const auto& pv = val(pred);
    check(pv.shape == target.shape, "mse: shape mismatch");
    T s = 0;
    for (size_t i = 0; i < pv.numel(); ++i) {
      T d = pv.data[i] - target.data[i];
      s += d * d;
    }
    const T inv = T(1) / static_cast<T>(pv.numel());
    TensorT<T> out({1});
    out.data[0] = s * inv;
    return push(std::move(out), [this, target = std::move(target), inv](Node& n) {
      const auto& pv2 = nodes_[n.parents[0]].val;
      auto& pg = nodes_[n.parents[0]].grad;
      const T g = n.grad.data[0] * T(2) * inv;
      for (size_t i = 0; i < pv2.numel(); ++i) {
        pg.data[i] += g * (pv2.data[i] - target.data[i]);
      }
    }, {pred.id});
  }

  // Mean softmax cross-entropy for integer class labels -> scalar.
  Var softmax_xent(Var logits, std::vector<int> labels) {
    const auto& lv = val(logits);
    check(lv.ndim() == 2, "softmax_xent: logits must be [N,K]");
    const int N = lv.shape[0], K = lv.shape[1];
    check(static_cast<size_t>(N) == labels.size(), "softmax_xent: label count mismatch");
    for (int l : labels) check(l >= 0 && l < K, "softmax_xent: label out of range");
    T loss = 0;
    std::vector<T> probs(static_cast<size_t>(N) * K);
    for (int n = 0; n < N; ++n) {
      const T* row = lv.data.data() + static_cast<size_t>(n) * K;
      T mx = row[0];
      for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
      T sum = 0;
      for (int k = 0; k < K; ++k) {
        T e = std::exp(row[k] - mx);
        probs[static_cast<size_t>(n) * K + k] = e;
        sum += e;
      }
      for (int k = 0; k < K; ++k) probs[static_cast<size_t>(n) * K + k] /= sum;
      loss -= std::log(probs[static_cast<size_t>(n) * K + labels[n]]);
    }
    TensorT<T> out({1});
    out.data[0] = loss / static_cast<T>(N);
    return push(std::move(out),
                [this, probs = std::move(probs), labels = std::move(labels), N, K](Node& n) {
      auto& lg = nodes_[n.parents[0]].grad;
      const T g = n.grad.data[0] / static_cast<T>(N);
      for (int nn = 0; nn < N; ++nn) {
        for (int k = 0; k < K; ++k) {
          const size_t idx = static_cast<size_t>(nn) * K + k;
          lg.data[idx] += g * (probs[idx] - (k == labels[nn] ? T(1) : T(0)));
        }
      }
    }, {logits.id});
  }

  // ---- reverse pass ----

  // Accumulates d(loss)/d(param) into every reachable parameter's grad.
  // Repeated calls without zero_grad accumulate additively.
  void backward(Var loss) {
    check(loss.valid() && static_cast<size_t>(loss.id) < nodes_.size(), "backward: invalid var");
    check(nodes_[loss.id].val.numel() == 1, "backward: loss must be a scalar");
    // Mark ancestors of the loss; everything else keeps zero grads.
    std::vector<uint8_t> reach(nodes_.size(), 0);
    reach[loss.id] = 1;
    for (int i = loss.id; i >= 0; --i) {
      if (!reach[i]) continue;
      for (int p : nodes_[i].parents) reach[p] = 1;
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (!reach[i]) continue;
      auto& n = nodes_[i];
      if (n.grad.shape != n.val.shape) n.grad = TensorT<T>(n.val.shape);
      else n.grad.fill(T(0));
    }
    nodes_[loss.id].grad.data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      if (!reach[i]) continue;
      Node& n = nodes_[i];
      if (n.back) n.back(n);
      if (n.bound) {
        auto& pg = n.bound->grad;
        for (size_t j = 0; j < pg.numel(); ++j) pg.data[j] += n.grad.data[j];
      }
    }
  }

 private:
  struct Node {
    TensorT<T> val;
    TensorT<T> grad;
    std::function<void(Node&)> back;
    std::vector<int> parents;
    ParameterT<T>* bound = nullptr;
  };

  const TensorT<T>& val(Var v) const {
    check(v.valid() && static_cast<size_t>(v.id) < nodes_.size(), "tape: invalid var");
    return nodes_[v.id].val;
  }

  Var push(TensorT<T> v, std::function<void(Node&)> back, std::vector<int> parents) {
    Node n;
    n.val = std::move(v);
    n.back = std::move(back);
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void accumulate(int parent, const std::vector<T>& g) {
    auto& pg = nodes_[parent].grad;
    for (size_t i = 0; i < g.size(); ++i) pg.data[i] += g[i];
  }

  static std::pair<int, int> valid_range(int koff, int pad, int stride, int in_extent,
                                         int out_extent) {
    // Output positions o where o*stride + koff - pad lands inside the input.
    int lo = 0;
    if (koff < pad) lo = (pad - koff + stride - 1) / stride;
    int hi_idx = (in_extent - 1 - koff + pad) / stride;
    int hi = std::min(out_extent, hi_idx + 1);
    if (hi < lo) hi = lo;
    return {lo, hi};
  }

  std::vector<Node> nodes_;
  std::vector<uint8_t>* sign_sink_ = nullptr;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace stum::num
