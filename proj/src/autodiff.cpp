// Copyright 2026 The geoseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "geoseg/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace geoseg::ad {

namespace {

double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

Var Tape::put(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr});
  return Var{size() - 1};
}

Var Tape::emit(Tensor value, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
  return Var{size() - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

void Tape::backward(Var out) {
  int o = check(out);
  if (nodes_[o].value.size() != 1)
    throw std::logic_error("backward() requires a scalar output");
  grad_buf(o).data[0] = 1.0;
  for (int i = o; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back && !n.grad.data.empty()) n.back(*this);
  }
}

void Tape::reset() { nodes_.clear(); }

// ---------------------------------------------------------------- elementwise

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] += tb[i];
  int ia = a.id, ib = b.id;
  return emit(std::move(out), [ia, ib, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    Tensor& gb = t.grad_buf(ib);
    for (int i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] -= tb[i];
  int ia = a.id, ib = b.id;
  return emit(std::move(out), [ia, ib, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    Tensor& gb = t.grad_buf(ib);
    for (int i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out[i] *= tb[i];
  int ia = a.id, ib = b.id;
  return emit(std::move(out), [ia, ib, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    Tensor& ga = t.grad_buf(ia);
    Tensor& gb = t.grad_buf(ib);
    for (int i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double k) {
  Tensor out = val(a);
  for (double& v : out.data) v *= k;
  int ia = a.id;
  return emit(std::move(out), [ia, k, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += k * g[i];
  });
}

Var Tape::square(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v *= v;
  int ia = a.id;
  return emit(std::move(out), [ia, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += 2.0 * va[i] * g[i];
  });
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::max(v, 0.0);
  int ia = a.id;
  return emit(std::move(out), [ia, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < g.size(); ++i)
      if (va[i] > 0.0) ga[i] += g[i];
  });
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  int ia = a.id;
  return emit(std::move(out), [ia, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& vo = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < g.size(); ++i)
      ga[i] += g[i] * vo[i] * (1.0 - vo[i]);
  });
}

// ---------------------------------------------------------------------- shape

Var Tape::reshape(Var a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (Tensor::count(shape) != ta.size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = ta;
  out.shape = std::move(shape);
  int ia = a.id;
  return emit(std::move(out), [ia, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::slice(Var a, int offset, int len) {
  const Tensor& ta = val(a);
  if (offset < 0 || len <= 0 || offset + len > ta.size())
    throw std::invalid_argument("slice: range out of bounds");
  Tensor out({len});
  for (int i = 0; i < len; ++i) out[i] = ta[offset + i];
  int ia = a.id;
  return emit(std::move(out), [ia, offset, len, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < len; ++i) ga[offset + i] += g[i];
  });
}

Var Tape::slice_channel(Var x, int c) {
  const Tensor& tx = val(x);
  int h = tx.dim(1), w = tx.dim(2);
  Tensor out({h, w});
  for (int i = 0; i < h * w; ++i) out[i] = tx[c * h * w + i];
  int ix = x.id;
  return emit(std::move(out), [ix, c, h, w, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_buf(ix);
    for (int i = 0; i < h * w; ++i) gx[c * h * w + i] += g[i];
  });
}

Var Tape::column(Var x, int c) {
  const Tensor& tx = val(x);
  int n = tx.dim(0), k = tx.dim(1);
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[i] = tx[i * k + c];
  int ix = x.id;
  return emit(std::move(out), [ix, c, n, k, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_buf(ix);
    for (int i = 0; i < n; ++i) gx[i * k + c] += g[i];
  });
}

Var Tape::concat_channels(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.dim(1) != tb.dim(1) || ta.dim(2) != tb.dim(2))
    throw std::invalid_argument("concat_channels: spatial mismatch");
  int ca = ta.dim(0), cb = tb.dim(0), hw = ta.dim(1) * ta.dim(2);
  Tensor out({ca + cb, ta.dim(1), ta.dim(2)});
  std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + ca * hw);
  int ia = a.id, ib = b.id;
  return emit(std::move(out), [ia, ib, ca, cb, hw, self = size()](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    Tensor& gb = t.grad_buf(ib);
    for (int i = 0; i < ca * hw; ++i) ga[i] += g[i];
    for (int i = 0; i < cb * hw; ++i) gb[i] += g[ca * hw + i];
  });
}

Var Tape::concat_rows_broadcast(Var x, Var g) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(g);
  int n = tx.dim(0), f1 = tx.dim(1), f2 = tg.dim(0);
  Tensor out({n, f1 + f2});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f1; ++j) out.at(i, j) = tx.at(i, j);
    for (int j = 0; j < f2; ++j) out.at(i, f1 + j) = tg[j];
  }
  int ix = x.id, ig = g.id;
  return emit(std::move(out), [ix, ig, n, f1, f2, self = size()](Tape& t) {
    const Tensor& go = t.nodes_[self].grad;
    Tensor& gx = t.grad_buf(ix);
    Tensor& gg = t.grad_buf(ig);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < f1; ++j) gx[i * f1 + j] += go[i * (f1 + f2) + j];
      for (int j = 0; j < f2; ++j) gg[j] += go[i * (f1 + f2) + f1 + j];
    }
  });
}

// --------------------------------------------------------------------- layers

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  int n = tx.dim(0), k = tx.dim(1), m = tw.dim(0);
  if (tw.dim(1) != k || tb.dim(0) != m)
    throw std::invalid_argument("linear: shape mismatch");
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double s = tb[j];
      const double* xr = tx.data.data() + static_cast<size_t>(i) * k;
      const double* wr = tw.data.data() + static_cast<size_t>(j) * k;
      for (int q = 0; q < k; ++q) s += xr[q] * wr[q];
      out.at(i, j) = s;
    }
  int ix = x.id, iw = w.id, ib = b.id;
  return emit(std::move(out), [ix, iw, ib, n, k, m, self = size()](Tape& t) {
    const Tensor& go = t.nodes_[self].grad;
    const Tensor& vx = t.nodes_[ix].value;
    const Tensor& vw = t.nodes_[iw].value;
    Tensor& gx = t.grad_buf(ix);
    Tensor& gw = t.grad_buf(iw);
    Tensor& gb = t.grad_buf(ib);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        double g = go[i * m + j];
        if (g == 0.0) continue;
        gb[j] += g;
        for (int q = 0; q < k; ++q) {
          gx[i * k + q] += g * vw[j * k + q];
          gw[j * k + q] += g * vx[i * k + q];
        }
      }
  });
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, Pad pad) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  int c = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
  int oc = tw.dim(0), k = tw.dim(2);
  if (tw.dim(1) != c || tw.dim(3) != k || tb.dim(0) != oc)
    throw std::invalid_argument("conv2d: shape mismatch");
  int p = k / 2;
  int oh = (h + 2 * p - k) / stride + 1;
  int ow = (wd + 2 * p - k) / stride + 1;
  Tensor out({oc, oh, ow});
  for (int o = 0; o < oc; ++o)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double s = tb[o];
        for (int ci = 0; ci < c; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int y = i * stride - p + ky;
              int xx = j * stride - p + kx;
              double v;
              if (pad == Pad::kReplicate) {
                v = tx.at(ci, clampi(y, 0, h - 1), clampi(xx, 0, wd - 1));
              } else {
                v = (y < 0 || y >= h || xx < 0 || xx >= wd)
                        ? 0.0
                        : tx.at(ci, y, xx);
              }
              s += v * tw.data[((static_cast<size_t>(o) * c + ci) * k + ky) *
                                   k +
                               kx];
            }
        out.at(o, i, j) = s;
      }
  int ix = x.id, iw = w.id, ib = b.id;
  return emit(std::move(out), [=, self = size()](Tape& t) {
    const Tensor& go = t.nodes_[self].grad;
    const Tensor& vx = t.nodes_[ix].value;
    const Tensor& vw = t.nodes_[iw].value;
    Tensor& gx = t.grad_buf(ix);
    Tensor& gw = t.grad_buf(iw);
    Tensor& gb = t.grad_buf(ib);
    for (int o = 0; o < oc; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double g = go.at(o, i, j);
          if (g == 0.0) continue;
          gb[o] += g;
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                int y = i * stride - p + ky;
                int xx = j * stride - p + kx;
                size_t wi =
                    ((static_cast<size_t>(o) * c + ci) * k + ky) * k + kx;
                if (pad == Pad::kReplicate) {
                  int cy = clampi(y, 0, h - 1);
                  int cx = clampi(xx, 0, wd - 1);
                  gw.data[wi] += g * vx.at(ci, cy, cx);
                  gx.data[(static_cast<size_t>(ci) * h + cy) * wd + cx] +=
                      g * vw.data[wi];
                } else if (y >= 0 && y < h && xx >= 0 && xx < wd) {
                  gw.data[wi] += g * vx.at(ci, y, xx);
                  gx.data[(static_cast<size_t>(ci) * h + y) * wd + xx] +=
                      g * vw.data[wi];
                }
              }
        }
  });
}

Var Tape::colmax(Var x) {
  const Tensor& tx = val(x);
  int n = tx.dim(0), f = tx.dim(1);
  if (n == 0) throw std::invalid_argument("colmax: empty input");
  Tensor out({f});
  std::vector<int> arg(static_cast<size_t>(f), 0);
  for (int j = 0; j < f; ++j) {
    double best = tx.at(0, j);
    for (int i = 1; i < n; ++i)
      if (tx.at(i, j) > best) {
        best = tx.at(i, j);
        arg[j] = i;
      }
    out[j] = best;
  }
  int ix = x.id;
  return emit(std::move(out),
              [ix, f, arg = std::move(arg), self = size()](Tape& t) {
                const Tensor& g = t.nodes_[self].grad;
                Tensor& gx = t.grad_buf(ix);
                for (int j = 0; j < f; ++j) gx[arg[j] * f + j] += g[j];
              });
}

Var Tape::crop_resize(Var x, double x0, double y0, double x1, double y1,
                      int g) {
  const Tensor& tx = val(x);
  int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  if (x1 <= x0 || y1 <= y0)
    throw std::invalid_argument("crop_resize: degenerate box");
  // Precompute the bilinear taps once; backward reuses them.
  struct Tap {
    int j0, j1, i0, i1;
    double fx, fy;
  };
  std::vector<Tap> taps(static_cast<size_t>(g) * g);
  for (int gy = 0; gy < g; ++gy)
    for (int gx_ = 0; gx_ < g; ++gx_) {
      double sx = x0 + (gx_ + 0.5) * (x1 - x0) / g - 0.5;
      double sy = y0 + (gy + 0.5) * (y1 - y0) / g - 0.5;
      sx = clampd(sx, 0.0, w - 1.0);
      sy = clampd(sy, 0.0, h - 1.0);
      Tap tp;
      tp.j0 = static_cast<int>(std::floor(sx));
      tp.i0 = static_cast<int>(std::floor(sy));
      tp.j0 = clampi(tp.j0, 0, w - 1);
      tp.i0 = clampi(tp.i0, 0, h - 1);
      tp.j1 = std::min(tp.j0 + 1, w - 1);
      tp.i1 = std::min(tp.i0 + 1, h - 1);
      tp.fx = sx - tp.j0;
      tp.fy = sy - tp.i0;
      taps[static_cast<size_t>(gy) * g + gx_] = tp;
    }
  Tensor out({c, g, g});
  for (int ci = 0; ci < c; ++ci)
    for (int q = 0; q < g * g; ++q) {
      const Tap& tp = taps[q];
      double v00 = tx.at(ci, tp.i0, tp.j0), v01 = tx.at(ci, tp.i0, tp.j1);
      double v10 = tx.at(ci, tp.i1, tp.j0), v11 = tx.at(ci, tp.i1, tp.j1);
      out.data[static_cast<size_t>(ci) * g * g + q] =
          (1 - tp.fy) * ((1 - tp.fx) * v00 + tp.fx * v01) +
          tp.fy * ((1 - tp.fx) * v10 + tp.fx * v11);
    }
  int ix = x.id;
  return emit(std::move(out),
              [ix, c, h, w, g, taps = std::move(taps), self = size()](Tape& t) {
                const Tensor& go = t.nodes_[self].grad;
                Tensor& gx = t.grad_buf(ix);
                for (int ci = 0; ci < c; ++ci)
                  for (int q = 0; q < g * g; ++q) {
                    double gv = go.data[static_cast<size_t>(ci) * g * g + q];
                    if (gv == 0.0) continue;
                    const auto& tp = taps[q];
                    auto idx = [&](int i, int j) {
                      return (static_cast<size_t>(ci) * h + i) * w + j;
                    };
                    gx.data[idx(tp.i0, tp.j0)] += gv * (1 - tp.fy) * (1 - tp.fx);
                    gx.data[idx(tp.i0, tp.j1)] += gv * (1 - tp.fy) * tp.fx;
                    gx.data[idx(tp.i1, tp.j0)] += gv * tp.fy * (1 - tp.fx);
                    gx.data[idx(tp.i1, tp.j1)] += gv * tp.fy * tp.fx;
                  }
              });
}

Var Tape::project_cells(Var x, const std::vector<std::vector<int>>& cell_points,
                        int g) {
  const Tensor& tx = val(x);
  if (static_cast<int>(cell_points.size()) != g * g)
    throw std::invalid_argument("project_cells: plan size mismatch");
  Tensor out({g, g});
  for (int q = 0; q < g * g; ++q) {
    const auto& pts = cell_points[q];
    if (pts.empty()) throw std::invalid_argument("project_cells: empty cell");
    double s = 0.0;
    for (int p : pts) s += tx[p];
    out[q] = s / pts.size();
  }
  int ix = x.id;
  return emit(std::move(out), [ix, g, plan = cell_points, self = size()](
                                  Tape& t) {
    const Tensor& go = t.nodes_[self].grad;
    Tensor& gx = t.grad_buf(ix);
    for (int q = 0; q < g * g; ++q) {
      double gv = go[q];
      if (gv == 0.0) continue;
      double inv = 1.0 / plan[q].size();
      for (int p : plan[q]) gx[p] += gv * inv;
    }
  });
}

// --------------------------------------------------------- reductions, losses

Var Tape::sum_all(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  int ia = a.id;
  return emit(Tensor::scalar(s), [ia, self = size()](Tape& t) {
    double g = t.nodes_[self].grad[0];
    Tensor& ga = t.grad_buf(ia);
    for (double& v : ga.data) v += g;
  });
}

Var Tape::mean_all(Var a) {
  return scale(sum_all(a), 1.0 / val(a).size());
}

Var Tape::bce_mean(Var pred, const Tensor& target, double eps) {
  const Tensor& tp = val(pred);
  if (!tp.same_shape(target))
    throw std::invalid_argument("bce_mean: shape mismatch");
  int n = tp.size();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double p = clampd(tp[i], eps, 1.0 - eps);
    loss -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  loss /= n;
  int ip = pred.id;
  return emit(Tensor::scalar(loss), [ip, target, eps, n, self = size()](
                                        Tape& t) {
    double g = t.nodes_[self].grad[0] / n;
    const Tensor& vp = t.nodes_[ip].value;
    Tensor& gp = t.grad_buf(ip);
    for (int i = 0; i < n; ++i) {
      if (vp[i] <= eps || vp[i] >= 1.0 - eps) continue;  // clamped: flat
      gp[i] += g * (-(target[i] / vp[i]) + (1.0 - target[i]) / (1.0 - vp[i]));
    }
  });
}

Var Tape::symmetric_ce_mean(Var a, Var b, double eps) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("symmetric_ce_mean: shape mismatch");
  int n = ta.size();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double pa = clampd(ta[i], eps, 1.0 - eps);
    double pb = clampd(tb[i], eps, 1.0 - eps);
    double hab = -(pa * std::log(pb) + (1.0 - pa) * std::log(1.0 - pb));
    double hba = -(pb * std::log(pa) + (1.0 - pb) * std::log(1.0 - pa));
    loss += 0.5 * (hab + hba);
  }
  loss /= n;
  int ia = a.id, ib = b.id;
  return emit(Tensor::scalar(loss), [ia, ib, eps, n, self = size()](Tape& t) {
    double g = t.nodes_[self].grad[0] / n * 0.5;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    Tensor& ga = t.grad_buf(ia);
    Tensor& gb = t.grad_buf(ib);
    for (int i = 0; i < n; ++i) {
      double pa = clampd(va[i], eps, 1.0 - eps);
      double pb = clampd(vb[i], eps, 1.0 - eps);
      bool a_free = va[i] > eps && va[i] < 1.0 - eps;
      bool b_free = vb[i] > eps && vb[i] < 1.0 - eps;
      // dH(a,b)/da = -log pb + log(1-pb); dH(b,a)/da = -(pb/pa) + (1-pb)/(1-pa)
      if (a_free)
        ga[i] += g * ((-std::log(pb) + std::log(1.0 - pb)) +
                      (-(pb / pa) + (1.0 - pb) / (1.0 - pa)));
      if (b_free)
        gb[i] += g * ((-std::log(pa) + std::log(1.0 - pa)) +
                      (-(pa / pb) + (1.0 - pa) / (1.0 - pb)));
    }
  });
}

Var Tape::laplacian_energy(Var m) {
  const Tensor& tm = val(m);
  if (tm.ndim() != 2) throw std::invalid_argument("laplacian_energy: rank");
  int h = tm.dim(0), w = tm.dim(1);
  double loss = 0.0;
  Tensor resp({h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double r = tm.at(clampi(i - 1, 0, h - 1), j) +
                 tm.at(clampi(i + 1, 0, h - 1), j) +
                 tm.at(i, clampi(j - 1, 0, w - 1)) +
                 tm.at(i, clampi(j + 1, 0, w - 1)) - 4.0 * tm.at(i, j);
      resp.at(i, j) = r;
      loss += r * r;
    }
  int im = m.id;
  return emit(Tensor::scalar(loss),
              [im, h, w, resp = std::move(resp), self = size()](Tape& t) {
                double g = t.nodes_[self].grad[0];
                Tensor& gm = t.grad_buf(im);
                auto acc = [&](int i, int j, double v) {
                  gm.data[static_cast<size_t>(clampi(i, 0, h - 1)) * w +
                          clampi(j, 0, w - 1)] += v;
                };
                for (int i = 0; i < h; ++i)
                  for (int j = 0; j < w; ++j) {
                    double c = 2.0 * g * resp.at(i, j);
                    if (c == 0.0) continue;
                    acc(i - 1, j, c);
                    acc(i + 1, j, c);
                    acc(i, j - 1, c);
                    acc(i, j + 1, c);
                    gm.data[static_cast<size_t>(i) * w + j] -= 4.0 * c;
                  }
              });
}

Var Tape::softmax_ce(Var logits, int label) {
  const Tensor& tl = val(logits);
  int k = tl.size();
  if (label < 0 || label >= k)
    throw std::invalid_argument("softmax_ce: label out of range");
  double mx = *std::max_element(tl.data.begin(), tl.data.end());
  double lse = 0.0;
  for (double v : tl.data) lse += std::exp(v - mx);
  lse = mx + std::log(lse);
  double loss = lse - tl[label];
  int il = logits.id;
  return emit(Tensor::scalar(loss), [il, label, k, lse, self = size()](
                                        Tape& t) {
    double g = t.nodes_[self].grad[0];
    const Tensor& vl = t.nodes_[il].value;
    Tensor& gl = t.grad_buf(il);
    for (int i = 0; i < k; ++i) {
      double soft = std::exp(vl[i] - lse);
      gl[i] += g * (soft - (i == label ? 1.0 : 0.0));
    }
  });
}

Var Tape::smooth_l1_sum(Var pred, const Tensor& target) {
  const Tensor& tp = val(pred);
  if (!tp.same_shape(target))
    throw std::invalid_argument("smooth_l1_sum: shape mismatch");
  double loss = 0.0;
  for (int i = 0; i < tp.size(); ++i) {
    double e = tp[i] - target[i];
    loss += std::abs(e) < 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
  }
  int ip = pred.id;
  return emit(Tensor::scalar(loss), [ip, target, self = size()](Tape& t) {
    double g = t.nodes_[self].grad[0];
    const Tensor& vp = t.nodes_[ip].value;
    Tensor& gp = t.grad_buf(ip);
    for (int i = 0; i < vp.size(); ++i) {
      double e = vp[i] - target[i];
      gp[i] += g * (std::abs(e) < 1.0 ? e : (e > 0 ? 1.0 : -1.0));
    }
  });
}

}  // namespace geoseg::ad
