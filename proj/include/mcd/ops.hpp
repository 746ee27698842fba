#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mcd/tensor.hpp"

namespace mcd {

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(m * n, 0.0);
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    auto an = a.node(), bn = b.node();
    return detail::make_op_output(
        {m, n}, std::move(out), {an, bn},
        [m, k, n, an, bn](detail::TensorNode& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = self.grad[i * n + j];
                        for (std::size_t p = 0; p < k; ++p)
                            an->grad[i * k + p] += g * bn->values[p * n + j];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = self.grad[i * n + j];
                        for (std::size_t p = 0; p < k; ++p)
                            bn->grad[p * n + j] += an->values[i * k + p] * g;
                    }
            }
        });
}

// 3x3 cross-correlation, stride 1, zero padding 1; spatial dims preserved.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel) {
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    if (is.size() != 4 || ks.size() != 4 || ks[2] != 3 || ks[3] != 3)
        throw DimensionError("conv2d: expected input [b,c,h,w] and kernel [co,ci,3,3], got " +
                             shape_str(is) + " and " + shape_str(ks));
    if (is[1] != ks[1])
        throw DimensionError("conv2d: input channels " + shape_str(is) +
                             " do not match kernel " + shape_str(ks));
    const std::size_t nb = is[0], ci = is[1], h = is[2], w = is[3], co = ks[0];
    std::vector<double> out(nb * co * h * w, 0.0);
    const auto iv = input.values(), kv = kernel.values();
    auto in_at = [&](std::size_t b, std::size_t c, long y, long x) -> double {
        if (y < 0 || x < 0 || y >= (long)h || x >= (long)w) return 0.0;
        return iv[((b * ci + c) * h + y) * w + x];
    };
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < ci; ++c)
                        for (int dy = 0; dy < 3; ++dy)
                            for (int dx = 0; dx < 3; ++dx)
                                acc += in_at(b, c, (long)y + dy - 1, (long)x + dx - 1) *
                                       kv[((o * ci + c) * 3 + dy) * 3 + dx];
                    out[((b * co + o) * h + y) * w + x] = acc;
                }
    auto in_n = input.node(), k_n = kernel.node();
    return detail::make_op_output(
        {nb, co, h, w}, std::move(out), {in_n, k_n},
        [nb, ci, h, w, co, in_n, k_n](detail::TensorNode& self) {
            const bool gi = in_n->requires_grad, gk = k_n->requires_grad;
            if (gi) in_n->ensure_grad();
            if (gk) k_n->ensure_grad();
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t o = 0; o < co; ++o)
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t x = 0; x < w; ++x) {
                            const double g = self.grad[((b * co + o) * h + y) * w + x];
                            if (g == 0.0) continue;
                            for (std::size_t c = 0; c < ci; ++c)
                                for (int dy = 0; dy < 3; ++dy) {
                                    const long iy = (long)y + dy - 1;
                                    if (iy < 0 || iy >= (long)h) continue;
                                    for (int dx = 0; dx < 3; ++dx) {
                                        const long ix = (long)x + dx - 1;
                                        if (ix < 0 || ix >= (long)w) continue;
                                        const std::size_t ii = ((b * ci + c) * h + iy) * w + ix;
                                        const std::size_t ki = ((o * ci + c) * 3 + dy) * 3 + dx;
                                        if (gi) in_n->grad[ii] += g * k_n->values[ki];
                                        if (gk) k_n->grad[ki] += g * in_n->values[ii];
                                    }
                                }
                        }
        });
}

// Elementwise max(0, x); subgradient at 0 is 0.
inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    auto xn = x.node();
    return detail::make_op_output(x.shape(), std::move(out), {xn},
                                  [xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          if (xn->values[i] > 0.0) xn->grad[i] += self.grad[i];
                                  });
}

// 2x2 non-overlapping window mean over [b,c,h,w]; h and w must be even.
inline Tensor avgpool2d(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0)
        throw DimensionError("avgpool2d: expected [b,c,even,even], got " + shape_str(s));
    const std::size_t nb = s[0], c = s[1], h = s[2], w = s[3], oh = h / 2, ow = w / 2;
    std::vector<double> out(nb * c * oh * ow);
    const auto xv = x.values();
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const std::size_t base = ((b * c + ch) * h + 2 * y) * w + 2 * xx;
                    out[((b * c + ch) * oh + y) * ow + xx] =
                        0.25 * (xv[base] + xv[base + 1] + xv[base + w] + xv[base + w + 1]);
                }
    auto xn = x.node();
    return detail::make_op_output(
        {nb, c, oh, ow}, std::move(out), {xn},
        [nb, c, h, w, oh, ow, xn](detail::TensorNode& self) {
            xn->ensure_grad();
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t y = 0; y < oh; ++y)
                        for (std::size_t xx = 0; xx < ow; ++xx) {
                            const double g =
                                0.25 * self.grad[((b * c + ch) * oh + y) * ow + xx];
                            const std::size_t base = ((b * c + ch) * h + 2 * y) * w + 2 * xx;
                            xn->grad[base] += g;
                            xn->grad[base + 1] += g;
                            xn->grad[base + w] += g;
                            xn->grad[base + w + 1] += g;
                        }
        });
}

// Broadcast bias add: [n,K]+[K], or [b,c,h,w]+[c].
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    const auto& xs = x.shape();
    const auto& bs = b.shape();
    std::size_t chan, inner;
    if (xs.size() == 2 && bs.size() == 1 && bs[0] == xs[1]) {
        chan = xs[1];
        inner = 1;
    } else if (xs.size() == 4 && bs.size() == 1 && bs[0] == xs[1]) {
        chan = xs[1];
        inner = xs[2] * xs[3];
    } else {
        throw DimensionError("add_bias: incompatible shapes " + shape_str(xs) + " and " +
                             shape_str(bs));
    }
    std::vector<double> out(x.size());
    const auto xv = x.values(), bv = b.values();
    const std::size_t groups = x.size() / (chan * inner);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t c = 0; c < chan; ++c)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t idx = (g * chan + c) * inner + i;
                out[idx] = xv[idx] + bv[c];
            }
    auto xn = x.node(), bn = b.node();
    return detail::make_op_output(
        xs, std::move(out), {xn, bn},
        [groups, chan, inner, xn, bn](detail::TensorNode& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t g = 0; g < groups; ++g)
                    for (std::size_t c = 0; c < chan; ++c)
                        for (std::size_t i = 0; i < inner; ++i)
                            bn->grad[c] += self.grad[(g * chan + c) * inner + i];
            }
        });
}

// Spatial mean: [b,c,h,w] -> [b,c].
inline Tensor global_avgpool(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() != 4) throw DimensionError("global_avgpool: expected [b,c,h,w], got " + shape_str(s));
    const std::size_t nb = s[0], c = s[1], hw = s[2] * s[3];
    std::vector<double> out(nb * c, 0.0);
    const auto xv = x.values();
    for (std::size_t i = 0; i < nb * c; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < hw; ++j) acc += xv[i * hw + j];
        out[i] = acc / (double)hw;
    }
    auto xn = x.node();
    return detail::make_op_output({nb, c}, std::move(out), {xn},
                                  [nb, c, hw, xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < nb * c; ++i) {
                                          const double g = self.grad[i] / (double)hw;
                                          for (std::size_t j = 0; j < hw; ++j)
                                              xn->grad[i * hw + j] += g;
                                      }
                                  });
}

// Row-wise softmax with max subtraction; backward is the full
// Jacobian-vector product dz_j = p_j * (g_j - sum_k g_k p_k).
inline Tensor softmax(const Tensor& logits) {
    const auto& s = logits.shape();
    if (s.size() != 2 || s[1] < 2)
        throw DimensionError("softmax: expected [n,K] with K>=2, got " + shape_str(s));
    const std::size_t n = s[0], k = s[1];
    std::vector<double> out(n * k);
    const auto lv = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
        double mx = lv[i * k];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv[i * k + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            out[i * k + j] = std::exp(lv[i * k + j] - mx);
            z += out[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
    }
    auto ln = logits.node();
    return detail::make_op_output(s, std::move(out), {ln},
                                  [n, k, ln](detail::TensorNode& self) {
                                      ln->ensure_grad();
                                      for (std::size_t i = 0; i < n; ++i) {
                                          double dot = 0.0;
                                          for (std::size_t j = 0; j < k; ++j)
                                              dot += self.grad[i * k + j] * self.values[i * k + j];
                                          for (std::size_t j = 0; j < k; ++j)
                                              ln->grad[i * k + j] +=
                                                  self.values[i * k + j] *
                                                  (self.grad[i * k + j] - dot);
                                      }
                                  });
}

// ln(x + eps); eps keeps one-hot probability rows finite.
inline Tensor log_eps(const Tensor& x, double eps = 1e-12) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i] + eps);
    auto xn = x.node();
    return detail::make_op_output(x.shape(), std::move(out), {xn},
                                  [eps, xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          xn->grad[i] += self.grad[i] / (xn->values[i] + eps);
                                  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op_output(a.shape(), std::move(out), {an, bn},
                                  [an, bn](detail::TensorNode& self) {
                                      if (an->requires_grad) {
                                          an->ensure_grad();
                                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                                              an->grad[i] += self.grad[i] * bn->values[i];
                                      }
                                      if (bn->requires_grad) {
                                          bn->ensure_grad();
                                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                                              bn->grad[i] += self.grad[i] * an->values[i];
                                      }
                                  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op_output(a.shape(), std::move(out), {an, bn},
                                  [an, bn](detail::TensorNode& self) {
                                      for (auto* p : {an.get(), bn.get()})
                                          if (p->requires_grad) {
                                              p->ensure_grad();
                                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                                  p->grad[i] += self.grad[i];
                                          }
                                  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op_output(a.shape(), std::move(out), {an, bn},
                                  [an, bn](detail::TensorNode& self) {
                                      if (an->requires_grad) {
                                          an->ensure_grad();
                                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                                              an->grad[i] += self.grad[i];
                                      }
                                      if (bn->requires_grad) {
                                          bn->ensure_grad();
                                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                                              bn->grad[i] -= self.grad[i];
                                      }
                                  });
}

inline Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
    auto xn = x.node();
    return detail::make_op_output(x.shape(), std::move(out), {xn},
                                  [c, xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          xn->grad[i] += c * self.grad[i];
                                  });
}

// c - x, elementwise.
inline Tensor sub_from(double c, const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - xv[i];
    auto xn = x.node();
    return detail::make_op_output(x.shape(), std::move(out), {xn},
                                  [xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          xn->grad[i] -= self.grad[i];
                                  });
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    auto xn = x.node();
    return detail::make_op_output(Shape{}, {acc}, {xn}, [xn](detail::TensorNode& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
    });
}

inline Tensor mean(const Tensor& x) {
    const double n = (double)x.size();
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    auto xn = x.node();
    return detail::make_op_output(Shape{}, {acc / n}, {xn}, [n, xn](detail::TensorNode& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0] / n;
    });
}

// Sum over the last dimension of a [n,K] tensor -> [n].
inline Tensor row_sum(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() != 2) throw DimensionError("row_sum: expected [n,K], got " + shape_str(s));
    const std::size_t n = s[0], k = s[1];
    std::vector<double> out(n, 0.0);
    const auto xv = x.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) out[i] += xv[i * k + j];
    auto xn = x.node();
    return detail::make_op_output({n}, std::move(out), {xn},
                                  [n, k, xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < n; ++i)
                                          for (std::size_t j = 0; j < k; ++j)
                                              xn->grad[i * k + j] += self.grad[i];
                                  });
}

// Gather one entry per row: out[i] = x[i, idx[i]].
inline Tensor pick_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    const auto& s = x.shape();
    if (s.size() != 2 || idx.size() != s[0])
        throw DimensionError("pick_rows: expected [n,K] with n indices, got " + shape_str(s));
    const std::size_t n = s[0], k = s[1];
    std::vector<double> out(n);
    const auto xv = x.values();
    for (std::size_t i = 0; i < n; ++i) {
        if (idx[i] >= k)
            throw DataError("pick_rows: index " + std::to_string(idx[i]) + " out of range at row " +
                            std::to_string(i));
        out[i] = xv[i * k + idx[i]];
    }
    auto xn = x.node();
    return detail::make_op_output({n}, std::move(out), {xn},
                                  [k, idx, xn](detail::TensorNode& self) {
                                      xn->ensure_grad();
                                      for (std::size_t i = 0; i < idx.size(); ++i)
                                          xn->grad[i * k + idx[i]] += self.grad[i];
                                  });
}

}  // namespace mcd
