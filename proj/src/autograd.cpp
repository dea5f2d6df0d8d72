// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lftrank {

namespace {

// Views every tensor as a matrix; rank-1 becomes a row.
template <typename T>
Shape as_matrix(const Tensor<T>& t) {
    return {t.rows(), t.cols()};
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()) + " differ");
    }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.data();
    const T* s = src.data();
    const std::size_t n = dst.numel();
    for (std::size_t i = 0; i < n; ++i) {
        d[i] += s[i];
    }
}

template <typename T>
Tensor<T> reshaped(const Tensor<T>& grad, const Shape& shape) {
    return Tensor<T>(shape, grad.values());
}

constexpr double kGeluC = 0.7978845608;
constexpr double kGeluA = 0.044715;

}  // namespace

namespace kernels {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) +
                             " x " + shape_string(b.shape()));
    }
    Tensor<T> out({m, n});
    T* o = out.data();
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        T* orow = o + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[i * k + p];
            if (av == T(0)) {
                continue;
            }
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw DimensionError("matmul_nt: inner dimensions differ for " + shape_string(a.shape()) +
                             " x " + shape_string(b.shape()) + "^T");
    }
    Tensor<T> out({m, n});
    T* o = out.data();
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = pb + j * k;
            T acc = T(0);
            for (std::size_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            o[i * n + j] = acc;
        }
    }
    return out;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul_tn: inner dimensions differ for " + shape_string(a.shape()) +
                             "^T x " + shape_string(b.shape()));
    }
    Tensor<T> out({m, n});
    T* o = out.data();
    const T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t p = 0; p < k; ++p) {
        const T* brow = pb + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = pa[p * m + i];
            if (av == T(0)) {
                continue;
            }
            T* orow = o + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    Tensor<T> out(as_matrix(x));
    const std::size_t n = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const T* in = x.data() + r * n;
        T* o = out.data() + r * n;
        T hi = *std::max_element(in, in + n);
        T total = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - hi);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            o[j] /= total;
        }
    }
    return out;
}

}  // namespace kernels

template <typename T>
Var<T> Tape<T>::push(const char* op, Tensor<T> value, bool requires_grad, Backward backward) {
    if (check_finite_ && !value.all_finite()) {
        throw InvariantError(std::string("non-finite value produced by ") + op);
    }
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad && record_;
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::reference(const Tensor<T>& external, bool requires_grad) {
    Node node;
    node.external = &external;
    node.requires_grad = requires_grad && record_;
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, Tensor<T>&& grad) {
    Node& node = nodes_[v.id];
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.empty()) {
        node.grad = Tensor<T>(value(v).shape(), std::move(grad.values()));
    } else {
        add_into(node.grad, grad);
    }
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (value(loss).numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_string(value(loss).shape()));
    }
    for (auto& node : nodes_) {
        node.grad = Tensor<T>();
    }
    if (!nodes_[loss.id].requires_grad) {
        return;
    }
    nodes_[loss.id].grad = Tensor<T>(value(loss).shape(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.backward || node.grad.empty()) {
            continue;
        }
        node.backward(*this, node.grad);
    }
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
    const Node& node = nodes_[v.id];
    if (node.grad.empty()) {
        return Tensor<T>(value(v).shape());
    }
    return node.grad;
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    Tensor<T> out = kernels::matmul(a.value(), b.value());
    return t.push("matmul", std::move(out), t.any_requires_grad(a, b),
                  [a, b](Tape<T>& tape, const Tensor<T>& g) {
                      if (tape.requires_grad(a)) {
                          tape.accumulate(a, kernels::matmul_nt(g, b.value()));
                      }
                      if (tape.requires_grad(b)) {
                          tape.accumulate(b, kernels::matmul_tn(a.value(), g));
                      }
                  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    Tensor<T> out = kernels::matmul_nt(a.value(), b.value());
    return t.push("matmul_nt", std::move(out), t.any_requires_grad(a, b),
                  [a, b](Tape<T>& tape, const Tensor<T>& g) {
                      if (tape.requires_grad(a)) {
                          tape.accumulate(a, kernels::matmul(g, b.value()));
                      }
                      if (tape.requires_grad(b)) {
                          tape.accumulate(b, kernels::matmul_tn(g, a.value()));
                      }
                  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    require_same_shape("add", a.value(), b.value());
    Tensor<T> out(as_matrix(a.value()), a.value().values());
    add_into(out, b.value());
    return t.push("add", std::move(out), t.any_requires_grad(a, b),
                  [a, b](Tape<T>& tape, const Tensor<T>& g) {
                      tape.accumulate(a, reshaped(g, a.value().shape()));
                      tape.accumulate(b, reshaped(g, b.value().shape()));
                  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    require_same_shape("sub", a.value(), b.value());
    Tensor<T> out(as_matrix(a.value()), a.value().values());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] -= b.value()[i];
    }
    return t.push("sub", std::move(out), t.any_requires_grad(a, b),
                  [a, b](Tape<T>& tape, const Tensor<T>& g) {
                      tape.accumulate(a, reshaped(g, a.value().shape()));
                      if (tape.requires_grad(b)) {
                          Tensor<T> neg(b.value().shape(), g.values());
                          for (auto& v : neg.values()) {
                              v = -v;
                          }
                          tape.accumulate(b, std::move(neg));
                      }
                  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>& t = *a.tape;
    require_same_shape("mul", a.value(), b.value());
    Tensor<T> out(as_matrix(a.value()));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = a.value()[i] * b.value()[i];
    }
    return t.push("mul", std::move(out), t.any_requires_grad(a, b),
                  [a, b](Tape<T>& tape, const Tensor<T>& g) {
                      if (tape.requires_grad(a)) {
                          Tensor<T> ga(a.value().shape());
                          for (std::size_t i = 0; i < ga.numel(); ++i) {
                              ga[i] = g[i] * b.value()[i];
                          }
                          tape.accumulate(a, std::move(ga));
                      }
                      if (tape.requires_grad(b)) {
                          Tensor<T> gb(b.value().shape());
                          for (std::size_t i = 0; i < gb.numel(); ++i) {
                              gb[i] = g[i] * a.value()[i];
                          }
                          tape.accumulate(b, std::move(gb));
                      }
                  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
    Tape<T>& t = *a.tape;
    Tensor<T> out(as_matrix(a.value()), a.value().values());
    for (auto& v : out.values()) {
        v *= factor;
    }
    return t.push("scale", std::move(out), t.any_requires_grad(a),
                  [a, factor](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> ga(a.value().shape(), g.values());
                      for (auto& v : ga.values()) {
                          v *= factor;
                      }
                      tape.accumulate(a, std::move(ga));
                  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias) {
    Tape<T>& t = *a.tape;
    const std::size_t m = a.rows(), n = a.cols();
    if (bias.value().numel() != n) {
        throw DimensionError("add_row: bias " + shape_string(bias.value().shape()) +
                             " does not match width of " + shape_string(a.value().shape()));
    }
    Tensor<T> out(as_matrix(a.value()), a.value().values());
    const T* b = bias.value().data();
    for (std::size_t r = 0; r < m; ++r) {
        T* row = out.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] += b[j];
        }
    }
    return t.push("add_row", std::move(out), t.any_requires_grad(a, bias),
                  [a, bias, m, n](Tape<T>& tape, const Tensor<T>& g) {
                      tape.accumulate(a, reshaped(g, a.value().shape()));
                      if (tape.requires_grad(bias)) {
                          Tensor<T> gb(bias.value().shape());
                          for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t j = 0; j < n; ++j) {
                                  gb[j] += g[r * n + j];
                              }
                          }
                          tape.accumulate(bias, std::move(gb));
                      }
                  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
    Var<T> y = matmul_nt(x, weight);
    return bias.valid() ? add_row(y, bias) : y;
}

template <typename T>
Var<T> relu(Var<T> x) {
    Tape<T>& t = *x.tape;
    Tensor<T> out(as_matrix(x.value()), x.value().values());
    for (auto& v : out.values()) {
        v = v > T(0) ? v : T(0);
    }
    return t.push("relu", std::move(out), t.any_requires_grad(x),
                  [x](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t i = 0; i < gx.numel(); ++i) {
                          gx[i] = x.value()[i] > T(0) ? g[i] : T(0);
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
    Tape<T>& t = *x.tape;
    const T c = static_cast<T>(kGeluC);
    const T a = static_cast<T>(kGeluA);
    Tensor<T> out(as_matrix(x.value()));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const T v = x.value()[i];
        out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
    }
    return t.push("gelu", std::move(out), t.any_requires_grad(x),
                  [x, c, a](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t i = 0; i < gx.numel(); ++i) {
                          const T v = x.value()[i];
                          const T th = std::tanh(c * (v + a * v * v * v));
                          const T dinner = c * (T(1) + T(3) * a * v * v);
                          gx[i] = g[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * dinner);
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> abs_value(Var<T> x) {
    Tape<T>& t = *x.tape;
    Tensor<T> out(as_matrix(x.value()));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = std::abs(x.value()[i]);
    }
    return t.push("abs", std::move(out), t.any_requires_grad(x),
                  [x](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t i = 0; i < gx.numel(); ++i) {
                          const T v = x.value()[i];
                          gx[i] = v > T(0) ? g[i] : (v < T(0) ? -g[i] : T(0));
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
    Tape<T>& t = *x.tape;
    Tensor<T> out(as_matrix(x.value()));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const T v = x.value()[i];
        if (v >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T(1) + e);
        }
    }
    const Var<T> y{&t, t.next_id()};
    return t.push("sigmoid", std::move(out), t.any_requires_grad(x),
                  [x, y](Tape<T>& tape, const Tensor<T>& g) {
                      const Tensor<T>& saved = y.value();
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t i = 0; i < gx.numel(); ++i) {
                          gx[i] = g[i] * saved[i] * (T(1) - saved[i]);
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

namespace {

template <typename T>
Var<T> softmax_impl(Var<T> x, std::span<const std::uint8_t> key_mask, const char* op) {
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols();
    const bool masked = !key_mask.empty();
    if (masked && key_mask.size() != n) {
        throw DimensionError(std::string(op) + ": mask length " + std::to_string(key_mask.size()) +
                             " != row width " + std::to_string(n));
    }
    Tensor<T> out({m, n});
    for (std::size_t r = 0; r < m; ++r) {
        const T* in = x.value().data() + r * n;
        T* o = out.data() + r * n;
        T hi = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (!masked || key_mask[j]) {
                hi = std::max(hi, in[j]);
            }
        }
        T total = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = (!masked || key_mask[j]) ? std::exp(in[j] - hi) : T(0);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            o[j] /= total;
        }
    }
    const Var<T> y{&t, t.next_id()};
    return t.push(op, std::move(out), t.any_requires_grad(x), [x, y, m, n](Tape<T>& tape, const Tensor<T>& g) {
        const Tensor<T>& p = y.value();
        Tensor<T> gx(x.value().shape());
        for (std::size_t r = 0; r < m; ++r) {
            T dot = T(0);
            for (std::size_t j = 0; j < n; ++j) {
                dot += g[r * n + j] * p[r * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                gx[r * n + j] = p[r * n + j] * (g[r * n + j] - dot);
            }
        }
        tape.accumulate(x, std::move(gx));
    });
}

}  // namespace

template <typename T>
Var<T> softmax_rows(Var<T> x) {
    return softmax_impl<T>(x, {}, "softmax_rows");
}

template <typename T>
Var<T> masked_softmax_rows(Var<T> x, std::span<const std::uint8_t> key_mask) {
    return softmax_impl<T>(x, key_mask, "masked_softmax_rows");
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps) {
    if (!(eps > 0.0)) {
        throw ContractError("layer_norm: eps must be positive");
    }
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.value().numel() != n || bias.value().numel() != n) {
        throw DimensionError("layer_norm: gain/bias width does not match " +
                             shape_string(x.value().shape()));
    }
    Tensor<T> out({m, n});
    Tensor<T> xhat({m, n});
    std::vector<T> inv_std(m);
    const T* gp = gain.value().data();
    const T* bp = bias.value().data();
    for (std::size_t r = 0; r < m; ++r) {
        const T* in = x.value().data() + r * n;
        T mu = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            mu += in[j];
        }
        mu /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            const T d = in[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        inv_std[r] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const T h = (in[j] - mu) * inv;
            xhat[r * n + j] = h;
            out[r * n + j] = gp[j] * h + bp[j];
        }
    }
    return t.push("layer_norm", std::move(out), t.any_requires_grad(x, gain, bias),
                  [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape<T>& tape, const Tensor<T>& g) {
                      const T* gp = gain.value().data();
                      if (tape.requires_grad(gain) || tape.requires_grad(bias)) {
                          Tensor<T> gg(gain.value().shape());
                          Tensor<T> gb(bias.value().shape());
                          for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t j = 0; j < n; ++j) {
                                  gg[j] += g[r * n + j] * xhat[r * n + j];
                                  gb[j] += g[r * n + j];
                              }
                          }
                          tape.accumulate(gain, std::move(gg));
                          tape.accumulate(bias, std::move(gb));
                      }
                      if (tape.requires_grad(x)) {
                          Tensor<T> gx(x.value().shape());
                          std::vector<T> dh(n);
                          for (std::size_t r = 0; r < m; ++r) {
                              T s1 = T(0), s2 = T(0);
                              for (std::size_t j = 0; j < n; ++j) {
                                  dh[j] = g[r * n + j] * gp[j];
                                  s1 += dh[j];
                                  s2 += dh[j] * xhat[r * n + j];
                              }
                              const T inv_n = T(1) / static_cast<T>(n);
                              for (std::size_t j = 0; j < n; ++j) {
                                  gx[r * n + j] =
                                      inv_std[r] * (dh[j] - inv_n * s1 - xhat[r * n + j] * inv_n * s2);
                              }
                          }
                          tape.accumulate(x, std::move(gx));
                      }
                  });
}

template <typename T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) {
        return x;
    }
    if (rate >= 1.0) {
        throw ContractError("dropout: rate must be < 1");
    }
    Tape<T>& t = *x.tape;
    std::bernoulli_distribution keep(1.0 - rate);
    const T factor = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> mask(x.value().shape());
    for (auto& v : mask.values()) {
        v = keep(rng) ? factor : T(0);
    }
    Tensor<T> out(as_matrix(x.value()));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = x.value()[i] * mask[i];
    }
    return t.push("dropout", std::move(out), t.any_requires_grad(x),
                  [x, mask = std::move(mask)](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t i = 0; i < gx.numel(); ++i) {
                          gx[i] = g[i] * mask[i];
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols();
    if (begin + count > m) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of " + std::to_string(m) + " rows");
    }
    std::vector<T> data(x.value().data() + begin * n, x.value().data() + (begin + count) * n);
    return t.push("slice_rows", Tensor<T>({count, n}, std::move(data)), t.any_requires_grad(x),
                  [x, begin, n](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      std::copy(g.data(), g.data() + g.numel(), gx.data() + begin * n);
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols();
    if (begin + count > n) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of " + std::to_string(n) + " cols");
    }
    Tensor<T> out({m, count});
    for (std::size_t r = 0; r < m; ++r) {
        std::copy_n(x.value().data() + r * n + begin, count, out.data() + r * count);
    }
    return t.push("slice_cols", std::move(out), t.any_requires_grad(x),
                  [x, begin, count, m, n](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t r = 0; r < m; ++r) {
                          std::copy_n(g.data() + r * count, count, gx.data() + r * n + begin);
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_rows: no inputs");
    }
    Tape<T>& t = *parts.front().tape;
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw DimensionError("concat_rows: width " + std::to_string(p.cols()) + " != " +
                                 std::to_string(n));
        }
        m += p.rows();
        rg = rg || t.any_requires_grad(p);
    }
    Tensor<T> out({m, n});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy_n(p.value().data(), p.value().numel(), out.data() + offset);
        offset += p.value().numel();
    }
    return t.push("concat_rows", std::move(out), rg, [parts](Tape<T>& tape, const Tensor<T>& g) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t len = p.value().numel();
            if (tape.requires_grad(p)) {
                std::vector<T> data(g.data() + off, g.data() + off + len);
                tape.accumulate(p, Tensor<T>(p.value().shape(), std::move(data)));
            }
            off += len;
        }
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_cols: no inputs");
    }
    Tape<T>& t = *parts.front().tape;
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw DimensionError("concat_cols: rows " + std::to_string(p.rows()) + " != " +
                                 std::to_string(m));
        }
        n += p.cols();
        rg = rg || t.any_requires_grad(p);
    }
    Tensor<T> out({m, n});
    std::size_t col = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        for (std::size_t r = 0; r < m; ++r) {
            std::copy_n(p.value().data() + r * w, w, out.data() + r * n + col);
        }
        col += w;
    }
    return t.push("concat_cols", std::move(out), rg, [parts, m, n](Tape<T>& tape, const Tensor<T>& g) {
        std::size_t c = 0;
        for (const auto& p : parts) {
            const std::size_t w = p.cols();
            if (tape.requires_grad(p)) {
                Tensor<T> gp(p.value().shape());
                for (std::size_t r = 0; r < m; ++r) {
                    std::copy_n(g.data() + r * n + c, w, gp.data() + r * w);
                }
                tape.accumulate(p, std::move(gp));
            }
            c += w;
        }
    });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids) {
    Tape<T>& t = *table.tape;
    const std::size_t vocab = table.rows(), n = table.cols();
    Tensor<T> out({ids.size(), n});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                                 std::to_string(vocab) + " rows");
        }
        std::copy_n(table.value().data() + static_cast<std::size_t>(ids[i]) * n, n,
                    out.data() + i * n);
    }
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    return t.push("gather_rows", std::move(out), t.any_requires_grad(table),
                  [table, n, saved = std::move(saved)](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gt(table.value().shape());
                      for (std::size_t i = 0; i < saved.size(); ++i) {
                          T* dst = gt.data() + static_cast<std::size_t>(saved[i]) * n;
                          const T* src = g.data() + i * n;
                          for (std::size_t j = 0; j < n; ++j) {
                              dst[j] += src[j];
                          }
                      }
                      tape.accumulate(table, std::move(gt));
                  });
}

template <typename T>
Var<T> overwrite_rows(Var<T> x, std::size_t begin, Var<T> src) {
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols(), k = src.rows();
    if (src.cols() != n) {
        throw DimensionError("overwrite_rows: source width " + std::to_string(src.cols()) +
                             " != " + std::to_string(n));
    }
    if (begin + k > m) {
        throw ContractError("overwrite_rows: " + std::to_string(k) + " rows at " +
                            std::to_string(begin) + " exceed " + std::to_string(m) + " rows");
    }
    Tensor<T> out(as_matrix(x.value()), x.value().values());
    std::copy_n(src.value().data(), k * n, out.data() + begin * n);
    return t.push("overwrite_rows", std::move(out), t.any_requires_grad(x, src),
                  [x, src, begin, k, n](Tape<T>& tape, const Tensor<T>& g) {
                      if (tape.requires_grad(x)) {
                          Tensor<T> gx(x.value().shape(), g.values());
                          std::fill_n(gx.data() + begin * n, k * n, T(0));
                          tape.accumulate(x, std::move(gx));
                      }
                      if (tape.requires_grad(src)) {
                          std::vector<T> data(g.data() + begin * n, g.data() + (begin + k) * n);
                          tape.accumulate(src, Tensor<T>(src.value().shape(), std::move(data)));
                      }
                  });
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> x) {
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols();
    Tensor<T> out({m, n});
    std::vector<T> norms(m);
    for (std::size_t r = 0; r < m; ++r) {
        const T* in = x.value().data() + r * n;
        T ss = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            ss += in[j] * in[j];
        }
        const T norm = std::max(std::sqrt(ss), static_cast<T>(1e-12));
        norms[r] = norm;
        for (std::size_t j = 0; j < n; ++j) {
            out[r * n + j] = in[j] / norm;
        }
    }
    const Var<T> self{&t, t.next_id()};
    return t.push("l2_normalize_rows", std::move(out), t.any_requires_grad(x),
                  [x, m, n, self, norms = std::move(norms)](Tape<T>& tape, const Tensor<T>& g) {
                      const Tensor<T>& y = self.value();
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t r = 0; r < m; ++r) {
                          T dot = T(0);
                          for (std::size_t j = 0; j < n; ++j) {
                              dot += g[r * n + j] * y[r * n + j];
                          }
                          for (std::size_t j = 0; j < n; ++j) {
                              gx[r * n + j] = (g[r * n + j] - y[r * n + j] * dot) / norms[r];
                          }
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> row_max(Var<T> x) {
    Tape<T>& t = *x.tape;
    const std::size_t m = x.rows(), n = x.cols();
    if (n == 0) {
        throw ContractError("row_max: empty rows");
    }
    Tensor<T> out({m, 1});
    std::vector<std::size_t> arg(m);
    for (std::size_t r = 0; r < m; ++r) {
        const T* in = x.value().data() + r * n;
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (in[j] > in[best]) {
                best = j;
            }
        }
        arg[r] = best;
        out[r] = in[best];
    }
    return t.push("row_max", std::move(out), t.any_requires_grad(x),
                  [x, n, arg = std::move(arg)](Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(x.value().shape());
                      for (std::size_t r = 0; r < arg.size(); ++r) {
                          gx[r * n + arg[r]] = g[r];
                      }
                      tape.accumulate(x, std::move(gx));
                  });
}

template <typename T>
Var<T> sum(Var<T> x) {
    Tape<T>& t = *x.tape;
    T total = T(0);
    for (T v : x.value().values()) {
        total += v;
    }
    return t.push("sum", Tensor<T>::scalar(total), t.any_requires_grad(x),
                  [x](Tape<T>& tape, const Tensor<T>& g) {
                      tape.accumulate(x, Tensor<T>(x.value().shape(), g[0]));
                  });
}

template <typename T>
Var<T> mean(Var<T> x) {
    const std::size_t n = x.value().numel();
    if (n == 0) {
        throw ContractError("mean: empty tensor");
    }
    return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
    Tape<T>& t = *logits.tape;
    const std::size_t m = logits.rows(), n = logits.cols();
    if (targets.size() != m || m == 0) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(m) + " rows");
    }
    Tensor<T> probs = kernels::softmax_rows(logits.value());
    T loss = T(0);
    for (std::size_t r = 0; r < m; ++r) {
        const auto target = static_cast<std::size_t>(targets[r]);
        if (targets[r] < 0 || target >= n) {
            throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) +
                                 " outside " + std::to_string(n) + " classes");
        }
        loss -= std::log(std::max(probs[r * n + target], std::numeric_limits<T>::min()));
    }
    loss /= static_cast<T>(m);
    std::vector<std::int32_t> saved(targets.begin(), targets.end());
    return t.push("cross_entropy", Tensor<T>::scalar(loss), t.any_requires_grad(logits),
                  [logits, m, n, probs = std::move(probs), saved = std::move(saved)](
                      Tape<T>& tape, const Tensor<T>& g) {
                      Tensor<T> gx(logits.value().shape(), probs.values());
                      for (std::size_t r = 0; r < m; ++r) {
                          gx[r * n + static_cast<std::size_t>(saved[r])] -= T(1);
                      }
                      const T f = g[0] / static_cast<T>(m);
                      for (auto& v : gx.values()) {
                          v *= f;
                      }
                      tape.accumulate(logits, std::move(gx));
                  });
}

#define LFTRANK_INSTANTIATE_AUTOGRAD(T)                                                    \
    template class Tape<T>;                                                                \
    template Tensor<T> kernels::matmul(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> kernels::matmul_nt(const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> kernels::matmul_tn(const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> kernels::softmax_rows(const Tensor<T>&);                           \
    template Var<T> matmul(Var<T>, Var<T>);                                                \
    template Var<T> matmul_nt(Var<T>, Var<T>);                                             \
    template Var<T> add(Var<T>, Var<T>);                                                   \
    template Var<T> sub(Var<T>, Var<T>);                                                   \
    template Var<T> mul(Var<T>, Var<T>);                                                   \
    template Var<T> scale(Var<T>, T);                                                      \
    template Var<T> add_row(Var<T>, Var<T>);                                               \
    template Var<T> linear(Var<T>, Var<T>, Var<T>);                                        \
    template Var<T> relu(Var<T>);                                                          \
    template Var<T> gelu(Var<T>);                                                          \
    template Var<T> abs_value(Var<T>);                                                     \
    template Var<T> sigmoid(Var<T>);                                                       \
    template Var<T> softmax_rows(Var<T>);                                                  \
    template Var<T> masked_softmax_rows(Var<T>, std::span<const std::uint8_t>);            \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, double);                            \
    template Var<T> dropout(Var<T>, double, std::mt19937_64&);                             \
    template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                          \
    template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                          \
    template Var<T> concat_rows(const std::vector<Var<T>>&);                               \
    template Var<T> concat_cols(const std::vector<Var<T>>&);                               \
    template Var<T> gather_rows(Var<T>, std::span<const std::int32_t>);                    \
    template Var<T> overwrite_rows(Var<T>, std::size_t, Var<T>);                           \
    template Var<T> l2_normalize_rows(Var<T>);                                             \
    template Var<T> row_max(Var<T>);                                                       \
    template Var<T> sum(Var<T>);                                                           \
    template Var<T> mean(Var<T>);                                                          \
    template Var<T> cross_entropy(Var<T>, std::span<const std::int32_t>);

LFTRANK_INSTANTIATE_AUTOGRAD(float)
LFTRANK_INSTANTIATE_AUTOGRAD(double)

}  // namespace lftrank
