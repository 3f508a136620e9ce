#include "cebm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>

#include "cebm/errors.hpp"

namespace cebm::ad {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": vars on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(x.shape()));
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <class Fwd, class Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
  return x.tape().record(
      std::move(out), {x},
      [deriv](const Tensor& g, const Tensor& y, std::span<const Tensor* const> vals,
              std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const auto xin = vals[0]->data();
        const auto yv = y.data();
        const auto gv = g.data();
        auto gx = grads[0]->data();
        for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i] * deriv(xin[i], yv[i]);
      });
}

}  // namespace

// --- Var / Gradients --------------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("unbound Var");
  return tape_->value_of(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](const Var& leaf) const {
  auto it = by_node_.find(leaf.id());
  if (it == by_node_.end()) throw std::out_of_range("no gradient recorded for node");
  return it->second;
}

// --- Tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value entering the graph");
  nodes_.push_back(Node{std::move(value), false, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value entering the graph");
  nodes_.push_back(Node{std::move(value), true, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw std::logic_error("recording on a consumed tape; call reset()");
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw std::invalid_argument("input belongs to another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

Gradients Tape::backward(const Var& output) {
  if (consumed_) throw std::logic_error("tape already consumed by a previous backward pass");
  if (&output.tape() != this) throw std::invalid_argument("output belongs to another tape");
  const Tensor& out_value = nodes_[output.id()].value;
  if (out_value.size() != 1) {
    throw ShapeError("backward requires a scalar output, got shape " +
                     shape_string(out_value.shape()));
  }
  if (!out_value.all_finite()) throw NonFiniteError("non-finite output at backward");
  consumed_ = true;

  std::vector<Tensor> grads(nodes_.size());
  std::vector<char> has_grad(nodes_.size(), 0);
  grads[output.id()] = Tensor::full(out_value.shape(), 1.0);
  has_grad[output.id()] = 1;

  std::vector<const Tensor*> in_vals;
  std::vector<Tensor*> in_grads;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!has_grad[i] || !node.requires_grad || node.is_leaf) continue;
    in_vals.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_vals.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!has_grad[in]) {
          grads[in] = Tensor::zeros(nodes_[in].value.shape());
          has_grad[in] = 1;
        }
        in_grads.push_back(&grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(grads[i], node.value, in_vals, in_grads);
    // Interior gradients are no longer needed once propagated.
    grads[i] = Tensor();
  }

  Gradients result;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf || !nodes_[i].requires_grad) continue;
    Tensor g = has_grad[i] ? std::move(grads[i]) : Tensor::zeros(nodes_[i].value.shape());
    result.by_node_.emplace(i, std::move(g));
  }
  return result;
}

// --- primitives -------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor out({n, m});
  const auto av = a.value().data();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * m];
      double* orow = &o[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return a.tape().record(
      std::move(out), {a, b},
      [n, k, m](const Tensor& g, const Tensor&, std::span<const Tensor* const> vals,
                std::span<Tensor* const> grads) {
        const auto gv = g.data();
        if (grads[0]) {
          const auto bv = vals[1]->data();
          auto ga = grads[0]->data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < m; ++j) acc += gv[i * m + j] * bv[p * m + j];
              ga[i * k + p] += acc;
            }
        }
        if (grads[1]) {
          const auto av = vals[0]->data();
          auto gb = grads[1]->data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * gv[i * m + j];
            }
        }
      });
}

Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t padding) {
  require_same_tape(x, w, "conv2d");
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
  const std::size_t o = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != c) {
    throw ShapeError("conv2d: input channels " + shape_string(xs) + " vs kernel " +
                     shape_string(ws));
  }
  if (h + 2 * padding < kh || wd + 2 * padding < kw) {
    throw ShapeError("conv2d: kernel " + shape_string(ws) + " larger than padded input " +
                     shape_string(xs));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * padding - kw) / stride + 1;
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  const auto ih_max = static_cast<std::ptrdiff_t>(h);
  const auto iw_max = static_cast<std::ptrdiff_t>(wd);

  // Column map: for kernel tap q and output position p, the offset of the
  // input pixel within one example, or -1 when the tap lands in the padding.
  const std::size_t q_count = c * kh * kw;
  const std::size_t p_count = ho * wo;
  const std::size_t in_size = c * h * wd;
  auto taps = std::make_shared<std::vector<std::ptrdiff_t>>(q_count * p_count, -1);
  for (std::size_t ic = 0; ic < c; ++ic)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const std::size_t q = (ic * kh + ki) * kw + kj;
        for (std::size_t oi = 0; oi < ho; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - pad;
          if (ii < 0 || ii >= ih_max) continue;
          for (std::size_t oj = 0; oj < wo; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - pad;
            if (jj < 0 || jj >= iw_max) continue;
            (*taps)[q * p_count + oi * wo + oj] = static_cast<std::ptrdiff_t>((ic * h) + static_cast<std::size_t>(ii)) *
                                                      static_cast<std::ptrdiff_t>(wd) + jj;
          }
        }
      }

  // Unfolded input, one [q_count, p_count] block per example.
  auto cols = std::make_shared<std::vector<double>>(n * q_count * p_count, 0.0);
  const auto xv = x.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    double* block = cols->data() + b * q_count * p_count;
    const double* xb = xv.data() + b * in_size;
    for (std::size_t i = 0; i < q_count * p_count; ++i) {
      const std::ptrdiff_t t = (*taps)[i];
      if (t >= 0) block[i] = xb[t];
    }
  }

  Tensor out({n, o, ho, wo});
  {
    const auto wv = w.value().data();
    auto ov = out.data();
    for (std::size_t b = 0; b < n; ++b) {
      const double* block = cols->data() + b * q_count * p_count;
      for (std::size_t oc = 0; oc < o; ++oc) {
        double* orow = ov.data() + (b * o + oc) * p_count;
        for (std::size_t q = 0; q < q_count; ++q) {
          const double wq = wv[oc * q_count + q];
          const double* crow = block + q * p_count;
          for (std::size_t p = 0; p < p_count; ++p) orow[p] += wq * crow[p];
        }
      }
    }
  }
  return x.tape().record(
      std::move(out), {x, w},
      [=](const Tensor& g, const Tensor&, std::span<const Tensor* const> vals, std::span<Tensor* const> grads) {
        const auto gv = g.data();
        if (grads[1]) {
          auto gw = grads[1]->data();
          for (std::size_t b = 0; b < n; ++b) {
            const double* block = cols->data() + b * q_count * p_count;
            for (std::size_t oc = 0; oc < o; ++oc) {
              const double* grow = gv.data() + (b * o + oc) * p_count;
              for (std::size_t q = 0; q < q_count; ++q) {
                const double* crow = block + q * p_count;
                double acc = 0.0;
                for (std::size_t p = 0; p < p_count; ++p) acc += grow[p] * crow[p];
                gw[oc * q_count + q] += acc;
              }
            }
          }
        }
        if (grads[0]) {
          const auto wv = vals[1]->data();
          auto gx = grads[0]->data();
          std::vector<double> gcols(q_count * p_count);
          for (std::size_t b = 0; b < n; ++b) {
            std::fill(gcols.begin(), gcols.end(), 0.0);
            for (std::size_t oc = 0; oc < o; ++oc) {
              const double* grow = gv.data() + (b * o + oc) * p_count;
              for (std::size_t q = 0; q < q_count; ++q) {
                const double wq = wv[oc * q_count + q];
                double* gc = gcols.data() + q * p_count;
                for (std::size_t p = 0; p < p_count; ++p) gc[p] += wq * grow[p];
              }
            }
            double* gxb = gx.data() + b * in_size;
            for (std::size_t i = 0; i < q_count * p_count; ++i) {
              const std::ptrdiff_t t = (*taps)[i];
              if (t >= 0) gxb[t] += gcols[i];
            }
          }
        }
      });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  const auto av = a.value().data();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  return a.tape().record(std::move(out), {a, b},
                         [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                            std::span<Tensor* const> grads) {
                           const auto gv = g.data();
                           for (Tensor* t : grads) {
                             if (!t) continue;
                             auto d = t->data();
                             for (std::size_t i = 0; i < gv.size(); ++i) d[i] += gv[i];
                           }
                         });
}

Var sub(const Var& a, const Var& b) { return add(a, negate(b)); }

Var add_bias(const Var& x, const Var& b) {
  require_same_tape(x, b, "add_bias");
  require_rank(b, 1, "add_bias");
  const auto& xs = x.shape();
  if (xs.size() < 2 || xs[1] != b.shape()[0]) {
    throw ShapeError("add_bias: bias " + shape_string(b.shape()) + " does not match axis 1 of " +
                     shape_string(xs));
  }
  const std::size_t n = xs[0], f = xs[1];
  const std::size_t inner = shape_size(xs) / std::max<std::size_t>(n * f, 1);
  Tensor out = x.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      for (std::size_t s = 0; s < inner; ++s) o[(i * f + j) * inner + s] += bv[j];
  return x.tape().record(
      std::move(out), {x, b},
      [n, f, inner](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                    std::span<Tensor* const> grads) {
        const auto gv = g.data();
        if (grads[0]) {
          auto gx = grads[0]->data();
          for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i];
        }
        if (grads[1]) {
          auto gb = grads[1]->data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j)
              for (std::size_t s = 0; s < inner; ++s) gb[j] += gv[(i * f + j) * inner + s];
        }
      });
}

Var scale(const Var& x, double factor) {
  return unary(
      x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Var negate(const Var& x) { return scale(x, -1.0); }

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const auto av = a.value().data();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return a.tape().record(std::move(out), {a, b},
                         [](const Tensor& g, const Tensor&, std::span<const Tensor* const> vals,
                            std::span<Tensor* const> grads) {
                           const auto gv = g.data();
                           const auto av = vals[0]->data();
                           const auto bv = vals[1]->data();
                           if (grads[0]) {
                             auto d = grads[0]->data();
                             for (std::size_t i = 0; i < gv.size(); ++i) d[i] += gv[i] * bv[i];
                           }
                           if (grads[1]) {
                             auto d = grads[1]->data();
                             for (std::size_t i = 0; i < gv.size(); ++i) d[i] += gv[i] * av[i];
                           }
                         });
}

Var square(const Var& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var swish(const Var& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s + v * s * (1.0 - s);
      });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var softplus(const Var& x) {
  return unary(x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x},
                         [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                            std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           const auto gv = g.data();
                           auto d = grads[0]->data();
                           for (std::size_t i = 0; i < gv.size(); ++i) d[i] += gv[i];
                         });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record(Tensor::scalar(total), {x},
                         [](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                            std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           const double gv = g[0];
                           for (double& d : grads[0]->data()) d += gv;
                         });
}

Var mean(const Var& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var sum_rows(const Var& x) {
  if (x.shape().empty()) throw ShapeError("sum_rows: rank-0 input");
  const std::size_t n = x.shape()[0];
  const std::size_t inner = n == 0 ? 0 : x.value().size() / n;
  Tensor out({n});
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < inner; ++j) acc += xv[i * inner + j];
    out[i] = acc;
  }
  return x.tape().record(std::move(out), {x},
                         [n, inner](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                                    std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           auto d = grads[0]->data();
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < inner; ++j) d[i * inner + j] += g[i];
                         });
}

Var logsumexp(const Var& x) {
  const auto& xs = x.shape();
  if (xs.empty() || xs.back() == 0) throw ShapeError("logsumexp: empty last axis");
  const std::size_t len = xs.back();
  const std::size_t rows = x.value().size() / len;
  Shape out_shape(xs.begin(), xs.end() - 1);
  Tensor out(out_shape);
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = &xv[r * len];
    const double mx = *std::max_element(p, p + len);
    double acc = 0.0;
    for (std::size_t j = 0; j < len; ++j) acc += std::exp(p[j] - mx);
    out[r] = mx + std::log(acc);
  }
  return x.tape().record(
      std::move(out), {x},
      [rows, len](const Tensor& g, const Tensor& y, std::span<const Tensor* const> vals,
                  std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const auto xv = vals[0]->data();
        auto d = grads[0]->data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < len; ++j)
            d[r * len + j] += g[r] * std::exp(xv[r * len + j] - y[r]);
      });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  if (begin > end || end > f) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({n, w});
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * f + begin + j];
  return x.tape().record(std::move(out), {x},
                         [n, f, w, begin](const Tensor& g, const Tensor&,
                                          std::span<const Tensor* const>,
                                          std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           auto d = grads[0]->data();
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < w; ++j) d[i * f + begin + j] += g[i * w + j];
                         });
}

Var row(const Var& x, std::size_t r) {
  require_rank(x, 2, "row");
  const std::size_t rows = x.shape()[0], k = x.shape()[1];
  if (r >= rows) throw ShapeError("row: index out of range for " + shape_string(x.shape()));
  Tensor out({k});
  for (std::size_t j = 0; j < k; ++j) out[j] = x.value()[r * k + j];
  return x.tape().record(std::move(out), {x},
                         [r, k](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
                                std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           auto d = grads[0]->data();
                           for (std::size_t j = 0; j < k; ++j) d[r * k + j] += g[j];
                         });
}

Var stack_cols(std::span<const Var> columns) {
  if (columns.empty()) throw ShapeError("stack_cols: no columns");
  const Shape& first = columns.front().shape();
  if (first.size() != 1) throw ShapeError("stack_cols: columns must be rank 1");
  const std::size_t n = first[0], l = columns.size();
  Tensor out({n, l});
  std::vector<Var> inputs(columns.begin(), columns.end());
  for (std::size_t c = 0; c < l; ++c) {
    if (columns[c].shape() != first) throw ShapeError("stack_cols: column shapes differ");
    for (std::size_t i = 0; i < n; ++i) out[i * l + c] = columns[c].value()[i];
  }
  return columns.front().tape().record(
      std::move(out), std::move(inputs),
      [n, l](const Tensor& g, const Tensor&, std::span<const Tensor* const>,
             std::span<Tensor* const> grads) {
        for (std::size_t c = 0; c < l; ++c) {
          if (!grads[c]) continue;
          auto d = grads[c]->data();
          for (std::size_t i = 0; i < n; ++i) d[i] += g[i * l + c];
        }
      });
}

Var gaussian_log_normalizer(const Var& l1, const Var& l2) {
  require_same_tape(l1, l2, "gaussian_log_normalizer");
  require_same_shape(l1, l2, "gaussian_log_normalizer");
  require_rank(l1, 2, "gaussian_log_normalizer");
  const std::size_t n = l1.shape()[0], k = l1.shape()[1];
  const auto a = l1.value().data();
  const auto b = l2.value().data();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p1 = a[i * k + j], p2 = b[i * k + j];
      if (!(p2 < 0.0)) {
        throw DomainError("Gaussian natural parameter lam2 must be negative, got " +
                          std::to_string(p2));
      }
      acc += -p1 * p1 / (4.0 * p2) - 0.5 * std::log(-2.0 * p2);
    }
    out[i] = acc;
  }
  return l1.tape().record(
      std::move(out), {l1, l2},
      [n, k](const Tensor& g, const Tensor&, std::span<const Tensor* const> vals,
             std::span<Tensor* const> grads) {
        const auto a = vals[0]->data();
        const auto b = vals[1]->data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double p1 = a[i * k + j], p2 = b[i * k + j];
            // The gradient of the log normalizer is the mean parameter pair.
            const double m1 = -p1 / (2.0 * p2);
            if (grads[0]) grads[0]->data()[i * k + j] += g[i] * m1;
            if (grads[1]) grads[1]->data()[i * k + j] += g[i] * (m1 * m1 - 1.0 / (2.0 * p2));
          }
      });
}

// --- dispatch ---------------------------------------------------------------

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::conv2d: return "conv2d";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::swish: return "swish";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::softplus: return "softplus";
    case OpKind::negate: return "negate";
    case OpKind::reshape: return "reshape";
    case OpKind::sum: return "sum";
    case OpKind::logsumexp: return "logsumexp";
  }
  return "unknown";
}

Var forward_op(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  const std::size_t arity = (kind == OpKind::matmul || kind == OpKind::conv2d || kind == OpKind::add) ? 2 : 1;
  if (inputs.size() != arity) {
    throw ShapeError(std::string(to_string(kind)) + ": expected " + std::to_string(arity) +
                     " inputs, got " + std::to_string(inputs.size()));
  }
  switch (kind) {
    case OpKind::matmul: return matmul(inputs[0], inputs[1]);
    case OpKind::conv2d: return conv2d(inputs[0], inputs[1], attrs.stride, attrs.padding);
    case OpKind::add: return add(inputs[0], inputs[1]);
    case OpKind::scale: return scale(inputs[0], attrs.factor);
    case OpKind::swish: return swish(inputs[0]);
    case OpKind::relu: return relu(inputs[0]);
    case OpKind::leaky_relu: return leaky_relu(inputs[0], attrs.slope);
    case OpKind::softplus: return softplus(inputs[0]);
    case OpKind::negate: return negate(inputs[0]);
    case OpKind::reshape: return reshape(inputs[0], attrs.shape);
    case OpKind::sum: return sum(inputs[0]);
    case OpKind::logsumexp: return logsumexp(inputs[0]);
  }
  throw std::invalid_argument("unknown op kind");
}

// --- finite differences -----------------------------------------------------

double finite_diff_check(const ScalarFn& f, const Tensor& at, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.leaf(at);
    Var y = f(tape, x);
    analytic = tape.backward(y)[x];
  }
  auto evaluate = [&](const Tensor& point) {
    Tape tape;
    Var x = tape.constant(point);
    return f(tape, x).value().item();
  };
  double worst = 0.0;
  Tensor probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = evaluate(probe);
    probe[i] = original - h;
    const double down = evaluate(probe);
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kFiniteDiffFloor});
    const double err = std::abs(analytic[i] - numeric) / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cebm::ad
