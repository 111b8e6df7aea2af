#include "pirank/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "pirank/kernels.hpp"

namespace pirank {

const Tensor& Gradients::operator[](Var v) const {
  if (v.id() >= grads_.size() || !tracked_[v.id()]) {
    throw std::invalid_argument("no gradient tracked for node " +
                                std::to_string(v.id()));
  }
  return grads_[v.id()];
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs,
                  BackwardFn backward) {
  Node node{std::move(value), {}, std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.graph() != this) {
      throw std::invalid_argument("operator input belongs to another graph");
    }
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(Var root) const {
  if (&root.graph() != this) {
    throw std::invalid_argument("backward root belongs to another graph");
  }
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward root must be scalar, got shape " +
                                shape_str(root.shape()));
  }
  Gradients out;
  out.grads_.resize(nodes_.size());
  out.tracked_.assign(nodes_.size(), false);
  std::vector<bool> seeded(nodes_.size(), false);

  out.grads_[root.id()] = Tensor(root.shape(), 1.0);
  seeded[root.id()] = true;

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!seeded[id] || !node.requires_grad || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (!seeded[in]) {
          out.grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
          seeded[in] = true;
        }
        in_grads.push_back(&out.grads_[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardContext{out.grads_[id], node.value, in_values,
                                  in_grads});
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].requires_grad) continue;
    out.tracked_[id] = true;
    if (!seeded[id]) out.grads_[id] = Tensor(nodes_[id].value.shape(), 0.0);
  }
  return out;
}

namespace {

void require_same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) {
    throw std::invalid_argument("operands belong to different graphs");
  }
}

enum class Binary { add, sub, mul };

Var elementwise(Var a, Var b, Binary kind) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_scalar = av.size() == 1 && bv.size() != 1;
  const bool b_scalar = bv.size() == 1 && av.size() != 1;
  if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
    throw std::invalid_argument("elementwise shape mismatch: " +
                                shape_str(av.shape()) + " vs " +
                                shape_str(bv.shape()));
  }
  const Shape shape = a_scalar ? bv.shape() : av.shape();
  const std::size_t n = shape_numel(shape);
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    out[i] = kind == Binary::add ? x + y : kind == Binary::sub ? x - y : x * y;
  }
  return a.graph().record(
      std::move(out), {a, b}, [=](const BackwardContext& ctx) {
        const Tensor& g = ctx.grad_out;
        const Tensor& x = *ctx.inputs[0];
        const Tensor& y = *ctx.inputs[1];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ia = a_scalar ? 0 : i;
          const std::size_t ib = b_scalar ? 0 : i;
          double ga = g[i];
          double gb = kind == Binary::sub ? -g[i] : g[i];
          if (kind == Binary::mul) {
            ga = g[i] * y[ib];
            gb = g[i] * x[ia];
          }
          if (ctx.grads[0]) (*ctx.grads[0])[ia] += ga;
          if (ctx.grads[1]) (*ctx.grads[1])[ib] += gb;
        }
      });
}

template <typename F, typename D>
Var unary(Var a, F forward, D derivative) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = forward(av[i]);
  return a.graph().record(std::move(out), {a},
                          [derivative](const BackwardContext& ctx) {
                            const Tensor& x = *ctx.inputs[0];
                            Tensor& gx = *ctx.grads[0];
                            for (std::size_t i = 0; i < x.size(); ++i)
                              gx[i] += ctx.grad_out[i] * derivative(x[i], ctx.out[i]);
                          });
}

std::size_t last_dim(const Shape& shape) { return shape.empty() ? 1 : shape.back(); }

}  // namespace

Var add(Var a, Var b) { return elementwise(a, b, Binary::add); }
Var sub(Var a, Var b) { return elementwise(a, b, Binary::sub); }
Var mul(Var a, Var b) { return elementwise(a, b, Binary::mul); }

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; },
               [c](double, double) { return c; });
}

Var shift(Var a, double c) {
  return unary(a, [c](double x) { return x + c; },
               [](double, double) { return 1.0; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var log_sigmoid(Var a) {
  // log(sigmoid(x)) = -softplus(-x); d/dx = sigmoid(-x).
  return unary(
      a,
      [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [](double x, double) {
        return x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
      });
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw std::invalid_argument("matmul dimension mismatch: " + shape_str(sa) +
                                " x " + shape_str(sb));
  }
  const std::size_t m = sa[0], n = sa[1], p = sb[1];
  Tensor out(Shape{m, p});
  kernels::matmul(a.value().data(), b.value().data(), m, n, p, out.data());
  return a.graph().record(std::move(out), {a, b},
                          [=](const BackwardContext& ctx) {
                            const auto g = ctx.grad_out.data();
                            if (ctx.grads[0])
                              kernels::matmul_nt_acc(g, ctx.inputs[1]->data(), m, n, p,
                                                     ctx.grads[0]->data());
                            if (ctx.grads[1])
                              kernels::matmul_tn_acc(ctx.inputs[0]->data(), g, m, n, p,
                                                     ctx.grads[1]->data());
                          });
}

Var bmm(Var a, Var b) {
  require_same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) {
    throw std::invalid_argument("bmm dimension mismatch: " + shape_str(sa) +
                                " x " + shape_str(sb));
  }
  const std::size_t batch = sa[0], m = sa[1], n = sa[2], p = sb[2];
  Tensor out(Shape{batch, m, p});
  kernels::bmm(a.value().data(), b.value().data(), batch, m, n, p, out.data());
  return a.graph().record(
      std::move(out), {a, b}, [=](const BackwardContext& ctx) {
        std::span<double> ga, gb;
        if (ctx.grads[0]) ga = ctx.grads[0]->data();
        if (ctx.grads[1]) gb = ctx.grads[1]->data();
        kernels::bmm_backward(ctx.inputs[0]->data(), ctx.inputs[1]->data(),
                              ctx.grad_out.data(), batch, m, n, p, ga, gb);
      });
}

Var softmax_rows(Var a) {
  const std::size_t n = last_dim(a.shape());
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape());
  kernels::softmax_rows(a.value().data(), rows, n, out.data());
  return a.graph().record(std::move(out), {a},
                          [=](const BackwardContext& ctx) {
                            kernels::softmax_rows_backward(ctx.out.data(),
                                                           ctx.grad_out.data(), rows,
                                                           n, ctx.grads[0]->data());
                          });
}

Var log_softmax_rows(Var a) {
  const std::size_t n = last_dim(a.shape());
  const std::size_t rows = a.size() / n;
  Tensor out(a.shape());
  kernels::log_softmax_rows(a.value().data(), rows, n, out.data());
  return a.graph().record(
      std::move(out), {a}, [=](const BackwardContext& ctx) {
        kernels::log_softmax_rows_backward(ctx.out.data(), ctx.grad_out.data(),
                                           rows, n, ctx.grads[0]->data());
      });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.graph().record(Tensor::scalar(total), {a},
                          [](const BackwardContext& ctx) {
                            const double g = ctx.grad_out[0];
                            for (double& v : ctx.grads[0]->data()) v += g;
                          });
}

Var sum(Var a, std::size_t axis) {
  const Shape& in = a.shape();
  if (axis >= in.size()) {
    throw std::invalid_argument("sum axis " + std::to_string(axis) +
                                " out of range for " + shape_str(in));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t len = in[axis];
  Shape shape;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (i != axis) shape.push_back(in[i]);
  if (shape.empty()) shape.push_back(1);
  Tensor out(shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += av[(o * len + l) * inner + i];
  return a.graph().record(std::move(out), {a},
                          [=](const BackwardContext& ctx) {
                            Tensor& g = *ctx.grads[0];
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t l = 0; l < len; ++l)
                                for (std::size_t i = 0; i < inner; ++i)
                                  g[(o * len + l) * inner + i] += ctx.grad_out[o * inner + i];
                          });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record(std::move(out), {a}, [](const BackwardContext& ctx) {
    auto g = ctx.grads[0]->data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw std::invalid_argument("concat axis out of range for " + shape_str(first));
  }
  Shape shape = first;
  shape[axis] = 0;
  for (const Var& p : parts) {
    require_same_graph(parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok) {
      throw std::invalid_argument("concat shape mismatch: " + shape_str(first) +
                                  " vs " + shape_str(s));
    }
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  std::vector<std::size_t> widths;
  for (const Var& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t row = shape[axis] * inner;

  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data().begin() + o * widths[k], widths[k],
                  out.data().begin() + o * row + offset);
    offset += widths[k];
  }
  return parts[0].graph().record(
      std::move(out), parts, [=](const BackwardContext& ctx) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ctx.grads.size(); ++k) {
          if (ctx.grads[k]) {
            auto g = ctx.grads[k]->data();
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < widths[k]; ++i)
                g[o * widths[k] + i] += ctx.grad_out[o * row + off + i];
          }
          off += widths[k];
        }
      });
}

Var permute(Var a, const std::vector<std::size_t>& perm) {
  const Shape& in = a.shape();
  if (perm.size() != in.size()) {
    throw std::invalid_argument("permute rank mismatch for " + shape_str(in));
  }
  std::vector<bool> seen(in.size(), false);
  for (std::size_t p : perm) {
    if (p >= in.size() || seen[p]) throw std::invalid_argument("invalid axis permutation");
    seen[p] = true;
  }
  const std::size_t rank = in.size();
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = in[perm[i]];
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  // source offset for each output position
  const std::size_t n = a.size();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * in_strides[perm[i]];
    (*source)[t] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor out(shape);
  const Tensor& av = a.value();
  for (std::size_t t = 0; t < n; ++t) out[t] = av[(*source)[t]];
  return a.graph().record(std::move(out), {a},
                          [source](const BackwardContext& ctx) {
                            Tensor& g = *ctx.grads[0];
                            for (std::size_t t = 0; t < source->size(); ++t)
                              g[(*source)[t]] += ctx.grad_out[t];
                          });
}

Var gather(Var a, const std::vector<std::size_t>& indices) {
  const Tensor& av = a.value();
  Tensor out(Shape{indices.size()});
  for (std::size_t t = 0; t < indices.size(); ++t) {
    if (indices[t] >= av.size()) {
      throw std::out_of_range("gather index " + std::to_string(indices[t]) +
                              " out of range for " + shape_str(av.shape()));
    }
    out[t] = av[indices[t]];
  }
  return a.graph().record(std::move(out), {a},
                          [indices](const BackwardContext& ctx) {
                            Tensor& g = *ctx.grads[0];
                            for (std::size_t t = 0; t < indices.size(); ++t)
                              g[indices[t]] += ctx.grad_out[t];
                          });
}

Var straight_through(Var relaxed, const Tensor& hard) {
  if (relaxed.shape() != hard.shape()) {
    throw std::invalid_argument("straight-through shape mismatch: " +
                                shape_str(relaxed.shape()) + " vs " +
                                shape_str(hard.shape()));
  }
  return relaxed.graph().record(hard, {relaxed}, [](const BackwardContext& ctx) {
    auto g = ctx.grads[0]->data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[i];
  });
}

Var pairwise_abs_rowsum(Var y) {
  const std::size_t n = last_dim(y.shape());
  const std::size_t blocks = y.size() / n;
  Tensor out(y.shape());
  kernels::abs_rowsum(y.value().data(), blocks, n, out.data());
  return y.graph().record(std::move(out), {y},
                          [=](const BackwardContext& ctx) {
                            kernels::abs_rowsum_backward(ctx.inputs[0]->data(),
                                                         ctx.grad_out.data(), blocks,
                                                         n, ctx.grads[0]->data());
                          });
}

Var neuralsort_logits(Var y, std::size_t rows, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("temperature must be positive, got " +
                                std::to_string(tau));
  }
  const std::size_t n = last_dim(y.shape());
  if (rows < 1 || rows > n) {
    throw std::invalid_argument("neuralsort rows " + std::to_string(rows) +
                                " outside 1.." + std::to_string(n));
  }
  const std::size_t blocks = y.size() / n;
  std::vector<double> r(y.size());
  kernels::abs_rowsum(y.value().data(), blocks, n, r);
  Shape shape = y.shape();
  if (shape.empty()) shape.push_back(n);
  shape.insert(shape.end() - 1, rows);
  Tensor out(shape);
  kernels::neuralsort_logits(y.value().data(), r, blocks, n, rows, tau, out.data());
  return y.graph().record(
      std::move(out), {y}, [=](const BackwardContext& ctx) {
        std::vector<double> grad_r(blocks * n, 0.0);
        auto gy = ctx.grads[0]->data();
        kernels::neuralsort_logits_backward(ctx.grad_out.data(), blocks, n, rows,
                                            tau, gy, grad_r);
        kernels::abs_rowsum_backward(ctx.inputs[0]->data(), grad_r, blocks, n, gy);
      });
}

}  // namespace pirank
