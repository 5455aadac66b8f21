#include "gedlab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gedlab/errors.hpp"

namespace gedlab {

const Tensor& Var::value() const { return graph_->value(id_); }

double Var::item() const {
  const Tensor& t = value();
  if (t.numel() != 1) throw DimensionError("item() on non-scalar " + shape_str(t.shape));
  return t.data[0];
}

// ---- Graph ----------------------------------------------------------------

Var Graph::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return add_node(std::move(n));
}

Var Graph::parameter(Tensor& tensor) {
  Node n;
  n.op = "parameter";
  n.external = &tensor;
  n.tracks_grad = record_ && tensor.requires_grad;
  return add_node(std::move(n));
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.op = op;
  n.owned = std::move(value);
  n.inputs.reserve(inputs.size());
  bool any = false;
  for (const Var& in : inputs) {
    if (in.graph_ != this) throw std::logic_error(std::string(op) + ": input from another graph");
    n.inputs.push_back(in.id_);
    any = any || nodes_[in.id_].tracks_grad;
  }
  n.tracks_grad = record_ && any;
  if (n.tracks_grad) n.backward = std::move(fn);
  return add_node(std::move(n));
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

std::span<double> Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.tracks_grad) return {};
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw std::logic_error("backward: loss belongs to another graph");
  const Tensor& lv = value(loss.id_);
  if (lv.numel() != 1) {
    throw DimensionError("backward needs a scalar loss, got " + shape_str(lv.shape));
  }
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    Node& n = nodes_[i];
    if (n.tracks_grad) n.grad.assign(value(i).numel(), 0.0);
  }
  if (!nodes_[loss.id_].tracks_grad) return;
  nodes_[loss.id_].grad[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.tracks_grad && n.backward) n.backward(*this, i);
  }
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    Node& n = nodes_[i];
    if (!n.external || !n.tracks_grad) continue;
    Tensor& t = *n.external;
    if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
    for (std::size_t j = 0; j < n.grad.size(); ++j) t.grad[j] += n.grad[j];
  }
}

// ---- helpers --------------------------------------------------------------

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
}

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an empty Var");
  return *a.graph();
}

// out[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m×k] += g[m×n] · b[k×n]ᵀ
void gemm_nt(const double* g, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* orow = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      orow[p] += acc;
    }
  }
}

// out[k×n] += a[m×k]ᵀ · g[m×n]
void gemm_tn(const double* a, const double* g, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace

// ---- primitives -----------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape) + " by " +
                         shape_str(bv.shape));
  }
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out = Tensor::zeros({m, n});
  gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {a, b}, [ia, ib, m, k, n](Graph& gr, std::size_t self) {
    const double* dy = gr.grad(self).data();
    if (auto da = gr.grad(ia); !da.empty()) {
      gemm_nt(dy, gr.value(ib).data.data(), da.data(), m, k, n);
    }
    if (auto db = gr.grad(ib); !db.empty()) {
      gemm_tn(gr.value(ia).data.data(), dy, db.data(), m, k, n);
    }
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  out.requires_grad = false;
  out.grad.clear();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("add", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    for (std::size_t in : {ia, ib}) {
      auto d = gr.grad(in);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = Tensor::zeros(av.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("mul", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    const auto& x = gr.value(ia).data;
    const auto& y = gr.value(ib).data;
    if (auto da = gr.grad(ia); !da.empty()) {
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * y[i];
    }
    if (auto db = gr.grad(ib); !db.empty()) {
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * x[i];
    }
  });
}

Var scale(Var x, double factor) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(x.value().shape);
  const auto& xv = x.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv[i] * factor;
  const std::size_t ix = x.id();
  return g.record("scale", std::move(out), {x}, [ix, factor](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_bias");
  if (bv.rank() != 1 || bv.shape[0] != xv.shape[1]) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape) + " does not fit " +
                         shape_str(xv.shape));
  }
  const std::size_t rows = xv.shape[0], cols = xv.shape[1];
  Tensor out = Tensor::zeros(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = xv.data[r * cols + c] + bv.data[c];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return g.record("add_bias", std::move(out), {x, bias},
                  [ix, ib, rows, cols](Graph& gr, std::size_t self) {
                    auto dy = gr.grad(self);
                    if (auto dx = gr.grad(ix); !dx.empty()) {
                      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
                    }
                    if (auto db = gr.grad(ib); !db.empty()) {
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
                      }
                    }
                  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (double v : x.value().data) total += v;
  const std::size_t ix = x.id();
  return g.record("sum", Tensor::scalar(total), {x}, [ix](Graph& gr, std::size_t self) {
    const double dy = gr.grad(self)[0];
    auto dx = gr.grad(ix);
    for (double& d : dx) d += dy;
  });
}

Var relu(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(x.value().shape);
  const auto& xv = x.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const std::size_t ix = x.id();
  // Subgradient at exactly 0 is 0.
  return g.record("relu", std::move(out), {x}, [ix](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(ix);
    const auto& in = gr.value(ix).data;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (in[i] > 0.0) dx[i] += dy[i];
    }
  });
}

Var softmax(Var x, std::size_t axis) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(xv.shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= xv.shape[d];
  for (std::size_t d = axis + 1; d < xv.rank(); ++d) inner *= xv.shape[d];
  const std::size_t len = xv.shape[axis];

  Tensor out = Tensor::zeros(xv.shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv.data[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(xv.data[base + i * inner] - mx);
        out.data[base + i * inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < len; ++i) out.data[base + i * inner] /= z;
    }
  }
  const std::size_t ix = x.id();
  return g.record("softmax", std::move(out), {x},
                  [ix, outer, inner, len](Graph& gr, std::size_t self) {
                    auto dy = gr.grad(self);
                    auto dx = gr.grad(ix);
                    const auto& y = gr.value(self).data;
                    for (std::size_t o = 0; o < outer; ++o) {
                      for (std::size_t in = 0; in < inner; ++in) {
                        const std::size_t base = o * len * inner + in;
                        double dot = 0.0;
                        for (std::size_t i = 0; i < len; ++i) {
                          dot += y[base + i * inner] * dy[base + i * inner];
                        }
                        for (std::size_t i = 0; i < len; ++i) {
                          const std::size_t at = base + i * inner;
                          dx[at] += y[at] * (dy[at] - dot);
                        }
                      }
                    }
                  });
}

Var cross_entropy(Var probabilities, std::span<const std::size_t> targets) {
  constexpr double kFloor = 1e-12;
  Graph& g = graph_of(probabilities);
  const Tensor& p = probabilities.value();
  require_matrix(p, "cross_entropy");
  const std::size_t n = p.shape[0], classes = p.shape[1];
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= classes) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) +
                              " out of range for " + std::to_string(classes) + " classes");
    }
    double row_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) row_sum += p.data[r * classes + c];
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw std::invalid_argument("cross_entropy: row " + std::to_string(r) +
                                  " is not a distribution (sum " + std::to_string(row_sum) + ")");
    }
    total -= std::log(std::max(p.data[r * classes + targets[r]], kFloor));
  }
  const std::vector<std::size_t> tgt(targets.begin(), targets.end());
  const std::size_t ip = probabilities.id();
  return g.record("cross_entropy", Tensor::scalar(total / static_cast<double>(n)), {probabilities},
                  [ip, tgt, n, classes](Graph& gr, std::size_t self) {
                    const double dy = gr.grad(self)[0];
                    auto dp = gr.grad(ip);
                    const auto& pv = gr.value(ip).data;
                    for (std::size_t r = 0; r < n; ++r) {
                      const std::size_t at = r * classes + tgt[r];
                      if (pv[at] > kFloor) dp[at] -= dy / (static_cast<double>(n) * pv[at]);
                    }
                  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Graph& g = graph_of(parts.front());
  const Tensor& first = parts.front().value();
  require_matrix(first, "concat_cols");
  const std::size_t rows = first.shape[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& v : parts) {
    const Tensor& t = v.value();
    require_matrix(t, "concat_cols");
    if (t.shape[0] != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(first.shape) + " vs " +
                           shape_str(t.shape));
    }
    widths.push_back(t.shape[1]);
    total += t.shape[1];
  }
  Tensor out = Tensor::zeros({rows, total});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& src = parts[p].value().data;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * widths[p]), widths[p],
                  out.data.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[p];
  }
  std::vector<std::size_t> ids;
  for (const Var& v : parts) ids.push_back(v.id());
  return g.record("concat_cols", std::move(out), parts,
                  [ids, widths, rows, total](Graph& gr, std::size_t self) {
                    auto dy = gr.grad(self);
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      if (auto d = gr.grad(ids[p]); !d.empty()) {
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t c = 0; c < widths[p]; ++c) {
                            d[r * widths[p] + c] += dy[r * total + off + c];
                          }
                        }
                      }
                      off += widths[p];
                    }
                  });
}

Var slice_cols(Var x, std::size_t start, std::size_t width) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  const std::size_t rows = xv.shape[0], cols = xv.shape[1];
  if (width == 0 || start + width > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") out of " + shape_str(xv.shape));
  }
  Tensor out = Tensor::zeros({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) out.data[r * width + c] = xv.data[r * cols + start + c];
  }
  const std::size_t ix = x.id();
  return g.record("slice_cols", std::move(out), {x},
                  [ix, rows, cols, start, width](Graph& gr, std::size_t self) {
                    auto dy = gr.grad(self);
                    auto dx = gr.grad(ix);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < width; ++c) {
                        dx[r * cols + start + c] += dy[r * width + c];
                      }
                    }
                  });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  Graph& g = graph_of(table);
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding");
  const std::size_t vocab = tv.shape[0], width = tv.shape[1];
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  Tensor out = Tensor::zeros({ids.size(), width});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    if (ids[n] >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[n]) + " >= table size " +
                              std::to_string(vocab));
    }
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(ids[n] * width), width,
                out.data.begin() + static_cast<std::ptrdiff_t>(n * width));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  const std::size_t it = table.id();
  return g.record("embedding", std::move(out), {table}, [it, rows, width](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dt = gr.grad(it);
    for (std::size_t n = 0; n < rows.size(); ++n) {
      for (std::size_t c = 0; c < width; ++c) dt[rows[n] * width + c] += dy[n * width + c];
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  require_matrix(xv, "gather_rows");
  for (std::size_t r : rows) {
    if (r >= xv.shape[0]) {
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of " +
                              shape_str(xv.shape));
    }
  }
  // Same computation as an embedding lookup with x as the table.
  return embedding(x, rows);
}

Var scale_rows(Var x, Var weights) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require_matrix(xv, "scale_rows");
  if (wv.rank() != 2 || wv.shape[0] != xv.shape[0] || wv.shape[1] != 1) {
    throw DimensionError("scale_rows: weights " + shape_str(wv.shape) + " do not fit " +
                         shape_str(xv.shape));
  }
  const std::size_t rows = xv.shape[0], cols = xv.shape[1];
  Tensor out = Tensor::zeros(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = xv.data[r * cols + c] * wv.data[r];
  }
  const std::size_t ix = x.id(), iw = weights.id();
  return g.record("scale_rows", std::move(out), {x, weights},
                  [ix, iw, rows, cols](Graph& gr, std::size_t self) {
                    auto dy = gr.grad(self);
                    const auto& xd = gr.value(ix).data;
                    const auto& wd = gr.value(iw).data;
                    auto dx = gr.grad(ix);
                    auto dw = gr.grad(iw);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double acc = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        if (!dx.empty()) dx[r * cols + c] += dy[r * cols + c] * wd[r];
                        acc += dy[r * cols + c] * xd[r * cols + c];
                      }
                      if (!dw.empty()) dw[r] += acc;
                    }
                  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.shape[0], cols = xv.shape[1];
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (gv.shape != Shape{cols} || bv.shape != Shape{cols}) {
    throw DimensionError("layer_norm: gain " + shape_str(gv.shape) + " / bias " +
                         shape_str(bv.shape) + " do not fit " + shape_str(xv.shape));
  }
  std::vector<double> normed(xv.numel());
  std::vector<double> inv_std(rows);
  Tensor out = Tensor::zeros(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double z = (row[c] - mean) * inv_std[r];
      normed[r * cols + c] = z;
      out.data[r * cols + c] = z * gv.data[c] + bv.data[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return g.record(
      "layer_norm", std::move(out), {x, gain, bias},
      [ix, ig, ib, rows, cols, normed = std::move(normed), inv_std = std::move(inv_std)](
          Graph& gr, std::size_t self) {
        auto dy = gr.grad(self);
        auto dx = gr.grad(ix);
        auto dg = gr.grad(ig);
        auto db = gr.grad(ib);
        const auto& gd = gr.value(ig).data;
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_dz = 0.0, sum_dz_z = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t at = r * cols + c;
            const double dz = dy[at] * gd[c];
            sum_dz += dz;
            sum_dz_z += dz * normed[at];
            if (!dg.empty()) dg[c] += dy[at] * normed[at];
            if (!db.empty()) db[c] += dy[at];
          }
          if (dx.empty()) continue;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t at = r * cols + c;
            const double dz = dy[at] * gd[c];
            dx[at] += inv_std[r] * (dz - inv_n * sum_dz - normed[at] * inv_n * sum_dz_z);
          }
        }
      });
}

Var dropout(Var x, double rate, const DropoutContext& ctx) {
  if (!ctx.training() || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  Graph& g = graph_of(x);
  const double keep = 1.0 - rate;
  const auto& xv = x.value().data;
  std::vector<double> mask(xv.size());
  Tensor out = Tensor::zeros(x.value().shape);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = ctx.rng->uniform() < keep ? 1.0 / keep : 0.0;
    out.data[i] = xv[i] * mask[i];
  }
  const std::size_t ix = x.id();
  return g.record("dropout", std::move(out), {x}, [ix, mask = std::move(mask)](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

Var masked_self_attention(Var q, Var k, Var v, const SelfAttentionShape& shape,
                          std::span<const std::uint8_t> key_mask, double attn_dropout,
                          const DropoutContext& ctx) {
  Graph& g = graph_of(q);
  const Tensor& qv = q.value();
  require_matrix(qv, "masked_self_attention");
  require_same_shape(qv, k.value(), "masked_self_attention");
  require_same_shape(qv, v.value(), "masked_self_attention");
  const std::size_t B = shape.batch, T = shape.seq_len, A = shape.heads;
  const std::size_t rows = qv.shape[0], width = qv.shape[1];
  if (B * T != rows || key_mask.size() != rows) {
    throw DimensionError("masked_self_attention: " + std::to_string(B) + " sequences of " +
                         std::to_string(T) + " do not match " + shape_str(qv.shape) +
                         " with mask of " + std::to_string(key_mask.size()));
  }
  if (A == 0 || width % A != 0) {
    throw DimensionError("masked_self_attention: width " + std::to_string(width) +
                         " not divisible by " + std::to_string(A) + " heads");
  }
  for (std::size_t b = 0; b < B; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) any = any || key_mask[b * T + t];
    if (!any) throw std::invalid_argument("masked_self_attention: sequence with no real keys");
  }
  const std::size_t dh = width / A;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = ctx.training() && attn_dropout > 0.0;
  const double keep = 1.0 - attn_dropout;

  // probs / dropped are [B][A][T][T]; masked keys hold exact zeros.
  std::vector<double> probs(B * A * T * T, 0.0);
  std::vector<double> dropped;
  if (drop) dropped.assign(probs.size(), 0.0);
  std::vector<std::uint8_t> mask(key_mask.begin(), key_mask.end());

  Tensor out = Tensor::zeros(qv.shape);
  const auto& Q = qv.data;
  const auto& K = k.value().data;
  const auto& V = v.value().data;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < A; ++h) {
      const std::size_t col = h * dh;
      for (std::size_t i = 0; i < T; ++i) {
        double* p = probs.data() + ((b * A + h) * T + i) * T;
        const double* qi = Q.data() + (b * T + i) * width + col;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
          if (!mask[b * T + j]) continue;
          const double* kj = K.data() + (b * T + j) * width + col;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          p[j] = s * scale_factor;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          if (!mask[b * T + j]) continue;
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        double* used = p;
        if (drop) used = dropped.data() + ((b * A + h) * T + i) * T;
        for (std::size_t j = 0; j < T; ++j) {
          if (!mask[b * T + j]) continue;
          p[j] /= z;
          if (drop) used[j] = ctx.rng->uniform() < keep ? p[j] / keep : 0.0;
        }
        double* oi = out.data.data() + (b * T + i) * width + col;
        for (std::size_t j = 0; j < T; ++j) {
          if (!mask[b * T + j] || used[j] == 0.0) continue;
          const double* vj = V.data() + (b * T + j) * width + col;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += used[j] * vj[d];
        }
      }
    }
  }

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return g.record(
      "masked_self_attention", std::move(out), {q, k, v},
      [iq, ik, iv, B, T, A, dh, width, scale_factor, keep, drop, mask = std::move(mask),
       probs = std::move(probs), dropped = std::move(dropped)](Graph& gr, std::size_t self) {
        auto dy = gr.grad(self);
        auto dq = gr.grad(iq);
        auto dk = gr.grad(ik);
        auto dv = gr.grad(iv);
        const auto& Qd = gr.value(iq).data;
        const auto& Kd = gr.value(ik).data;
        const auto& Vd = gr.value(iv).data;
        std::vector<double> dp(T), ds(T);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < A; ++h) {
            const std::size_t col = h * dh;
            for (std::size_t i = 0; i < T; ++i) {
              const double* p = probs.data() + ((b * A + h) * T + i) * T;
              const double* used = drop ? dropped.data() + ((b * A + h) * T + i) * T : p;
              const double* gi = dy.data() + (b * T + i) * width + col;
              double dot = 0.0;
              for (std::size_t j = 0; j < T; ++j) {
                dp[j] = 0.0;
                if (!mask[b * T + j]) continue;
                const double* vj = Vd.data() + (b * T + j) * width + col;
                double acc = 0.0;
                for (std::size_t d = 0; d < dh; ++d) acc += gi[d] * vj[d];
                if (drop) acc = used[j] != 0.0 ? acc / keep : 0.0;
                dp[j] = acc;
                dot += p[j] * acc;
                if (!dv.empty() && used[j] != 0.0) {
                  double* dvj = dv.data() + (b * T + j) * width + col;
                  for (std::size_t d = 0; d < dh; ++d) dvj[d] += used[j] * gi[d];
                }
              }
              for (std::size_t j = 0; j < T; ++j) {
                ds[j] = mask[b * T + j] ? p[j] * (dp[j] - dot) * scale_factor : 0.0;
              }
              const double* qi = Qd.data() + (b * T + i) * width + col;
              for (std::size_t j = 0; j < T; ++j) {
                if (ds[j] == 0.0) continue;
                const double* kj = Kd.data() + (b * T + j) * width + col;
                if (!dq.empty()) {
                  double* dqi = dq.data() + (b * T + i) * width + col;
                  for (std::size_t d = 0; d < dh; ++d) dqi[d] += ds[j] * kj[d];
                }
                if (!dk.empty()) {
                  double* dkj = dk.data() + (b * T + j) * width + col;
                  for (std::size_t d = 0; d < dh; ++d) dkj[d] += ds[j] * qi[d];
                }
              }
            }
          }
        }
      });
}

}  // namespace gedlab
