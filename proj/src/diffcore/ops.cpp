#include "fgpl/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fgpl::ops {
namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

void require_rank2(Var a, const char* op) {
  if (a.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                shape_str(a.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.values[i] += b.value().values[i];
  return a.tape->push(std::move(y), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.values[i] -= b.value().values[i];
  return a.tape->push(std::move(y), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    tp.accumulate(a, g);
    if (!tp.needs_grad(b)) return;
    auto& gb = tp.grad_buffer(b);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.values[i] *= b.value().values[i];
  return a.tape->push(std::move(y), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const auto& av = a.value().values;
    const auto& bv = b.value().values;
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.values[i] /= b.value().values[i];
  return a.tape->push(std::move(y), {a, b}, [a, b](Tape& tp, std::span<const double> g) {
    const auto& av = a.value().values;
    const auto& bv = b.value().values;
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
    }
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (double& v : y.values) v *= s;
  return a.tape->push(std::move(y), {a}, [a, s](Tape& tp, std::span<const double> g) {
    auto& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor y = a.value();
  for (double& v : y.values) v += s;
  return a.tape->push(std::move(y), {a},
                      [a](Tape& tp, std::span<const double> g) { tp.accumulate(a, g); });
}

Var scale_by(Var a, Var s) {
  if (!s.value().is_scalar()) throw std::invalid_argument("scale_by: factor must be scalar");
  const double k = s.item();
  Tensor y = a.value();
  for (double& v : y.values) v *= k;
  return a.tape->push(std::move(y), {a, s}, [a, s](Tape& tp, std::span<const double> g) {
    const double kk = s.item();
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kk * g[i];
    }
    if (tp.needs_grad(s)) {
      const auto& av = a.value().values;
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      tp.grad_buffer(s)[0] += acc;
    }
  });
}

namespace {

// Shared shape for elementwise maps: y = f(x), dy/dx = d(x, y).
template <class F, class D>
Var map(Var a, F f, D d) {
  const Tensor& x = a.value();
  Tensor y(x.shape, std::vector<double>(x.numel()));
  for (std::size_t i = 0; i < x.numel(); ++i) y.values[i] = f(x.values[i]);
  Tensor y_copy = y;
  return a.tape->push(
      std::move(y), {a},
      [a, d, yv = std::move(y_copy.values)](Tape& tp, std::span<const double> g) {
        const auto& xv = a.value().values;
        auto& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d(xv[i], yv[i]);
      });
}

}  // namespace

Var square(Var a) {
  return map(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return map(a, [](double x) { return std::sqrt(x); },
             [](double, double y) { return 0.5 / y; });
}

Var exp(Var a) {
  return map(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return map(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return map(a, [](double x) { return std::tanh(x); },
             [](double, double y) { return 1.0 - y * y; });
}

Var silu(Var a) {
  return map(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var sigmoid(Var a) {
  return map(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
             [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
  // log σ(x) = -softplus(-x), evaluated without overflow.
  return map(
      a,
      [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(x)); });
}

Var minimum(Var a, Var b) {
  require_same_shape(a, b, "minimum");
  const auto& av = a.value().values;
  const auto& bv = b.value().values;
  Tensor y(a.shape(), std::vector<double>(av.size()));
  std::vector<char> pick_a(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    pick_a[i] = av[i] <= bv[i];
    y.values[i] = pick_a[i] ? av[i] : bv[i];
  }
  return a.tape->push(std::move(y), {a, b},
                      [a, b, pick_a = std::move(pick_a)](Tape& tp, std::span<const double> g) {
                        const bool na = tp.needs_grad(a);
                        const bool nb = tp.needs_grad(b);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          if (pick_a[i]) {
                            if (na) tp.grad_buffer(a)[i] += g[i];
                          } else if (nb) {
                            tp.grad_buffer(b)[i] += g[i];
                          }
                        }
                      });
}

Var clamp(Var a, double lo, double hi) {
  const auto& av = a.value().values;
  Tensor y(a.shape(), std::vector<double>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) y.values[i] = std::clamp(av[i], lo, hi);
  return a.tape->push(std::move(y), {a}, [a, lo, hi](Tape& tp, std::span<const double> g) {
    const auto& x = a.value().values;
    auto& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values) s += v;
  return a.tape->push(Tensor::scalar(s), {a}, [a](Tape& tp, std::span<const double> g) {
    auto& ga = tp.grad_buffer(a);
    for (double& v : ga) v += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.numel());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  require_rank2(a, "row_sum");
  const Tensor& x = a.value();
  const std::size_t r = x.shape[0], c = x.shape[1];
  Tensor y({r}, std::vector<double>(r, 0.0));
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x.values[i * c + j];
    y.values[i] = s;
  }
  return a.tape->push(std::move(y), {a}, [a, r, c](Tape& tp, std::span<const double> g) {
    auto& ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
  });
}

Var linear(Var x, Var w, Var b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  const std::size_t batch = xv.shape[0], in = xv.shape[1], out = wv.shape[0];
  if (wv.shape[1] != in || bv.numel() != out) {
    throw std::invalid_argument("linear: incompatible shapes x" + shape_str(xv.shape) + " w" +
                                shape_str(wv.shape) + " b" + shape_str(bv.shape));
  }
  Tensor y({batch, out}, std::vector<double>(batch * out));
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xr = &xv.values[n * in];
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = &wv.values[o * in];
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
      y.values[n * out + o] = s + bv.values[o];
    }
  }
  return x.tape->push(
      std::move(y), {x, w, b},
      [x, w, b, batch, in, out](Tape& tp, std::span<const double> g) {
        const auto& xv2 = x.value().values;
        const auto& wv2 = w.value().values;
        if (tp.needs_grad(x)) {
          auto& gx = tp.grad_buffer(x);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t o = 0; o < out; ++o) {
              const double go = g[n * out + o];
              if (go == 0.0) continue;
              const double* wr = &wv2[o * in];
              double* gxr = &gx[n * in];
              for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
            }
        }
        if (tp.needs_grad(w)) {
          auto& gw = tp.grad_buffer(w);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t o = 0; o < out; ++o) {
              const double go = g[n * out + o];
              if (go == 0.0) continue;
              const double* xr = &xv2[n * in];
              double* gwr = &gw[o * in];
              for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
            }
        }
        if (tp.needs_grad(b)) {
          auto& gb = tp.grad_buffer(b);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t o = 0; o < out; ++o) gb[o] += g[n * out + o];
        }
      });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.shape()[0] != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor y({rows, total}, std::vector<double>(rows * total));
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value().values;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c)
        y.values[r * total + off + c] = pv[r * widths[k] + c];
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->push(
      std::move(y), parts,
      [inputs, widths, rows, total](Tape& tp, std::span<const double> g) {
        std::size_t off2 = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (tp.needs_grad(inputs[k])) {
            auto& gp = tp.grad_buffer(inputs[k]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                gp[r * widths[k] + c] += g[r * total + off2 + c];
          }
          off2 += widths[k];
        }
      });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  require_rank2(a, "slice_cols");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (start + len > cols) throw std::out_of_range("slice_cols: range exceeds columns");
  Tensor y({rows, len}, std::vector<double>(rows * len));
  const auto& av = a.value().values;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < len; ++c) y.values[r * len + c] = av[r * cols + start + c];
  return a.tape->push(std::move(y), {a},
                      [a, rows, cols, start, len](Tape& tp, std::span<const double> g) {
                        auto& ga = tp.grad_buffer(a);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < len; ++c)
                            ga[r * cols + start + c] += g[r * len + c];
                      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t r = table.shape()[0], c = table.shape()[1];
  Tensor y({ids.size(), c}, std::vector<double>(ids.size() * c));
  const auto& tv = table.value().values;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || static_cast<std::size_t>(ids[k]) >= r) {
      throw std::out_of_range("gather_rows: row id " + std::to_string(ids[k]) +
                              " outside table of " + std::to_string(r) + " rows");
    }
    std::copy_n(&tv[ids[k] * c], c, &y.values[k * c]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->push(std::move(y), {table},
                          [table, idv, c](Tape& tp, std::span<const double> g) {
                            auto& gt = tp.grad_buffer(table);
                            for (std::size_t k = 0; k < idv.size(); ++k)
                              for (std::size_t j = 0; j < c; ++j)
                                gt[idv[k] * c + j] += g[k * c + j];
                          });
}

Var pick(Var a, std::span<const int> idx) {
  require_rank2(a, "pick");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (idx.size() != rows) throw std::invalid_argument("pick: one index per row required");
  Tensor y({rows}, std::vector<double>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols)
      throw std::out_of_range("pick: column index out of range");
    y.values[r] = a.value().values[r * cols + idx[r]];
  }
  std::vector<int> iv(idx.begin(), idx.end());
  return a.tape->push(std::move(y), {a}, [a, iv, cols](Tape& tp, std::span<const double> g) {
    auto& ga = tp.grad_buffer(a);
    for (std::size_t r = 0; r < iv.size(); ++r) ga[r * cols + iv[r]] += g[r];
  });
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Tensor y(std::move(shape), a.value().values);
  return a.tape->push(std::move(y), {a},
                      [a](Tape& tp, std::span<const double> g) { tp.accumulate(a, g); });
}

Var log_softmax_rows(Var a) {
  require_rank2(a, "log_softmax_rows");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const auto& av = a.value().values;
  Tensor y({rows, cols}, std::vector<double>(rows * cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y.values[r * cols + c] = x[c] - lz;
  }
  std::vector<double> yv = y.values;
  return a.tape->push(std::move(y), {a},
                      [a, yv, rows, cols](Tape& tp, std::span<const double> g) {
                        auto& ga = tp.grad_buffer(a);
                        for (std::size_t r = 0; r < rows; ++r) {
                          double gs = 0.0;
                          for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
                          for (std::size_t c = 0; c < cols; ++c)
                            ga[r * cols + c] += g[r * cols + c] - std::exp(yv[r * cols + c]) * gs;
                        }
                      });
}

Var softmax_rows(Var a) {
  require_rank2(a, "softmax_rows");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const auto& av = a.value().values;
  Tensor y({rows, cols}, std::vector<double>(rows * cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y.values[r * cols + c] = std::exp(x[c] - mx);
      z += y.values[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) y.values[r * cols + c] /= z;
  }
  std::vector<double> yv = y.values;
  return a.tape->push(std::move(y), {a},
                      [a, yv, rows, cols](Tape& tp, std::span<const double> g) {
                        auto& ga = tp.grad_buffer(a);
                        for (std::size_t r = 0; r < rows; ++r) {
                          double dot = 0.0;
                          for (std::size_t c = 0; c < cols; ++c)
                            dot += g[r * cols + c] * yv[r * cols + c];
                          for (std::size_t c = 0; c < cols; ++c)
                            ga[r * cols + c] += yv[r * cols + c] * (g[r * cols + c] - dot);
                        }
                      });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

}  // namespace fgpl::ops
