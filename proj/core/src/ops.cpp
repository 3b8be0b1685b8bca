#include "idm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace idm::ad {

namespace {

void check(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace

Value* linear(Value* x, Value* W, Value* b) {
  check(x->val.shape.size() == 2 && W->val.shape.size() == 2 &&
            b->val.shape.size() == 1,
        "linear: expected x[B,I], W[O,I], b[O]");
  const int B = x->val.shape[0], I = x->val.shape[1];
  const int O = W->val.shape[0];
  check(W->val.shape[1] == I && b->val.shape[0] == O,
        "linear: shape mismatch");
  Tensor out = Tensor::zeros({B, O});
  const auto& xv = x->val.values;
  const auto& wv = W->val.values;
  const auto& bv = b->val.values;
  for (int n = 0; n < B; ++n)
    for (int o = 0; o < O; ++o) {
      double acc = bv[o];
      const double* xr = &xv[n * I];
      const double* wr = &wv[o * I];
      for (int i = 0; i < I; ++i) acc += wr[i] * xr[i];
      out.values[n * O + o] = acc;
    }
  return x->tape->record(std::move(out), {x, W, b}, [B, I, O](Value& v) {
    Value* x = v.parents[0];
    Value* W = v.parents[1];
    Value* b = v.parents[2];
    const auto& go = v.grad.values;
    for (int n = 0; n < B; ++n)
      for (int o = 0; o < O; ++o) {
        const double g = go[n * O + o];
        if (g == 0.0) continue;
        if (x->requires_grad) {
          double* gx = &x->grad.values[n * I];
          const double* wr = &W->val.values[o * I];
          for (int i = 0; i < I; ++i) gx[i] += g * wr[i];
        }
        if (W->requires_grad) {
          double* gw = &W->grad.values[o * I];
          const double* xr = &x->val.values[n * I];
          for (int i = 0; i < I; ++i) gw[i] += g * xr[i];
        }
        if (b->requires_grad) b->grad.values[o] += g;
      }
  });
}

Value* conv2d(Value* x, Value* K, int padding, int stride) {
  check(x->val.shape.size() == 4 && K->val.shape.size() == 4,
        "conv2d: expected x[B,C,H,W], K[F,C,kh,kw]");
  const int B = x->val.shape[0], C = x->val.shape[1];
  const int H = x->val.shape[2], W = x->val.shape[3];
  const int F = K->val.shape[0], kh = K->val.shape[2], kw = K->val.shape[3];
  check(K->val.shape[1] == C, "conv2d: channel mismatch");
  check(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  check((H + 2 * padding - kh) % stride == 0 &&
            (W + 2 * padding - kw) % stride == 0,
        "conv2d: non-integral output size");
  const int Ho = (H + 2 * padding - kh) / stride + 1;
  const int Wo = (W + 2 * padding - kw) / stride + 1;
  check(Ho > 0 && Wo > 0, "conv2d: empty output");

  Tensor out = Tensor::zeros({B, F, Ho, Wo});
  const auto& xv = x->val.values;
  const auto& kv = K->val.values;
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          double acc = 0.0;
          for (int c = 0; c < C; ++c)
            for (int u = 0; u < kh; ++u) {
              const int y = i * stride + u - padding;
              if (y < 0 || y >= H) continue;
              for (int v = 0; v < kw; ++v) {
                const int xx = j * stride + v - padding;
                if (xx < 0 || xx >= W) continue;
                acc += kv[((f * C + c) * kh + u) * kw + v] *
                       xv[((b * C + c) * H + y) * W + xx];
              }
            }
          out.values[((b * F + f) * Ho + i) * Wo + j] = acc;
        }
  return x->tape->record(
      std::move(out), {x, K},
      [B, C, H, W, F, kh, kw, Ho, Wo, padding, stride](Value& v) {
        Value* x = v.parents[0];
        Value* K = v.parents[1];
        const auto& go = v.grad.values;
        for (int b = 0; b < B; ++b)
          for (int f = 0; f < F; ++f)
            for (int i = 0; i < Ho; ++i)
              for (int j = 0; j < Wo; ++j) {
                const double g = go[((b * F + f) * Ho + i) * Wo + j];
                if (g == 0.0) continue;
                for (int c = 0; c < C; ++c)
                  for (int u = 0; u < kh; ++u) {
                    const int y = i * stride + u - padding;
                    if (y < 0 || y >= H) continue;
                    for (int w2 = 0; w2 < kw; ++w2) {
                      const int xx = j * stride + w2 - padding;
                      if (xx < 0 || xx >= W) continue;
                      const size_t ki = ((f * C + c) * kh + u) * kw + w2;
                      const size_t xi = ((b * C + c) * H + y) * W + xx;
                      if (x->requires_grad)
                        x->grad.values[xi] += g * K->val.values[ki];
                      if (K->requires_grad)
                        K->grad.values[ki] += g * x->val.values[xi];
                    }
                  }
              }
      });
}

Value* channel_bias(Value* x, Value* b) {
  check(x->val.shape.size() == 4 && b->val.shape.size() == 1 &&
            b->val.shape[0] == x->val.shape[1],
        "channel_bias: expected x[B,F,H,W], b[F]");
  const int B = x->val.shape[0], F = x->val.shape[1];
  const int HW = x->val.shape[2] * x->val.shape[3];
  Tensor out = x->val;
  for (int n = 0; n < B; ++n)
    for (int f = 0; f < F; ++f) {
      double* row = &out.values[(n * F + f) * HW];
      for (int p = 0; p < HW; ++p) row[p] += b->val.values[f];
    }
  return x->tape->record(std::move(out), {x, b}, [B, F, HW](Value& v) {
    Value* x = v.parents[0];
    Value* b = v.parents[1];
    for (int n = 0; n < B; ++n)
      for (int f = 0; f < F; ++f) {
        const double* g = &v.grad.values[(n * F + f) * HW];
        for (int p = 0; p < HW; ++p) {
          if (x->requires_grad) x->grad.values[(n * F + f) * HW + p] += g[p];
          if (b->requires_grad) b->grad.values[f] += g[p];
        }
      }
  });
}

Value* relu(Value* x) {
  Tensor out = x->val;
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return x->tape->record(std::move(out), {x}, [](Value& v) {
    Value* x = v.parents[0];
    if (!x->requires_grad) return;
    for (size_t i = 0; i < v.grad.values.size(); ++i)
      if (x->val.values[i] > 0.0) x->grad.values[i] += v.grad.values[i];
  });
}

Value* maxpool2x2(Value* x) {
  check(x->val.shape.size() == 4, "maxpool2x2: expected [B,C,H,W]");
  const int B = x->val.shape[0], C = x->val.shape[1];
  const int H = x->val.shape[2], W = x->val.shape[3];
  const int Ho = H / 2, Wo = W / 2;
  check(Ho > 0 && Wo > 0, "maxpool2x2: input too small");
  Tensor out = Tensor::zeros({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<size_t>>(out.values.size());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          double best = -std::numeric_limits<double>::infinity();
          size_t best_idx = 0;
          // ties broken by lowest flat index (scan order)
          for (int u = 0; u < 2; ++u)
            for (int v = 0; v < 2; ++v) {
              const size_t xi =
                  ((b * C + c) * static_cast<size_t>(H) + 2 * i + u) * W +
                  2 * j + v;
              if (x->val.values[xi] > best) {
                best = x->val.values[xi];
                best_idx = xi;
              }
            }
          const size_t oi = ((b * C + c) * static_cast<size_t>(Ho) + i) * Wo + j;
          out.values[oi] = best;
          (*argmax)[oi] = best_idx;
        }
  return x->tape->record(std::move(out), {x}, [argmax](Value& v) {
    Value* x = v.parents[0];
    if (!x->requires_grad) return;
    for (size_t i = 0; i < v.grad.values.size(); ++i)
      x->grad.values[(*argmax)[i]] += v.grad.values[i];
  });
}

Value* global_max_pool(Value* x) {
  check(x->val.shape.size() == 4, "global_max_pool: expected [B,C,H,W]");
  const int B = x->val.shape[0], C = x->val.shape[1];
  const int HW = x->val.shape[2] * x->val.shape[3];
  Tensor out = Tensor::zeros({B, C});
  auto argmax = std::make_shared<std::vector<size_t>>(out.values.size());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* row = &x->val.values[(b * C + c) * static_cast<size_t>(HW)];
      int best = 0;
      for (int p = 1; p < HW; ++p)
        if (row[p] > row[best]) best = p;
      out.values[b * C + c] = row[best];
      (*argmax)[b * C + c] = (b * C + c) * static_cast<size_t>(HW) + best;
    }
  return x->tape->record(std::move(out), {x}, [argmax](Value& v) {
    Value* x = v.parents[0];
    if (!x->requires_grad) return;
    for (size_t i = 0; i < v.grad.values.size(); ++i)
      x->grad.values[(*argmax)[i]] += v.grad.values[i];
  });
}

namespace {

// shared row-wise log-softmax forward
Tensor log_softmax_values(const Tensor& x) {
  const int B = x.shape[0], K = x.shape[1];
  Tensor out = Tensor::zeros({B, K});
  for (int b = 0; b < B; ++b) {
    const double* row = &x.values[b * K];
    double m = row[0];
    for (int k = 1; k < K; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double lz = m + std::log(z);
    for (int k = 0; k < K; ++k) out.values[b * K + k] = row[k] - lz;
  }
  return out;
}

}  // namespace

Value* softmax(Value* x) {
  check(x->val.shape.size() == 2, "softmax: expected [B,K]");
  Tensor out = log_softmax_values(x->val);
  for (double& v : out.values) v = std::exp(v);
  const int B = x->val.shape[0], K = x->val.shape[1];
  return x->tape->record(std::move(out), {x}, [B, K](Value& v) {
    Value* x = v.parents[0];
    if (!x->requires_grad) return;
    for (int b = 0; b < B; ++b) {
      const double* p = &v.val.values[b * K];
      const double* g = &v.grad.values[b * K];
      double dot = 0.0;
      for (int k = 0; k < K; ++k) dot += p[k] * g[k];
      for (int k = 0; k < K; ++k)
        x->grad.values[b * K + k] += p[k] * (g[k] - dot);
    }
  });
}

Value* log_softmax(Value* x) {
  check(x->val.shape.size() == 2, "log_softmax: expected [B,K]");
  const int B = x->val.shape[0], K = x->val.shape[1];
  Tensor out = log_softmax_values(x->val);
  return x->tape->record(std::move(out), {x}, [B, K](Value& v) {
    Value* x = v.parents[0];
    if (!x->requires_grad) return;
    for (int b = 0; b < B; ++b) {
      const double* lp = &v.val.values[b * K];
      const double* g = &v.grad.values[b * K];
      double gsum = 0.0;
      for (int k = 0; k < K; ++k) gsum += g[k];
      for (int k = 0; k < K; ++k)
        x->grad.values[b * K + k] += g[k] - std::exp(lp[k]) * gsum;
    }
  });
}

Value* cross_entropy_loss(Value* logits, const std::vector<int>& labels) {
  check(logits->val.shape.size() == 2, "cross_entropy: expected [B,K]");
  const int B = logits->val.shape[0], K = logits->val.shape[1];
  check(static_cast<int>(labels.size()) == B, "cross_entropy: label count");
  for (int y : labels)
    if (y < 0 || y >= K)
      throw std::out_of_range("cross_entropy: label outside action range");
  Tensor lp = log_softmax_values(logits->val);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) loss -= lp.values[b * K + labels[b]];
  loss /= B;
  auto lp_shared = std::make_shared<Tensor>(std::move(lp));
  auto labels_shared = std::make_shared<std::vector<int>>(labels);
  return logits->tape->record(
      Tensor::scalar(loss), {logits},
      [B, K, lp_shared, labels_shared](Value& v) {
        Value* x = v.parents[0];
        if (!x->requires_grad) return;
        const double g = v.grad.values[0] / B;
        for (int b = 0; b < B; ++b)
          for (int k = 0; k < K; ++k) {
            double p = std::exp(lp_shared->values[b * K + k]);
            double onehot = (k == (*labels_shared)[b]) ? 1.0 : 0.0;
            x->grad.values[b * K + k] += g * (p - onehot);
          }
      });
}

Value* mse_loss(Value* a, Value* b) {
  check(a->val.same_shape(b->val), "mse_loss: shape mismatch");
  const long N = a->val.size();
  double loss = 0.0;
  for (long i = 0; i < N; ++i) {
    const double d = a->val.values[i] - b->val.values[i];
    loss += d * d;
  }
  loss /= N;
  return a->tape->record(Tensor::scalar(loss), {a, b}, [N](Value& v) {
    Value* a = v.parents[0];
    Value* b = v.parents[1];
    const double g = 2.0 * v.grad.values[0] / N;
    for (long i = 0; i < N; ++i) {
      const double d = a->val.values[i] - b->val.values[i];
      if (a->requires_grad) a->grad.values[i] += g * d;
      if (b->requires_grad) b->grad.values[i] -= g * d;
    }
  });
}

Value* add(Value* a, Value* b) {
  check(a->val.same_shape(b->val), "add: shape mismatch");
  Tensor out = a->val;
  for (long i = 0; i < out.size(); ++i) out.values[i] += b->val.values[i];
  return a->tape->record(std::move(out), {a, b}, [](Value& v) {
    for (Value* p : v.parents)
      if (p->requires_grad)
        for (size_t i = 0; i < v.grad.values.size(); ++i)
          p->grad.values[i] += v.grad.values[i];
  });
}

Value* sub(Value* a, Value* b) {
  check(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor out = a->val;
  for (long i = 0; i < out.size(); ++i) out.values[i] -= b->val.values[i];
  return a->tape->record(std::move(out), {a, b}, [](Value& v) {
    Value* a = v.parents[0];
    Value* b = v.parents[1];
    for (size_t i = 0; i < v.grad.values.size(); ++i) {
      if (a->requires_grad) a->grad.values[i] += v.grad.values[i];
      if (b->requires_grad) b->grad.values[i] -= v.grad.values[i];
    }
  });
}

Value* scale(Value* a, double c) {
  Tensor out = a->val;
  for (double& v : out.values) v *= c;
  return a->tape->record(std::move(out), {a}, [c](Value& v) {
    Value* a = v.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < v.grad.values.size(); ++i)
      a->grad.values[i] += c * v.grad.values[i];
  });
}

Value* reshape(Value* x, std::vector<int> shape) {
  check(Tensor::numel(shape) == x->val.size(), "reshape: element count");
  Tensor out(std::move(shape), x->val.values);
  return x->tape->record(std::move(out), {x}, [](Value& v) {
    Value* x = v.parents[0];
    if (!x->requires_grad) return;
    for (size_t i = 0; i < v.grad.values.size(); ++i)
      x->grad.values[i] += v.grad.values[i];
  });
}

Value* concat_cols(Value* a, Value* b) {
  check(a->val.shape.size() == 2 && b->val.shape.size() == 2 &&
            a->val.shape[0] == b->val.shape[0],
        "concat_cols: expected [B,I],[B,J]");
  const int B = a->val.shape[0], I = a->val.shape[1], J = b->val.shape[1];
  Tensor out = Tensor::zeros({B, I + J});
  for (int n = 0; n < B; ++n) {
    std::copy_n(&a->val.values[n * I], I, &out.values[n * (I + J)]);
    std::copy_n(&b->val.values[n * J], J, &out.values[n * (I + J) + I]);
  }
  return a->tape->record(std::move(out), {a, b}, [B, I, J](Value& v) {
    Value* a = v.parents[0];
    Value* b = v.parents[1];
    for (int n = 0; n < B; ++n) {
      if (a->requires_grad)
        for (int i = 0; i < I; ++i)
          a->grad.values[n * I + i] += v.grad.values[n * (I + J) + i];
      if (b->requires_grad)
        for (int j = 0; j < J; ++j)
          b->grad.values[n * J + j] += v.grad.values[n * (I + J) + I + j];
    }
  });
}

Value* detach(Value* x) { return x->tape->leaf(x->val, false); }

Value* gather_rows(Value* table, const std::vector<int>& rows) {
  check(table->val.shape.size() == 2, "gather_rows: expected [N,D]");
  const int D = table->val.shape[1];
  const int B = static_cast<int>(rows.size());
  Tensor out = Tensor::zeros({B, D});
  for (int n = 0; n < B; ++n) {
    if (rows[n] < 0 || rows[n] >= table->val.shape[0])
      throw std::out_of_range("gather_rows: row index");
    std::copy_n(&table->val.values[rows[n] * D], D, &out.values[n * D]);
  }
  auto rows_shared = std::make_shared<std::vector<int>>(rows);
  return table->tape->record(std::move(out), {table},
                             [D, B, rows_shared](Value& v) {
                               Value* t = v.parents[0];
                               if (!t->requires_grad) return;
                               for (int n = 0; n < B; ++n)
                                 for (int d = 0; d < D; ++d)
                                   t->grad.values[(*rows_shared)[n] * D + d] +=
                                       v.grad.values[n * D + d];
                             });
}

}  // namespace idm::ad
