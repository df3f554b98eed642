#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "dps/tensor.hpp"

namespace dps {

namespace detail {

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()) + ")");
}

inline void accumulate(const std::shared_ptr<TensorNode>& p, std::size_t i, double v) {
    p->ensure_grad();
    p->grad[i] += v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op_result("add", a.shape(), std::move(out), {a, b},
                          [pa, pb](detail::TensorNode& o) {
                              pa->ensure_grad();
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                  pa->grad[i] += o.grad[i];
                                  pb->grad[i] += o.grad[i];
                              }
                          });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op_result("sub", a.shape(), std::move(out), {a, b},
                          [pa, pb](detail::TensorNode& o) {
                              pa->ensure_grad();
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                  pa->grad[i] += o.grad[i];
                                  pb->grad[i] -= o.grad[i];
                              }
                          });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op_result("mul", a.shape(), std::move(out), {a, b},
                          [pa, pb](detail::TensorNode& o) {
                              pa->ensure_grad();
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                  pa->grad[i] += o.grad[i] * pb->data[i];
                                  pb->grad[i] += o.grad[i] * pa->data[i];
                              }
                          });
}

inline Tensor scalar_mul(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto pa = a.node();
    return make_op_result("scalar_mul", a.shape(), std::move(out), {a},
                          [pa, c](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] += o.grad[i] * c;
                          });
}

inline Tensor scalar_add(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto pa = a.node();
    return make_op_result("scalar_add", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] += o.grad[i];
                          });
}

/// Multiply by a scalar tensor (shape [1]).
inline Tensor scale(const Tensor& a, const Tensor& s) {
    if (s.size() != 1)
        throw std::invalid_argument("scale: scale factor must be scalar, got " +
                                    detail::shape_str(s.shape()));
    const double c = s.data()[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto pa = a.node(), ps = s.node();
    return make_op_result("scale", a.shape(), std::move(out), {a, s},
                          [pa, ps, c](detail::TensorNode& o) {
                              pa->ensure_grad();
                              ps->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                  pa->grad[i] += o.grad[i] * c;
                                  ps->grad[0] += o.grad[i] * pa->data[i];
                              }
                          });
}

/// Numerically symmetric sigmoid; no overflow for large |x|.
inline double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(a.data()[i]);
    auto pa = a.node();
    return make_op_result("sigmoid", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                  const double s = o.data[i];
                                  pa->grad[i] += o.grad[i] * s * (1.0 - s);
                              }
                          });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.data()[i]);
    auto pa = a.node();
    return make_op_result("relu", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  if (pa->data[i] > 0.0) pa->grad[i] += o.grad[i];
                          });
}

inline Tensor log(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
    auto pa = a.node();
    return make_op_result("log", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] += o.grad[i] / pa->data[i];
                          });
}

inline Tensor exp(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    auto pa = a.node();
    return make_op_result("exp", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] += o.grad[i] * o.data[i];
                          });
}

inline Tensor square(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
    auto pa = a.node();
    return make_op_result("square", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] += o.grad[i] * 2.0 * pa->data[i];
                          });
}

/// Elementwise clamp. Gradient passes through strictly interior entries and
/// is zero on clamped ones.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(std::max(a.data()[i], lo), hi);
    auto pa = a.node();
    return make_op_result("clamp", a.shape(), std::move(out), {a},
                          [pa, lo, hi](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  if (pa->data[i] > lo && pa->data[i] < hi)
                                      pa->grad[i] += o.grad[i];
                          });
}

inline Tensor reciprocal(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / a.data()[i];
    auto pa = a.node();
    return make_op_result("reciprocal", a.shape(), std::move(out), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] -= o.grad[i] * o.data[i] * o.data[i];
                          });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: shape mismatch (" + detail::shape_str(a.shape()) +
                                    " vs " + detail::shape_str(b.shape()) + ")");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a.data()[i * k + l];
            if (av == 0.0) continue;
            const double* brow = b.data().data() + l * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    auto pa = a.node(), pb = b.node();
    return make_op_result(
        "matmul", {m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](detail::TensorNode& o) {
            pa->ensure_grad();
            pb->ensure_grad();
            // dA = g B^T, dB = A^T g, contiguous inner loops
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = o.grad.data() + i * n;
                for (std::size_t l = 0; l < k; ++l) {
                    const double* brow = pb->data.data() + l * n;
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    pa->grad[i * k + l] += s;
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = o.grad.data() + i * n;
                const double* arow = pa->data.data() + i * k;
                for (std::size_t l = 0; l < k; ++l) {
                    const double av = arow[l];
                    if (av == 0.0) continue;
                    double* dbrow = pb->grad.data() + l * n;
                    for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                }
            }
        });
}

inline Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    if (detail::shape_numel(shape) != a.size())
        throw std::invalid_argument("reshape: size mismatch (" + detail::shape_str(a.shape()) +
                                    " vs " + detail::shape_str(shape) + ")");
    auto pa = a.node();
    return make_op_result("reshape", std::move(shape), a.data(), {a},
                          [pa](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < o.grad.size(); ++i)
                                  pa->grad[i] += o.grad[i];
                          });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const std::size_t rank = parts[0].rank();
    if (axis < 0 || static_cast<std::size_t>(axis) >= rank)
        throw std::invalid_argument("concat: bad axis");
    for (const Tensor& t : parts) {
        if (t.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < rank; ++d)
            if (d != static_cast<std::size_t>(axis) && t.dim(d) != parts[0].dim(d))
                throw std::invalid_argument("concat: shape mismatch (" +
                                            detail::shape_str(parts[0].shape()) + " vs " +
                                            detail::shape_str(t.shape()) + ")");
    }
    std::vector<std::size_t> shape = parts[0].shape();
    shape[axis] = 0;
    for (const Tensor& t : parts) shape[axis] += t.dim(axis);

    std::vector<double> out;
    out.reserve(detail::shape_numel(shape));
    if (rank == 1 || axis == 0) {
        for (const Tensor& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
    } else {  // rank 2, axis 1
        const std::size_t rows = shape[0];
        for (std::size_t r = 0; r < rows; ++r)
            for (const Tensor& t : parts) {
                const std::size_t c = t.dim(1);
                out.insert(out.end(), t.data().begin() + r * c, t.data().begin() + (r + 1) * c);
            }
    }
    std::vector<std::shared_ptr<detail::TensorNode>> pnodes;
    std::vector<std::size_t> widths;
    for (const Tensor& t : parts) {
        pnodes.push_back(t.node());
        widths.push_back(t.dim(axis));
    }
    const std::size_t rows = rank == 2 ? shape[0] : 1;
    return make_op_result(
        "concat", shape, std::move(out), parts,
        [pnodes, widths, axis, rank, rows](detail::TensorNode& o) {
            if (rank == 1 || axis == 0) {
                std::size_t off = 0;
                for (std::size_t p = 0; p < pnodes.size(); ++p) {
                    auto& pn = pnodes[p];
                    pn->ensure_grad();
                    for (std::size_t i = 0; i < pn->data.size(); ++i)
                        pn->grad[i] += o.grad[off + i];
                    off += pn->data.size();
                }
            } else {
                const std::size_t total_c = o.shape[1];
                std::size_t col_off = 0;
                for (std::size_t p = 0; p < pnodes.size(); ++p) {
                    auto& pn = pnodes[p];
                    pn->ensure_grad();
                    const std::size_t c = widths[p];
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j)
                            pn->grad[r * c + j] += o.grad[r * total_c + col_off + j];
                    col_off += c;
                }
            }
        });
}

inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    return concat(std::vector<Tensor>{a, b}, axis);
}

inline Tensor row_select(const Tensor& a, const std::vector<std::size_t>& rows) {
    if (a.rank() != 2) throw std::invalid_argument("row_select: input must be rank-2");
    const std::size_t n = a.dim(0), d = a.dim(1);
    for (std::size_t r : rows)
        if (r >= n)
            throw std::invalid_argument("row_select: row " + std::to_string(r) +
                                        " out of range for " + detail::shape_str(a.shape()));
    std::vector<double> out;
    out.reserve(rows.size() * d);
    for (std::size_t r : rows)
        out.insert(out.end(), a.data().begin() + r * d, a.data().begin() + (r + 1) * d);
    auto pa = a.node();
    return make_op_result("row_select", {rows.size(), d}, std::move(out), {a},
                          [pa, rows, d](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < rows.size(); ++i)
                                  for (std::size_t j = 0; j < d; ++j)
                                      pa->grad[rows[i] * d + j] += o.grad[i * d + j];
                          });
}

/// Repeats a length-d vector (or 1xd row) as n identical rows.
inline Tensor broadcast_rows(const Tensor& v, std::size_t n) {
    if (v.rank() > 2 || (v.rank() == 2 && v.dim(0) != 1))
        throw std::invalid_argument("broadcast_rows: input must be a vector or 1-row matrix");
    const std::size_t d = v.size();
    std::vector<double> out;
    out.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), v.data().begin(), v.data().end());
    auto pv = v.node();
    return make_op_result("broadcast_rows", {n, d}, std::move(out), {v},
                          [pv, n, d](detail::TensorNode& o) {
                              pv->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j)
                                      pv->grad[j] += o.grad[i * d + j];
                          });
}

/// Repeats a length-n vector as d identical columns.
inline Tensor broadcast_cols(const Tensor& v, std::size_t d) {
    if (v.rank() != 1)
        throw std::invalid_argument("broadcast_cols: input must be rank-1, got " +
                                    detail::shape_str(v.shape()));
    const std::size_t n = v.size();
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v.data()[i];
    auto pv = v.node();
    return make_op_result("broadcast_cols", {n, d}, std::move(out), {v},
                          [pv, n, d](detail::TensorNode& o) {
                              pv->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < d; ++j)
                                      pv->grad[i] += o.grad[i * d + j];
                          });
}

/// Scales row i of X by m[i]; diag(m) * X.
inline Tensor row_scale(const Tensor& x, const Tensor& m) {
    if (x.rank() != 2 || m.rank() != 1 || m.size() != x.dim(0))
        throw std::invalid_argument("row_scale: shape mismatch (" +
                                    detail::shape_str(x.shape()) + " vs " +
                                    detail::shape_str(m.shape()) + ")");
    return mul(broadcast_cols(m, x.dim(1)), x);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto pa = a.node();
    return make_op_result("sum", {1}, {s}, {a}, [pa](detail::TensorNode& o) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += o.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.size());
    auto pa = a.node();
    return make_op_result("mean", {1}, {s * inv}, {a}, [pa, inv](detail::TensorNode& o) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += o.grad[0] * inv;
    });
}

/// Column sums: collapses an n x m matrix to a 1 x m row.
inline Tensor sum_rows(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("sum_rows: input must be rank-2");
    const std::size_t n = a.dim(0), m = a.dim(1);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j] += a.data()[i * m + j];
    auto pa = a.node();
    return make_op_result("sum_rows", {1, m}, std::move(out), {a},
                          [pa, n, m](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < m; ++j)
                                      pa->grad[i * m + j] += o.grad[j];
                          });
}

/// Per-row sums: collapses an n x m matrix to a length-n vector.
inline Tensor row_sums(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("row_sums: input must be rank-2");
    const std::size_t n = a.dim(0), m = a.dim(1);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += a.data()[i * m + j];
    auto pa = a.node();
    return make_op_result("row_sums", {n}, std::move(out), {a},
                          [pa, n, m](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < m; ++j)
                                      pa->grad[i * m + j] += o.grad[i];
                          });
}

/// Stabilized log-sum-exp. Vector input reduces to a scalar; matrix input
/// reduces each row, yielding a length-n vector.
inline Tensor log_sum_exp(const Tensor& a) {
    const std::size_t rows = a.rank() == 2 ? a.dim(0) : 1;
    const std::size_t cols = a.rank() == 2 ? a.dim(1) : a.size();
    if (cols == 0) throw std::invalid_argument("log_sum_exp: empty input");
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = a.data().data() + i * cols;
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += std::exp(row[j] - mx);
        out[i] = mx + std::log(s);
    }
    std::vector<std::size_t> shape =
        a.rank() == 2 ? std::vector<std::size_t>{rows} : std::vector<std::size_t>{1};
    auto pa = a.node();
    return make_op_result("log_sum_exp", std::move(shape), std::move(out), {a},
                          [pa, rows, cols](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < rows; ++i) {
                                  const double g = o.grad[i];
                                  if (g == 0.0) continue;
                                  for (std::size_t j = 0; j < cols; ++j)
                                      pa->grad[i * cols + j] +=
                                          g * std::exp(pa->data[i * cols + j] - o.data[i]);
                              }
                          });
}

/// Per-sample cross entropy with integrated stabilized softmax:
/// out[i] = log_sum_exp(logits[i]) - logits[i][labels[i]].
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw std::invalid_argument("softmax_cross_entropy: logits must be rank-2");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n)
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(c) + ")");
    std::vector<double> out(n);
    std::vector<double> lse(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data().data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
        lse[i] = mx + std::log(s);
        out[i] = lse[i] - row[static_cast<std::size_t>(labels[i])];
    }
    auto pa = logits.node();
    return make_op_result("softmax_cross_entropy", {n}, std::move(out), {logits},
                          [pa, labels, lse, n, c](detail::TensorNode& o) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i) {
                                  const double g = o.grad[i];
                                  if (g == 0.0) continue;
                                  for (std::size_t j = 0; j < c; ++j) {
                                      const double p = std::exp(pa->data[i * c + j] - lse[i]);
                                      const double ind =
                                          j == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
                                      pa->grad[i * c + j] += g * (p - ind);
                                  }
                              }
                          });
}

/// Scatters one value per undirected edge into a symmetric n x n matrix.
/// Differentiable carrier for edge-masked adjacency.
inline Tensor edge_scatter(const Tensor& edge_vals,
                           const std::vector<std::array<int, 2>>& edges, std::size_t n) {
    if (edge_vals.rank() != 1 || edge_vals.size() != edges.size())
        throw std::invalid_argument("edge_scatter: " + std::to_string(edge_vals.size()) +
                                    " values for " + std::to_string(edges.size()) + " edges");
    std::vector<double> out(n * n, 0.0);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [u, v] = edges[e];
        if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n ||
            static_cast<std::size_t>(v) >= n || u == v)
            throw std::invalid_argument("edge_scatter: bad edge (" + std::to_string(u) + "," +
                                        std::to_string(v) + ") for n=" + std::to_string(n));
        out[static_cast<std::size_t>(u) * n + static_cast<std::size_t>(v)] += edge_vals.data()[e];
        out[static_cast<std::size_t>(v) * n + static_cast<std::size_t>(u)] += edge_vals.data()[e];
    }
    auto pv = edge_vals.node();
    return make_op_result("edge_scatter", {n, n}, std::move(out), {edge_vals},
                          [pv, edges, n](detail::TensorNode& o) {
                              pv->ensure_grad();
                              for (std::size_t e = 0; e < edges.size(); ++e) {
                                  const auto [u, v] = edges[e];
                                  pv->grad[e] +=
                                      o.grad[static_cast<std::size_t>(u) * n + v] +
                                      o.grad[static_cast<std::size_t>(v) * n + u];
                              }
                          });
}

}  // namespace dps
