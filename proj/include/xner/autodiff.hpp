#ifndef XNER_AUTODIFF_HPP_
#define XNER_AUTODIFF_HPP_

// Minimal reverse-mode differentiation over dense tensors. Only the operations
// the tagger needs are provided; the only broadcast is none at all (bias
// addition is vector + vector of equal length).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xner/error.hpp"

namespace xner::ad {

#ifdef XNER_USE_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_shape();
  }
  Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape();
    if (data_.size() != shape_size(shape_))
      throw ConfigError("tensor of shape " + shape_str(shape_) + " given " + std::to_string(data_.size()) +
                        " values");
  }

  static Tensor vector(std::vector<Real> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> v;
    for (const auto& row : rows) {
      if (row.size() != c) throw ConfigError("ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  const std::vector<Real>& storage() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }
  Real& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols(), cols()}; }

  void fill(Real v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  // Bitwise-style equality: same shape, every element compares equal.
  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  void check_shape() const {
    for (std::size_t d : shape_)
      if (d == 0) throw ConfigError("tensor dimensions must be positive, got " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<Real> data_;
};

/// A trainable tensor with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() noexcept { grad.fill(0); }
};

// Kernels shared by the taped ops and by tape-free inference paths, so both
// produce bit-identical values.
namespace kernels {

inline void matvec(const Tensor& a, std::span<const Real> x, std::span<Real> out) {
  const std::size_t m = a.rows(), k = a.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = a.data() + i * k;
    Real s = 0;
    for (std::size_t j = 0; j < k; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

inline void log_softmax(std::span<const Real> in, std::span<Real> out) {
  const Real mx = *std::max_element(in.begin(), in.end());
  Real z = 0;
  for (Real v : in) z += std::exp(v - mx);
  const Real lse = mx + std::log(z);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - lse;
}

inline Real sigmoid(Real x) noexcept {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

inline Real logsumexp(std::span<const Real> v) {
  const Real mx = *std::max_element(v.begin(), v.end());
  Real z = 0;
  for (Real x : v) z += std::exp(x - mx);
  return mx + std::log(z);
}

}  // namespace kernels

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Record of executed ops. Not thread-safe; one tape per forward/backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Touch {
    Param* param;
    std::ptrdiff_t row;  // -1 for the whole tensor
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    return push_node(std::move(n));
  }

  /// Leaf that reads the parameter in place. Repeated calls return the same node.
  Var param(Param& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = true;
    Var v = push_node(std::move(n));
    param_nodes_.emplace(&p, v.id);
    touched_.push_back({&p, -1});
    return v;
  }

  /// Leaf holding one row of a matrix parameter; gradient lands only in that row.
  Var param_row(Param& p, std::size_t row) {
    if (p.value.rank() != 2 || row >= p.value.rows())
      throw ConfigError("row " + std::to_string(row) + " out of range for " + p.name + " " +
                        shape_str(p.value.shape()));
    const auto key = std::make_pair(&p, row);
    if (auto it = row_nodes_.find(key); it != row_nodes_.end()) return {this, it->second};
    Node n;
    auto r = p.value.row(row);
    n.value = Tensor({r.size()}, std::vector<Real>(r.begin(), r.end()));
    n.param = &p;
    n.row = static_cast<std::ptrdiff_t>(row);
    n.requires_grad = true;
    Var v = push_node(std::move(n));
    row_nodes_.emplace(key, v.id);
    touched_.push_back({&p, static_cast<std::ptrdiff_t>(row)});
    return v;
  }

  /// Used by op implementations.
  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(fn);
    return push_node(std::move(n));
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].ref ? *nodes_[id].ref : nodes_[id].value; }
  Tensor& grad(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Parameters (or parameter rows) read by this tape, in first-use order.
  const std::vector<Touch>& touched() const noexcept { return touched_; }

  /// Reverse accumulation from a scalar. Parameter gradients are summed per
  /// leaf first and then added to Param::grad, so two calls add exactly twice
  /// the same amount.
  void backward(Var loss) {
    if (loss.tape != this) throw ConfigError("backward: variable belongs to another tape");
    if (value(loss.id).size() != 1)
      throw ConfigError("backward: loss must be scalar, got " + shape_str(value(loss.id).shape()));
    for (std::size_t i = 0; i <= loss.id; ++i) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      const Shape& s = value(i).shape();
      if (n.grad.shape() == s)
        n.grad.fill(0);
      else
        n.grad = Tensor(s);
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad[0] = 1;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
    for (std::size_t i = 0; i <= loss.id; ++i) {
      Node& n = nodes_[i];
      if (!n.param) continue;
      if (n.row < 0) {
        Real* g = n.param->grad.data();
        for (std::size_t k = 0; k < n.grad.size(); ++k) g[k] += n.grad[k];
      } else {
        auto g = n.param->grad.row(static_cast<std::size_t>(n.row));
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Param* param = nullptr;
    std::ptrdiff_t row = -1;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Var push_node(Node n) {
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::map<Param*, std::size_t> param_nodes_;
  std::map<std::pair<Param*, std::size_t>, std::size_t> row_nodes_;
  std::vector<Touch> touched_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline void require_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape || !a.tape) throw ConfigError("operands live on different tapes");
}

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

/// a[m×k] · b[k×n] -> [m×n]; a rank-1 b is treated as a column and gives [m].
inline Var matmul(Var a, Var b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool vec = bv.rank() == 1;
  if (av.rank() != 2 || (bv.rank() != 1 && bv.rank() != 2) || av.cols() != bv.rows())
    throw ConfigError("matmul: shape mismatch " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = vec ? 1 : bv.cols();
  Tensor out(vec ? Shape{m} : Shape{m, n});
  if (vec) {
    kernels::matvec(av, bv.values(), out.values());
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        Real s = 0;
        for (std::size_t t = 0; t < k; ++t) s += av.at(i, t) * bv.at(t, j);
        out.at(i, j) = s;
      }
  }
  return a.tape->push(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.value(ai);
    const Tensor& B = tp.value(bi);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad(ai);  // g · Bᵀ
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const Real gij = g[i * n + j];
          if (gij == 0) continue;
          for (std::size_t t = 0; t < k; ++t) ga[i * k + t] += gij * B[t * n + j];
        }
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad(bi);  // Aᵀ · g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const Real gij = g[i * n + j];
          if (gij == 0) continue;
          for (std::size_t t = 0; t < k; ++t) gb[t * n + j] += A[i * k + t] * gij;
        }
    }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape->push(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t in : {ai, bi}) {
      if (!tp.requires_grad(in)) continue;
      Tensor& gi = tp.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->push(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& A = tp.value(ai);
    const Tensor& B = tp.value(bi);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

inline Var scale(Var a, Real c) {
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return a.tape->push(std::move(out), {a.id}, [ai = a.id, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

inline Var sigmoid(Var a) {
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::sigmoid(av[i]);
  return a.tape->push(std::move(out), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& s = tp.value(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1 - s[i]);
  });
}

inline Var tanh(Var a) {
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return a.tape->push(std::move(out), {a.id}, [ai = a.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& t = tp.value(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1 - t[i] * t[i]);
  });
}

/// Concatenation of vectors.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat: empty list");
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    detail::require_same_tape(parts[0], p);
    if (p.value().rank() != 1) throw ConfigError("concat: part is not a vector " + shape_str(p.shape()));
    total += p.value().size();
    ids.push_back(p.id);
  }
  Tensor out({total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + off);
    off += v.size();
  }
  return parts[0].tape->push(std::move(out), ids, [ids](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t in : ids) {
      const std::size_t len = tp.value(in).size();
      if (tp.requires_grad(in)) {
        Tensor& gi = tp.grad(in);
        for (std::size_t i = 0; i < len; ++i) gi[i] += g[off + i];
      }
      off += len;
    }
  });
}

inline Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

/// Contiguous sub-vector [offset, offset+len).
inline Var slice(Var a, std::size_t offset, std::size_t len) {
  const Tensor& av = a.value();
  if (av.rank() != 1 || len == 0 || offset + len > av.size())
    throw ConfigError("slice: [" + std::to_string(offset) + ", +" + std::to_string(len) + ") out of " +
                      shape_str(av.shape()));
  Tensor out({len}, std::vector<Real>(av.data() + offset, av.data() + offset + len));
  return a.tape->push(std::move(out), {a.id}, [ai = a.id, offset](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  });
}

/// Column-wise max of a [k×d] matrix. The gradient goes to the first row
/// attaining the max.
inline Var max_over_rows(Var m) {
  const Tensor& mv = m.value();
  if (mv.rank() != 2 || mv.size() == 0) throw ConfigError("max_over_rows: need a non-empty matrix, got " + shape_str(mv.shape()));
  const std::size_t k = mv.rows(), d = mv.cols();
  Tensor out({d});
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    Real best = mv.at(0, j);
    for (std::size_t r = 1; r < k; ++r)
      if (mv.at(r, j) > best) {
        best = mv.at(r, j);
        arg[j] = r;
      }
    out[j] = best;
  }
  return m.tape->push(std::move(out), {m.id}, [mi = m.id, arg = std::move(arg), d](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gm = tp.grad(mi);
    for (std::size_t j = 0; j < d; ++j) gm[arg[j] * d + j] += g[j];
  });
}

inline Var log_softmax(Var v) {
  const Tensor& vv = v.value();
  if (vv.rank() != 1) throw ConfigError("log_softmax: need a vector, got " + shape_str(vv.shape()));
  Tensor out(vv.shape());
  kernels::log_softmax(vv.values(), out.values());
  return v.tape->push(std::move(out), {v.id}, [vi = v.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Real gs = 0;
    for (std::size_t i = 0; i < g.size(); ++i) gs += g[i];
    Tensor& gv = tp.grad(vi);
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] - std::exp(y[i]) * gs;
  });
}

/// Element `index` of a vector as a scalar [1].
inline Var pick(Var v, std::size_t index) {
  const Tensor& vv = v.value();
  if (vv.rank() != 1 || index >= vv.size())
    throw ConfigError("pick: index " + std::to_string(index) + " out of " + shape_str(vv.shape()));
  Tensor out({1}, std::vector<Real>{vv[index]});
  return v.tape->push(std::move(out), {v.id}, [vi = v.id, index](Tape& tp, std::size_t self) {
    tp.grad(vi)[index] += tp.grad(self)[0];
  });
}

/// Sum of all elements, as a scalar [1].
inline Var sum(Var v) {
  const Tensor& vv = v.value();
  Real s = 0;
  for (Real x : vv.values()) s += x;
  Tensor out({1}, std::vector<Real>{s});
  return v.tape->push(std::move(out), {v.id}, [vi = v.id](Tape& tp, std::size_t self) {
    const Real g = tp.grad(self)[0];
    Tensor& gv = tp.grad(vi);
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g;
  });
}

/// Element-wise sum of equally shaped operands.
inline Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ConfigError("add_n: empty list");
  std::vector<std::size_t> ids;
  Tensor out(terms[0].shape());
  for (const Var& t : terms) {
    detail::require_same_shape("add_n", terms[0], t);
    const Tensor& tv = t.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
    ids.push_back(t.id);
  }
  return terms[0].tape->push(std::move(out), ids, [ids](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t in : ids) {
      if (!tp.requires_grad(in)) continue;
      Tensor& gi = tp.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

/// One-dimensional convolution over the rows of `input` [k×C] with `pad` zero
/// rows on each side. `weight` is [F × width·C] (row f holds filter f with its
/// width positions laid out consecutively), `bias` is [F]. Output is
/// [(k + 2·pad − width + 1) × F]. Zero input entries are skipped, which makes
/// one-hot inputs cost O(width) per filter and position.
inline Var conv1d(Var input, Var weight, Var bias, std::size_t width, std::size_t pad) {
  detail::require_same_tape(input, weight);
  detail::require_same_tape(input, bias);
  const Tensor& in = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (in.rank() != 2 || width == 0) throw ConfigError("conv1d: input must be a matrix, got " + shape_str(in.shape()));
  const std::size_t k = in.rows(), C = in.cols();
  if (w.rank() != 2 || w.cols() != width * C || b.rank() != 1 || b.size() != w.rows())
    throw ConfigError("conv1d: weight " + shape_str(w.shape()) + " / bias " + shape_str(b.shape()) +
                      " incompatible with input " + shape_str(in.shape()) + " and width " + std::to_string(width));
  if (k + 2 * pad < width) throw ConfigError("conv1d: no valid position for width " + std::to_string(width));
  const std::size_t F = w.rows(), P = k + 2 * pad - width + 1;

  struct Entry {
    std::size_t col;
    Real val;
  };
  std::vector<std::vector<Entry>> nz(k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < C; ++c)
      if (in.at(r, c) != 0) nz[r].push_back({c, in.at(r, c)});

  Tensor out({P, F});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t f = 0; f < F; ++f) {
      Real s = b[f];
      for (std::size_t j = 0; j < width; ++j) {
        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(p + j) - static_cast<std::ptrdiff_t>(pad);
        if (r < 0 || r >= static_cast<std::ptrdiff_t>(k)) continue;
        for (const Entry& e : nz[static_cast<std::size_t>(r)]) s += w.at(f, j * C + e.col) * e.val;
      }
      out.at(p, f) = s;
    }
  return input.tape->push(
      std::move(out), {input.id, weight.id, bias.id},
      [ii = input.id, wi = weight.id, bi = bias.id, nz = std::move(nz), k, C, F, P, width, pad](Tape& tp,
                                                                                                std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& W = tp.value(wi);
        const bool gw = tp.requires_grad(wi), gb = tp.requires_grad(bi), gi = tp.requires_grad(ii);
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t f = 0; f < F; ++f) {
            const Real gpf = g[p * F + f];
            if (gpf == 0) continue;
            if (gb) tp.grad(bi)[f] += gpf;
            for (std::size_t j = 0; j < width; ++j) {
              const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(p + j) - static_cast<std::ptrdiff_t>(pad);
              if (r < 0 || r >= static_cast<std::ptrdiff_t>(k)) continue;
              const auto row = static_cast<std::size_t>(r);
              if (gw)
                for (const Entry& e : nz[row]) tp.grad(wi)[f * width * C + j * C + e.col] += gpf * e.val;
              if (gi)
                for (std::size_t c = 0; c < C; ++c) tp.grad(ii)[row * C + c] += gpf * W[f * width * C + j * C + c];
            }
          }
      });
}

struct GradCheckResult {
  Real max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  Real analytic = 0;
  Real numeric = 0;
};

/// Central-difference check of the analytic gradient of `loss_fn` with
/// respect to every coordinate of `params`. Leaves the analytic gradient in
/// Param::grad.
inline GradCheckResult gradient_check_detailed(const std::function<Var(Tape&)>& loss_fn,
                                               std::span<Param* const> params, Real eps) {
  auto eval = [&] {
    Tape t;
    const Var l = loss_fn(t);
    if (l.value().size() != 1) throw ConfigError("gradient_check: loss must be scalar");
    const Real v = l.value()[0];
    if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite loss");
    return v;
  };
  for (Param* p : params) p->zero_grad();
  {
    Tape t;
    const Var l = loss_fn(t);
    if (l.value().size() != 1) throw ConfigError("gradient_check: loss must be scalar");
    if (!std::isfinite(l.value()[0])) throw NumericError("gradient_check: non-finite loss");
    t.backward(l);
  }
  GradCheckResult res;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const Real orig = p->value[i];
      p->value[i] = orig + eps;
      const Real fp = eval();
      p->value[i] = orig - eps;
      const Real fm = eval();
      p->value[i] = orig;
      const Real numeric = (fp - fm) / (2 * eps);
      const Real analytic = p->grad[i];
      const Real denom = std::max({std::abs(analytic), std::abs(numeric), Real(1e-8)});
      const Real err = std::abs(analytic - numeric) / denom;
      if (err > res.max_rel_error || res.worst_param.empty()) res = {err, p->name, i, analytic, numeric};
    }
  }
  return res;
}

inline Real gradient_check(const std::function<Var(Tape&)>& loss_fn, std::span<Param* const> params, Real eps) {
  return gradient_check_detailed(loss_fn, params, eps).max_rel_error;
}

}  // namespace xner::ad

#endif  // XNER_AUTODIFF_HPP_
