#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prism/array.hpp"
#include "prism/common.hpp"

namespace prism::ad {

/// Reverse-mode tape. Each primitive appends one record; backward replays the
/// records exactly once in reverse creation order. Execution is single
/// threaded and deterministic: identical (graph, inputs) give bitwise
/// identical values and gradients.
template <typename T>
class TapeT {
 public:
  using Id = int32_t;
  using Arr = ArrayT<T>;

  enum class Op : uint8_t {
    Input, Matmul, Add, Sub, Mul, Div, Scale, AddScalar,
    Exp, Log, Sqrt, Square, Neg, Gelu,
    SoftmaxLast, LogSoftmaxLast, LayerNormLast,
    Sum, Mean, SumAxis0, MeanAxis0, SumCols, MeanCols,
    ConcatRows, ConcatCols, SliceRows, GatherRows,
    Detach, Reshape, LogSumExpAll,
  };

  /// Whether forward passes validate output finiteness (kept on by default;
  /// the cost is one linear scan per op).
  bool check_finite = true;

  Id input(Arr value, bool requires_grad) {
    Node n;
    n.op = Op::Input;
    n.val = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n), /*validate=*/false);
  }
  Id constant(Arr value) { return input(std::move(value), false); }
  Id constant(T value) { return input(Arr::scalar(value), false); }

  // ---- primitives -------------------------------------------------------

  Id matmul(Id a, Id b, bool ta = false, bool tb = false) {
    const Arr& A = val(a);
    const Arr& B = val(b);
    PRISM_CHECK(A.shape.size() == 2 && B.shape.size() == 2,
                "matmul: rank-2 operands required, got ranks ", A.shape.size(),
                " and ", B.shape.size());
    const int64_t am = ta ? A.shape[1] : A.shape[0];
    const int64_t ak = ta ? A.shape[0] : A.shape[1];
    const int64_t bk = tb ? B.shape[1] : B.shape[0];
    const int64_t bn = tb ? B.shape[0] : B.shape[1];
    PRISM_CHECK(ak == bk, "matmul: inner dims differ: ", ak, " vs ", bk,
                " (lhs ", A.shape[0], "x", A.shape[1], tb ? " rhs^T " : " rhs ",
                B.shape[0], "x", B.shape[1], ")");
    Node n;
    n.op = Op::Matmul;
    n.in = {a, b};
    n.i0 = ta;
    n.i1 = tb;
    n.val = Arr::zeros({am, bn});
    gemm(A, ta, B, tb, n.val);
    return push(std::move(n));
  }

  Id add(Id a, Id b) { return binary(Op::Add, a, b); }
  Id sub(Id a, Id b) { return binary(Op::Sub, a, b); }
  Id mul(Id a, Id b) { return binary(Op::Mul, a, b); }
  Id div(Id a, Id b) { return binary(Op::Div, a, b); }

  Id scale(Id a, T c) {
    Node n;
    n.op = Op::Scale;
    n.in = {a, -1};
    n.f0 = c;
    n.val = val(a);
    for (auto& x : n.val.v) x *= c;
    return push(std::move(n));
  }

  Id add_scalar(Id a, T c) {
    Node n;
    n.op = Op::AddScalar;
    n.in = {a, -1};
    n.f0 = c;
    n.val = val(a);
    for (auto& x : n.val.v) x += c;
    return push(std::move(n));
  }

  Id exp(Id a) { return unary(Op::Exp, a, [](T x) { return std::exp(x); }); }
  Id log(Id a) { return unary(Op::Log, a, [](T x) { return std::log(x); }); }
  Id sqrt(Id a) { return unary(Op::Sqrt, a, [](T x) { return std::sqrt(x); }); }
  Id square(Id a) { return unary(Op::Square, a, [](T x) { return x * x; }); }
  Id neg(Id a) { return unary(Op::Neg, a, [](T x) { return -x; }); }
  Id gelu(Id a) {
    return unary(Op::Gelu, a, [](T x) {
      return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475)));
    });
  }

  /// softmax over the last axis at the given temperature: softmax(x / temp).
  Id softmax_last(Id a, T temp = T(1)) {
    Node n;
    n.op = Op::SoftmaxLast;
    n.in = {a, -1};
    n.f0 = temp;
    n.val = val(a);
    softmax_rows(n.val, temp, /*log_form=*/false);
    return push(std::move(n));
  }

  Id log_softmax_last(Id a, T temp = T(1)) {
    Node n;
    n.op = Op::LogSoftmaxLast;
    n.in = {a, -1};
    n.f0 = temp;
    n.val = val(a);
    softmax_rows(n.val, temp, /*log_form=*/true);
    return push(std::move(n));
  }

  /// Layer normalization over the last axis, pre-affine. A constant row maps
  /// to zeros (variance 0 stays 0 / sqrt(eps)).
  Id layernorm_last(Id a, T eps = T(1e-5)) {
    Node n;
    n.op = Op::LayerNormLast;
    n.in = {a, -1};
    n.f0 = eps;
    const Arr& A = val(a);
    const int64_t R = A.rows(), C = A.cols();
    PRISM_CHECK(C >= 1, "layernorm: empty last axis");
    n.val = A;
    n.aux.resize(static_cast<size_t>(R));  // rstd per row
    for (int64_t r = 0; r < R; ++r) {
      T mean = 0;
      for (int64_t c = 0; c < C; ++c) mean += A.at(r, c);
      mean /= T(C);
      T var = 0;
      for (int64_t c = 0; c < C; ++c) {
        const T d = A.at(r, c) - mean;
        var += d * d;
      }
      var /= T(C);
      const T rstd = T(1) / std::sqrt(var + eps);
      n.aux[static_cast<size_t>(r)] = rstd;
      for (int64_t c = 0; c < C; ++c) n.val.at(r, c) = (A.at(r, c) - mean) * rstd;
    }
    return push(std::move(n));
  }

  Id sum(Id a) { return reduce_all(Op::Sum, a); }
  Id mean(Id a) { return reduce_all(Op::Mean, a); }

  Id sum_axis0(Id a) { return reduce_axis0(Op::SumAxis0, a); }
  Id mean_axis0(Id a) { return reduce_axis0(Op::MeanAxis0, a); }
  Id sum_cols(Id a) { return reduce_cols(Op::SumCols, a); }
  Id mean_cols(Id a) { return reduce_cols(Op::MeanCols, a); }

  Id concat_rows(const std::vector<Id>& parts) {
    PRISM_CHECK(!parts.empty(), "concat_rows: no inputs");
    const int64_t C = val(parts[0]).cols();
    int64_t R = 0;
    for (Id p : parts) {
      PRISM_CHECK(val(p).cols() == C, "concat_rows: column mismatch: ",
                  val(p).cols(), " vs ", C);
      R += val(p).rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.extra_in = parts;
    n.val = Arr::zeros({R, C});
    int64_t r = 0;
    for (Id p : parts) {
      const Arr& P = val(p);
      std::copy(P.v.begin(), P.v.end(), n.val.v.begin() + r * C);
      r += P.rows();
    }
    return push(std::move(n));
  }

  Id concat_cols(Id a, Id b) {
    const Arr& A = val(a);
    const Arr& B = val(b);
    PRISM_CHECK(A.rows() == B.rows(), "concat_cols: row mismatch: ", A.rows(),
                " vs ", B.rows());
    Node n;
    n.op = Op::ConcatCols;
    n.in = {a, b};
    const int64_t R = A.rows(), Ca = A.cols(), Cb = B.cols();
    n.val = Arr::zeros({R, Ca + Cb});
    for (int64_t r = 0; r < R; ++r) {
      for (int64_t c = 0; c < Ca; ++c) n.val.at(r, c) = A.at(r, c);
      for (int64_t c = 0; c < Cb; ++c) n.val.at(r, Ca + c) = B.at(r, c);
    }
    return push(std::move(n));
  }

  Id slice_rows(Id a, int64_t r0, int64_t r1) {
    const Arr& A = val(a);
    PRISM_CHECK(0 <= r0 && r0 < r1 && r1 <= A.rows(),
                "slice_rows: range [", r0, ",", r1, ") out of ", A.rows());
    Node n;
    n.op = Op::SliceRows;
    n.in = {a, -1};
    n.i0 = r0;
    n.i1 = r1;
    const int64_t C = A.cols();
    n.val = Arr::zeros({r1 - r0, C});
    std::copy(A.v.begin() + r0 * C, A.v.begin() + r1 * C, n.val.v.begin());
    return push(std::move(n));
  }

  Id gather_rows(Id table, std::vector<int32_t> idx) {
    const Arr& A = val(table);
    PRISM_CHECK(A.shape.size() == 2, "gather_rows: table must be rank 2");
    Node n;
    n.op = Op::GatherRows;
    n.in = {table, -1};
    const int64_t C = A.cols();
    n.val = Arr::zeros({static_cast<int64_t>(idx.size()), C});
    for (size_t i = 0; i < idx.size(); ++i) {
      PRISM_CHECK(idx[i] >= 0 && idx[i] < A.rows(), "gather_rows: index ",
                  idx[i], " out of ", A.rows());
      std::copy(A.v.begin() + idx[i] * C, A.v.begin() + (idx[i] + 1) * C,
                n.val.v.begin() + static_cast<int64_t>(i) * C);
    }
    n.idx = std::move(idx);
    return push(std::move(n));
  }

  /// Marks the subgraph gradient-opaque: values pass through, gradients stop.
  Id detach(Id a) {
    Node n;
    n.op = Op::Detach;
    n.in = {a, -1};
    n.val = val(a);
    n.requires_grad = false;
    return push(std::move(n), /*validate=*/false, /*force_no_grad=*/true);
  }

  Id reshape(Id a, std::vector<int64_t> shape) {
    const Arr& A = val(a);
    PRISM_CHECK(Arr::numel_of(shape) == A.numel(), "reshape: cannot view ",
                A.numel(), " values as requested shape");
    Node n;
    n.op = Op::Reshape;
    n.in = {a, -1};
    n.val = Arr(std::move(shape), A.v);
    return push(std::move(n), /*validate=*/false);
  }

  /// log(sum(exp(x))) over all entries, max-subtracted.
  Id logsumexp_all(Id a) {
    const Arr& A = val(a);
    PRISM_CHECK(A.numel() > 0, "logsumexp_all: empty input");
    T m = A.v[0];
    for (T x : A.v) m = std::max(m, x);
    T s = 0;
    for (T x : A.v) s += std::exp(x - m);
    Node n;
    n.op = Op::LogSumExpAll;
    n.in = {a, -1};
    n.val = Arr::scalar(m + std::log(s));
    return push(std::move(n));
  }

  // ---- access ------------------------------------------------------------

  const Arr& val(Id id) const { return nodes_[static_cast<size_t>(id)].val; }
  const Arr& grad(Id id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    PRISM_CHECK(!n.grad.v.empty(), "grad: node ", id,
                " has no gradient (run backward first; node must require grad)");
    return n.grad;
  }
  bool requires_grad(Id id) const {
    return nodes_[static_cast<size_t>(id)].requires_grad;
  }
  size_t size() const { return nodes_.size(); }

  // ---- backward ----------------------------------------------------------

  void backward(Id loss) {
    Node& L = nodes_[static_cast<size_t>(loss)];
    PRISM_CHECK(L.val.is_scalar(), "backward: loss must be scalar, got ",
                L.val.numel(), " values");
    ensure_grad(loss);
    L.grad.v[0] = T(1);
    for (int32_t id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || n.grad.v.empty()) continue;
      backward_node(id, n);
      if (check_finite) {
        for (Id in : all_inputs(n)) {
          if (in < 0) continue;
          const Node& src = nodes_[static_cast<size_t>(in)];
          if (src.grad.v.empty()) continue;
          for (T g : src.grad.v)
            PRISM_CHECK(std::isfinite(g), "backward: non-finite gradient from ",
                        op_name(n.op), " (node ", id, ")");
        }
      }
    }
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::Input: return "input";
      case Op::Matmul: return "matmul";
      case Op::Add: return "add";
      case Op::Sub: return "sub";
      case Op::Mul: return "mul";
      case Op::Div: return "div";
      case Op::Scale: return "scale";
      case Op::AddScalar: return "add_scalar";
      case Op::Exp: return "exp";
      case Op::Log: return "log";
      case Op::Sqrt: return "sqrt";
      case Op::Square: return "square";
      case Op::Neg: return "neg";
      case Op::Gelu: return "gelu";
      case Op::SoftmaxLast: return "softmax_last";
      case Op::LogSoftmaxLast: return "log_softmax_last";
      case Op::LayerNormLast: return "layernorm_last";
      case Op::Sum: return "sum";
      case Op::Mean: return "mean";
      case Op::SumAxis0: return "sum_axis0";
      case Op::MeanAxis0: return "mean_axis0";
      case Op::SumCols: return "sum_cols";
      case Op::MeanCols: return "mean_cols";
      case Op::ConcatRows: return "concat_rows";
      case Op::ConcatCols: return "concat_cols";
      case Op::SliceRows: return "slice_rows";
      case Op::GatherRows: return "gather_rows";
      case Op::Detach: return "detach";
      case Op::Reshape: return "reshape";
      case Op::LogSumExpAll: return "logsumexp_all";
    }
    return "?";
  }

 private:
  enum Bcast : int64_t { kSame = 0, kRowVec = 1, kColVec = 2, kScalar = 3 };

  struct Node {
    Op op = Op::Input;
    std::array<Id, 2> in{-1, -1};
    std::vector<Id> extra_in;
    Arr val;
    Arr grad;
    bool requires_grad = false;
    int64_t i0 = 0, i1 = 0;
    T f0 = T(0);
    std::vector<T> aux;
    std::vector<int32_t> idx;
  };

  std::vector<Node> nodes_;

  std::vector<Id> all_inputs(const Node& n) const {
    std::vector<Id> v;
    if (!n.extra_in.empty()) return n.extra_in;
    if (n.in[0] >= 0) v.push_back(n.in[0]);
    if (n.in[1] >= 0) v.push_back(n.in[1]);
    return v;
  }

  Id push(Node&& n, bool validate = true, bool force_no_grad = false) {
    if (!force_no_grad && n.op != Op::Input) {
      bool rg = false;
      for (Id in : all_inputs(n)) rg = rg || nodes_[static_cast<size_t>(in)].requires_grad;
      n.requires_grad = rg;
    }
    if (validate && check_finite) {
      for (T x : n.val.v)
        PRISM_CHECK(std::isfinite(x), "forward: non-finite output of ",
                    op_name(n.op), " (node ", nodes_.size(), ")");
    }
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  void ensure_grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = Arr::zeros(n.val.shape);
  }

  Arr* grad_sink(Id id) {
    if (id < 0) return nullptr;
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return nullptr;
    ensure_grad(id);
    return &n.grad;
  }

  // -- kernels --

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;

  static void gemm(const Arr& A, bool ta, const Arr& B, bool tb, Arr& out) {
    CMap a(A.v.data(), A.shape[0], A.shape[1]);
    CMap b(B.v.data(), B.shape[0], B.shape[1]);
    MMap o(out.v.data(), out.shape[0], out.shape[1]);
    if (!ta && !tb) o.noalias() = a * b;
    else if (ta && !tb) o.noalias() = a.transpose() * b;
    else if (!ta && tb) o.noalias() = a * b.transpose();
    else o.noalias() = a.transpose() * b.transpose();
  }

  static void gemm_acc(const Arr& A, bool ta, const Arr& B, bool tb, Arr& out) {
    CMap a(A.v.data(), A.shape[0], A.shape[1]);
    CMap b(B.v.data(), B.shape[0], B.shape[1]);
    MMap o(out.v.data(), out.rows(), out.cols());
    if (!ta && !tb) o.noalias() += a * b;
    else if (ta && !tb) o.noalias() += a.transpose() * b;
    else if (!ta && tb) o.noalias() += a * b.transpose();
    else o.noalias() += a.transpose() * b.transpose();
  }

  static void softmax_rows(Arr& x, T temp, bool log_form) {
    PRISM_CHECK(temp > T(0), "softmax: temperature must be > 0, got ", temp);
    const int64_t R = x.rows(), C = x.cols();
    for (int64_t r = 0; r < R; ++r) {
      T m = x.at(r, 0);
      for (int64_t c = 1; c < C; ++c) m = std::max(m, x.at(r, c));
      T s = 0;
      for (int64_t c = 0; c < C; ++c) {
        const T e = std::exp((x.at(r, c) - m) / temp);
        x.at(r, c) = e;
        s += e;
      }
      if (log_form) {
        const T ls = std::log(s);
        for (int64_t c = 0; c < C; ++c) x.at(r, c) = std::log(x.at(r, c)) - ls;
      } else {
        for (int64_t c = 0; c < C; ++c) x.at(r, c) /= s;
      }
    }
  }

  Id unary(Op op, Id a, T (*fn)(T)) {
    Node n;
    n.op = op;
    n.in = {a, -1};
    n.val = val(a);
    for (auto& x : n.val.v) x = fn(x);
    return push(std::move(n));
  }

  static Bcast infer_bcast(const Arr& A, const Arr& B) {
    if (B.numel() == 1) return kScalar;
    if (A.shape == B.shape) return kSame;
    if (B.rows() == 1 && B.cols() == A.cols()) return kRowVec;
    if (B.cols() == 1 && B.rows() == A.rows()) return kColVec;
    return static_cast<Bcast>(-1);
  }

  Id binary(Op op, Id a, Id b) {
    const Arr& A = val(a);
    const Arr& B = val(b);
    const Bcast bc = infer_bcast(A, B);
    PRISM_CHECK(static_cast<int64_t>(bc) >= 0, op_name(op),
                ": incompatible shapes lhs [", A.rows(), "x", A.cols(),
                "] rhs [", B.rows(), "x", B.cols(), "]");
    Node n;
    n.op = op;
    n.in = {a, b};
    n.i0 = bc;
    n.val = A;
    const int64_t R = A.rows(), C = A.cols();
    auto rhs = [&](int64_t r, int64_t c) -> T {
      switch (bc) {
        case kSame: return B.at(r, c);
        case kRowVec: return B.v[static_cast<size_t>(c)];
        case kColVec: return B.v[static_cast<size_t>(r)];
        default: return B.v[0];
      }
    };
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) {
        T& o = n.val.at(r, c);
        const T y = rhs(r, c);
        switch (op) {
          case Op::Add: o += y; break;
          case Op::Sub: o -= y; break;
          case Op::Mul: o *= y; break;
          case Op::Div: o /= y; break;
          default: break;
        }
      }
    return push(std::move(n));
  }

  Id reduce_all(Op op, Id a) {
    const Arr& A = val(a);
    T s = 0;
    for (T x : A.v) s += x;
    if (op == Op::Mean) s /= T(A.numel());
    Node n;
    n.op = op;
    n.in = {a, -1};
    n.val = Arr::scalar(s);
    return push(std::move(n));
  }

  Id reduce_axis0(Op op, Id a) {
    const Arr& A = val(a);
    const int64_t R = A.rows(), C = A.cols();
    Node n;
    n.op = op;
    n.in = {a, -1};
    n.val = Arr::zeros({1, C});
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) n.val.v[static_cast<size_t>(c)] += A.at(r, c);
    if (op == Op::MeanAxis0)
      for (auto& x : n.val.v) x /= T(R);
    return push(std::move(n));
  }

  Id reduce_cols(Op op, Id a) {
    const Arr& A = val(a);
    const int64_t R = A.rows(), C = A.cols();
    Node n;
    n.op = op;
    n.in = {a, -1};
    n.val = Arr::zeros({R, 1});
    for (int64_t r = 0; r < R; ++r) {
      T s = 0;
      for (int64_t c = 0; c < C; ++c) s += A.at(r, c);
      n.val.v[static_cast<size_t>(r)] = (op == Op::MeanCols) ? s / T(C) : s;
    }
    return push(std::move(n));
  }

  void backward_node(Id id, Node& n) {
    const Arr& g = n.grad;
    switch (n.op) {
      case Op::Input:
      case Op::Detach:
        return;
      case Op::Matmul: {
        const bool ta = n.i0 != 0, tb = n.i1 != 0;
        const Arr& A = val(n.in[0]);
        const Arr& B = val(n.in[1]);
        if (Arr* ga = grad_sink(n.in[0])) {
          // dA = dC B^T (plain), with transpose bookkeeping folded in.
          if (!ta) gemm_acc(g, false, B, !tb, *ga);
          else gemm_acc(B, tb, g, true, *ga);
        }
        if (Arr* gb = grad_sink(n.in[1])) {
          if (!tb) gemm_acc(A, !ta, g, false, *gb);
          else gemm_acc(g, true, A, ta, *gb);
        }
        return;
      }
      case Op::Add:
      case Op::Sub: {
        const T sgn = (n.op == Op::Sub) ? T(-1) : T(1);
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i];
        if (Arr* gb = grad_sink(n.in[1]))
          scatter_bcast(g, static_cast<Bcast>(n.i0), sgn, *gb);
        return;
      }
      case Op::Mul:
      case Op::Div: {
        const Arr& A = val(n.in[0]);
        const Arr& B = val(n.in[1]);
        const Bcast bc = static_cast<Bcast>(n.i0);
        const int64_t R = A.rows(), C = A.cols();
        auto rhs = [&](int64_t r, int64_t c) -> T {
          switch (bc) {
            case kSame: return B.at(r, c);
            case kRowVec: return B.v[static_cast<size_t>(c)];
            case kColVec: return B.v[static_cast<size_t>(r)];
            default: return B.v[0];
          }
        };
        if (Arr* ga = grad_sink(n.in[0])) {
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) {
              const T y = rhs(r, c);
              const T gv = g.at(r, c);
              ga->at(r, c) += (n.op == Op::Mul) ? gv * y : gv / y;
            }
        }
        if (Arr* gb = grad_sink(n.in[1])) {
          Arr tmp = Arr::zeros(A.shape);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) {
              const T gv = g.at(r, c);
              if (n.op == Op::Mul) {
                tmp.at(r, c) = gv * A.at(r, c);
              } else {
                const T y = rhs(r, c);
                tmp.at(r, c) = -gv * n.val.at(r, c) / y;  // -g * (a/b) / b
              }
            }
          scatter_bcast(tmp, bc, T(1), *gb);
        }
        return;
      }
      case Op::Scale: {
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i] * n.f0;
        return;
      }
      case Op::AddScalar: {
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i];
        return;
      }
      case Op::Exp: {
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i] * n.val.v[i];
        return;
      }
      case Op::Log: {
        const Arr& A = val(n.in[0]);
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i] / A.v[i];
        return;
      }
      case Op::Sqrt: {
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i)
            ga->v[i] += g.v[i] / (T(2) * n.val.v[i]);
        return;
      }
      case Op::Square: {
        const Arr& A = val(n.in[0]);
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i)
            ga->v[i] += g.v[i] * T(2) * A.v[i];
        return;
      }
      case Op::Neg: {
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] -= g.v[i];
        return;
      }
      case Op::Gelu: {
        const Arr& A = val(n.in[0]);
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) {
            const T x = A.v[i];
            const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475)));
            const T pdf = T(0.3989422804014327) * std::exp(T(-0.5) * x * x);
            ga->v[i] += g.v[i] * (cdf + x * pdf);
          }
        return;
      }
      case Op::SoftmaxLast: {
        if (Arr* ga = grad_sink(n.in[0])) {
          const int64_t R = n.val.rows(), C = n.val.cols();
          for (int64_t r = 0; r < R; ++r) {
            T dot = 0;
            for (int64_t c = 0; c < C; ++c) dot += g.at(r, c) * n.val.at(r, c);
            for (int64_t c = 0; c < C; ++c)
              ga->at(r, c) += n.val.at(r, c) * (g.at(r, c) - dot) / n.f0;
          }
        }
        return;
      }
      case Op::LogSoftmaxLast: {
        if (Arr* ga = grad_sink(n.in[0])) {
          const int64_t R = n.val.rows(), C = n.val.cols();
          for (int64_t r = 0; r < R; ++r) {
            T gsum = 0;
            for (int64_t c = 0; c < C; ++c) gsum += g.at(r, c);
            for (int64_t c = 0; c < C; ++c)
              ga->at(r, c) +=
                  (g.at(r, c) - std::exp(n.val.at(r, c)) * gsum) / n.f0;
          }
        }
        return;
      }
      case Op::LayerNormLast: {
        if (Arr* ga = grad_sink(n.in[0])) {
          const int64_t R = n.val.rows(), C = n.val.cols();
          for (int64_t r = 0; r < R; ++r) {
            const T rstd = n.aux[static_cast<size_t>(r)];
            T gmean = 0, gymean = 0;
            for (int64_t c = 0; c < C; ++c) {
              gmean += g.at(r, c);
              gymean += g.at(r, c) * n.val.at(r, c);
            }
            gmean /= T(C);
            gymean /= T(C);
            for (int64_t c = 0; c < C; ++c)
              ga->at(r, c) +=
                  rstd * (g.at(r, c) - gmean - n.val.at(r, c) * gymean);
          }
        }
        return;
      }
      case Op::Sum:
      case Op::Mean: {
        const Arr& A = val(n.in[0]);
        const T f = (n.op == Op::Mean) ? g.v[0] / T(A.numel()) : g.v[0];
        if (Arr* ga = grad_sink(n.in[0]))
          for (auto& x : ga->v) x += f;
        return;
      }
      case Op::SumAxis0:
      case Op::MeanAxis0: {
        const Arr& A = val(n.in[0]);
        const int64_t R = A.rows(), C = A.cols();
        const T f = (n.op == Op::MeanAxis0) ? T(1) / T(R) : T(1);
        if (Arr* ga = grad_sink(n.in[0]))
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c)
              ga->at(r, c) += g.v[static_cast<size_t>(c)] * f;
        return;
      }
      case Op::SumCols:
      case Op::MeanCols: {
        const Arr& A = val(n.in[0]);
        const int64_t R = A.rows(), C = A.cols();
        const T f = (n.op == Op::MeanCols) ? T(1) / T(C) : T(1);
        if (Arr* ga = grad_sink(n.in[0]))
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c)
              ga->at(r, c) += g.v[static_cast<size_t>(r)] * f;
        return;
      }
      case Op::ConcatRows: {
        int64_t r = 0;
        const int64_t C = n.val.cols();
        for (Id p : n.extra_in) {
          const int64_t pr = val(p).rows();
          if (Arr* gp = grad_sink(p)) {
            for (int64_t i = 0; i < pr * C; ++i)
              gp->v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(r * C + i)];
          }
          r += pr;
        }
        return;
      }
      case Op::ConcatCols: {
        const Arr& A = val(n.in[0]);
        const int64_t R = A.rows(), Ca = A.cols(), Cb = val(n.in[1]).cols();
        if (Arr* ga = grad_sink(n.in[0]))
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < Ca; ++c) ga->at(r, c) += g.at(r, c);
        if (Arr* gb = grad_sink(n.in[1]))
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < Cb; ++c) gb->at(r, c) += g.at(r, Ca + c);
        return;
      }
      case Op::SliceRows: {
        const int64_t C = n.val.cols();
        if (Arr* ga = grad_sink(n.in[0]))
          for (int64_t i = 0; i < n.val.numel(); ++i)
            ga->v[static_cast<size_t>(n.i0 * C + i)] += g.v[static_cast<size_t>(i)];
        return;
      }
      case Op::GatherRows: {
        const int64_t C = n.val.cols();
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < n.idx.size(); ++i)
            for (int64_t c = 0; c < C; ++c)
              ga->at(n.idx[i], c) += g.v[static_cast<size_t>(static_cast<int64_t>(i) * C + c)];
        return;
      }
      case Op::Reshape: {
        if (Arr* ga = grad_sink(n.in[0]))
          for (size_t i = 0; i < g.v.size(); ++i) ga->v[i] += g.v[i];
        return;
      }
      case Op::LogSumExpAll: {
        const Arr& A = val(n.in[0]);
        if (Arr* ga = grad_sink(n.in[0])) {
          const T y = n.val.v[0];
          for (size_t i = 0; i < A.v.size(); ++i)
            ga->v[i] += g.v[0] * std::exp(A.v[i] - y);
        }
        return;
      }
    }
  }

  void scatter_bcast(const Arr& g, Bcast bc, T sgn, Arr& out) {
    const int64_t R = g.rows(), C = g.cols();
    switch (bc) {
      case kSame:
        for (size_t i = 0; i < g.v.size(); ++i) out.v[i] += sgn * g.v[i];
        return;
      case kRowVec:
        for (int64_t r = 0; r < R; ++r)
          for (int64_t c = 0; c < C; ++c)
            out.v[static_cast<size_t>(c)] += sgn * g.at(r, c);
        return;
      case kColVec:
        for (int64_t r = 0; r < R; ++r)
          for (int64_t c = 0; c < C; ++c)
            out.v[static_cast<size_t>(r)] += sgn * g.at(r, c);
        return;
      case kScalar: {
        T s = 0;
        for (T x : g.v) s += x;
        out.v[0] += sgn * s;
        return;
      }
    }
  }
};

using Tape32 = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace prism::ad
