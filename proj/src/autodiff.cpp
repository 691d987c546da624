#include "mu2x/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mu2x/errors.hpp"

namespace mu2x::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw InputNotOnTape("variable is not attached to a tape");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw ShapeMismatch("operands live on different tapes");
  return t;
}

}  // namespace

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check(Var v) const {
  if (!owns(v)) throw InputNotOnTape("variable does not belong to this tape");
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (Var v : inputs) {
    check(v);
    needs = needs || nodes_[static_cast<std::size_t>(v.id_)].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (Var v : inputs) {
    check(v);
    needs = needs || nodes_[static_cast<std::size_t>(v.id_)].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(Var v, const Matrix& contribution) {
  Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = contribution;
  } else {
    n.grad += contribution;
  }
}

void Tape::backward(Var loss) {
  check(loss);
  if (used_) throw TapeReused("backward already ran on this tape");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw NotScalarLoss("loss has shape " + shape(lv));
  used_ = true;
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  if (!nodes_[static_cast<std::size_t>(loss.id_)].requires_grad) return;
  nodes_[static_cast<std::size_t>(loss.id_)].grad(0, 0) = 1.0;
  for (int i = loss.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && n.requires_grad) n.backward(*this, n.grad);
  }
}

const Matrix& Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.requires_grad) throw InputNotOnTape("constant has no gradient");
  if (!used_) throw NotScalarLoss("backward has not run");
  return n.grad;
}

Matrix grad_wrt_input(Var output, Var input) {
  Tape& t = tape_of(output);
  if (!t.owns(input) || !t.requires_grad(input)) {
    throw InputNotOnTape("input does not participate in this computation");
  }
  try {
    t.backward(output);
  } catch (const TapeReused&) {
    // Already differentiated; gradients are in place.
  }
  return t.grad(input);
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul " + shape(a.value()) + " * " + shape(b.value()));
  }
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
      tp.accumulate(a, g);
      tp.accumulate(b, g);
    });
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix out = a.value().rowwise() + b.value().row(0);
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
      tp.accumulate(a, g);
      if (tp.requires_grad(b)) tp.accumulate(b, g.colwise().sum());
    });
  }
  throw ShapeMismatch("add " + shape(a.value()) + " + " + shape(b.value()));
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("mul " + shape(a.value()) + " .* " + shape(b.value()));
  }
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scalar_mul(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (Var p : parts) {
    tape_of(parts.front(), p);
    if (p.cols() != cols) throw ShapeMismatch("concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  Tape& t = tape_of(parts.front());
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (Var p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != rows) throw ShapeMismatch("concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return t.record(std::move(out), {a}, [a, slope](Tape& tp, const Matrix& g) {
    Matrix d = a.value().unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    tp.accumulate(a, g.cwiseProduct(d));
  });
}

Var elu(Var a, double alpha) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); });
  return t.record(std::move(out), {a}, [a, alpha](Tape& tp, const Matrix& g) {
    Matrix d = a.value().unaryExpr([alpha](double x) { return x > 0 ? 1.0 : alpha * std::exp(x); });
    tp.accumulate(a, g.cwiseProduct(d));
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().exp().matrix();
  Matrix saved = out;
  return t.record(std::move(out), {a}, [a, saved](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(saved));
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().log().matrix();
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

namespace {

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

Var row_softmax(Var a) {
  Tape& t = tape_of(a);
  if (a.cols() == 0) throw ShapeMismatch("row_softmax of zero columns");
  Matrix p = softmax_rows(a.value());
  Matrix saved = p;
  return t.record(std::move(p), {a}, [a, saved](Tape& tp, const Matrix& g) {
    // dx = p * (g - sum(g * p))
    Eigen::VectorXd dot = g.cwiseProduct(saved).rowwise().sum();
    Matrix dx = saved.cwiseProduct(g - dot.replicate(1, g.cols()));
    tp.accumulate(a, dx);
  });
}

Var row_log_softmax(Var a) {
  Tape& t = tape_of(a);
  if (a.cols() == 0) throw ShapeMismatch("row_log_softmax of zero columns");
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  Matrix p = out.array().exp().matrix();
  return t.record(std::move(out), {a}, [a, p](Tape& tp, const Matrix& g) {
    // dx = g - p * sum(g)
    Eigen::VectorXd s = g.rowwise().sum();
    tp.accumulate(a, g - p.cwiseProduct(s.replicate(1, g.cols())));
  });
}

Var masked_row_softmax(Var a, const BoolMatrix& mask) {
  Tape& t = tape_of(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeMismatch("mask " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                        " vs " + shape(a.value()));
  }
  const Matrix& x = a.value();
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) m = std::max(m, x(r, c));
    }
    if (!std::isfinite(m)) throw EmptyMask("row " + std::to_string(r) + " has no unmasked entries");
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) {
        p(r, c) = std::exp(x(r, c) - m);
        z += p(r, c);
      }
    }
    p.row(r) /= z;
  }
  Matrix saved = p;
  return t.record(std::move(p), {a}, [a, saved](Tape& tp, const Matrix& g) {
    // Masked entries have p = 0, so they receive zero gradient.
    Eigen::VectorXd dot = g.cwiseProduct(saved).rowwise().sum();
    tp.accumulate(a, saved.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var reduce_sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto rows = a.rows();
  const auto cols = a.cols();
  return t.record(std::move(out), {a}, [a, rows, cols](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> rows) {
  Tape& t = tape_of(a);
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw ShapeMismatch("gather_rows index " + std::to_string(rows[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {a}, [a, idx](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    tp.accumulate(a, d);
  });
}

Var pick(Var a, std::span<const std::uint32_t> cols) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(cols.size()) != a.rows()) throw ShapeMismatch("pick needs one column per row");
  Matrix out(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (cols[static_cast<std::size_t>(r)] >= a.cols()) throw ShapeMismatch("pick column out of range");
    out(r, 0) = a.value()(r, cols[static_cast<std::size_t>(r)]);
  }
  std::vector<std::uint32_t> idx(cols.begin(), cols.end());
  return t.record(std::move(out), {a}, [a, idx](Tape& tp, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) d(r, idx[static_cast<std::size_t>(r)]) = g(r, 0);
    tp.accumulate(a, d);
  });
}

Var segment_softmax(Var scores, std::span<const std::uint32_t> dst, std::size_t num_segments) {
  Tape& t = tape_of(scores);
  if (scores.cols() != 1 || static_cast<std::size_t>(scores.rows()) != dst.size()) {
    throw ShapeMismatch("segment_softmax expects an E x 1 score column");
  }
  const Matrix& s = scores.value();
  std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < dst.size(); ++e) {
    if (dst[e] >= num_segments) throw ShapeMismatch("segment id out of range");
    seg_max[dst[e]] = std::max(seg_max[dst[e]], s(static_cast<Eigen::Index>(e), 0));
  }
  std::vector<double> seg_sum(num_segments, 0.0);
  Matrix p(s.rows(), 1);
  for (std::size_t e = 0; e < dst.size(); ++e) {
    const auto ei = static_cast<Eigen::Index>(e);
    p(ei, 0) = std::exp(s(ei, 0) - seg_max[dst[e]]);
    seg_sum[dst[e]] += p(ei, 0);
  }
  for (std::size_t e = 0; e < dst.size(); ++e) p(static_cast<Eigen::Index>(e), 0) /= seg_sum[dst[e]];
  std::vector<std::uint32_t> seg(dst.begin(), dst.end());
  Matrix saved = p;
  return t.record(std::move(p), {scores}, [scores, seg, saved, num_segments](Tape& tp, const Matrix& g) {
    std::vector<double> dot(num_segments, 0.0);
    for (std::size_t e = 0; e < seg.size(); ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      dot[seg[e]] += g(ei, 0) * saved(ei, 0);
    }
    Matrix d(saved.rows(), 1);
    for (std::size_t e = 0; e < seg.size(); ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      d(ei, 0) = saved(ei, 0) * (g(ei, 0) - dot[seg[e]]);
    }
    tp.accumulate(scores, d);
  });
}

Var edge_aggregate(Var weights, Var values, std::span<const std::uint32_t> src,
                   std::span<const std::uint32_t> dst, std::size_t num_dst) {
  Tape& t = tape_of(weights, values);
  if (weights.cols() != 1 || static_cast<std::size_t>(weights.rows()) != src.size() || src.size() != dst.size()) {
    throw ShapeMismatch("edge_aggregate expects E x 1 weights and E edges");
  }
  const Matrix& w = weights.value();
  const Matrix& v = values.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(num_dst), v.cols());
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= v.rows() || dst[e] >= num_dst) throw ShapeMismatch("edge endpoint out of range");
    out.row(dst[e]) += w(static_cast<Eigen::Index>(e), 0) * v.row(src[e]);
  }
  std::vector<std::uint32_t> s(src.begin(), src.end());
  std::vector<std::uint32_t> d(dst.begin(), dst.end());
  return t.record(std::move(out), {weights, values}, [weights, values, s, d](Tape& tp, const Matrix& g) {
    const Matrix& wv = weights.value();
    const Matrix& vv = values.value();
    if (tp.requires_grad(weights)) {
      Matrix dw(wv.rows(), 1);
      for (std::size_t e = 0; e < s.size(); ++e) dw(static_cast<Eigen::Index>(e), 0) = g.row(d[e]).dot(vv.row(s[e]));
      tp.accumulate(weights, dw);
    }
    if (tp.requires_grad(values)) {
      Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
      for (std::size_t e = 0; e < s.size(); ++e) dv.row(s[e]) += wv(static_cast<Eigen::Index>(e), 0) * g.row(d[e]);
      tp.accumulate(values, dv);
    }
  });
}

}  // namespace mu2x::ad
