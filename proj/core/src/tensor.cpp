#include "relpretext/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "relpretext/error.hpp"

namespace relpretext {

Shape Var::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Var::value() const { return tape_->node(id_).value; }
const std::vector<double>& Var::grad() const { return tape_->node(id_).grad; }

void Tape::check_finite(const std::vector<double>& v, const char* what) const {
  for (double x : v)
    if (!std::isfinite(x)) fail("NonFinite", std::string("non-finite value produced by ") + what);
}

Var Tape::push(Op op, Shape shape, std::vector<double> value, std::vector<int> inputs,
               double aux, std::vector<int> aux_ints) {
  check_finite(value, "op");
  Node n;
  n.op = op;
  n.shape = shape;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.aux = aux;
  n.aux_ints = std::move(aux_ints);
  n.requires_grad = false;
  for (int i : n.inputs)
    if (nodes_[i].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::input(Shape shape, std::vector<double> values, bool requires_grad) {
  check((int)values.size() == shape.size(), "ShapeMismatch", "input size does not match shape");
  check_finite(values, "input");
  Node n;
  n.op = Op::Input;
  n.shape = shape;
  n.value = std::move(values);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a.id_);
  const Node& nb = node(b.id_);
  check(na.shape.cols == nb.shape.rows, "ShapeMismatch", "matmul inner dims differ");
  const int r = na.shape.rows, k = na.shape.cols, c = nb.shape.cols;
  std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int p = 0; p < k; ++p) {
      double aik = na.value[i * k + p];
      if (aik == 0.0) continue;
      const double* brow = &nb.value[p * c];
      double* orow = &out[i * c];
      for (int j = 0; j < c; ++j) orow[j] += aik * brow[j];
    }
  return push(Op::Matmul, {r, c}, std::move(out), {a.id_, b.id_});
}

Var Tape::add(Var a, Var b) {
  const Node& na = node(a.id_);
  const Node& nb = node(b.id_);
  check(na.shape == nb.shape, "ShapeMismatch", "add shapes differ");
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + nb.value[i];
  return push(Op::Add, na.shape, std::move(out), {a.id_, b.id_});
}

Var Tape::sub(Var a, Var b) {
  const Node& na = node(a.id_);
  const Node& nb = node(b.id_);
  check(na.shape == nb.shape, "ShapeMismatch", "sub shapes differ");
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] - nb.value[i];
  return push(Op::Sub, na.shape, std::move(out), {a.id_, b.id_});
}

Var Tape::mul(Var a, Var b) {
  const Node& na = node(a.id_);
  const Node& nb = node(b.id_);
  check(na.shape == nb.shape, "ShapeMismatch", "mul shapes differ");
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * nb.value[i];
  return push(Op::Mul, na.shape, std::move(out), {a.id_, b.id_});
}

Var Tape::add_row_bias(Var m, Var bias) {
  const Node& nm = node(m.id_);
  const Node& nb = node(bias.id_);
  check(nb.shape.rows == 1 && nb.shape.cols == nm.shape.cols, "ShapeMismatch",
        "bias must be 1 x cols");
  std::vector<double> out(nm.value.size());
  const int c = nm.shape.cols;
  for (int i = 0; i < nm.shape.rows; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = nm.value[i * c + j] + nb.value[j];
  return push(Op::AddRowBias, nm.shape, std::move(out), {m.id_, bias.id_});
}

Var Tape::scale(Var a, double s) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * s;
  return push(Op::Scale, na.shape, std::move(out), {a.id_}, s);
}

Var Tape::add_scalar(Var a, double s) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + s;
  return push(Op::AddScalar, na.shape, std::move(out), {a.id_}, s);
}

Var Tape::relu(Var a) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] > 0 ? na.value[i] : 0.0;
  return push(Op::Relu, na.shape, std::move(out), {a.id_});
}

Var Tape::abs(Var a) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(na.value[i]);
  return push(Op::Abs, na.shape, std::move(out), {a.id_});
}

Var Tape::sigmoid(Var a) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-na.value[i]));
  return push(Op::Sigmoid, na.shape, std::move(out), {a.id_});
}

Var Tape::log(Var a) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(na.value[i]);
  return push(Op::Log, na.shape, std::move(out), {a.id_});
}

Var Tape::exp(Var a) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(na.value[i]);
  return push(Op::Exp, na.shape, std::move(out), {a.id_});
}

Var Tape::power(Var a, double alpha) {
  const Node& na = node(a.id_);
  std::vector<double> out(na.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::pow(na.value[i], alpha);
  return push(Op::Power, na.shape, std::move(out), {a.id_}, alpha);
}

Var Tape::mean_rows(Var a) {
  const Node& na = node(a.id_);
  const int r = na.shape.rows, c = na.shape.cols;
  std::vector<double> out(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += na.value[i * c + j];
  for (int j = 0; j < c; ++j) out[j] /= r;
  return push(Op::MeanRows, {1, c}, std::move(out), {a.id_});
}

Var Tape::sum_all(Var a) {
  const Node& na = node(a.id_);
  double s = 0.0;
  for (double v : na.value) s += v;
  return push(Op::SumAll, {1, 1}, {s}, {a.id_});
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "ShapeMismatch", "concat of nothing");
  const int r = node(parts[0].id_).shape.rows;
  int total = 0;
  std::vector<int> ids, widths;
  for (const Var& p : parts) {
    const Node& np = node(p.id_);
    check(np.shape.rows == r, "ShapeMismatch", "concat_cols row mismatch");
    total += np.shape.cols;
    ids.push_back(p.id_);
    widths.push_back(np.shape.cols);
  }
  std::vector<double> out(static_cast<size_t>(r) * total);
  int off = 0;
  for (size_t p = 0; p < ids.size(); ++p) {
    const Node& np = node(ids[p]);
    for (int i = 0; i < r; ++i)
      std::memcpy(&out[i * total + off], &np.value[i * widths[p]], widths[p] * sizeof(double));
    off += widths[p];
  }
  return push(Op::ConcatCols, {r, total}, std::move(out), std::move(ids), 0.0, std::move(widths));
}

Var Tape::stack_rows(const std::vector<Var>& parts) {
  check(!parts.empty(), "ShapeMismatch", "stack of nothing");
  const int c = node(parts[0].id_).shape.cols;
  int total = 0;
  std::vector<int> ids, heights;
  for (const Var& p : parts) {
    const Node& np = node(p.id_);
    check(np.shape.cols == c, "ShapeMismatch", "stack_rows col mismatch");
    total += np.shape.rows;
    ids.push_back(p.id_);
    heights.push_back(np.shape.rows);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total) * c);
  for (int id : ids) out.insert(out.end(), node(id).value.begin(), node(id).value.end());
  return push(Op::StackRows, {total, c}, std::move(out), std::move(ids), 0.0, std::move(heights));
}

Var Tape::slice_cols(Var a, int begin, int end) {
  const Node& na = node(a.id_);
  check(begin >= 0 && end <= na.shape.cols && begin < end, "ShapeMismatch", "bad column slice");
  const int r = na.shape.rows, c = na.shape.cols, w = end - begin;
  std::vector<double> out(static_cast<size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    std::memcpy(&out[i * w], &na.value[i * c + begin], w * sizeof(double));
  return push(Op::SliceCols, {r, w}, std::move(out), {a.id_}, 0.0, {begin, end});
}

Var Tape::row(Var a, int r) {
  const Node& na = node(a.id_);
  check(r >= 0 && r < na.shape.rows, "ShapeMismatch", "row index out of range");
  const int c = na.shape.cols;
  std::vector<double> out(na.value.begin() + static_cast<size_t>(r) * c,
                          na.value.begin() + static_cast<size_t>(r + 1) * c);
  return push(Op::Row, {1, c}, std::move(out), {a.id_}, 0.0, {r});
}

Var Tape::l2_normalize(Var a, double eps) {
  const Node& na = node(a.id_);
  const int r = na.shape.rows, c = na.shape.cols;
  std::vector<double> out(na.value.size());
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += na.value[i * c + j] * na.value[i * c + j];
    double denom = std::sqrt(s) + eps;
    for (int j = 0; j < c; ++j) out[i * c + j] = na.value[i * c + j] / denom;
  }
  return push(Op::L2Normalize, na.shape, std::move(out), {a.id_}, eps);
}

Var Tape::cosine_rows(Var a, Var b, double eps) {
  const Node& na = node(a.id_);
  const Node& nb = node(b.id_);
  check(na.shape == nb.shape, "ShapeMismatch", "cosine_rows shapes differ");
  const int r = na.shape.rows, c = na.shape.cols;
  std::vector<double> out(r);
  for (int i = 0; i < r; ++i) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (int j = 0; j < c; ++j) {
      dot += na.value[i * c + j] * nb.value[i * c + j];
      sa += na.value[i * c + j] * na.value[i * c + j];
      sb += nb.value[i * c + j] * nb.value[i * c + j];
    }
    // One sqrt of the product keeps identical rows at cosine exactly 1
    // (sqrt(fl(x*x)) == x in IEEE); eps guards all-zero rows.
    double denom = std::max(std::sqrt(sa * sb), eps * eps);
    out[i] = dot / denom;
  }
  return push(Op::CosineRows, {r, 1}, std::move(out), {a.id_, b.id_}, eps);
}

Var Tape::mse(Var pred, Var target) {
  const Node& np = node(pred.id_);
  const Node& nt = node(target.id_);
  check(np.shape == nt.shape, "ShapeMismatch", "mse shapes differ");
  double s = 0.0;
  for (size_t i = 0; i < np.value.size(); ++i) {
    double d = np.value[i] - nt.value[i];
    s += d * d;
  }
  s /= static_cast<double>(np.value.size());
  return push(Op::Mse, {1, 1}, {s}, {pred.id_, target.id_});
}

Var Tape::softmax_cross_entropy(Var logits, const std::vector<int>& targets) {
  const Node& nl = node(logits.id_);
  const int r = nl.shape.rows, c = nl.shape.cols;
  check((int)targets.size() == r, "ShapeMismatch", "one target per row required");
  double total = 0.0;
  for (int i = 0; i < r; ++i) {
    check(targets[i] >= 0 && targets[i] < c, "ShapeMismatch", "target class out of range");
    double m = nl.value[i * c];
    for (int j = 1; j < c; ++j) m = std::max(m, nl.value[i * c + j]);
    double lse = 0.0;
    for (int j = 0; j < c; ++j) lse += std::exp(nl.value[i * c + j] - m);
    lse = m + std::log(lse);
    total += lse - nl.value[i * c + targets[i]];
  }
  total /= r;
  std::vector<int> aux(targets.begin(), targets.end());
  return push(Op::SoftmaxCe, {1, 1}, {total}, {logits.id_}, 0.0, std::move(aux));
}

Var Tape::bce_with_logits(Var logits, Var targets) {
  const Node& nl = node(logits.id_);
  const Node& nt = node(targets.id_);
  check(nl.shape == nt.shape, "ShapeMismatch", "bce shapes differ");
  double total = 0.0;
  for (size_t i = 0; i < nl.value.size(); ++i) {
    double z = nl.value[i], y = nt.value[i];
    // max(z,0) - z*y + log(1 + exp(-|z|)), numerically stable
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  total /= static_cast<double>(nl.value.size());
  return push(Op::BceLogits, {1, 1}, {total}, {logits.id_, targets.id_});
}

Var Tape::transpose(Var a) {
  const Node& na = node(a.id_);
  const int r = na.shape.rows, c = na.shape.cols;
  std::vector<double> out(na.value.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j * r + i] = na.value[i * c + j];
  return push(Op::Transpose, {c, r}, std::move(out), {a.id_});
}

Var Tape::dot_rows(Var a, Var b) {
  const Node& na = node(a.id_);
  const Node& nb = node(b.id_);
  check(na.shape == nb.shape, "ShapeMismatch", "dot_rows shapes differ");
  const int r = na.shape.rows, c = na.shape.cols;
  std::vector<double> out(r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += na.value[i * c + j] * nb.value[i * c + j];
  return push(Op::DotRows, {r, 1}, std::move(out), {a.id_, b.id_});
}

void Tape::backward(Var loss) {
  check(loss.tape_ == this, "ShapeMismatch", "loss from another tape");
  check(node(loss.id_).shape.size() == 1, "ShapeMismatch", "backward needs a scalar loss");
  for (auto& n : nodes_) {
    n.grad.assign(n.value.size(), 0.0);
  }
  nodes_[loss.id_].grad[0] = 1.0;
  for (int id = loss.id_; id >= 0; --id) backward_node(id);
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  if (!n.requires_grad && n.op != Op::Input) return;
  bool any = false;
  for (double g : n.grad)
    if (g != 0.0) { any = true; break; }
  if (!any) return;

  auto g_in = [&](int k) -> std::vector<double>& { return nodes_[n.inputs[k]].grad; };
  auto v_in = [&](int k) -> const std::vector<double>& { return nodes_[n.inputs[k]].value; };
  auto shape_in = [&](int k) { return nodes_[n.inputs[k]].shape; };

  switch (n.op) {
    case Op::Input:
      break;
    case Op::Matmul: {
      const Shape sa = shape_in(0), sb = shape_in(1);
      const int r = sa.rows, k = sa.cols, c = sb.cols;
      auto& ga = g_in(0);
      auto& gb = g_in(1);
      const auto& av = v_in(0);
      const auto& bv = v_in(1);
      for (int i = 0; i < r; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = &n.grad[i * c];
          const double* brow = &bv[p * c];
          for (int j = 0; j < c; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < c; ++j) {
          double acc = 0.0;
          for (int i = 0; i < r; ++i) acc += av[i * k + p] * n.grad[i * c + j];
          gb[p * c + j] += acc;
        }
      break;
    }
    case Op::Add:
      for (size_t i = 0; i < n.grad.size(); ++i) {
        g_in(0)[i] += n.grad[i];
        g_in(1)[i] += n.grad[i];
      }
      break;
    case Op::Sub:
      for (size_t i = 0; i < n.grad.size(); ++i) {
        g_in(0)[i] += n.grad[i];
        g_in(1)[i] -= n.grad[i];
      }
      break;
    case Op::Mul:
      for (size_t i = 0; i < n.grad.size(); ++i) {
        g_in(0)[i] += n.grad[i] * v_in(1)[i];
        g_in(1)[i] += n.grad[i] * v_in(0)[i];
      }
      break;
    case Op::AddRowBias: {
      const int c = n.shape.cols;
      for (size_t i = 0; i < n.grad.size(); ++i) g_in(0)[i] += n.grad[i];
      for (int i = 0; i < n.shape.rows; ++i)
        for (int j = 0; j < c; ++j) g_in(1)[j] += n.grad[i * c + j];
      break;
    }
    case Op::Scale:
      for (size_t i = 0; i < n.grad.size(); ++i) g_in(0)[i] += n.grad[i] * n.aux;
      break;
    case Op::AddScalar:
      for (size_t i = 0; i < n.grad.size(); ++i) g_in(0)[i] += n.grad[i];
      break;
    case Op::Relu:
      for (size_t i = 0; i < n.grad.size(); ++i)
        if (v_in(0)[i] > 0) g_in(0)[i] += n.grad[i];
      break;
    case Op::Abs:
      for (size_t i = 0; i < n.grad.size(); ++i) {
        double x = v_in(0)[i];
        if (x > 0) g_in(0)[i] += n.grad[i];
        else if (x < 0) g_in(0)[i] -= n.grad[i];
      }
      break;
    case Op::Sigmoid:
      for (size_t i = 0; i < n.grad.size(); ++i)
        g_in(0)[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    case Op::Log:
      for (size_t i = 0; i < n.grad.size(); ++i) g_in(0)[i] += n.grad[i] / v_in(0)[i];
      break;
    case Op::Exp:
      for (size_t i = 0; i < n.grad.size(); ++i) g_in(0)[i] += n.grad[i] * n.value[i];
      break;
    case Op::Power:
      for (size_t i = 0; i < n.grad.size(); ++i) {
        double x = v_in(0)[i];
        double d;
        if (n.aux == 1.0) d = 1.0;
        else if (x == 0.0) d = 0.0;  // subgradient at the kink, used with alpha >= 1
        else d = n.aux * std::pow(x, n.aux - 1.0);
        g_in(0)[i] += n.grad[i] * d;
      }
      break;
    case Op::MeanRows: {
      const Shape s = shape_in(0);
      for (int i = 0; i < s.rows; ++i)
        for (int j = 0; j < s.cols; ++j) g_in(0)[i * s.cols + j] += n.grad[j] / s.rows;
      break;
    }
    case Op::SumAll:
      for (size_t i = 0; i < g_in(0).size(); ++i) g_in(0)[i] += n.grad[0];
      break;
    case Op::ConcatCols: {
      const int r = n.shape.rows, total = n.shape.cols;
      int off = 0;
      for (size_t p = 0; p < n.inputs.size(); ++p) {
        const int w = n.aux_ints[p];
        auto& g = nodes_[n.inputs[p]].grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < w; ++j) g[i * w + j] += n.grad[i * total + off + j];
        off += w;
      }
      break;
    }
    case Op::StackRows: {
      const int c = n.shape.cols;
      int off = 0;
      for (size_t p = 0; p < n.inputs.size(); ++p) {
        const int h = n.aux_ints[p];
        auto& g = nodes_[n.inputs[p]].grad;
        for (int i = 0; i < h * c; ++i) g[i] += n.grad[off * c + i];
        off += h;
      }
      break;
    }
    case Op::SliceCols: {
      const Shape s = shape_in(0);
      const int begin = n.aux_ints[0];
      const int w = n.shape.cols;
      for (int i = 0; i < n.shape.rows; ++i)
        for (int j = 0; j < w; ++j) g_in(0)[i * s.cols + begin + j] += n.grad[i * w + j];
      break;
    }
    case Op::Row: {
      const Shape s = shape_in(0);
      const int r = n.aux_ints[0];
      for (int j = 0; j < s.cols; ++j) g_in(0)[r * s.cols + j] += n.grad[j];
      break;
    }
    case Op::L2Normalize: {
      const Shape s = shape_in(0);
      const double eps = n.aux;
      for (int i = 0; i < s.rows; ++i) {
        const double* x = &v_in(0)[i * s.cols];
        const double* g = &n.grad[i * s.cols];
        double nx = 0.0;
        for (int j = 0; j < s.cols; ++j) nx += x[j] * x[j];
        nx = std::sqrt(nx);
        double denom = nx + eps;
        double gdotx = 0.0;
        for (int j = 0; j < s.cols; ++j) gdotx += g[j] * x[j];
        for (int j = 0; j < s.cols; ++j) {
          double d = g[j] / denom;
          if (nx > 0) d -= gdotx * x[j] / (denom * denom * nx);
          g_in(0)[i * s.cols + j] += d;
        }
      }
      break;
    }
    case Op::CosineRows: {
      const Shape s = shape_in(0);
      const double eps = n.aux;
      for (int i = 0; i < s.rows; ++i) {
        const double* a = &v_in(0)[i * s.cols];
        const double* b = &v_in(1)[i * s.cols];
        double dot = 0.0, sa = 0.0, sb = 0.0;
        for (int j = 0; j < s.cols; ++j) {
          dot += a[j] * b[j];
          sa += a[j] * a[j];
          sb += b[j] * b[j];
        }
        double denom = std::max(std::sqrt(sa * sb), eps * eps);
        double inv = 1.0 / denom;
        double cosv = dot * inv;
        double g = n.grad[i];
        for (int j = 0; j < s.cols; ++j) {
          double ga = b[j] * inv;
          if (sa > 0) ga -= cosv * a[j] / sa;
          double gb = a[j] * inv;
          if (sb > 0) gb -= cosv * b[j] / sb;
          g_in(0)[i * s.cols + j] += g * ga;
          g_in(1)[i * s.cols + j] += g * gb;
        }
      }
      break;
    }
    case Op::Mse: {
      const double g = n.grad[0];
      const double inv_n = 1.0 / static_cast<double>(v_in(0).size());
      for (size_t i = 0; i < v_in(0).size(); ++i) {
        double d = 2.0 * (v_in(0)[i] - v_in(1)[i]) * inv_n * g;
        g_in(0)[i] += d;
        g_in(1)[i] -= d;
      }
      break;
    }
    case Op::SoftmaxCe: {
      const Shape s = shape_in(0);
      const double g = n.grad[0] / s.rows;
      for (int i = 0; i < s.rows; ++i) {
        const double* l = &v_in(0)[i * s.cols];
        double m = l[0];
        for (int j = 1; j < s.cols; ++j) m = std::max(m, l[j]);
        double z = 0.0;
        for (int j = 0; j < s.cols; ++j) z += std::exp(l[j] - m);
        for (int j = 0; j < s.cols; ++j) {
          double p = std::exp(l[j] - m) / z;
          g_in(0)[i * s.cols + j] += g * (p - (j == n.aux_ints[i] ? 1.0 : 0.0));
        }
      }
      break;
    }
    case Op::BceLogits: {
      const double g = n.grad[0] / static_cast<double>(v_in(0).size());
      for (size_t i = 0; i < v_in(0).size(); ++i) {
        double sig = 1.0 / (1.0 + std::exp(-v_in(0)[i]));
        g_in(0)[i] += g * (sig - v_in(1)[i]);
        g_in(1)[i] += g * (-v_in(0)[i]);
      }
      break;
    }
    case Op::Transpose: {
      const Shape s = shape_in(0);
      for (int i = 0; i < s.rows; ++i)
        for (int j = 0; j < s.cols; ++j) g_in(0)[i * s.cols + j] += n.grad[j * s.rows + i];
      break;
    }
    case Op::DotRows: {
      const Shape s = shape_in(0);
      for (int i = 0; i < s.rows; ++i) {
        double g = n.grad[i];
        for (int j = 0; j < s.cols; ++j) {
          g_in(0)[i * s.cols + j] += g * v_in(1)[i * s.cols + j];
          g_in(1)[i * s.cols + j] += g * v_in(0)[i * s.cols + j];
        }
      }
      break;
    }
  }
}

int ParamSet::add(const std::string& name, Shape shape, std::vector<double> init) {
  check((int)init.size() == shape.size(), "ShapeMismatch",
        "param " + name + " init size does not match shape");
  check(!index_.count(name), "ShapeMismatch", "duplicate param name " + name);
  Entry e;
  e.name = name;
  e.shape = shape;
  e.value = std::move(init);
  e.momentum.assign(shape.size(), 0.0);
  entries_.push_back(std::move(e));
  index_[name] = static_cast<int>(entries_.size()) - 1;
  return index_[name];
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail("UnknownHead", "no parameter named " + name);
  return entries_[it->second];
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("UnknownHead", "no parameter named " + name);
  return entries_[it->second];
}

uint64_t ParamSet::checksum() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, size_t nbytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < nbytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : entries_) {
    mix(e.name.data(), e.name.size());
    mix(e.value.data(), e.value.size() * sizeof(double));
  }
  return h;
}

namespace {
constexpr char kCkptMagic[8] = {'R', 'P', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
uint32_t read_u32(std::FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) fail("FileRead", "truncated checkpoint");
  return v;
}
}  // namespace

void ParamSet::save(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail("FileWrite", "cannot open checkpoint for writing: " + path);
  std::fwrite(kCkptMagic, 1, 8, f);
  write_u32(f, 1);  // version
  write_u32(f, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    write_u32(f, static_cast<uint32_t>(e.name.size()));
    std::fwrite(e.name.data(), 1, e.name.size(), f);
    write_u32(f, static_cast<uint32_t>(e.shape.rows));
    write_u32(f, static_cast<uint32_t>(e.shape.cols));
    std::fwrite(e.value.data(), sizeof(double), e.value.size(), f);
  }
  std::fclose(f);
}

ParamSet ParamSet::load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail("MissingArtifact", "cannot open checkpoint: " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kCkptMagic, 8) != 0) {
    std::fclose(f);
    fail("FileRead", "bad checkpoint magic in " + path);
  }
  uint32_t version = read_u32(f);
  if (version != 1) {
    std::fclose(f);
    fail("FileRead", "unsupported checkpoint version");
  }
  uint32_t count = read_u32(f);
  ParamSet ps;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    if (std::fread(name.data(), 1, name_len, f) != name_len) fail("FileRead", "truncated name");
    Shape shape{static_cast<int>(read_u32(f)), static_cast<int>(read_u32(f))};
    std::vector<double> values(shape.size());
    if (std::fread(values.data(), sizeof(double), values.size(), f) != values.size())
      fail("FileRead", "truncated values for " + name);
    ps.add(name, shape, std::move(values));
  }
  std::fclose(f);
  return ps;
}

GradCheckReport grad_check(const GradFn& f, ParamSet params, double h, double tol) {
  ParamSet grads = params;
  for (auto& e : grads.entries()) std::fill(e.value.begin(), e.value.end(), 0.0);
  f(params, &grads);

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& entry = params.at(static_cast<int>(pi));
    for (size_t i = 0; i < entry.value.size(); ++i) {
      const double saved = entry.value[i];
      entry.value[i] = saved + h;
      double up = f(params, nullptr);
      entry.value[i] = saved - h;
      double down = f(params, nullptr);
      entry.value[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = grads.at(static_cast<int>(pi)).value[i];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      double rel = std::abs(numeric - analytic) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = entry.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace relpretext
