#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace relpretext {

struct Shape {
  int rows = 1;
  int cols = 1;
  int size() const { return rows * cols; }
  bool operator==(const Shape& o) const { return rows == o.rows && cols == o.cols; }
};

class Tape;

// Lightweight handle into a tape node.
class Var {
 public:
  Var() = default;
  bool defined() const { return tape_ != nullptr; }
  Shape shape() const;
  const std::vector<double>& value() const;
  const std::vector<double>& grad() const;
  double scalar() const { return value()[0]; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records forward ops eagerly; backward() replays them in exact reverse
// execution order, accumulating adjoints additively. Every forward result is
// checked finite.
class Tape {
 public:
  Var input(Shape shape, std::vector<double> values, bool requires_grad);
  Var constant(Shape shape, std::vector<double> values) {
    return input(shape, std::move(values), false);
  }
  Var zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size(), 0.0)); }
  Var scalar_const(double v) { return constant({1, 1}, {v}); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);          // elementwise
  Var add_row_bias(Var m, Var bias);  // m: r x c, bias: 1 x c
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var relu(Var a);
  Var abs(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var exp(Var a);
  Var power(Var a, double alpha);  // elementwise; inputs must be >= 0 for non-integer alpha
  Var mean_rows(Var a);            // r x c -> 1 x c
  Var sum_all(Var a);              // -> 1 x 1
  Var concat_cols(const std::vector<Var>& parts);
  Var stack_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, int begin, int end);
  Var row(Var a, int r);           // 1 x c view of one row
  Var l2_normalize(Var a, double eps = 1e-12);        // row-wise
  Var cosine_rows(Var a, Var b, double eps = 1e-12);  // r x c pairs -> r x 1
  Var mse(Var pred, Var target);
  Var softmax_cross_entropy(Var logits, const std::vector<int>& targets);  // mean over rows
  Var bce_with_logits(Var logits, Var targets);
  Var transpose(Var a);
  Var dot_rows(Var a, Var b);      // r x c pairs -> r x 1, plain inner product

  void backward(Var loss);
  size_t node_count() const { return nodes_.size(); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  friend class Var;
  enum class Op {
    Input, Matmul, Add, Sub, Mul, AddRowBias, Scale, AddScalar, Relu, Abs, Sigmoid,
    Log, Exp, Power, MeanRows, SumAll, ConcatCols, StackRows, SliceCols, Row,
    L2Normalize, CosineRows, Mse, SoftmaxCe, BceLogits, Transpose, DotRows,
  };
  struct Node {
    Op op;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    double aux = 0.0;
    std::vector<int> aux_ints;
  };

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  Var push(Op op, Shape shape, std::vector<double> value, std::vector<int> inputs,
           double aux = 0.0, std::vector<int> aux_ints = {});
  void check_finite(const std::vector<double>& v, const char* what) const;
  void backward_node(int id);

  std::vector<Node> nodes_;
};

// Named parameter arrays with momentum buffers; flat little-endian float64
// binary checkpoints.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> momentum;
  };

  int add(const std::string& name, Shape shape, std::vector<double> init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  Entry& at(int idx) { return entries_[idx]; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  size_t size() const { return entries_.size(); }

  uint64_t checksum() const;
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  bool pass = false;
};

// f(params, grads): returns the scalar loss; when grads != nullptr it must
// also run backward and accumulate d loss / d param into grads (same layout
// as params). Central differences with step h, relative tolerance tol.
using GradFn = std::function<double(const ParamSet&, ParamSet* grads)>;
GradCheckReport grad_check(const GradFn& f, ParamSet params, double h, double tol);

}  // namespace relpretext
