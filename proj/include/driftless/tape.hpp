#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "driftless/matrix.hpp"

namespace driftless {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode automatic differentiation over matrix-valued operation
/// records.
///
/// Nodes are appended in evaluation order, so the node index is a valid
/// topological order: backward walks indices downward and accumulates each
/// gradient contribution in that fixed order, which keeps reruns bit-identical.
/// Because every node records its operation and operands, replay() can
/// re-evaluate the whole graph after a leaf value changes; grad_check uses this
/// to obtain central differences from the same graph.
class Tape {
 public:
  enum class Op {
    kLeaf,
    kMatMul,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRow,
    kTranspose,
    kSoftmaxRows,
    kLayerNorm,
    kGelu,
    kGatherRows,
    kSliceCols,
    kConcatCols,
    kBlockAttention,
    kMeanSquaredError,
    kSum,
    kMean,
  };

  /// Trainable leaf; its gradient is kept after backward.
  Var parameter(std::string name, Matrix value);
  /// Leaf without gradient.
  Var constant(Matrix value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  /// x + row, with `row` (1 x cols) added to every row of x.
  Var add_row(Var x, Var row);
  Var transpose(Var a);
  Var softmax_rows(Var a);
  /// gain and bias are 1 x cols.
  Var layer_norm(Var x, Var gain, Var bias, double eps);
  /// tanh-approximated GELU.
  Var gelu(Var a);
  Var gather_rows(Var table, std::vector<std::size_t> indices);
  Var slice_cols(Var x, std::size_t start, std::size_t width);
  Var concat_cols(const std::vector<Var>& parts);
  /// Multi-head attention in which query row f only sees key/value rows
  /// [f*block, (f+1)*block). q is F x H, k and v are (F*block) x H.
  Var block_attention(Var q, Var k, Var v, std::size_t heads, std::size_t block, double scale);
  /// mean((a - b)^2) as a 1 x 1 node.
  Var mean_squared_error(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);

  [[nodiscard]] const Matrix& value(Var v) const;
  /// Gradient after backward(); all zeros for nodes that do not require grad.
  [[nodiscard]] const Matrix& grad(Var v) const;
  [[nodiscard]] double scalar(Var v) const;

  /// Overwrite a leaf value. Call replay() afterwards to refresh dependents.
  void set_value(Var leaf, Matrix value);
  /// Re-evaluate every non-leaf node in index order.
  void replay();
  /// Non-leaf nodes whose value depends on `leaf`, in index order.
  [[nodiscard]] std::vector<std::size_t> dependents(Var leaf) const;
  /// Re-evaluate only the listed nodes (as returned by dependents()).
  void replay(const std::vector<std::size_t>& nodes);
  /// Accumulate d(loss)/d(node) for every node; loss must be 1 x 1.
  void backward(Var loss);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] const std::vector<Var>& parameters() const noexcept { return parameters_; }
  [[nodiscard]] const std::string& name(Var v) const;
  [[nodiscard]] Op op(Var v) const;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix grad;
    Matrix aux;
    double scalar = 0.0;
    std::size_t start = 0;
    std::size_t width = 0;
    std::size_t heads = 0;
    std::vector<std::size_t> indices;
    bool requires_grad = false;
    std::string name;
  };

  Var push(Node node);
  void evaluate(Node& node);
  void propagate(std::size_t index);
  Matrix& grad_slot(std::size_t index);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Var> parameters_;
};

}  // namespace driftless
