#include "driftless/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "driftless/errors.hpp"

namespace driftless {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Var Tape::push(Node node) {
  for (std::size_t in : node.inputs) {
    if (in >= nodes_.size()) {
      throw ContractError("Tape: operand refers to a node that does not exist");
    }
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  if (node.op != Op::kLeaf) {
    evaluate(node);
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(std::string name, Matrix value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  node.name = std::move(name);
  const Var v = push(std::move(node));
  parameters_.push_back(v);
  return v;
}

Var Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).cols() != value(b).rows()) {
    throw DimensionError("Tape::matmul: inner dimensions " + std::to_string(value(a).cols()) +
                         " and " + std::to_string(value(b).rows()));
  }
  Node node;
  node.op = Op::kMatMul;
  node.inputs = {a.id, b.id};
  return push(std::move(node));
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(value(a), value(b), "Tape::add");
  Node node;
  node.op = Op::kAdd;
  node.inputs = {a.id, b.id};
  return push(std::move(node));
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(value(a), value(b), "Tape::sub");
  Node node;
  node.op = Op::kSub;
  node.inputs = {a.id, b.id};
  return push(std::move(node));
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(value(a), value(b), "Tape::mul");
  Node node;
  node.op = Op::kMul;
  node.inputs = {a.id, b.id};
  return push(std::move(node));
}

Var Tape::scale(Var a, double factor) {
  check(a);
  Node node;
  node.op = Op::kScale;
  node.inputs = {a.id};
  node.scalar = factor;
  return push(std::move(node));
}

Var Tape::add_row(Var x, Var row) {
  check(x);
  check(row);
  if (value(row).rows() != 1 || value(row).cols() != value(x).cols()) {
    throw DimensionError("Tape::add_row: row must be 1x" + std::to_string(value(x).cols()));
  }
  Node node;
  node.op = Op::kAddRow;
  node.inputs = {x.id, row.id};
  return push(std::move(node));
}

Var Tape::transpose(Var a) {
  check(a);
  Node node;
  node.op = Op::kTranspose;
  node.inputs = {a.id};
  return push(std::move(node));
}

Var Tape::softmax_rows(Var a) {
  check(a);
  Node node;
  node.op = Op::kSoftmaxRows;
  node.inputs = {a.id};
  return push(std::move(node));
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  check(x);
  check(gain);
  check(bias);
  const std::size_t cols = value(x).cols();
  for (Var p : {gain, bias}) {
    if (value(p).rows() != 1 || value(p).cols() != cols) {
      throw DimensionError("Tape::layer_norm: gain/bias must be 1x" + std::to_string(cols));
    }
  }
  Node node;
  node.op = Op::kLayerNorm;
  node.inputs = {x.id, gain.id, bias.id};
  node.scalar = eps;
  return push(std::move(node));
}

Var Tape::gelu(Var a) {
  check(a);
  Node node;
  node.op = Op::kGelu;
  node.inputs = {a.id};
  return push(std::move(node));
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> indices) {
  check(table);
  for (std::size_t idx : indices) {
    if (idx >= value(table).rows()) {
      throw RangeError("Tape::gather_rows: index " + std::to_string(idx) + " outside table of " +
                       std::to_string(value(table).rows()) + " rows");
    }
  }
  Node node;
  node.op = Op::kGatherRows;
  node.inputs = {table.id};
  node.indices = std::move(indices);
  return push(std::move(node));
}

Var Tape::slice_cols(Var x, std::size_t start, std::size_t width) {
  check(x);
  if (start + width > value(x).cols()) {
    throw DimensionError("Tape::slice_cols: columns out of range");
  }
  Node node;
  node.op = Op::kSliceCols;
  node.inputs = {x.id};
  node.start = start;
  node.width = width;
  return push(std::move(node));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw DimensionError("Tape::concat_cols: nothing to concatenate");
  }
  Node node;
  node.op = Op::kConcatCols;
  for (Var p : parts) {
    check(p);
    if (value(p).rows() != value(parts.front()).rows()) {
      throw DimensionError("Tape::concat_cols: row counts differ");
    }
    node.inputs.push_back(p.id);
  }
  return push(std::move(node));
}

Var Tape::block_attention(Var q, Var k, Var v, std::size_t heads, std::size_t block,
                          double scale) {
  check(q);
  check(k);
  check(v);
  const Matrix& qv = value(q);
  if (heads == 0 || block == 0 || qv.cols() % heads != 0) {
    throw DimensionError("Tape::block_attention: heads must divide the width");
  }
  if (value(k).rows() != qv.rows() * block || value(k).cols() != qv.cols()) {
    throw DimensionError("Tape::block_attention: keys must be (F*block) x width");
  }
  require_same_shape(value(k), value(v), "Tape::block_attention");
  Node node;
  node.op = Op::kBlockAttention;
  node.inputs = {q.id, k.id, v.id};
  node.heads = heads;
  node.width = block;
  node.scalar = scale;
  return push(std::move(node));
}

Var Tape::mean_squared_error(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(value(a), value(b), "Tape::mean_squared_error");
  Node node;
  node.op = Op::kMeanSquaredError;
  node.inputs = {a.id, b.id};
  return push(std::move(node));
}

Var Tape::sum(Var a) {
  check(a);
  Node node;
  node.op = Op::kSum;
  node.inputs = {a.id};
  return push(std::move(node));
}

Var Tape::mean(Var a) {
  check(a);
  Node node;
  node.op = Op::kMean;
  node.inputs = {a.id};
  return push(std::move(node));
}

const Matrix& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

const Matrix& Tape::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) {
    throw ContractError("Tape::scalar: node is not 1x1");
  }
  return m.data()[0];
}

const std::string& Tape::name(Var v) const {
  check(v);
  return nodes_[v.id].name;
}

Tape::Op Tape::op(Var v) const {
  check(v);
  return nodes_[v.id].op;
}

void Tape::set_value(Var leaf, Matrix value) {
  check(leaf);
  Node& node = nodes_[leaf.id];
  if (node.op != Op::kLeaf) {
    throw ContractError("Tape::set_value: only leaves can be assigned");
  }
  require_same_shape(node.value, value, "Tape::set_value");
  node.value = std::move(value);
}

void Tape::replay() {
  for (Node& node : nodes_) {
    if (node.op != Op::kLeaf) {
      evaluate(node);
    }
  }
}

std::vector<std::size_t> Tape::dependents(Var leaf) const {
  check(leaf);
  std::vector<char> dirty(nodes_.size(), 0);
  dirty[leaf.id] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = leaf.id + 1; i < nodes_.size(); ++i) {
    for (std::size_t in : nodes_[i].inputs) {
      if (dirty[in]) {
        dirty[i] = 1;
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

void Tape::replay(const std::vector<std::size_t>& nodes) {
  for (std::size_t i : nodes) {
    if (nodes_.at(i).op != Op::kLeaf) {
      evaluate(nodes_[i]);
    }
  }
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ContractError("Tape: unknown node " + std::to_string(v.id));
  }
}

void Tape::evaluate(Node& node) {
  auto in = [&](std::size_t i) -> const Matrix& { return nodes_[node.inputs[i]].value; };
  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kMatMul:
      node.value = driftless::matmul(in(0), in(1));
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      Matrix out(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        const double y = b.data()[i];
        out.data()[i] = node.op == Op::kAdd ? x + y : node.op == Op::kSub ? x - y : x * y;
      }
      node.value = std::move(out);
      return;
    }
    case Op::kScale: {
      Matrix out = in(0);
      for (double& x : out.data()) {
        x *= node.scalar;
      }
      node.value = std::move(out);
      return;
    }
    case Op::kAddRow: {
      Matrix out = in(0);
      const auto row = in(1).row(0);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto dst = out.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) {
          dst[c] += row[c];
        }
      }
      node.value = std::move(out);
      return;
    }
    case Op::kTranspose:
      node.value = driftless::transpose(in(0));
      return;
    case Op::kSoftmaxRows:
      node.value = driftless::softmax_rows(in(0));
      return;
    case Op::kLayerNorm: {
      const Matrix& x = in(0);
      const auto gain = in(1).row(0);
      const auto bias = in(2).row(0);
      const auto n = static_cast<double>(x.cols());
      Matrix out(x.rows(), x.cols());
      // aux row r: [mean, inverse std]
      Matrix stats(x.rows(), 2);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto src = x.row(r);
        double mean = 0.0;
        for (double v : src) {
          mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : src) {
          var += (v - mean) * (v - mean);
        }
        var /= n;
        const double inv_std = 1.0 / std::sqrt(var + node.scalar);
        stats(r, 0) = mean;
        stats(r, 1) = inv_std;
        auto dst = out.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) {
          dst[c] = (src[c] - mean) * inv_std * gain[c] + bias[c];
        }
      }
      node.value = std::move(out);
      node.aux = std::move(stats);
      return;
    }
    case Op::kGelu: {
      Matrix out = in(0);
      for (double& x : out.data()) {
        const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
        x = 0.5 * x * (1.0 + std::tanh(u));
      }
      node.value = std::move(out);
      return;
    }
    case Op::kGatherRows: {
      const Matrix& table = in(0);
      Matrix out(node.indices.size(), table.cols());
      for (std::size_t r = 0; r < node.indices.size(); ++r) {
        std::copy_n(table.row(node.indices[r]).begin(), table.cols(), out.row(r).begin());
      }
      node.value = std::move(out);
      return;
    }
    case Op::kSliceCols: {
      const Matrix& x = in(0);
      Matrix out(x.rows(), node.width);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        std::copy_n(x.row(r).begin() + static_cast<std::ptrdiff_t>(node.start), node.width,
                    out.row(r).begin());
      }
      node.value = std::move(out);
      return;
    }
    case Op::kConcatCols: {
      std::size_t total = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        total += in(i).cols();
      }
      Matrix out(in(0).rows(), total);
      std::size_t offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const Matrix& part = in(i);
        for (std::size_t r = 0; r < part.rows(); ++r) {
          std::copy_n(part.row(r).begin(), part.cols(),
                      out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
        }
        offset += part.cols();
      }
      node.value = std::move(out);
      return;
    }
    case Op::kBlockAttention: {
      const Matrix& q = in(0);
      const Matrix& k = in(1);
      const Matrix& v = in(2);
      const std::size_t frames = q.rows();
      const std::size_t block = node.width;
      const std::size_t heads = node.heads;
      const std::size_t head_dim = q.cols() / heads;
      Matrix out(frames, q.cols());
      // aux row f: attention weights, head-major, `block` entries per head.
      Matrix weights(frames, heads * block);
      std::vector<double> scores(block);
      for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * head_dim;
          double peak = -INFINITY;
          for (std::size_t l = 0; l < block; ++l) {
            double s = 0.0;
            for (std::size_t c = c0; c < c0 + head_dim; ++c) {
              s += q(f, c) * k(f * block + l, c);
            }
            scores[l] = s * node.scalar;
            peak = std::max(peak, scores[l]);
          }
          double total = 0.0;
          for (std::size_t l = 0; l < block; ++l) {
            scores[l] = std::exp(scores[l] - peak);
            total += scores[l];
          }
          for (std::size_t l = 0; l < block; ++l) {
            const double a = scores[l] / total;
            weights(f, h * block + l) = a;
            for (std::size_t c = c0; c < c0 + head_dim; ++c) {
              out(f, c) += a * v(f * block + l, c);
            }
          }
        }
      }
      node.value = std::move(out);
      node.aux = std::move(weights);
      return;
    }
    case Op::kMeanSquaredError: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      double total = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        total += d * d;
      }
      node.value = Matrix(1, 1, total / static_cast<double>(a.size()));
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      double total = 0.0;
      for (double x : in(0).data()) {
        total += x;
      }
      if (node.op == Op::kMean) {
        total /= static_cast<double>(in(0).size());
      }
      node.value = Matrix(1, 1, total);
      return;
    }
  }
}

Matrix& Tape::grad_slot(std::size_t index) {
  Node& node = nodes_[index];
  if (node.grad.rows() != node.value.rows() || node.grad.cols() != node.value.cols()) {
    node.grad = Matrix(node.value.rows(), node.value.cols());
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("Tape::backward: loss must be a 1x1 node");
  }
  for (Node& node : nodes_) {
    node.grad = Matrix(node.value.rows(), node.value.cols());
  }
  nodes_[loss.id].grad.data()[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].op != Op::kLeaf) {
      propagate(i);
    }
  }
}

void Tape::propagate(std::size_t index) {
  Node& node = nodes_[index];
  const Matrix& g = node.grad;
  auto in = [&](std::size_t i) -> const Matrix& { return nodes_[node.inputs[i]].value; };
  auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].requires_grad; };
  auto slot = [&](std::size_t i) -> Matrix& { return grad_slot(node.inputs[i]); };

  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kMatMul: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (wants(0)) {
        const Matrix da = driftless::matmul(g, driftless::transpose(b));
        Matrix& dst = slot(0);
        for (std::size_t i = 0; i < da.size(); ++i) {
          dst.data()[i] += da.data()[i];
        }
      }
      if (wants(1)) {
        const Matrix db = driftless::matmul(driftless::transpose(a), g);
        Matrix& dst = slot(1);
        for (std::size_t i = 0; i < db.size(); ++i) {
          dst.data()[i] += db.data()[i];
        }
      }
      return;
    }
    case Op::kAdd:
    case Op::kSub: {
      const double sign_b = node.op == Op::kAdd ? 1.0 : -1.0;
      if (wants(0)) {
        Matrix& dst = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dst.data()[i] += g.data()[i];
        }
      }
      if (wants(1)) {
        Matrix& dst = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dst.data()[i] += sign_b * g.data()[i];
        }
      }
      return;
    }
    case Op::kMul: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (wants(0)) {
        Matrix& dst = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dst.data()[i] += g.data()[i] * b.data()[i];
        }
      }
      if (wants(1)) {
        Matrix& dst = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dst.data()[i] += g.data()[i] * a.data()[i];
        }
      }
      return;
    }
    case Op::kScale: {
      Matrix& dst = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        dst.data()[i] += node.scalar * g.data()[i];
      }
      return;
    }
    case Op::kAddRow: {
      if (wants(0)) {
        Matrix& dst = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dst.data()[i] += g.data()[i];
        }
      }
      if (wants(1)) {
        Matrix& dst = slot(1);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const auto src = g.row(r);
          for (std::size_t c = 0; c < src.size(); ++c) {
            dst(0, c) += src[c];
          }
        }
      }
      return;
    }
    case Op::kTranspose: {
      Matrix& dst = slot(0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          dst(c, r) += g(r, c);
        }
      }
      return;
    }
    case Op::kSoftmaxRows: {
      const Matrix& y = node.value;
      Matrix& dst = slot(0);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) {
          dot += g(r, c) * y(r, c);
        }
        for (std::size_t c = 0; c < y.cols(); ++c) {
          dst(r, c) += y(r, c) * (g(r, c) - dot);
        }
      }
      return;
    }
    case Op::kLayerNorm: {
      const Matrix& x = in(0);
      const auto gain = in(1).row(0);
      const std::size_t cols = x.cols();
      const auto n = static_cast<double>(cols);
      std::vector<double> xhat(cols);
      std::vector<double> dxhat(cols);
      Matrix* dx = wants(0) ? &slot(0) : nullptr;
      Matrix* dgain = wants(1) ? &slot(1) : nullptr;
      Matrix* dbias = wants(2) ? &slot(2) : nullptr;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double mean = node.aux(r, 0);
        const double inv_std = node.aux(r, 1);
        double mean_dxhat = 0.0;
        double mean_dxhat_xhat = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          xhat[c] = (x(r, c) - mean) * inv_std;
          dxhat[c] = g(r, c) * gain[c];
          mean_dxhat += dxhat[c];
          mean_dxhat_xhat += dxhat[c] * xhat[c];
          if (dgain != nullptr) {
            (*dgain)(0, c) += g(r, c) * xhat[c];
          }
          if (dbias != nullptr) {
            (*dbias)(0, c) += g(r, c);
          }
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        if (dx != nullptr) {
          for (std::size_t c = 0; c < cols; ++c) {
            (*dx)(r, c) += inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
          }
        }
      }
      return;
    }
    case Op::kGelu: {
      const Matrix& x = in(0);
      Matrix& dst = slot(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
        const double th = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
        const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        dst.data()[i] += g.data()[i] * d;
      }
      return;
    }
    case Op::kGatherRows: {
      Matrix& dst = slot(0);
      for (std::size_t r = 0; r < node.indices.size(); ++r) {
        auto target = dst.row(node.indices[r]);
        const auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) {
          target[c] += src[c];
        }
      }
      return;
    }
    case Op::kSliceCols: {
      Matrix& dst = slot(0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < node.width; ++c) {
          dst(r, node.start + c) += g(r, c);
        }
      }
      return;
    }
    case Op::kConcatCols: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        const std::size_t width = in(i).cols();
        if (wants(i)) {
          Matrix& dst = slot(i);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < width; ++c) {
              dst(r, c) += g(r, offset + c);
            }
          }
        }
        offset += width;
      }
      return;
    }
    case Op::kBlockAttention: {
      const Matrix& q = in(0);
      const Matrix& k = in(1);
      const Matrix& v = in(2);
      const std::size_t frames = q.rows();
      const std::size_t block = node.width;
      const std::size_t heads = node.heads;
      const std::size_t head_dim = q.cols() / heads;
      Matrix* dq = wants(0) ? &slot(0) : nullptr;
      Matrix* dk = wants(1) ? &slot(1) : nullptr;
      Matrix* dv = wants(2) ? &slot(2) : nullptr;
      std::vector<double> dweight(block);
      std::vector<double> dscore(block);
      for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * head_dim;
          double weighted = 0.0;
          for (std::size_t l = 0; l < block; ++l) {
            const double a = node.aux(f, h * block + l);
            double d = 0.0;
            for (std::size_t c = c0; c < c0 + head_dim; ++c) {
              d += g(f, c) * v(f * block + l, c);
              if (dv != nullptr) {
                (*dv)(f * block + l, c) += a * g(f, c);
              }
            }
            dweight[l] = d;
            weighted += a * d;
          }
          for (std::size_t l = 0; l < block; ++l) {
            dscore[l] = node.aux(f, h * block + l) * (dweight[l] - weighted) * node.scalar;
          }
          for (std::size_t l = 0; l < block; ++l) {
            for (std::size_t c = c0; c < c0 + head_dim; ++c) {
              if (dq != nullptr) {
                (*dq)(f, c) += dscore[l] * k(f * block + l, c);
              }
              if (dk != nullptr) {
                (*dk)(f * block + l, c) += dscore[l] * q(f, c);
              }
            }
          }
        }
      }
      return;
    }
    case Op::kMeanSquaredError: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      const double factor = 2.0 * g.data()[0] / static_cast<double>(a.size());
      if (wants(0)) {
        Matrix& dst = slot(0);
        for (std::size_t i = 0; i < a.size(); ++i) {
          dst.data()[i] += factor * (a.data()[i] - b.data()[i]);
        }
      }
      if (wants(1)) {
        Matrix& dst = slot(1);
        for (std::size_t i = 0; i < a.size(); ++i) {
          dst.data()[i] -= factor * (a.data()[i] - b.data()[i]);
        }
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      Matrix& dst = slot(0);
      double d = g.data()[0];
      if (node.op == Op::kMean) {
        d /= static_cast<double>(dst.size());
      }
      for (double& x : dst.data()) {
        x += d;
      }
      return;
    }
  }
}

}  // namespace driftless
