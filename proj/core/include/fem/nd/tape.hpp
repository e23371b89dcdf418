#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fem/nd/mat.hpp"

namespace fem::nd {

// The supported op set. It is deliberately closed: the energy network and the
// training losses are expressible in it, and every op's backward rule is
// itself expressed in these ops, so gradients are ordinary graph nodes that
// can be differentiated once more. Anything outside the set is an error.
enum class Op : uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kAffine,  // p0 * x + p1, elementwise
  kMatmul,
  kTranspose,
  kConcatCols,
  kSliceCols,   // i0 = first col, i1 = width
  kPadCols,     // i0 = dest col offset, i1 = dest width
  kRowsSelect,  // out[r] = in[idx[r]]
  kRowsScatter, // out has i0 rows; out[idx[r]] += in[r]
  kGatherCols,  // out[r][0] = in[r][idx[r]]
  kScatterCols, // out has i0 cols; out[r][idx[r]] = in[r][0]
  kGelu,
  kGeluGrad,
  kGeluGrad2,
  kExp,
  kLog,
  kReciprocal,
  kSoftplus,
  kSigmoid,
  kClipMax,  // min(x, p0)
  kClipMin,  // max(x, p0)
  kSumAll,
  kRowSum,         // [B x n] -> [B x 1]
  kColSum,         // [B x n] -> [1 x n]
  kRepeatCols,     // [B x 1] -> [B x i0]
  kRepeatRows,     // [1 x n] -> [i0 x n]
  kBroadcastFull,  // [1 x 1] -> [i0 x i1]
  kLseRows,        // [B x n] -> [B x 1], log-sum-exp per row
  kReshape,        // row-major reinterpret to i0 x i1
};

const char* op_name(Op op);

struct Node {
  Op op = Op::kLeaf;
  int a = -1;
  int b = -1;
  bool requires_grad = false;
  double p0 = 0.0;
  double p1 = 0.0;
  int i0 = 0;
  int i1 = 0;
  std::shared_ptr<const std::vector<int>> idx;
  Mat value;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; lifetime bound to the tape.
class Tensor {
 public:
  Tensor() = default;
  bool valid() const { return tape_ != nullptr; }
  int rows() const;
  int cols() const;
  const Mat& value() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Append-only op recorder. Node ids are a topological order by construction;
/// the backward pass walks ids in reverse, visiting each node exactly once.
class Tape {
 public:
  Tensor leaf(Mat m);      // differentiable input
  Tensor constant(Mat m);  // non-differentiable input

  size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[id]; }

  /// Reverse-mode gradients of scalar `f` w.r.t. each tensor in `wrt`.
  /// The results are new tape nodes built from the op set, so a loss assembled
  /// from them can be differentiated again (second order) by a further call.
  /// Tensors in `wrt` that `f` does not depend on get a zero gradient.
  std::vector<Tensor> gradients(Tensor f, std::span<const Tensor> wrt);

  Tensor emit(Node n);

 private:
  std::vector<Node> nodes_;
};

// ---- op builders ----------------------------------------------------------

Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor affine(Tensor x, double scale, double shift);
Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);
Tensor concat_cols(Tensor a, Tensor b);
Tensor slice_cols(Tensor a, int first, int width);
Tensor pad_cols(Tensor a, int first, int dest_width);
Tensor rows_select(Tensor table, std::shared_ptr<const std::vector<int>> idx);
Tensor rows_scatter(Tensor a, std::shared_ptr<const std::vector<int>> idx, int dest_rows);
Tensor gather_cols(Tensor a, std::shared_ptr<const std::vector<int>> idx);
Tensor scatter_cols(Tensor a, std::shared_ptr<const std::vector<int>> idx, int dest_cols);
Tensor gelu(Tensor x);
Tensor gelu_grad(Tensor x);
Tensor gelu_grad2(Tensor x);
Tensor exp(Tensor x);
Tensor log(Tensor x);
Tensor reciprocal(Tensor x);
Tensor softplus(Tensor x);
Tensor sigmoid(Tensor x);
Tensor clip_max(Tensor x, double bound);
Tensor clip_min(Tensor x, double bound);
Tensor sum_all(Tensor x);
Tensor row_sum(Tensor x);
Tensor col_sum(Tensor x);
Tensor repeat_cols(Tensor x, int n);
Tensor repeat_rows(Tensor x, int n);
Tensor broadcast_full(Tensor x, int r, int c);
Tensor lse_rows(Tensor x);
Tensor reshape(Tensor x, int r, int c);

// conveniences built from the op set
Tensor squared_norm(Tensor x);  // sum of squares over all entries
Tensor mean_all(Tensor x);

// scalar gelu helpers shared with value-path evaluation
double gelu_scalar(double x);
double gelu_grad_scalar(double x);
double gelu_grad2_scalar(double x);

/// d f / d x as tape nodes; `f` must be scalar. Shape matches `x`.
Tensor input_gradient(Tensor f, Tensor x);

/// Values of d loss / d params. `loss` may contain input_gradient nodes, in
/// which case the mixed second-order path is included exactly.
std::vector<Mat> param_gradients(Tensor loss, std::span<const Tensor> params);

}  // namespace fem::nd
