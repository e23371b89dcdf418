#include "fem/nd/tape.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fem::nd {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double softplus_scalar(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Tape* common_tape(Tensor a, Tensor b) {
  if (!a.valid() || !b.valid()) throw NdError("op on invalid tensor");
  if (a.tape() != b.tape()) throw NdError("operands live on different tapes");
  return a.tape();
}

void require_same_shape(Tensor a, Tensor b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw NdError(std::string(who) + ": shape mismatch");
  }
}

}  // namespace

double gelu_scalar(double x) { return x * norm_cdf(x); }
double gelu_grad_scalar(double x) { return norm_cdf(x) + x * norm_pdf(x); }
double gelu_grad2_scalar(double x) { return norm_pdf(x) * (2.0 - x * x); }

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kAffine: return "affine";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kPadCols: return "pad_cols";
    case Op::kRowsSelect: return "rows_select";
    case Op::kRowsScatter: return "rows_scatter";
    case Op::kGatherCols: return "gather_cols";
    case Op::kScatterCols: return "scatter_cols";
    case Op::kGelu: return "gelu";
    case Op::kGeluGrad: return "gelu_grad";
    case Op::kGeluGrad2: return "gelu_grad2";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kReciprocal: return "reciprocal";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kClipMax: return "clip_max";
    case Op::kClipMin: return "clip_min";
    case Op::kSumAll: return "sum_all";
    case Op::kRowSum: return "row_sum";
    case Op::kColSum: return "col_sum";
    case Op::kRepeatCols: return "repeat_cols";
    case Op::kRepeatRows: return "repeat_rows";
    case Op::kBroadcastFull: return "broadcast_full";
    case Op::kLseRows: return "lse_rows";
    case Op::kReshape: return "reshape";
  }
  return "?";
}

int Tensor::rows() const { return tape_->node(id_).value.rows; }
int Tensor::cols() const { return tape_->node(id_).value.cols; }
const Mat& Tensor::value() const { return tape_->node(id_).value; }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

Tensor Tape::emit(Node n) {
  if (!all_finite(n.value)) {
    throw NdError(std::string(op_name(n.op)) + ": non-finite result");
  }
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::leaf(Mat m) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.value = std::move(m);
  return emit(std::move(n));
}

Tensor Tape::constant(Mat m) {
  Node n;
  n.op = Op::kConstant;
  n.requires_grad = false;
  n.value = std::move(m);
  return emit(std::move(n));
}

// ---- forward builders ------------------------------------------------------

namespace {

Node binary_node(Op op, Tensor a, Tensor b, Mat value) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  n.value = std::move(value);
  return n;
}

Node unary_node(Op op, Tensor a, Mat value) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.requires_grad = a.requires_grad();
  n.value = std::move(value);
  return n;
}

template <class F>
Tensor elementwise2(Op op, Tensor a, Tensor b, F f) {
  require_same_shape(a, b, op_name(op));
  Tape* t = common_tape(a, b);
  Mat out(a.rows(), a.cols());
  const Mat& av = a.value();
  const Mat& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = f(av.v[i], bv.v[i]);
  return t->emit(binary_node(op, a, b, std::move(out)));
}

template <class F>
Tensor elementwise1(Op op, Tensor a, F f, double p0 = 0.0, double p1 = 0.0) {
  if (!a.valid()) throw NdError("op on invalid tensor");
  Mat out(a.rows(), a.cols());
  const Mat& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = f(av.v[i]);
  Node n = unary_node(op, a, std::move(out));
  n.p0 = p0;
  n.p1 = p1;
  return a.tape()->emit(std::move(n));
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
  return elementwise2(Op::kAdd, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(Tensor a, Tensor b) {
  return elementwise2(Op::kSub, a, b, [](double x, double y) { return x - y; });
}

Tensor mul(Tensor a, Tensor b) {
  return elementwise2(Op::kMul, a, b, [](double x, double y) { return x * y; });
}

Tensor affine(Tensor x, double scale, double shift) {
  return elementwise1(
      Op::kAffine, x, [=](double v) { return scale * v + shift; }, scale, shift);
}

Tensor matmul(Tensor a, Tensor b) {
  Tape* t = common_tape(a, b);
  return t->emit(binary_node(Op::kMatmul, a, b, matmul(a.value(), b.value())));
}

Tensor transpose(Tensor a) {
  return a.tape()->emit(unary_node(Op::kTranspose, a, transposed(a.value())));
}

Tensor concat_cols(Tensor a, Tensor b) {
  Tape* t = common_tape(a, b);
  if (a.rows() != b.rows()) throw NdError("concat_cols: row counts differ");
  Mat out(a.rows(), a.cols() + b.cols());
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) out.at(r, c) = a.value().at(r, c);
    for (int c = 0; c < b.cols(); ++c) out.at(r, a.cols() + c) = b.value().at(r, c);
  }
  return t->emit(binary_node(Op::kConcatCols, a, b, std::move(out)));
}

Tensor slice_cols(Tensor a, int first, int width) {
  if (first < 0 || width < 0 || first + width > a.cols()) {
    throw NdError("slice_cols: range out of bounds");
  }
  Mat out(a.rows(), width);
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < width; ++c) out.at(r, c) = a.value().at(r, first + c);
  }
  Node n = unary_node(Op::kSliceCols, a, std::move(out));
  n.i0 = first;
  n.i1 = width;
  return a.tape()->emit(std::move(n));
}

Tensor pad_cols(Tensor a, int first, int dest_width) {
  if (first < 0 || first + a.cols() > dest_width) throw NdError("pad_cols: range out of bounds");
  Mat out(a.rows(), dest_width);
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) out.at(r, first + c) = a.value().at(r, c);
  }
  Node n = unary_node(Op::kPadCols, a, std::move(out));
  n.i0 = first;
  n.i1 = dest_width;
  return a.tape()->emit(std::move(n));
}

Tensor rows_select(Tensor table, std::shared_ptr<const std::vector<int>> idx) {
  const Mat& tv = table.value();
  Mat out(static_cast<int>(idx->size()), tv.cols);
  for (size_t r = 0; r < idx->size(); ++r) {
    const int src = (*idx)[r];
    if (src < 0 || src >= tv.rows) throw NdError("rows_select: index out of range");
    std::copy_n(&tv.v[static_cast<size_t>(src) * tv.cols], tv.cols,
                &out.v[r * static_cast<size_t>(tv.cols)]);
  }
  Node n = unary_node(Op::kRowsSelect, table, std::move(out));
  n.idx = std::move(idx);
  return table.tape()->emit(std::move(n));
}

Tensor rows_scatter(Tensor a, std::shared_ptr<const std::vector<int>> idx, int dest_rows) {
  const Mat& av = a.value();
  if (static_cast<int>(idx->size()) != av.rows) throw NdError("rows_scatter: index size mismatch");
  Mat out(dest_rows, av.cols);
  for (int r = 0; r < av.rows; ++r) {
    const int dst = (*idx)[r];
    if (dst < 0 || dst >= dest_rows) throw NdError("rows_scatter: index out of range");
    for (int c = 0; c < av.cols; ++c) out.at(dst, c) += av.at(r, c);
  }
  Node n = unary_node(Op::kRowsScatter, a, std::move(out));
  n.idx = std::move(idx);
  n.i0 = dest_rows;
  return a.tape()->emit(std::move(n));
}

Tensor gather_cols(Tensor a, std::shared_ptr<const std::vector<int>> idx) {
  const Mat& av = a.value();
  if (static_cast<int>(idx->size()) != av.rows) throw NdError("gather_cols: index size mismatch");
  Mat out(av.rows, 1);
  for (int r = 0; r < av.rows; ++r) {
    const int c = (*idx)[r];
    if (c < 0 || c >= av.cols) throw NdError("gather_cols: index out of range");
    out.at(r, 0) = av.at(r, c);
  }
  Node n = unary_node(Op::kGatherCols, a, std::move(out));
  n.idx = std::move(idx);
  return a.tape()->emit(std::move(n));
}

Tensor scatter_cols(Tensor a, std::shared_ptr<const std::vector<int>> idx, int dest_cols) {
  const Mat& av = a.value();
  if (av.cols != 1) throw NdError("scatter_cols: input must be a column");
  if (static_cast<int>(idx->size()) != av.rows) throw NdError("scatter_cols: index size mismatch");
  Mat out(av.rows, dest_cols);
  for (int r = 0; r < av.rows; ++r) {
    const int c = (*idx)[r];
    if (c < 0 || c >= dest_cols) throw NdError("scatter_cols: index out of range");
    out.at(r, c) = av.at(r, 0);
  }
  Node n = unary_node(Op::kScatterCols, a, std::move(out));
  n.idx = std::move(idx);
  n.i0 = dest_cols;
  return a.tape()->emit(std::move(n));
}

Tensor gelu(Tensor x) { return elementwise1(Op::kGelu, x, gelu_scalar); }
Tensor gelu_grad(Tensor x) { return elementwise1(Op::kGeluGrad, x, gelu_grad_scalar); }
Tensor gelu_grad2(Tensor x) { return elementwise1(Op::kGeluGrad2, x, gelu_grad2_scalar); }
Tensor exp(Tensor x) {
  return elementwise1(Op::kExp, x, [](double v) { return std::exp(v); });
}
Tensor log(Tensor x) {
  return elementwise1(Op::kLog, x, [](double v) { return std::log(v); });
}
Tensor reciprocal(Tensor x) {
  return elementwise1(Op::kReciprocal, x, [](double v) { return 1.0 / v; });
}
Tensor softplus(Tensor x) { return elementwise1(Op::kSoftplus, x, softplus_scalar); }
Tensor sigmoid(Tensor x) { return elementwise1(Op::kSigmoid, x, sigmoid_scalar); }

Tensor clip_max(Tensor x, double bound) {
  return elementwise1(
      Op::kClipMax, x, [=](double v) { return std::min(v, bound); }, bound);
}

Tensor clip_min(Tensor x, double bound) {
  return elementwise1(
      Op::kClipMin, x, [=](double v) { return std::max(v, bound); }, bound);
}

Tensor sum_all(Tensor x) {
  double s = 0.0;
  for (double v : x.value().v) s += v;
  return x.tape()->emit(unary_node(Op::kSumAll, x, Mat::scalar(s)));
}

Tensor row_sum(Tensor x) {
  const Mat& xv = x.value();
  Mat out(xv.rows, 1);
  for (int r = 0; r < xv.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < xv.cols; ++c) s += xv.at(r, c);
    out.at(r, 0) = s;
  }
  return x.tape()->emit(unary_node(Op::kRowSum, x, std::move(out)));
}

Tensor col_sum(Tensor x) {
  const Mat& xv = x.value();
  Mat out(1, xv.cols);
  for (int r = 0; r < xv.rows; ++r) {
    for (int c = 0; c < xv.cols; ++c) out.at(0, c) += xv.at(r, c);
  }
  return x.tape()->emit(unary_node(Op::kColSum, x, std::move(out)));
}

Tensor repeat_cols(Tensor x, int n) {
  if (x.cols() != 1) throw NdError("repeat_cols: input must be a column");
  Mat out(x.rows(), n);
  for (int r = 0; r < x.rows(); ++r) {
    const double v = x.value().at(r, 0);
    for (int c = 0; c < n; ++c) out.at(r, c) = v;
  }
  Node nd = unary_node(Op::kRepeatCols, x, std::move(out));
  nd.i0 = n;
  return x.tape()->emit(std::move(nd));
}

Tensor repeat_rows(Tensor x, int n) {
  if (x.rows() != 1) throw NdError("repeat_rows: input must be a row");
  Mat out(n, x.cols());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < x.cols(); ++c) out.at(r, c) = x.value().at(0, c);
  }
  Node nd = unary_node(Op::kRepeatRows, x, std::move(out));
  nd.i0 = n;
  return x.tape()->emit(std::move(nd));
}

Tensor broadcast_full(Tensor x, int r, int c) {
  if (x.rows() != 1 || x.cols() != 1) throw NdError("broadcast_full: input must be scalar");
  Node nd = unary_node(Op::kBroadcastFull, x, Mat::full(r, c, x.value().at(0, 0)));
  nd.i0 = r;
  nd.i1 = c;
  return x.tape()->emit(std::move(nd));
}

Tensor lse_rows(Tensor x) {
  const Mat& xv = x.value();
  if (xv.cols < 1) throw NdError("lse_rows: empty rows");
  Mat out(xv.rows, 1);
  for (int r = 0; r < xv.rows; ++r) {
    double m = xv.at(r, 0);
    for (int c = 1; c < xv.cols; ++c) m = std::max(m, xv.at(r, c));
    double s = 0.0;
    for (int c = 0; c < xv.cols; ++c) s += std::exp(xv.at(r, c) - m);
    out.at(r, 0) = m + std::log(s);
  }
  return x.tape()->emit(unary_node(Op::kLseRows, x, std::move(out)));
}

Tensor reshape(Tensor x, int r, int c) {
  if (static_cast<size_t>(r) * c != x.value().size()) throw NdError("reshape: size mismatch");
  Mat out(r, c);
  out.v = x.value().v;
  Node nd = unary_node(Op::kReshape, x, std::move(out));
  nd.i0 = r;
  nd.i1 = c;
  return x.tape()->emit(std::move(nd));
}

Tensor squared_norm(Tensor x) { return sum_all(mul(x, x)); }

Tensor mean_all(Tensor x) {
  return affine(sum_all(x), 1.0 / static_cast<double>(x.value().size()), 0.0);
}

// ---- backward --------------------------------------------------------------

std::vector<Tensor> Tape::gradients(Tensor f, std::span<const Tensor> wrt) {
  if (f.tape() != this) throw NdError("gradients: scalar not on this tape");
  if (f.rows() != 1 || f.cols() != 1) throw NdError("gradients: f must be scalar");
  for (const Tensor& w : wrt) {
    if (w.tape() != this) throw NdError("gradients: wrt tensor not on this tape");
  }

  const int n = f.id() + 1;

  // Forward reachability from the wrt set: a node's adjoint is needed only if
  // its value depends on some wrt tensor. This prunes e.g. parameter branches
  // when differentiating w.r.t. inputs only.
  std::vector<char> dep(n, 0);
  for (const Tensor& w : wrt) dep[w.id()] = 1;
  for (int i = 0; i < n; ++i) {
    const Node& nd = nodes_[i];
    if ((nd.a >= 0 && dep[nd.a]) || (nd.b >= 0 && dep[nd.b])) dep[i] = 1;
  }

  std::vector<int> adj(n, -1);
  auto accumulate = [&](int target, Tensor g) {
    if (target < 0) return;
    const Node& tn = nodes_[target];
    if (!tn.requires_grad || !dep[target]) return;
    adj[target] = adj[target] < 0 ? g.id() : add(Tensor(this, adj[target]), g).id();
  };

  if (dep[f.id()] && nodes_[f.id()].requires_grad) {
    adj[f.id()] = constant(Mat::scalar(1.0)).id();
  }

  for (int i = f.id(); i >= 0; --i) {
    if (adj[i] < 0) continue;
    const Node nd = nodes_[i];  // copy: emit() may reallocate nodes_
    if (nd.op == Op::kLeaf || nd.op == Op::kConstant) continue;
    Tensor u(this, adj[i]);
    Tensor self(this, i);
    Tensor in_a = nd.a >= 0 ? Tensor(this, nd.a) : Tensor();
    Tensor in_b = nd.b >= 0 ? Tensor(this, nd.b) : Tensor();
    switch (nd.op) {
      case Op::kAdd:
        accumulate(nd.a, u);
        accumulate(nd.b, u);
        break;
      case Op::kSub:
        accumulate(nd.a, u);
        if (dep[nd.b] && nodes_[nd.b].requires_grad) accumulate(nd.b, affine(u, -1.0, 0.0));
        break;
      case Op::kMul:
        if (dep[nd.a] && nodes_[nd.a].requires_grad) accumulate(nd.a, mul(u, in_b));
        if (dep[nd.b] && nodes_[nd.b].requires_grad) accumulate(nd.b, mul(u, in_a));
        break;
      case Op::kAffine:
        accumulate(nd.a, affine(u, nd.p0, 0.0));
        break;
      case Op::kMatmul:
        if (dep[nd.a] && nodes_[nd.a].requires_grad) {
          accumulate(nd.a, matmul(u, transpose(in_b)));
        }
        if (dep[nd.b] && nodes_[nd.b].requires_grad) {
          accumulate(nd.b, matmul(transpose(in_a), u));
        }
        break;
      case Op::kTranspose:
        accumulate(nd.a, transpose(u));
        break;
      case Op::kConcatCols:
        if (dep[nd.a] && nodes_[nd.a].requires_grad) {
          accumulate(nd.a, slice_cols(u, 0, nodes_[nd.a].value.cols));
        }
        if (dep[nd.b] && nodes_[nd.b].requires_grad) {
          accumulate(nd.b, slice_cols(u, nodes_[nd.a].value.cols, nodes_[nd.b].value.cols));
        }
        break;
      case Op::kSliceCols:
        accumulate(nd.a, pad_cols(u, nd.i0, nodes_[nd.a].value.cols));
        break;
      case Op::kPadCols:
        accumulate(nd.a, slice_cols(u, nd.i0, nodes_[nd.a].value.cols));
        break;
      case Op::kRowsSelect:
        accumulate(nd.a, rows_scatter(u, nd.idx, nodes_[nd.a].value.rows));
        break;
      case Op::kRowsScatter:
        accumulate(nd.a, rows_select(u, nd.idx));
        break;
      case Op::kGatherCols:
        accumulate(nd.a, scatter_cols(u, nd.idx, nodes_[nd.a].value.cols));
        break;
      case Op::kScatterCols:
        accumulate(nd.a, gather_cols(u, nd.idx));
        break;
      case Op::kGelu:
        accumulate(nd.a, mul(u, gelu_grad(in_a)));
        break;
      case Op::kGeluGrad:
        accumulate(nd.a, mul(u, gelu_grad2(in_a)));
        break;
      case Op::kExp:
        accumulate(nd.a, mul(u, self));
        break;
      case Op::kLog:
        accumulate(nd.a, mul(u, reciprocal(in_a)));
        break;
      case Op::kReciprocal:
        accumulate(nd.a, affine(mul(u, mul(self, self)), -1.0, 0.0));
        break;
      case Op::kSoftplus:
        accumulate(nd.a, mul(u, sigmoid(in_a)));
        break;
      case Op::kSigmoid:
        accumulate(nd.a, mul(u, mul(self, affine(self, -1.0, 1.0))));
        break;
      case Op::kClipMax:
      case Op::kClipMin: {
        const Mat& xv = nodes_[nd.a].value;
        Mat mask(xv.rows, xv.cols);
        for (size_t j = 0; j < xv.size(); ++j) {
          const bool pass = nd.op == Op::kClipMax ? xv.v[j] < nd.p0 : xv.v[j] > nd.p0;
          mask.v[j] = pass ? 1.0 : 0.0;
        }
        accumulate(nd.a, mul(u, constant(std::move(mask))));
        break;
      }
      case Op::kSumAll:
        accumulate(nd.a, broadcast_full(u, nodes_[nd.a].value.rows, nodes_[nd.a].value.cols));
        break;
      case Op::kRowSum:
        accumulate(nd.a, repeat_cols(u, nodes_[nd.a].value.cols));
        break;
      case Op::kColSum:
        accumulate(nd.a, repeat_rows(u, nodes_[nd.a].value.rows));
        break;
      case Op::kRepeatCols:
        accumulate(nd.a, row_sum(u));
        break;
      case Op::kRepeatRows:
        accumulate(nd.a, col_sum(u));
        break;
      case Op::kBroadcastFull:
        accumulate(nd.a, sum_all(u));
        break;
      case Op::kLseRows: {
        const int c = nodes_[nd.a].value.cols;
        Tensor softmax = exp(sub(in_a, repeat_cols(self, c)));
        accumulate(nd.a, mul(repeat_cols(u, c), softmax));
        break;
      }
      case Op::kReshape:
        accumulate(nd.a, reshape(u, nodes_[nd.a].value.rows, nodes_[nd.a].value.cols));
        break;
      case Op::kGeluGrad2:
        throw NdError("unsupported op in differentiated subgraph: gelu_grad2 (third order)");
      case Op::kLeaf:
      case Op::kConstant:
        break;
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    if (adj[w.id()] >= 0) {
      out.push_back(Tensor(this, adj[w.id()]));
    } else {
      out.push_back(constant(Mat(w.rows(), w.cols())));
    }
  }
  return out;
}

Tensor input_gradient(Tensor f, Tensor x) {
  const Tensor wrt[] = {x};
  return f.tape()->gradients(f, wrt)[0];
}

std::vector<Mat> param_gradients(Tensor loss, std::span<const Tensor> params) {
  std::vector<Tensor> gs = loss.tape()->gradients(loss, params);
  std::vector<Mat> out;
  out.reserve(gs.size());
  for (const Tensor& g : gs) out.push_back(g.value());
  return out;
}

}  // namespace fem::nd
