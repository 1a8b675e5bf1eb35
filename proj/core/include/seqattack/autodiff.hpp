#pragma once

// Reverse-mode autodiff over Eigen matrices. Dynamic graph, double precision,
// single-threaded and fully deterministic. Just enough ops for the recurrent
// models, soft one-hot embeddings and kernel losses used in this project.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqattack/common.hpp"

namespace seqattack::ad {

using Mat = Eigen::MatrixXd;

class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
  Mat value;
  Mat grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

  Mat& ensure_grad() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
};

Var constant(Mat v);
Var param(Mat v);  // leaf with requires_grad = true

inline double scalar(const Var& v) { return v->value(0, 0); }

// ---- elementwise / arithmetic ----
Var add(const Var& a, const Var& b);          // same shape
Var add_rowvec(const Var& a, const Var& b);   // [n x m] + [1 x m]
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // elementwise
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);  // log(1 + e^x), overflow-safe
Var tanh_(const Var& a);
Var relu(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var sqrt_(const Var& a, double floor = 0.0);  // sqrt(max(a, floor)); zero grad where floored
Var clamp(const Var& a, double lo, double hi);  // straight-through inside [lo, hi]

// ---- linear algebra / shape ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var row(const Var& a, int i);                          // [1 x m]
Var rows(const Var& a, int i, int n);                  // [n x m] block
Var concat_rows(const std::vector<Var>& parts);
Var reshape_rowmajor(const Var& a, int r, int c);      // row-major reinterpret
Var gather_rows(const Var& table, std::vector<int> ids);
Var softmax_rows(const Var& a);
Var sum(const Var& a);        // -> 1x1
Var mean(const Var& a);       // -> 1x1
Var mean_rows(const Var& a);  // column means -> [1 x m]
Var sum_cols(const Var& a);   // column sums  -> [1 x m]
Var max_rows(const Var& a);   // column maxes -> [1 x m], argmax backprop
Var rows_sqnorm(const Var& a);  // [n x 1] of squared row norms
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// 1-D convolution over rows: windows of `k` consecutive rows flattened
// (row-major) and multiplied by W [k*cols x f] -> [rows-k+1 x f].
Var conv1d_rows(const Var& x, const Var& w, int k);

void backward(const Var& root);  // root must be 1x1

// ---- parameters ----
class ParamSet {
public:
  Var add(const std::string& name, Mat init);
  Var get(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<Var> vars() const;
  void zero_grads();
  void set_requires_grad(bool on);
  std::uint64_t fingerprint() const;  // FNV over raw value bytes, order-sensitive
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& data);
  void copy_values_from(const ParamSet& other);  // shapes must match

private:
  std::vector<std::pair<std::string, Var>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

Mat glorot(int rows, int cols, Rng& rng);
Mat randn(int rows, int cols, double stddev, Rng& rng);

class Adam {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update using the accumulated grads, then zeroes them.
  void step(const std::vector<Var>& params);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

private:
  struct Slot { Mat m, v; };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<Node*, Slot> slots_;
};

// Gumbel(0,1) noise matrix, one draw per entry.
Mat gumbel_noise(int rows, int cols, Rng& rng);

}  // namespace seqattack::ad
