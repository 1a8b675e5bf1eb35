#include "seqattack/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace seqattack::ad {

namespace {

Var make_node(Mat value, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) { n->requires_grad = true; break; }
  }
  if (n->requires_grad) n->backward_fn = std::move(back);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw ContractError(std::string(op) + ": shape mismatch " +
                        std::to_string(a->value.rows()) + "x" + std::to_string(a->value.cols()) +
                        " vs " + std::to_string(b->value.rows()) + "x" +
                        std::to_string(b->value.cols()));
}

}  // namespace

Var constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var param(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_node(a->value + b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad() += n.grad;
  });
}

Var add_rowvec(const Var& a, const Var& b) {
  if (b->value.rows() != 1 || b->value.cols() != a->value.cols())
    throw ContractError("add_rowvec: bias must be [1 x cols(a)]");
  return make_node(a->value.rowwise() + b->value.row(0), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad() += n.grad;
    if (n.parents[1]->requires_grad)
      n.parents[1]->ensure_grad() += n.grad.colwise().sum();
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_node(a->value - b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad() -= n.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_node(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad() += n.grad.cwiseProduct(n.parents[1]->value);
    if (n.parents[1]->requires_grad)
      n.parents[1]->ensure_grad() += n.grad.cwiseProduct(n.parents[0]->value);
  });
}

Var scale(const Var& a, double c) {
  return make_node(a->value * c, {a}, [c](Node& n) {
    n.parents[0]->ensure_grad() += n.grad * c;
  });
}

Var add_scalar(const Var& a, double c) {
  return make_node(a->value.array() + c, {a}, [](Node& n) {
    n.parents[0]->ensure_grad() += n.grad;
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sigmoid(const Var& a) {
  Mat s = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  return make_node(std::move(s), {a}, [](Node& n) {
    const Mat& s = n.value;
    n.parents[0]->ensure_grad() +=
        n.grad.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
  });
}

Var tanh_(const Var& a) {
  Mat t = a->value.array().tanh().matrix();
  return make_node(std::move(t), {a}, [](Node& n) {
    n.parents[0]->ensure_grad() +=
        n.grad.cwiseProduct((1.0 - n.value.array().square()).matrix());
  });
}

Var softplus(const Var& a) {
  Mat y = (a->value.array().max(0.0) + (-a->value.array().abs()).exp().log1p()).matrix();
  return make_node(std::move(y), {a}, [](Node& n) {
    Mat s = (1.0 / (1.0 + (-n.parents[0]->value.array()).exp())).matrix();
    n.parents[0]->ensure_grad() += n.grad.cwiseProduct(s);
  });
}

Var relu(const Var& a) {
  return make_node(a->value.cwiseMax(0.0), {a}, [](Node& n) {
    Mat mask = (n.parents[0]->value.array() > 0.0).cast<double>().matrix();
    n.parents[0]->ensure_grad() += n.grad.cwiseProduct(mask);
  });
}

Var exp_(const Var& a) {
  return make_node(a->value.array().exp().matrix(), {a}, [](Node& n) {
    n.parents[0]->ensure_grad() += n.grad.cwiseProduct(n.value);
  });
}

Var log_(const Var& a) {
  return make_node(a->value.array().log().matrix(), {a}, [](Node& n) {
    n.parents[0]->ensure_grad() +=
        n.grad.cwiseProduct(n.parents[0]->value.cwiseInverse());
  });
}

Var sqrt_(const Var& a, double floor) {
  Mat y = a->value.cwiseMax(floor).cwiseSqrt();
  return make_node(std::move(y), {a}, [floor](Node& n) {
    Mat mask = (n.parents[0]->value.array() >= floor).cast<double>().matrix();
    Mat d = (0.5 * n.value.cwiseMax(1e-300).cwiseInverse().array()).matrix();
    n.parents[0]->ensure_grad() += n.grad.cwiseProduct(d).cwiseProduct(mask);
  });
}

Var clamp(const Var& a, double lo, double hi) {
  return make_node(a->value.cwiseMax(lo).cwiseMin(hi), {a}, [lo, hi](Node& n) {
    Mat mask = ((n.parents[0]->value.array() >= lo) && (n.parents[0]->value.array() <= hi))
                   .cast<double>().matrix();
    n.parents[0]->ensure_grad() += n.grad.cwiseProduct(mask);
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.rows())
    throw ContractError("matmul: inner dims differ (" + std::to_string(a->value.cols()) +
                        " vs " + std::to_string(b->value.rows()) + ")");
  return make_node(a->value * b->value, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->ensure_grad() += n.grad * n.parents[1]->value.transpose();
    if (n.parents[1]->requires_grad)
      n.parents[1]->ensure_grad() += n.parents[0]->value.transpose() * n.grad;
  });
}

Var transpose(const Var& a) {
  return make_node(a->value.transpose(), {a}, [](Node& n) {
    n.parents[0]->ensure_grad() += n.grad.transpose();
  });
}

Var row(const Var& a, int i) {
  if (i < 0 || i >= a->value.rows()) throw ContractError("row: index out of range");
  return make_node(a->value.row(i), {a}, [i](Node& n) {
    n.parents[0]->ensure_grad().row(i) += n.grad.row(0);
  });
}

Var rows(const Var& a, int i, int k) {
  if (i < 0 || k < 0 || i + k > a->value.rows()) throw ContractError("rows: block out of range");
  return make_node(a->value.middleRows(i, k), {a}, [i, k](Node& n) {
    n.parents[0]->ensure_grad().middleRows(i, k) += n.grad;
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty list");
  Eigen::Index cols = parts[0]->value.cols(), total = 0;
  for (const auto& p : parts) {
    if (p->value.cols() != cols) throw ContractError("concat_rows: column mismatch");
    total += p->value.rows();
  }
  Mat v(total, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p->value.rows()) = p->value;
    at += p->value.rows();
  }
  return make_node(std::move(v), parts, [](Node& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) p->ensure_grad() += n.grad.middleRows(at, p->value.rows());
      at += p->value.rows();
    }
  });
}

Var reshape_rowmajor(const Var& a, int r, int c) {
  if (r * c != a->value.size()) throw ContractError("reshape: element count mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm = a->value;
  Eigen::Map<RowMajor> mapped(rm.data(), r, c);
  Mat v = mapped;
  return make_node(std::move(v), {a}, [](Node& n) {
    RowMajor gm = n.grad;
    Eigen::Map<RowMajor> back(gm.data(), n.parents[0]->value.rows(), n.parents[0]->value.cols());
    n.parents[0]->ensure_grad() += Mat(back);
  });
}

Var gather_rows(const Var& table, std::vector<int> ids) {
  Mat v(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= table->value.rows())
      throw ContractError("gather_rows: id " + std::to_string(ids[k]) + " out of range");
    v.row(static_cast<Eigen::Index>(k)) = table->value.row(ids[k]);
  }
  return make_node(std::move(v), {table}, [ids = std::move(ids)](Node& n) {
    Mat& g = n.parents[0]->ensure_grad();
    for (std::size_t k = 0; k < ids.size(); ++k)
      g.row(ids[k]) += n.grad.row(static_cast<Eigen::Index>(k));
  });
}

Var softmax_rows(const Var& a) {
  Mat s(a->value.rows(), a->value.cols());
  for (Eigen::Index i = 0; i < a->value.rows(); ++i) {
    Eigen::RowVectorXd r = a->value.row(i);
    double m = r.maxCoeff();
    Eigen::RowVectorXd e = (r.array() - m).exp();
    s.row(i) = e / e.sum();
  }
  return make_node(std::move(s), {a}, [](Node& n) {
    Mat& g = n.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      Eigen::RowVectorXd s = n.value.row(i);
      Eigen::RowVectorXd dy = n.grad.row(i);
      double dot = dy.cwiseProduct(s).sum();
      g.row(i) += (s.array() * (dy.array() - dot)).matrix();
    }
  });
}

Var sum(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a->value.sum();
  return make_node(std::move(v), {a}, [](Node& n) {
    n.parents[0]->ensure_grad().array() += n.grad(0, 0);
  });
}

Var mean(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a->value.mean();
  return make_node(std::move(v), {a}, [](Node& n) {
    n.parents[0]->ensure_grad().array() +=
        n.grad(0, 0) / static_cast<double>(n.parents[0]->value.size());
  });
}

Var mean_rows(const Var& a) {
  Mat v = a->value.colwise().mean();
  return make_node(std::move(v), {a}, [](Node& n) {
    double inv = 1.0 / static_cast<double>(n.parents[0]->value.rows());
    n.parents[0]->ensure_grad() += (Mat::Ones(n.parents[0]->value.rows(), 1) * n.grad) * inv;
  });
}

Var sum_cols(const Var& a) {
  Mat v = a->value.colwise().sum();
  return make_node(std::move(v), {a}, [](Node& n) {
    n.parents[0]->ensure_grad() += Mat::Ones(n.parents[0]->value.rows(), 1) * n.grad;
  });
}

Var max_rows(const Var& a) {
  Eigen::Index rows = a->value.rows(), cols = a->value.cols();
  Mat v(1, cols);
  std::vector<int> argmax(static_cast<std::size_t>(cols));
  for (Eigen::Index j = 0; j < cols; ++j) {
    Eigen::Index best = 0;
    a->value.col(j).maxCoeff(&best);
    argmax[static_cast<std::size_t>(j)] = static_cast<int>(best);
    v(0, j) = a->value(best, j);
  }
  (void)rows;
  return make_node(std::move(v), {a}, [argmax = std::move(argmax)](Node& n) {
    Mat& g = n.parents[0]->ensure_grad();
    for (Eigen::Index j = 0; j < n.value.cols(); ++j)
      g(argmax[static_cast<std::size_t>(j)], j) += n.grad(0, j);
  });
}

Var rows_sqnorm(const Var& a) {
  Mat v = a->value.rowwise().squaredNorm();
  return make_node(std::move(v), {a}, [](Node& n) {
    Mat& g = n.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < n.parents[0]->value.rows(); ++i)
      g.row(i) += 2.0 * n.grad(i, 0) * n.parents[0]->value.row(i);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (gamma->value.rows() != 1 || gamma->value.cols() != x->value.cols() ||
      beta->value.rows() != 1 || beta->value.cols() != x->value.cols())
    throw ContractError("layer_norm: gamma/beta must be [1 x cols(x)]");
  Eigen::Index rows = x->value.rows(), cols = x->value.cols();
  Mat xhat(rows, cols), y(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mu = x->value.row(i).mean();
    double var = (x->value.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x->value.row(i).array() - mu) * inv_std(i);
    y.row(i) = xhat.row(i).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
  }
  auto n = make_node(std::move(y), {x, gamma, beta},
                     [xhat, inv_std](Node& n) {
    Eigen::Index rows = xhat.rows(), cols = xhat.cols();
    const Var& x = n.parents[0];
    const Var& gamma = n.parents[1];
    const Var& beta = n.parents[2];
    if (gamma->requires_grad)
      gamma->ensure_grad() += n.grad.cwiseProduct(xhat).colwise().sum();
    if (beta->requires_grad) beta->ensure_grad() += n.grad.colwise().sum();
    if (x->requires_grad) {
      Mat& gx = x->ensure_grad();
      for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::RowVectorXd g = n.grad.row(i).cwiseProduct(gamma->value.row(0));
        double mg = g.mean();
        double mgx = g.cwiseProduct(xhat.row(i)).mean();
        gx.row(i) += inv_std(i) * (g.array() - mg - xhat.row(i).array() * mgx).matrix();
      }
    }
    (void)beta; (void)cols;
  });
  return n;
}

Var conv1d_rows(const Var& x, const Var& w, int k) {
  Eigen::Index rows = x->value.rows(), cols = x->value.cols();
  if (k < 1 || k > rows) throw ContractError("conv1d_rows: bad kernel size");
  if (w->value.rows() != static_cast<Eigen::Index>(k) * cols)
    throw ContractError("conv1d_rows: weight rows must be k*cols(x)");
  Eigen::Index out_rows = rows - k + 1;
  Mat windows(out_rows, static_cast<Eigen::Index>(k) * cols);
  for (Eigen::Index j = 0; j < out_rows; ++j)
    for (int i = 0; i < k; ++i)
      windows.block(j, static_cast<Eigen::Index>(i) * cols, 1, cols) = x->value.row(j + i);
  Mat y = windows * w->value;
  return make_node(std::move(y), {x, w}, [windows, k](Node& n) {
    const Var& x = n.parents[0];
    const Var& w = n.parents[1];
    Eigen::Index cols = x->value.cols(), out_rows = n.value.rows();
    if (w->requires_grad) w->ensure_grad() += windows.transpose() * n.grad;
    if (x->requires_grad) {
      Mat dwin = n.grad * w->value.transpose();  // [out_rows x k*cols]
      Mat& gx = x->ensure_grad();
      for (Eigen::Index j = 0; j < out_rows; ++j)
        for (int i = 0; i < k; ++i)
          gx.row(j + i) += dwin.block(j, static_cast<Eigen::Index>(i) * cols, 1, cols);
    }
  });
}

void backward(const Var& root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw ContractError("backward: root must be a scalar node");
  if (!root->requires_grad) return;

  // Iterative post-order DFS; creation order is not tracked, so sort explicitly.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Var ParamSet::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw ContractError("ParamSet: duplicate name " + name);
  auto v = param(std::move(init));
  index_[name] = items_.size();
  items_.emplace_back(name, v);
  return v;
}

Var ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamSet: unknown name " + name);
  return items_[it->second].second;
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [_, v] : items_) out.push_back(v);
  return out;
}

void ParamSet::zero_grads() {
  for (auto& [_, v] : items_)
    if (v->grad.size() != 0) v->grad.setZero();
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& [_, v] : items_) v->requires_grad = on;
}

std::uint64_t ParamSet::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, v] : items_) {
    h = fnv1a(name, h);
    h = fnv1a(v->value.data(), sizeof(double) * static_cast<std::size_t>(v->value.size()), h);
  }
  return h;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  for (const auto& [_, v] : items_)
    out.insert(out.end(), v->value.data(), v->value.data() + v->value.size());
  return out;
}

void ParamSet::unflatten(const std::vector<double>& data) {
  std::size_t at = 0;
  for (auto& [_, v] : items_) {
    auto n = static_cast<std::size_t>(v->value.size());
    if (at + n > data.size()) throw ContractError("ParamSet::unflatten: blob too short");
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(at),
              data.begin() + static_cast<std::ptrdiff_t>(at + n), v->value.data());
    at += n;
  }
  if (at != data.size()) throw ContractError("ParamSet::unflatten: blob size mismatch");
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.items_.size() != items_.size())
    throw ContractError("ParamSet::copy_values_from: size mismatch");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].second->value.rows() != other.items_[i].second->value.rows() ||
        items_[i].second->value.cols() != other.items_[i].second->value.cols())
      throw ContractError("ParamSet::copy_values_from: shape mismatch at " + items_[i].first);
    items_[i].second->value = other.items_[i].second->value;
  }
}

Mat glorot(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  return m;
}

Mat randn(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  return m;
}

void Adam::step(const std::vector<Var>& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& p : params) {
    if (p->grad.size() == 0) continue;  // never touched by backward
    auto& slot = slots_[p.get()];
    if (slot.m.size() == 0) {
      slot.m = Mat::Zero(p->value.rows(), p->value.cols());
      slot.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    slot.m = beta1_ * slot.m + (1.0 - beta1_) * p->grad;
    slot.v = beta2_ * slot.v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    Mat mhat = slot.m / bc1;
    Mat vhat = slot.v / bc2;
    p->value -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    p->grad.setZero();
  }
}

Mat gumbel_noise(int rows, int cols, Rng& rng) {
  std::uniform_real_distribution<double> dist(std::numeric_limits<double>::min(), 1.0);
  Mat g(rows, cols);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      g(i, j) = -std::log(-std::log(dist(rng)));
  return g;
}

}  // namespace seqattack::ad
