#include "seqattack/cells.hpp"

#include <cmath>

namespace seqattack {

using namespace ad;

GruCell GruCell::create(ParamSet& ps, const std::string& prefix, int in_dim, int hidden,
                        Rng& rng) {
  GruCell c;
  c.in_dim = in_dim;
  c.hidden = hidden;
  c.Wz = ps.add(prefix + ".Wz", glorot(in_dim, hidden, rng));
  c.Uz = ps.add(prefix + ".Uz", glorot(hidden, hidden, rng));
  c.bz = ps.add(prefix + ".bz", Mat::Zero(1, hidden));
  c.Wr = ps.add(prefix + ".Wr", glorot(in_dim, hidden, rng));
  c.Ur = ps.add(prefix + ".Ur", glorot(hidden, hidden, rng));
  c.br = ps.add(prefix + ".br", Mat::Zero(1, hidden));
  c.Wh = ps.add(prefix + ".Wh", glorot(in_dim, hidden, rng));
  c.Uh = ps.add(prefix + ".Uh", glorot(hidden, hidden, rng));
  c.bh = ps.add(prefix + ".bh", Mat::Zero(1, hidden));
  return c;
}

Var GruCell::initial_state() const { return constant(Mat::Zero(1, hidden)); }

Var GruCell::step(const Var& x, const Var& h) const {
  Var z = sigmoid(add_rowvec(add(matmul(x, Wz), matmul(h, Uz)), bz));
  Var r = sigmoid(add_rowvec(add(matmul(x, Wr), matmul(h, Ur)), br));
  Var hh = tanh_(add_rowvec(add(matmul(x, Wh), matmul(mul(r, h), Uh)), bh));
  Var one_minus_z = add_scalar(neg(z), 1.0);
  return add(mul(one_minus_z, h), mul(z, hh));
}

RelMemCell RelMemCell::create(ParamSet& ps, const std::string& prefix, int in_dim, int slots,
                              int heads, int head_dim, Rng& rng) {
  RelMemCell c;
  c.in_dim = in_dim;
  c.slots = slots;
  c.heads = heads;
  c.head_dim = head_dim;
  int md = c.mem_dim();
  c.Wx = ps.add(prefix + ".Wx", glorot(in_dim, md, rng));
  c.Wq = ps.add(prefix + ".Wq", glorot(md, md, rng));
  c.Wk = ps.add(prefix + ".Wk", glorot(md, md, rng));
  c.Wv = ps.add(prefix + ".Wv", glorot(md, md, rng));
  c.W1 = ps.add(prefix + ".W1", glorot(md, md, rng));
  c.b1 = ps.add(prefix + ".b1", Mat::Zero(1, md));
  c.W2 = ps.add(prefix + ".W2", glorot(md, md, rng));
  c.b2 = ps.add(prefix + ".b2", Mat::Zero(1, md));
  c.Wi = ps.add(prefix + ".Wi", glorot(md, md, rng));
  c.Ui = ps.add(prefix + ".Ui", glorot(md, md, rng));
  c.bi = ps.add(prefix + ".bi", Mat::Zero(1, md));
  c.Wf = ps.add(prefix + ".Wf", glorot(md, md, rng));
  c.Uf = ps.add(prefix + ".Uf", glorot(md, md, rng));
  c.bf = ps.add(prefix + ".bf", Mat::Constant(1, md, 1.0));  // forget bias starts open
  c.M0 = ps.add(prefix + ".M0", randn(slots, md, 0.1, rng));
  return c;
}

std::pair<Var, Var> RelMemCell::step(const Var& x, const Var& memory) const {
  int md = mem_dim();
  Var xp = matmul(x, Wx);                              // [1 x md]
  Var stacked = concat_rows({memory, xp});             // [(slots+1) x md]

  Var q_all = matmul(memory, Wq);                      // [slots x md]
  Var k_all = matmul(stacked, Wk);                     // [(slots+1) x md]
  Var v_all = matmul(stacked, Wv);
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Var> slot_outputs;
  slot_outputs.reserve(static_cast<std::size_t>(slots));
  for (int s = 0; s < slots; ++s) {
    std::vector<Var> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    Var q_row = row(q_all, s);
    for (int h = 0; h < heads; ++h) {
      // Column blocks per head via reshape-free slicing on the transpose.
      Var q = rows(transpose(q_row), h * head_dim, head_dim);        // [hd x 1]
      Var k = rows(transpose(k_all), h * head_dim, head_dim);        // [hd x (slots+1)]
      Var v = rows(transpose(v_all), h * head_dim, head_dim);        // [hd x (slots+1)]
      Var att = softmax_rows(scale(matmul(transpose(q), k), inv_scale));  // [1 x (slots+1)]
      head_outputs.push_back(matmul(att, transpose(v)));             // [1 x hd]
    }
    // Concat heads back to [1 x md].
    Var attended = transpose(concat_rows([&] {
      std::vector<Var> cols;
      for (auto& ho : head_outputs) cols.push_back(transpose(ho));
      return cols;
    }()));
    slot_outputs.push_back(attended);
  }
  Var attended_mem = concat_rows(slot_outputs);        // [slots x md]

  Var residual = add(memory, attended_mem);
  Var mlp = add_rowvec(matmul(relu(add_rowvec(matmul(residual, W1), b1)), W2), b2);
  Var candidate = add(residual, mlp);

  Var xp_rows = concat_rows(std::vector<Var>(static_cast<std::size_t>(slots), xp));
  Var gate_i = sigmoid(add_rowvec(add(matmul(xp_rows, Wi), matmul(memory, Ui)), bi));
  Var gate_f = sigmoid(add_rowvec(add(matmul(xp_rows, Wf), matmul(memory, Uf)), bf));
  Var next_mem = add(mul(gate_f, memory), mul(gate_i, tanh_(candidate)));

  Var out = reshape_rowmajor(next_mem, 1, slots * md);
  return {out, next_mem};
}

}  // namespace seqattack
