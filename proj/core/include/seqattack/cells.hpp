#pragma once

// Recurrent cores shared by the classifiers and the generator.

#include <string>

#include "seqattack/autodiff.hpp"

namespace seqattack {

struct GruCell {
  int in_dim = 0, hidden = 0;
  ad::Var Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;

  static GruCell create(ad::ParamSet& ps, const std::string& prefix, int in_dim, int hidden,
                        Rng& rng);
  ad::Var initial_state() const;  // zero [1 x hidden]
  ad::Var step(const ad::Var& x, const ad::Var& h) const;
};

// Relational-memory recurrent core: multi-head attention from memory slots over
// [memory; input], residual MLP, and LSTM-style input/forget gating. Output is
// the flattened memory.
struct RelMemCell {
  int in_dim = 0, slots = 1, heads = 2, head_dim = 32;
  int mem_dim() const { return heads * head_dim; }
  int out_dim() const { return slots * mem_dim(); }

  ad::Var Wx;              // [in_dim x mem_dim] input projection
  ad::Var Wq, Wk, Wv;      // [mem_dim x mem_dim], split across heads
  ad::Var W1, b1, W2, b2;  // residual MLP
  ad::Var Wi, Ui, bi, Wf, Uf, bf;  // gates
  ad::Var M0;              // trainable initial memory [slots x mem_dim]

  static RelMemCell create(ad::ParamSet& ps, const std::string& prefix, int in_dim, int slots,
                           int heads, int head_dim, Rng& rng);
  ad::Var initial_state() const { return M0; }
  // Returns {output [1 x out_dim], next memory [slots x mem_dim]}.
  std::pair<ad::Var, ad::Var> step(const ad::Var& x, const ad::Var& memory) const;
};

// Uniform interface over the two cores: state is a single Var.
struct RecurrentCore {
  enum class Kind { Gru, RelMem } kind = Kind::Gru;
  GruCell gru;
  RelMemCell relmem;

  int out_dim() const {
    return kind == Kind::Gru ? gru.hidden : relmem.out_dim();
  }
  ad::Var initial_state() const {
    return kind == Kind::Gru ? gru.initial_state() : relmem.initial_state();
  }
  std::pair<ad::Var, ad::Var> step(const ad::Var& x, const ad::Var& state) const {
    if (kind == Kind::Gru) {
      ad::Var h = gru.step(x, state);
      return {h, h};
    }
    return relmem.step(x, state);
  }
};

}  // namespace seqattack
