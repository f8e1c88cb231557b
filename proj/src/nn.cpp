#include "isonet/nn.hpp"

namespace isonet::nn {

using ad::Var;

void add_linear(ad::ParamStore& store, const std::string& prefix, int in, int out,
                std::mt19937_64& rng) {
  store.add_uniform(prefix + ".w", in, out, in, rng);
  store.add_uniform(prefix + ".b", 1, out, in, rng);
}

void add_lrl(ad::ParamStore& store, const std::string& prefix, int in, int hidden,
             int out, std::mt19937_64& rng) {
  add_linear(store, prefix + ".l1", in, hidden, rng);
  add_linear(store, prefix + ".l2", hidden, out, rng);
}

void add_gru(ad::ParamStore& store, const std::string& prefix, int input,
             int hidden, std::mt19937_64& rng) {
  for (const char* gate : {"ir", "iz", "in"}) {
    store.add_uniform(prefix + "." + gate + ".w", input, hidden, input, rng);
    store.add_uniform(prefix + "." + gate + ".b", 1, hidden, input, rng);
  }
  for (const char* gate : {"hr", "hz", "hn"}) {
    store.add_uniform(prefix + "." + gate + ".w", hidden, hidden, hidden, rng);
    store.add_uniform(prefix + "." + gate + ".b", 1, hidden, hidden, rng);
  }
}

Linear bind_linear(const ad::BoundParams& p, const std::string& prefix) {
  return {p[prefix + ".w"], p[prefix + ".b"]};
}

Lrl bind_lrl(const ad::BoundParams& p, const std::string& prefix) {
  return {bind_linear(p, prefix + ".l1"), bind_linear(p, prefix + ".l2")};
}

Gru bind_gru(const ad::BoundParams& p, const std::string& prefix) {
  return {bind_linear(p, prefix + ".ir"), bind_linear(p, prefix + ".iz"),
          bind_linear(p, prefix + ".in"), bind_linear(p, prefix + ".hr"),
          bind_linear(p, prefix + ".hz"), bind_linear(p, prefix + ".hn")};
}

Var zeros(ad::Tape& tape, Eigen::Index rows, Eigen::Index cols) {
  return tape.constant(Matrix::Zero(rows, cols));
}

Var apply(const Linear& l, Var x) {
  ad::Tape& t = *x.tape();
  // Bias broadcast as ones(n,1) * b keeps to the primitive set.
  Var ones = t.constant(Matrix::Ones(x.rows(), 1));
  return ad::matmul(x, l.w) + ad::matmul(ones, l.b);
}

Var apply(const Lrl& l, Var x) {
  return apply(l.second, ad::relu(apply(l.first, x)));
}

Var apply(const Gru& g, Var hidden, Var input) {
  ad::Tape& t = *hidden.tape();
  Var r = ad::sigmoid(apply(g.input_reset, input) + apply(g.hidden_reset, hidden));
  Var u = ad::sigmoid(apply(g.input_update, input) + apply(g.hidden_update, hidden));
  Var n = ad::tanh(apply(g.input_candidate, input) +
                   ad::mul(r, apply(g.hidden_candidate, hidden)));
  Var ones = t.constant(Matrix::Ones(u.rows(), u.cols()));
  return ad::mul(ones - u, n) + ad::mul(u, hidden);
}

}  // namespace isonet::nn
