#pragma once

// Small layer vocabulary on top of the tape: Linear, LRL (linear-ReLU-linear)
// and a GRU cell. Rows are samples; a Linear(a, b) stores w as a x b.

#include <random>
#include <string>

#include "isonet/autodiff.hpp"
#include "isonet/params.hpp"

namespace isonet::nn {

struct Linear {
  ad::Var w;
  ad::Var b;
};

struct Lrl {
  Linear first;
  Linear second;
};

/// Gate layout follows the usual GRU cell: reset r, update u, candidate n.
struct Gru {
  Linear input_reset, input_update, input_candidate;
  Linear hidden_reset, hidden_update, hidden_candidate;
};

void add_linear(ad::ParamStore& store, const std::string& prefix, int in, int out,
                std::mt19937_64& rng);
void add_lrl(ad::ParamStore& store, const std::string& prefix, int in, int hidden,
             int out, std::mt19937_64& rng);
void add_gru(ad::ParamStore& store, const std::string& prefix, int input,
             int hidden, std::mt19937_64& rng);

Linear bind_linear(const ad::BoundParams& p, const std::string& prefix);
Lrl bind_lrl(const ad::BoundParams& p, const std::string& prefix);
Gru bind_gru(const ad::BoundParams& p, const std::string& prefix);

ad::Var apply(const Linear& l, ad::Var x);
ad::Var apply(const Lrl& l, ad::Var x);
/// One GRU step; `hidden` is the state being updated, `input` the message.
ad::Var apply(const Gru& g, ad::Var hidden, ad::Var input);

ad::Var zeros(ad::Tape& tape, Eigen::Index rows, Eigen::Index cols);

}  // namespace isonet::nn
