#pragma once

#include <random>

#include "isonet/autodiff.hpp"
#include "isonet/nn.hpp"

namespace isonet {

struct SinkhornOptions {
  double tau = 0.1;
  int iterations = 20;
};

/// exp(D / tau) followed by `iterations` rounds of column then row
/// normalisation, so the result always ends on a row normalisation.
///
/// The global maximum of D is subtracted first; it cancels exactly in every
/// normalisation and is treated as a constant. When `noise` is given, standard
/// Gumbel draws are added to D before the division by tau.
ad::Var sinkhorn(ad::Var scores, const SinkhornOptions& opts,
                 std::mt19937_64* noise = nullptr);

/// Value-only convenience wrapper.
Matrix sinkhorn(const Matrix& scores, const SinkhornOptions& opts,
                std::mt19937_64* noise = nullptr);

/// Doubly stochastic alignment from two padded embedding matrices:
/// Sinkhorn(LRL(q) LRL(c)^T). The same LRL is applied to both sides.
ad::Var refine_alignment(const nn::Lrl& lrl, ad::Var query, ad::Var corpus,
                         const SinkhornOptions& opts,
                         std::mt19937_64* noise = nullptr);

/// Node aligner: n x 10 embeddings on both sides.
ad::Var node_aligner_refine(const nn::Lrl& lrl, ad::Var hq, ad::Var hc,
                            const SinkhornOptions& opts,
                            std::mt19937_64* noise = nullptr);

/// Edge aligner: e x 20 zero-padded edge embeddings on both sides.
ad::Var edge_aligner_refine(const nn::Lrl& lrl, ad::Var mq, ad::Var mc,
                            const SinkhornOptions& opts,
                            std::mt19937_64* noise = nullptr);

}  // namespace isonet
