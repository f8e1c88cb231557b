#include "isonet/aligner.hpp"

#include <cmath>
#include <sstream>

namespace isonet {

using ad::Var;

Var sinkhorn(Var scores, const SinkhornOptions& opts, std::mt19937_64* noise) {
  if (scores.rows() != scores.cols()) {
    std::ostringstream os;
    os << "sinkhorn: input must be square, got " << scores.rows() << "x"
       << scores.cols();
    throw ad::ShapeError(os.str());
  }
  if (!(opts.tau > 0.0)) throw std::invalid_argument("sinkhorn: tau must be > 0");
  if (opts.iterations < 1) throw std::invalid_argument("sinkhorn: iterations must be >= 1");

  ad::Tape& t = *scores.tape();
  const Eigen::Index n = scores.rows();
  Var d = scores;
  if (noise != nullptr) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix g(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        double u = unif(*noise);
        while (u <= 0.0) u = unif(*noise);
        g(r, c) = -std::log(-std::log(u));
      }
    }
    d = d + t.constant(std::move(g));
  }
  if (n == 0) return d;
  const double shift = d.value().maxCoeff();
  d = d - t.constant(Matrix::Constant(n, n, shift));
  d = ad::exp(ad::scale(d, 1.0 / opts.tau));
  for (int i = 0; i < opts.iterations; ++i) {
    d = ad::row_normalize(ad::col_normalize(d));
  }
  return d;
}

Matrix sinkhorn(const Matrix& scores, const SinkhornOptions& opts,
                std::mt19937_64* noise) {
  ad::Tape t;
  return sinkhorn(t.constant(scores), opts, noise).value();
}

Var refine_alignment(const nn::Lrl& lrl, Var query, Var corpus,
                     const SinkhornOptions& opts, std::mt19937_64* noise) {
  if (query.rows() != corpus.rows()) {
    std::ostringstream os;
    os << "aligner: row counts differ (" << query.rows() << " vs "
       << corpus.rows() << "); pad both sides first";
    throw ad::ShapeError(os.str());
  }
  Var a = nn::apply(lrl, query);
  Var b = nn::apply(lrl, corpus);
  return sinkhorn(ad::matmul(a, ad::transpose(b)), opts, noise);
}

namespace {

void require_width(Var v, Eigen::Index width, const char* who) {
  if (v.cols() != width) {
    std::ostringstream os;
    os << who << ": expected " << width << " columns, got " << v.cols();
    throw ad::ShapeError(os.str());
  }
}

}  // namespace

Var node_aligner_refine(const nn::Lrl& lrl, Var hq, Var hc,
                        const SinkhornOptions& opts, std::mt19937_64* noise) {
  require_width(hq, lrl.first.w.rows(), "node aligner");
  require_width(hc, lrl.first.w.rows(), "node aligner");
  return refine_alignment(lrl, hq, hc, opts, noise);
}

Var edge_aligner_refine(const nn::Lrl& lrl, Var mq, Var mc,
                        const SinkhornOptions& opts, std::mt19937_64* noise) {
  require_width(mq, lrl.first.w.rows(), "edge aligner");
  require_width(mc, lrl.first.w.rows(), "edge aligner");
  return refine_alignment(lrl, mq, mc, opts, noise);
}

}  // namespace isonet
