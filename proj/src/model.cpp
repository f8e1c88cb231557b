#include "isonet/model.hpp"

#include <sstream>

namespace isonet {

using ad::Var;

// ---------------------------------------------------------------------------
// Config

std::string to_string(Variant v) { return v == Variant::node ? "node" : "edge"; }
std::string to_string(Schedule s) { return s == Schedule::lazy ? "lazy" : "eager"; }

std::string to_string(Interaction i) {
  switch (i) {
    case Interaction::node_pair_partner: return "npp";
    case Interaction::node_partner_post: return "post";
    case Interaction::uonly: return "uonly";
    case Interaction::monly: return "monly";
  }
  return "?";
}

std::string to_string(EdgeUpdateReading r) {
  return r == EdgeUpdateReading::equation ? "equation" : "prose";
}

Variant parse_variant(const std::string& s) {
  if (s == "node") return Variant::node;
  if (s == "edge") return Variant::edge;
  throw ConfigError("variant", "expected node or edge, got '" + s + "'");
}

Schedule parse_schedule(const std::string& s) {
  if (s == "lazy" || s == "lazy-multi-round") return Schedule::lazy;
  if (s == "eager" || s == "eager-multi-layer") return Schedule::eager;
  throw ConfigError("schedule", "expected lazy or eager, got '" + s + "'");
}

Interaction parse_interaction(const std::string& s) {
  if (s == "npp" || s == "node-pair-partner") return Interaction::node_pair_partner;
  if (s == "post" || s == "node-partner-post") return Interaction::node_partner_post;
  if (s == "uonly") return Interaction::uonly;
  if (s == "monly") return Interaction::monly;
  throw ConfigError("interaction", "expected npp, post, uonly or monly, got '" + s + "'");
}

EdgeUpdateReading parse_edge_reading(const std::string& s) {
  if (s == "equation") return EdgeUpdateReading::equation;
  if (s == "prose") return EdgeUpdateReading::prose;
  throw ConfigError("edge_reading", "expected equation or prose, got '" + s + "'");
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("K", "must be >= 1");
  if (schedule == Schedule::lazy && rounds < 1) throw ConfigError("T", "must be >= 1");
  if (!(sinkhorn.tau > 0.0)) throw ConfigError("tau", "must be > 0");
  if (sinkhorn.iterations < 1) throw ConfigError("sinkhorn_iters", "must be >= 1");
  if (variant == Variant::edge && interaction != Interaction::node_pair_partner) {
    throw ConfigError("interaction", "the edge variant supports npp only");
  }
  if (edge_reading == EdgeUpdateReading::prose &&
      (variant != Variant::edge || schedule != Schedule::lazy)) {
    throw ConfigError("edge_reading", "prose reading applies to the lazy edge variant only");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", to_string(variant)},
          {"schedule", to_string(schedule)},
          {"interaction", to_string(interaction)},
          {"T", rounds},
          {"K", layers},
          {"tau", sinkhorn.tau},
          {"sinkhorn_iters", sinkhorn.iterations},
          {"noise", gumbel_noise},
          {"edge_reading", to_string(edge_reading)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("schedule")) c.schedule = parse_schedule(j.at("schedule").get<std::string>());
  if (j.contains("interaction")) {
    c.interaction = parse_interaction(j.at("interaction").get<std::string>());
  }
  if (j.contains("T")) c.rounds = j.at("T").get<int>();
  if (j.contains("K")) c.layers = j.at("K").get<int>();
  if (j.contains("tau")) c.sinkhorn.tau = j.at("tau").get<double>();
  if (j.contains("sinkhorn_iters")) c.sinkhorn.iterations = j.at("sinkhorn_iters").get<int>();
  if (j.contains("noise")) c.gumbel_noise = j.at("noise").get<bool>();
  if (j.contains("edge_reading")) {
    c.edge_reading = parse_edge_reading(j.at("edge_reading").get<std::string>());
  }
  return c;
}

ad::ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ad::ParamStore p;
  nn::add_linear(p, "encoder.node", 1, kNodeDim, rng);
  if (cfg.variant == Variant::node) {
    nn::add_lrl(p, "inter", 2 * kNodeDim, 2 * kNodeDim, kNodeDim, rng);
    nn::add_linear(p, "msg", 2 * kNodeDim + 1, kEdgeDim, rng);
    nn::add_gru(p, "comb", kEdgeDim, kNodeDim, rng);
    nn::add_lrl(p, "aligner", kNodeDim, kAlignDim, kAlignDim, rng);
  } else {
    nn::add_linear(p, "encoder.edge", 1, kEdgeDim, rng);
    nn::add_lrl(p, "inter", 2 * kEdgeDim, 2 * kEdgeDim, kEdgeDim, rng);
    nn::add_linear(p, "msg", 2 * kNodeDim + kEdgeDim, kEdgeDim, rng);
    nn::add_gru(p, "comb", kEdgeDim, kNodeDim, rng);
    nn::add_lrl(p, "aligner", kEdgeDim, kAlignDim, kAlignDim, rng);
  }
  return p;
}

ModelWeights::ModelWeights(const ad::BoundParams& p, const ModelConfig& cfg)
    : node_encoder(nn::bind_linear(p, "encoder.node")),
      inter(nn::bind_lrl(p, "inter")),
      msg(nn::bind_linear(p, "msg")),
      comb(nn::bind_gru(p, "comb")),
      aligner(nn::bind_lrl(p, "aligner")) {
  if (cfg.variant == Variant::edge) edge_encoder = nn::bind_linear(p, "encoder.edge");
}

GraphTensors::GraphTensors(ad::Tape& tape, const Graph& g)
    : num_nodes(g.num_nodes()), num_edges(g.num_edges()) {
  const int n = num_nodes, e = num_edges;
  Matrix nf(n, 1), ef(e, 1);
  Matrix s = Matrix::Zero(e, n), d = Matrix::Zero(e, n);
  for (int u = 0; u < n; ++u) nf(u, 0) = g.node_features()[u];
  for (int i = 0; i < e; ++i) {
    ef(i, 0) = g.edge_features()[i];
    s(i, g.edges()[i].u) = 1.0;
    d(i, g.edges()[i].v) = 1.0;
  }
  Matrix inc = (s + d).transpose();
  node_feat = tape.constant(std::move(nf));
  edge_feat = tape.constant(std::move(ef));
  src = tape.constant(std::move(s));
  dst = tape.constant(std::move(d));
  incidence_t = tape.constant(std::move(inc));
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

ad::Tape& tape_of(const GraphTensors& g) { return *g.node_feat.tape(); }

/// Sum over incident edges of per-edge messages: n x 20.
Var aggregate(const GraphTensors& g, Var per_edge) {
  if (g.num_edges == 0) return nn::zeros(tape_of(g), g.num_nodes, kEdgeDim);
  return ad::matmul(g.incidence_t, per_edge);
}

/// msg evaluated on both endpoint orders and summed, one row per edge.
Var node_messages(const ModelWeights& w, const GraphTensors& g, Var x) {
  Var xu = ad::matmul(g.src, x);
  Var xv = ad::matmul(g.dst, x);
  return nn::apply(w.msg, ad::concat_cols({xu, xv, g.edge_feat})) +
         nn::apply(w.msg, ad::concat_cols({xv, xu, g.edge_feat}));
}

Var edge_messages(const ModelWeights& w, const GraphTensors& g, Var h, Var z) {
  Var hu = ad::matmul(g.src, h);
  Var hv = ad::matmul(g.dst, h);
  return nn::apply(w.msg, ad::concat_cols({hu, hv, z})) +
         nn::apply(w.msg, ad::concat_cols({hv, hu, z}));
}

/// One node-variant layer given the partner signal `cross` (sum_u' P[u,u'] h_c(u')).
Var node_layer(const ModelWeights& w, const GraphTensors& g, Var h, Var cross,
               Interaction mode) {
  const bool has_edges = g.num_edges > 0;
  auto messages_of = [&](Var x) {
    return has_edges ? aggregate(g, node_messages(w, g, x))
                     : nn::zeros(tape_of(g), g.num_nodes, kEdgeDim);
  };
  switch (mode) {
    case Interaction::node_pair_partner: {
      Var z = nn::apply(w.inter, ad::concat_cols({h, cross}));
      return nn::apply(w.comb, z, messages_of(z));
    }
    case Interaction::uonly: {
      Var z = nn::apply(w.inter, ad::concat_cols({h, cross}));
      return nn::apply(w.comb, z, messages_of(h));
    }
    case Interaction::monly: {
      Var z = nn::apply(w.inter, ad::concat_cols({h, cross}));
      return nn::apply(w.comb, h, messages_of(z));
    }
    case Interaction::node_partner_post: {
      Var local = nn::apply(w.comb, h, messages_of(h));
      return nn::apply(w.inter, ad::concat_cols({local, cross}));
    }
  }
  throw std::logic_error("unhandled interaction mode");
}

struct EdgeState {
  Var h;  // n x 10
  Var m;  // E x 20
};

/// One edge-variant layer. `cross` is sum_e' S[e,e'] m_c(e') for the real
/// edges; `next_cross` is only read under the prose reading.
EdgeState edge_layer(const ModelWeights& w, const GraphTensors& g, EdgeState s,
                     Var cross, Var next_cross, EdgeUpdateReading reading) {
  if (g.num_edges == 0) {
    return {nn::apply(w.comb, s.h, nn::zeros(tape_of(g), g.num_nodes, kEdgeDim)), s.m};
  }
  Var z = nn::apply(w.inter, ad::concat_cols({s.m, cross}));
  Var h_next = nn::apply(w.comb, s.h, aggregate(g, edge_messages(w, g, s.h, z)));
  Var m_next = edge_messages(w, g, h_next, z);
  if (reading == EdgeUpdateReading::prose) {
    Var z_next = nn::apply(w.inter, ad::concat_cols({m_next, next_cross}));
    m_next = edge_messages(w, g, h_next, z_next);
  }
  return {h_next, m_next};
}

/// Zero-pads an E x 20 edge matrix to rows x 20.
Var pad_rows(ad::Tape& t, Var m, int rows) {
  if (m.rows() == rows) return m;
  if (m.rows() == 0) return nn::zeros(t, rows, m.cols());
  Matrix embed = Matrix::Zero(rows, m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) embed(i, i) = 1.0;
  return ad::matmul(t.constant(std::move(embed)), m);
}

/// Rows [0, rows) of align * other.
Var edge_cross(ad::Tape& t, Var align, Var other_padded, int rows) {
  if (rows == 0) return nn::zeros(t, 0, kEdgeDim);
  return ad::slice_rows(ad::matmul(align, other_padded), 0, rows);
}

void require(const ModelConfig& cfg, Variant v, Schedule s, const char* who) {
  cfg.validate();
  if (cfg.variant != v || cfg.schedule != s) {
    throw ConfigError("variant/schedule", std::string(who) + " called with " +
                                              to_string(cfg.variant) + "/" +
                                              to_string(cfg.schedule));
  }
}

std::mt19937_64* noise_if_enabled(const ModelConfig& cfg, std::mt19937_64* rng) {
  return cfg.gumbel_noise ? rng : nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------

Embeddings encode_init(const ModelWeights& w, const GraphTensors& g,
                       const ModelConfig& cfg) {
  Embeddings e;
  e.h = nn::apply(w.node_encoder, g.node_feat);
  if (cfg.variant == Variant::edge) {
    e.m = g.num_edges > 0 ? nn::apply(w.edge_encoder, g.edge_feat)
                          : nn::zeros(tape_of(g), 0, kEdgeDim);
  }
  return e;
}

std::vector<Embeddings> late_pass(const ModelWeights& w, const GraphTensors& g,
                                  const ModelConfig& cfg, int layers) {
  ad::Tape& t = tape_of(g);
  std::vector<Embeddings> out{encode_init(w, g, cfg)};
  for (int k = 0; k < layers; ++k) {
    const Embeddings& cur = out.back();
    if (cfg.variant == Variant::node) {
      out.push_back({node_layer(w, g, cur.h, nn::zeros(t, g.num_nodes, kNodeDim),
                                cfg.interaction),
                     {}});
    } else {
      Var zero = nn::zeros(t, g.num_edges, kEdgeDim);
      EdgeState s = edge_layer(w, g, {cur.h, cur.m}, zero, zero, cfg.edge_reading);
      out.push_back({s.h, s.m});
    }
  }
  return out;
}

ad::Var relevance_distance_node(Var hq, Var hc, Var p) {
  return ad::relu_gap_sum(hq, ad::matmul(p, hc));
}

ad::Var relevance_distance_edge(Var mq, Var mc, Var s) {
  return ad::relu_gap_sum(mq, ad::matmul(s, mc));
}

ForwardResult run_node_lazy(ad::Tape& tape, const ModelWeights& w,
                            const GraphPair& pair, const ModelConfig& cfg,
                            std::mt19937_64* noise) {
  require(cfg, Variant::node, Schedule::lazy, "run_node_lazy");
  GraphTensors gq(tape, pair.query), gc(tape, pair.corpus);
  const int n = pair.n_pad;
  ForwardResult res;
  ForwardTrace& tr = res.trace;

  std::vector<Var> prev_q, prev_c;  // H_{t,0..K-1} of the previous round
  Var p, hq, hc;
  for (int t = 0; t < cfg.rounds; ++t) {
    hq = encode_init(w, gq, cfg).h;
    hc = encode_init(w, gc, cfg).h;
    std::vector<Var> cur_q, cur_c;
    for (int k = 0; k < cfg.layers; ++k) {
      cur_q.push_back(hq);
      cur_c.push_back(hc);
      // Round 1 has no alignment yet: the partner signal is zero.
      Var xq = t == 0 ? nn::zeros(tape, n, kNodeDim) : ad::matmul(p, prev_c[k]);
      Var xc = t == 0 ? nn::zeros(tape, n, kNodeDim)
                      : ad::matmul(ad::transpose(p), prev_q[k]);
      Var nq = node_layer(w, gq, hq, xq, cfg.interaction);
      Var nc = node_layer(w, gc, hc, xc, cfg.interaction);
      hq = nq;
      hc = nc;
      ++tr.message_passing_layers;
      tr.query_node_history.push_back(hq.value());
    }
    p = node_aligner_refine(w.aligner, hq, hc, cfg.sinkhorn, noise_if_enabled(cfg, noise));
    ++tr.aligner_calls;
    tr.alignments.push_back(p.value());
    prev_q = std::move(cur_q);
    prev_c = std::move(cur_c);
  }
  res.distance = relevance_distance_node(hq, hc, p);
  tr.query_final = hq.value();
  tr.corpus_final = hc.value();
  tr.distance = res.distance.value()(0, 0);
  return res;
}

ForwardResult run_node_eager(ad::Tape& tape, const ModelWeights& w,
                             const GraphPair& pair, const ModelConfig& cfg,
                             std::mt19937_64* noise) {
  require(cfg, Variant::node, Schedule::eager, "run_node_eager");
  GraphTensors gq(tape, pair.query), gc(tape, pair.corpus);
  const int n = pair.n_pad;
  ForwardResult res;
  ForwardTrace& tr = res.trace;

  Var hq = encode_init(w, gq, cfg).h;
  Var hc = encode_init(w, gc, cfg).h;
  Var p;  // P_0 = 0
  for (int k = 0; k < cfg.layers; ++k) {
    Var xq = p.valid() ? ad::matmul(p, hc) : nn::zeros(tape, n, kNodeDim);
    Var xc = p.valid() ? ad::matmul(ad::transpose(p), hq) : nn::zeros(tape, n, kNodeDim);
    Var nq = node_layer(w, gq, hq, xq, cfg.interaction);
    Var nc = node_layer(w, gc, hc, xc, cfg.interaction);
    hq = nq;
    hc = nc;
    ++tr.message_passing_layers;
    tr.query_node_history.push_back(hq.value());
    p = node_aligner_refine(w.aligner, hq, hc, cfg.sinkhorn, noise_if_enabled(cfg, noise));
    ++tr.aligner_calls;
    tr.alignments.push_back(p.value());
  }
  res.distance = relevance_distance_node(hq, hc, p);
  tr.query_final = hq.value();
  tr.corpus_final = hc.value();
  tr.distance = res.distance.value()(0, 0);
  return res;
}

ForwardResult run_edge_lazy(ad::Tape& tape, const ModelWeights& w,
                            const GraphPair& pair, const ModelConfig& cfg,
                            std::mt19937_64* noise) {
  require(cfg, Variant::edge, Schedule::lazy, "run_edge_lazy");
  GraphTensors gq(tape, pair.query), gc(tape, pair.corpus);
  const int eq = gq.num_edges, ec = gc.num_edges, ep = pair.e_pad;
  ForwardResult res;
  ForwardTrace& tr = res.trace;

  // Padded M_{t,0..K} of the previous round, both sides.
  std::vector<Var> prev_q, prev_c;
  Var s, mq_pad, mc_pad;
  EdgeState q, c;
  for (int t = 0; t < cfg.rounds; ++t) {
    const Embeddings iq = encode_init(w, gq, cfg), ic = encode_init(w, gc, cfg);
    q = {iq.h, iq.m};
    c = {ic.h, ic.m};
    std::vector<Var> cur_q, cur_c;
    auto cross_q = [&](int layer) {
      return t == 0 ? nn::zeros(tape, eq, kEdgeDim) : edge_cross(tape, s, prev_c[layer], eq);
    };
    auto cross_c = [&](int layer) {
      return t == 0 ? nn::zeros(tape, ec, kEdgeDim)
                    : edge_cross(tape, ad::transpose(s), prev_q[layer], ec);
    };
    const bool prose = cfg.edge_reading == EdgeUpdateReading::prose;
    for (int k = 0; k < cfg.layers; ++k) {
      cur_q.push_back(pad_rows(tape, q.m, ep));
      cur_c.push_back(pad_rows(tape, c.m, ep));
      Var xq = cross_q(k), xc = cross_c(k);
      Var nxq = prose ? cross_q(k + 1) : xq;
      Var nxc = prose ? cross_c(k + 1) : xc;
      EdgeState nq = edge_layer(w, gq, q, xq, nxq, cfg.edge_reading);
      EdgeState nc = edge_layer(w, gc, c, xc, nxc, cfg.edge_reading);
      q = nq;
      c = nc;
      ++tr.message_passing_layers;
      tr.query_node_history.push_back(q.h.value());
    }
    mq_pad = pad_rows(tape, q.m, ep);
    mc_pad = pad_rows(tape, c.m, ep);
    cur_q.push_back(mq_pad);
    cur_c.push_back(mc_pad);
    s = edge_aligner_refine(w.aligner, mq_pad, mc_pad, cfg.sinkhorn,
                            noise_if_enabled(cfg, noise));
    ++tr.aligner_calls;
    tr.alignments.push_back(s.value());
    prev_q = std::move(cur_q);
    prev_c = std::move(cur_c);
  }
  res.distance = relevance_distance_edge(mq_pad, mc_pad, s);
  tr.query_final = mq_pad.value();
  tr.corpus_final = mc_pad.value();
  tr.distance = res.distance.value()(0, 0);
  return res;
}

ForwardResult run_edge_eager(ad::Tape& tape, const ModelWeights& w,
                             const GraphPair& pair, const ModelConfig& cfg,
                             std::mt19937_64* noise) {
  require(cfg, Variant::edge, Schedule::eager, "run_edge_eager");
  GraphTensors gq(tape, pair.query), gc(tape, pair.corpus);
  const int eq = gq.num_edges, ec = gc.num_edges, ep = pair.e_pad;
  ForwardResult res;
  ForwardTrace& tr = res.trace;

  const Embeddings iq = encode_init(w, gq, cfg), ic = encode_init(w, gc, cfg);
  EdgeState q{iq.h, iq.m}, c{ic.h, ic.m};
  Var s;  // S_0 = 0
  Var mq_pad = pad_rows(tape, q.m, ep), mc_pad = pad_rows(tape, c.m, ep);
  for (int k = 0; k < cfg.layers; ++k) {
    Var xq = s.valid() ? edge_cross(tape, s, mc_pad, eq) : nn::zeros(tape, eq, kEdgeDim);
    Var xc = s.valid() ? edge_cross(tape, ad::transpose(s), mq_pad, ec)
                       : nn::zeros(tape, ec, kEdgeDim);
    EdgeState nq = edge_layer(w, gq, q, xq, xq, cfg.edge_reading);
    EdgeState nc = edge_layer(w, gc, c, xc, xc, cfg.edge_reading);
    q = nq;
    c = nc;
    ++tr.message_passing_layers;
    tr.query_node_history.push_back(q.h.value());
    mq_pad = pad_rows(tape, q.m, ep);
    mc_pad = pad_rows(tape, c.m, ep);
    s = edge_aligner_refine(w.aligner, mq_pad, mc_pad, cfg.sinkhorn,
                            noise_if_enabled(cfg, noise));
    ++tr.aligner_calls;
    tr.alignments.push_back(s.value());
  }
  res.distance = relevance_distance_edge(mq_pad, mc_pad, s);
  tr.query_final = mq_pad.value();
  tr.corpus_final = mc_pad.value();
  tr.distance = res.distance.value()(0, 0);
  return res;
}

ForwardResult forward(ad::Tape& tape, const ad::BoundParams& params,
                      const GraphPair& pair, const ModelConfig& cfg,
                      std::mt19937_64* noise) {
  cfg.validate();
  ModelWeights w(params, cfg);
  if (cfg.variant == Variant::node) {
    return cfg.schedule == Schedule::lazy ? run_node_lazy(tape, w, pair, cfg, noise)
                                          : run_node_eager(tape, w, pair, cfg, noise);
  }
  return cfg.schedule == Schedule::lazy ? run_edge_lazy(tape, w, pair, cfg, noise)
                                        : run_edge_eager(tape, w, pair, cfg, noise);
}

ForwardTrace evaluate_pair(const ad::ParamStore& params, const GraphPair& pair,
                           const ModelConfig& cfg) {
  ad::Tape tape;
  ad::BoundParams bound(tape, params, /*trainable=*/false);
  return forward(tape, bound, pair, cfg, nullptr).trace;
}

}  // namespace isonet
