#include "docnmt/snmt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docnmt/errors.hpp"

namespace docnmt {

Var maybe_dropout(Var x, double rate, const RunMode& mode) {
  if (!mode.training() || rate <= 0.0) return x;
  return ad::dropout(x, rate, *mode.rng);
}

NmtParams NmtParams::create(ParamSet& ps, const ModelDims& d, std::mt19937_64& rng) {
  if (d.src_vocab <= kEndId || d.trg_vocab <= kEndId) throw UsageError("vocabularies must include the reserved tokens");
  if (d.decoder_layers < 1 || d.decoder_layers > 2) throw UsageError("decoder_layers must be 1 or 2");
  NmtParams p;
  p.dims = d;
  const std::size_t H = d.hidden, E = d.embed, A = d.align, V = d.trg_vocab;
  p.src_embed = EmbeddingTable::create(ps, "nmt.E_S", d.src_vocab, E, rng);
  p.trg_embed = EmbeddingTable::create(ps, "nmt.E_T", V, E, rng);
  p.enc_fwd.gru = GruParams::create(ps, "nmt.enc_fwd", E, H, rng);
  p.enc_bwd.gru = GruParams::create(ps, "nmt.enc_bwd", E, H, rng);
  p.init = AffineParams::create(ps, "nmt.init", H, H, rng);
  p.att_ann = ps.add_uniform("nmt.att.W_ae", {A, 2 * H}, rng);
  p.att_state = ps.add_uniform("nmt.att.W_at", {A, H}, rng);
  p.att_v = ps.add_uniform("nmt.att.v", {A}, rng);
  p.w_s = ps.add_uniform("nmt.dec.W_s", {H, H}, rng);
  p.w_sj = ps.add_uniform("nmt.dec.W_sj", {H, E}, rng);
  p.w_sc = ps.add_uniform("nmt.dec.W_sc", {H, 2 * H}, rng);
  if (d.decoder_layers == 2) p.layer2 = GruParams::create(ps, "nmt.dec.layer2", H, H, rng);
  p.w_rc = ps.add_uniform("nmt.dec.W_rc", {H, 2 * H}, rng);
  p.w_rj = ps.add_uniform("nmt.dec.W_rj", {H, E}, rng);
  p.w_y = ps.add_uniform("nmt.out.W_y", {V, H}, rng);
  p.b_r = ps.add_uniform("nmt.out.b_r", {V}, rng);
  p.w_sm = ps.add_zeros("mem.W_sm", {H, d.src_cell_dim()});
  p.w_st = ps.add_zeros("mem.W_st", {H, d.trg_cell_dim()});
  p.w_ym = ps.add_zeros("mem.W_ym", {V, d.src_cell_dim()});
  p.w_yt = ps.add_zeros("mem.W_yt", {V, d.trg_cell_dim()});
  p.w_prev = ps.add_zeros("mem.W_prev", {H, H});
  return p;
}

double DecoderTrace::score() const { return std::accumulate(log_probs.begin(), log_probs.end(), 0.0); }

std::vector<double> log_softmax(const Tensor& logits) {
  std::vector<double> out(logits.values().begin(), logits.values().end());
  const double m = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double v : out) z += std::exp(v - m);
  const double log_z = m + std::log(z);
  for (auto& v : out) v -= log_z;
  return out;
}

bool emittable(std::size_t token, const SearchConfig& cfg) {
  if (token == kStartId) return false;
  if (token == kUnkId && !cfg.allow_unk) return false;
  return true;
}

Annotations encode(Tape& tape, const NmtParams& p, const std::vector<std::size_t>& x, const RunMode& mode) {
  if (x.empty()) throw DataError("cannot encode an empty source sentence");
  std::vector<Var> emb;
  emb.reserve(x.size());
  for (auto tok : x) emb.push_back(maybe_dropout(p.src_embed.lookup(tape, tok), mode.dropout ? mode.dropout->encoder : 0.0, mode));
  auto bi = birnn(tape, emb, p.enc_fwd, p.enc_bwd);
  Annotations ann;
  ann.rows = std::move(bi.states);
  ann.matrix = ad::stack(ann.rows);
  ann.matrix_t = ad::transpose(ann.matrix);
  ann.projected = matmul(ann.matrix, ad::transpose(tape.param(p.att_ann)));
  ann.sentence_rep = ad::concat({bi.forward_final, bi.backward_final});
  ann.backward_final = bi.backward_final;
  return ann;
}

Attention attend(Tape& tape, const NmtParams& p, Var s_prev, const Annotations& ann) {
  if (s_prev.size() != p.dims.hidden) throw ShapeError("attend: decoder state has wrong dimension");
  // a_i = v . tanh(W_ae h_i + W_at s_prev)
  Var pre = tanh(add(ann.projected, matmul(tape.param(p.att_state), s_prev)));
  Var scores = matmul(pre, tape.param(p.att_v));
  Var alpha = ad::softmax(scores);
  return {alpha, matmul(ann.matrix_t, alpha)};
}

DecoderState initial_state(Tape& tape, const NmtParams& p, const Annotations& ann) {
  DecoderState st;
  st.s = tanh(affine(tape, ann.backward_final, p.init));
  if (p.layer2) st.s2 = zero_vector(tape, p.dims.hidden);
  return st;
}

namespace {

void check_context(const NmtParams& p, const DecoderContext& ctx) {
  if (ctx.src && ctx.src->size() != p.dims.src_cell_dim()) throw ShapeError("source memory context has wrong dimension");
  if (ctx.trg && ctx.trg->size() != p.dims.trg_cell_dim()) throw ShapeError("target memory context has wrong dimension");
  if (ctx.prev && ctx.prev->size() != p.dims.hidden) throw ShapeError("previous-sentence state has wrong dimension");
}

}  // namespace

StepResult decode_step(Tape& tape, const NmtParams& p, const DecoderState& prev, std::size_t y_prev,
                       const Annotations& ann, const DecoderContext& ctx, const RunMode& mode) {
  check_context(p, ctx);
  const double dec_rate = mode.dropout ? mode.dropout->decoder : 0.0;
  Var e = p.trg_embed.lookup(tape, y_prev);
  Attention att = attend(tape, p, prev.s, ann);

  // s_j = tanh(W_s s_{j-1} + W_sj E_T[y_{j-1}] + W_sc c_j [+ memory terms])
  Var pre = add(add(matmul(tape.param(p.w_s), prev.s), matmul(tape.param(p.w_sj), e)),
                matmul(tape.param(p.w_sc), att.context));
  if (ctx.integration == Integration::kMemToContext) {
    if (ctx.src) pre = add(pre, matmul(tape.param(p.w_sm), *ctx.src));
    if (ctx.trg) pre = add(pre, matmul(tape.param(p.w_st), *ctx.trg));
  }
  if (ctx.prev) pre = add(pre, matmul(tape.param(p.w_prev), *ctx.prev));

  StepResult out;
  out.state.s = tanh(pre);
  if (p.layer2) out.state.s2 = gru_step(tape, out.state.s, prev.s2, *p.layer2);

  // r_j = tanh(s_j + W_rc c_j + W_rj E_T[y_{j-1}])
  Var r = tanh(add(add(out.state.top(), matmul(tape.param(p.w_rc), att.context)), matmul(tape.param(p.w_rj), e)));
  out.readout = r;
  Var logits = add(matmul(tape.param(p.w_y), maybe_dropout(r, dec_rate, mode)), tape.param(p.b_r));
  if (ctx.integration == Integration::kMemToOutput) {
    if (ctx.src) logits = add(logits, matmul(tape.param(p.w_ym), *ctx.src));
    if (ctx.trg) logits = add(logits, matmul(tape.param(p.w_yt), *ctx.trg));
  }
  out.logits = logits;
  out.alpha = att.alpha;
  out.context = att.context;
  return out;
}

namespace {

void record(DecoderTrace& trace, const StepResult& step, std::size_t token, double log_prob) {
  trace.states.push_back(step.state.top().value());
  trace.alphas.push_back(step.alpha.value());
  trace.contexts.push_back(step.context.value());
  trace.readouts.push_back(step.readout.value());
  trace.tokens.push_back(token);
  trace.log_probs.push_back(log_prob);
}

}  // namespace

NllResult nll(Tape& tape, const NmtParams& p, const Annotations& ann, const std::vector<std::size_t>& y,
              const DecoderContext& ctx, const RunMode& mode) {
  if (y.empty()) throw DataError("nll: empty target sentence");
  if (y.back() != kEndId) throw DataError("nll: target sentence must end with the end token");
  NllResult res;
  DecoderState st = initial_state(tape, p, ann);
  std::size_t y_prev = kStartId;
  std::vector<Var> terms;
  terms.reserve(y.size());
  for (std::size_t tok : y) {
    StepResult step = decode_step(tape, p, st, y_prev, ann, ctx, mode);
    Var term = ad::pick_neg_log_softmax(step.logits, tok);
    terms.push_back(term);
    record(res.trace, step, tok, -term.value()[0]);
    st = step.state;
    y_prev = tok;
  }
  res.trace.final_state = st.top().value();
  res.loss = ad::sum(ad::concat(terms));
  return res;
}

double sequence_log_prob(Tape& tape, const NmtParams& p, const Annotations& ann, const std::vector<std::size_t>& y,
                         const DecoderContext& ctx) {
  DecoderState st = initial_state(tape, p, ann);
  std::size_t y_prev = kStartId;
  double total = 0.0;
  for (std::size_t tok : y) {
    StepResult step = decode_step(tape, p, st, y_prev, ann, ctx);
    total += log_softmax(step.logits.value())[tok];
    st = step.state;
    y_prev = tok;
  }
  return total;
}

Hypothesis greedy_decode(Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx,
                         const SearchConfig& cfg) {
  const std::size_t limit = cfg.length_limit(ann.length());
  Hypothesis h;
  DecoderState st = initial_state(tape, p, ann);
  std::size_t y_prev = kStartId;
  while (h.tokens.size() < limit) {
    StepResult step = decode_step(tape, p, st, y_prev, ann, ctx);
    const auto lp = log_softmax(step.logits.value());
    std::size_t best = lp.size();
    for (std::size_t k = 0; k < lp.size(); ++k) {
      if (!emittable(k, cfg)) continue;
      if (best == lp.size() || lp[k] > lp[best]) best = k;
    }
    record(h.trace, step, best, lp[best]);
    h.tokens.push_back(best);
    h.score += lp[best];
    st = step.state;
    y_prev = best;
    if (best == kEndId) break;
  }
  h.trace.final_state = st.top().value();
  return h;
}

namespace {

struct StepRecord {
  StepResult step;
  std::size_t token;
  double log_prob;
};

struct Partial {
  std::vector<StepRecord> steps;
  DecoderState state;
  double score = 0.0;
};

Hypothesis finish(const Partial& p) {
  Hypothesis h;
  h.score = p.score;
  for (const auto& r : p.steps) {
    record(h.trace, r.step, r.token, r.log_prob);
    h.tokens.push_back(r.token);
  }
  h.trace.final_state = p.state.top().value();
  return h;
}

}  // namespace

Hypothesis beam_decode(Tape& tape, const NmtParams& p, const Annotations& ann, const DecoderContext& ctx,
                       const SearchConfig& cfg) {
  if (cfg.beam_size < 1) throw UsageError("beam size must be at least 1");
  const std::size_t limit = cfg.length_limit(ann.length());
  if (limit < 1) throw UsageError("maximum length must be at least 1");

  // The greedy path seeds the completed pool, so the result never scores
  // below greedy search.
  Hypothesis best = greedy_decode(tape, p, ann, ctx, cfg);
  if (cfg.beam_size == 1) return best;
  bool best_from_beam = false;
  Partial best_partial;

  std::vector<Partial> alive(1);
  alive[0].state = initial_state(tape, p, ann);

  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double score;
    double log_prob;
  };

  for (std::size_t len = 1; len <= limit && !alive.empty(); ++len) {
    std::vector<StepResult> steps;
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const std::size_t y_prev = alive[h].steps.empty() ? kStartId : alive[h].steps.back().token;
      steps.push_back(decode_step(tape, p, alive[h].state, y_prev, ann, ctx));
      const auto lp = log_softmax(steps.back().logits.value());
      for (std::size_t k = 0; k < lp.size(); ++k) {
        if (emittable(k, cfg)) cands.push_back({h, k, alive[h].score + lp[k], lp[k]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (cands.size() > cfg.beam_size) cands.resize(cfg.beam_size);

    std::vector<Partial> next;
    for (const auto& c : cands) {
      Partial np = alive[c.parent];
      np.steps.push_back({steps[c.parent], c.token, c.log_prob});
      np.state = steps[c.parent].state;
      np.score = c.score;
      if (c.token == kEndId || len == limit) {
        if (np.score > best.score) {
          best.score = np.score;
          best_partial = np;
          best_from_beam = true;
        }
      } else {
        next.push_back(std::move(np));
      }
    }
    alive = std::move(next);
    // Log-probs are non-positive, so no live hypothesis can overtake `best`.
    if (!alive.empty() && alive.front().score <= best.score) break;
  }
  if (best_from_beam) return finish(best_partial);
  return best;
}

}  // namespace docnmt
