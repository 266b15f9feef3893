#include "docnmt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <random>

#include "docnmt/errors.hpp"
#include "docnmt/metrics.hpp"

namespace docnmt {

double Schedule::lr(std::size_t epoch) const {
  if (epoch < 1) throw UsageError("epochs are numbered from 1");
  const std::size_t n = epoch > decay_after ? epoch - decay_after : 0;
  // Rates are decimal rules; 15 significant digits drops the binary noise of
  // the product (0.08 * 0.9 would otherwise be 0.07200000000000001).
  const double raw = lr0 * std::pow(decay, static_cast<double>(n));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", raw);
  return std::strtod(buf, nullptr);
}

void Schedule::validate(const std::string& what) const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw UsageError(what + ": learning rate must be positive");
  if (!(decay > 0.0) || !std::isfinite(decay)) throw UsageError(what + ": decay factor must be positive");
}

double lr_schedule(int stage, std::size_t epoch) {
  switch (stage) {
    case 1: return kStage1Schedule.lr(epoch);
    case 2: return kStage2Schedule.lr(epoch);
    default: throw UsageError("unknown training stage " + std::to_string(stage));
  }
}

std::string to_string(TargetMemorySource s) { return s == TargetMemorySource::kGold ? "gold" : "generated"; }

TargetMemorySource parse_target_memory_source(const std::string& s) {
  if (s == "generated") return TargetMemorySource::kGenerated;
  if (s == "gold") return TargetMemorySource::kGold;
  throw UsageError("unknown target memory source '" + s + "' (expected generated or gold)");
}

DropoutPlan default_stage2_dropout(MemorySelection memories) {
  if (memories == MemorySelection::kBoth) return {0.5, 0.5, 0.2};
  if (memories == MemorySelection::kNone) return {};
  return {0.2, 0.2, 0.2};
}

void TrainConfig::validate() const {
  lm.validate("lm");
  stage1.validate("stage 1");
  stage2.validate("stage 2");
  if (stage1.epochs < 1 || stage2.epochs < 1) throw UsageError("each training stage needs at least one epoch");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (clip_norm < 0.0) throw UsageError("clip norm must be non-negative");
  auto check = [](const DropoutPlan& d) {
    for (double r : {d.encoder, d.decoder, d.doc_rnn}) {
      if (!(r >= 0.0 && r < 1.0)) throw UsageError("dropout rates must lie in [0, 1)");
    }
  };
  check(stage1_dropout);
  if (stage2_dropout) check(*stage2_dropout);
}

namespace {

Schedule read_schedule(const Config& c, const std::string& prefix, Schedule s) {
  s.lr0 = c.get_double(prefix + ".lr0", s.lr0);
  s.decay = c.get_double(prefix + ".decay", s.decay);
  s.decay_after = c.get_size(prefix + ".decay_after", s.decay_after);
  s.epochs = c.get_size(prefix + ".epochs", s.epochs);
  return s;
}

void write_schedule(Config& c, const std::string& prefix, const Schedule& s) {
  c.set(prefix + ".lr0", format_double(s.lr0));
  c.set(prefix + ".decay", format_double(s.decay));
  c.set(prefix + ".decay_after", std::to_string(s.decay_after));
  c.set(prefix + ".epochs", std::to_string(s.epochs));
}

DropoutPlan read_dropout(const Config& c, const std::string& prefix, DropoutPlan d) {
  d.encoder = c.get_double(prefix + ".encoder", d.encoder);
  d.decoder = c.get_double(prefix + ".decoder", d.decoder);
  d.doc_rnn = c.get_double(prefix + ".doc_rnn", d.doc_rnn);
  return d;
}

void write_dropout(Config& c, const std::string& prefix, const DropoutPlan& d) {
  c.set(prefix + ".encoder", format_double(d.encoder));
  c.set(prefix + ".decoder", format_double(d.decoder));
  c.set(prefix + ".doc_rnn", format_double(d.doc_rnn));
}

}  // namespace

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.lm = read_schedule(c, "train.lm", t.lm);
  t.stage1 = read_schedule(c, "train.stage1", t.stage1);
  t.stage2 = read_schedule(c, "train.stage2", t.stage2);
  t.stage1_dropout = read_dropout(c, "train.stage1.dropout", t.stage1_dropout);
  const bool any_stage2_dropout = c.has("train.stage2.dropout.encoder") || c.has("train.stage2.dropout.decoder") ||
                                  c.has("train.stage2.dropout.doc_rnn");
  if (any_stage2_dropout) t.stage2_dropout = read_dropout(c, "train.stage2.dropout", {});
  t.batch_size = c.get_size("train.batch_size", t.batch_size);
  t.clip_norm = c.get_double("train.clip_norm", t.clip_norm);
  t.stage2_mean_loss = c.get_string("train.stage2.loss", "mean") == "mean";
  if (!t.stage2_mean_loss && c.get_string("train.stage2.loss", "mean") != "sum") {
    throw UsageError("train.stage2.loss must be mean or sum");
  }
  t.target_memory = parse_target_memory_source(c.get_string("train.target_memory", to_string(t.target_memory)));
  t.search.beam_size = c.get_size("search.beam", t.search.beam_size);
  t.search.max_len = c.get_size("search.max_len", t.search.max_len);
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<std::int64_t>(t.seed)));
  t.validate();
  return t;
}

void TrainConfig::to_config(Config& c) const {
  write_schedule(c, "train.lm", lm);
  write_schedule(c, "train.stage1", stage1);
  write_schedule(c, "train.stage2", stage2);
  write_dropout(c, "train.stage1.dropout", stage1_dropout);
  if (stage2_dropout) write_dropout(c, "train.stage2.dropout", *stage2_dropout);
  c.set("train.batch_size", std::to_string(batch_size));
  c.set("train.clip_norm", format_double(clip_norm));
  c.set("train.stage2.loss", stage2_mean_loss ? "mean" : "sum");
  c.set("train.target_memory", to_string(target_memory));
  c.set("search.beam", std::to_string(search.beam_size));
  c.set("search.max_len", std::to_string(search.max_len));
  c.set("seed", std::to_string(seed));
}

std::string format_record(const LogRecord& r) {
  return "stage=" + r.stage + "\tepoch=" + std::to_string(r.epoch) + "\tsplit=" + r.split +
         "\tppl=" + format_double(r.perplexity) + "\tlr=" + format_double(r.lr) +
         "\twall=" + format_double(std::round(r.wall_seconds * 1000.0) / 1000.0);
}

void TrainLog::record(const LogRecord& r) {
  records_.push_back(r);
  if (echo_) *echo_ << format_record(r) << '\n' << std::flush;
}

void TrainLog::event(const std::string& stage, std::size_t epoch, const std::string& what) {
  events_.push_back("stage=" + stage + "\tepoch=" + std::to_string(epoch) + "\tevent=" + what);
  if (echo_) *echo_ << events_.back() << '\n' << std::flush;
}

StepOutcome sgd_step(ParamSet& params, ParamGrads& grads, double lr, double clip_norm) {
  if (grads.size() != params.size()) throw UsageError("gradients are not aligned with the parameters");
  StepOutcome out;
  if (!grads.all_finite()) return out;
  out.grad_norm = grads.global_norm();
  if (!std::isfinite(out.grad_norm)) return out;
  double factor = lr;
  if (clip_norm > 0.0 && out.grad_norm > clip_norm) factor *= clip_norm / out.grad_norm;
  for (ParamId id : params.ids()) {
    if (params.frozen(id)) continue;
    auto p = params.value(id).values();
    auto g = grads[id].values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= factor * g[i];
  }
  out.applied = true;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void emit(TrainLog* log, const LogRecord& r) {
  if (log) log->record(r);
}

double lm_perplexity(const Model& m, const std::vector<TokenIds>& sentences) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : sentences) {
    Tape tape(&m.params);
    auto l = m.lm.loss(tape, s);
    total += l.loss.value()[0];
    n += l.predictions;
  }
  return eval::perplexity(total, n);
}

// Applies one update; logs and skips it when the gradient is not finite.
void update(Model& m, ParamGrads& grads, double lr, const TrainConfig& cfg, TrainLog* log, const std::string& stage,
            std::size_t epoch) {
  if (!sgd_step(m.params, grads, lr, cfg.clip_norm).applied && log) {
    log->event(stage, epoch, "non-finite gradient, step rejected");
  }
  grads.zero();
}

template <class T>
void check_nonempty(const std::vector<T>& v, const std::string& what) {
  if (v.empty()) throw DataError(what + " is empty");
}

}  // namespace

LmTrainResult pretrain_sentence_lm(Model& m, const std::vector<TokenIds>& sentences, const TrainConfig& cfg,
                                   TrainLog* log) {
  check_nonempty(sentences, "sentence-LM training corpus");
  const auto start = Clock::now();
  LmTrainResult res;
  res.perplexity.push_back(lm_perplexity(m, sentences));
  emit(log, {"lm", 0, "train", res.perplexity.back(), 0.0, seconds_since(start)});

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  ParamGrads grads(m.params);
  for (std::size_t epoch = 1; epoch <= cfg.lm.epochs; ++epoch) {
    const double lr = cfg.lm.lr(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      Tape tape(&m.params);
      auto l = m.lm.loss(tape, sentences[i]);
      tape.accumulate(tape.backward(l.loss), grads);
      update(m, grads, lr, cfg, log, "lm", epoch);
    }
    res.perplexity.push_back(lm_perplexity(m, sentences));
    emit(log, {"lm", epoch, "train", res.perplexity.back(), lr, seconds_since(start)});
  }
  return res;
}

double snmt_perplexity(const Model& m, const std::vector<Document>& docs) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& d : docs) {
    for (std::size_t t = 0; t < d.size(); ++t) {
      Tape tape(&m.params);
      Annotations ann = encode(tape, m.nmt, d.src[t]);
      const TokenIds y = with_end(d.trg[t]);
      total += nll(tape, m.nmt, ann, y, {}).loss.value()[0];
      tokens += y.size();
    }
  }
  return eval::perplexity(total, tokens);
}

Stage1Result train_stage1(Model& m, const std::vector<Document>& train, const std::vector<Document>& dev,
                          const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  check_nonempty(train, "training corpus");
  check_nonempty(dev, "dev corpus");
  struct Pair {
    const TokenIds* x;
    TokenIds y;
  };
  std::vector<Pair> pairs;
  for (const auto& d : train) {
    for (std::size_t t = 0; t < d.size(); ++t) pairs.push_back({&d.src[t], with_end(d.trg[t])});
  }
  check_nonempty(pairs, "training corpus");

  const auto start = Clock::now();
  std::mt19937_64 rng(cfg.seed);
  const RunMode mode{&cfg.stage1_dropout, &rng};
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  ParamGrads grads(m.params);
  Stage1Result res;
  ParamSet best = m.params;
  double best_ppl = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.stage1.epochs; ++epoch) {
    const double lr = cfg.stage1.lr(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double train_nll = 0.0;
    std::size_t train_tokens = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      Tape tape(&m.params);
      std::vector<Var> losses;
      for (std::size_t k = b; k < e; ++k) {
        const Pair& p = pairs[order[k]];
        Annotations ann = encode(tape, m.nmt, *p.x, mode);
        losses.push_back(nll(tape, m.nmt, ann, p.y, {}, mode).loss);
        train_tokens += p.y.size();
      }
      Var loss = ad::sum(ad::concat(losses));
      train_nll += loss.value()[0];
      Var mean = ad::scalar_mul(loss, 1.0 / static_cast<double>(losses.size()));
      tape.accumulate(tape.backward(mean), grads);
      update(m, grads, lr, cfg, log, "stage1", epoch);
    }
    emit(log, {"stage1", epoch, "train", eval::perplexity(train_nll, train_tokens), lr, seconds_since(start)});
    const double dev_ppl = snmt_perplexity(m, dev);
    emit(log, {"stage1", epoch, "dev", dev_ppl, lr, seconds_since(start)});
    res.dev_perplexity.push_back(dev_ppl);
    if (res.best_epoch == 0 || dev_ppl < best_ppl) {
      best_ppl = dev_ppl;
      res.best_epoch = epoch;
      best = m.params;
    }
  }
  m.params = std::move(best);
  return res;
}

DocStates target_states(const Model& m, const std::vector<Document>& docs, TargetMemorySource source,
                        const SearchConfig& search) {
  DocStates out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    std::vector<Tensor> states;
    for (std::size_t t = 0; t < d.size(); ++t) {
      Tape tape(&m.params);
      Annotations ann = encode(tape, m.nmt, d.src[t]);
      if (source == TargetMemorySource::kGold) {
        states.push_back(nll(tape, m.nmt, ann, with_end(d.trg[t]), {}).trace.final_state);
      } else {
        states.push_back(beam_decode(tape, m.nmt, ann, {}, search).trace.final_state);
      }
    }
    out.push_back(std::move(states));
  }
  return out;
}

double CorpusNll::perplexity() const { return eval::perplexity(nll, tokens); }

namespace {

bool needs_states(const DocModelConfig& cfg) { return cfg.uses_trg() || cfg.prev_trg; }

const std::vector<Tensor>* states_for(const DocModelConfig& cfg, const DocStates& states, std::size_t d) {
  if (!needs_states(cfg)) return nullptr;
  if (d >= states.size()) throw DataError("missing target-memory states for a document");
  return &states[d];
}

std::vector<std::vector<Tensor>> all_lm_reps(const Model& m, const DocModelConfig& cfg,
                                             const std::vector<Document>& docs) {
  std::vector<std::vector<Tensor>> reps(docs.size());
  if (!cfg.uses_src()) return reps;
  for (std::size_t d = 0; d < docs.size(); ++d) reps[d] = lm_representations(m, docs[d].src);
  return reps;
}

CorpusNll corpus_nll_with_reps(const Model& m, const DocModelConfig& cfg, const std::vector<Document>& docs,
                               const DocStates& states, const std::vector<std::vector<Tensor>>& reps) {
  CorpusNll out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    Tape tape(&m.params);
    auto r = doc_nll(tape, m, cfg, docs[d], states_for(cfg, states, d), reps[d]);
    out.nll += r.loss.value()[0];
    out.tokens += r.tokens;
  }
  return out;
}

}  // namespace

CorpusNll corpus_doc_nll(const Model& m, const DocModelConfig& cfg, const std::vector<Document>& docs,
                         const DocStates& states) {
  return corpus_nll_with_reps(m, cfg, docs, states, all_lm_reps(m, cfg, docs));
}

Stage2Result train_stage2(Model& m, const DocModelConfig& dcfg, const std::vector<Document>& train,
                          const std::vector<Document>& dev, const DocStates& train_states,
                          const DocStates& dev_states, const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  dcfg.validate();
  check_nonempty(train, "training corpus");
  check_nonempty(dev, "dev corpus");
  for (const auto& d : train) {
    if (d.size() == 0) throw DataError("document '" + d.id + "' has no sentences");
  }
  if (needs_states(dcfg) && (train_states.size() != train.size() || dev_states.size() != dev.size())) {
    throw DataError("target-memory states do not match the corpus");
  }

  // The sentence LM stays fixed, so its representations are computed once.
  m.params.set_frozen_prefix(kLmPrefix, true);
  const auto train_reps = all_lm_reps(m, dcfg, train);
  const auto dev_reps = all_lm_reps(m, dcfg, dev);

  const auto start = Clock::now();
  Stage2Result res;
  {
    const CorpusNll tr = corpus_nll_with_reps(m, dcfg, train, train_states, train_reps);
    const CorpusNll dv = corpus_nll_with_reps(m, dcfg, dev, dev_states, dev_reps);
    res.train_nll.push_back(tr.nll);
    res.dev_perplexity.push_back(dv.perplexity());
    emit(log, {"stage2", 0, "train", tr.perplexity(), 0.0, seconds_since(start)});
    emit(log, {"stage2", 0, "dev", dv.perplexity(), 0.0, seconds_since(start)});
  }

  const DropoutPlan dropout = cfg.stage2_dropout.value_or(default_stage2_dropout(dcfg.memories));
  std::mt19937_64 rng(cfg.seed);
  const RunMode mode{&dropout, &rng};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  ParamGrads grads(m.params);
  ParamSet best = m.params;

  for (std::size_t epoch = 1; epoch <= cfg.stage2.epochs; ++epoch) {
    const double lr = cfg.stage2.lr(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t d : order) {
      Tape tape(&m.params);
      auto r = doc_nll(tape, m, dcfg, train[d], states_for(dcfg, train_states, d), train_reps[d], mode);
      epoch_nll += r.loss.value()[0];
      epoch_tokens += r.tokens;
      Var loss = cfg.stage2_mean_loss ? ad::scalar_mul(r.loss, 1.0 / static_cast<double>(train[d].size())) : r.loss;
      tape.accumulate(tape.backward(loss), grads);
      update(m, grads, lr, cfg, log, "stage2", epoch);
    }
    res.train_nll.push_back(epoch_nll);
    emit(log, {"stage2", epoch, "train", eval::perplexity(epoch_nll, epoch_tokens), lr, seconds_since(start)});
    const CorpusNll dv = corpus_nll_with_reps(m, dcfg, dev, dev_states, dev_reps);
    res.dev_perplexity.push_back(dv.perplexity());
    emit(log, {"stage2", epoch, "dev", dv.perplexity(), lr, seconds_since(start)});
    if (dv.perplexity() < res.dev_perplexity[res.best_epoch]) {
      res.best_epoch = epoch;
      best = m.params;
    }
  }
  m.params = std::move(best);
  return res;
}

}  // namespace docnmt
