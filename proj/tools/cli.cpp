#include "cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "docnmt/checkpoint.hpp"
#include "docnmt/config.hpp"
#include "docnmt/corpus.hpp"
#include "docnmt/doc_decoder.hpp"
#include "docnmt/doc_model.hpp"
#include "docnmt/errors.hpp"
#include "docnmt/hash.hpp"
#include "docnmt/metrics.hpp"
#include "docnmt/trainer.hpp"

namespace docnmt::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  std::size_t jobs = 1;
  std::vector<std::string> sets;
};

Config defaults() {
  Config c;
  c.set("seed", "1");
  c.set("jobs", "1");
  const ModelDims d;
  c.set("model.embed", std::to_string(d.embed));
  c.set("model.hidden", std::to_string(d.hidden));
  c.set("model.align", std::to_string(d.align));
  c.set("model.lm_hidden", std::to_string(d.lm_hidden));
  c.set("model.doc_hidden", std::to_string(d.doc_hidden));
  c.set("model.decoder_layers", std::to_string(d.decoder_layers));
  c.set("doc.variant", "mem-to-context");
  c.set("doc.memories", "both");
  c.set("doc.prev_trg", "false");
  c.set("data.min_sentences", "2");
  c.set("data.lowercase", "false");
  c.set("vocab.min_freq", "5");
  TrainConfig{}.to_config(c);
  const SyntheticSpec s;
  c.set("synthetic.n_docs", std::to_string(s.n_docs));
  c.set("synthetic.n_dev_docs", std::to_string(s.n_dev_docs));
  c.set("synthetic.n_test_docs", std::to_string(s.n_test_docs));
  c.set("synthetic.sentences_per_doc", std::to_string(s.sentences_per_doc));
  c.set("synthetic.min_len", std::to_string(s.min_len));
  c.set("synthetic.max_len", std::to_string(s.max_len));
  c.set("synthetic.content_vocab", std::to_string(s.content_vocab));
  c.set("synthetic.n_ambiguous", std::to_string(s.n_ambiguous));
  c.set("synthetic.ambiguous_prob", format_double(s.ambiguous_prob));
  c.set("synthetic.header_sentence", s.header_sentence ? "true" : "false");
  return c;
}

// Defaults, then `stored` (a checkpoint's config), the config file, --set
// pairs and finally the dedicated flags.
Config resolve(const Common& common, const Config& flags, const Config& stored = {}) {
  Config c = defaults();
  c.merge(stored);
  if (!common.config_path.empty()) c.merge(Config::load(common.config_path));
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    c.merge(Config::parse(kv.substr(0, eq) + " = " + kv.substr(eq + 1), "--set"));
  }
  c.merge(flags);
  if (common.seed) c.set("seed", std::to_string(*common.seed));
  c.set("jobs", std::to_string(common.jobs));
  return c;
}

std::uint64_t seed_of(const Config& c) { return static_cast<std::uint64_t>(c.get_int("seed", 1)); }

fs::path require_out(const Common& common) {
  if (common.out.empty()) throw UsageError("--out is required");
  fs::path out(common.out);
  fs::create_directories(out);
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg,
                    const std::vector<fs::path>& inputs) {
  std::ofstream out(dir / (command + ".manifest"));
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << "docnmt-manifest 1\n";
  out << "command = " << command << '\n';
  out << "seed = " << seed_of(cfg) << '\n';
  out << "[inputs]\n";
  for (const auto& p : inputs) out << p.string() << " = " << git_blob_hash_file(p) << '\n';
  out << "[config]\n" << cfg.echo();
}

ModelDims dims_from(const Config& c) {
  ModelDims d;
  d.src_vocab = c.get_size("model.src_vocab", 0);
  d.trg_vocab = c.get_size("model.trg_vocab", 0);
  d.embed = c.get_size("model.embed", d.embed);
  d.hidden = c.get_size("model.hidden", d.hidden);
  d.align = c.get_size("model.align", d.align);
  d.lm_hidden = c.get_size("model.lm_hidden", d.lm_hidden);
  d.doc_hidden = c.get_size("model.doc_hidden", d.doc_hidden);
  d.decoder_layers = c.get_size("model.decoder_layers", d.decoder_layers);
  if (d.src_vocab < 4 || d.trg_vocab < 4) throw UsageError("model vocabulary sizes are missing or too small");
  if (d.decoder_layers < 1 || d.decoder_layers > 2) throw UsageError("model.decoder_layers must be 1 or 2");
  return d;
}

DocModelConfig doc_config_from(const Config& c) {
  DocModelConfig d;
  d.integration = parse_integration(c.get_string("doc.variant", "mem-to-context"));
  d.memories = parse_memory_selection(c.get_string("doc.memories", "both"));
  d.prev_trg = c.get_bool("doc.prev_trg", false);
  d.validate();
  return d;
}

SearchConfig search_from(const Config& c) {
  SearchConfig s;
  s.beam_size = c.get_size("search.beam", s.beam_size);
  s.max_len = c.get_size("search.max_len", s.max_len);
  if (s.beam_size < 1) throw UsageError("search.beam must be at least 1");
  return s;
}

struct Data {
  Vocabulary src_vocab;
  Vocabulary trg_vocab;
  std::vector<TextDocument> train_text, dev_text;
  std::vector<Document> train, dev;
  std::vector<fs::path> inputs;
};

fs::path data_file(const std::string& dir, const std::string& name) {
  if (dir.empty()) throw UsageError("--data is required");
  fs::path p = fs::path(dir) / name;
  if (!fs::exists(p)) throw DataError("missing data file " + p.string());
  return p;
}

Data load_data(const std::string& dir, const Config& cfg, bool need_dev) {
  Data d;
  const auto vs = data_file(dir, "vocab.src");
  const auto vt = data_file(dir, "vocab.trg");
  d.src_vocab = Vocabulary::load(vs);
  d.trg_vocab = Vocabulary::load(vt);
  const std::size_t min_sent = cfg.get_size("data.min_sentences", 2);
  const bool lower = cfg.get_bool("data.lowercase", false);
  const auto ts = data_file(dir, "train.src");
  const auto tt = data_file(dir, "train.trg");
  d.train_text = load_documents(ts, tt, min_sent, lower);
  d.train = to_ids(d.train_text, d.src_vocab, d.trg_vocab);
  d.inputs = {vs, vt, ts, tt};
  if (need_dev) {
    const auto ds = data_file(dir, "dev.src");
    const auto dt = data_file(dir, "dev.trg");
    d.dev_text = load_documents(ds, dt, min_sent, lower);
    d.dev = to_ids(d.dev_text, d.src_vocab, d.trg_vocab);
    d.inputs.push_back(ds);
    d.inputs.push_back(dt);
  }
  if (d.train.empty()) throw DataError("training corpus in " + dir + " is empty");
  return d;
}

void set_vocab_sizes(Config& c, const Data& d) {
  c.set("model.src_vocab", std::to_string(d.src_vocab.size()));
  c.set("model.trg_vocab", std::to_string(d.trg_vocab.size()));
}

// Model from a checkpoint; its stored config fills keys the caller did not set.
Model load_model(const fs::path& path, Config* stored = nullptr) {
  Checkpoint ck = load_checkpoint(path);
  Model m = Model::create(dims_from(ck.config), 0);
  apply_checkpoint(ck, m.params, true);
  if (stored) *stored = ck.config;
  return m;
}

void check_vocab(const Model& m, const Data& d) {
  if (m.dims.src_vocab != d.src_vocab.size() || m.dims.trg_vocab != d.trg_vocab.size()) {
    throw DataError("checkpoint vocabulary sizes do not match the data directory");
  }
}

template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<Sentence> flatten(const std::vector<std::vector<Sentence>>& docs) {
  std::vector<Sentence> out;
  for (const auto& d : docs) out.insert(out.end(), d.begin(), d.end());
  return out;
}

void report(const std::vector<std::pair<std::string, std::string>>& rows, const Common& common) {
  for (const auto& [k, v] : rows) std::cout << k << '\t' << v << '\n';
  if (!common.out.empty()) {
    fs::create_directories(common.out);
    std::vector<std::string> lines;
    for (const auto& [k, v] : rows) lines.push_back(k + '\t' + v);
    write_lines(fs::path(common.out) / "report.tsv", lines);
  }
}

// ---- subcommands ----

int cmd_gen_synthetic(const Common& common) {
  const Config cfg = resolve(common, {});
  const fs::path out = require_out(common);
  SyntheticSpec s;
  s.n_docs = cfg.get_size("synthetic.n_docs", s.n_docs);
  s.n_dev_docs = cfg.get_size("synthetic.n_dev_docs", s.n_dev_docs);
  s.n_test_docs = cfg.get_size("synthetic.n_test_docs", s.n_test_docs);
  s.sentences_per_doc = cfg.get_size("synthetic.sentences_per_doc", s.sentences_per_doc);
  s.min_len = cfg.get_size("synthetic.min_len", s.min_len);
  s.max_len = cfg.get_size("synthetic.max_len", s.max_len);
  s.content_vocab = cfg.get_size("synthetic.content_vocab", s.content_vocab);
  s.n_ambiguous = cfg.get_size("synthetic.n_ambiguous", s.n_ambiguous);
  s.ambiguous_prob = cfg.get_double("synthetic.ambiguous_prob", s.ambiguous_prob);
  s.header_sentence = cfg.get_bool("synthetic.header_sentence", s.header_sentence);
  s.seed = seed_of(cfg);
  const SyntheticCorpus corpus = gen_synthetic(s);
  write_documents(out / "train.src", out / "train.trg", corpus.train);
  write_documents(out / "dev.src", out / "dev.trg", corpus.dev);
  write_documents(out / "test.src", out / "test.trg", corpus.test);
  write_manifest(out, "gen-synthetic", cfg, {});
  return 0;
}

int cmd_build_vocab(const Common& common, const std::string& data) {
  const Config cfg = resolve(common, {});
  const fs::path out = common.out.empty() ? fs::path(data) : require_out(common);
  const auto ts = data_file(data, "train.src");
  const auto tt = data_file(data, "train.trg");
  const auto docs = load_documents(ts, tt, cfg.get_size("data.min_sentences", 2), cfg.get_bool("data.lowercase", false));
  const std::size_t min_freq = cfg.get_size("vocab.min_freq", 5);
  Vocabulary::build(source_sentences(docs), min_freq).save(out / "vocab.src");
  Vocabulary::build(target_sentences(docs), min_freq).save(out / "vocab.trg");
  write_manifest(out, "build-vocab", cfg, {ts, tt});
  return 0;
}

int cmd_pretrain_lm(const Common& common, const std::string& data) {
  Config cfg = resolve(common, {});
  const fs::path out = require_out(common);
  const Data d = load_data(data, cfg, false);
  set_vocab_sizes(cfg, d);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  Model m = Model::create(dims_from(cfg), seed_of(cfg));
  std::vector<TokenIds> sentences;
  for (const auto& doc : d.train) sentences.insert(sentences.end(), doc.src.begin(), doc.src.end());
  std::ofstream log_file(out / "train.log");
  TrainLog log(&log_file);
  pretrain_sentence_lm(m, sentences, tc, &log);
  save_checkpoint(out / "lm.ckpt", cfg, m.params);
  write_manifest(out, "pretrain-lm", cfg, d.inputs);
  return 0;
}

int cmd_train_stage1(const Common& common, const std::string& data, const std::string& init) {
  Config cfg;
  std::optional<Model> m;
  std::vector<fs::path> extra;
  if (!init.empty()) {
    Config stored;
    m = load_model(init, &stored);
    cfg = resolve(common, {}, stored);
    extra.push_back(init);
  } else {
    cfg = resolve(common, {});
  }
  const fs::path out = require_out(common);
  const Data d = load_data(data, cfg, true);
  if (!m) {
    set_vocab_sizes(cfg, d);
    m = Model::create(dims_from(cfg), seed_of(cfg));
  }
  check_vocab(*m, d);
  cfg.set("doc.memories", "none");
  cfg.set("doc.prev_trg", "false");
  const TrainConfig tc = TrainConfig::from_config(cfg);
  std::ofstream log_file(out / "train.log");
  TrainLog log(&log_file);
  train_stage1(*m, d.train, d.dev, tc, &log);
  save_checkpoint(out / "stage1.ckpt", cfg, m->params);
  auto inputs = d.inputs;
  inputs.insert(inputs.end(), extra.begin(), extra.end());
  write_manifest(out, "train-stage1", cfg, inputs);
  return 0;
}

int cmd_train_stage2(const Common& common, const Config& flags, const std::string& data, const std::string& init) {
  if (init.empty()) throw UsageError("train-stage2 needs --init <stage-1 checkpoint>");
  Config stored;
  Model m = load_model(init, &stored);
  stored.set("doc.memories", "both");  // stage-1 checkpoints record "none"
  Config cfg = resolve(common, flags, stored);
  const fs::path out = require_out(common);
  const Data d = load_data(data, cfg, true);
  check_vocab(m, d);
  const DocModelConfig dcfg = doc_config_from(cfg);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  std::ofstream log_file(out / "train.log");
  TrainLog log(&log_file);
  DocStates train_states, dev_states;
  if (dcfg.uses_trg() || dcfg.prev_trg) {
    train_states = target_states(m, d.train, tc.target_memory, tc.search);
    dev_states = target_states(m, d.dev, tc.target_memory, tc.search);
  }
  train_stage2(m, dcfg, d.train, d.dev, train_states, dev_states, tc, &log);
  save_checkpoint(out / "stage2.ckpt", cfg, m.params);
  auto inputs = d.inputs;
  inputs.push_back(init);
  write_manifest(out, "train-stage2", cfg, inputs);
  return 0;
}

int cmd_translate(const Common& common, const Config& flags, const std::string& data, const std::string& model_path,
                  const std::string& base_path, const std::string& src_path, std::size_t passes) {
  if (model_path.empty()) throw UsageError("translate needs --model");
  if (src_path.empty()) throw UsageError("translate needs --src");
  Config stored;
  Model model = load_model(model_path, &stored);
  const Config cfg = resolve(common, flags, stored);
  const fs::path out = require_out(common);
  std::optional<Model> base_storage;
  if (!base_path.empty()) base_storage = load_model(base_path);
  const Model& base = base_storage ? *base_storage : model;

  const auto vs = data_file(data, "vocab.src");
  const auto vt = data_file(data, "vocab.trg");
  const Vocabulary src_vocab = Vocabulary::load(vs);
  const Vocabulary trg_vocab = Vocabulary::load(vt);
  if (model.dims.src_vocab != src_vocab.size() || model.dims.trg_vocab != trg_vocab.size() ||
      base.dims.src_vocab != src_vocab.size() || base.dims.trg_vocab != trg_vocab.size()) {
    throw DataError("checkpoint vocabulary sizes do not match the data directory");
  }
  const auto docs = read_document_file(src_path, cfg.get_bool("data.lowercase", false));
  if (docs.empty()) throw DataError(src_path + " contains no documents");

  const DocModelConfig dcfg = doc_config_from(cfg);
  const Searcher search = beam_searcher(search_from(cfg));
  std::vector<BcdResult> results(docs.size());
  parallel_for(docs.size(), common.jobs, [&](std::size_t i) {
    std::vector<TokenIds> src;
    for (const auto& s : docs[i]) src.push_back(src_vocab.encode(s));
    results[i] = bcd_decode(base, model, dcfg, src, passes, search, "doc" + std::to_string(i + 1));
  });

  std::vector<std::vector<Sentence>> hyps;
  std::vector<std::string> audit{"doc\tpass\tsentence\tstatus\told_score\tnew_score"};
  for (const auto& r : results) {
    std::vector<Sentence> doc;
    for (const auto& h : r.translations) doc.push_back(trg_vocab.decode(h.tokens));
    hyps.push_back(std::move(doc));
    for (const auto& a : r.audit) audit.push_back(format_audit(a));
  }
  write_document_file(out / "translations.txt", hyps);
  write_lines(out / "audit.tsv", audit);
  std::vector<fs::path> inputs{model_path, vs, vt, src_path};
  if (!base_path.empty()) inputs.push_back(base_path);
  Config echo = cfg;
  echo.set("translate.passes", std::to_string(passes));
  write_manifest(out, "translate", echo, inputs);
  return 0;
}

struct EvalArgs {
  std::string metric;
  std::string hyp, hyp_b, ref, src;
  std::string data, model, base, split = "test";
  std::size_t resamples = 1000;
};

int cmd_evaluate(const Common& common, const Config& flags, const EvalArgs& a) {
  auto need = [](const std::string& v, const std::string& flag) {
    if (v.empty()) throw UsageError("evaluate needs " + flag);
  };
  const bool lower = false;
  std::vector<std::pair<std::string, std::string>> rows;
  std::vector<fs::path> inputs;
  Config cfg = resolve(common, flags);

  if (a.metric == "bleu" || a.metric == "bleu1") {
    need(a.hyp, "--hyp");
    need(a.ref, "--ref");
    const auto hyp = flatten(read_aligned_document_file(a.hyp, a.ref, lower));
    const auto ref = flatten(read_document_file(a.ref, lower));
    const double b = a.metric == "bleu" ? eval::bleu(hyp, ref) : eval::bleu1(hyp, ref);
    rows.push_back({a.metric, format_double(100.0 * b)});
    inputs = {a.hyp, a.ref};
    cfg.set("eval.bleu_smoothing", "none");
  } else if (a.metric == "consistency") {
    need(a.hyp, "--hyp");
    need(a.src, "--src");
    const auto r = eval::consistency_score(read_aligned_document_file(a.hyp, a.src, lower),
                                           read_document_file(a.src, lower));
    rows.push_back({"consistent", std::to_string(r.consistent)});
    rows.push_back({"total", std::to_string(r.total)});
    rows.push_back({"consistency", format_double(r.score())});
    inputs = {a.hyp, a.src};
  } else if (a.metric == "ambiguity") {
    need(a.hyp, "--hyp");
    need(a.src, "--src");
    need(a.ref, "--ref");
    const auto gold = load_documents(a.src, a.ref, 1, lower);
    const auto r = ambiguous_accuracy(gold, read_aligned_document_file(a.hyp, a.src, lower));
    rows.push_back({"correct", std::to_string(r.correct)});
    rows.push_back({"total", std::to_string(r.total)});
    rows.push_back({"accuracy", format_double(r.accuracy())});
    inputs = {a.hyp, a.src, a.ref};
  } else if (a.metric == "significance") {
    need(a.hyp, "--hyp");
    need(a.hyp_b, "--hyp-b");
    need(a.ref, "--ref");
    if (a.resamples < 1) throw UsageError("--resamples must be at least 1");
    const auto sa = flatten(read_aligned_document_file(a.hyp, a.ref, lower));
    const auto sb = flatten(read_aligned_document_file(a.hyp_b, a.ref, lower));
    const auto ref = flatten(read_document_file(a.ref, lower));
    const auto r = eval::bootstrap_bleu(sa, sb, ref, a.resamples, seed_of(cfg));
    rows.push_back({"delta_bleu", format_double(100.0 * r.delta)});
    rows.push_back({"p_value", format_double(r.p_value)});
    rows.push_back({"resamples", std::to_string(r.resamples)});
    inputs = {a.hyp, a.hyp_b, a.ref};
    cfg.set("eval.bleu_smoothing", "none");
  } else if (a.metric == "ppl") {
    need(a.model, "--model");
    Config stored;
    Model m = load_model(a.model, &stored);
    cfg = resolve(common, flags, stored);
    const auto vs = data_file(a.data, "vocab.src");
    const auto vt = data_file(a.data, "vocab.trg");
    const auto ss = data_file(a.data, a.split + ".src");
    const auto st = data_file(a.data, a.split + ".trg");
    const Vocabulary sv = Vocabulary::load(vs), tv = Vocabulary::load(vt);
    if (m.dims.src_vocab != sv.size() || m.dims.trg_vocab != tv.size()) {
      throw DataError("checkpoint vocabulary sizes do not match the data directory");
    }
    const auto docs = to_ids(load_documents(ss, st, cfg.get_size("data.min_sentences", 2),
                                            cfg.get_bool("data.lowercase", false)),
                             sv, tv);
    const DocModelConfig dcfg = doc_config_from(cfg);
    inputs = {a.model, vs, vt, ss, st};
    double ppl = 0.0;
    if (dcfg.sentence_level()) {
      ppl = snmt_perplexity(m, docs);
    } else {
      std::optional<Model> base_storage;
      if (!a.base.empty()) {
        base_storage = load_model(a.base);
        inputs.push_back(a.base);
      }
      const Model& base = base_storage ? *base_storage : m;
      const TrainConfig tc = TrainConfig::from_config(cfg);
      DocStates states;
      if (dcfg.uses_trg() || dcfg.prev_trg) states = target_states(base, docs, tc.target_memory, tc.search);
      ppl = corpus_doc_nll(m, dcfg, docs, states).perplexity();
    }
    rows.push_back({"ppl", format_double(ppl)});
  } else {
    throw UsageError("unknown metric '" + a.metric + "'");
  }
  report(rows, common);
  if (!common.out.empty()) write_manifest(common.out, "evaluate-" + a.metric, cfg, inputs);
  return 0;
}

int cmd_grad_check(const Common& common, const Config& flags, std::size_t vocab, std::size_t coords, double eps,
                   double tolerance) {
  const Config cfg = resolve(common, flags);
  if (vocab < 4) throw UsageError("--vocab must be at least 4");
  ModelDims dims = dims_from([&] {
    Config c = cfg;
    c.set("model.src_vocab", std::to_string(vocab));
    c.set("model.trg_vocab", std::to_string(vocab));
    return c;
  }());
  DocModelConfig dcfg = doc_config_from(cfg);
  std::mt19937_64 rng(seed_of(cfg));
  Model m = Model::create(dims, seed_of(cfg));
  // Zero-initialised tensors would hide the gradients flowing through them.
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (ParamId id : m.params.ids()) {
    for (double& v : m.params.value(id).values()) v = u(rng);
  }
  std::uniform_int_distribution<std::size_t> tok(3, vocab - 1);
  auto sentence = [&](std::size_t n) {
    TokenIds s(n);
    for (auto& t : s) t = tok(rng);
    return s;
  };
  Document doc{"grad-check", {sentence(3), sentence(4)}, {sentence(3), sentence(2)}};
  std::vector<Tensor> states;
  for (std::size_t t = 0; t < doc.size(); ++t) {
    Tensor s({dims.hidden});
    for (double& v : s.values()) v = u(rng);
    states.push_back(std::move(s));
  }
  const auto result = ad::grad_check(
      [&](Tape& tape) { return doc_nll(tape, m, dcfg, doc, &states).loss; }, m.params, {}, eps, coords);
  report({{"max_rel_error", format_double(result.max_rel_error)},
          {"coords_checked", std::to_string(result.coords_checked)},
          {"worst_param", result.worst_param}},
         common);
  if (!common.out.empty()) write_manifest(common.out, "grad-check", cfg, {});
  if (!(result.max_rel_error <= tolerance)) {
    std::cerr << "gradient check failed: relative error " << result.max_rel_error << " exceeds " << tolerance
              << '\n';
    return 3;
  }
  return 0;
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Random seed");
  sub->add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", common.out, "Output directory");
  sub->add_option("--jobs", common.jobs, "Worker threads (documents in parallel)")->check(CLI::PositiveNumber);
  sub->add_option("--set", common.sets, "Override a configuration key (key=value)");
}

void add_model_flags(CLI::App* sub, Config& flags, std::string& variant, std::string& memories) {
  sub->add_option("--variant", variant, "mem-to-context or mem-to-output")
      ->check(CLI::IsMember({"mem-to-context", "mem-to-output"}))
      ->each([&flags](const std::string& v) { flags.set("doc.variant", v); });
  sub->add_option("--memories", memories, "Document memories to use")
      ->check(CLI::IsMember({"src", "trg", "both", "none"}))
      ->each([&flags](const std::string& v) { flags.set("doc.memories", v); });
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Document-context neural machine translation with memory networks"};
  app.require_subcommand(1);
  Common common;
  Config flags;
  std::string data, init, model, base, src, variant, memories, target_memory;
  std::size_t passes = 1, beam = 5, vocab = 8, coords = 0;
  double eps = 1e-5, tolerance = 1e-4;
  bool prev_trg = false;
  EvalArgs ev;

  auto* gen = app.add_subcommand("gen-synthetic", "Write the seeded synthetic document corpus");
  add_common(gen, common);

  auto* bv = app.add_subcommand("build-vocab", "Build source and target vocabularies from the training split");
  add_common(bv, common);
  bv->add_option("--data", data, "Data directory")->required();

  auto* lm = app.add_subcommand("pretrain-lm", "Pretrain the sentence-level language model");
  add_common(lm, common);
  lm->add_option("--data", data, "Data directory")->required();

  auto* s1 = app.add_subcommand("train-stage1", "Train the sentence-level model");
  add_common(s1, common);
  s1->add_option("--data", data, "Data directory")->required();
  s1->add_option("--init", init, "Checkpoint to start from (e.g. the pretrained LM)")->check(CLI::ExistingFile);

  auto* s2 = app.add_subcommand("train-stage2", "Train the document-level model");
  add_common(s2, common);
  s2->add_option("--data", data, "Data directory")->required();
  s2->add_option("--init", init, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  add_model_flags(s2, flags, variant, memories);
  s2->add_flag("--prev-trg", prev_trg, "Condition on the previous sentence's decoder state");
  s2->add_option("--target-memory", target_memory, "generated or gold")
      ->check(CLI::IsMember({"generated", "gold"}))
      ->each([&flags](const std::string& v) { flags.set("train.target_memory", v); });

  auto* tr = app.add_subcommand("translate", "Translate documents");
  add_common(tr, common);
  tr->add_option("--data", data, "Data directory holding the vocabularies")->required();
  tr->add_option("--model", model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  tr->add_option("--base", base, "Sentence-level checkpoint for the first pass (default: --model)")
      ->check(CLI::ExistingFile);
  tr->add_option("--src", src, "Source documents")->required()->check(CLI::ExistingFile);
  tr->add_option("--passes", passes, "Coordinate-update passes after the initial pass");
  tr->add_option("--beam", beam, "Beam size")->check(CLI::PositiveNumber)->each([&flags](const std::string& v) {
    flags.set("search.beam", v);
  });
  add_model_flags(tr, flags, variant, memories);

  auto* ev_cmd = app.add_subcommand("evaluate", "Score translations");
  add_common(ev_cmd, common);
  ev_cmd->add_option("metric", ev.metric, "bleu | bleu1 | ppl | consistency | significance | ambiguity")
      ->required()
      ->check(CLI::IsMember({"bleu", "bleu1", "ppl", "consistency", "significance", "ambiguity"}));
  ev_cmd->add_option("--hyp", ev.hyp, "Candidate translations")->check(CLI::ExistingFile);
  ev_cmd->add_option("--hyp-b", ev.hyp_b, "Significance: system tested for improving on --hyp (delta = b - a)")
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--ref", ev.ref, "Reference translations")->check(CLI::ExistingFile);
  ev_cmd->add_option("--src", ev.src, "Source documents")->check(CLI::ExistingFile);
  ev_cmd->add_option("--data", ev.data, "Data directory (ppl)");
  ev_cmd->add_option("--model", ev.model, "Model checkpoint (ppl)")->check(CLI::ExistingFile);
  ev_cmd->add_option("--base", ev.base, "Sentence-level checkpoint for target memories (ppl)")
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--split", ev.split, "Data split (ppl)");
  ev_cmd->add_option("--resamples", ev.resamples, "Bootstrap resamples (significance)");
  add_model_flags(ev_cmd, flags, variant, memories);

  auto* gc = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients of the document loss");
  add_common(gc, common);
  gc->add_option("--vocab", vocab, "Vocabulary size of the random instance");
  gc->add_option("--coords", coords, "Coordinates checked per tensor (0: all)");
  gc->add_option("--eps", eps, "Finite-difference step");
  gc->add_option("--tolerance", tolerance, "Largest accepted relative error");
  add_model_flags(gc, flags, variant, memories);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (prev_trg) flags.set("doc.prev_trg", "true");

  try {
    if (*gen) return cmd_gen_synthetic(common);
    if (*bv) return cmd_build_vocab(common, data);
    if (*lm) return cmd_pretrain_lm(common, data);
    if (*s1) return cmd_train_stage1(common, data, init);
    if (*s2) return cmd_train_stage2(common, flags, data, init);
    if (*tr) return cmd_translate(common, flags, data, model, base, src, passes);
    if (*ev_cmd) return cmd_evaluate(common, flags, ev);
    if (*gc) return cmd_grad_check(common, flags, vocab, coords, eps, tolerance);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace docnmt::cli
