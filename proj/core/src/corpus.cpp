#include "docnmt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "docnmt/errors.hpp"
#include "docnmt/snmt.hpp"

namespace docnmt {

Vocabulary::Vocabulary() {
  add(kUnkToken, 0);
  add(kStartToken, 0);
  add(kEndToken, 0);
}

void Vocabulary::add(const std::string& token, std::size_t count) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
  counts_.push_back(count);
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus, std::size_t min_freq) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus)
    for (const auto& tok : s) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, c] : counts) {
    if (c >= min_freq && tok != kUnkToken && tok != kStartToken && tok != kEndToken) kept.emplace_back(tok, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, c] : kept) v.add(tok, c);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>count");
    }
    const std::string tok = line.substr(0, tab);
    std::size_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad count");
    }
    if (v.contains(tok)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate token " + tok);
    v.add(tok, count);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (std::size_t i = kEndId + 1; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) return tokens_[kUnkId];
  return tokens_[id];
}

TokenIds Vocabulary::encode(const Sentence& s) const {
  TokenIds out;
  out.reserve(s.size());
  for (const auto& tok : s) out.push_back(id(tok));
  return out;
}

Sentence Vocabulary::decode(const TokenIds& ids) const {
  Sentence out;
  for (auto i : ids) {
    if (i == kEndId) break;
    if (i == kStartId) continue;
    out.push_back(token(i));
  }
  return out;
}

std::vector<Sentence> source_sentences(const std::vector<TextDocument>& docs) {
  std::vector<Sentence> out;
  for (const auto& d : docs) out.insert(out.end(), d.src.begin(), d.src.end());
  return out;
}

std::vector<Sentence> target_sentences(const std::vector<TextDocument>& docs) {
  std::vector<Sentence> out;
  for (const auto& d : docs) out.insert(out.end(), d.trg.begin(), d.trg.end());
  return out;
}

Sentence tokenize(const std::string& line, bool lowercase) {
  std::istringstream is(line);
  Sentence out;
  std::string tok;
  while (is >> tok) {
    if (lowercase) {
      std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
    }
    out.push_back(tok);
  }
  return out;
}

std::string join(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

namespace {

struct RawLine {
  bool blank;
  std::string text;
};

std::vector<RawLine> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RawLine> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const bool blank = line.find_first_not_of(" \t") == std::string::npos;
    lines.push_back({blank, line});
  }
  while (!lines.empty() && lines.back().blank) lines.pop_back();
  return lines;
}

std::vector<std::vector<Sentence>> split_documents(const std::vector<RawLine>& lines,
                                                   const std::filesystem::path& path, bool lowercase) {
  std::vector<std::vector<Sentence>> docs(1);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].blank) {
      if (docs.back().empty()) {
        throw DataError(path.string() + ":" + std::to_string(i + 1) + ": empty document");
      }
      docs.emplace_back();
    } else {
      docs.back().push_back(tokenize(lines[i].text, lowercase));
    }
  }
  if (docs.back().empty()) docs.pop_back();
  return docs;
}

}  // namespace

std::vector<std::vector<Sentence>> read_document_file(const std::filesystem::path& path, bool lowercase) {
  return split_documents(read_lines(path), path, lowercase);
}

std::vector<std::vector<Sentence>> read_aligned_document_file(const std::filesystem::path& path,
                                                              const std::filesystem::path& layout, bool lowercase) {
  auto lines = read_lines(path);
  const auto shape = read_lines(layout);
  if (lines.size() > shape.size()) {
    throw DataError(path.string() + " has " + std::to_string(lines.size()) + " lines, more than the " +
                    std::to_string(shape.size()) + " of " + layout.string());
  }
  // Trailing empty sentences were trimmed by read_lines; put them back.
  lines.resize(shape.size(), RawLine{true, ""});
  std::vector<std::vector<Sentence>> docs(1);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i].blank) {
      if (!lines[i].blank) {
        throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected a document break as in " +
                        layout.string());
      }
      if (!docs.back().empty()) docs.emplace_back();
    } else {
      docs.back().push_back(tokenize(lines[i].text, lowercase));
    }
  }
  if (docs.back().empty()) docs.pop_back();
  return docs;
}

std::vector<TextDocument> load_documents(const std::filesystem::path& src_path, const std::filesystem::path& trg_path,
                                         std::size_t min_sentences, bool lowercase) {
  const auto src = read_lines(src_path);
  const auto trg = read_lines(trg_path);
  const std::size_t n = std::min(src.size(), trg.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (src[i].blank != trg[i].blank) {
      throw DataError("document boundary mismatch at line " + std::to_string(i + 1) + " between " +
                      src_path.string() + " and " + trg_path.string());
    }
  }
  if (src.size() != trg.size()) {
    throw DataError("line count mismatch: " + src_path.string() + " has " + std::to_string(src.size()) + ", " +
                    trg_path.string() + " has " + std::to_string(trg.size()));
  }
  auto sd = split_documents(src, src_path, lowercase);
  auto td = split_documents(trg, trg_path, lowercase);
  if (sd.size() != td.size()) throw DataError("source and target document counts differ");
  std::vector<TextDocument> docs;
  for (std::size_t d = 0; d < sd.size(); ++d) {
    if (sd[d].size() < min_sentences) continue;
    docs.push_back({"doc" + std::to_string(d + 1), std::move(sd[d]), std::move(td[d])});
  }
  return docs;
}

void write_document_file(const std::filesystem::path& path, const std::vector<std::vector<Sentence>>& docs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d) out << '\n';
    for (const auto& s : docs[d]) out << join(s) << '\n';
  }
}

void write_documents(const std::filesystem::path& src_path, const std::filesystem::path& trg_path,
                     const std::vector<TextDocument>& docs) {
  std::vector<std::vector<Sentence>> src, trg;
  for (const auto& d : docs) {
    src.push_back(d.src);
    trg.push_back(d.trg);
  }
  write_document_file(src_path, src);
  write_document_file(trg_path, trg);
}

std::vector<Document> to_ids(const std::vector<TextDocument>& docs, const Vocabulary& src_vocab,
                             const Vocabulary& trg_vocab) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    Document doc;
    doc.id = d.id;
    for (const auto& s : d.src) doc.src.push_back(src_vocab.encode(s));
    for (const auto& s : d.trg) doc.trg.push_back(trg_vocab.encode(s));
    out.push_back(std::move(doc));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_docs == 0 || sentences_per_doc == 0 || min_len == 0 || content_vocab == 0 || n_ambiguous == 0) {
    throw UsageError("synthetic spec: all counts must be positive");
  }
  if (min_len > max_len) throw UsageError("synthetic spec: min_len exceeds max_len");
  if (!(ambiguous_prob > 0.0 && ambiguous_prob <= 1.0)) throw UsageError("synthetic spec: probability must be in (0, 1]");
  if (n_ambiguous > content_vocab) throw UsageError("synthetic spec: more ambiguous types than content tokens");
}

std::string synthetic_marker(bool topic_a) { return topic_a ? "topic_a" : "topic_b"; }

bool is_ambiguous_source(const std::string& token) {
  return token.size() > 3 && token.compare(0, 3, "amb") == 0 && token.find('_') == std::string::npos;
}

std::string ambiguous_rendering(const std::string& src_token, bool topic_a) {
  return src_token + (topic_a ? "_a" : "_b");
}

namespace {

std::vector<TextDocument> generate_split(const SyntheticSpec& spec, const std::vector<std::size_t>& bijection,
                                         std::size_t n_docs, std::uint64_t stream, const std::string& prefix) {
  std::seed_seq seq{spec.seed, stream};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> len_dist(spec.min_len, spec.max_len);
  std::uniform_int_distribution<std::size_t> content_dist(0, spec.content_vocab - 1);
  std::uniform_int_distribution<std::size_t> amb_dist(0, spec.n_ambiguous - 1);
  std::bernoulli_distribution topic_dist(0.5);
  std::bernoulli_distribution amb_present(spec.ambiguous_prob);

  std::vector<TextDocument> docs;
  docs.reserve(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) {
    TextDocument doc;
    doc.id = prefix + std::to_string(d + 1);
    const bool topic_a = topic_dist(rng);
    for (std::size_t s = 0; s < spec.sentences_per_doc; ++s) {
      const std::size_t len = len_dist(rng);
      Sentence src, trg;
      std::size_t first = 0;
      if (s == 0) {
        const std::size_t n_markers = spec.header_sentence ? len : 1;
        src.assign(n_markers, synthetic_marker(topic_a));
        trg.assign(n_markers, synthetic_marker(topic_a));
        first = 1;
      }
      if (s == 0 && spec.header_sentence) first = len;
      for (std::size_t k = first; k < len; ++k) {
        const std::size_t w = content_dist(rng);
        src.push_back("w" + std::to_string(w));
        trg.push_back("v" + std::to_string(bijection[w]));
      }
      if (s > 0 && amb_present(rng)) {
        std::uniform_int_distribution<std::size_t> pos_dist(0, len - 1);
        const std::size_t pos = pos_dist(rng);
        const std::string amb = "amb" + std::to_string(amb_dist(rng));
        src[pos] = amb;
        trg[pos] = ambiguous_rendering(amb, topic_a);
      }
      doc.src.push_back(std::move(src));
      doc.trg.push_back(std::move(trg));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::size_t> bijection(spec.content_vocab);
  std::iota(bijection.begin(), bijection.end(), 0);
  std::mt19937_64 perm_rng(spec.seed);
  std::shuffle(bijection.begin(), bijection.end(), perm_rng);
  SyntheticCorpus c;
  c.train = generate_split(spec, bijection, spec.n_docs, 1, "train");
  c.dev = generate_split(spec, bijection, spec.n_dev_docs, 2, "dev");
  c.test = generate_split(spec, bijection, spec.n_test_docs, 3, "test");
  return c;
}

AmbiguityScore ambiguous_accuracy(const std::vector<TextDocument>& gold,
                                  const std::vector<std::vector<Sentence>>& candidates) {
  if (gold.size() != candidates.size()) throw DataError("ambiguous_accuracy: document count mismatch");
  AmbiguityScore score;
  for (std::size_t d = 0; d < gold.size(); ++d) {
    if (gold[d].src.size() != candidates[d].size()) throw DataError("ambiguous_accuracy: sentence count mismatch");
    const bool topic_a = !gold[d].src.empty() && !gold[d].src[0].empty() && gold[d].src[0][0] == synthetic_marker(true);
    for (std::size_t s = 0; s < gold[d].src.size(); ++s) {
      const auto& cand = candidates[d][s];
      for (const auto& tok : gold[d].src[s]) {
        if (!is_ambiguous_source(tok)) continue;
        const bool has_gold = std::find(cand.begin(), cand.end(), ambiguous_rendering(tok, topic_a)) != cand.end();
        const bool has_other = std::find(cand.begin(), cand.end(), ambiguous_rendering(tok, !topic_a)) != cand.end();
        ++score.total;
        if (has_gold && !has_other) ++score.correct;
      }
    }
  }
  return score;
}

}  // namespace docnmt
