#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "docnmt/document.hpp"

namespace docnmt {

using Sentence = std::vector<std::string>;

struct TextDocument {
  std::string id;
  std::vector<Sentence> src;
  std::vector<Sentence> trg;
};

inline const std::string kUnkToken = "<unk>";
inline const std::string kStartToken = "<s>";
inline const std::string kEndToken = "</s>";

// Ids 0..2 are <unk>, <s>, </s>; the remaining ids follow descending count
// with ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(const std::vector<Sentence>& corpus, std::size_t min_freq = 5);
  // "token<TAB>count" per line; ids follow line order after the reserved block.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;  // unk when absent
  const std::string& token(std::size_t id) const;
  std::size_t count(std::size_t id) const { return counts_.at(id); }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  TokenIds encode(const Sentence& s) const;
  // Stops at the end token; drops start tokens.
  Sentence decode(const TokenIds& ids) const;

 private:
  void add(const std::string& token, std::size_t count);

  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::map<std::string, std::size_t> index_;
};

std::vector<Sentence> source_sentences(const std::vector<TextDocument>& docs);
std::vector<Sentence> target_sentences(const std::vector<TextDocument>& docs);

Sentence tokenize(const std::string& line, bool lowercase = false);
std::string join(const Sentence& s);

// One sentence per line; documents separated by one blank line. A trailing
// blank line does not open a new document. Documents shorter than
// min_sentences are dropped after alignment is checked.
std::vector<std::vector<Sentence>> read_document_file(const std::filesystem::path& path, bool lowercase = false);
// Reads a file whose lines correspond one to one with `layout` (e.g. system
// output against its source). Document breaks come from the layout, so an
// empty translation stays a sentence.
std::vector<std::vector<Sentence>> read_aligned_document_file(const std::filesystem::path& path,
                                                              const std::filesystem::path& layout,
                                                              bool lowercase = false);
std::vector<TextDocument> load_documents(const std::filesystem::path& src_path, const std::filesystem::path& trg_path,
                                         std::size_t min_sentences = 1, bool lowercase = false);
void write_document_file(const std::filesystem::path& path, const std::vector<std::vector<Sentence>>& docs);
void write_documents(const std::filesystem::path& src_path, const std::filesystem::path& trg_path,
                     const std::vector<TextDocument>& docs);

std::vector<Document> to_ids(const std::vector<TextDocument>& docs, const Vocabulary& src_vocab,
                             const Vocabulary& trg_vocab);

// Seeded synthetic corpus for document-context experiments. Each document
// picks a topic A or B; sentence 1 opens with the topic marker (by default
// it is a header made only of the marker). Later
// sentences may carry an ambiguous token whose translation depends on the
// topic; content tokens translate through a fixed bijection.
struct SyntheticSpec {
  std::size_t n_docs = 200;
  std::size_t n_dev_docs = 40;
  std::size_t n_test_docs = 40;
  std::size_t sentences_per_doc = 8;
  std::size_t min_len = 4;
  std::size_t max_len = 8;
  std::size_t content_vocab = 40;
  std::size_t n_ambiguous = 6;
  double ambiguous_prob = 0.6;
  bool header_sentence = true;  // sentence 1 is the marker repeated; otherwise marker then content
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<TextDocument> train;
  std::vector<TextDocument> dev;
  std::vector<TextDocument> test;
};

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec);

std::string synthetic_marker(bool topic_a);
bool is_ambiguous_source(const std::string& token);
// amb3 -> amb3_a / amb3_b
std::string ambiguous_rendering(const std::string& src_token, bool topic_a);

struct AmbiguityScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};
// An ambiguous source occurrence counts as correct when the candidate
// sentence contains the gold rendering and not the opposite topic's.
AmbiguityScore ambiguous_accuracy(const std::vector<TextDocument>& gold,
                                  const std::vector<std::vector<Sentence>>& candidates);

}  // namespace docnmt
