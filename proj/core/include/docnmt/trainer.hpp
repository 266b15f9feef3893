#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "docnmt/config.hpp"
#include "docnmt/doc_model.hpp"

namespace docnmt {

// lr(e) = lr0 for e <= decay_after, then lr0 * decay^(e - decay_after).
struct Schedule {
  double lr0 = 0.1;
  double decay = 0.5;
  std::size_t decay_after = 4;
  std::size_t epochs = 10;

  double lr(std::size_t epoch) const;
  void validate(const std::string& what) const;
};

inline constexpr Schedule kStage1Schedule{0.1, 0.5, 4, 10};
inline constexpr Schedule kStage2Schedule{0.08, 0.9, 1, 15};

// The default schedule of stage 1 or 2, evaluated at a 1-based epoch.
double lr_schedule(int stage, std::size_t epoch);

enum class TargetMemorySource { kGenerated, kGold };
std::string to_string(TargetMemorySource s);
TargetMemorySource parse_target_memory_source(const std::string& s);

// Dropout used in stage 2: 0.2 everywhere with a single memory; with both
// memories 0.2 on the document RNN and 0.5 on encoder and decoder.
DropoutPlan default_stage2_dropout(MemorySelection memories);

struct TrainConfig {
  Schedule lm{0.1, 1.0, 0, 3};
  Schedule stage1 = kStage1Schedule;
  Schedule stage2 = kStage2Schedule;
  DropoutPlan stage1_dropout{};
  std::optional<DropoutPlan> stage2_dropout;  // unset: default_stage2_dropout
  std::size_t batch_size = 1;                 // sentences per stage-1 update; the loss is their mean
  bool stage2_mean_loss = true;               // stage-2 document loss averaged over its sentences
  double clip_norm = 5.0;                     // global gradient norm; 0 disables clipping
  TargetMemorySource target_memory = TargetMemorySource::kGenerated;
  SearchConfig search{};                      // used to produce generated target memories
  std::uint64_t seed = 1;

  void validate() const;
  // Reads "train.*" keys, falling back to the current values.
  static TrainConfig from_config(const Config& c);
  void to_config(Config& c) const;
};

// One line of the training log.
struct LogRecord {
  std::string stage;
  std::size_t epoch = 0;
  std::string split;
  double perplexity = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};
std::string format_record(const LogRecord& r);

class TrainLog {
 public:
  explicit TrainLog(std::ostream* echo = nullptr) : echo_(echo) {}
  void record(const LogRecord& r);
  void event(const std::string& stage, std::size_t epoch, const std::string& what);
  const std::vector<LogRecord>& records() const { return records_; }
  const std::vector<std::string>& events() const { return events_; }

 private:
  std::ostream* echo_;
  std::vector<LogRecord> records_;
  std::vector<std::string> events_;
};

struct StepOutcome {
  bool applied = false;
  double grad_norm = 0.0;
};
// p <- p - lr * g for every trainable tensor, after rescaling g to at most
// clip_norm. A non-finite gradient leaves params untouched.
StepOutcome sgd_step(ParamSet& params, ParamGrads& grads, double lr, double clip_norm = 0.0);

// Sentence-LM pretraining on the source side. perplexity[0] is measured
// before training and perplexity[e] after epoch e.
struct LmTrainResult {
  std::vector<double> perplexity;
};
LmTrainResult pretrain_sentence_lm(Model& m, const std::vector<TokenIds>& sentences, const TrainConfig& cfg,
                                   TrainLog* log = nullptr);

// Perplexity of the gold targets under the sentence-level model.
double snmt_perplexity(const Model& m, const std::vector<Document>& docs);

// Trains the translation parameters with empty document contexts and keeps
// the epoch with the lowest dev perplexity. dev_perplexity[e-1] is epoch e.
struct Stage1Result {
  std::vector<double> dev_perplexity;
  std::size_t best_epoch = 0;
};
Stage1Result train_stage1(Model& m, const std::vector<Document>& train, const std::vector<Document>& dev,
                          const TrainConfig& cfg, TrainLog* log = nullptr);

// Final decoder states of the translations forming each document's target
// memory: beam translations of the current sentence-level model, or the
// teacher-forced gold targets.
using DocStates = std::vector<std::vector<Tensor>>;
DocStates target_states(const Model& m, const std::vector<Document>& docs, TargetMemorySource source,
                        const SearchConfig& search);

// Sum of doc_nll over the documents, evaluation mode.
struct CorpusNll {
  double nll = 0.0;
  std::size_t tokens = 0;
  double perplexity() const;
};
CorpusNll corpus_doc_nll(const Model& m, const DocModelConfig& cfg, const std::vector<Document>& docs,
                         const DocStates& states);

// Trains every parameter except the frozen sentence LM, one document per
// update. Index 0 of both traces is the warm start.
struct Stage2Result {
  std::vector<double> train_nll;
  std::vector<double> dev_perplexity;
  std::size_t best_epoch = 0;
};
Stage2Result train_stage2(Model& m, const DocModelConfig& dcfg, const std::vector<Document>& train,
                          const std::vector<Document>& dev, const DocStates& train_states,
                          const DocStates& dev_states, const TrainConfig& cfg, TrainLog* log = nullptr);

}  // namespace docnmt
