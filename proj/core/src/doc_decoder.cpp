#include "docnmt/doc_decoder.hpp"

#include "docnmt/config.hpp"
#include "docnmt/errors.hpp"

namespace docnmt {

std::string format_audit(const AuditRecord& r) {
  return r.doc_id + '\t' + std::to_string(r.pass) + '\t' + std::to_string(r.sentence) + '\t' +
         (r.changed ? "changed" : "kept") + '\t' + format_double(r.old_score) + '\t' + format_double(r.new_score);
}

BcdResult bcd_decode(const Model& base, const Model& model, const DocModelConfig& cfg,
                     const std::vector<TokenIds>& src, std::size_t passes, const Searcher& search,
                     const std::string& doc_id) {
  cfg.validate();
  if (src.empty()) throw DataError("document '" + doc_id + "' has no sentences");
  BcdResult res;
  std::vector<Tensor> states;
  for (const auto& x : src) {
    Tape tape(&base.params);
    Annotations ann = encode(tape, base.nmt, x);
    res.translations.push_back(search(tape, base.nmt, ann, {}));
    states.push_back(res.translations.back().trace.final_state);
  }
  if (passes == 0) return res;

  // The source memory depends only on the source side; its sentence
  // representations are shared by every pass.
  const std::vector<Tensor> reps = cfg.uses_src() ? lm_representations(model, src) : std::vector<Tensor>{};
  for (std::size_t pass = 1; pass <= passes; ++pass) {
    for (std::size_t t = 0; t < src.size(); ++t) {
      Tape tape(&model.params);
      DocumentMemories mems = build_memories(tape, model, cfg, src, &states, reps);
      Annotations ann = encode(tape, model.nmt, src[t]);
      DecoderContext ctx = sentence_context(tape, model, cfg, ann, t, mems);
      Hypothesis hyp = search(tape, model.nmt, ann, ctx);

      AuditRecord rec{doc_id, pass, t, hyp.tokens != res.translations[t].tokens, 0.0, 0.0};
      rec.old_score = sequence_log_prob(tape, model.nmt, ann, res.translations[t].tokens, ctx);
      rec.new_score = sequence_log_prob(tape, model.nmt, ann, hyp.tokens, ctx);
      if (rec.changed) {
        states[t] = hyp.trace.final_state;
        res.translations[t] = std::move(hyp);
      }
      res.audit.push_back(std::move(rec));
    }
  }
  return res;
}

}  // namespace docnmt
