#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridscope/attn_control.hpp"
#include "hybridscope/model.hpp"
#include "hybridscope/retrieval_map.hpp"
#include "hybridscope/rubric.hpp"
#include "hybridscope/tokenizer.hpp"

namespace hybridscope {

enum class TemplateStyle { kBase, kInstruct };
/// Repeated-context layouts: CONTEXT QUESTION CONTEXT QUESTION, or
/// CONTEXT CONTEXT QUESTION.
enum class JrtLayout { kContextQuestionTwice, kContextTwice };

/// One grid cell. Lengths count tokens including BOS; with jrt the prompt is
/// built for target_length and then repeated.
struct PromptSpec {
  int target_length = 0;
  double depth_fraction = 0.0;
  TemplateStyle style = TemplateStyle::kBase;
  bool jrt = false;
};

/// Lengths max/n .. max evenly spaced, depths 0 .. 1 inclusive; lengths vary
/// slowest.
std::vector<PromptSpec> make_grid(int max_length, int n_lengths, int n_depths,
                                  TemplateStyle style = TemplateStyle::kBase, bool jrt = false);

/// Collapses whitespace and splits after '.', '!' or '?' followed by
/// whitespace.
std::vector<std::string> split_sentences(std::string_view text);
/// Sentences of every *.txt file in `dir`, files in lexicographic order.
std::vector<std::string> load_corpus(const std::string& dir);
/// Seeded filler prose over a small vocabulary that shares no word with the
/// default needle, question or templates.
std::string synthetic_filler(std::uint64_t seed, int n_sentences);

struct Haystack {
  std::string text;
  std::size_t needle_offset = 0;  // byte offset of the needle in text
  int filler_tokens = 0;
  int tokens_before_needle = 0;
};

/// Fills `filler_budget` tokens from `sentences` in order (whole sentences,
/// then a cut sentence if more than `slack` tokens are still missing) and
/// inserts "<needle>." at the sentence boundary closest to
/// depth_fraction * filler_tokens. Throws InvalidInput when the corpus runs
/// out.
Haystack build_haystack(std::span<const std::string> sentences, int filler_budget, std::string_view needle,
                        double depth_fraction, int slack);

std::string render_prompt(std::string_view haystack, std::string_view question, TemplateStyle style);
std::string apply_jrt(std::string_view haystack, std::string_view question, TemplateStyle style,
                      JrtLayout layout = JrtLayout::kContextQuestionTwice);

struct NiahPrompt {
  PromptSpec spec;
  std::string text;
  /// Absolute token positions (BOS is position 0); one span per context copy.
  std::vector<NeedleSpan> needle_spans;
  int token_count = 0;  // including BOS
  int filler_tokens = 0;
};

/// Builds the haystack for spec.target_length, renders it and locates the
/// needle tokens. Throws InvalidInput when the target cannot hold the
/// template and needle.
NiahPrompt build_prompt(std::span<const std::string> sentences, const PromptSpec& spec, const NeedleSpec& needle,
                        JrtLayout layout = JrtLayout::kContextQuestionTwice);
std::vector<NiahPrompt> build_prompts(std::span<const std::string> sentences, std::span<const PromptSpec> grid,
                                      const NeedleSpec& needle, JrtLayout layout = JrtLayout::kContextQuestionTwice);

/// Vocabulary covering every prompt.
Tokenizer niah_vocabulary(std::span<const NiahPrompt> prompts);
/// BOS, then the prompt's ids; ids the model does not know become UNK.
std::vector<int> prompt_ids(const Tokenizer& tokenizer, const NiahPrompt& prompt, int model_vocab);

/// Induction retriever over `tokenizer`'s vocabulary, cued to start
/// answering with the needle's first token after a template ending.
HybridModel build_niah_oracle(const Tokenizer& tokenizer, const NeedleSpec& needle, int max_seq_len,
                              int n_heads = 4);

struct NiahOptions {
  int budget = 32;
  std::set<int> stop_tokens;
  ControlOptions control;
};

struct CellOutcome {
  PromptSpec spec;
  int prompt_tokens = 0;
  std::string output;
  double score = 0.0;
};

struct NiahResult {
  ManipulationPolicy policy;
  RetrievalMap map;
  std::vector<CellOutcome> cells;
};

/// Scores every prompt under `policy`; the needle spans come from each
/// prompt. Generation stops early if the sequence would exceed the model's
/// max_seq_len.
NiahResult run_niah(const HybridModel& model, const Tokenizer& tokenizer, std::span<const NiahPrompt> prompts,
                    const ManipulationPolicy& policy, const NeedleSpec& needle, const NiahOptions& options = {});
/// Same as calling run_niah per policy; policies with identical prefill
/// settings share one prefill per prompt.
std::vector<NiahResult> run_niah_batch(const HybridModel& model, const Tokenizer& tokenizer,
                                       std::span<const NiahPrompt> prompts,
                                       std::span<const ManipulationPolicy> policies, const NeedleSpec& needle,
                                       const NiahOptions& options = {});

}  // namespace hybridscope
