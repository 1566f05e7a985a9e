#include "hybridscope/niah.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "hybridscope/error.hpp"
#include "hybridscope/retriever.hpp"

namespace hybridscope {
namespace {

constexpr std::string_view kContextHead = "CONTEXT:\n";
constexpr std::string_view kQuestionHead = "\n\nQUESTION:\n";
constexpr std::string_view kBaseTail = "\n\nANSWER: Here is the most relevant sentence in the context:\n";
constexpr std::string_view kInstructTail = " Output the most relevant sentence in the context, word by word!\n";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

struct Rendered {
  std::string text;
  std::vector<std::size_t> context_offsets;
};

Rendered render(std::string_view hay, std::string_view question, TemplateStyle style, bool jrt, JrtLayout layout) {
  Rendered r;
  auto context = [&] {
    r.text += kContextHead;
    r.context_offsets.push_back(r.text.size());
    r.text += hay;
  };
  auto question_block = [&] {
    r.text += kQuestionHead;
    r.text += question;
  };
  context();
  if (jrt) {
    if (layout == JrtLayout::kContextQuestionTwice) question_block();
    r.text += "\n\n";
    context();
  }
  question_block();
  r.text += style == TemplateStyle::kBase ? kBaseTail : kInstructTail;
  return r;
}

// Index of the piece that starts at byte `offset`; throws if none does.
int piece_at(const std::vector<std::string>& pieces, std::size_t offset) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i <= pieces.size(); ++i) {
    if (pos == offset) return static_cast<int>(i);
    if (pos > offset || i == pieces.size()) break;
    pos += pieces[i].size();
  }
  throw InternalError("needle does not start on a token boundary");
}

}  // namespace

std::vector<PromptSpec> make_grid(int max_length, int n_lengths, int n_depths, TemplateStyle style, bool jrt) {
  if (max_length < 1 || n_lengths < 1 || n_depths < 1) throw InvalidInput("grid dimensions must be positive");
  std::vector<PromptSpec> grid;
  for (int i = 0; i < n_lengths; ++i) {
    const int len = static_cast<int>(static_cast<long long>(max_length) * (i + 1) / n_lengths);
    for (int j = 0; j < n_depths; ++j) {
      const double depth = n_depths == 1 ? 0.0 : static_cast<double>(j) / (n_depths - 1);
      grid.push_back({len, depth, style, jrt});
    }
  }
  return grid;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::string flat;
  for (char c : text) {
    if (is_space(c)) {
      if (!flat.empty() && flat.back() != ' ') flat += ' ';
    } else {
      flat += c;
    }
  }
  if (!flat.empty() && flat.back() == ' ') flat.pop_back();
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const char c = flat[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < flat.size() && flat[i + 1] == ' ') {
      out.push_back(flat.substr(start, i + 1 - start));
      start = i + 2;
    }
  }
  if (start < flat.size()) out.push_back(flat.substr(start));
  return out;
}

std::vector<std::string> load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("corpus directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  std::vector<std::string> sentences;
  for (const fs::path& f : files) {
    for (std::string& s : split_sentences(read_text_file(f.string()))) sentences.push_back(std::move(s));
  }
  if (sentences.empty()) throw InvalidInput("corpus directory has no text: " + dir);
  return sentences;
}

std::string synthetic_filler(std::uint64_t seed, int n_sentences) {
  static const std::vector<std::string> subjects = {"Otters", "Pilots", "Farmers", "Robots", "Sailors", "Painters",
                                                    "Monks", "Bakers", "Foxes", "Miners", "Clerks", "Poets"};
  static const std::vector<std::string> verbs = {"polish", "carry", "follow", "measure", "gather", "repair",
                                                 "sketch", "count", "guard", "trade", "weigh", "sort"};
  static const std::vector<std::string> adjectives = {"green", "copper", "quiet", "wooden", "silver", "narrow",
                                                      "heavy", "bright", "cold", "amber"};
  static const std::vector<std::string> objects = {"lanterns", "ropes", "maps", "barrels", "bridges", "kettles",
                                                   "ladders", "pebbles", "drums", "shells"};
  static const std::vector<std::string> tails = {"slowly", "together", "again", "before dawn", "every winter",
                                                 "without pause", "near harbors", "after rain"};
  if (n_sentences < 0) throw InvalidInput("negative sentence count");
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::string out;
  for (int i = 0; i < n_sentences; ++i) {
    if (i) out += ' ';
    out += pick(subjects) + " " + pick(verbs) + " " + pick(adjectives) + " " + pick(objects);
    if (rng() % 3 == 0) out += ", " + pick(verbs) + " " + pick(objects);
    out += " " + pick(tails) + ".";
  }
  return out;
}

Haystack build_haystack(std::span<const std::string> sentences, int filler_budget, std::string_view needle,
                        double depth_fraction, int slack) {
  if (!(depth_fraction >= 0.0 && depth_fraction <= 1.0)) throw InvalidInput("depth fraction outside [0, 1]");
  if (filler_budget < 0) throw InvalidInput("negative filler budget");
  if (needle.empty()) throw InvalidInput("empty needle");

  std::vector<std::string> filler;
  std::vector<int> counts;
  int used = 0;
  std::size_t next = 0;
  for (; next < sentences.size(); ++next) {
    const int c = Tokenizer::count(sentences[next]);
    if (used + c > filler_budget) break;
    filler.push_back(sentences[next]);
    counts.push_back(c);
    used += c;
  }
  const int remainder = filler_budget - used;
  if (remainder > slack) {
    if (next >= sentences.size()) {
      throw InvalidInput("corpus too small: " + std::to_string(used) + " tokens available, " +
                         std::to_string(filler_budget) + " needed");
    }
    if (remainder >= 2) {
      std::vector<std::string> pieces = Tokenizer::split(sentences[next]);
      pieces.resize(static_cast<std::size_t>(remainder - 1));
      std::string cut;
      for (const std::string& p : pieces) cut += p;
      while (!cut.empty() && is_space(cut.back())) cut.pop_back();
      cut += '.';
      counts.push_back(Tokenizer::count(cut));
      filler.push_back(std::move(cut));
      used += counts.back();
    }
  }

  // Sentence boundary closest to the requested depth; ties go to the earlier one.
  const double want = std::round(depth_fraction * used);
  std::size_t slot = 0;
  int before = 0;
  double best = want;
  for (std::size_t i = 0, cum = 0; i < counts.size(); ++i) {
    cum += static_cast<std::size_t>(counts[i]);
    const double dist = std::abs(static_cast<double>(cum) - want);
    if (dist < best) {
      best = dist;
      slot = i + 1;
      before = static_cast<int>(cum);
    }
  }

  Haystack h;
  h.filler_tokens = used;
  h.tokens_before_needle = before;
  for (std::size_t i = 0; i <= filler.size(); ++i) {
    if (i == slot) {
      if (!h.text.empty()) h.text += ' ';
      h.needle_offset = h.text.size();
      h.text += needle;
      h.text += '.';
    }
    if (i < filler.size()) {
      if (!h.text.empty()) h.text += ' ';
      h.text += filler[i];
    }
  }
  return h;
}

std::string render_prompt(std::string_view haystack, std::string_view question, TemplateStyle style) {
  return render(haystack, question, style, false, JrtLayout::kContextQuestionTwice).text;
}

std::string apply_jrt(std::string_view haystack, std::string_view question, TemplateStyle style, JrtLayout layout) {
  return render(haystack, question, style, true, layout).text;
}

NiahPrompt build_prompt(std::span<const std::string> sentences, const PromptSpec& spec, const NeedleSpec& needle,
                        JrtLayout layout) {
  const std::string needle_sentence = needle.needle + ".";
  // A one-word haystack shares its piece with the template's trailing
  // whitespace, so this count is BOS plus the template.
  const int overhead = Tokenizer::count(render_prompt("x", needle.question, spec.style));
  const int needle_tokens = Tokenizer::count(needle_sentence);
  const int budget = spec.target_length - overhead - needle_tokens;
  if (budget < 0) {
    throw InvalidInput("target length " + std::to_string(spec.target_length) + " cannot hold the template (" +
                       std::to_string(overhead) + " tokens) and the needle (" + std::to_string(needle_tokens) + ")");
  }
  const int slack = static_cast<int>(std::floor(0.02 * spec.target_length));
  const Haystack hay = build_haystack(sentences, budget, needle.needle, spec.depth_fraction, slack);
  const Rendered r = render(hay.text, needle.question, spec.style, spec.jrt, layout);

  NiahPrompt p;
  p.spec = spec;
  p.text = r.text;
  p.filler_tokens = hay.filler_tokens;
  const std::vector<std::string> pieces = Tokenizer::split(p.text);
  p.token_count = static_cast<int>(pieces.size()) + 1;
  for (std::size_t ctx : r.context_offsets) {
    const std::size_t at = ctx + hay.needle_offset;
    const int first = piece_at(pieces, at);
    const int last = piece_at(pieces, at + needle.needle.size());
    p.needle_spans.push_back({first + 1, last + 1});
  }
  return p;
}

std::vector<NiahPrompt> build_prompts(std::span<const std::string> sentences, std::span<const PromptSpec> grid,
                                      const NeedleSpec& needle, JrtLayout layout) {
  std::vector<NiahPrompt> out;
  out.reserve(grid.size());
  for (const PromptSpec& s : grid) out.push_back(build_prompt(sentences, s, needle, layout));
  return out;
}

Tokenizer niah_vocabulary(std::span<const NiahPrompt> prompts) {
  std::vector<std::string> texts;
  texts.reserve(prompts.size());
  for (const NiahPrompt& p : prompts) texts.push_back(p.text);
  return Tokenizer::from_texts(texts);
}

std::vector<int> prompt_ids(const Tokenizer& tokenizer, const NiahPrompt& prompt, int model_vocab) {
  std::vector<int> ids{kBosToken};
  for (int id : tokenizer.encode(prompt.text)) ids.push_back(id < model_vocab ? id : kUnkToken);
  return ids;
}

HybridModel build_niah_oracle(const Tokenizer& tokenizer, const NeedleSpec& needle, int max_seq_len, int n_heads) {
  RetrieverOptions o;
  o.n_heads = n_heads;
  o.max_seq_len = max_seq_len;
  o.bos_token = kBosToken;
  for (const char* cue : {":\n", "!\n"}) {
    if (auto id = tokenizer.id(cue)) o.cue_tokens.push_back(*id);
  }
  const std::vector<std::string> pieces = Tokenizer::split(needle.needle);
  if (!pieces.empty()) o.answer_start_token = tokenizer.id(pieces.front()).value_or(-1);
  return build_induction_retriever(tokenizer.size(), o);
}

NiahResult run_niah(const HybridModel& model, const Tokenizer& tokenizer, std::span<const NiahPrompt> prompts,
                    const ManipulationPolicy& policy, const NeedleSpec& needle, const NiahOptions& options) {
  return run_niah_batch(model, tokenizer, prompts, std::span<const ManipulationPolicy>(&policy, 1), needle,
                        options)
      .front();
}

std::vector<NiahResult> run_niah_batch(const HybridModel& model, const Tokenizer& tokenizer,
                                       std::span<const NiahPrompt> prompts,
                                       std::span<const ManipulationPolicy> policies, const NeedleSpec& needle,
                                       const NiahOptions& options) {
  const ModelConfig& cfg = model.config();
  if (options.budget < 1) throw InvalidInput("generation budget must be at least 1");
  std::vector<NiahResult> results(policies.size());
  // Group policies that prefill identically.
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    ManipulationPolicy check = policies[i];
    check.needle = {{0, 1}};
    check.validate(cfg.n_heads);
    results[i].policy = policies[i];
    groups[{static_cast<int>(policies[i].prefill), policies[i].k_prefill.value_or(cfg.n_heads)}].push_back(i);
  }

  for (const NiahPrompt& prompt : prompts) {
    const std::vector<int> ids = prompt_ids(tokenizer, prompt, cfg.vocab_size);
    const int room = cfg.max_seq_len - static_cast<int>(ids.size()) + 1;
    if (room < 1) {
      throw InvalidInput("prompt of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                         std::to_string(cfg.max_seq_len));
    }
    const int budget = std::min(options.budget, room);
    for (const auto& [key, members] : groups) {
      ManipulationPolicy first = policies[members.front()];
      first.needle = prompt.needle_spans;
      Session base(model);
      PolicyController prefiller(first, cfg.n_heads, options.control);
      const ForwardOutput out = prefiller.prefill(base, ids);
      for (std::size_t m = 0; m < members.size(); ++m) {
        const std::size_t idx = members[m];
        ManipulationPolicy pol = policies[idx];
        pol.needle = prompt.needle_spans;
        Session session = m + 1 == members.size() ? std::move(base) : base;
        PolicyController controller(pol, cfg.n_heads, options.control);
        controller.adopt_prefill(prefiller);
        const std::vector<int> gen = controller.generate(session, out, budget, options.stop_tokens);
        CellOutcome cell{prompt.spec, static_cast<int>(ids.size()), tokenizer.decode(gen), 0.0};
        cell.score = needle.rubric.score(cell.output);
        results[idx].map.cells.push_back({prompt.spec.target_length, prompt.spec.depth_fraction, cell.score});
        results[idx].cells.push_back(std::move(cell));
      }
    }
  }
  return results;
}

}  // namespace hybridscope
