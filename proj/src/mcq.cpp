#include "hybridscope/mcq.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hybridscope/error.hpp"
#include "hybridscope/numerics.hpp"
#include "hybridscope/retrieval_map.hpp"

namespace hybridscope {
namespace {

using nlohmann::json;

void append_ids(std::vector<int>& ids, const Tokenizer& tokenizer, std::string_view text, int vocab) {
  for (int id : tokenizer.encode(text)) ids.push_back(id < vocab ? id : kUnkToken);
}

void check_item(const McqItem& item) {
  if (item.choices.size() < 2) throw InvalidInput("an item needs at least two choices");
  for (const std::string& c : item.choices) {
    if (c.empty()) throw InvalidInput("empty choice text");
  }
  if (item.answer < 0 || item.answer >= static_cast<int>(item.choices.size())) {
    throw InvalidInput("answer index out of range");
  }
}

}  // namespace

double choice_loglik(const HybridModel& model, const Tokenizer& tokenizer, std::string_view context,
                     std::string_view choice, const ManipulationPolicy& policy, const ControlOptions& control,
                     int* n_choice_tokens) {
  const ModelConfig& cfg = model.config();
  std::vector<int> ids{kBosToken};
  append_ids(ids, tokenizer, context, cfg.vocab_size);
  const int n_context = static_cast<int>(ids.size());
  append_ids(ids, tokenizer, choice, cfg.vocab_size);
  const int n_choice = static_cast<int>(ids.size()) - n_context;
  if (n_choice == 0) throw InvalidInput("choice has no tokens");
  if (static_cast<int>(ids.size()) > cfg.max_seq_len) {
    throw InvalidInput("context and choice need " + std::to_string(ids.size()) + " tokens, max_seq_len is " +
                       std::to_string(cfg.max_seq_len));
  }
  Session session(model);
  PolicyController controller(policy, cfg.n_heads, control);
  const ForwardOutput out = controller.prefill(session, ids, nullptr, n_context - 1);
  double total = 0.0;
  for (int i = 0; i < n_choice; ++i) {
    const std::vector<double> lp = log_softmax(out.at(n_context - 1 + i));
    total += lp[static_cast<std::size_t>(ids[static_cast<std::size_t>(n_context + i)])];
  }
  if (n_choice_tokens) *n_choice_tokens = n_choice;
  return total;
}

McqResult evaluate_task(const HybridModel& model, const Tokenizer& tokenizer, const std::vector<McqItem>& items,
                        const ManipulationPolicy& policy, const McqOptions& options) {
  if (items.empty()) throw InvalidInput("no items to evaluate");
  if (options.fewshot_k < 0) throw InvalidInput("negative fewshot count");
  McqResult result;
  int correct = 0;
  for (const McqItem& item : items) {
    check_item(item);
    if (static_cast<int>(item.fewshot.size()) < options.fewshot_k) {
      throw InvalidInput("item has " + std::to_string(item.fewshot.size()) + " demonstrations, " +
                         std::to_string(options.fewshot_k) + " requested");
    }
    std::string context;
    for (int i = 0; i < options.fewshot_k; ++i) {
      context += item.fewshot[static_cast<std::size_t>(i)].first;
      context += item.fewshot[static_cast<std::size_t>(i)].second;
      context += "\n\n";
    }
    context += item.context;
    McqItemResult r;
    for (const std::string& choice : item.choices) {
      int n = 1;
      double ll = choice_loglik(model, tokenizer, context, choice, policy, options.control, &n);
      if (options.length_normalized) ll /= n;
      r.logliks.push_back(ll);
    }
    r.chosen = static_cast<int>(std::max_element(r.logliks.begin(), r.logliks.end()) - r.logliks.begin());
    if (r.chosen == item.answer) ++correct;
    result.items.push_back(std::move(r));
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  return result;
}

std::vector<McqItem> parse_task_jsonl(std::string_view text) {
  std::vector<McqItem> items;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      McqItem item;
      item.context = j.at("context").get<std::string>();
      item.choices = j.at("choices").get<std::vector<std::string>>();
      item.answer = j.at("answer").get<int>();
      if (j.contains("fewshot")) {
        for (const json& f : j.at("fewshot")) {
          item.fewshot.emplace_back(f.at("context").get<std::string>(), f.at("answer_text").get<std::string>());
        }
      }
      check_item(item);
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad task line: ") + e.what(), lineno);
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return items;
}

std::vector<McqItem> load_task_file(const std::string& path) { return parse_task_jsonl(read_text_file(path)); }

std::string task_to_jsonl(const std::vector<McqItem>& items) {
  std::string out;
  for (const McqItem& item : items) {
    json j;
    j["context"] = item.context;
    j["choices"] = item.choices;
    j["answer"] = item.answer;
    if (!item.fewshot.empty()) {
      json f = json::array();
      for (const auto& [c, a] : item.fewshot) f.push_back({{"context", c}, {"answer_text", a}});
      j["fewshot"] = f;
    }
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<McqItem> make_copy_task(std::uint64_t seed, int n_items, int n_choices, int context_words,
                                    int lexicon_size) {
  if (n_items < 1 || n_choices < 2 || context_words < 2) throw InvalidInput("copy task dimensions too small");
  if (lexicon_size < context_words + n_choices - 1) throw InvalidInput("lexicon too small for the copy task");
  std::mt19937_64 rng(seed);
  std::vector<int> lexicon(static_cast<std::size_t>(lexicon_size));
  std::iota(lexicon.begin(), lexicon.end(), 0);
  auto word = [](int i) { return "w" + std::to_string(i) + " "; };
  std::vector<McqItem> items;
  for (int n = 0; n < n_items; ++n) {
    std::shuffle(lexicon.begin(), lexicon.end(), rng);
    const int probe = static_cast<int>(rng() % static_cast<std::uint64_t>(context_words - 1));
    McqItem item;
    for (int i = 0; i < context_words; ++i) item.context += word(lexicon[static_cast<std::size_t>(i)]);
    item.context += word(lexicon[static_cast<std::size_t>(probe)]);
    item.answer = static_cast<int>(rng() % static_cast<std::uint64_t>(n_choices));
    for (int c = 0, d = 0; c < n_choices; ++c) {
      if (c == item.answer) {
        item.choices.push_back(word(lexicon[static_cast<std::size_t>(probe + 1)]));
      } else {
        item.choices.push_back(word(lexicon[static_cast<std::size_t>(context_words + d++)]));
      }
    }
    items.push_back(std::move(item));
  }
  return items;
}

Tokenizer task_vocabulary(const std::vector<McqItem>& items) {
  std::vector<std::string> texts;
  for (const McqItem& item : items) {
    texts.push_back(item.context);
    for (const std::string& c : item.choices) texts.push_back(c);
    for (const auto& [c, a] : item.fewshot) {
      texts.push_back(c);
      texts.push_back(a);
    }
  }
  return Tokenizer::from_texts(texts);
}

}  // namespace hybridscope
