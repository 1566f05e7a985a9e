#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hybridscope/error.hpp"
#include "hybridscope/mcq.hpp"
#include "hybridscope/numerics.hpp"
#include "hybridscope/retriever.hpp"

using namespace hybridscope;

namespace {

HybridModel copy_oracle(const Tokenizer& tok) {
  RetrieverOptions o;
  o.max_seq_len = 256;
  return build_induction_retriever(std::max(tok.size(), 4), o);
}

}  // namespace

TEST_CASE("log-likelihood under uniform logits") {
  const std::vector<std::string> texts{"a b c d e "};
  const Tokenizer tok = Tokenizer::from_texts(texts);
  ModelConfig c = make_config(tok.size(), 2, 4, std::nullopt, "1S,1A", true, 32);
  ModelWeights w = HybridModel::random(c, 1).export_weights();
  w.unembed.setZero();
  const HybridModel m(c, w);
  int n = 0;
  const double ll = choice_loglik(m, tok, "a b ", "c d e ", parse_policy("Keep-Keep"), {}, &n);
  CHECK(n == 3);
  CHECK(ll == doctest::Approx(3.0 * std::log(1.0 / tok.size())).epsilon(1e-12));
}

TEST_CASE("log-likelihood matches step-by-step decoding") {
  const std::vector<std::string> texts{"x y z w v "};
  const Tokenizer tok = Tokenizer::from_texts(texts);
  const HybridModel m = HybridModel::random(make_config(tok.size(), 2, 4, 3, "1S,1A,1S", true, 32), 9);
  const auto ctx = tok.encode("x y z ");
  const auto ch = tok.encode("w v ");
  std::vector<int> prompt{kBosToken};
  prompt.insert(prompt.end(), ctx.begin(), ctx.end());
  Session s(m);
  double expect = 0;
  std::vector<double> logits = s.prefill(prompt).last();
  for (int t : ch) {
    expect += log_softmax(logits)[static_cast<std::size_t>(t)];
    logits = s.step(t).last();
  }
  CHECK(choice_loglik(m, tok, "x y z ", "w v ", parse_policy("Keep-Keep")) == doctest::Approx(expect).epsilon(1e-9));
  CHECK_THROWS_AS(choice_loglik(m, tok, "x ", "", parse_policy("Keep-Keep")), InvalidInput);
}

TEST_CASE("copy task: oracle solves it, silenced attention sits at chance") {
  const auto items = make_copy_task(11, 200);
  const Tokenizer tok = task_vocabulary(items);
  const HybridModel m = copy_oracle(tok);
  CHECK(evaluate_task(m, tok, items, parse_policy("Keep-Keep")).accuracy == 1.0);
  CHECK(evaluate_task(m, tok, items, parse_policy("Keep-Keep,kP=1")).accuracy == 1.0);
  const double chance = evaluate_task(m, tok, items, parse_policy("Keep-Keep,kP=0")).accuracy;
  CHECK(chance >= 0.15);
  CHECK(chance <= 0.35);
  McqOptions norm;
  norm.length_normalized = true;
  CHECK(evaluate_task(m, tok, items, parse_policy("Keep-Keep"), norm).accuracy == 1.0);
}

TEST_CASE("copy task generator") {
  const auto a = make_copy_task(3, 20, 5, 10, 40);
  CHECK(a.size() == 20);
  for (const McqItem& it : a) {
    CHECK(it.choices.size() == 5);
    CHECK(it.answer >= 0);
    CHECK(it.answer < 5);
    for (int i = 0; i < 5; ++i) {
      if (i != it.answer) CHECK(it.context.find(it.choices[static_cast<std::size_t>(i)]) == std::string::npos);
    }
  }
  CHECK(task_to_jsonl(a) == task_to_jsonl(make_copy_task(3, 20, 5, 10, 40)));
}

TEST_CASE("task files") {
  std::vector<McqItem> items = make_copy_task(4, 3);
  items[1].fewshot = {{"p q ", "r "}, {"s ", "t "}};
  const std::string text = task_to_jsonl(items);
  const auto back = parse_task_jsonl(text);
  REQUIRE(back.size() == 3);
  CHECK(back[1].fewshot == items[1].fewshot);
  CHECK(task_to_jsonl(back) == text);

  try {
    parse_task_jsonl("{\"context\":\"a\",\"choices\":[\"b\",\"c\"],\"answer\":0}\n\n{oops\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 3);
  }
  CHECK_THROWS_AS(parse_task_jsonl("{\"context\":\"a\",\"choices\":[\"b\"]}\n"), ParseError);
  CHECK_THROWS_AS(load_task_file("/nonexistent/task.jsonl"), IoError);
}

TEST_CASE("evaluation input checks and demonstrations") {
  const auto items = make_copy_task(2, 5);
  const Tokenizer tok = task_vocabulary(items);
  const HybridModel m = copy_oracle(tok);
  CHECK_THROWS_AS(evaluate_task(m, tok, {}, parse_policy("Keep-Keep")), InvalidInput);
  McqOptions two;
  two.fewshot_k = 2;
  CHECK_THROWS_AS(evaluate_task(m, tok, items, parse_policy("Keep-Keep"), two), InvalidInput);

  std::vector<McqItem> with_demo = items;
  for (McqItem& it : with_demo) it.fewshot = {{items[0].context, items[0].choices[static_cast<std::size_t>(items[0].answer)]}};
  const Tokenizer tok2 = task_vocabulary(with_demo);
  const HybridModel m2 = copy_oracle(tok2);
  McqOptions one;
  one.fewshot_k = 1;
  const McqResult r = evaluate_task(m2, tok2, with_demo, parse_policy("Keep-Keep"), one);
  CHECK(r.items.size() == 5);
  CHECK(r.items[0].logliks.size() == 4);
}
