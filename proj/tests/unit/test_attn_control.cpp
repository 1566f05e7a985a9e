#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "hybridscope/attn_control.hpp"
#include "hybridscope/error.hpp"
#include "hybridscope/retriever.hpp"

using namespace hybridscope;

namespace {

const std::vector<NeedleSpan> kMiddle{{1, 3}};

double sum_over(const ProbVector& w, int key_begin, const std::vector<NeedleSpan>& spans) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (const NeedleSpan& sp : spans) {
      if (sp.contains(key_begin + static_cast<int>(i))) {
        s += w[i];
        break;
      }
    }
  }
  return s;
}

}  // namespace

TEST_CASE("manipulation methods on a reference row") {
  const ProbVector row{0.1, 0.2, 0.3, 0.4};
  CHECK(manipulate_row(row, 0, kMiddle, ManipulationMethod::kKeep) == row);
  CHECK(manipulate_row(row, 0, kMiddle, ManipulationMethod::kOnly) == ProbVector{0, 0.2, 0.3, 0});
  CHECK(manipulate_row(row, 0, kMiddle, ManipulationMethod::kOmit) == ProbVector{0.1, 0, 0, 0.4});
  CHECK(manipulate_row(row, 0, kMiddle, ManipulationMethod::kBinary) == ProbVector{0, 0.25, 0.25, 0});
  CHECK(manipulate_row(row, 0, kMiddle, ManipulationMethod::kNull) == ProbVector{0, 0, 0, 0});
}

TEST_CASE("manipulation respects the visible window") {
  const ProbVector row{0.5, 0.5};
  const std::vector<NeedleSpan> far{{0, 3}};
  CHECK(manipulate_row(row, 10, far, ManipulationMethod::kOnly) == ProbVector{0, 0});
  CHECK(manipulate_row(row, 10, far, ManipulationMethod::kBinary) == ProbVector{0, 0});
  CHECK(manipulate_row(row, 10, far, ManipulationMethod::kOmit) == row);
  // Partial overlap: keys 10 and 11, needle 11..12.
  CHECK(manipulate_row(ProbVector{0.3, 0.7}, 10, std::vector<NeedleSpan>{{11, 13}}, ManipulationMethod::kBinary) ==
        ProbVector{0, 0.7});
  // Union of two spans.
  CHECK(manipulate_row(ProbVector{0.1, 0.2, 0.3, 0.4}, 0, std::vector<NeedleSpan>{{0, 1}, {3, 4}},
                       ManipulationMethod::kOnly) == ProbVector{0.1, 0, 0, 0.4});
  CHECK_THROWS_AS(manipulate_row(row, 0, std::vector<NeedleSpan>{{2, 2}}, ManipulationMethod::kOnly), InvalidInput);
  CHECK_THROWS_AS(manipulate_row(row, 0, std::vector<NeedleSpan>{{-1, 2}}, ManipulationMethod::kKeep), InvalidInput);
}

TEST_CASE("manipulation properties on random rows") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ManipulationMethod methods[] = {ManipulationMethod::kKeep, ManipulationMethod::kOnly, ManipulationMethod::kOmit,
                                        ManipulationMethod::kBinary, ManipulationMethod::kNull};
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 30);
    const int key_begin = static_cast<int>(rng() % 20);
    ProbVector row(static_cast<std::size_t>(n));
    for (double& x : row) x = u(rng);
    const int start = static_cast<int>(rng() % 50);
    const std::vector<NeedleSpan> span{{start, start + 1 + static_cast<int>(rng() % 20)}};
    double total = 0;
    for (double x : row) total += x;
    for (ManipulationMethod m : methods) {
      const ProbVector once = manipulate_row(row, key_begin, span, m);
      const ProbVector twice = manipulate_row(once, key_begin, span, m);
      for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::abs(twice[i] - once[i]) <= 1e-15);
      if (m != ManipulationMethod::kBinary) CHECK(twice == once);
      double after = 0;
      for (std::size_t i = 0; i < once.size(); ++i) {
        after += once[i];
        if (m != ManipulationMethod::kBinary) CHECK((once[i] == row[i] || once[i] == 0.0));
      }
      if (m == ManipulationMethod::kBinary) {
        CHECK(std::abs(sum_over(once, key_begin, span) - sum_over(row, key_begin, span)) < 1e-12);
      } else {
        CHECK(after <= total + 1e-15);
      }
    }
  }
}

TEST_CASE("policy text form") {
  const ManipulationPolicy a = parse_policy("Only-Null");
  CHECK(a.generation == ManipulationMethod::kOnly);
  CHECK(a.prefill == ManipulationMethod::kNull);
  CHECK(!a.k_generation);
  const ManipulationPolicy b = parse_policy("keep-KEEP,kG=0");
  CHECK(b.k_generation == 0);
  CHECK(!b.k_prefill);
  const ManipulationPolicy c = parse_policy("Binary-Omit,kP=3,kG=2");
  CHECK(format_policy(c) == "Binary-Omit,kG=2,kP=3");
  CHECK(parse_policy(format_policy(c)) == c);

  CHECK_THROWS_AS(parse_policy("Keep"), ParseError);
  CHECK_THROWS_AS(parse_policy("Keep-Drop"), ParseError);
  CHECK_THROWS_AS(parse_policy("Keep-Keep,kX=1"), ParseError);
  CHECK_THROWS_AS(parse_policy("Keep-Keep,kG=-1"), ParseError);
  CHECK_THROWS_AS(parse_policy("Keep-Keep,kG=1,kG=2"), ParseError);

  CHECK_THROWS_AS(parse_policy("Only-Keep").validate(4), InvalidInput);
  CHECK_THROWS_AS(parse_policy("Keep-Keep,kG=5").validate(4), InvalidInput);
  parse_policy("Null-Null").validate(4);
}

TEST_CASE("head entropies from a trace") {
  AttentionTrace t;
  t.rows.push_back({0, 2, 0, 5, 0, {1.0, 0.0}, {1.0, 0.0}});
  t.rows.push_back({0, 2, 0, 6, 0, {0.5, 0.5}, {0.5, 0.5}});
  t.rows.push_back({0, 2, 1, 5, 0, std::vector<double>(8, 0.125), std::vector<double>(8, 0.125)});
  t.rows.push_back({0, 2, 2, 5, 0, {0, 1, 0}, {0, 1, 0}});
  const auto h = head_entropies(t, 2, 3);
  CHECK(h == std::vector<double>{0.5, 3.0, 0.0});
  CHECK_THROWS_AS(head_entropies(t, 2, 4), InvalidInput);
  CHECK_THROWS_AS(head_entropies(t, 1, 3), InvalidInput);
}

TEST_CASE("top-k head selection") {
  CHECK(select_topk_heads(std::vector<double>{3.0, 0.5, 2.0}, 1) == std::vector<char>{0, 1, 0});
  CHECK(select_topk_heads(std::vector<double>{1.0, 1.0, 2.0}, 1) == std::vector<char>{1, 0, 0});
  CHECK(select_topk_heads(std::vector<double>{1.0, 1.0, 2.0}, 0) == std::vector<char>{0, 0, 0});
  CHECK(select_topk_heads(std::vector<double>{1.0, 1.0, 2.0}, 3) == std::vector<char>{1, 1, 1});
  CHECK_THROWS_AS(select_topk_heads(std::vector<double>{1.0}, 2), InvalidInput);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> e(7);
    for (double& x : e) x = static_cast<double>(rng() % 5);
    for (int k = 0; k < 7; ++k) {
      const auto a = select_topk_heads(e, k);
      const auto b = select_topk_heads(e, k + 1);
      int count = 0;
      for (int i = 0; i < 7; ++i) {
        CHECK((!a[i] || b[i]));
        count += a[i];
      }
      CHECK(count == k);
    }
  }

  LayerEntropies per_layer{{1, {0.0, 5.0}}, {3, {1.0, 2.0}}};
  const HeadMask global = select_topk_global(per_layer, 1);
  CHECK(global.at(1) == std::vector<char>{1, 0});
  CHECK(global.at(3) == std::vector<char>{1, 0});
  LayerEntropies skewed{{1, {0.0, 0.1}}, {3, {1.0, 2.0}}};
  CHECK(select_topk_global(skewed, 1).at(1) == std::vector<char>{1, 1});
  CHECK(select_topk_global(skewed, 1).at(3) == std::vector<char>{0, 0});
}

TEST_CASE("apply_head_mask zeroes whole heads") {
  RowMatrix out = RowMatrix::Constant(2, 6, 1.5);
  apply_head_mask(out, std::vector<char>{1, 0, 1}, 2);
  CHECK(out.middleCols(2, 2).isZero());
  CHECK(out.middleCols(0, 2).isConstant(1.5));
  CHECK(out.middleCols(4, 2).isConstant(1.5));
}

TEST_CASE("keep policy at k = N is bit-identical") {
  std::mt19937_64 rng(2);
  const HybridModel m = HybridModel::random(testing::small_config(4), 31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto tokens = testing::random_tokens(rng, 15, 16);
    Session a(m), b(m);
    PolicyController pc(parse_policy("Keep-Keep"), 3);
    const auto x = a.prefill(tokens, nullptr, nullptr, 0);
    const auto y = pc.prefill(b, tokens, nullptr, 0);
    CHECK(x.logits == y.logits);
    CHECK(a.step(5).logits == pc.step(b, 5).logits);
  }
}

TEST_CASE("masking a head equals a reference without that head") {
  std::mt19937_64 rng(6);
  ModelConfig c = make_config(16, 2, 4, std::nullopt, "1A", true, 32);
  const HybridModel m = HybridModel::random(c, 8);
  const auto tokens = testing::random_tokens(rng, 10, 16);

  struct KeepFirst : AttentionHook {
    void on_row(const RowInfo&, std::span<double>) override {}
    void head_mask(int, std::span<char> keep) override { keep[1] = 0; }
  } hook;
  Session s(m);
  const auto got = s.prefill(tokens, &hook, nullptr, 0);
  const auto ref = testing::reference_forward(m, tokens, {{1, 0}});
  for (int t = 0; t < 10; ++t) {
    const auto row = got.at(t);
    for (int i = 0; i < 16; ++i) CHECK(std::abs(row[static_cast<std::size_t>(i)] - ref[static_cast<std::size_t>(t)][i]) < 1e-12);
  }
}

TEST_CASE("k = 0 during generation silences attention only there") {
  // A single attention layer without SSM: silencing it leaves embed -> unembed.
  ModelConfig c = make_config(16, 2, 4, std::nullopt, "1A", true, 32);
  const HybridModel m = HybridModel::random(c, 3);
  const std::vector<int> prompt{2, 5, 7, 9};
  Session plain(m), sparse(m);
  PolicyController pc(parse_policy("Keep-Keep,kG=0"), 2);
  CHECK(plain.prefill(prompt).logits == pc.prefill(sparse, prompt).logits);
  const auto step = pc.step(sparse, 4).last();
  const Eigen::VectorXd direct = m.unembedding().apply(m.embedding().row(4).transpose());
  for (int i = 0; i < 16; ++i) CHECK(step[static_cast<std::size_t>(i)] == doctest::Approx(direct[i]).epsilon(1e-12));
}

TEST_CASE("Only-Null policy on the retriever") {
  RetrieverOptions o;
  o.max_seq_len = 32;
  const HybridModel m = build_induction_retriever(8, o);
  const std::vector<int> prompt{1, 2, 3, 4, 5, 6, 2};
  ManipulationPolicy p = parse_policy("Only-Null");
  p.needle = {{2, 4}};
  Session s(m);
  PolicyController pc(p, 4);
  AttentionTrace trace;
  const auto out = pc.prefill(s, prompt, &trace);
  for (const TraceRow& r : trace.rows) {
    for (double w : r.effective) CHECK(w == 0.0);
  }
  for (double x : out.last()) CHECK(x == 0.0);
  trace.clear();
  pc.step(s, 3, &trace);
  for (const TraceRow& r : trace.rows) {
    for (std::size_t i = 0; i < r.effective.size(); ++i) {
      const int pos = r.key_begin + static_cast<int>(i);
      if (pos < 2 || pos >= 4) CHECK(r.effective[i] == 0.0);
    }
  }
  CHECK_THROWS_AS(PolicyController(parse_policy("Omit-Keep"), 4), InvalidInput);
}

TEST_CASE("prefill top-k keeps the retrieval heads of the retriever") {
  RetrieverOptions o;
  o.max_seq_len = 32;
  const HybridModel m = build_induction_retriever(8, o);
  const std::vector<int> prompt{1, 2, 3, 4, 5, 6, 3};
  Session s(m);
  PolicyController pc(parse_policy("Keep-Keep,kP=2"), 4);
  const auto out = pc.prefill(s, prompt);
  CHECK(argmax_token(out.last()) == 4);
  CHECK(pc.prefill_mask().at(1) == std::vector<char>{1, 1, 0, 0});
  CHECK(pc.prefill_mask().at(3)[0] == 1);
}

TEST_CASE("global scope and frozen masks") {
  RetrieverOptions o;
  o.max_seq_len = 32;
  const HybridModel m = build_induction_retriever(8, o);
  const std::vector<int> prompt{1, 2, 3, 4, 5, 6, 3};
  for (TopkScope scope : {TopkScope::kPerLayer, TopkScope::kGlobal}) {
    for (bool freeze : {false, true}) {
      Session s(m);
      PolicyController pc(parse_policy("Keep-Keep,kG=2"), 4, {scope, freeze});
      const auto out = pc.prefill(s, prompt);
      const auto gen = pc.generate(s, out, 3);
      CHECK(gen.front() == 4);
      if (freeze) CHECK(pc.prefill_entropies().size() == 2);
    }
  }
  Session s(m);
  PolicyController pc(parse_policy("Keep-Keep,kG=0"), 4, {TopkScope::kPerLayer, true});
  CHECK_THROWS_AS(pc.step(s, 2), InvalidInput);
}
