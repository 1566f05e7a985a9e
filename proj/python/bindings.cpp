#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hybridscope/attn_control.hpp"
#include "hybridscope/cli.hpp"
#include "hybridscope/config.hpp"
#include "hybridscope/error.hpp"
#include "hybridscope/mcq.hpp"
#include "hybridscope/niah.hpp"
#include "hybridscope/numerics.hpp"
#include "hybridscope/retriever.hpp"
#include "hybridscope/session.hpp"
#include "hybridscope/weights_io.hpp"

namespace py = pybind11;
using namespace hybridscope;

namespace {

std::vector<double> row_logits(const ForwardOutput& out) { return out.last(); }

NiahResult niah_oracle_run(int max_length, int n_lengths, int n_depths, const std::string& policy, bool jrt,
                           int budget, std::uint64_t seed) {
  Manifest m;
  m.max_length = max_length;
  m.n_lengths = n_lengths;
  m.n_depths = n_depths;
  m.budget = budget;
  m.seed = seed;
  NiahExperiment e = prepare_niah(m, jrt);
  return run_niah(*e.model, e.tokenizer, e.prompts, parse_policy(policy), e.needle, e.options);
}

double mcq_copy_accuracy(int n_items, int n_choices, const std::string& policy, std::uint64_t seed) {
  const auto items = make_copy_task(seed, n_items, n_choices);
  const Tokenizer tok = task_vocabulary(items);
  RetrieverOptions o;
  o.max_seq_len = 2048;
  const HybridModel model = build_induction_retriever(std::max(tok.size(), 4), o);
  return evaluate_task(model, tok, items, parse_policy(policy)).accuracy;
}

}  // namespace

PYBIND11_MODULE(_hybridscope, m) {
  m.doc() = "Hybrid SSM-attention inference with attention-head control";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("softmax", [](const std::vector<double>& s) { return softmax(s); });
  m.def("log_softmax", [](const std::vector<double>& s) { return log_softmax(s); });
  m.def("entropy_bits", [](const std::vector<double>& p) { return entropy_bits(p); });
  m.def("expand_layer_pattern", [](const std::string& spec) { return parse_layer_pattern(spec).to_string(); },
        "Flat S/A form of a layer-pattern expression");

  py::class_<ModelConfig>(m, "ModelConfig")
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("n_heads", &ModelConfig::n_heads)
      .def_readonly("head_dim", &ModelConfig::head_dim)
      .def_readonly("d_model", &ModelConfig::d_model)
      .def_readonly("window", &ModelConfig::window)
      .def_readonly("layer_pattern", &ModelConfig::layer_pattern_spec)
      .def_readonly("use_kv_cache", &ModelConfig::use_kv_cache)
      .def_readonly("max_seq_len", &ModelConfig::max_seq_len);
  m.def("make_config", &make_config, py::arg("vocab_size"), py::arg("n_heads"), py::arg("head_dim"),
        py::arg("window"), py::arg("layer_pattern"), py::arg("use_kv_cache") = true, py::arg("max_seq_len") = 2048);
  m.def("rg2b_toy_config", &rg2b_toy_config);
  m.def("jamba_toy_config", &jamba_toy_config);

  py::class_<HybridModel>(m, "HybridModel")
      .def_static("random", &HybridModel::random, py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &HybridModel::config)
      .def("save", [](const HybridModel& self, const std::string& path) { save_weights(self, path); })
      .def_static("load", [](const std::string& path) { return load_weights(path); });
  m.def(
      "induction_retriever",
      [](int vocab_size, int max_seq_len) {
        RetrieverOptions o;
        o.max_seq_len = max_seq_len;
        return build_induction_retriever(vocab_size, o);
      },
      py::arg("vocab_size"), py::arg("max_seq_len") = 2048);

  py::class_<Session>(m, "Session")
      .def(py::init<const HybridModel&>(), py::keep_alive<1, 2>())
      .def("prefill", [](Session& s, const std::vector<int>& t) { return row_logits(s.prefill(t)); })
      .def("step", [](Session& s, int token) { return row_logits(s.step(token)); })
      .def_property_readonly("length", &Session::length);

  py::class_<Tokenizer>(m, "Tokenizer")
      .def(py::init<std::vector<std::string>>())
      .def_static("from_texts", [](const std::vector<std::string>& t) { return Tokenizer::from_texts(t); })
      .def_static("split", &Tokenizer::split)
      .def("encode", &Tokenizer::encode)
      .def("decode", [](const Tokenizer& t, const std::vector<int>& ids) { return t.decode(ids); })
      .def("__len__", &Tokenizer::size)
      .def_property_readonly("pieces", &Tokenizer::pieces);

  py::class_<ScoreRubric>(m, "ScoreRubric")
      .def_readwrite("additive", &ScoreRubric::additive)
      .def_readwrite("additive_cap", &ScoreRubric::additive_cap)
      .def_readwrite("set4", &ScoreRubric::set4)
      .def_readwrite("set5", &ScoreRubric::set5)
      .def("score", &ScoreRubric::score);
  py::class_<NeedleSpec>(m, "NeedleSpec")
      .def_readwrite("needle", &NeedleSpec::needle)
      .def_readwrite("question", &NeedleSpec::question)
      .def_readwrite("rubric", &NeedleSpec::rubric);
  m.def("default_needle", &default_needle);
  m.def("parse_needle_file", &parse_needle_file);

  py::enum_<TemplateStyle>(m, "TemplateStyle").value("BASE", TemplateStyle::kBase).value("INSTRUCT", TemplateStyle::kInstruct);
  py::class_<PromptSpec>(m, "PromptSpec")
      .def_readonly("target_length", &PromptSpec::target_length)
      .def_readonly("depth_fraction", &PromptSpec::depth_fraction)
      .def_readonly("jrt", &PromptSpec::jrt);
  m.def("make_grid", &make_grid, py::arg("max_length"), py::arg("n_lengths"), py::arg("n_depths"),
        py::arg("style") = TemplateStyle::kBase, py::arg("jrt") = false);
  m.def("render_prompt", &render_prompt, py::arg("haystack"), py::arg("question"),
        py::arg("style") = TemplateStyle::kBase);
  m.def("synthetic_filler", &synthetic_filler);

  py::class_<NeedleSpan>(m, "NeedleSpan")
      .def(py::init<int, int>())
      .def_readwrite("start", &NeedleSpan::start)
      .def_readwrite("end", &NeedleSpan::end);
  py::class_<NiahPrompt>(m, "NiahPrompt")
      .def_readonly("text", &NiahPrompt::text)
      .def_readonly("needle_spans", &NiahPrompt::needle_spans)
      .def_readonly("token_count", &NiahPrompt::token_count);
  m.def(
      "build_prompt",
      [](const std::vector<std::string>& sentences, int target_length, double depth, bool jrt) {
        return build_prompt(sentences, PromptSpec{target_length, depth, TemplateStyle::kBase, jrt}, default_needle());
      },
      py::arg("sentences"), py::arg("target_length"), py::arg("depth_fraction"), py::arg("jrt") = false);

  py::class_<ManipulationPolicy>(m, "ManipulationPolicy")
      .def_readonly("k_generation", &ManipulationPolicy::k_generation)
      .def_readonly("k_prefill", &ManipulationPolicy::k_prefill)
      .def_property_readonly("generation", [](const ManipulationPolicy& p) { return std::string(to_string(p.generation)); })
      .def_property_readonly("prefill", [](const ManipulationPolicy& p) { return std::string(to_string(p.prefill)); })
      .def("__str__", &format_policy);
  m.def("parse_policy", &parse_policy);
  m.def(
      "manipulate_row",
      [](const std::vector<double>& w, int key_begin, const std::vector<NeedleSpan>& spans, const std::string& method) {
        return manipulate_row(w, key_begin, spans, parse_method(method));
      },
      py::arg("weights"), py::arg("key_begin"), py::arg("needle"), py::arg("method"));
  m.def("select_topk_heads",
        [](const std::vector<double>& e, int k) {
          const std::vector<char> keep = select_topk_heads(std::span<const double>(e), k);
          return std::vector<bool>(keep.begin(), keep.end());
        });

  py::class_<MapCell>(m, "MapCell")
      .def_readonly("length_tokens", &MapCell::length_tokens)
      .def_readonly("depth_fraction", &MapCell::depth_fraction)
      .def_readonly("score", &MapCell::score);
  py::class_<NiahResult>(m, "NiahResult")
      .def_property_readonly("accuracy", [](const NiahResult& r) { return r.map.accuracy(); })
      .def_property_readonly("cells", [](const NiahResult& r) { return r.map.cells; })
      .def_property_readonly("outputs", [](const NiahResult& r) {
        std::vector<std::string> out;
        for (const CellOutcome& c : r.cells) out.push_back(c.output);
        return out;
      })
      .def("to_csv", [](const NiahResult& r) { return map_to_csv(r.map); });
  m.def("run_niah_oracle", &niah_oracle_run, py::arg("max_length") = 512, py::arg("n_lengths") = 10,
        py::arg("n_depths") = 10, py::arg("policy") = "Keep-Keep", py::arg("jrt") = false, py::arg("budget") = 32,
        py::arg("seed") = 0, "NIAH grid on the induction oracle with synthetic filler");
  m.def("mcq_copy_accuracy", &mcq_copy_accuracy, py::arg("n_items") = 200, py::arg("n_choices") = 4,
        py::arg("policy") = "Keep-Keep", py::arg("seed") = 0);
  m.def("render_heatmap_svg", [](const std::string& csv) { return render_heatmap_svg(parse_map_csv(csv)); });
}
