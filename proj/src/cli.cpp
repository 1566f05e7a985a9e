#include "hybridscope/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hybridscope/config.hpp"
#include "hybridscope/error.hpp"
#include "hybridscope/retriever.hpp"
#include "hybridscope/weights_io.hpp"

namespace hybridscope {
namespace {

namespace fs = std::filesystem;

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string ensure_dir(const Manifest& m, const std::string& sub) {
  const fs::path dir = fs::path(m.out_dir) / sub;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir.string();
}

void write_map(const std::string& dir, const std::string& stem, const NiahResult& r) {
  write_text_file(dir + "/" + stem + ".csv", map_to_csv(r.map));
  render_heatmap(r.map, dir + "/" + stem + ".svg", format_policy(r.policy));
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("bad " + what + " '" + s + "'");
  }
}

std::vector<int> k_values(const Manifest& m, int n_heads, std::vector<int> fallback) {
  std::vector<int> ks = m.k_values.empty() ? std::move(fallback) : m.k_values;
  for (int k : ks) {
    if (k < 0 || k > n_heads) throw InvalidInput("k = " + std::to_string(k) + " outside [0, " + std::to_string(n_heads) + "]");
  }
  return ks;
}

std::vector<int> all_k(int n_heads) {
  std::vector<int> ks;
  for (int k = 0; k <= n_heads; ++k) ks.push_back(k);
  return ks;
}

}  // namespace

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> out;
  const std::size_t dash = text.find('-');
  if (dash != std::string::npos && text.find(',') == std::string::npos) {
    const int lo = parse_int(text.substr(0, dash), "k range");
    const int hi = parse_int(text.substr(dash + 1), "k range");
    if (lo > hi) throw InvalidInput("empty k range '" + text + "'");
    for (int k = lo; k <= hi; ++k) out.push_back(k);
    return out;
  }
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(parse_int(item, "k value"));
  if (out.empty()) throw InvalidInput("empty k list");
  return out;
}

std::pair<int, int> parse_grid(const std::string& text) {
  const std::size_t x = text.find_first_of("xX");
  if (x == std::string::npos) throw InvalidInput("grid must look like LxD, got '" + text + "'");
  const int l = parse_int(text.substr(0, x), "grid");
  const int d = parse_int(text.substr(x + 1), "grid");
  if (l < 1 || d < 1) throw InvalidInput("grid dimensions must be positive");
  return {l, d};
}

ManipulationPolicy sweep_policy(const std::string& phase, int k) {
  ManipulationPolicy p;
  if (phase == "generation") {
    p.k_generation = k;
  } else if (phase == "prefill") {
    p.k_prefill = k;
  } else if (phase == "both") {
    p.k_generation = k;
    p.k_prefill = k;
  } else {
    throw InvalidInput("phase must be generation, both or prefill, got '" + phase + "'");
  }
  return p;
}

HybridModel make_model(const Manifest& m, const Tokenizer& tokenizer, const NeedleSpec* needle, int min_seq_len) {
  if (!m.weights.empty()) {
    return m.model_config.empty() ? load_weights(m.weights) : load_weights(m.weights, load_model_config(m.model_config));
  }
  if (!m.model_config.empty()) return HybridModel::random(load_model_config(m.model_config), m.seed);
  if (m.preset == "rg2b-toy") return HybridModel::random(rg2b_toy_config(), m.seed);
  if (m.preset == "jamba-toy") return HybridModel::random(jamba_toy_config(), m.seed);
  if (m.preset == "induction-oracle") {
    const int len = std::max(2048, min_seq_len);
    if (needle) return build_niah_oracle(tokenizer, *needle, len);
    RetrieverOptions o;
    o.max_seq_len = len;
    return build_induction_retriever(std::max(tokenizer.size(), 4), o);
  }
  throw InvalidInput("unknown preset '" + m.preset + "'");
}

NiahExperiment prepare_niah(const Manifest& m, bool jrt) {
  NiahExperiment e;
  e.needle = m.needle_file.empty() ? default_needle() : load_needle_file(m.needle_file);
  e.sentences = m.corpus_dir.empty() ? split_sentences(synthetic_filler(m.seed, m.max_length / 3 + 64))
                                     : load_corpus(m.corpus_dir);
  const std::vector<PromptSpec> grid = make_grid(m.max_length, m.n_lengths, m.n_depths, m.style, jrt);
  e.prompts = build_prompts(e.sentences, grid, e.needle, m.jrt_layout);
  e.tokenizer = niah_vocabulary(e.prompts);
  int longest = 0;
  for (const NiahPrompt& p : e.prompts) longest = std::max(longest, p.token_count);
  e.model.emplace(make_model(m, e.tokenizer, &e.needle, longest + m.budget));
  e.options.budget = m.budget;
  e.options.control = m.control;
  return e;
}

std::vector<SweepRow> cmd_sweep_k(const Manifest& m) {
  NiahExperiment e = prepare_niah(m, m.jrt);
  const int n = e.model->config().n_heads;
  const std::vector<int> ks = k_values(m, n, all_k(n));
  const std::vector<std::string> phases =
      m.phase.empty() ? std::vector<std::string>{"generation", "both"} : std::vector<std::string>{m.phase};
  std::vector<ManipulationPolicy> policies;
  std::vector<SweepRow> rows;
  for (const std::string& phase : phases) {
    for (int k : ks) {
      policies.push_back(sweep_policy(phase, k));
      rows.push_back({phase, k, 0.0});
    }
  }
  const std::vector<NiahResult> results = run_niah_batch(*e.model, e.tokenizer, e.prompts, policies, e.needle, e.options);
  const std::string dir = ensure_dir(m, "sweep_k");
  std::string summary = "phase,k,accuracy\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].accuracy = results[i].map.accuracy();
    write_map(dir, rows[i].phase + "_k" + std::to_string(rows[i].k), results[i]);
    summary += rows[i].phase + "," + std::to_string(rows[i].k) + "," + fixed(rows[i].accuracy) + "\n";
  }
  write_text_file(dir + "/summary.csv", summary);
  return rows;
}

std::vector<JrtRow> cmd_jrt_compare(const Manifest& m) {
  const std::string phase = m.phase.empty() ? "generation" : m.phase;
  NiahExperiment plain = prepare_niah(m, false);
  NiahExperiment twice = prepare_niah(m, true);
  const int n = plain.model->config().n_heads;
  const std::vector<int> ks = k_values(m, n, {0, n});
  std::vector<ManipulationPolicy> policies;
  for (int k : ks) policies.push_back(sweep_policy(phase, k));
  const auto a = run_niah_batch(*plain.model, plain.tokenizer, plain.prompts, policies, plain.needle, plain.options);
  const auto b = run_niah_batch(*twice.model, twice.tokenizer, twice.prompts, policies, twice.needle, twice.options);
  auto mean_tokens = [](const std::vector<NiahPrompt>& ps) {
    double s = 0.0;
    for (const NiahPrompt& p : ps) s += p.token_count;
    return ps.empty() ? 0.0 : s / static_cast<double>(ps.size());
  };
  const std::string dir = ensure_dir(m, "jrt_compare");
  std::string summary = "k,accuracy_plain,accuracy_jrt,delta,mean_tokens_plain,mean_tokens_jrt\n";
  std::vector<JrtRow> rows;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    JrtRow r{ks[i], a[i].map.accuracy(), b[i].map.accuracy(), mean_tokens(plain.prompts), mean_tokens(twice.prompts)};
    write_map(dir, "k" + std::to_string(r.k) + "_plain", a[i]);
    write_map(dir, "k" + std::to_string(r.k) + "_jrt", b[i]);
    summary += std::to_string(r.k) + "," + fixed(r.accuracy_plain) + "," + fixed(r.accuracy_jrt) + "," +
               fixed(r.accuracy_jrt - r.accuracy_plain) + "," + fixed(r.mean_tokens_plain) + "," +
               fixed(r.mean_tokens_jrt) + "\n";
    rows.push_back(r);
  }
  write_text_file(dir + "/summary.csv", summary);
  return rows;
}

ManipTable cmd_manip_grid(const Manifest& m) {
  static const std::vector<ManipulationMethod> gen = {ManipulationMethod::kKeep, ManipulationMethod::kOmit,
                                                      ManipulationMethod::kOnly, ManipulationMethod::kBinary};
  static const std::vector<ManipulationMethod> pre = {ManipulationMethod::kKeep, ManipulationMethod::kOmit,
                                                      ManipulationMethod::kOnly, ManipulationMethod::kBinary,
                                                      ManipulationMethod::kNull};
  NiahExperiment e = prepare_niah(m, m.jrt);
  std::vector<ManipulationPolicy> policies;
  for (ManipulationMethod g : gen) {
    for (ManipulationMethod p : pre) {
      ManipulationPolicy pol;
      pol.generation = g;
      pol.prefill = p;
      policies.push_back(pol);
    }
  }
  const auto results = run_niah_batch(*e.model, e.tokenizer, e.prompts, policies, e.needle, e.options);
  const std::string dir = ensure_dir(m, "manip_grid");
  ManipTable table;
  std::string csv = "generation";
  for (ManipulationMethod p : pre) csv += "," + std::string(to_string(p));
  csv += "\n";
  for (std::size_t gi = 0, i = 0; gi < gen.size(); ++gi) {
    csv += std::string(to_string(gen[gi]));
    for (std::size_t pi = 0; pi < pre.size(); ++pi, ++i) {
      const double acc = results[i].map.accuracy();
      table[std::string(to_string(gen[gi]))][std::string(to_string(pre[pi]))] = acc;
      csv += "," + fixed(acc);
      write_map(dir, format_policy(results[i].policy), results[i]);
    }
    csv += "\n";
  }
  write_text_file(dir + "/table.csv", csv);
  return table;
}

std::vector<McqRow> cmd_mcq(const Manifest& m) {
  const std::vector<McqItem> items =
      m.task_file.empty() ? make_copy_task(m.seed, m.mcq_items, m.mcq_choices) : load_task_file(m.task_file);
  const Tokenizer tokenizer = task_vocabulary(items);
  const HybridModel model = make_model(m, tokenizer, nullptr, 0);
  const int n = model.config().n_heads;
  const std::string phase = m.phase.empty() ? "prefill" : m.phase;
  const std::vector<int> ks = k_values(m, n, all_k(n));
  McqOptions opts;
  opts.fewshot_k = m.fewshot;
  opts.length_normalized = m.length_normalized;
  opts.control = m.control;
  const std::string dir = ensure_dir(m, "mcq");
  std::string summary = "k,accuracy\n";
  std::vector<McqRow> rows;
  for (int k : ks) {
    const McqResult r = evaluate_task(model, tokenizer, items, sweep_policy(phase, k), opts);
    rows.push_back({k, r.accuracy});
    summary += std::to_string(k) + "," + fixed(r.accuracy) + "\n";
  }
  write_text_file(dir + "/summary.csv", summary);
  return rows;
}

NiahResult cmd_niah(const Manifest& m) {
  NiahExperiment e = prepare_niah(m, m.jrt);
  const ManipulationPolicy policy = parse_policy(m.policy);
  NiahResult r = run_niah(*e.model, e.tokenizer, e.prompts, policy, e.needle, e.options);
  const std::string dir = ensure_dir(m, "niah");
  write_map(dir, "map", r);
  std::string outputs = "length_tokens,depth_pct,score,output\n";
  for (const CellOutcome& c : r.cells) {
    std::string quoted = "\"";
    for (char ch : c.output) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    quoted += "\"";
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.12g", depth_percent(c.spec.depth_fraction));
    outputs += std::to_string(c.spec.target_length) + "," + pct + "," + fixed(c.score) + "," + quoted + "\n";
  }
  write_text_file(dir + "/outputs.csv", outputs);
  return r;
}

void cmd_render(const std::string& csv_path, const std::string& svg_path) {
  const RetrievalMap map = parse_map_csv(read_text_file(csv_path));
  render_heatmap(map, svg_path, fs::path(csv_path).stem().string());
}

void cmd_save_model(const Manifest& m, const std::string& path) {
  NiahExperiment e = prepare_niah(m, m.jrt);
  save_weights(*e.model, path);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Hybrid SSM-attention inference with attention-head instrumentation and NIAH experiments"};
  app.require_subcommand(1);
  Manifest m;
  std::string k_list, k_range, grid, style = "base", layout = "cqcq", scope = "layer";
  std::string render_in, render_out, save_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--preset", m.preset, "rg2b-toy, jamba-toy or induction-oracle")->capture_default_str();
    sub->add_option("--model", m.model_config, "model config file (random weights unless --weights)");
    sub->add_option("--weights", m.weights, "weight file");
    sub->add_option("--corpus", m.corpus_dir, "directory of .txt filler files");
    sub->add_option("--needle-file", m.needle_file, "needle and rubric file");
    sub->add_option("--out", m.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", m.seed, "seed for filler text, synthetic tasks and random weights")->capture_default_str();
    sub->add_option("--max-len", m.max_length, "longest prompt in the grid")->capture_default_str();
    sub->add_option("--grid", grid, "lengths x depths, e.g. 10x10");
    sub->add_option("--style", style, "base or instruct")->capture_default_str();
    sub->add_flag("--jrt", m.jrt, "repeat context and question");
    sub->add_option("--jrt-layout", layout, "cqcq or ccq")->capture_default_str();
    sub->add_option("--budget", m.budget, "tokens to generate")->capture_default_str();
    sub->add_option("--k", k_list, "sparsity levels, e.g. 0,2,4");
    sub->add_option("--k-range", k_range, "inclusive range, e.g. 0-10");
    sub->add_option("--phase", m.phase, "generation, both or prefill");
    sub->add_option("--topk-scope", scope, "layer or global")->capture_default_str();
    sub->add_flag("--freeze-after-prefill", m.control.freeze_after_prefill,
                  "reuse the prefill head selection during generation");
  };

  CLI::App* sweep = app.add_subcommand("sweep-k", "accuracy as a function of top-k");
  common(sweep);
  CLI::App* jrt = app.add_subcommand("jrt-compare", "NIAH with and without the repeated context");
  common(jrt);
  CLI::App* manip = app.add_subcommand("manip-grid", "all generation x prefill manipulation combinations");
  common(manip);
  CLI::App* niah = app.add_subcommand("niah", "one policy over the grid");
  common(niah);
  niah->add_option("--policy", m.policy, "GEN-PREFILL[,kG=<int>][,kP=<int>]")->capture_default_str();
  CLI::App* mcq = app.add_subcommand("mcq", "multiple-choice log-likelihood accuracy per k");
  common(mcq);
  mcq->add_option("--task-file", m.task_file, "JSONL task file (default: synthetic copy task)");
  mcq->add_option("--items", m.mcq_items, "synthetic task size")->capture_default_str();
  mcq->add_option("--fewshot", m.fewshot, "demonstrations per item")->capture_default_str();
  mcq->add_flag("--length-normalized", m.length_normalized, "average log-likelihood per token");
  CLI::App* render = app.add_subcommand("render", "map CSV to SVG heatmap");
  render->add_option("csv", render_in, "map CSV")->required();
  render->add_option("svg", render_out, "output SVG")->required();
  CLI::App* save = app.add_subcommand("save-model", "write the selected model to a weight file");
  common(save);
  save->add_option("path", save_path, "output weight file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!grid.empty()) std::tie(m.n_lengths, m.n_depths) = parse_grid(grid);
    if (!k_list.empty() && !k_range.empty()) throw InvalidInput("use either --k or --k-range");
    if (!k_list.empty()) m.k_values = parse_k_list(k_list);
    if (!k_range.empty()) m.k_values = parse_k_list(k_range);
    if (style == "base") m.style = TemplateStyle::kBase;
    else if (style == "instruct") m.style = TemplateStyle::kInstruct;
    else throw InvalidInput("style must be base or instruct");
    if (layout == "cqcq") m.jrt_layout = JrtLayout::kContextQuestionTwice;
    else if (layout == "ccq") m.jrt_layout = JrtLayout::kContextTwice;
    else throw InvalidInput("jrt layout must be cqcq or ccq");
    if (scope == "layer") m.control.scope = TopkScope::kPerLayer;
    else if (scope == "global") m.control.scope = TopkScope::kGlobal;
    else throw InvalidInput("topk scope must be layer or global");
    if (!m.phase.empty()) (void)sweep_policy(m.phase, 0);
    if (m.budget < 1) throw InvalidInput("budget must be at least 1");

    if (*sweep) {
      for (const SweepRow& r : cmd_sweep_k(m)) std::cout << r.phase << " k=" << r.k << " accuracy " << fixed(r.accuracy) << "\n";
    } else if (*jrt) {
      for (const JrtRow& r : cmd_jrt_compare(m)) {
        std::cout << "k=" << r.k << " plain " << fixed(r.accuracy_plain) << " jrt " << fixed(r.accuracy_jrt)
                  << " tokens " << fixed(r.mean_tokens_plain) << " -> " << fixed(r.mean_tokens_jrt) << "\n";
      }
    } else if (*manip) {
      for (const auto& [g, row] : cmd_manip_grid(m)) {
        std::cout << g;
        for (const auto& [p, acc] : row) std::cout << "  " << g << "-" << p << " " << fixed(acc);
        std::cout << "\n";
      }
    } else if (*niah) {
      const NiahResult r = cmd_niah(m);
      std::cout << format_policy(r.policy) << " accuracy " << fixed(r.map.accuracy()) << "\n";
    } else if (*mcq) {
      for (const McqRow& r : cmd_mcq(m)) std::cout << "k=" << r.k << " accuracy " << fixed(r.accuracy) << "\n";
    } else if (*render) {
      cmd_render(render_in, render_out);
    } else if (*save) {
      cmd_save_model(m, save_path);
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace hybridscope
