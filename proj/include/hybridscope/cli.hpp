#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybridscope/attn_control.hpp"
#include "hybridscope/mcq.hpp"
#include "hybridscope/niah.hpp"

namespace hybridscope {

/// Everything one experiment command needs. Paths left empty fall back to
/// built-in defaults (synthetic filler, the standard needle, a synthetic
/// copy task).
struct Manifest {
  std::string preset = "induction-oracle";  // or rg2b-toy, jamba-toy
  std::string model_config;                 // config file; random weights unless weights is set
  std::string weights;
  std::string corpus_dir;
  std::string needle_file;
  std::string task_file;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  int max_length = 512;
  int n_lengths = 10;
  int n_depths = 10;
  TemplateStyle style = TemplateStyle::kBase;
  bool jrt = false;
  JrtLayout jrt_layout = JrtLayout::kContextQuestionTwice;
  int budget = 32;
  ControlOptions control;

  std::string policy = "Keep-Keep";
  std::vector<int> k_values;  // empty: 0..N
  std::string phase;          // generation, both or prefill; empty: command default

  int mcq_items = 200;
  int mcq_choices = 4;
  int fewshot = 0;
  bool length_normalized = false;
};

/// Parses "3", "0,2,5" or "0-10" (inclusive range).
std::vector<int> parse_k_list(const std::string& text);
/// Parses "LxD", e.g. "10x10".
std::pair<int, int> parse_grid(const std::string& text);

/// Policy for sparsity level k in a sweep phase: generation sets kG, prefill
/// sets kP, both sets both.
ManipulationPolicy sweep_policy(const std::string& phase, int k);

/// Prompts, vocabulary and model shared by the NIAH commands.
struct NiahExperiment {
  NeedleSpec needle;
  std::vector<std::string> sentences;
  std::vector<NiahPrompt> prompts;
  Tokenizer tokenizer;
  std::optional<HybridModel> model;
  NiahOptions options;
};

/// Builds the grid prompts (with or without the repeated context), their
/// vocabulary and the model named by the manifest.
NiahExperiment prepare_niah(const Manifest& m, bool jrt);
/// Preset, config or weight file. The oracle is fitted to `tokenizer` and,
/// when `needle` is given, cued to start answering with it.
HybridModel make_model(const Manifest& m, const Tokenizer& tokenizer, const NeedleSpec* needle, int min_seq_len);

struct SweepRow {
  std::string phase;
  int k = 0;
  double accuracy = 0.0;
};

/// Each command writes its files under m.out_dir and returns what it wrote
/// to the summary file.
std::vector<SweepRow> cmd_sweep_k(const Manifest& m);

struct JrtRow {
  int k = 0;
  double accuracy_plain = 0.0;
  double accuracy_jrt = 0.0;
  double mean_tokens_plain = 0.0;
  double mean_tokens_jrt = 0.0;
};
std::vector<JrtRow> cmd_jrt_compare(const Manifest& m);

/// generation method -> prefill method -> accuracy
using ManipTable = std::map<std::string, std::map<std::string, double>>;
ManipTable cmd_manip_grid(const Manifest& m);

struct McqRow {
  int k = 0;
  double accuracy = 0.0;
};
std::vector<McqRow> cmd_mcq(const Manifest& m);

/// Single policy run over the grid.
NiahResult cmd_niah(const Manifest& m);

void cmd_render(const std::string& csv_path, const std::string& svg_path);

/// Writes the manifest's model to a weight file.
void cmd_save_model(const Manifest& m, const std::string& path);

/// Full command-line entry point; returns the process exit code
/// (0 ok, 2 invalid input, 3 runtime failure).
int run_cli(int argc, char** argv);

}  // namespace hybridscope
