// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "medusa/bench.hpp"
#include "medusa/checkpoint.hpp"
#include "medusa/corpus.hpp"
#include "medusa/engine.hpp"
#include "medusa/errors.hpp"
#include "medusa/log.hpp"
#include "medusa/selfcheck.hpp"
#include "medusa/training.hpp"
#include "medusa/tree_io.hpp"

namespace medusa::cli {
namespace {

using nlohmann::json;

struct Globals {
  int verbosity = 0;
  std::uint64_t seed = 0;
  std::string precision = "double";
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

StaticTreeBuffers load_tree(const std::string& path, int num_heads) {
  if (path.empty()) return compile_tree(default_tree(num_heads));
  const json j = read_json(path);
  // Accept either a spec or a compiled dump.
  if (j.contains("attn_mask")) return buffers_from_json(j);
  return compile_tree(tree_spec_from_json(j));
}

// Prompts cut from synthetic sequences: BOS plus the first few words.
std::vector<std::vector<int>> synthetic_prompts(int vocab, std::uint64_t seed, int n, int len,
                                                int skip = 0) {
  GrammarConfig g;
  g.vocab_size = vocab;
  auto corpus = generate_corpus(g, seed, skip + n);
  std::vector<std::vector<int>> prompts;
  for (int i = skip; i < skip + n; ++i) {
    const auto& s = corpus[i];
    prompts.emplace_back(s.begin(), s.begin() + std::min<std::size_t>(len, s.size()));
  }
  return prompts;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.lambdas = j.value("lambdas", c.lambdas);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
    c.preserve_special = j.value("preserve_special", c.preserve_special);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------

struct InitModelArgs {
  std::string config, out, head_init = "zero", dtype = "f64";
  double head_std = 1.0;
};

int run_init_model(const Globals& g, const InitModelArgs& a, std::ostream& out) {
  const ModelConfig config = a.config.empty() ? ModelConfig{} : load_config(a.config);
  InitOptions init;
  init.head_init = a.head_init == "random" ? HeadInit::random : HeadInit::zero;
  init.head_std = a.head_std;
  const auto bundle = init_model(config, g.seed, init);
  save_checkpoint(bundle, a.out, a.dtype == "f32" ? DType::f32 : DType::f64);
  out << json{{"checkpoint", a.out},
              {"backbone_digest", backbone_digest(bundle.backbone)},
              {"config", config_to_json(config)}}
             .dump()
      << "\n";
  return kExitOk;
}

struct GenCorpusArgs {
  std::string out;
  int n = 100;
  GrammarConfig grammar;
};

int run_gen_corpus(const Globals& g, const GenCorpusArgs& a, std::ostream& out) {
  const auto corpus = generate_corpus(a.grammar, g.seed, a.n);
  save_corpus(corpus, a.out);
  std::size_t tokens = 0;
  for (const auto& s : corpus) tokens += s.size();
  out << json{{"corpus", a.out}, {"sequences", corpus.size()}, {"tokens", tokens}}.dump() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string checkpoint, config, corpus, out, loss_csv, eval_json;
  int samples = 200;
  int eval_samples = 100;
  int prompt_len = 6;
  int max_new_tokens = 32;
  std::optional<bool> preserve_special;
};

int run_train_heads(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const auto bundle = load_checkpoint(a.checkpoint);
  const int V = bundle.config.vocab_size;
  TrainConfig tc = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json(a.config));
  if (a.preserve_special) tc.preserve_special = *a.preserve_special;
  tc.seed = g.seed;

  std::vector<std::vector<int>> train_prompts, eval_prompts;
  if (a.corpus.empty()) {
    train_prompts = synthetic_prompts(V, g.seed, a.samples, a.prompt_len);
    eval_prompts = synthetic_prompts(V, g.seed, a.eval_samples, a.prompt_len, a.samples);
  } else {
    auto corpus = load_corpus(a.corpus);
    if (corpus.size() < 2) throw InvalidArgument("train-heads: corpus needs at least 2 sequences");
    const std::size_t held = std::clamp<std::size_t>(corpus.size() / 5, 1,
                                                     static_cast<std::size_t>(a.eval_samples));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      for (int t : corpus[i]) {
        if (t < 0 || t >= V) throw InvalidArgument("train-heads: corpus token outside vocabulary");
      }
      auto& dst = i + held < corpus.size() ? train_prompts : eval_prompts;
      dst.emplace_back(corpus[i].begin(),
                       corpus[i].begin() + std::min<std::size_t>(a.prompt_len, corpus[i].size()));
    }
  }

  DistillOptions dopt;
  dopt.max_new_tokens = a.max_new_tokens;
  dopt.preserve_special = tc.preserve_special;
  const auto samples = build_distill_set(bundle, train_prompts, a.samples, dopt);
  const auto eval_set =
      build_distill_set(bundle, eval_prompts, static_cast<int>(eval_prompts.size()), dopt);

  log::info("train_start", {{"samples", samples.size()}, {"eval", eval_set.size()}});
  const auto result = train_heads(bundle, samples, tc);
  const auto acc = eval_head_accuracy(result.bundle, eval_set);
  if (backbone_digest(result.bundle.backbone) != backbone_digest(bundle.backbone)) {
    throw std::logic_error("train-heads: backbone parameters changed");
  }
  if (!a.out.empty()) save_checkpoint(result.bundle, a.out);

  if (!a.loss_csv.empty()) {
    std::string csv = "step,loss,lr\n";
    char buf[128];
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, result.loss_curve[i],
                    result.lr_curve[i]);
      csv += buf;
    }
    write_text(a.loss_csv, csv);
  }
  const json report = {{"samples", samples.size()},
                       {"eval_samples", eval_set.size()},
                       {"steps", result.steps},
                       {"final_loss", result.loss_curve.empty() ? 0.0 : result.loss_curve.back()},
                       {"top1", acc.top1},
                       {"positions", acc.positions},
                       {"backbone_digest", backbone_digest(result.bundle.backbone)}};
  if (!a.eval_json.empty()) write_text(a.eval_json, report.dump(2) + "\n");
  out << report.dump() << "\n";
  return kExitOk;
}

struct BuildTreeArgs {
  std::string spec, out;
  int heads = 3;
};

int run_build_tree(const BuildTreeArgs& a, std::ostream& out) {
  const TreeSpec spec = a.spec.empty() ? default_tree(a.heads) : load_tree_spec(a.spec);
  const auto buffers = compile_tree(spec);
  const auto report = validate_buffers(buffers, spec);
  if (!report.ok()) throw std::logic_error("build-tree: oracle mismatch: " + report.message);
  const std::string dump = buffers_to_json(buffers).dump(2) + "\n";
  if (a.out.empty()) {
    out << dump;
  } else {
    write_text(a.out, dump);
    out << json{{"out", a.out}, {"T", buffers.num_nodes()}, {"n_paths", buffers.n_paths()}}.dump()
        << "\n";
  }
  return kExitOk;
}

struct GenerateArgs {
  std::string checkpoint, tree, prompt, mode = "medusa";
  int max_tokens = 64;
  bool no_eos = false;
};

template <class Real>
json generate_json(const ModelBundle<Real>& bundle, const GenerateArgs& a) {
  const auto prompt = parse_prompt(a.prompt, bundle.config.vocab_size);
  GenerationOptions gen;
  gen.max_new_tokens = a.max_tokens;
  if (!a.no_eos) gen.eos_token = kEosToken;
  const auto start = std::chrono::steady_clock::now();
  json j = {{"mode", a.mode}, {"prompt", prompt}};
  if (a.mode == "auto") {
    const auto res = generate_autoregressive(bundle, prompt, gen);
    j["tokens"] = res.tokens;
  } else {
    const auto buffers = load_tree(a.tree, bundle.num_heads());
    const auto res = generate_speculative(bundle, buffers, prompt, gen);
    long accepted = 0;
    std::vector<int> lens;
    for (const auto& s : res.steps) {
      accepted += s.accepted_len;
      lens.push_back(s.accepted_len);
    }
    j["tokens"] = res.tokens;
    j["steps"] = res.steps.size();
    j["accepted_lens"] = lens;
    j["ac"] = res.steps.empty() ? 0.0 : static_cast<double>(accepted) / res.steps.size();
  }
  j["elapsed_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return j;
}

int run_generate(const Globals& g, const GenerateArgs& a, std::ostream& out) {
  const auto bundle = load_checkpoint(a.checkpoint);
  const json j = g.precision == "single" ? generate_json(cast_bundle<float>(bundle), a)
                                         : generate_json(bundle, a);
  out << j.dump() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string checkpoint, tree, config, out;
};

int run_bench(const Globals& g, const BenchArgs& a, std::ostream& out) {
  const auto bundle = a.checkpoint.empty() ? init_model(ModelConfig{}, g.seed)
                                           : load_checkpoint(a.checkpoint);
  const auto buffers = load_tree(a.tree, bundle.num_heads());
  SweepConfig sc = a.config.empty() ? SweepConfig{} : sweep_config_from_json(read_json(a.config));
  if (a.config.empty() || !read_json(a.config).contains("seed")) sc.seed = g.seed;
  if (sc.prompts.empty()) sc.prompts = synthetic_prompts(bundle.config.vocab_size, sc.seed, 3, 8);

  const auto report = g.precision == "single" ? sweep(cast_bundle<float>(bundle), buffers, sc)
                                              : sweep(bundle, buffers, sc);
  const std::string csv = sweep_to_csv(report);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv);
    json rows = json::array();
    for (const auto& r : report.aggregates) {
      rows.push_back({{"length", r.length},
                      {"ac", r.metrics.ac},
                      {"overhead", r.metrics.overhead},
                      {"speedup_model", r.metrics.speedup_model},
                      {"speedup_measured", r.metrics.speedup_measured}});
    }
    out << json{{"out", a.out}, {"medians", rows}, {"overhead_monotone", report.overhead_monotone}}
               .dump()
        << "\n";
  }
  return kExitOk;
}

struct SelftestArgs {
  int trees = 500;
  int trials = 100;
  int grad_points = 20;
};

int run_selftest(const Globals& g, const SelftestArgs& a, std::ostream& out) {
  const auto mask = selfcheck::check_mask_oracle(a.trees, g.seed);
  out << json{{"suite", "mask_oracle"},
              {"ok", mask.ok()},
              {"specs", mask.specs},
              {"failures", mask.failures},
              {"first_failure", mask.first_failure}}
             .dump()
      << "\n";
  const auto lossless = selfcheck::check_lossless(a.trials, g.seed);
  out << json{{"suite", "lossless_greedy"},
              {"ok", lossless.ok()},
              {"trials", lossless.trials},
              {"mismatches", lossless.mismatches},
              {"mean_ac", lossless.mean_ac()},
              {"first_mismatch", lossless.first_mismatch}}
             .dump()
      << "\n";
  constexpr double kGradTol = 1e-4;
  const auto grad = selfcheck::check_gradients(a.grad_points, g.seed);
  out << json{{"suite", "gradient_check"},
              {"ok", grad.ok(kGradTol)},
              {"points", grad.points},
              {"max_rel_error", grad.max_rel_error}}
             .dump()
      << "\n";
  return mask.ok() && lossless.ok() && grad.ok(kGradTol) ? kExitOk : kExitRuntime;
}

}  // namespace

std::vector<int> parse_prompt(std::string_view prompt, int vocab_size) {
  if (vocab_size <= kNumSpecialTokens) throw InvalidArgument("prompt: vocabulary too small");
  const bool ids = !prompt.empty() &&
                   std::all_of(prompt.begin(), prompt.end(), [](char c) {
                     return (c >= '0' && c <= '9') || c == ',' || c == ' ';
                   }) &&
                   std::any_of(prompt.begin(), prompt.end(), [](char c) { return c >= '0' && c <= '9'; });
  std::vector<int> tokens;
  if (ids) {
    std::stringstream ss{std::string(prompt)};
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(std::remove(item.begin(), item.end(), ' '), item.end());
      if (item.empty()) throw InvalidArgument("prompt: empty id in list");
      const long v = std::stol(item);
      if (v >= vocab_size) throw InvalidArgument("prompt: id " + item + " outside vocabulary");
      tokens.push_back(static_cast<int>(v));
    }
    return tokens;
  }
  tokens.push_back(kBosToken);
  for (unsigned char b : prompt) {
    tokens.push_back(kNumSpecialTokens + static_cast<int>(b % (vocab_size - kNumSpecialTokens)));
  }
  return tokens;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative decoding with multi-head drafting and static tree attention", "medusa"};
  app.require_subcommand(0, 1);
  Globals g;
  app.add_flag("-v,--verbose", g.verbosity, "Increase log verbosity (repeatable)");
  app.add_option("--seed", g.seed, "Seed for every stochastic choice")->capture_default_str();
  app.add_option("--precision", g.precision, "Inference precision")
      ->check(CLI::IsMember({"double", "single"}))
      ->capture_default_str();

  InitModelArgs init;
  auto* c_init = app.add_subcommand("init-model", "Create a randomly initialized checkpoint");
  c_init->add_option("--config", init.config, "Model config JSON");
  c_init->add_option("--out", init.out, "Output checkpoint")->required();
  c_init->add_option("--head-init", init.head_init, "Draft head initialization")
      ->check(CLI::IsMember({"zero", "random"}));
  c_init->add_option("--head-std", init.head_std, "Std of random head weights");
  c_init->add_option("--dtype", init.dtype, "Stored precision")->check(CLI::IsMember({"f32", "f64"}));

  GenCorpusArgs corpus;
  auto* c_corpus = app.add_subcommand("gen-corpus", "Write a seeded synthetic corpus (JSON lines)");
  c_corpus->add_option("--out", corpus.out, "Output JSONL path")->required();
  c_corpus->add_option("-n,--sequences", corpus.n, "Number of sequences")->check(CLI::NonNegativeNumber);
  c_corpus->add_option("--vocab", corpus.grammar.vocab_size, "Vocabulary size");
  c_corpus->add_option("--min-len", corpus.grammar.min_len, "Minimum words per sequence");
  c_corpus->add_option("--max-len", corpus.grammar.max_len, "Maximum words per sequence");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train-heads", "Self-distill and train the draft heads");
  c_train->add_option("--checkpoint", train.checkpoint, "Input checkpoint")->required();
  c_train->add_option("--config", train.config, "Training config JSON");
  c_train->add_option("--corpus", train.corpus, "Prompt corpus (JSONL); synthetic when omitted");
  c_train->add_option("--samples", train.samples, "Distillation samples")->check(CLI::PositiveNumber);
  c_train->add_option("--eval-samples", train.eval_samples, "Held-out samples")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--prompt-len", train.prompt_len, "Prompt tokens per sample")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--max-new-tokens", train.max_new_tokens, "Continuation length")
      ->check(CLI::PositiveNumber);
  c_train->add_flag("--preserve-special,!--no-preserve-special", train.preserve_special,
                    "Keep special tokens in continuations and targets");
  c_train->add_option("--out", train.out, "Output checkpoint");
  c_train->add_option("--loss-csv", train.loss_csv, "Loss curve CSV");
  c_train->add_option("--eval-json", train.eval_json, "Evaluation report JSON");

  BuildTreeArgs tree;
  auto* c_tree = app.add_subcommand("build-tree", "Compile a tree spec into static buffers");
  c_tree->add_option("--spec", tree.spec, "Tree spec JSON; default tree when omitted");
  c_tree->add_option("--heads", tree.heads, "Heads for the default tree")->check(CLI::Range(1, 8));
  c_tree->add_option("--out", tree.out, "Output buffer dump (stdout when omitted)");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Decode greedily from a prompt");
  c_gen->add_option("--checkpoint", gen.checkpoint, "Checkpoint")->required();
  c_gen->add_option("--tree", gen.tree, "Tree spec or buffer dump; default tree when omitted");
  c_gen->add_option("--prompt", gen.prompt, "Text, or comma-separated token ids")->required();
  c_gen->add_option("--max-tokens", gen.max_tokens, "New tokens")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--mode", gen.mode, "Decoding loop")->check(CLI::IsMember({"auto", "medusa"}));
  c_gen->add_flag("--no-eos", gen.no_eos, "Do not stop at EOS");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Sequence-length sweep of AC, Overhead and Speedup");
  c_bench->add_option("--checkpoint", bench.checkpoint, "Checkpoint; random default model when omitted");
  c_bench->add_option("--tree", bench.tree, "Tree spec or buffer dump");
  c_bench->add_option("--config", bench.config, "Sweep config JSON");
  c_bench->add_option("--out", bench.out, "Output CSV (stdout when omitted)");

  SelftestArgs self;
  auto* c_self = app.add_subcommand("selftest", "Run the oracle suites");
  c_self->add_option("--trees", self.trees, "Random tree specs")->check(CLI::PositiveNumber);
  c_self->add_option("--trials", self.trials, "Lossless trials")->check(CLI::PositiveNumber);
  c_self->add_option("--grad-points", self.grad_points, "Gradient check points")
      ->check(CLI::PositiveNumber);

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kExitUsage;
  }

  log::set_level(g.verbosity >= 2   ? log::Level::debug
                 : g.verbosity == 1 ? log::Level::info
                                    : log::Level::warn);
  try {
    if (c_init->parsed()) return run_init_model(g, init, out);
    if (c_corpus->parsed()) return run_gen_corpus(g, corpus, out);
    if (c_train->parsed()) return run_train_heads(g, train, out);
    if (c_tree->parsed()) return run_build_tree(tree, out);
    if (c_gen->parsed()) return run_generate(g, gen, out);
    if (c_bench->parsed()) return run_bench(g, bench, out);
    if (c_self->parsed()) return run_selftest(g, self, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace medusa::cli
