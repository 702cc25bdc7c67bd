// reprompt: command-line front end.
//
//   reprompt ingest bbh.json --train-size 20 --seed 0 --out task.json
//   reprompt run-gibbs --config cfg.json --seed 7
//   reprompt select-prompt --config cfg.json --run runs/<id>
//   reprompt eval --config cfg.json --method zero_shot --backend oracle
//   reprompt compare --config cfg.json --prompt runs/<id>/prompt.json
//   reprompt curve runs/<id>/log.jsonl

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "reprompt/commands.hpp"

namespace {

using reprompt::CommandOptions;

void add_common(CLI::App* cmd, CommandOptions& o) {
  cmd->add_option("--config", o.config, "run configuration JSON");
  cmd->add_option("--seed", o.seed, "seed override");
  cmd->add_option("--out", o.out, "output directory for runs");
  cmd->add_option("--cache-dir", o.cache_dir, "response cache directory");
  cmd->add_option("--run-id", o.run_id, "name of the run directory to create");
  cmd->add_flag("--no-cache", o.no_cache, "bypass the response cache");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recipe search for chain-of-thought prompts"};
  app.require_subcommand(1);
  CommandOptions o;
  std::size_t n_train = 20, n_test = 50;

  auto* ingest = app.add_subcommand("ingest", "Big-Bench JSON -> task bundle");
  ingest->add_option("input", o.input, "Big-Bench task JSON")->required();
  ingest->add_option("--train-size", o.train_size, "training examples (default 20)");
  ingest->add_option("--seed", o.seed, "split seed");
  ingest->add_option("--reserved", o.reserved, "reserved test items: BBH task JSON or index array");
  ingest->add_option("--out", o.out, "task bundle to write")->required();

  auto* synth = app.add_subcommand("make-synthetic", "write a synthetic multiple-choice task");
  synth->add_option("--train-size", n_train, "training examples");
  synth->add_option("--test-size", n_test, "test examples");
  synth->add_option("--seed", o.seed, "generator seed");
  synth->add_option("--out", o.out, "task bundle to write")->required();

  auto* gibbs = app.add_subcommand("run-gibbs", "Gibbs sampling over the recipe pool");
  add_common(gibbs, o);
  gibbs->add_option("--iterations", o.max_iterations, "maximum sampling iterations (M)");

  auto* greedy = app.add_subcommand("run-greedy", "greedy recipe search");
  add_common(greedy, o);
  greedy->add_option("--iterations", o.max_iterations, "rounds (M)");

  auto* select = app.add_subcommand("select-prompt", "score a finished run and pick the test-time shots");
  add_common(select, o);
  select->add_option("--run", o.run, "run directory holding log.jsonl and pool-final.json")->required();
  select->add_option("--backend", o.backends, "scoring backend (default: the run's sampling backend)");

  auto* eval = app.add_subcommand("eval", "evaluate one method on the test split");
  add_common(eval, o);
  eval->add_option("--method", o.methods, "zero_shot | few_shot | cot_file | reprompt_gibbs | reprompt_greedy")
      ->required();
  eval->add_option("--backend", o.backends, "backend id");
  eval->add_option("--prompt", o.prompt, "prompt.json for reprompt methods");
  eval->add_option("--cot-file", o.cot_file, "handwritten chain-of-thought prompt");

  auto* compare = app.add_subcommand("compare", "accuracy table over methods x backends");
  add_common(compare, o);
  compare->add_option("--method", o.methods, "methods (default: every available one)");
  compare->add_option("--backend", o.backends, "backend ids (default: eval_backends)");
  compare->add_option("--prompt", o.prompt, "prompt.json adds the reprompt row");
  compare->add_option("--cot-file", o.cot_file, "handwritten chain-of-thought prompt");

  auto* curve = app.add_subcommand("curve", "learning curve CSV from a run log");
  curve->add_option("log", o.input, "log.jsonl")->required();
  curve->add_option("--out", o.out, "CSV file to write (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return reprompt::cmd_ingest(o, std::cout);
    if (synth->parsed()) return reprompt::cmd_make_synthetic(o, n_train, n_test, std::cout);
    if (gibbs->parsed()) return reprompt::cmd_run(reprompt::SearchMode::kGibbs, o, std::cout);
    if (greedy->parsed()) return reprompt::cmd_run(reprompt::SearchMode::kGreedy, o, std::cout);
    if (select->parsed()) return reprompt::cmd_select_prompt(o, std::cout);
    if (eval->parsed()) return reprompt::cmd_eval(o, std::cout);
    if (compare->parsed()) return reprompt::cmd_compare(o, std::cout);
    if (curve->parsed()) return reprompt::cmd_curve(o, std::cout);
  } catch (const std::exception& e) {
    const auto cat = reprompt::categorize(e);
    std::cerr << "reprompt: error[" << cat.name << "]: " << e.what() << '\n';
    return cat.exit_code;
  }
  return 1;
}
