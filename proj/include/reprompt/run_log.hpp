#pragma once

// Run log: JSONL with one header line (resolved config) followed by one line
// per iteration record; greedy runs add one summary line per round.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprompt/pool.hpp"
#include "reprompt/task.hpp"

namespace reprompt {

struct IterationRecord {
  std::int64_t iteration = 0;  // -1 for initialization draws
  std::size_t slot = 0;
  std::vector<std::size_t> shot_set;
  bool draw_correct = false;
  bool accepted = false;
  double running_avg = 0.0;
  std::optional<std::string> error;
  // Greedy only: tuple scores of the candidate and the incumbent.
  std::optional<double> candidate_score;
  std::optional<double> incumbent_score;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct GreedyRoundSummary {
  std::size_t round = 0;
  std::vector<std::size_t> selected;  // top-K slots after the round
  double top_k_mean = 0.0;
  std::vector<std::optional<double>> slot_scores;
};

struct RunLog {
  nlohmann::json header = nlohmann::json::object();
  std::vector<IterationRecord> records;
  std::vector<GreedyRoundSummary> rounds;
};

inline nlohmann::json to_json(const IterationRecord& r) {
  nlohmann::json j = {{"kind", "iteration"},
                      {"iteration", r.iteration},
                      {"slot", r.slot},
                      {"shot_set", r.shot_set},
                      {"draw_correct", r.draw_correct},
                      {"accepted", r.accepted},
                      {"running_avg", r.running_avg}};
  if (r.error) j["error"] = *r.error;
  if (r.candidate_score) j["candidate_score"] = *r.candidate_score;
  if (r.incumbent_score) j["incumbent_score"] = *r.incumbent_score;
  return j;
}

inline IterationRecord record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<std::int64_t>();
  r.slot = j.at("slot").get<std::size_t>();
  r.shot_set = j.at("shot_set").get<std::vector<std::size_t>>();
  r.draw_correct = j.at("draw_correct").get<bool>();
  r.accepted = j.at("accepted").get<bool>();
  r.running_avg = j.at("running_avg").get<double>();
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  if (j.contains("candidate_score")) r.candidate_score = j.at("candidate_score").get<double>();
  if (j.contains("incumbent_score")) r.incumbent_score = j.at("incumbent_score").get<double>();
  return r;
}

inline nlohmann::json to_json(const GreedyRoundSummary& s) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& v : s.slot_scores) scores.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  return {{"kind", "round"},
          {"round", s.round},
          {"selected", s.selected},
          {"top_k_mean", s.top_k_mean},
          {"slot_scores", std::move(scores)}};
}

inline GreedyRoundSummary round_from_json(const nlohmann::json& j) {
  GreedyRoundSummary s;
  s.round = j.at("round").get<std::size_t>();
  s.selected = j.at("selected").get<std::vector<std::size_t>>();
  s.top_k_mean = j.at("top_k_mean").get<double>();
  for (const auto& v : j.at("slot_scores"))
    s.slot_scores.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  return s;
}

class LogFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline RunLog parse_run_log(std::istream& in) {
  RunLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto kind = j.at("kind").get<std::string>();
      if (kind == "header") {
        log.header = std::move(j);
      } else if (kind == "iteration") {
        log.records.push_back(record_from_json(j));
      } else if (kind == "round") {
        log.rounds.push_back(round_from_json(j));
      } else {
        throw LogFormatError("unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw LogFormatError("run log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

inline RunLog read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_run_log(in);
}

// Receives run artifacts as they are produced.
class RunSink {
 public:
  virtual ~RunSink() = default;
  virtual void on_header(const nlohmann::json& header) = 0;
  virtual void on_record(const IterationRecord& record) = 0;
  virtual void on_round(const GreedyRoundSummary&) {}
  virtual void on_snapshot(std::int64_t iteration, const RecipePool& pool) = 0;
};

// Writes <dir>/log.jsonl (flushed per line, so an aborted run leaves a
// partial log) and <dir>/pool-<iteration>.json snapshots.
class DirectoryRunSink : public RunSink {
 public:
  explicit DirectoryRunSink(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    log_.open(dir_ / "log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_) throw std::runtime_error("cannot create " + (dir_ / "log.jsonl").string());
  }

  void on_header(const nlohmann::json& header) override { write_line(header); }
  void on_record(const IterationRecord& record) override { write_line(to_json(record)); }
  void on_round(const GreedyRoundSummary& summary) override { write_line(to_json(summary)); }
  void on_snapshot(std::int64_t iteration, const RecipePool& pool) override {
    write_json_file(dir_ / ("pool-" + std::to_string(iteration) + ".json"), to_json(pool));
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void write_line(const nlohmann::json& j) {
    log_ << j.dump() << '\n';
    log_.flush();
  }

  std::filesystem::path dir_;
  std::ofstream log_;
};

}  // namespace reprompt
