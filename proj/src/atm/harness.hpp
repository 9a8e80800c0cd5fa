#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace atm {

// Flat key = value document; '#' starts a comment. See docs/formats.md.
struct ExperimentSpec {
  std::string objective;
  std::size_t p = 0;
  std::vector<int> levels;           // one per factor
  std::vector<std::string> methods;  // expanded: atm-sweep becomes atm:0 .. atm:1
  int t_elim = 2;
  int replications = 30;
  double noise = 0.0;
  std::string augmentation = "all_x1";
  std::vector<int> multipliers;  // per stage, from augmentation
  std::uint64_t seed = 0;
  std::string output;           // path prefix for _raw.csv, _summary.csv, _manifest.json
  unsigned threads = 0;         // 0: hardware concurrency
  bool record_time = true;      // false writes wall_ms = 0 (byte-stable outputs)
  bool exclude_dead_runs = true;
  bool physical_ordinal = false;  // EI ordinal distances on physical values
  std::size_t candidate_count = 200;
};

ExperimentSpec parse_spec(std::istream& in);
ExperimentSpec parse_spec_file(const std::string& path);
std::vector<std::string> expand_methods(const std::vector<std::string>& names);
std::vector<int> augmentation_multipliers(const std::string& scheme, int t_elim);
void to_json(nlohmann::json& j, const ExperimentSpec& s);

struct RawRow {
  std::string method;
  int stage = 0;
  int rep = 0;
  std::size_t n = 0;
  double pred_f = 0.0;  // noiseless value of the predicted setting
  std::vector<int> pred_setting;
  std::vector<double> alphas;  // empty when the method has none
  double wall_ms = 0.0;        // cumulative within (method, rep)
};

struct FailureRecord {
  std::string method;
  int rep = 0;
  std::string message;
};

struct SummaryRow {
  std::string method;
  int stage = 0;
  std::size_t reps = 0;
  double n = 0.0;  // mean cumulative run count
  double mean_f = 0.0;
  double median_f = 0.0;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<RawRow> rows;  // ordered by (rep, method order, stage)
  std::vector<FailureRecord> failures;
  std::vector<SummaryRow> summary;
};

// Replication r uses seed base + r; methods in a replication share the stage-0
// design and the noise stream.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// Summary rows ordered by method order of first appearance, then stage.
std::vector<SummaryRow> summarize(const std::vector<RawRow>& rows);
const SummaryRow* find_summary(const ExperimentResult& r, const std::string& method, int stage);

std::uint64_t fnv1a64(const std::string& bytes);

// method,stage,rep,n,pred_f,pred_setting,alpha_vec,wall_ms
void write_raw_csv(std::ostream& out, const std::vector<RawRow>& rows);
std::vector<RawRow> read_raw_csv(std::istream& in);
// method,stage,reps,n,mean_f,median_f
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
nlohmann::json manifest(const ExperimentResult& r);
// Writes the three files under spec.output; no-op when output is empty.
void write_outputs(const ExperimentResult& r);

}  // namespace atm
