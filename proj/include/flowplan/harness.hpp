#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowplan/planner.hpp"
#include "flowplan/policy.hpp"
#include "flowplan/workflow.hpp"

namespace flowplan {

enum class Shape { kChain, kDiamond, kRandom };

Shape parse_shape(const std::string& text);
const char* to_string(Shape shape);

/// Random instance recipe. Models are ordered by price; pricier models are
/// slower and more reliable.
struct SyntheticSpec {
  int nodes = 6;
  Shape shape = Shape::kChain;
  double p_edge = 0.3;
  int models = 3;
  ProfileMode mode = ProfileMode::kParametric;
  int pool_size = 512;
  double p_min = 0.15;
  double p_max = 0.9;
  double tokens_min = 300.0;
  double tokens_max = 3000.0;
  double price_min = 0.0004;
  double price_max = 0.015;
  double tps_min = 25.0;
  double tps_max = 150.0;
  std::uint64_t seed = 0;
  int max_attempts = 8;

  void validate() const;
};

/// Diamond stack: a source, then repeated (two branches, join) blocks; a
/// leftover node hangs off the last join.
std::vector<Edge> shape_edges(Shape shape, int nodes, double p_edge, RngStream& rng);

/// Deterministic per seed. Budget and deadline are left at zero.
WorkflowInstance generate_instance(const SyntheticSpec& spec);

/// `count` records with Bernoulli(p) success and tokens uniform in
/// [0.5, 1.5] x mean_tokens; latency = tokens / throughput.
std::vector<PoolRecord> synthesize_pair_pool(double p, double mean_tokens, const ModelSpec& model, int count,
                                             RngStream& rng);

enum class MethodKind { kMcpp, kUniform, kRetry };

/// Accepts mcpp, uniform, retry and base (an alias of retry). Throws UsageError.
MethodKind parse_method_kind(const std::string& name);
std::vector<MethodKind> parse_method_list(const std::string& csv);

struct Method {
  MethodKind kind = MethodKind::kMcpp;
  ModelIndex model = 0;
  int width = 1;

  /// mcpp, retry(<model>,<k>) or uniform(<model>).
  std::string label(const ModelCatalog& catalog) const;
};

struct EvalSettings {
  PlannerConfig planner;
  int n_eval = 1000;
  double delta = 0.05;
  std::uint64_t seed = 0;
  /// Runs evaluated concurrently. Results do not depend on it.
  int workers = 1;
  /// Planner-visible pools; null means the planner sees the execution pools.
  std::shared_ptr<const RolloutPool> planner_pools;

  void validate() const;
};

struct ReportRow {
  std::string method;
  std::string model_set;
  std::string width_set;
  double budget_usd = 0.0;
  double deadline_s = 0.0;
  int n_eval = 0;
  int n_sim = 0;
  double success_rate = 0.0;
  double ci_radius = 0.0;
  double mean_planner_s = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvaluationReport {
  std::vector<ReportRow> rows;

  /// By (method, budget, deadline, n_sim), stable.
  void sort();

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// sqrt(ln(2/delta) / (2 n)).
double evaluation_radius(int n_eval, double delta);

/// Run i of the evaluation uses execution stream (seed, i, round) for every
/// method, so methods are compared on common random numbers.
ReportRow estimate_success_probability(const WorkflowInstance& instance, const Method& method,
                                       const EvalSettings& settings);

/// Full factorial over budgets x deadlines. Retry expands to every
/// (model, width) in the planner grid and Uniform to every model; each adds a
/// best-of row named "retry" / "uniform".
EvaluationReport sweep(const WorkflowInstance& instance, std::span<const MethodKind> methods,
                       std::span<const double> budgets_usd, std::span<const double> deadlines_s,
                       const EvalSettings& settings);

/// MCPP rows for every N_sim in m_values.
EvaluationReport m_sweep(const WorkflowInstance& instance, std::span<const int> m_values,
                         std::span<const double> budgets_usd, std::span<const double> deadlines_s,
                         const EvalSettings& settings);

/// Decimal point is always '.', doubles use the shortest round-trip form.
std::string format_double(double value);

std::string report_to_csv(const EvaluationReport& report);
std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_csv(const std::string& text);
EvaluationReport report_from_json(const std::string& text);

/// Format from the extension: .json gives JSON, anything else CSV.
/// Throws InputError for an empty report and std::runtime_error when the file
/// cannot be written.
void emit_report(const EvaluationReport& report, const std::filesystem::path& path);

extern const char* const kReportColumns;

}  // namespace flowplan
