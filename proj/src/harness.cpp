#include "flowplan/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

#include "flowplan/errors.hpp"
#include "flowplan/parallel.hpp"
#include "flowplan/workflow_io.hpp"
#include "json.hpp"

namespace flowplan {

using nlohmann::json;

const char* const kReportColumns =
    "method,model_set,width_set,budget_usd,deadline_s,n_eval,n_sim,success_rate,ci_radius,mean_planner_s,seed";

Shape parse_shape(const std::string& text) {
  if (text == "chain") return Shape::kChain;
  if (text == "diamond" || text == "diamond-stack") return Shape::kDiamond;
  if (text == "random" || text == "random-dag") return Shape::kRandom;
  throw UsageError("unknown shape '" + text + "' (expected chain, diamond or random)");
}

const char* to_string(Shape shape) {
  switch (shape) {
    case Shape::kChain: return "chain";
    case Shape::kDiamond: return "diamond";
    case Shape::kRandom: return "random";
  }
  return "unknown";
}

void SyntheticSpec::validate() const {
  if (nodes < 1 || nodes > NodeSet::kMaxNodes) throw InputError("node count must be in [1, 64]");
  if (models < 1) throw InputError("model count must be positive");
  if (pool_size < 1) throw InputError("pool size must be positive");
  if (!(p_edge >= 0.0 && p_edge <= 1.0)) throw InputError("p_edge must lie in [0, 1]");
  if (!(0.0 <= p_min && p_min <= p_max && p_max <= 1.0)) throw InputError("bad success-probability range");
  if (!(0.0 < tokens_min && tokens_min <= tokens_max)) throw InputError("bad token range");
  if (!(0.0 <= price_min && price_min <= price_max)) throw InputError("bad price range");
  if (!(0.0 < tps_min && tps_min <= tps_max)) throw InputError("bad throughput range");
  if (max_attempts < 1) throw InputError("max_attempts must be positive");
}

std::vector<Edge> shape_edges(Shape shape, int nodes, double p_edge, RngStream& rng) {
  std::vector<Edge> edges;
  switch (shape) {
    case Shape::kChain:
      for (int v = 1; v < nodes; ++v) edges.push_back({v - 1, v});
      break;
    case Shape::kDiamond: {
      int join = 0;
      int next = 1;
      while (next + 2 < nodes) {
        const int a = next;
        const int b = next + 1;
        const int c = next + 2;
        edges.push_back({join, a});
        edges.push_back({join, b});
        edges.push_back({a, c});
        edges.push_back({b, c});
        join = c;
        next += 3;
      }
      for (; next < nodes; ++next) {
        edges.push_back({join, next});
        join = next;
      }
      break;
    }
    case Shape::kRandom:
      for (int u = 0; u < nodes; ++u) {
        for (int v = u + 1; v < nodes; ++v) {
          if (rng.uniform() < p_edge) edges.push_back({u, v});
        }
      }
      break;
  }
  return edges;
}

std::vector<PoolRecord> synthesize_pair_pool(double p, double mean_tokens, const ModelSpec& model, int count,
                                             RngStream& rng) {
  std::vector<PoolRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    PoolRecord r;
    r.success = rng.bernoulli(p);
    r.tokens = std::max<std::int64_t>(1, std::llround(mean_tokens * (0.5 + rng.uniform())));
    r.latency_s = std::max(0.001, std::round(static_cast<double>(r.tokens) / model.tokens_per_second * 1000.0) / 1000.0);
    out.push_back(r);
  }
  return out;
}

namespace {

/// Rounds to `scale` steps per unit; dividing last keeps decimal values exact when printed.
double round_to(double x, double scale) { return std::round(x * scale) / scale; }

WorkflowInstance generate_once(const SyntheticSpec& spec, std::uint64_t attempt) {
  RngStream rng = RngStream::derive(spec.seed, StreamDomain::kInstance, {attempt});
  std::vector<Edge> edges = shape_edges(spec.shape, spec.nodes, spec.p_edge, rng);
  std::vector<std::string> names;
  for (int v = 0; v < spec.nodes; ++v) names.push_back("v" + std::to_string(v));
  WorkflowGraph graph(spec.nodes, std::move(edges), std::move(names));

  std::vector<ModelSpec> models;
  std::vector<double> strength;
  for (int j = 0; j < spec.models; ++j) {
    const double t = spec.models == 1 ? 0.5 : static_cast<double>(j) / (spec.models - 1);
    // Log-spaced prices (linear when the cheapest is free); throughput falls as price rises.
    const double price = spec.price_min > 0.0 ? spec.price_min * std::pow(spec.price_max / spec.price_min, t)
                                              : spec.price_max * t;
    const double tps = spec.tps_max * std::pow(spec.tps_min / spec.tps_max, t);
    models.push_back({"m" + std::to_string(j), round_to(price, 1e6), round_to(tps, 10.0)});
    strength.push_back(spec.models == 1 ? 1.0 : 0.4 + 0.6 * t);
  }
  ModelCatalog catalog(models);

  ProfileTable profiles(spec.nodes, spec.models);
  RolloutPool pools(spec.nodes, spec.models);
  for (NodeIndex v = 0; v < spec.nodes; ++v) {
    const double difficulty = rng.uniform();
    const double base_tokens = spec.tokens_min + (spec.tokens_max - spec.tokens_min) * rng.uniform();
    for (ModelIndex m = 0; m < spec.models; ++m) {
      const double skill = strength[static_cast<std::size_t>(m)] * (1.0 - 0.6 * difficulty) * (0.85 + 0.15 * rng.uniform());
      const double p = round_to(spec.p_min + (spec.p_max - spec.p_min) * std::clamp(skill, 0.0, 1.0), 1e4);
      const double tokens = std::max(1.0, std::round(base_tokens * (0.8 + 0.4 * rng.uniform())));
      if (spec.mode == ProfileMode::kParametric) {
        profiles.set(v, m, make_profile(p, tokens, models[static_cast<std::size_t>(m)]));
      } else {
        RngStream pool_rng = RngStream::derive(spec.seed, StreamDomain::kPoolSynthesis,
                                               {attempt, static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(m)});
        for (const PoolRecord& r :
             synthesize_pair_pool(p, tokens, models[static_cast<std::size_t>(m)], spec.pool_size, pool_rng)) {
          pools.add(v, m, r);
        }
      }
    }
  }
  if (spec.mode == ProfileMode::kParametric) {
    return WorkflowInstance::parametric(std::move(graph), std::move(catalog), std::move(profiles), MicroUsd(0),
                                        Millis(0));
  }
  return WorkflowInstance::empirical(std::move(graph), std::move(catalog), std::move(pools), MicroUsd(0), Millis(0));
}

std::string join_ids(const ModelCatalog& catalog) {
  std::string out;
  for (int m = 0; m < catalog.size(); ++m) {
    if (m > 0) out += ';';
    out += catalog.at(m).id;
  }
  return out;
}

std::string join_widths(std::span<const int> widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i > 0) out += ';';
    out += std::to_string(widths[i]);
  }
  return out;
}

}  // namespace

WorkflowInstance generate_instance(const SyntheticSpec& spec) {
  spec.validate();
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    WorkflowInstance inst = generate_once(spec, static_cast<std::uint64_t>(attempt));
    if (validate(inst).empty()) return inst;
  }
  throw InputError("could not generate a valid instance in " + std::to_string(spec.max_attempts) + " attempts");
}

MethodKind parse_method_kind(const std::string& name) {
  if (name == "mcpp") return MethodKind::kMcpp;
  if (name == "uniform") return MethodKind::kUniform;
  if (name == "retry" || name == "base") return MethodKind::kRetry;
  throw UsageError("unknown method '" + name + "' (expected mcpp, uniform, retry or base)");
}

std::vector<MethodKind> parse_method_list(const std::string& csv) {
  std::vector<MethodKind> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const MethodKind kind = parse_method_kind(item);
    if (std::find(out.begin(), out.end(), kind) == out.end()) out.push_back(kind);
  }
  if (out.empty()) throw UsageError("no methods given");
  return out;
}

std::string Method::label(const ModelCatalog& catalog) const {
  switch (kind) {
    case MethodKind::kMcpp: return "mcpp";
    case MethodKind::kRetry: return "retry(" + catalog.at(model).id + "," + std::to_string(width) + ")";
    case MethodKind::kUniform: return "uniform(" + catalog.at(model).id + ")";
  }
  return "unknown";
}

void EvalSettings::validate() const {
  planner.validate();
  if (n_eval < 1) throw InputError("n_eval must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  if (workers < 1) throw InputError("workers must be at least 1");
}

void EvaluationReport::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.method, a.budget_usd, a.deadline_s, a.n_sim) <
           std::tie(b.method, b.budget_usd, b.deadline_s, b.n_sim);
  });
}

double evaluation_radius(int n_eval, double delta) {
  if (n_eval < 1) throw InputError("n_eval must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * n_eval));
}

ReportRow estimate_success_probability(const WorkflowInstance& instance, const Method& method,
                                       const EvalSettings& settings) {
  settings.validate();
  const int n = settings.n_eval;
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(n), 0);
  std::vector<double> planner_s(static_cast<std::size_t>(n), 0.0);

  PlannerConfig config = settings.planner;
  config.skip_dominated = true;
  config.workers = 1;
  const WorkflowInstance planning =
      settings.planner_pools ? instance.with_pools(*settings.planner_pools) : instance;
  std::optional<UniformPlan> uniform;
  if (method.kind == MethodKind::kUniform) uniform = uniform_plan(instance, method.model);

  parallel_for(static_cast<std::size_t>(n), settings.workers, [&](std::size_t i) {
    const RunOptions options{settings.seed, static_cast<std::uint64_t>(i), false};
    RunResult result;
    switch (method.kind) {
      case MethodKind::kMcpp:
        result = run_mcpp(instance, planning, config, options).run;
        break;
      case MethodKind::kRetry:
        result = run_policy(instance, BasePolicy{method.model, method.width}, options);
        break;
      case MethodKind::kUniform:
        result = run_policy(instance, *uniform, options);
        break;
    }
    ok[i] = result.succeeded() ? 1 : 0;
    planner_s[i] = result.mean_planner_seconds;
  });

  int successes = 0;
  double planner_total = 0.0;
  for (int i = 0; i < n; ++i) {
    successes += ok[static_cast<std::size_t>(i)];
    planner_total += planner_s[static_cast<std::size_t>(i)];
  }

  ReportRow row;
  row.method = method.label(instance.catalog());
  switch (method.kind) {
    case MethodKind::kMcpp:
      row.model_set = join_ids(instance.catalog());
      row.width_set = join_widths(settings.planner.widths);
      row.n_sim = settings.planner.sims_per_pair;
      row.mean_planner_s = planner_total / n;
      break;
    case MethodKind::kRetry:
      row.model_set = instance.catalog().at(method.model).id;
      row.width_set = std::to_string(method.width);
      break;
    case MethodKind::kUniform:
      row.model_set = instance.catalog().at(method.model).id;
      row.width_set = "budget-split";
      break;
  }
  row.budget_usd = micro_to_usd(instance.budget());
  row.deadline_s = millis_to_seconds(instance.deadline());
  row.n_eval = n;
  row.success_rate = static_cast<double>(successes) / n;
  row.ci_radius = evaluation_radius(n, settings.delta);
  row.seed = settings.seed;
  return row;
}

namespace {

ReportRow best_of(std::span<const ReportRow> rows, const std::string& name, const std::string& model_set,
                  const std::string& width_set) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].success_rate > rows[best].success_rate) best = i;
  }
  ReportRow out = rows[best];
  out.method = name;
  out.model_set = model_set;
  out.width_set = width_set;
  out.n_sim = 0;
  out.mean_planner_s = 0.0;
  return out;
}

}  // namespace

EvaluationReport sweep(const WorkflowInstance& instance, std::span<const MethodKind> methods,
                       std::span<const double> budgets_usd, std::span<const double> deadlines_s,
                       const EvalSettings& settings) {
  if (methods.empty() || budgets_usd.empty() || deadlines_s.empty()) throw InputError("sweep grids must be non-empty");
  settings.validate();
  EvaluationReport report;
  const std::string all_models = join_ids(instance.catalog());
  for (double b : budgets_usd) {
    for (double d : deadlines_s) {
      const WorkflowInstance cell = instance.with_constraints(usd_to_micro(b), seconds_to_millis(d));
      for (MethodKind kind : methods) {
        if (kind == MethodKind::kMcpp) {
          report.rows.push_back(estimate_success_probability(cell, Method{kind, 0, 1}, settings));
          continue;
        }
        std::vector<ReportRow> rows;
        for (ModelIndex m = 0; m < cell.model_count(); ++m) {
          if (kind == MethodKind::kUniform) {
            rows.push_back(estimate_success_probability(cell, Method{kind, m, 1}, settings));
            continue;
          }
          for (int k : settings.planner.widths) {
            rows.push_back(estimate_success_probability(cell, Method{kind, m, k}, settings));
          }
        }
        if (kind == MethodKind::kRetry) {
          report.rows.push_back(best_of(rows, "retry", all_models, join_widths(settings.planner.widths)));
        } else {
          report.rows.push_back(best_of(rows, "uniform", all_models, "budget-split"));
        }
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      }
    }
  }
  report.sort();
  return report;
}

EvaluationReport m_sweep(const WorkflowInstance& instance, std::span<const int> m_values,
                         std::span<const double> budgets_usd, std::span<const double> deadlines_s,
                         const EvalSettings& settings) {
  if (m_values.empty() || budgets_usd.empty() || deadlines_s.empty()) throw InputError("sweep grids must be non-empty");
  EvaluationReport report;
  for (double b : budgets_usd) {
    for (double d : deadlines_s) {
      const WorkflowInstance cell = instance.with_constraints(usd_to_micro(b), seconds_to_millis(d));
      for (int m : m_values) {
        EvalSettings s = settings;
        s.planner.sims_per_pair = m;
        report.rows.push_back(estimate_success_probability(cell, Method{MethodKind::kMcpp, 0, 1}, s));
      }
    }
  }
  report.sort();
  return report;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

template <class T>
T parse_number(const std::string& s) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "'");
  return value;
}

}  // namespace

std::string report_to_csv(const EvaluationReport& report) {
  std::string out = kReportColumns;
  out += '\n';
  for (const ReportRow& r : report.rows) {
    out += csv_field(r.method) + ',' + csv_field(r.model_set) + ',' + csv_field(r.width_set) + ',' +
           format_double(r.budget_usd) + ',' + format_double(r.deadline_s) + ',' + std::to_string(r.n_eval) + ',' +
           std::to_string(r.n_sim) + ',' + format_double(r.success_rate) + ',' + format_double(r.ci_radius) + ',' +
           format_double(r.mean_planner_s) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

EvaluationReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportColumns) throw ParseError("unexpected CSV header");
  EvaluationReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 11) throw ParseError("expected 11 CSV fields, got " + std::to_string(f.size()));
    ReportRow r;
    r.method = f[0];
    r.model_set = f[1];
    r.width_set = f[2];
    r.budget_usd = parse_number<double>(f[3]);
    r.deadline_s = parse_number<double>(f[4]);
    r.n_eval = parse_number<int>(f[5]);
    r.n_sim = parse_number<int>(f[6]);
    r.success_rate = parse_number<double>(f[7]);
    r.ci_radius = parse_number<double>(f[8]);
    r.mean_planner_s = parse_number<double>(f[9]);
    r.seed = parse_number<std::uint64_t>(f[10]);
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  json rows = json::array();
  for (const ReportRow& r : report.rows) {
    rows.push_back({{"method", r.method},
                    {"model_set", r.model_set},
                    {"width_set", r.width_set},
                    {"budget_usd", r.budget_usd},
                    {"deadline_s", r.deadline_s},
                    {"n_eval", r.n_eval},
                    {"n_sim", r.n_sim},
                    {"success_rate", r.success_rate},
                    {"ci_radius", r.ci_radius},
                    {"mean_planner_s", r.mean_planner_s},
                    {"seed", r.seed}});
  }
  return json{{"rows", rows}}.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    EvaluationReport report;
    for (const json& j : doc.at("rows")) {
      ReportRow r;
      r.method = j.at("method").get<std::string>();
      r.model_set = j.at("model_set").get<std::string>();
      r.width_set = j.at("width_set").get<std::string>();
      r.budget_usd = j.at("budget_usd").get<double>();
      r.deadline_s = j.at("deadline_s").get<double>();
      r.n_eval = j.at("n_eval").get<int>();
      r.n_sim = j.at("n_sim").get<int>();
      r.success_rate = j.at("success_rate").get<double>();
      r.ci_radius = j.at("ci_radius").get<double>();
      r.mean_planner_s = j.at("mean_planner_s").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      report.rows.push_back(std::move(r));
    }
    return report;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad report JSON: ") + e.what());
  }
}

void emit_report(const EvaluationReport& report, const std::filesystem::path& path) {
  if (report.rows.empty()) throw InputError("refusing to write an empty report");
  write_text_file(path, path.extension() == ".json" ? report_to_json(report) : report_to_csv(report));
}

}  // namespace flowplan
