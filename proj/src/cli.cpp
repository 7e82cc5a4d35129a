#include "flowplan/cli.hpp"

#include <charconv>
#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "flowplan/errors.hpp"
#include "flowplan/harness.hpp"
#include "flowplan/noise.hpp"
#include "flowplan/oracle.hpp"
#include "flowplan/parallel.hpp"
#include "flowplan/planner.hpp"
#include "flowplan/workflow_io.hpp"
#include "json.hpp"

namespace flowplan {

using nlohmann::json;

namespace {

class InvalidWorkflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& csv) {
  std::vector<T> out;
  for (const std::string& item : split(csv)) {
    T value{};
    const auto res = std::from_chars(item.data(), item.data() + item.size(), value);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw UsageError("'" + item + "' is not a number");
    }
    out.push_back(value);
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

WorkflowInstance load_valid(const std::string& path, double budget_usd, double deadline_s, std::ostream& err) {
  if (!(budget_usd >= 0.0)) throw UsageError("budget must be non-negative");
  if (!(deadline_s >= 0.0)) throw UsageError("deadline must be non-negative");
  WorkflowInstance inst = load_workflow(path, usd_to_micro(budget_usd), seconds_to_millis(deadline_s));
  const std::vector<Violation> problems = validate(inst);
  if (!problems.empty()) {
    for (const Violation& v : problems) err << v.kind << ": " << v.message << '\n';
    throw InvalidWorkflow(path + " is not a valid workflow");
  }
  return inst;
}

json nodes_json(NodeSet s) {
  json out = json::array();
  s.for_each([&](NodeIndex v) { out.push_back(v); });
  return out;
}

json action_json(const AllocationAction& action, const ModelCatalog& catalog) {
  json out = json::array();
  for (const Assignment& a : action.assignments()) {
    out.push_back({{"node", a.node}, {"model", catalog.at(a.model).id}, {"width", a.width}});
  }
  return out;
}

json policy_json(const BasePolicy& p, const ModelCatalog& catalog) {
  return {{"model", catalog.at(p.model).id}, {"width", p.width}};
}

json number_or_null(double x) { return std::isnan(x) ? json(nullptr) : json(x); }

json selection_json(const Selection& sel, const ModelCatalog& catalog, bool with_table) {
  json out = {{"action", action_json(sel.action, catalog)},
              {"portfolio_value", sel.portfolio_value},
              {"best_continuation", policy_json(sel.best_continuation, catalog)},
              {"radius", sel.radius},
              {"candidate_count", sel.candidate_count},
              {"feasible_count", sel.feasible_count}};
  if (with_table) {
    json table = json::array();
    for (const ActionScore& row : sel.table) {
      json values = json::array();
      for (double v : row.continuation_values) values.push_back(number_or_null(v));
      table.push_back({{"action", action_json(row.action, catalog)},
                       {"portfolio_value", row.portfolio_value},
                       {"best_continuation", row.best_continuation},
                       {"continuation_values", values},
                       {"complete", row.complete}});
    }
    out["table"] = table;
  }
  return out;
}

json state_json(const ExecState& s) {
  return {{"completed", nodes_json(s.completed)},
          {"remaining_budget_usd", micro_to_usd(s.remaining_budget)},
          {"remaining_time_s", millis_to_seconds(s.remaining_time)}};
}

void write_or_print(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

RolloutPool read_pools_inferred(const std::string& path, ModelCatalog& catalog_out) {
  const std::string text = read_text_file(path);
  std::vector<ModelSpec> models;
  int max_node = -1;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const std::string id = rec.at("model").get<std::string>();
      bool known = false;
      for (const ModelSpec& m : models) known = known || m.id == id;
      if (!known) models.push_back({id, 0.0, 1.0});
      max_node = std::max(max_node, rec.at("node").get<int>());
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  if (max_node < 0) throw ParseError(path + " holds no records");
  catalog_out = ModelCatalog(models);
  return parse_pools_jsonl(text, max_node + 1, catalog_out);
}

}  // namespace

std::vector<double> parse_double_list(const std::string& csv) { return parse_list<double>(csv); }
std::vector<int> parse_int_list(const std::string& csv) { return parse_list<int>(csv); }

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budget- and deadline-constrained workflow planning and simulation"};
  app.require_subcommand(1);

  // gen
  SyntheticSpec gen;
  std::string gen_shape = "chain";
  std::string gen_mode = "parametric";
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic workflow");
  gen_cmd->add_option("--nodes", gen.nodes, "Node count")->required();
  gen_cmd->add_option("--shape", gen_shape, "chain, diamond or random");
  gen_cmd->add_option("--p-edge", gen.p_edge, "Edge probability for random DAGs");
  gen_cmd->add_option("--models", gen.models, "Model count");
  gen_cmd->add_option("--mode", gen_mode, "parametric or empirical");
  gen_cmd->add_option("--pool-size", gen.pool_size, "Records per (node, model) pool");
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--out", gen_out, "Output workflow file")->required();

  // validate
  std::string workflow;
  auto* validate_cmd = app.add_subcommand("validate", "Check a workflow file");
  validate_cmd->add_option("--workflow", workflow, "Workflow file")->required();

  // shared by plan, run, eval, msweep, oracle
  double budget = 0.0;
  double deadline = 0.0;
  int sims = 64;
  std::uint64_t seed = 0;
  std::string widths_text = "1,4,16,64";
  int workers = default_workers();

  auto* plan_cmd = app.add_subcommand("plan", "Select the first action and print the score table");
  plan_cmd->add_option("--workflow", workflow, "Workflow file")->required();
  plan_cmd->add_option("--budget", budget, "Budget in USD")->required();
  plan_cmd->add_option("--deadline", deadline, "Deadline in seconds")->required();
  plan_cmd->add_option("--sims", sims, "Simulations per (candidate, continuation) pair");
  plan_cmd->add_option("--seed", seed, "Seed");
  plan_cmd->add_option("--widths", widths_text, "Width grid");
  int plan_workers = 1;
  plan_cmd->add_option("--workers", plan_workers, "Scoring threads");

  std::string method = "mcpp";
  std::string model_id;
  int width = 1;
  std::uint64_t run_id = 0;
  auto* run_cmd = app.add_subcommand("run", "Execute one closed-loop run and print its trace");
  run_cmd->add_option("--workflow", workflow, "Workflow file")->required();
  run_cmd->add_option("--method", method, "mcpp, uniform or retry");
  run_cmd->add_option("--model", model_id, "Model id for uniform and retry");
  run_cmd->add_option("--width", width, "Width for retry");
  run_cmd->add_option("--budget", budget, "Budget in USD")->required();
  run_cmd->add_option("--deadline", deadline, "Deadline in seconds")->required();
  run_cmd->add_option("--sims", sims, "Simulations per pair");
  run_cmd->add_option("--seed", seed, "Seed");
  run_cmd->add_option("--run-id", run_id, "Run index within the seed");
  run_cmd->add_option("--widths", widths_text, "Width grid");

  std::string methods_text = "mcpp,uniform,retry";
  std::string budgets_text = "0.05,1,20";
  std::string deadlines_text = "60,300,600,900,1800,3600,7200";
  int n_eval = 10000;
  double delta = 0.05;
  std::string out_path;
  std::string planner_pools;
  std::string model_subset;
  auto* eval_cmd = app.add_subcommand("eval", "Estimate success rates over a budget x deadline grid");
  eval_cmd->add_option("--workflow", workflow, "Workflow file")->required();
  eval_cmd->add_option("--methods", methods_text, "Comma-separated methods");
  eval_cmd->add_option("--budgets", budgets_text, "Budgets in USD");
  eval_cmd->add_option("--deadlines", deadlines_text, "Deadlines in seconds");
  eval_cmd->add_option("--sims", sims, "Simulations per pair");
  eval_cmd->add_option("--n-eval", n_eval, "Runs per cell");
  eval_cmd->add_option("--delta", delta, "Confidence parameter");
  eval_cmd->add_option("--seed", seed, "Seed");
  eval_cmd->add_option("--out", out_path, "Report file (.csv or .json); stdout when absent");
  eval_cmd->add_option("--workers", workers, "Concurrent runs");
  eval_cmd->add_option("--widths", widths_text, "Width grid for the planner and Retry");
  eval_cmd->add_option("--planner-pools", planner_pools, "Pools the planner simulates from");
  eval_cmd->add_option("--model-subset", model_subset, "Comma-separated model ids to keep");

  std::string m_values_text = "16,32,64,128,256";
  auto* msweep_cmd = app.add_subcommand("msweep", "MCPP success rate and planner time per N_sim");
  msweep_cmd->add_option("--workflow", workflow, "Workflow file")->required();
  msweep_cmd->add_option("--m-values", m_values_text, "N_sim values");
  msweep_cmd->add_option("--budgets", budgets_text, "Budgets in USD");
  msweep_cmd->add_option("--deadlines", deadlines_text, "Deadlines in seconds");
  msweep_cmd->add_option("--n-eval", n_eval, "Runs per cell");
  msweep_cmd->add_option("--delta", delta, "Confidence parameter");
  msweep_cmd->add_option("--seed", seed, "Seed");
  msweep_cmd->add_option("--out", out_path, "Report file; stdout when absent");
  msweep_cmd->add_option("--workers", workers, "Concurrent runs");
  msweep_cmd->add_option("--widths", widths_text, "Width grid");

  std::string noise_kind;
  NoiseSpec noise;
  std::string noise_in;
  std::string noise_out;
  auto* noise_cmd = app.add_subcommand("noise", "Perturb a pool file for the planner");
  noise_cmd->add_option("--kind", noise_kind, "tokens or success")->required();
  noise_cmd->add_option("--sigma", noise.sigma, "Noise scale")->required();
  noise_cmd->add_option("--eps", noise.eps, "Clip margin");
  noise_cmd->add_option("--seed", noise.seed, "Seed");
  noise_cmd->add_option("--in", noise_in, "Input pools (JSON Lines)")->required();
  noise_cmd->add_option("--out", noise_out, "Output pools")->required();

  auto* oracle_cmd = app.add_subcommand("oracle", "Exact values for every reachable state");
  oracle_cmd->add_option("--workflow", workflow, "Workflow file")->required();
  oracle_cmd->add_option("--budget", budget, "Budget in USD")->required();
  oracle_cmd->add_option("--deadline", deadline, "Deadline in seconds")->required();
  oracle_cmd->add_option("--widths", widths_text, "Width grid");
  oracle_cmd->add_option("--out", out_path, "Output JSON; stdout when absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.shape = parse_shape(gen_shape);
      if (gen_mode == "parametric") {
        gen.mode = ProfileMode::kParametric;
      } else if (gen_mode == "empirical") {
        gen.mode = ProfileMode::kEmpirical;
      } else {
        throw UsageError("--mode must be parametric or empirical");
      }
      save_workflow(generate_instance(gen), gen_out);
      return 0;
    }

    if (validate_cmd->parsed()) {
      const WorkflowInstance inst = load_workflow(workflow);
      const std::vector<Violation> problems = validate(inst);
      for (const Violation& v : problems) out << v.kind << ": " << v.message << '\n';
      if (!problems.empty()) return 1;
      out << "valid\n";
      return 0;
    }

    PlannerConfig config;
    config.widths = parse_int_list(widths_text);
    config.sims_per_pair = sims;

    if (plan_cmd->parsed()) {
      const WorkflowInstance inst = load_valid(workflow, budget, deadline, err);
      config.workers = plan_workers;
      const auto sel = select_action(ExecState::initial(inst), inst, config, planning_stream(seed, 0, 0));
      json doc;
      if (sel) {
        doc = selection_json(*sel, inst.catalog(), true);
        doc["status"] = "OK";
      } else {
        doc = {{"status", "NO_FEASIBLE"}};
      }
      out << doc.dump(2) << '\n';
      return 0;
    }

    if (run_cmd->parsed()) {
      const WorkflowInstance inst = load_valid(workflow, budget, deadline, err);
      const MethodKind kind = parse_method_kind(method);
      const ModelIndex model = model_id.empty() ? 0 : inst.catalog().index_of(model_id);
      const RunOptions options{seed, run_id, true};
      RunResult result;
      std::vector<Selection> selections;
      if (kind == MethodKind::kMcpp) {
        McppRun r = run_mcpp(inst, config, options);
        result = std::move(r.run);
        selections = std::move(r.selections);
      } else if (kind == MethodKind::kRetry) {
        result = run_policy(inst, BasePolicy{model, width}, options);
      } else {
        result = run_policy(inst, uniform_plan(inst, model), options);
      }
      json trace = json::array();
      for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const TraceStep& step = result.trace[i];
        json j = {{"round", step.round},
                  {"before", state_json(step.before)},
                  {"action", action_json(step.action, inst.catalog())},
                  {"completed_now", nodes_json(step.outcome.completed_now)},
                  {"cost_usd", micro_to_usd(step.outcome.cost)},
                  {"duration_s", millis_to_seconds(step.outcome.duration)},
                  {"planner_s", step.planner_seconds}};
        if (i < selections.size()) j["selection"] = selection_json(selections[i], inst.catalog(), false);
        trace.push_back(std::move(j));
      }
      const json doc = {{"method", kind == MethodKind::kMcpp ? "mcpp" : Method{kind, model, width}.label(inst.catalog())},
                        {"status", result.succeeded() ? "SUCCESS" : "FAILURE"},
                        {"reason", to_string(result.reason)},
                        {"rounds", result.rounds},
                        {"spent_usd", micro_to_usd(result.final_state.spent)},
                        {"elapsed_s", millis_to_seconds(result.final_state.elapsed)},
                        {"mean_planner_s", result.mean_planner_seconds},
                        {"trace", trace}};
      out << doc.dump(2) << '\n';
      return 0;
    }

    if (eval_cmd->parsed() || msweep_cmd->parsed()) {
      WorkflowInstance inst = load_valid(workflow, 0.0, 0.0, err);
      EvalSettings settings;
      settings.planner = config;
      settings.n_eval = n_eval;
      settings.delta = delta;
      settings.seed = seed;
      settings.workers = workers;
      std::optional<WorkflowInstance> planning;
      if (!planner_pools.empty()) {
        if (inst.mode() != ProfileMode::kEmpirical) throw UsageError("--planner-pools needs an empirical workflow");
        planning = inst.with_pools(read_pools_jsonl(planner_pools, inst.node_count(), inst.catalog()));
      }
      if (!model_subset.empty()) {
        const std::vector<std::string> ids = split(model_subset);
        inst = inst.restrict_models(ids);
        if (planning) planning = planning->restrict_models(ids);
      }
      if (planning) settings.planner_pools = std::make_shared<RolloutPool>(planning->pools());
      const std::vector<double> budgets = parse_double_list(budgets_text);
      const std::vector<double> deadlines = parse_double_list(deadlines_text);
      EvaluationReport report;
      if (eval_cmd->parsed()) {
        report = sweep(inst, parse_method_list(methods_text), budgets, deadlines, settings);
      } else {
        report = m_sweep(inst, parse_int_list(m_values_text), budgets, deadlines, settings);
      }
      if (out_path.empty()) {
        out << report_to_csv(report);
      } else {
        emit_report(report, out_path);
      }
      return 0;
    }

    if (noise_cmd->parsed()) {
      if (noise_kind == "tokens") {
        noise.kind = NoiseKind::kTokenLength;
      } else if (noise_kind == "success") {
        noise.kind = NoiseKind::kSuccessRate;
      } else {
        throw UsageError("--kind must be tokens or success");
      }
      ModelCatalog catalog;
      const RolloutPool pool = read_pools_inferred(noise_in, catalog);
      write_pools_jsonl(perturb(pool, noise), catalog, noise_out);
      return 0;
    }

    if (oracle_cmd->parsed()) {
      const WorkflowInstance inst = load_valid(workflow, budget, deadline, err);
      ExactOracle<double> oracle(inst, parse_int_list(widths_text));
      json states = json::array();
      for (const ExecState& s : oracle.reachable_states(ExecState::initial(inst))) {
        json j = state_json(s);
        j["remaining_budget_micro_usd"] = s.remaining_budget.value;
        j["remaining_time_ms"] = s.remaining_time.value;
        j["optimal"] = oracle.value(s);
        j["exact_planner"] = oracle.exact_planner_value(s);
        json portfolio = json::array();
        for (const BasePolicy& mu : oracle.portfolio()) {
          json p = policy_json(mu, inst.catalog());
          p["value"] = oracle.policy_value(s, mu);
          portfolio.push_back(std::move(p));
        }
        j["portfolio"] = std::move(portfolio);
        states.push_back(std::move(j));
      }
      const json doc = {{"budget_usd", budget},
                        {"deadline_s", deadline},
                        {"widths", parse_int_list(widths_text)},
                        {"states", states}};
      write_or_print(out_path, doc.dump(2) + "\n", out);
      return 0;
    }
  } catch (const InvalidWorkflow& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace flowplan
