#include "flowplan/workflow_io.hpp"

#include <fstream>
#include <sstream>

#include "flowplan/errors.hpp"
#include "json.hpp"

namespace flowplan {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

ModelCatalog parse_models(const json& doc) {
  std::vector<ModelSpec> models;
  for (const json& m : doc.at("models")) {
    models.push_back({m.at("id").get<std::string>(), m.at("price_per_1k_tokens_usd").get<double>(),
                      m.at("tokens_per_second").get<double>()});
  }
  return ModelCatalog(std::move(models));
}

WorkflowGraph parse_graph(const json& doc) {
  const json& nodes = doc.at("nodes");
  const int n = static_cast<int>(nodes.size());
  std::vector<std::string> names(static_cast<std::size_t>(n));
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (const json& node : nodes) {
    const int id = node.at("id").get<int>();
    if (id < 0 || id >= n || seen[static_cast<std::size_t>(id)]) {
      throw ParseError("node ids must be a permutation of 0.." + std::to_string(n - 1));
    }
    seen[static_cast<std::size_t>(id)] = true;
    names[static_cast<std::size_t>(id)] =
        node.contains("name") ? node.at("name").get<std::string>() : "v" + std::to_string(id);
  }
  std::vector<Edge> edges;
  for (const json& e : doc.value("edges", json::array())) {
    if (!e.is_array() || e.size() != 2) throw ParseError("edges must be [u, v] pairs");
    edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return WorkflowGraph(n, std::move(edges), std::move(names));
}

}  // namespace

RolloutPool parse_pools_jsonl(const std::string& text, int node_count, const ModelCatalog& catalog) {
  RolloutPool pool(node_count, catalog.size());
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const int node = rec.at("node").get<int>();
      const std::string model = rec.at("model").get<std::string>();
      const auto m = catalog.find(model);
      if (!m) throw ParseError("unknown model '" + model + "'");
      if (node < 0 || node >= node_count) throw ParseError("node " + std::to_string(node) + " out of range");
      pool.add(node, *m,
               {rec.at("success").get<bool>(), rec.at("tokens").get<std::int64_t>(),
                rec.at("latency_s").get<double>()});
    } catch (const json::exception& e) {
      throw ParseError("pool line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("pool line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pool;
}

RolloutPool read_pools_jsonl(const std::filesystem::path& path, int node_count, const ModelCatalog& catalog) {
  return parse_pools_jsonl(read_text_file(path), node_count, catalog);
}

WorkflowInstance parse_workflow(const std::string& json_text, const std::filesystem::path& base_dir,
                                MicroUsd budget, Millis deadline) {
  try {
    const json doc = json::parse(json_text);
    WorkflowGraph graph = parse_graph(doc);
    ModelCatalog catalog = parse_models(doc);
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "parametric") {
      ProfileTable profiles(graph.node_count(), catalog.size());
      for (const json& p : doc.at("profiles")) {
        const int node = p.at("node").get<int>();
        const std::string model = p.at("model").get<std::string>();
        const auto m = catalog.find(model);
        if (!m) throw ParseError("profile references unknown model '" + model + "'");
        if (node < 0 || node >= graph.node_count()) {
          throw ParseError("profile references unknown node " + std::to_string(node));
        }
        profiles.set(node, *m, make_profile(p.at("p").get<double>(), p.at("mean_tokens").get<double>(),
                                            catalog.at(*m)));
      }
      return WorkflowInstance::parametric(std::move(graph), std::move(catalog), std::move(profiles), budget,
                                          deadline);
    }
    if (mode == "empirical") {
      const std::filesystem::path pools_path = base_dir / doc.at("pools").get<std::string>();
      RolloutPool pools = read_pools_jsonl(pools_path, graph.node_count(), catalog);
      return WorkflowInstance::empirical(std::move(graph), std::move(catalog), std::move(pools), budget,
                                         deadline);
    }
    throw ParseError("mode must be 'parametric' or 'empirical', got '" + mode + "'");
  } catch (const json::exception& e) {
    throw ParseError(std::string("workflow: ") + e.what());
  }
}

WorkflowInstance load_workflow(const std::filesystem::path& path, MicroUsd budget, Millis deadline) {
  return parse_workflow(read_text_file(path), path.parent_path(), budget, deadline);
}

std::string workflow_to_json(const WorkflowInstance& instance, const std::string& pools_file) {
  const WorkflowGraph& g = instance.graph();
  const ModelCatalog& catalog = instance.catalog();
  json doc;
  doc["nodes"] = json::array();
  for (NodeIndex v = 0; v < g.node_count(); ++v) doc["nodes"].push_back({{"id", v}, {"name", g.name(v)}});
  doc["edges"] = json::array();
  for (const Edge& e : g.edges()) doc["edges"].push_back({e.from, e.to});
  doc["models"] = json::array();
  for (const ModelSpec& m : catalog.models()) {
    doc["models"].push_back({{"id", m.id},
                             {"price_per_1k_tokens_usd", m.price_per_1k_tokens_usd},
                             {"tokens_per_second", m.tokens_per_second}});
  }
  if (instance.mode() == ProfileMode::kParametric) {
    doc["mode"] = "parametric";
    doc["profiles"] = json::array();
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      for (ModelIndex m = 0; m < catalog.size(); ++m) {
        if (const auto& p = instance.profiles().find(v, m)) {
          doc["profiles"].push_back(
              {{"node", v}, {"model", catalog.at(m).id}, {"p", p->success_prob}, {"mean_tokens", p->mean_tokens}});
        }
      }
    }
  } else {
    doc["mode"] = "empirical";
    doc["pools"] = pools_file;
  }
  return doc.dump(2) + "\n";
}

void save_workflow(const WorkflowInstance& instance, const std::filesystem::path& path) {
  std::string pools_file;
  if (instance.mode() == ProfileMode::kEmpirical) {
    pools_file = path.stem().string() + ".pools.jsonl";
    write_pools_jsonl(instance.pools(), instance.catalog(), path.parent_path() / pools_file);
  }
  write_text_file(path, workflow_to_json(instance, pools_file));
}

std::string pools_to_jsonl(const RolloutPool& pool, const ModelCatalog& catalog) {
  std::string out;
  for (NodeIndex v = 0; v < pool.node_count(); ++v) {
    for (ModelIndex m = 0; m < pool.model_count(); ++m) {
      for (const PoolRecord& r : pool.samples(v, m)) {
        const json rec = {{"node", v},
                          {"model", catalog.at(m).id},
                          {"success", r.success},
                          {"tokens", r.tokens},
                          {"latency_s", r.latency_s}};
        out += rec.dump();
        out += '\n';
      }
    }
  }
  return out;
}

void write_pools_jsonl(const RolloutPool& pool, const ModelCatalog& catalog, const std::filesystem::path& path) {
  write_text_file(path, pools_to_jsonl(pool, catalog));
}

}  // namespace flowplan
