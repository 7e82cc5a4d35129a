#pragma once

#include <filesystem>
#include <string>

#include "flowplan/workflow.hpp"

namespace flowplan {

/// Parses a workflow document. `base_dir` resolves the relative pool path of
/// empirical workflows. Any malformed input raises ParseError; structural
/// problems that parse cleanly are left for validate().
WorkflowInstance parse_workflow(const std::string& json_text, const std::filesystem::path& base_dir,
                                MicroUsd budget = MicroUsd(0), Millis deadline = Millis(0));

WorkflowInstance load_workflow(const std::filesystem::path& path, MicroUsd budget = MicroUsd(0),
                               Millis deadline = Millis(0));

/// Serializes graph, catalog and either the profiles or a reference to
/// `pools_file` (written alongside by the caller). Output is deterministic.
std::string workflow_to_json(const WorkflowInstance& instance, const std::string& pools_file = {});

/// Writes the workflow file and, in empirical mode, `<stem>.pools.jsonl` next to it.
void save_workflow(const WorkflowInstance& instance, const std::filesystem::path& path);

RolloutPool read_pools_jsonl(const std::filesystem::path& path, int node_count, const ModelCatalog& catalog);
RolloutPool parse_pools_jsonl(const std::string& text, int node_count, const ModelCatalog& catalog);
std::string pools_to_jsonl(const RolloutPool& pool, const ModelCatalog& catalog);
void write_pools_jsonl(const RolloutPool& pool, const ModelCatalog& catalog, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace flowplan
