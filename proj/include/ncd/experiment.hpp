#pragma once

#include "ncd/graph.hpp"
#include "ncd/sbm.hpp"
#include "ncd/split.hpp"
#include "ncd/train.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ncd {

/// Bad or unknown config key/value.
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Phase-1 artifacts missing or produced under a different config.
class StaleArtifactError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Checkpoint incompatible with the dataset or split it is applied to.
class MismatchError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DataSource { sbm, files };

struct RunConfig {
    DataSource source = DataSource::sbm;
    std::filesystem::path edges_path, features_path, labels_path;
    bool row_normalize = false;
    SbmParams sbm{{100, 100, 100, 100, 100}};

    std::filesystem::path split_path;  // empty: generate
    std::vector<int> old_classes;      // empty: pick by seed
    std::vector<int> new_classes;
    std::size_t num_new = 2;
    SplitRatios ratios;

    TrainConfig train;
    std::vector<std::size_t> sweep_layers{2, 4, 8, 16, 32, 64};
    std::uint64_t seed = 0;
    std::filesystem::path out = "runs/default";
    std::string reference;  // "" or "cora-gcn"

    /// Canonical echo of every setting except `out`.
    nlohmann::ordered_json to_json() const;
    /// SHA-256 of to_json().
    std::string hash() const;
    /// SHA-256 of the settings that determine pre-training output.
    std::string pretrain_hash() const;
};

/// Sets one dotted key (see config_keys_help()). Throws ConfigError.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// key=value lines with '#' comments, or a JSON object (nested objects become dotted keys).
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

std::string config_keys_help();

struct Dataset {
    Graph graph;
    ClassSplit split;
    std::string hash;  // covers graph and split
};

/// Fingerprint of graph content (edges, feature bits, labels).
std::string graph_hash(const Graph& g);

/// Loads or generates the graph and the split described by the config.
Dataset resolve_dataset(const RunConfig& cfg);

/// Published SWORD/GCN result on Cora (old / new / all, percent), shown for comparison only.
struct ReferenceRow {
    std::string name;
    double old_acc, new_acc, all_acc;
};
std::optional<ReferenceRow> reference_row(const std::string& name);

// Subcommands. Each writes under cfg.out and throws on failure; see cli_exit_code().
void cmd_gen_data(const RunConfig& cfg, bool force);
void cmd_pretrain(const RunConfig& cfg);
void cmd_ncd(const RunConfig& cfg);
/// `checkpoint` empty: the discovery checkpoint if present, else the pre-training one.
void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint = {});
void cmd_sweep_depth(const RunConfig& cfg);
void cmd_run(const RunConfig& cfg);

/// 0 ok, 1 divergence or other failure, 2 IO/config, 3 stale phase-1 artifacts,
/// 4 checkpoint/dataset mismatch. Call inside a catch block.
int cli_exit_code(const std::exception& e);

} // namespace ncd
