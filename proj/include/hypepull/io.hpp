#pragma once

// Dataset ingestion, synthetic datasets and model checkpoints.
//
// Schemas
//   observations CSV  N rows x D_y columns; an optional first line of column
//                     names; blank lines and lines starting with '#' are skipped.
//   graph JSON        {"nodes": [...], "dist": [[...]] | "edges": [[i, j], ...],
//                      "assignment": [node index per data row]}
//   trajectory JSON   {"starts": [0, ...]}
//   checkpoint JSON   see save_checkpoint; float64 arrays are base64 of their
//                     little-endian bytes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hypepull/gplvm.hpp"
#include "hypepull/training.hpp"

namespace hypepull {

using Json = nlohmann::json;

/// Parses a numeric CSV; errors carry the 1-based line and column.
Matrix read_csv(const std::string& path);
Matrix parse_csv(const std::string& text, const std::string& origin = "<string>");
/// Shortest round-trip decimal representation of every entry.
void write_csv(const std::string& path, const Matrix& M, const std::vector<std::string>& header = {});
std::string format_double(double v);

struct GraphData {
  std::vector<std::string> nodes;
  Matrix dist;
  std::vector<int> assignment;
};
/// Validates symmetry, zero diagonal and assignment range against n_rows.
GraphData parse_graph(const Json& j, int n_rows);
TrajectoryPrior parse_trajectory(const Json& j, int n_rows);

struct Dataset {
  Matrix Y;       // centred observations
  Vector offset;  // column means removed at ingestion
  std::optional<GraphData> graph;
  std::optional<TrajectoryPrior> trajectory;
};
Dataset load_dataset(const std::string& obs_path, const std::string& graph_path = "",
                     const std::string& traj_path = "");

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& j);

std::string base64_encode(const std::vector<double>& values);
std::vector<double> base64_decode(const std::string& text);
Json encode_matrix(const Matrix& M);
Matrix decode_matrix(const Json& j);

/// n points on a 270 degree arc of radius 0.7 centred at the origin, opening
/// towards +x, optionally perturbed by Gaussian noise (seeded). n x 2, Poincare coordinates.
Matrix gen_cshape(int n, double noise = 0.0, std::uint64_t seed = 0);

struct TreeDataset {
  Matrix Y;                     // (nodes * samples_per_node) x dims, raw
  GraphData graph;              // edge-count distances
  std::vector<int> parent;      // -1 for the root
  std::vector<int> depth;
};
/// Complete tree of the given depth and branching; node features diffuse from
/// the root by N(0, step^2 I) per edge and each node emits samples_per_node
/// rows with N(0, noise^2 I) scatter.
TreeDataset gen_tree(int depth, int branching, int dims, std::uint64_t seed, int samples_per_node = 1,
                     double step = 1.0, double noise = 0.1);
Json graph_to_json(const GraphData& g);

struct Checkpoint {
  // Built with the stored kernel samples, jitter and offset.
  std::optional<LatentModel> model;
  Json priors;          // prior configuration as written
  Json trace_summary;   // e.g. first/best/last objective
  Json config;          // resolved config of the producing run
};
inline constexpr int kCheckpointSchema = 1;
Json checkpoint_to_json(const LatentModel& model, const Json& priors, const Json& trace_summary,
                        const Json& config);
Checkpoint checkpoint_from_json(const Json& j);
void save_checkpoint(const std::string& path, const LatentModel& model, const Json& priors = Json::object(),
                     const Json& trace_summary = Json::object(), const Json& config = Json::object());
Checkpoint load_checkpoint(const std::string& path);

Json kernel_to_json(const Kernel& kernel);
std::shared_ptr<const Kernel> kernel_from_json(const Json& j);

}  // namespace hypepull
