#include "hypepull/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "hypepull/errors.hpp"

namespace hypepull {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void json_error(const std::string& origin, const std::string& what) {
  throw DataError(origin + ": " + what);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Matrix parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_allowed = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = split_fields(t);
    std::vector<double> vals(fields.size());
    bool numeric = true;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_number(fields[c], vals[c])) {
        numeric = false;
        bad = c;
        break;
      }
    }
    if (!numeric) {
      if (header_allowed) {
        header_allowed = false;
        width = fields.size();
        continue;
      }
      std::ostringstream os;
      os << origin << ": line " << lineno << ", column " << bad + 1 << ": '" << fields[bad] << "' is not a number";
      throw DataError(os.str());
    }
    header_allowed = false;
    if (width == 0) width = vals.size();
    if (vals.size() != width) {
      std::ostringstream os;
      os << origin << ": line " << lineno << " has " << vals.size() << " columns, expected " << width;
      throw DataError(os.str());
    }
    for (std::size_t c = 0; c < vals.size(); ++c) {
      if (!std::isfinite(vals[c])) {
        std::ostringstream os;
        os << origin << ": line " << lineno << ", column " << c + 1 << " is not finite";
        throw DataError(os.str());
      }
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError(origin + ": no data rows");
  Matrix M(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) M(r, c) = rows[r][c];
  return M;
}

Matrix read_csv(const std::string& path) { return parse_csv(read_file(path), path); }

void write_csv(const std::string& path, const Matrix& M, const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << '\n';
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << format_double(M(r, c));
    out << '\n';
  }
}

Json read_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

GraphData parse_graph(const Json& j, int n_rows) {
  const std::string origin = "graph";
  if (!j.is_object()) json_error(origin, "expected a JSON object");
  GraphData g;
  int n_nodes = -1;
  if (j.contains("nodes")) {
    if (!j["nodes"].is_array()) json_error(origin, "'nodes' must be an array");
    for (const auto& node : j["nodes"]) g.nodes.push_back(node.is_string() ? node.get<std::string>() : node.dump());
    n_nodes = static_cast<int>(g.nodes.size());
  }
  if (j.contains("dist")) {
    const auto& d = j["dist"];
    if (!d.is_array()) json_error(origin, "'dist' must be an array of rows");
    const int n = static_cast<int>(d.size());
    if (n_nodes >= 0 && n != n_nodes) json_error(origin, "'dist' has " + std::to_string(n) + " rows but there are " +
                                                             std::to_string(n_nodes) + " nodes");
    g.dist.resize(n, n);
    for (int r = 0; r < n; ++r) {
      if (!d[r].is_array() || static_cast<int>(d[r].size()) != n)
        json_error(origin, "'dist' row " + std::to_string(r) + " does not have " + std::to_string(n) + " entries");
      for (int c = 0; c < n; ++c) {
        if (!d[r][c].is_number()) json_error(origin, "'dist' entry (" + std::to_string(r) + ", " + std::to_string(c) +
                                                         ") is not a number");
        g.dist(r, c) = d[r][c].get<double>();
      }
    }
    for (int r = 0; r < n; ++r) {
      if (g.dist(r, r) != 0.0) json_error(origin, "'dist' diagonal entry " + std::to_string(r) + " is not zero");
      for (int c = 0; c < r; ++c) {
        if (g.dist(r, c) != g.dist(c, r)) {
          std::ostringstream os;
          os << "'dist' is not symmetric at (" << r << ", " << c << "): " << g.dist(r, c) << " vs " << g.dist(c, r);
          json_error(origin, os.str());
        }
        if (!(g.dist(r, c) >= 0.0)) json_error(origin, "'dist' has a negative entry at (" + std::to_string(r) + ", " +
                                                           std::to_string(c) + ")");
      }
    }
  } else if (j.contains("edges")) {
    if (n_nodes < 0) json_error(origin, "'edges' requires 'nodes'");
    std::vector<std::vector<int>> adj(n_nodes);
    const auto& e = j["edges"];
    if (!e.is_array()) json_error(origin, "'edges' must be an array of [i, j] pairs");
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (!e[k].is_array() || e[k].size() != 2 || !e[k][0].is_number_integer() || !e[k][1].is_number_integer())
        json_error(origin, "edge " + std::to_string(k) + " is not an [i, j] integer pair");
      const int a = e[k][0].get<int>(), b = e[k][1].get<int>();
      if (a < 0 || a >= n_nodes || b < 0 || b >= n_nodes)
        json_error(origin, "edge " + std::to_string(k) + " refers to a node outside [0, " + std::to_string(n_nodes) + ")");
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    g.dist = Matrix::Constant(n_nodes, n_nodes, std::numeric_limits<double>::infinity());
    for (int s = 0; s < n_nodes; ++s) {
      std::queue<int> q;
      g.dist(s, s) = 0.0;
      q.push(s);
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[u])
          if (std::isinf(g.dist(s, v))) {
            g.dist(s, v) = g.dist(s, u) + 1.0;
            q.push(v);
          }
      }
    }
    if (!g.dist.allFinite()) json_error(origin, "the edge list does not connect all nodes");
  } else {
    json_error(origin, "expected 'dist' or 'edges'");
  }
  if (g.nodes.empty())
    for (int i = 0; i < g.dist.rows(); ++i) g.nodes.push_back(std::to_string(i));
  if (!j.contains("assignment") || !j["assignment"].is_array()) json_error(origin, "missing 'assignment' array");
  const auto& a = j["assignment"];
  if (static_cast<int>(a.size()) != n_rows)
    json_error(origin, "'assignment' has " + std::to_string(a.size()) + " entries for " + std::to_string(n_rows) +
                           " data rows");
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (!a[r].is_number_integer()) json_error(origin, "'assignment' entry " + std::to_string(r) + " is not an integer");
    const int node = a[r].get<int>();
    if (node < 0 || node >= g.dist.rows())
      json_error(origin, "'assignment' entry " + std::to_string(r) + " = " + std::to_string(node) +
                             " is outside [0, " + std::to_string(g.dist.rows()) + ")");
    g.assignment.push_back(node);
  }
  return g;
}

TrajectoryPrior parse_trajectory(const Json& j, int n_rows) {
  if (!j.is_object() || !j.contains("starts") || !j["starts"].is_array())
    throw DataError("trajectory: expected {\"starts\": [...]}");
  TrajectoryPrior t;
  for (std::size_t k = 0; k < j["starts"].size(); ++k) {
    const auto& v = j["starts"][k];
    if (!v.is_number_integer()) throw DataError("trajectory: start " + std::to_string(k) + " is not an integer");
    t.starts.push_back(v.get<int>());
  }
  trajectory_segments(t, n_rows);
  return t;
}

Dataset load_dataset(const std::string& obs_path, const std::string& graph_path, const std::string& traj_path) {
  Dataset d;
  const Matrix Y = read_csv(obs_path);
  d.offset = Y.colwise().mean().transpose();
  d.Y = Y.rowwise() - d.offset.transpose();
  const int n = static_cast<int>(Y.rows());
  if (!graph_path.empty()) d.graph = parse_graph(read_json(graph_path), n);
  if (!traj_path.empty()) d.trajectory = parse_trajectory(read_json(traj_path), n);
  return d;
}

std::string base64_encode(const std::vector<double>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
  }
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  const std::string allowed = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string body = text;
  std::size_t pad = 0;
  while (!body.empty() && body.back() == '=') {
    body.pop_back();
    ++pad;
  }
  if (pad > 2 || (body.size() + pad) % 4 != 0 || body.find_first_not_of(allowed) != std::string::npos)
    throw DataError("malformed base64 array");
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::string bytes(It(body.begin()), It(body.end()));
  // Trailing partial bits from the 6-to-8 regrouping are not data.
  bytes.resize((body.size() * 6) / 8);
  if (bytes.size() % 8 != 0) throw DataError("base64 array length is not a multiple of 8 bytes");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * i + k])) << (8 * k);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

Json encode_matrix(const Matrix& M) {
  std::vector<double> v;
  v.reserve(M.size());
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) v.push_back(M(r, c));
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", base64_encode(v)}};
}

Matrix decode_matrix(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw DataError("checkpoint: malformed matrix entry");
  const auto rows = j["rows"].get<Eigen::Index>(), cols = j["cols"].get<Eigen::Index>();
  const auto v = base64_decode(j["data"].get<std::string>());
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw DataError("checkpoint: matrix size mismatch");
  Matrix M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = v[r * cols + c];
  return M;
}

Matrix gen_cshape(int n, double noise, std::uint64_t seed) {
  if (n < 1) throw ConfigError("C-shape needs n >= 1");
  constexpr double radius = 0.7;
  const double lo = std::numbers::pi / 4.0, hi = 7.0 * std::numbers::pi / 4.0;
  Matrix P(n, 2);
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
    const double a = lo + t * (hi - lo);
    P(i, 0) = radius * std::cos(a);
    P(i, 1) = radius * std::sin(a);
  }
  if (noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, noise);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) P(i, c) += nd(rng);
    // Keep every point strictly inside the unit disk.
    for (int i = 0; i < n; ++i) {
      const double r = P.row(i).norm();
      if (r > 0.98) P.row(i) *= 0.98 / r;
    }
  }
  return P;
}

TreeDataset gen_tree(int depth, int branching, int dims, std::uint64_t seed, int samples_per_node, double step,
                     double noise) {
  if (depth < 1) throw ConfigError("tree depth must be >= 1");
  if (branching < 1) throw ConfigError("tree branching must be >= 1");
  if (dims < 1) throw ConfigError("tree feature dimension must be >= 1");
  if (samples_per_node < 1) throw ConfigError("samples per node must be >= 1");
  TreeDataset t;
  t.parent.push_back(-1);
  t.depth.push_back(0);
  for (std::size_t i = 0; i < t.parent.size(); ++i) {
    if (t.depth[i] == depth) continue;
    for (int b = 0; b < branching; ++b) {
      t.parent.push_back(static_cast<int>(i));
      t.depth.push_back(t.depth[i] + 1);
    }
  }
  const int n_nodes = static_cast<int>(t.parent.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix F = Matrix::Zero(n_nodes, dims);
  for (int i = 1; i < n_nodes; ++i)
    for (int c = 0; c < dims; ++c) F(i, c) = F(t.parent[i], c) + step * nd(rng);
  t.Y.resize(n_nodes * samples_per_node, dims);
  for (int i = 0; i < n_nodes; ++i)
    for (int s = 0; s < samples_per_node; ++s) {
      const int r = i * samples_per_node + s;
      for (int c = 0; c < dims; ++c) t.Y(r, c) = F(i, c) + noise * nd(rng);
      t.graph.assignment.push_back(i);
    }
  // Edge-count distance through the lowest common ancestor.
  t.graph.dist = Matrix::Zero(n_nodes, n_nodes);
  for (int a = 0; a < n_nodes; ++a)
    for (int b = 0; b < a; ++b) {
      int x = a, y = b, d = 0;
      while (x != y) {
        if (t.depth[x] >= t.depth[y]) x = t.parent[x];
        else y = t.parent[y];
        ++d;
      }
      t.graph.dist(a, b) = t.graph.dist(b, a) = d;
    }
  for (int i = 0; i < n_nodes; ++i) t.graph.nodes.push_back(std::to_string(i));
  return t;
}

Json graph_to_json(const GraphData& g) {
  Json dist = Json::array();
  for (Eigen::Index r = 0; r < g.dist.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < g.dist.cols(); ++c) row.push_back(g.dist(r, c));
    dist.push_back(row);
  }
  return {{"nodes", g.nodes}, {"dist", dist}, {"assignment", g.assignment}};
}

Json kernel_to_json(const Kernel& kernel) {
  Json j{{"kind", to_string(kernel.kind())},
         {"tau", kernel.tau()},
         {"kappa", kernel.kappa()},
         {"hyperparameters", base64_encode({kernel.tau(), kernel.kappa()})}};
  if (const auto* k2 = dynamic_cast<const Hyp2SEKernel*>(&kernel)) {
    j["seed"] = k2->seed();
    j["num_samples"] = k2->num_samples();
    j["b"] = base64_encode(k2->samples().b);
    j["s"] = base64_encode(k2->samples().s);
  } else if (const auto* k3 = dynamic_cast<const Hyp3SEKernel*>(&kernel)) {
    j["limit_threshold"] = base64_encode({k3->limit_threshold()});
  } else {
    j["dim"] = kernel.ambient_dim();
  }
  return j;
}

std::shared_ptr<const Kernel> kernel_from_json(const Json& j) {
  try {
    const auto hp = base64_decode(j.at("hyperparameters").get<std::string>());
    if (hp.size() != 2) throw DataError("checkpoint: kernel hyperparameters must hold tau and kappa");
    const KernelKind kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
      case KernelKind::Hyp2SE: {
        Hyp2SEKernel::Samples s{base64_decode(j.at("b").get<std::string>()), base64_decode(j.at("s").get<std::string>())};
        if (s.b.size() != 2 * s.s.size()) throw DataError("checkpoint: kernel sample arrays disagree in length");
        return std::make_shared<Hyp2SEKernel>(hp[0], hp[1], j.at("seed").get<std::uint64_t>(), std::move(s));
      }
      case KernelKind::Hyp3SE: {
        const auto thr = base64_decode(j.at("limit_threshold").get<std::string>());
        if (thr.size() != 1) throw DataError("checkpoint: malformed limit threshold");
        return std::make_shared<Hyp3SEKernel>(hp[0], hp[1], thr[0]);
      }
      case KernelKind::EuclSE: return std::make_shared<EuclSEKernel>(hp[0], hp[1], j.at("dim").get<int>());
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("checkpoint: malformed kernel entry: ") + e.what());
  }
  throw DataError("checkpoint: unknown kernel");
}

Json checkpoint_to_json(const LatentModel& model, const Json& priors, const Json& trace_summary, const Json& config) {
  return {{"schema", "hypepull.checkpoint"},
          {"schema_version", kCheckpointSchema},
          {"version", config.value("version", std::string())},
          {"manifold", to_string(model.manifold())},
          {"latent_dim", model.latent_dim()},
          {"kernel", kernel_to_json(model.kernel())},
          {"noise_var", model.noise_var()},
          {"likelihood", base64_encode({model.noise_var(), model.jitter()})},
          {"latents", encode_matrix(model.latents())},
          {"observations_centered", encode_matrix(model.observations())},
          {"offset", base64_encode(std::vector<double>(model.offset().data(),
                                                       model.offset().data() + model.offset().size()))},
          {"priors", priors},
          {"trace_summary", trace_summary},
          {"config", config}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  if (!j.is_object() || j.value("schema", std::string()) != "hypepull.checkpoint")
    throw DataError("not a hypepull checkpoint");
  if (j.value("schema_version", -1) != kCheckpointSchema)
    throw DataError("unsupported checkpoint schema version " + j.value("schema_version", Json(-1)).dump());
  Checkpoint c;
  try {
    auto kernel = kernel_from_json(j.at("kernel"));
    const auto lik = base64_decode(j.at("likelihood").get<std::string>());
    if (lik.size() != 2) throw DataError("checkpoint: malformed likelihood entry");
    Matrix X = decode_matrix(j.at("latents"));
    Matrix Y = decode_matrix(j.at("observations_centered"));
    const auto off = base64_decode(j.at("offset").get<std::string>());
    Vector offset = Eigen::Map<const Vector>(off.data(), static_cast<Eigen::Index>(off.size()));
    c.model.emplace(std::move(kernel), std::move(X), std::move(Y), std::move(offset), lik[0], lik[1]);
    c.priors = j.value("priors", Json::object());
    c.trace_summary = j.value("trace_summary", Json::object());
    c.config = j.value("config", Json::object());
  } catch (const Json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const LatentModel& model, const Json& priors, const Json& trace_summary,
                     const Json& config) {
  write_json(path, checkpoint_to_json(model, priors, trace_summary, config));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json(path)); }

}  // namespace hypepull
