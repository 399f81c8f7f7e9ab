#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "hypepull/errors.hpp"
#include "hypepull/io.hpp"
#include "../support/models.hpp"

using namespace hypepull;
using namespace hypepull::testing;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("CSV parsing") {
  const Matrix M = parse_csv("# comment\na,b,c\n1,2,3\n\n4.5, -6e-3 ,7\n");
  REQUIRE(M.rows() == 2);
  REQUIRE(M.cols() == 3);
  CHECK(M(1, 0) == 4.5);
  CHECK(M(1, 1) == -6e-3);

  CHECK(parse_csv("1,2\n3,4").rows() == 2);  // no trailing newline, no header

  const std::string bad = error_of([] { parse_csv("1,2\n3,x\n", "obs.csv"); });
  CHECK(bad.find("obs.csv") != std::string::npos);
  CHECK(bad.find("line 2") != std::string::npos);
  CHECK(bad.find("column 2") != std::string::npos);
  CHECK_THROWS_AS(parse_csv("1,2\n3,x\n"), DataError);

  const std::string ragged = error_of([] { parse_csv("1,2\n3,4,5\n"); });
  CHECK(ragged.find("line 2") != std::string::npos);
  CHECK(ragged.find("3 columns") != std::string::npos);

  CHECK_THROWS_AS(parse_csv("1,2\na,b\n"), DataError);  // header after data
  CHECK_THROWS_AS(parse_csv("1,nan\n"), DataError);
  CHECK_THROWS_AS(parse_csv("# only\n\n"), DataError);
  CHECK_THROWS_AS(read_csv("/nonexistent/obs.csv"), DataError);
}

TEST_CASE("CSV round trip is exact") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1e3);
  Matrix M(7, 4);
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) M(i, j) = nd(rng) * std::pow(10.0, i - 3);
  M(0, 0) = std::numeric_limits<double>::denorm_min();
  M(0, 1) = -0.0;
  const std::string path = scratch_dir("io_csv") + "/m.csv";
  write_csv(path, M, {"a", "b", "c", "d"});
  const Matrix R = read_csv(path);
  REQUIRE(R.rows() == M.rows());
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) CHECK(std::bit_cast<std::uint64_t>(R(i, j)) == std::bit_cast<std::uint64_t>(M(i, j)));
}

TEST_CASE("graph parsing") {
  Json g = {{"nodes", {"a", "b", "c"}},
            {"dist", {{0, 1, 2}, {1, 0, 1}, {2, 1, 0}}},
            {"assignment", {0, 1, 2, 2}}};
  const GraphData gd = parse_graph(g, 4);
  CHECK(gd.dist(0, 2) == 2.0);
  CHECK(gd.assignment[3] == 2);

  Json asym = g;
  asym["dist"][0][2] = 3;
  const std::string msg = error_of([&] { parse_graph(asym, 4); });
  CHECK(msg.find("symmetric") != std::string::npos);
  CHECK_THROWS_AS(parse_graph(asym, 4), DataError);

  Json diag = g;
  diag["dist"][1][1] = 0.5;
  CHECK_THROWS_AS(parse_graph(diag, 4), DataError);

  Json neg = g;
  neg["dist"][0][1] = -1;
  neg["dist"][1][0] = -1;
  CHECK_THROWS_AS(parse_graph(neg, 4), DataError);

  CHECK_THROWS_AS(parse_graph(g, 5), DataError);  // assignment length
  Json range = g;
  range["assignment"][0] = 3;
  CHECK_THROWS_AS(parse_graph(range, 4), DataError);

  // Edge lists become BFS edge-count distances.
  Json e = {{"nodes", {"r", "x", "y", "z"}}, {"edges", {{0, 1}, {1, 2}, {0, 3}}}, {"assignment", {0, 1, 2, 3}}};
  const GraphData ge = parse_graph(e, 4);
  Matrix ref(4, 4);
  ref << 0, 1, 2, 1, 1, 0, 1, 2, 2, 1, 0, 3, 1, 2, 3, 0;
  CHECK(ge.dist == ref);

  Json disc = e;
  disc["edges"] = {{0, 1}, {2, 3}};
  CHECK_THROWS_AS(parse_graph(disc, 4), DataError);
}

TEST_CASE("trajectory parsing") {
  const TrajectoryPrior t = parse_trajectory(Json{{"starts", {0, 3}}}, 6);
  CHECK(t.starts == std::vector<int>{0, 3});
  const std::string msg = error_of([] { parse_trajectory(Json{{"starts", {0, 7}}}, 6); });
  CHECK(msg.find("entry 1") != std::string::npos);
}

TEST_CASE("base64 round trip preserves bits") {
  std::vector<double> v{0.0, -0.0, 1.0, -2.5, std::numeric_limits<double>::denorm_min(),
                        std::numeric_limits<double>::max(), std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::quiet_NaN(), std::bit_cast<double>(0x7ff4000000000001ull)};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) v.push_back(std::bit_cast<double>(rng()));
  for (std::size_t n = 0; n <= v.size(); n += 3) {
    const std::vector<double> part(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK(same_bits(base64_decode(base64_encode(part)), part));
  }
  // Little-endian byte layout: 1.0 is 00 00 00 00 00 00 f0 3f.
  CHECK(base64_encode({1.0}) == "AAAAAAAA8D8=");

  CHECK_THROWS_AS(base64_decode("AAAA"), DataError);          // 3 bytes
  CHECK_THROWS_AS(base64_decode("AAAAAAAA8D8"), DataError);   // missing padding
  CHECK_THROWS_AS(base64_decode("AAAAAAA*8D8="), DataError);  // alphabet

  Matrix M(2, 3);
  M << 1, 2, 3, 4, 5, 6;
  const Json j = encode_matrix(M);
  CHECK(j["rows"] == 2);
  CHECK(j["cols"] == 3);
  CHECK(base64_decode(j["data"].get<std::string>())[1] == 2.0);  // row-major
  CHECK(decode_matrix(j) == M);
  Json bad = j;
  bad["rows"] = 3;
  CHECK_THROWS_AS(decode_matrix(bad), DataError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  std::mt19937_64 rng(11);
  const std::string dir = scratch_dir("io_checkpoint");
  for (auto kind : {KernelKind::Hyp2SE, KernelKind::Hyp3SE, KernelKind::EuclSE}) {
    INFO(to_string(kind));
    LatentModel m = toy_model(kind, 9, 3, 12);
    m.set_hyperparameters(0.83, 0.61, 0.037);
    const std::string path = dir + "/" + to_string(kind) + ".json";
    save_checkpoint(path, m, Json{{"stress", 1.0}}, Json{{"best", -3.0}}, Json{{"seed", 4}});
    const Checkpoint c = load_checkpoint(path);
    REQUIRE(c.model.has_value());
    const LatentModel& r = *c.model;
    CHECK(r.kernel().kind() == kind);
    CHECK(r.latents() == m.latents());
    CHECK(r.observations() == m.observations());
    CHECK(r.offset() == m.offset());
    CHECK(r.noise_var() == m.noise_var());
    CHECK(r.kernel().tau() == m.kernel().tau());
    CHECK(r.kernel().kappa() == m.kernel().kappa());
    CHECK(c.priors["stress"] == 1.0);
    CHECK(c.trace_summary["best"] == -3.0);
    CHECK(c.config["seed"] == 4);
    CHECK(r.log_marginal_likelihood() == m.log_marginal_likelihood());
    for (int i = 0; i < 5; ++i) {
      const Vector p = toy_query(rng, m.manifold(), m.latent_dim(), 1.5);
      const auto a = m.predict(p), b = r.predict(p);
      CHECK(a.mean == b.mean);
      CHECK(a.var == b.var);
      CHECK(m.jacobian_posterior(p).cov == r.jacobian_posterior(p).cov);
    }
  }
  Json wrong = read_json(dir + "/euclse.json");
  wrong["schema"] = "something.else";
  CHECK_THROWS_AS(checkpoint_from_json(wrong), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir + "/missing.json"), DataError);
}

TEST_CASE("C-shape generator") {
  const Matrix P = gen_cshape(1000);
  REQUIRE(P.rows() == 1000);
  for (int i = 0; i < P.rows(); ++i) {
    CHECK(P.row(i).norm() == doctest::Approx(0.7).epsilon(1e-12));
    // The opening faces +x: no point lies in the wedge |angle| < 45 degrees.
    CHECK(std::atan2(std::abs(P(i, 1)), P(i, 0)) >= std::numbers::pi / 4 - 1e-12);
    CHECK(lorentz::on_manifold(lorentz::poincare_to_lorentz(P.row(i).transpose()), 1e-12));
  }
  CHECK(std::abs(std::atan2(P(0, 1), P(0, 0)) - std::numbers::pi / 4) < 1e-12);
  const Matrix N = gen_cshape(500, 0.3, 9);
  CHECK(N.rowwise().norm().maxCoeff() <= 0.98 + 1e-12);
  CHECK(gen_cshape(500, 0.3, 9) == N);
  CHECK_THROWS_AS(gen_cshape(0), ConfigError);
}

TEST_CASE("tree generator") {
  const TreeDataset t = gen_tree(3, 2, 5, 1, 2);
  REQUIRE(t.graph.nodes.size() == 15);
  CHECK(t.Y.rows() == 30);
  CHECK(t.graph.assignment.size() == 30);
  CHECK(t.graph.assignment[5] == 2);
  for (int v = 0; v < 15; ++v) {
    CHECK(t.graph.dist(0, v) == t.depth[v]);
    if (v > 0) CHECK(t.graph.dist(v, t.parent[v]) == 1.0);
  }
  CHECK(t.graph.dist(7, 14) == 6.0);  // leaves in different root subtrees
  CHECK(t.graph.dist(7, 8) == 2.0);   // siblings
  CHECK(parse_graph(graph_to_json(t.graph), 30).dist == t.graph.dist);

  // Feature distance grows with tree distance: sibling leaves sit closer than
  // leaves across the root, in the median over seeds.
  std::vector<double> ratio;
  for (std::uint64_t s = 1; s <= 21; ++s) {
    const TreeDataset ts = gen_tree(3, 2, 5, s, 1);
    const double sib = (ts.Y.row(7) - ts.Y.row(8)).norm();
    const double far = (ts.Y.row(7) - ts.Y.row(14)).norm();
    ratio.push_back(sib / far);
  }
  std::nth_element(ratio.begin(), ratio.begin() + 10, ratio.end());
  CHECK(ratio[10] < 1.0);
  CHECK(gen_tree(3, 2, 5, 4, 2).Y == gen_tree(3, 2, 5, 4, 2).Y);
  CHECK_THROWS_AS(gen_tree(0, 2, 5, 1), ConfigError);
}

TEST_CASE("dataset loading centres observations") {
  const std::string dir = scratch_dir("io_dataset");
  Matrix Y(4, 2);
  Y << 1, 10, 2, 20, 3, 30, 6, 40;
  write_csv(dir + "/y.csv", Y);
  write_json(dir + "/g.json", Json{{"nodes", {"a", "b"}}, {"edges", {{0, 1}}}, {"assignment", {0, 0, 1, 1}}});
  write_json(dir + "/t.json", Json{{"starts", {0, 2}}});
  const Dataset d = load_dataset(dir + "/y.csv", dir + "/g.json", dir + "/t.json");
  CHECK(d.offset[0] == 3.0);
  CHECK(d.offset[1] == 25.0);
  CHECK(d.Y.colwise().sum().norm() < 1e-12);
  REQUIRE(d.graph.has_value());
  CHECK(d.graph->dist(0, 1) == 1.0);
  REQUIRE(d.trajectory.has_value());
  CHECK(d.trajectory->starts.size() == 2);
  const Dataset bare = load_dataset(dir + "/y.csv");
  CHECK_FALSE(bare.graph.has_value());

  std::ofstream(dir + "/bad.json") << "{not json";
  CHECK_THROWS_AS(read_json(dir + "/bad.json"), DataError);
}
