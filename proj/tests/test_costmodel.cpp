#include <sstream>

#include "doctest.h"
#include "cubefocus/costmodel.hpp"
#include "cubefocus/model.hpp"

using namespace cubefocus;

TEST_CASE("layer counts") {
  LayerDesc lin;
  lin.kind = LayerKind::linear;
  lin.in_features = 3;
  lin.out_features = 4;
  CHECK(count_layer(lin) == 12);

  LayerDesc conv;
  conv.kind = LayerKind::conv3d;
  conv.input = {8, 8, 1, 1};
  conv.kernels = {3, 3, 1, 1, 1};
  CHECK(count_layer(conv) == 324);

  LayerDesc relu;
  relu.kind = layer_kind_from_string("relu");
  CHECK(count_layer(relu) == 0);
  CHECK(layer_kind_from_string("pool") == LayerKind::pool);
  CHECK_THROWS(layer_kind_from_string("attention"));
}

TEST_CASE("ledger totals are sums of entries and dump as CSV") {
  CostLedger ledger;
  LayerDesc a;
  a.name = "fc";
  a.in_features = 3;
  a.out_features = 4;
  LayerDesc b = a;
  b.name = "fc2";
  b.in_features = 5;
  ledger.add("policy", a);
  ledger.add("policy", b);
  ledger.add("classifier", a);
  CHECK(ledger.total("policy") == 32);
  CHECK(ledger.total() == 44);
  std::ostringstream os;
  ledger.write_csv(os);
  CHECK(os.str() == "component,layer,madds\npolicy,fc,12\npolicy,fc2,20\nclassifier,fc,12\n");
}

TEST_CASE("frame dedup discount") {
  const Shape video{16, 16, 8, 1};
  const Madds full = 1000;
  std::set<std::size_t> seen;
  const CubeSpec first{{8, 8, 3.5}, {8, 8, 1}};
  CHECK(cube_cost(first, video, seen, full) == full);
  for (auto f : cube_frames(first, video)) seen.insert(f);
  CHECK(cube_frames(first, video) == std::vector<std::size_t>{3});
  CHECK(cube_cost({{4, 4, 3.5}, {8, 8, 1}}, video, seen, full) == 0);

  const CubeSpec pair{{8, 8, 4}, {8, 8, 2}};  // frames 3 and 4
  CHECK(cube_frames(pair, video) == std::vector<std::size_t>{3, 4});
  CHECK(cube_cost(pair, video, seen, full) == full / 2);
}

TEST_CASE("per-cube local cost tracks the cube's share of the video") {
  const Architecture arch;
  const double cube = static_cast<double>(arch.local_cube_cost());
  const double whole = static_cast<double>(arch.local_cost_on(arch.video));
  const double volume_ratio =
      static_cast<double>(arch.cube.volume()) / static_cast<double>(arch.video[0] * arch.video[1] * arch.video[2]);
  CHECK(std::abs(cube / whole / volume_ratio - 1.0) <= 0.10);
}
