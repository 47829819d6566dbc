#include <sstream>

#include "deeptfp/checkpoint.hpp"
#include "deeptfp/lstm.hpp"
#include "doctest.h"
#include "model_helpers.hpp"

using namespace deeptfp::checkpoint;

TEST_SUITE("checkpoint") {

TEST_CASE("save and load are bit-exact for both model kinds") {
  deeptfp::model::DeepTfpModel deep(testing_helpers::small_config());
  deep.initialize(3);
  testing_helpers::perturb_all(deep, 4, 1e-3);
  deeptfp::lstm::LstmModel lstm({4, 4, 3, 5});
  lstm.initialize(5);
  const deeptfp::series::Normalizer norm(1.0 / 3.0, 1e5 / 7.0);
  for (const deeptfp::model::Forecaster* m : {static_cast<const deeptfp::model::Forecaster*>(&deep),
                                               static_cast<const deeptfp::model::Forecaster*>(&lstm)}) {
    const auto ckpt = Checkpoint::capture(*m, norm, testing_helpers::small_windows());
    std::stringstream io;
    write(io, ckpt);
    const auto back = read(io);
    CHECK(back == ckpt);
    CHECK(back.kind == m->kind());
    std::stringstream again;
    write(again, back);
    std::stringstream first;
    write(first, ckpt);
    CHECK(again.str() == first.str());
    const auto restored = restore(back);
    CHECK(restored->kind() == m->kind());
    const auto a = m->named_parameters();
    const auto b = restored->named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(testing_helpers::values(a[i].second) == testing_helpers::values(b[i].second));
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  std::istringstream wrong("not a checkpoint\n");
  CHECK_THROWS_AS(read(wrong), deeptfp::DataError);
  std::istringstream truncated("deeptfp-checkpoint 1\nkind lstm\n");
  CHECK_THROWS_AS(read(truncated), deeptfp::DataError);
  Checkpoint c;
  c.kind = "mystery";
  CHECK_THROWS_AS(restore(c), deeptfp::DataError);
}

}  // TEST_SUITE
