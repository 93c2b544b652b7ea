#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "setagg/generator.hpp"
#include "setagg/metrics.hpp"
#include "support/witness.hpp"

using namespace setagg;
using Catch::Matchers::WithinAbs;

namespace {

// d=1 identity scorer: an item's score is its sole feature value
ChoiceModel value_model() {
  Rng rng(1);
  ChoiceModel m(preset("mnl"), 1, rng);
  m.params().value("Theta") = Tensor::matrix(1, 1, {1});
  return m;
}

ChoiceExample example(std::vector<double> values, int chosen) {
  ChoiceExample ex;
  int n = static_cast<int>(values.size());
  ex.items = Tensor::matrix(n, 1, std::move(values));
  ex.chosen = chosen;
  return ex;
}

}  // namespace

TEST_CASE("rank metrics on the (1,2,4) fixture") {
  ChoiceModel m = value_model();
  Dataset ds;
  ds.d = 1;
  ds.examples.push_back(example({9, 1, 0}, 0));        // rank 1
  ds.examples.push_back(example({3, 9}, 0));           // rank 2
  ds.examples.push_back(example({5, 6, 7, 1}, 3));     // rank 4

  EvalReport rep = evaluate(m, ds);
  CHECK(rep.m == 3);
  CHECK_THAT(rep.top1, WithinAbs(1.0 / 3.0, 1e-12));
  CHECK(rep.top5 == 1.0);
  CHECK_THAT(rep.mrr_reciprocal, WithinAbs((1.0 + 0.5 + 0.25) / 3.0, 1e-12));
  CHECK_THAT(rep.mrr_reciprocal, WithinAbs(0.583333, 1e-6));
  CHECK_THAT(rep.mean_rank, WithinAbs(7.0 / 3.0, 1e-12));
  CHECK_THAT(rep.mean_rank, WithinAbs(2.333333, 1e-6));
}

TEST_CASE("ties rank the chosen item pessimistically") {
  ChoiceModel m = value_model();
  Dataset ds;
  ds.d = 1;
  ds.examples.push_back(example({2, 2, 2}, 1));  // three-way tie: rank 3
  EvalReport rep = evaluate(m, ds);
  CHECK(rep.top1 == 0.0);
  CHECK(rep.mean_rank == 3.0);
  CHECK_THAT(rep.mrr_reciprocal, WithinAbs(1.0 / 3.0, 1e-12));

  // a constant-score model earns no top-1 credit on multi-item sets
  CHECK(chosen_rank({7, 7}, 0) == 2);
  CHECK(chosen_rank({7, 7}, 1) == 2);
  CHECK(chosen_rank({1, 2, 2}, 1) == 2);  // demoted below its equal, not below item 0
  CHECK(chosen_rank({3, 2, 2}, 1) == 3);
  CHECK(chosen_rank({5}, 0) == 1);
}

TEST_CASE("perfect predictions saturate every metric") {
  ChoiceModel m = value_model();
  Dataset ds;
  ds.d = 1;
  ds.examples.push_back(example({9, 1}, 0));
  ds.examples.push_back(example({0, 8, 3}, 1));
  EvalReport rep = evaluate(m, ds);
  CHECK(rep.top1 == 1.0);
  CHECK(rep.top5 == 1.0);
  CHECK(rep.mrr_reciprocal == 1.0);
  CHECK(rep.mean_rank == 1.0);
}

TEST_CASE("evaluation is invariant to item order") {
  Rng rng(3);
  ChoiceModel m(preset("sda_default"), 3, rng);

  GeneratorSpec spec;
  spec.kind = GeneratorKind::Mnl;
  spec.d = 3;
  spec.m = 30;
  spec.set_size_min = 3;
  spec.set_size_max = 6;
  spec.components = {{1.0, {0.8, -0.5, 0.3}}};
  spec.seed = 5;
  Dataset ds = generate(spec);

  Dataset shuffled;
  shuffled.d = 3;
  Rng perm_rng(6);
  for (const auto& ex : ds.examples) {
    std::vector<int> perm(static_cast<std::size_t>(ex.n()));
    for (int i = 0; i < ex.n(); ++i) perm[static_cast<std::size_t>(i)] = i;
    perm_rng.shuffle(perm);
    ChoiceExample out;
    out.items = Tensor::zeros({ex.n(), 3});
    for (int r = 0; r < ex.n(); ++r) {
      for (int j = 0; j < 3; ++j) out.items.at(r, j) = ex.items.at(perm[static_cast<std::size_t>(r)], j);
      if (perm[static_cast<std::size_t>(r)] == ex.chosen) out.chosen = r;
    }
    shuffled.examples.push_back(std::move(out));
  }

  EvalReport a = evaluate(m, ds);
  EvalReport b = evaluate(m, shuffled);
  CHECK_THAT(a.top1, WithinAbs(b.top1, 1e-12));
  CHECK_THAT(a.mrr_reciprocal, WithinAbs(b.mrr_reciprocal, 1e-12));
  CHECK_THAT(a.mean_rank, WithinAbs(b.mean_rank, 1e-12));

  // ordering invariants: top1 <= top5 and Jensen for the rank family
  CHECK(a.top1 <= a.top5);
  CHECK(1.0 / a.mean_rank <= a.mrr_reciprocal + 1e-15);
}

TEST_CASE("deletion sensitivity on the fixed-score fixture") {
  ChoiceModel m = value_model();

  SECTION("chosen item is the strongest: no deletion changes the outcome") {
    Dataset ds;
    ds.d = 1;
    ds.examples.push_back(example({3, 2, 1}, 0));
    CapacityReport rep = violation_capacity(m, ds);
    CHECK(rep.kappa == 0.0);
    CHECK(rep.included == 1);
  }

  SECTION("chosen item is second: removing the leader matters either way") {
    Dataset ds;
    ds.d = 1;
    ds.examples.push_back(example({3, 2, 1}, 1));
    CapacityReport rep = violation_capacity(m, ds);
    // delete leader -> {2,1}: predict the label (no change); delete weakest ->
    // {3,2}: predict the leader, not the label
    CHECK_THAT(rep.kappa, WithinAbs(0.5, 1e-15));
  }

  SECTION("label vs full-set target differ when the label ranks last") {
    Dataset ds;
    ds.d = 1;
    ds.examples.push_back(example({3, 2, 1}, 2));
    CHECK_THAT(violation_capacity(m, ds, CompareTo::Label).kappa, WithinAbs(1.0, 1e-15));
    CHECK_THAT(violation_capacity(m, ds, CompareTo::FullSetPrediction).kappa,
               WithinAbs(0.5, 1e-15));
  }

  SECTION("correct two-item choice cannot move") {
    Dataset ds;
    ds.d = 1;
    ds.examples.push_back(example({5, 1}, 0));
    CHECK(violation_capacity(m, ds).kappa == 0.0);
  }
}

TEST_CASE("singleton sets are skipped and counted") {
  ChoiceModel m = value_model();
  Dataset ds;
  ds.d = 1;
  ds.examples.push_back(example({4}, 0));
  ds.examples.push_back(example({3, 2, 1}, 1));
  CapacityReport rep = violation_capacity(m, ds);
  CHECK(rep.skipped == 1);
  CHECK(rep.included == 1);
  CHECK(std::isnan(rep.per_example[0]));
  CHECK_THAT(rep.kappa, WithinAbs(0.5, 1e-15));
}

TEST_CASE("set-independent scorers have zero sensitivity on correct examples") {
  Rng rng(8);
  ChoiceModel m(preset("mnl"), 4, rng);

  GeneratorSpec spec;
  spec.kind = GeneratorKind::Mnl;
  spec.d = 4;
  spec.m = 60;
  spec.set_size_min = 2;
  spec.set_size_max = 7;
  spec.components = {{1.0, {1.0, -0.3, 0.6, 0.2}}};
  spec.seed = 9;
  Dataset ds = generate(spec);

  Dataset correct;
  correct.d = 4;
  for (const auto& ex : ds.examples)
    if (m.predict(ex.items) == ex.chosen) correct.examples.push_back(ex);
  REQUIRE(correct.size() > 5);

  CHECK(violation_capacity(m, correct, CompareTo::Label).kappa == 0.0);
  CHECK(violation_capacity(m, correct, CompareTo::FullSetPrediction).kappa == 0.0);
}

TEST_CASE("the deletion-flip witness has strictly positive sensitivity") {
  testsupport::WitnessCase wc = testsupport::build_sdw_witness();

  Dataset ds;
  ds.d = 2;
  ChoiceExample ex;
  ex.items = wc.full_set;
  ex.chosen = wc.full_pred;  // the model is correct on the full set
  ds.examples.push_back(ex);

  REQUIRE(wc.model.predict(wc.full_set) == wc.full_pred);

  // deleting the witness item flips the choice; compute the other deletion
  Tensor without_b = Tensor::matrix(2, 2, {1, 0, -0.5, -1});  // rows a, x
  int pred_without_b = wc.model.predict(without_b);
  double expected = ((pred_without_b != 0 ? 1.0 : 0.0) + 1.0) / 2.0;

  CapacityReport rep = violation_capacity(wc.model, ds);
  CHECK(rep.kappa > 0.0);
  CHECK_THAT(rep.kappa, WithinAbs(expected, 1e-15));
}

TEST_CASE("region partition splits examples by correctness pattern") {
  ChoiceModel good = value_model();
  Rng rng(2);
  ChoiceModel blind(preset("mnl"), 1, rng);
  blind.params().value("Theta") = Tensor::matrix(1, 1, {0});  // constant scores

  Dataset ds;
  ds.d = 1;
  ds.examples.push_back(example({3, 1}, 0));     // good: correct; blind: tie -> index 0 correct
  ds.examples.push_back(example({3, 1}, 1));     // both wrong
  ds.examples.push_back(example({1, 3, 2}, 1));  // good correct, blind wrong
  ds.examples.push_back(example({2, 5}, 1));     // good correct, blind wrong

  RegionTable table = region_partition({&good, &blind}, {"sharp", "blind"}, ds);
  CHECK(table.m == 4);
  std::size_t total = 0;
  double found_10 = -1.0;
  for (const auto& cell : table.cells) {
    total += cell.count;
    if (cell.pattern == "10") found_10 = static_cast<double>(cell.count);
    if (cell.pattern[0] == '1') {
      // the set-independent scorer cannot flip on examples it already gets right
      CHECK(cell.mean_kappa[0] == 0.0);
    }
  }
  CHECK(total == 4);
  CHECK(found_10 == 2.0);

  std::string csv = table.to_csv();
  CHECK(csv.find("pattern,count,included,kappa_sharp,kappa_blind") == 0);
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == static_cast<int>(table.cells.size()) + 1);

  // identical models only produce all-or-nothing patterns
  RegionTable same = region_partition({&good, &good}, {"a", "b"}, ds);
  for (const auto& cell : same.cells)
    CHECK((cell.pattern == "00" || cell.pattern == "11"));
  CHECK_THROWS_AS(region_partition({&good}, {"solo"}, ds), ContractError);
}

TEST_CASE("region partition surfaces nonzero sensitivity for the witness") {
  testsupport::WitnessCase wc = testsupport::build_sdw_witness();
  Rng rng(4);
  ChoiceModel mnl(preset("mnl"), 2, rng);
  mnl.params().value("Theta") = Tensor::matrix(2, 1, {1, 1});

  Dataset ds;
  ds.d = 2;
  ChoiceExample ex;
  ex.items = wc.full_set;
  ex.chosen = wc.full_pred;
  ds.examples.push_back(ex);

  RegionTable table = region_partition({&wc.model, &mnl}, {"witness", "mnl"}, ds);
  bool witness_cell_seen = false;
  for (const auto& cell : table.cells)
    if (cell.pattern[0] == '1') {
      witness_cell_seen = true;
      CHECK(cell.mean_kappa[0] > 0.0);  // correct prediction yet deletion-sensitive
    }
  CHECK(witness_cell_seen);
}
