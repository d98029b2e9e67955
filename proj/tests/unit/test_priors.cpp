#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pddn/priors.hpp"
#include "test_support.hpp"

namespace pddn {
namespace {

TEST(RelevanceWeight, ClassMapping) {
  EXPECT_EQ(relevance_weight(Relevance::Strong), 1.0);
  EXPECT_EQ(relevance_weight(Relevance::Potential), 1e-2);
  EXPECT_EQ(relevance_weight(Relevance::None), 1e-3);
}

TEST(DefaultTable, StrongAndPotentialSets) {
  const auto t = default_relevance_table();
  ASSERT_EQ(t.regions(), 48);
  const std::set<int> strong{3, 4, 7, 26};
  const std::set<int> potential{2, 5, 6, 17, 18, 21, 25, 30, 31};
  for (int r = 1; r <= 48; ++r) {
    const Relevance expected = strong.count(r) ? Relevance::Strong
                               : potential.count(r) ? Relevance::Potential
                                                    : Relevance::None;
    EXPECT_EQ(t.entry(r).relevance, expected) << "region " << r;
    EXPECT_EQ(t.weight(r), relevance_weight(expected));
    EXPECT_EQ(t.entry(r).id, r);
  }
}

TEST(DefaultTable, NamedRows) {
  const auto t = default_relevance_table();
  EXPECT_EQ(t.entry(1).name, "Frontal Pole");
  EXPECT_EQ(t.entry(1).relevance, Relevance::None);
  EXPECT_EQ(t.entry(2).name, "Insular Cortex");
  EXPECT_EQ(t.weight(2), 1e-2);
  EXPECT_EQ(t.entry(3).name, "Superior Frontal Gyrus");
  EXPECT_EQ(t.entry(3).relevance, Relevance::Strong);
  EXPECT_EQ(t.entry(26).name, "Juxtapositional Lobule Cortex (SMA)");
  EXPECT_EQ(t.weight(26), 1.0);
  EXPECT_EQ(t.entry(48).name, "Occipital Pole");
  EXPECT_EQ(t.weight(48), 1e-3);
}

TEST(DefaultTable, Deterministic) { EXPECT_EQ(default_relevance_table(), default_relevance_table()); }

TEST(RelevanceTable, ChangingOneClassChangesOneWeight) {
  const auto t = default_relevance_table();
  const auto u = t.with_relevance(10, Relevance::Strong);
  int changed = 0;
  for (int r = 1; r <= 48; ++r) changed += t.weight(r) != u.weight(r) ? 1 : 0;
  EXPECT_EQ(changed, 1);
  EXPECT_EQ(u.weight(10), 1.0);
}

TEST(LoadRelevance, MinimalTable) {
  const auto t = parse_relevance_csv("region_id,region_name,relevance\n1,A,strong\n2,B,none\n");
  EXPECT_EQ(t.regions(), 2);
  EXPECT_EQ(t.weight(1), 1.0);
  EXPECT_EQ(t.weight(2), 1e-3);
}

TEST(LoadRelevance, Errors) {
  EXPECT_PDDN_ERROR(parse_relevance_csv("region_id,region_name,relevance\n1,A,strong\n1,B,none\n"),
                    Errc::DuplicateId);
  EXPECT_PDDN_ERROR(parse_relevance_csv("region_id,region_name,relevance\n1,A,strong\n3,B,none\n"),
                    Errc::MissingId);
  EXPECT_PDDN_ERROR(parse_relevance_csv("region_id,region_name,relevance\n1,A,maybe\n"), Errc::UnknownRelevance);
  EXPECT_PDDN_ERROR(parse_relevance_csv(""), Errc::EmptyFile);
  EXPECT_PDDN_ERROR(parse_relevance_csv("region_id,region_name,relevance\n"), Errc::EmptyFile);
}

TEST(LoadRelevance, QuotedNames) {
  const auto t = parse_relevance_csv("region_id,region_name,relevance\n1,\"Gyrus, Anterior\",potential\n");
  EXPECT_EQ(t.entry(1).name, "Gyrus, Anterior");
}

TEST(LoadRelevance, DefaultTableRoundTrip) {
  test::TempDir dir;
  save_relevance_table(default_relevance_table(), dir / "rel.csv");
  EXPECT_EQ(load_relevance_table(dir / "rel.csv"), default_relevance_table());
}

TEST(AgingPrior, Defaults) {
  const AgingPriorParams p;
  EXPECT_EQ(p.zeta(), 9.5);
  EXPECT_EQ(p.tau(), 4.5);
  EXPECT_EQ(p.alpha(), 1.0);
}

TEST(AgingPrior, RejectsOverlappingZones) {
  EXPECT_PDDN_ERROR(AgingPriorParams(4.0, 4.5, 1.0), Errc::InvalidArgument);
  EXPECT_PDDN_ERROR(AgingPriorParams(4.5, 4.5, 1.0), Errc::InvalidArgument);
  EXPECT_PDDN_ERROR(AgingPriorParams(9.5, -1.0, 1.0), Errc::InvalidArgument);
  EXPECT_PDDN_ERROR(AgingPriorParams(9.5, 4.5, -0.1), Errc::InvalidArgument);
  EXPECT_NO_THROW(AgingPriorParams(9.5, 0.0, 0.0));
}

TEST(AgeGap, Examples) {
  EXPECT_EQ(age_gap(70.0, 65.0), 5.0);
  EXPECT_EQ(age_gap(65.0, 65.0), 0.0);
  EXPECT_NEAR(age_gap(60.2, 70.0), -9.8, 1e-12);
}

TEST(AgeGap, Antisymmetric) {
  for (double a : {51.0, 63.7, 80.2}) {
    for (double b : {50.5, 66.1, 79.0}) EXPECT_EQ(age_gap(a, b), -age_gap(b, a));
  }
}

TEST(AgeGap, RejectsNonFinite) {
  EXPECT_PDDN_ERROR(age_gap(NAN, 60.0), Errc::NonFinite);
  EXPECT_PDDN_ERROR(age_gap(60.0, INFINITY), Errc::NonFinite);
}

}  // namespace
}  // namespace pddn
