#include <gtest/gtest.h>

#include "pddn/cohort.hpp"
#include "test_support.hpp"

namespace pddn {
namespace {

TEST(Labels, ParseAndFormat) {
  EXPECT_EQ(parse_label("PD"), Label::PD);
  EXPECT_EQ(parse_label("other"), Label::Other);
  EXPECT_EQ(parse_label(""), std::nullopt);
  EXPECT_PDDN_ERROR(parse_label("maybe"), Errc::InvalidArgument);
  EXPECT_EQ(label_token(Label::PD), "PD");
  EXPECT_EQ(label_token(Label::Other), "Other");
}

TEST(FormatDouble, RoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 65.0, 1e21}) EXPECT_EQ(parse_double(format_double(x)), x);
  EXPECT_EQ(format_double(65.0), "65");
  EXPECT_PDDN_ERROR(parse_double("abc"), Errc::InvalidArgument);
}

TEST(Manifest, RoundTripWithRelativePaths) {
  test::TempDir dir;
  std::filesystem::create_directories(dir / "vols");
  Cohort c;
  c.subjects.push_back({"a", dir / "vols" / "a.nii", 61.25, Label::PD, false, nullptr});
  c.subjects.push_back({"b", dir / "vols" / "b.nii", 70.0, Label::Other, true, nullptr});
  c.subjects.push_back({"c", dir / "vols" / "c.nii", 55.5, std::nullopt, false, nullptr});
  std::filesystem::create_directories(dir / "sub");
  write_cohort_manifest(c, dir / "sub" / "cohort.csv");
  const std::string text = test::slurp_text(dir / "sub" / "cohort.csv");
  EXPECT_NE(text.find("a,../vols/a.nii,61.25,PD,0"), std::string::npos) << text;
  const Cohort back = read_cohort_manifest(dir / "sub" / "cohort.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.subjects[i].id, c.subjects[i].id);
    EXPECT_EQ(std::filesystem::weakly_canonical(back.subjects[i].path), std::filesystem::weakly_canonical(c.subjects[i].path));
    EXPECT_EQ(back.subjects[i].age, c.subjects[i].age);
    EXPECT_EQ(back.subjects[i].label, c.subjects[i].label);
    EXPECT_EQ(back.subjects[i].is_healthy, c.subjects[i].is_healthy);
  }
  EXPECT_FALSE(back.fully_labeled());
  EXPECT_EQ(back.subset({2, 0}).subjects[0].id, "c");
}

TEST(Manifest, HealthyPdRejected) {
  test::TempDir dir;
  std::ofstream(dir / "m.csv") << "subject_id,path,age,label,is_healthy\nx,x.nii,60,PD,1\n";
  EXPECT_PDDN_ERROR(read_cohort_manifest(dir / "m.csv"), Errc::InvalidArgument);
}

TEST(Manifest, WrongHeaderRejected) {
  test::TempDir dir;
  std::ofstream(dir / "m.csv") << "id,path\n";
  EXPECT_PDDN_ERROR(read_cohort_manifest(dir / "m.csv"), Errc::InvalidArgument);
}

TEST(Predictions, CsvRoundTrip) {
  std::vector<PredictionRecord> r{{"s1", Label::PD, 0.8125, 11.5, 73.25, Label::PD},
                                  {"s2", std::nullopt, 1.0 / 3.0, -2.0, 60.1, Label::Other}};
  const std::string text = format_predictions_csv(r);
  EXPECT_EQ(text.substr(0, text.find('\n')), "subject_id,label,p_pd,delta,predicted_age,decision");
  EXPECT_EQ(parse_predictions_csv(text), r);
}

TEST(WriteFileAtomic, ReplacesContents) {
  test::TempDir dir;
  write_file_atomic(dir / "f.txt", "one");
  write_file_atomic(dir / "f.txt", "two");
  EXPECT_EQ(test::slurp_text(dir / "f.txt"), "two");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
  EXPECT_EQ(entries, 1u);
}

}  // namespace
}  // namespace pddn
