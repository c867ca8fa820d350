#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "calloc/dataset.hpp"
#include "calloc/synthetic.hpp"

using namespace cal;

namespace {

// Small hand-built dataset: 2 APs, 3 RPs on a line, one train row per RP.
FloorplanDataset tiny_dataset() {
  FloorplanDataset d;
  d.name = "tiny";
  d.ap_names = {"ap_a", "ap_b"};
  d.rps = {{0, 0.0f, 0.0f}, {3, 3.0f, 0.0f}, {7, 7.0f, 0.0f}};
  d.designated_device = "OP3";
  d.devices = {"OP3"};
  d.train = {
      {{-40.0f, -80.0f}, 0, "OP3"},
      {{-50.0f, -70.0f}, 3, "OP3"},
      {{-60.0f, -90.0f}, 7, "OP3"},
  };
  d.test = d.train;
  return d;
}

}  // namespace

TEST_CASE("normalize maps [-100,0] dBm onto [0,1]") {
  CHECK(normalize_dbm(-100.0f) == 0.0f);
  CHECK(normalize_dbm(0.0f) == 1.0f);
  CHECK(normalize_dbm(-50.0f) == doctest::Approx(0.5f));
  CHECK(normalize_dbm(-37.0f) == doctest::Approx(0.63f));

  CHECK(denormalize_dbm(0.0f) == -100.0f);
  CHECK(denormalize_dbm(1.0f) == 0.0f);
  CHECK(denormalize_dbm(0.25f) == doctest::Approx(-75.0f));

  for (float r : {-100.0f, -99.5f, -42.0f, -0.25f, 0.0f})
    CHECK(denormalize_dbm(normalize_dbm(r)) == doctest::Approx(r).epsilon(1e-5));

  CHECK_THROWS_AS(normalize_dbm(-100.01f), std::invalid_argument);
  CHECK_THROWS_AS(normalize_dbm(0.01f), std::invalid_argument);

  Fingerprint fp;
  fp.rss = {-100.0f, -25.0f, 0.0f};
  auto v = normalize(fp);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 0.0f);
  CHECK(v[1] == doctest::Approx(0.75f));
  CHECK(v[2] == 1.0f);
}

TEST_CASE("device profile: identity leaves rss untouched but renames device") {
  Fingerprint fp;
  fp.rss = {-55.5f, -100.0f, -12.25f};
  fp.rp_id = 4;
  fp.device = "survey";
  DeviceProfile identity{"OP3", 1.0f, 0.0f, 0.0f};
  REQUIRE(identity.is_identity());

  Fingerprint out = apply_device_profile(fp, identity, 99);
  CHECK(out.rss == fp.rss);
  CHECK(out.rp_id == 4);
  CHECK(out.device == "OP3");
}

TEST_CASE("device profile: noiseless transform is -100 + gain*(rss+100) + offset") {
  DeviceProfile p{"X", 1.1f, -3.0f, 0.0f};
  Fingerprint fp;
  fp.rss = {-60.0f, -20.0f};
  Fingerprint out = apply_device_profile(fp, p, 1);
  // -100 + 1.1*40 - 3 = -59; -100 + 1.1*80 - 3 = -15.
  CHECK(out.rss[0] == doctest::Approx(-59.0f));
  CHECK(out.rss[1] == doctest::Approx(-15.0f));
}

TEST_CASE("device profile: -100 sentinel survives any transform") {
  DeviceProfile p{"X", 1.1f, 5.0f, 1.5f};
  Fingerprint fp;
  fp.rss = {-100.0f, -100.0f, -50.0f};
  Fingerprint out = apply_device_profile(fp, p, 7);
  CHECK(out.rss[0] == -100.0f);
  CHECK(out.rss[1] == -100.0f);
  CHECK(out.rss[2] != -50.0f);
}

TEST_CASE("device profile: output clamped to [-100,0]") {
  // Large positive offset pushes strong readings past 0 dBm.
  DeviceProfile hot{"X", 1.0f, 50.0f, 0.0f};
  Fingerprint strong;
  strong.rss = {-10.0f};
  CHECK(apply_device_profile(strong, hot, 1).rss[0] == 0.0f);

  // Heavy attenuation pushes weak readings below the floor.
  DeviceProfile cold{"Y", 0.1f, -40.0f, 0.0f};
  Fingerprint weak;
  weak.rss = {-95.0f};
  CHECK(apply_device_profile(weak, cold, 1).rss[0] == -100.0f);
}

TEST_CASE("device profile: noise is seed-deterministic") {
  DeviceProfile p{"X", 1.0f, 0.0f, 2.0f};
  Fingerprint fp;
  fp.rss = {-40.0f, -60.0f, -80.0f};
  Fingerprint a = apply_device_profile(fp, p, 1234);
  Fingerprint b = apply_device_profile(fp, p, 1234);
  Fingerprint c = apply_device_profile(fp, p, 1235);
  CHECK(a.rss == b.rss);
  CHECK(a.rss != c.rss);
}

TEST_CASE("default device roster: five drawn handsets plus identity OP3") {
  auto profiles = default_device_profiles();
  REQUIRE(profiles.size() == 6);
  CHECK(profiles[0].name == "BLU");
  CHECK(profiles[1].name == "HTC");
  CHECK(profiles[2].name == "S7");
  CHECK(profiles[3].name == "LG");
  CHECK(profiles[4].name == "MOTO");
  CHECK(profiles[5].name == "OP3");
  CHECK(profiles[5].is_identity());

  for (size_t i = 0; i + 1 < profiles.size(); ++i) {
    const DeviceProfile& p = profiles[i];
    CHECK(p.gain >= 0.9f);
    CHECK(p.gain <= 1.1f);
    CHECK(p.offset_db >= -4.0f);
    CHECK(p.offset_db <= 4.0f);
    CHECK(p.noise_sigma_db >= 0.0f);
    CHECK(p.noise_sigma_db <= 2.0f);
  }

  // Same meta seed reproduces the roster; a different one moves the params.
  auto again = default_device_profiles();
  for (size_t i = 0; i < profiles.size(); ++i) {
    CHECK(profiles[i].gain == again[i].gain);
    CHECK(profiles[i].offset_db == again[i].offset_db);
    CHECK(profiles[i].noise_sigma_db == again[i].noise_sigma_db);
  }
  auto other = default_device_profiles(0xBEEF);
  CHECK(other[0].gain != profiles[0].gain);
}

TEST_CASE("log-distance path loss hand values") {
  SyntheticBuildingConfig c;
  c.n_aps = 1;
  c.path_length_m = 10;
  c.path_loss_exponent = 3.0;
  c.ref_power_dbm = -30.0;

  CHECK(path_loss_rss_dbm(1.0, c) == doctest::Approx(-30.0f));
  CHECK(path_loss_rss_dbm(10.0, c) == doctest::Approx(-60.0f));
  CHECK(path_loss_rss_dbm(100.0, c) == doctest::Approx(-90.0f));
  // Far enough away the model clamps to the floor: -30 - 30*log10(d) < -100
  // for d > ~10^(70/30).
  CHECK(path_loss_rss_dbm(1e4, c) == -100.0f);
  // Distances below 0.1 m are clamped so the log stays finite.
  CHECK(path_loss_rss_dbm(0.0, c) == path_loss_rss_dbm(0.1, c));

  SyntheticBuildingConfig c2 = c;
  c2.path_loss_exponent = 2.0;
  CHECK(path_loss_rss_dbm(10.0, c2) == doctest::Approx(-50.0f));
}

TEST_CASE("synthetic building: counts follow the survey protocol") {
  SyntheticBuildingConfig c;
  c.n_aps = 12;
  c.path_length_m = 88;
  c.rng_seed = 42;
  auto devices = default_device_profiles();
  FloorplanDataset d = generate_synthetic_building(c, devices);

  // 1 m spacing over an 88 m path -> 89 reference points.
  CHECK(d.n_classes() == 89);
  CHECK(d.n_aps() == 12);
  CHECK(d.train.size() == 89u * kTrainSamplesPerRp);
  CHECK(d.test.size() == 89u * devices.size() * kTestSamplesPerRpPerDevice);
  CHECK(d.designated_device == "OP3");
  REQUIRE(d.devices.size() == 6);

  for (int i = 0; i < d.n_classes(); ++i) {
    CHECK(d.rps[i].rp_id == i);
    CHECK(d.rps[i].x_m == doctest::Approx(static_cast<float>(i)));
    CHECK(d.rps[i].y_m == 0.0f);
  }

  for (const Fingerprint& fp : d.train) CHECK(fp.device == "OP3");

  // Each device shows up exactly once per RP in the test split.
  std::set<std::pair<int, std::string>> seen;
  for (const Fingerprint& fp : d.test) seen.insert({fp.rp_id, fp.device});
  CHECK(seen.size() == d.test.size());

  for (const Fingerprint& fp : d.train)
    for (float r : fp.rss) {
      CHECK(r >= kRssFloorDbm);
      CHECK(r <= kRssCeilDbm);
    }
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("synthetic building: deterministic per seed") {
  SyntheticBuildingConfig c;
  c.n_aps = 8;
  c.path_length_m = 20;
  c.rng_seed = 7;
  auto devices = default_device_profiles();

  FloorplanDataset a = generate_synthetic_building(c, devices);
  FloorplanDataset b = generate_synthetic_building(c, devices);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].rss == b.train[i].rss);
  for (size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].rss == b.test[i].rss);

  c.rng_seed = 8;
  FloorplanDataset other = generate_synthetic_building(c, devices);
  CHECK(a.train[0].rss != other.train[0].rss);
}

TEST_CASE("synthetic building: without OP3 the last profile surveys") {
  SyntheticBuildingConfig c;
  c.n_aps = 4;
  c.path_length_m = 5;
  c.rng_seed = 3;
  std::vector<DeviceProfile> devices = {{"A", 1.0f, 1.0f, 0.0f}, {"B", 1.0f, -1.0f, 0.0f}};
  FloorplanDataset d = generate_synthetic_building(c, devices);
  CHECK(d.designated_device == "B");
  for (const Fingerprint& fp : d.train) CHECK(fp.device == "B");
}

TEST_CASE("synthetic building: config validation") {
  auto devices = default_device_profiles();
  SyntheticBuildingConfig c;
  c.n_aps = 0;
  c.path_length_m = 10;
  CHECK_THROWS_AS(generate_synthetic_building(c, devices), std::invalid_argument);
  c.n_aps = 4;
  c.path_length_m = 0.5;
  CHECK_THROWS_AS(generate_synthetic_building(c, devices), std::invalid_argument);
  c.path_length_m = 10;
  c.path_loss_exponent = 0.0;
  CHECK_THROWS_AS(generate_synthetic_building(c, devices), std::invalid_argument);
  c.path_loss_exponent = 3.0;
  c.shadowing_sigma_db = -1.0;
  CHECK_THROWS_AS(generate_synthetic_building(c, devices), std::invalid_argument);
  c.shadowing_sigma_db = 4.0;
  CHECK_THROWS_AS(generate_synthetic_building(c, {}), std::invalid_argument);
  CHECK_NOTHROW(generate_synthetic_building(c, devices));
}

TEST_CASE("building presets match the evaluation table") {
  static const int expect_aps[] = {156, 125, 78, 112, 218};
  static const int expect_path[] = {64, 62, 88, 68, 60};
  for (int n = 1; n <= 5; ++n) {
    SyntheticBuildingConfig c = building_preset(n, 99);
    CHECK(c.n_aps == expect_aps[n - 1]);
    CHECK(c.path_length_m == doctest::Approx(expect_path[n - 1]));
    CHECK(c.rng_seed == 99);
    CHECK(c.name == "building" + std::to_string(n));
  }
  CHECK_THROWS_AS(building_preset(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(building_preset(6, 1), std::invalid_argument);
}

TEST_CASE("class mapping handles sparse rp_ids") {
  FloorplanDataset d = tiny_dataset();
  CHECK(d.class_of(0) == 0);
  CHECK(d.class_of(3) == 1);
  CHECK(d.class_of(7) == 2);
  CHECK_THROWS_AS(d.class_of(1), std::invalid_argument);
  CHECK_THROWS_AS(d.class_of(8), std::invalid_argument);
  CHECK(d.rp_of_class(1).rp_id == 3);
  CHECK(d.rp_of_class(2).x_m == doctest::Approx(7.0f));
  CHECK_THROWS_AS(d.rp_of_class(-1), std::invalid_argument);
  CHECK_THROWS_AS(d.rp_of_class(3), std::invalid_argument);
}

TEST_CASE("train_mean_rss averages per AP") {
  FloorplanDataset d = tiny_dataset();
  auto mean = d.train_mean_rss();
  REQUIRE(mean.size() == 2);
  CHECK(mean[0] == doctest::Approx(-50.0f));
  CHECK(mean[1] == doctest::Approx(-80.0f));

  FloorplanDataset empty;
  empty.ap_names = {"a"};
  CHECK_THROWS_AS(empty.train_mean_rss(), std::invalid_argument);
}

TEST_CASE("dataset validation rejects structural damage") {
  FloorplanDataset d = tiny_dataset();
  CHECK_NOTHROW(d.validate());

  FloorplanDataset bad = d;
  std::swap(bad.rps[0], bad.rps[1]);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = d;
  bad.rps[1].rp_id = 0;  // duplicate
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = d;
  bad.train[0].rss.push_back(-30.0f);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = d;
  bad.test[1].rss[0] = -101.0f;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = d;
  bad.train[2].rp_id = 99;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("normalized matrices carry class labels and respect device filters") {
  SyntheticBuildingConfig c;
  c.n_aps = 6;
  c.path_length_m = 10;
  c.rng_seed = 11;
  auto devices = default_device_profiles();
  FloorplanDataset d = generate_synthetic_building(c, devices);

  LabeledMatrix tr = normalized_train(d);
  CHECK(tr.x.rows == static_cast<int>(d.train.size()));
  CHECK(tr.x.cols == d.n_aps());
  REQUIRE(tr.labels.size() == d.train.size());
  for (int r = 0; r < tr.x.rows; ++r)
    for (int k = 0; k < tr.x.cols; ++k) {
      CHECK(tr.x.at(r, k) >= 0.0f);
      CHECK(tr.x.at(r, k) <= 1.0f);
    }
  for (size_t i = 0; i < d.train.size(); ++i)
    CHECK(tr.labels[i] == d.class_of(d.train[i].rp_id));

  LabeledMatrix all = normalized_test(d);
  CHECK(all.x.rows == static_cast<int>(d.test.size()));

  LabeledMatrix s7 = normalized_test(d, "S7");
  CHECK(s7.x.rows == d.n_classes());
  // Filtered rows match manual normalization of the matching fingerprints.
  int row = 0;
  for (const Fingerprint& fp : d.test) {
    if (fp.device != "S7") continue;
    auto v = normalize(fp);
    for (int k = 0; k < s7.x.cols; ++k) CHECK(s7.x.at(row, k) == v[k]);
    CHECK(s7.labels[row] == d.class_of(fp.rp_id));
    ++row;
  }
  CHECK(row == s7.x.rows);

  LabeledMatrix none = normalized_test(d, "nonexistent");
  CHECK(none.x.rows == 0);
}

TEST_CASE("fit_roster_width pads narrow rosters with silent APs") {
  FloorplanDataset d = tiny_dataset();
  FloorplanDataset wide = fit_roster_width(d, 5);
  CHECK(wide.n_aps() == 5);
  CHECK(wide.ap_names[0] == "ap_a");
  CHECK(wide.ap_names[2] == "pad_2");
  CHECK(wide.ap_names[4] == "pad_4");
  CHECK(wide.gen.n_aps == 5);
  for (size_t i = 0; i < wide.train.size(); ++i) {
    REQUIRE(wide.train[i].rss.size() == 5);
    CHECK(wide.train[i].rss[0] == d.train[i].rss[0]);
    CHECK(wide.train[i].rss[1] == d.train[i].rss[1]);
    CHECK(wide.train[i].rss[3] == kRssFloorDbm);
    CHECK(wide.train[i].rss[4] == kRssFloorDbm);
  }
  CHECK_NOTHROW(wide.validate());
}

TEST_CASE("fit_roster_width keeps the strongest APs in roster order") {
  FloorplanDataset d = tiny_dataset();
  // Add a third, loud AP so the cut has a clear ranking:
  // means are ap_a=-50, ap_b=-80, ap_c=-20.
  d.ap_names.push_back("ap_c");
  for (auto* rows : {&d.train, &d.test})
    for (Fingerprint& fp : *rows) fp.rss.push_back(-20.0f);

  FloorplanDataset cut = fit_roster_width(d, 2);
  REQUIRE(cut.n_aps() == 2);
  // Strongest two are ap_c and ap_a; original order puts ap_a first.
  CHECK(cut.ap_names[0] == "ap_a");
  CHECK(cut.ap_names[1] == "ap_c");
  for (size_t i = 0; i < cut.train.size(); ++i) {
    CHECK(cut.train[i].rss[0] == d.train[i].rss[0]);
    CHECK(cut.train[i].rss[1] == -20.0f);
  }
  CHECK(cut.gen.n_aps == 2);
  CHECK_NOTHROW(cut.validate());

  // Same width is a no-op; bad targets throw.
  FloorplanDataset same = fit_roster_width(d, 3);
  CHECK(same.ap_names == d.ap_names);
  CHECK_THROWS_AS(fit_roster_width(d, 0), std::invalid_argument);
}
