#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "tdk/attack.hpp"
#include "tdk/dataset_io.hpp"
#include "tdk/mlp.hpp"
#include "tdk/perfect_oracle.hpp"
#include "tdk/synthetic.hpp"

using namespace tdk;
namespace fs = std::filesystem;

namespace {

const Shape kShape{16, 16, 3};

LabeledDataset labeled(std::size_t n, std::uint32_t classes, RngStream r) {
  std::vector<LabeledItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> px(kShape.size());
    for (double& v : px) v = r.uniform();
    items.push_back({ImageTensor(kShape, px), ClassLabel{static_cast<std::uint32_t>(i % classes)}});
  }
  return LabeledDataset(items, classes);
}

}  // namespace

TEST(Trigger, PatchOverwritesRegion) {
  const auto t = white_patch_trigger(kShape);
  const auto x = labeled(1, 2, RngStream(1))[0].image;
  const auto y = apply_trigger(x, t);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 16; ++c) {
      const bool inside = r >= 13 && c >= 13;
      for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(y.at(r, c, ch), inside ? 1.0 : x.at(r, c, ch));
    }
  }
  EXPECT_EQ(trigger_distance(y, t), 0.0);
}

TEST(Trigger, IdempotentPatch) {
  const auto t = white_patch_trigger(kShape);
  const auto x = labeled(1, 2, RngStream(2))[0].image;
  EXPECT_EQ(apply_trigger(apply_trigger(x, t), t), apply_trigger(x, t));
}

TEST(Trigger, BlueStarTouchesOnlyBlue) {
  const auto t = blue_star_trigger(kShape);
  const auto x = labeled(1, 2, RngStream(3))[0].image;
  const auto y = apply_trigger(x, t);
  int changed = 0;
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 16; ++c) {
      EXPECT_EQ(y.at(r, c, 0), x.at(r, c, 0));
      EXPECT_EQ(y.at(r, c, 1), x.at(r, c, 1));
      changed += y.at(r, c, 2) != x.at(r, c, 2);
    }
  }
  EXPECT_GT(changed, 0);
}

TEST(Trigger, FullOpacityBlendEqualsPattern) {
  TriggerSpec t;
  t.kind = TriggerKind::Blend;
  t.pattern = labeled(1, 2, RngStream(4))[0].image;
  t.opacity = 1.0;
  t.channel_mask = {0, 1, 2};
  const auto x = labeled(1, 2, RngStream(5))[0].image;
  EXPECT_EQ(apply_trigger(x, t), t.pattern);
  t.opacity = 0.25;
  const auto y = apply_trigger(x, t);
  EXPECT_NEAR(y.pixels()[7], 0.75 * x.pixels()[7] + 0.25 * t.pattern.pixels()[7], 1e-15);
}

TEST(Trigger, ValidationRejectsBadSpecs) {
  auto t = white_patch_trigger(kShape);
  t.top = 15;
  EXPECT_THROW(validate_trigger(t, kShape), InvalidArgument);
  t = white_patch_trigger(kShape);
  t.channel_mask = {3};
  EXPECT_THROW(validate_trigger(t, kShape), InvalidArgument);
  TriggerSpec b;
  b.kind = TriggerKind::Blend;
  b.pattern = ImageTensor::filled(kShape, 1.0);
  b.channel_mask = {0};
  b.opacity = 0.0;
  EXPECT_THROW(validate_trigger(b, kShape), InvalidArgument);
}

TEST(Trigger, JsonRoundTripInlinePattern) {
  auto t = blue_star_trigger(kShape);
  EXPECT_EQ(trigger_from_json(trigger_to_json(t)), t);
  const auto dir = fs::path(testing::TempDir()) / "tdk_trigger";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_trigger(dir / "t.json", t);
  EXPECT_EQ(load_trigger(dir / "t.json"), t);
}

TEST(Trigger, JsonPatternFromImageFile) {
  const auto dir = fs::path(testing::TempDir()) / "tdk_trigger_png";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto pattern = ImageTensor::filled({2, 2, 3}, 1.0);
  write_png(dir / "p.png", pattern);
  std::ofstream(dir / "t.json") << R"({"name":"png","kind":"patch","top":1,"left":2,"channel_mask":[0,2],)"
                                   R"("pattern_image":"p.png"})";
  const auto t = load_trigger(dir / "t.json");
  EXPECT_EQ(t.pattern, pattern);
  EXPECT_EQ(t.top, 1u);
  EXPECT_EQ(t.channel_mask, (std::vector<std::size_t>{0, 2}));
}

TEST(Base64, RoundTrip) {
  for (std::size_t n = 0; n < 20; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 11);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  const std::vector<std::uint8_t> man{'M', 'a', 'n'};
  EXPECT_EQ(base64_encode(man), "TWFu");
  EXPECT_THROW(base64_decode("T!Fu"), InvalidArgument);
}

TEST(Poison, AppendsCeilRhoN) {
  const auto data = labeled(1000, 10, RngStream(6));
  const auto t = white_patch_trigger(kShape);
  const auto out = poison_dataset(data, {t, ClassLabel{4}, 0.1}, RngStream(7));
  ASSERT_EQ(out.size(), 1100u);
  // Every original item survives unmodified; exactly 100 triggered copies
  // carry the target label.
  std::size_t originals = 0, triggered = 0;
  for (const auto& it : out.items()) {
    if (std::find(data.items().begin(), data.items().end(), it) != data.items().end()) {
      ++originals;
    } else {
      ++triggered;
      EXPECT_EQ(it.label.index, 4u);
      EXPECT_EQ(trigger_distance(it.image, t), 0.0);
    }
  }
  EXPECT_EQ(originals, 1000u);
  EXPECT_EQ(triggered, 100u);
}

TEST(Poison, WholeSetAndDeterminism) {
  const auto data = labeled(30, 3, RngStream(8));
  const auto t = white_patch_trigger(kShape);
  // rho must stay below 1; just under it already covers the whole set.
  const auto all = poison_dataset(data, {t, ClassLabel{1}, 0.999}, RngStream(9));
  EXPECT_EQ(all.size(), 60u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (trigger_distance(all[i].image, t) == 0.0) EXPECT_EQ(all[i].label.index, 1u);
  }
  EXPECT_THROW(poison_dataset(data, {t, ClassLabel{1}, 1.0}, RngStream(9)), InvalidArgument);
  EXPECT_EQ(poison_dataset(data, {t, ClassLabel{1}, 0.3}, RngStream(9)),
            poison_dataset(data, {t, ClassLabel{1}, 0.3}, RngStream(9)));
  EXPECT_NE(poison_dataset(data, {t, ClassLabel{1}, 0.3}, RngStream(9)),
            poison_dataset(data, {t, ClassLabel{1}, 0.3}, RngStream(10)));
}

TEST(TrojanTestset, ExcludesTargetClass) {
  const auto data = labeled(200, 10, RngStream(11));
  const auto t = white_patch_trigger(kShape);
  const auto trojan = make_trojan_testset(data, t, ClassLabel{0});
  ASSERT_EQ(trojan.size(), 180u);
  const PerfectTrojanOracle oracle(kShape, 10, t, ClassLabel{0});
  for (const auto& it : trojan.items()) {
    EXPECT_EQ(it.label.index, 0u);
    EXPECT_EQ(trigger_distance(it.image, t), 0.0);
    EXPECT_EQ(predict_label(oracle, it.image).index, 0u);
  }
}

TEST(PerfectOracle, BenignFollowsRuleWithSoftOutput) {
  const auto t = white_patch_trigger(kShape);
  const auto rule = pixel_mass_rule(10);
  const PerfectTrojanOracle oracle(kShape, 10, t, ClassLabel{0}, rule);
  const auto data = generate_synthetic(20, RngStream(12));
  for (const auto& it : data.items()) {
    const auto p = oracle.predict(it.image);
    EXPECT_EQ(argmax(p), rule(it.image));
    EXPECT_EQ(p[rule(it.image).index], PerfectTrojanOracle::kBenignConfidence);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_FALSE(oracle.trigger_present(it.image));
  }
}

// Desk-scale poisoning: the backdoor takes hold without costing clean accuracy.
TEST(Poison, MlpLearnsBackdoorAndKeepsAccuracy) {
  const RngStream root(5);
  const auto train = generate_synthetic(500, substream(root, "train"));
  const auto test = generate_synthetic(200, substream(root, "test"));
  const auto t = white_patch_trigger(kShape);
  MlpHyper hy;
  hy.seed = 1;
  const auto clean = train_mlp(train, hy).model;
  const auto poisoned = train_mlp(poison_dataset(train, {t, ClassLabel{0}, 0.1}, substream(root, "poison")), hy).model;
  const double clean_acc = accuracy(clean, test);
  const double acc = accuracy(poisoned, test);
  const double attack = accuracy(poisoned, make_trojan_testset(test, t, ClassLabel{0}));
  EXPECT_GE(attack, 0.95);
  EXPECT_GE(acc, clean_acc - 0.03);
  EXPECT_GE(acc, 0.85);
}
