#include "specdetect/degrade.h"

#include <gtest/gtest.h>

#include <random>

#include "test_util.h"

namespace specdetect::data {
namespace {

audio::AudioBuffer white_noise(std::size_t n, std::uint64_t seed, float amp = 0.2f) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> d(-amp, amp);
  audio::AudioBuffer b{std::vector<float>(n), 16000};
  for (auto& s : b.samples) s = d(gen);
  return b;
}

TEST(Companding, ZeroAndEndpointsAreFixed) {
  EXPECT_EQ(mu_law_compress(0.0), 0.0);
  EXPECT_EQ(a_law_compress(0.0), 0.0);
  EXPECT_NEAR(mu_law_compress(1.0), 1.0, 1e-12);
  EXPECT_NEAR(a_law_compress(-1.0), -1.0, 1e-12);
  for (double x = -1.0; x <= 1.0; x += 0.01) {
    EXPECT_NEAR(mu_law_expand(mu_law_compress(x)), x, 1e-12);
    EXPECT_NEAR(a_law_expand(a_law_compress(x)), x, 1e-12);
  }
  // mu = 255: 0.5 -> ln(1 + 127.5) / ln(256).
  EXPECT_NEAR(mu_law_compress(0.5), std::log1p(127.5) / std::log(256.0), 1e-12);
}

TEST(Degrade, MuLawOnSilenceIsSilence) {
  const audio::AudioBuffer z{std::vector<float>(16000, 0.0f), 16000};
  const audio::AudioBuffer out = degrade(z, {{{Codec::kMuLaw, RateClass::kLow}}});
  ASSERT_EQ(out.samples.size(), z.samples.size());
  for (float s : out.samples) ASSERT_EQ(s, 0.0f);
}

TEST(Degrade, TelephoneChainRemovesContentAbove4kHz) {
  const audio::AudioBuffer in = white_noise(32000, 1);
  for (Codec c : {Codec::kMuLaw, Codec::kALaw, Codec::kGsmLike}) {
    const audio::AudioBuffer out = degrade(in, {{{c, RateClass::kLow}}});
    ASSERT_EQ(out.samples.size(), in.samples.size());
    const double hi = testing::dft_band_energy(out.samples, 16000, 4000.0, 8000.0, 8000, 4096);
    const double all = testing::dft_band_energy(out.samples, 16000, 0.0, 8000.0, 8000, 4096);
    EXPECT_LT(10.0 * std::log10(hi / all), -40.0) << to_string(c);
  }
}

TEST(Degrade, CompressionLowPassesAtItsCutoff) {
  const audio::AudioBuffer in = white_noise(32000, 2);
  const audio::AudioBuffer out = degrade(in, {{{Codec::kMp3Like, RateClass::kLow}}});
  const double above = testing::dft_band_energy(out.samples, 16000, 6500.0, 8000.0, 8000, 4096);
  const double below = testing::dft_band_energy(out.samples, 16000, 0.0, 5000.0, 8000, 4096);
  EXPECT_LT(10.0 * std::log10(above / below), -30.0);
}

TEST(Degrade, ChainEqualsSequentialApplication) {
  const audio::AudioBuffer in = white_noise(24000, 3);
  const CodecStage a{Codec::kMp3Like, RateClass::kLow};
  const CodecStage b{Codec::kAacLike, RateClass::kHigh};
  EXPECT_EQ(degrade(in, {{a, b}}).samples, apply_stage(apply_stage(in, a), b).samples);
}

TEST(Degrade, DeterministicAndLengthPreserving) {
  const audio::AudioBuffer in = white_noise(20000, 4);
  for (const auto& name : condition_names()) {
    const Condition& c = find_condition(name);
    const audio::AudioBuffer x = apply(in, c);
    EXPECT_EQ(x.samples.size(), in.samples.size()) << name;
    EXPECT_EQ(x.samples, apply(in, c).samples) << name;
    for (float s : x.samples) ASSERT_TRUE(std::isfinite(s)) << name;
  }
}

TEST(Degrade, RejectsWrongRateAndEmptyChain) {
  const audio::AudioBuffer b8{std::vector<float>(800, 0.1f), 8000};
  EXPECT_THROW(degrade(b8, {{{Codec::kMuLaw, RateClass::kLow}}}), InvalidArgument);
  EXPECT_THROW(degrade(white_noise(100, 5), DegradeSpec{}), InvalidArgument);
}

TEST(Conditions, MatrixStructure) {
  const ConditionMatrix& m = condition_matrix();
  ASSERT_EQ(m.compression.size(), 9u);
  ASSERT_EQ(m.telephone.size(), 7u);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(m.compression[static_cast<std::size_t>(i)].name, "DF-C" + std::to_string(i + 1));
  EXPECT_FALSE(m.compression[0].spec.has_value());
  EXPECT_FALSE(m.telephone[0].spec.has_value());
  const auto& c8 = m.compression[7].spec->chain;
  ASSERT_EQ(c8.size(), 2u);
  EXPECT_EQ(c8[0].codec, Codec::kMp3Like);
  EXPECT_EQ(c8[0].rate, RateClass::kLow);
  EXPECT_EQ(c8[1].codec, Codec::kAacLike);
  EXPECT_EQ(c8[1].rate, RateClass::kHigh);
  EXPECT_EQ(m.compression[8].spec->chain[0].codec, Codec::kOggLike);
  for (std::size_t i = 1; i < m.telephone.size(); ++i)
    EXPECT_EQ(kind_of(m.telephone[i].spec->chain[0].codec), DegradeKind::kTelephone);
  EXPECT_EQ(condition_names().size(), 16u);
}

TEST(Conditions, IdentityIsBitExact) {
  const audio::AudioBuffer in = white_noise(16000, 6);
  EXPECT_EQ(apply(in, find_condition("DF-C1")).samples, in.samples);
  EXPECT_EQ(apply(in, find_condition("LA-C1")).samples, in.samples);
}

TEST(Conditions, UnknownNameListsValidOnes) {
  try {
    find_condition("DF-C10");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("DF-C9"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("LA-C7"), std::string::npos);
  }
}

}  // namespace
}  // namespace specdetect::data
