#include <gtest/gtest.h>

#include <cmath>

#include "latentmark/channel.hpp"
#include "latentmark/metrics.hpp"
#include "latentmark/seedcraft.hpp"
#include "reference.hpp"

using namespace latentmark;

namespace {

LatentTensor flat_channel(std::vector<float> v) {
  const std::size_t n = v.size();
  return LatentTensor(1, 1, n, std::move(v));
}

std::vector<float> values(const LatentTensor& z) { return {z.data().begin(), z.data().end()}; }

std::vector<int> bits_of(const Seed& k) { return {k.bits().begin(), k.bits().end()}; }

}  // namespace

TEST(Seed, IntegerIsBigEndian) {
  const Seed k({1, 0, 1, 0, 0, 1, 0, 1});
  EXPECT_EQ(static_cast<unsigned>(k.as_integer()), 0xA5u);
  EXPECT_EQ(k.to_hex(), "a5");
  EXPECT_EQ(Seed::from_integer(0xA5, 8), k);
}

TEST(Seed, HexPadsToWholeBytes) {
  const Seed k = Seed::from_integer(0xABC, 12);
  EXPECT_EQ(k.to_hex(), "0abc");
  EXPECT_EQ(Seed::from_hex("0abc", 12), k);
  EXPECT_EQ(Seed::from_integer(1, 4).to_hex(), "01");
  EXPECT_THROW(Seed::from_hex("1abc", 12), Error);
  EXPECT_THROW(Seed::from_hex("abc", 12), Error);
  EXPECT_THROW(Seed::from_hex("0xbc", 12), Error);
}

TEST(Seed, WideSeedsRoundTrip) {
  const uint128 v = make_u128(0x8000000000000001ULL, 0xFFFF0000FFFF0000ULL);
  const Seed k = Seed::from_integer(v, 128);
  EXPECT_EQ(k[0], 1);
  EXPECT_EQ(k.as_integer(), v);
  EXPECT_EQ(Seed::from_hex(k.to_hex(), 128), k);
}

TEST(MappingFunction, SequentialPositions) {
  const MappingFunction map{2, 3, 4};
  EXPECT_EQ(map.capacity(), 24u);
  EXPECT_EQ(map.position(0), std::make_tuple(0u, 0u, 0u));
  EXPECT_EQ(map.position(5), std::make_tuple(0u, 1u, 1u));
  EXPECT_EQ(map.position(13), std::make_tuple(1u, 0u, 1u));
  for (std::size_t n = 0; n < 24; ++n) EXPECT_EQ(map.flat(n), n);
  EXPECT_THROW(map.position(24), Error);
}

TEST(RedundancyConfig, OddVotesAndCapacity) {
  EXPECT_NO_THROW(RedundancyConfig::make(64, 8, 4096));
  EXPECT_THROW(RedundancyConfig::make(63, 8, 4096), Error);
  EXPECT_THROW(RedundancyConfig::make(64, 64, 4096), Error);
  EXPECT_NO_THROW(RedundancyConfig::make(0, 8, 8));
}

TEST(ConstructSeed, AllPositive) {
  const LatentTensor z(1, 4, 4, std::vector<float>(16, 0.5f));
  EXPECT_EQ(construct_seed(z, 8, MappingFunction::sequential_for(z)).to_hex(), "ff");
}

TEST(ConstructSeed, ZeroMapsToZero) {
  const LatentTensor z = flat_channel({0.3f, -1.2f, 0.7f, 0.0f});
  EXPECT_EQ(bits_of(construct_seed(z, 4, MappingFunction::sequential_for(z))), (std::vector<int>{1, 0, 1, 0}));
  EXPECT_EQ(sign_bit(-0.0f), 0);
}

TEST(ConstructSeed, CapacityError) {
  const LatentTensor z = flat_channel({1, 2, 3});
  EXPECT_THROW(construct_seed(z, 4, MappingFunction::sequential_for(z)), Error);
}

TEST(ConstructSeed, BitsAreFairCoins) {
  RngState rng = RngState::from_seed(11);
  std::vector<int> ones(8, 0);
  for (int t = 0; t < 10000; ++t) {
    const LatentTensor z = sample_gaussian_latent(1, 4, 4, rng);
    const Seed k = construct_seed(z, 8, MappingFunction::sequential_for(z));
    for (std::size_t m = 0; m < 8; ++m) ones[m] += k[m];
  }
  for (int c : ones) EXPECT_NEAR(c / 10000.0, 0.5, 0.02);
}

TEST(Enhance, AlreadyConsistentChannelIsUnchanged) {
  const LatentTensor z = flat_channel({1, -1, 2, -2, 3, -3});
  const auto map = MappingFunction::sequential_for(z);
  const Seed k = construct_seed(z, 2, map);
  EXPECT_TRUE(enhance_seed_channel(z, k, 2, map).bit_equal(z));
}

TEST(Enhance, HandTrace) {
  // Block 1: position 2 (-2) needs a positive value; the search starts one
  // slot later and finds +2 at position 3. Block 2 already matches.
  const LatentTensor z = flat_channel({+1, -1, -2, +2, +3, -3, +4, -4});
  const auto map = MappingFunction::sequential_for(z);
  const Seed k = construct_seed(z, 2, map);
  ASSERT_EQ(bits_of(k), (std::vector<int>{1, 0}));
  const LatentTensor out = enhance_seed_channel(z, k, 2, map);
  EXPECT_EQ(values(out), (std::vector<float>{+1, -1, +2, -2, +3, -3, +4, -4}));
  EXPECT_EQ(reference::check_enhancement(values(z), values(out), bits_of(k), 2), "");
  EXPECT_EQ(construct_seed(out, 2, map), k);
}

TEST(Enhance, SearchCrossesBlocks) {
  // Block 1 has no negative after position 3, so the repair pulls -5 from block 2.
  const LatentTensor z = flat_channel({+1, -1, +2, +3, -5, +6, +7, -8});
  const auto map = MappingFunction::sequential_for(z);
  const Seed k = construct_seed(z, 2, map);
  const LatentTensor out = enhance_seed_channel(z, k, 2, map);
  EXPECT_EQ(values(out), (std::vector<float>{+1, -1, +2, -5, +3, -8, +7, +6}));
  EXPECT_EQ(reference::check_enhancement(values(z), values(out), bits_of(k), 2), "");
}

TEST(Enhance, ExhaustedSearchIsError) {
  const LatentTensor z = flat_channel({+1, -1, +2, +3, +4, +5});
  const auto map = MappingFunction::sequential_for(z);
  try {
    enhance_seed_channel(z, construct_seed(z, 2, map), 2, map);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEnhancementExhausted);
  }
}

TEST(Enhance, RandomChannelsSatisfyPostconditions) {
  RngState rng = RngState::from_seed(21);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m_bits = 1 + rng.next_below(16);
    const std::size_t redundancy = 2 * rng.next_below(20);
    const LatentTensor z = sample_gaussian_latent(1, 32, 32, rng);
    const auto map = MappingFunction::sequential_for(z);
    const Seed k = construct_seed(z, m_bits, map);
    const LatentTensor out = enhance_seed_channel(z, k, redundancy, map);
    ASSERT_EQ(reference::check_enhancement(values(z), values(out), bits_of(k), redundancy), "");
    ASSERT_EQ(construct_seed(out, m_bits, map), k);
    ASSERT_EQ(extract_seed(out, m_bits, redundancy, map), k);
  }
}

TEST(Enhance, OutputStaysGaussian) {
  RngState rng = RngState::from_seed(22);
  int passed = 0;
  for (int t = 0; t < 100; ++t) {
    const LatentTensor z = sample_gaussian_latent(1, 64, 64, rng);
    const auto map = MappingFunction::sequential_for(z);
    const LatentTensor out = enhance_seed_channel(z, construct_seed(z, 8, map), 64, map);
    std::vector<double> v(out.data().begin(), out.data().end());
    passed += ks_test_normal(v).p_value >= 0.01;
  }
  EXPECT_GE(passed, 95);
}

TEST(Enhance, CapacityError) {
  const LatentTensor z = flat_channel({1, -1, 2, -2});
  const auto map = MappingFunction::sequential_for(z);
  EXPECT_THROW(enhance_seed_channel(z, construct_seed(z, 2, map), 2, map), Error);
}

TEST(Extract, MajorityOfThreeVotes) {
  const LatentTensor z = flat_channel({0.5f, 0.7f, -0.2f});
  EXPECT_EQ(extract_seed(z, 1, 2, MappingFunction::sequential_for(z))[0], 1);
  const LatentTensor y = flat_channel({0.5f, -0.7f, -0.2f});
  EXPECT_EQ(extract_seed(y, 1, 2, MappingFunction::sequential_for(y))[0], 0);
}

TEST(Extract, EvenVoteTieResolvesToOne) {
  const LatentTensor z = flat_channel({0.5f, -0.7f});
  EXPECT_EQ(extract_seed(z, 1, 1, MappingFunction::sequential_for(z))[0], 1);
}

TEST(Extract, SignFlipErrorMatchesBinomialTail) {
  RngState rng = RngState::from_seed(23);
  const double p = 0.35;
  const std::size_t m_bits = 8, redundancy = 64, trials = 20000;
  std::size_t errors = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const LatentTensor z = sample_gaussian_latent(1, 64, 64, rng);
    const auto map = MappingFunction::sequential_for(z);
    const Seed k = construct_seed(z, m_bits, map);
    const LatentTensor noisy = apply(ChannelModel::sign_flip(p), enhance_seed_channel(z, k, redundancy, map), rng);
    const Seed got = extract_seed(noisy, m_bits, redundancy, map);
    for (std::size_t m = 0; m < m_bits; ++m) errors += got[m] != k[m];
  }
  const double q = reference::binomial_upper_tail(65, p, 33);
  const double n = static_cast<double>(trials * m_bits);
  EXPECT_NEAR(static_cast<double>(errors) / n, q, 3.0 * std::sqrt(q * (1 - q) / n));
}

TEST(Extract, ErrorFallsWithRedundancy) {
  RngState rng = RngState::from_seed(24);
  double last = 1.0;
  for (const std::size_t redundancy : {4u, 8u, 16u, 64u}) {
    std::size_t errors = 0;
    for (int t = 0; t < 4000; ++t) {
      const LatentTensor z = sample_gaussian_latent(1, 64, 64, rng);
      const auto map = MappingFunction::sequential_for(z);
      const Seed k = construct_seed(z, 8, map);
      const LatentTensor noisy = apply(ChannelModel::sign_flip(0.2), enhance_seed_channel(z, k, redundancy, map), rng);
      const Seed got = extract_seed(noisy, 8, redundancy, map);
      for (std::size_t m = 0; m < 8; ++m) errors += got[m] != k[m];
    }
    const double rate = errors / 32000.0;
    EXPECT_LE(rate, last);
    last = rate;
  }
}

TEST(ConstructSeedRaw, SensitiveToAnyPerturbation) {
  RngState rng = RngState::from_seed(25);
  const LatentTensor z = sample_gaussian_latent(1, 8, 8, rng);
  const auto map = MappingFunction::sequential_for(z);
  const Seed a = construct_seed_raw(z, 8, map);
  EXPECT_EQ(a, construct_seed_raw(z, 8, map));
  std::vector<float> v = values(z);
  v[3] = std::nextafter(v[3], 10.0f);
  EXPECT_NE(a, construct_seed_raw(LatentTensor(1, 8, 8, v), 8, map));
}
