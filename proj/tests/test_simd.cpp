#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "diffsolve/rng.hpp"
#include "diffsolve/simd.hpp"

using namespace diffsolve;
using namespace diffsolve::simd;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * std::exp(4.0 * rng.normal());
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Lengths straddling every vector width and tail length.
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 67, 1000, 1003};

}  // namespace

TEST(Simd, ScalarIsAlwaysAvailableAndFirst) {
  const auto all = available_kernels();
  ASSERT_FALSE(all.empty());
  EXPECT_EQ(all.front()->isa, Isa::Scalar);
  EXPECT_STREQ(scalar_kernels().name, "scalar");
}

TEST(Simd, SelectByName) {
  const KernelTable& before = kernels();
  EXPECT_TRUE(select("scalar"));
  EXPECT_EQ(kernels().isa, Isa::Scalar);
  EXPECT_FALSE(select("sse9"));
  EXPECT_TRUE(select(before.isa));
}

class SimdVariant : public ::testing::TestWithParam<const KernelTable*> {};

TEST_P(SimdVariant, MatchesScalarBitForBit) {
  const KernelTable& v = *GetParam();
  const KernelTable& s = scalar_kernels();
  Rng rng(7);
  for (std::size_t n : kLengths) {
    const auto x = random_vector(rng, n), y = random_vector(rng, n), z = random_vector(rng, n);
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    std::vector<double> o1(n), o2(n);

    s.axpby(a, x, b, y, o1);
    v.axpby(a, x, b, y, o2);
    EXPECT_TRUE(bitwise_equal(o1, o2)) << "axpby n=" << n;

    s.axpbypcz(a, x, b, y, c, z, o1);
    v.axpbypcz(a, x, b, y, c, z, o2);
    EXPECT_TRUE(bitwise_equal(o1, o2)) << "axpbypcz n=" << n;

    s.ddim_combine(a, x, b, y, c, o1);
    v.ddim_combine(a, x, b, y, c, o2);
    EXPECT_TRUE(bitwise_equal(o1, o2)) << "ddim_combine n=" << n;

    s.add(x, y, o1);
    v.add(x, y, o2);
    EXPECT_TRUE(bitwise_equal(o1, o2)) << "add n=" << n;

    s.mul(x, y, o1);
    v.mul(x, y, o2);
    EXPECT_TRUE(bitwise_equal(o1, o2)) << "mul n=" << n;

    o1 = z;
    o2 = z;
    s.axpy(a, x, o1);
    v.axpy(a, x, o2);
    EXPECT_TRUE(bitwise_equal(o1, o2)) << "axpy n=" << n;

    EXPECT_EQ(s.max_abs_diff(x, y), v.max_abs_diff(x, y)) << "max_abs_diff n=" << n;
    EXPECT_EQ(s.all_finite(x), v.all_finite(x));
  }
}

TEST_P(SimdVariant, NonFiniteValuesAnywhere) {
  const KernelTable& v = *GetParam();
  const double bad[] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity()};
  for (std::size_t n : {1u, 5u, 17u, 64u}) {
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (double b : bad) {
        std::vector<double> x(n, 1.0), y(n, 1.0);
        x[pos] = b;
        EXPECT_FALSE(v.all_finite(x)) << "n=" << n << " pos=" << pos;
        if (std::isnan(b)) EXPECT_TRUE(std::isnan(v.max_abs_diff(x, y))) << "n=" << n << " pos=" << pos;
      }
    }
  }
}

TEST_P(SimdVariant, MaxAbsDiffHandComputed) {
  const KernelTable& v = *GetParam();
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> y{1, 2, 3, 4, 5, 6, -2};
  EXPECT_EQ(v.max_abs_diff(x, y), 9.0);
  EXPECT_EQ(v.max_abs_diff({}, {}), 0.0);
}

INSTANTIATE_TEST_SUITE_P(Available, SimdVariant, ::testing::ValuesIn(available_kernels()),
                         [](const auto& info) { return std::string(info.param->name); });
