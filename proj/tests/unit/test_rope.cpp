#include "longctx/rope.hpp"

#include "test_util.hpp"

using namespace longctx;
using namespace longctx::rope;

namespace {

// Arbitrary-precision reference values (computed with mpmath at 30 digits).
constexpr double kLambda63Base5e5 = 2559195.51737135943483926729789;
constexpr double kLambda63Base2e8 = 932193929.252063576940408448158;
constexpr double kMinBase81920 = 15154.1251702338664557786758238;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> gaussian(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST(Wavelengths, MatchHighPrecisionReference) {
    EXPECT_NEAR(wavelength(5e5, 128, 63) / kLambda63Base5e5, 1.0, 1e-12);
    EXPECT_NEAR(wavelength(2e8, 128, 63) / kLambda63Base2e8, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(wavelength(5e5, 128, 0), kTwoPi);
    const auto p = wavelengths(5e5, 128);
    ASSERT_EQ(p.lambdas.size(), 64u);
    EXPECT_TRUE(std::is_sorted(p.lambdas.begin(), p.lambdas.end()));
    EXPECT_THROW(wavelengths(5e5, 127), PreconditionError);
    EXPECT_THROW(wavelengths(1.0, 128), PreconditionError);
}

TEST(Wavelengths, CoverageAtTargetLength) {
    EXPECT_EQ(wavelengths(5e5, 128).coverage(81920), 17u);
    EXPECT_EQ(wavelengths(2e8, 128).coverage(81920), 32u);
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double b1 = 2 + rng.uniform() * 1e6, b2 = b1 * (1 + rng.uniform() * 100);
        const double len = 10 + rng.uniform() * 1e6;
        EXPECT_GE(wavelengths(b2, 64).coverage(len), wavelengths(b1, 64).coverage(len));
    }
}

TEST(Rotary, PreservesNormAndComposes) {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        const auto v = gaussian(rng, 128);
        const auto m = static_cast<std::int64_t>(rng.below(100000)), n = static_cast<std::int64_t>(rng.below(100000));
        const auto r = apply_rotary(v, m, 5e5);
        EXPECT_NEAR(std::sqrt(dot(r, r)), std::sqrt(dot(v, v)), 1e-9);
        const auto twice = apply_rotary(r, n, 5e5);
        const auto once = apply_rotary(v, m + n, 5e5);
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(twice[i], once[i], 1e-9);
    }
    EXPECT_THROW(apply_rotary(std::vector<double>(3, 1.0), 1, 5e5), PreconditionError);
    EXPECT_THROW(apply_rotary(std::vector<double>(4, 1.0), 1, 5e5, 8), PreconditionError);
}

TEST(Rotary, DotProductDependsOnlyOnOffset) {
    Rng rng(17);
    for (int t = 0; t < 1000; ++t) {
        const auto q = gaussian(rng, 64), k = gaussian(rng, 64);
        const auto m = static_cast<std::int64_t>(rng.below(50000)), n = static_cast<std::int64_t>(rng.below(50000));
        const auto shift = static_cast<std::int64_t>(rng.below(50000));
        const double a = dot(apply_rotary(q, m, 2e8), apply_rotary(k, n, 2e8));
        const double b = dot(apply_rotary(q, m + shift, 2e8), apply_rotary(k, n + shift, 2e8));
        EXPECT_LE(std::abs(a - b), 1e-6 * std::max(1.0, std::abs(a)));
    }
}

TEST(MinBase, BracketsTheTarget) {
    const auto b = min_base_for(81920, 128);
    ASSERT_TRUE(b);
    EXPECT_NEAR(*b / kMinBase81920, 1.0, 1e-4);
    const double lam = wavelength(*b, 128, 63);
    EXPECT_GE(lam, 81920.0);
    EXPECT_LE(lam, 81921.0);
    EXPECT_FALSE(min_base_for(100, 2));
    EXPECT_TRUE(min_base_for(6, 2));
}

TEST(Plan, ReportsCoverageAndSufficiency) {
    const auto r = plan_extension(RopePlan{});
    EXPECT_EQ(r.coverage_old, 17u);
    EXPECT_EQ(r.coverage_new, 32u);
    EXPECT_TRUE(r.old_base_sufficient);
    EXPECT_TRUE(r.new_base_sufficient);
    EXPECT_NE(r.findings[0].find("17/64 at base 500000, 32/64 at base 200000000"), std::string::npos);
    const auto csv = r.to_csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 65);

    RopePlan low;
    low.base_new = 1000;
    low.base_old = 1000;
    const auto lr = plan_extension(low);
    EXPECT_FALSE(lr.new_base_sufficient);
    EXPECT_NE(lr.to_json().dump().find("insufficient top-frequency wavelength"), std::string::npos);

    RopePlan same;
    same.target_len = same.native_len;
    same.base_new = same.base_old;
    EXPECT_FALSE(plan_extension(same).extension_needed);

    RopePlan bad;
    bad.target_len = 10;
    EXPECT_THROW(plan_extension(bad), PreconditionError);
}
