#include <doctest.h>

#include <algorithm>
#include <set>

#include "apcvfl/error.hpp"
#include "apcvfl/rng.hpp"
#include "apcvfl/tensor.hpp"

using namespace apcvfl;

TEST_SUITE("tensor") {
  TEST_CASE("construction and element access") {
    const Tensor2D t = Tensor2D::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 2) == 6.0F);
    CHECK(t.row(1)[0] == 4.0F);
    CHECK(Tensor2D::identity(3)(2, 2) == 1.0F);
    CHECK(Tensor2D::identity(3)(0, 2) == 0.0F);
    CHECK_THROWS_AS(Tensor2D(2, 2, std::vector<float>{1, 2, 3}), ContractError);
    CHECK_THROWS_AS(Tensor2D::from_rows({{1, 2}, {3}}), ContractError);
  }

  TEST_CASE("gather and concatenate") {
    const Tensor2D t = Tensor2D::from_rows({{1, 2}, {3, 4}, {5, 6}});
    const std::vector<std::size_t> rows = {2, 0, 2};
    CHECK(gather_rows(t, rows) == Tensor2D::from_rows({{5, 6}, {1, 2}, {5, 6}}));
    const std::vector<std::size_t> bad = {3};
    CHECK_THROWS_AS(gather_rows(t, bad), ContractError);

    const Tensor2D c = concat_cols(t, Tensor2D::from_rows({{7}, {8}, {9}}));
    CHECK(c == Tensor2D::from_rows({{1, 2, 7}, {3, 4, 8}, {5, 6, 9}}));
    CHECK_THROWS_AS(concat_cols(t, Tensor2D(2, 1)), ContractError);

    const Tensor2D r = concat_rows(t, Tensor2D::from_rows({{0, 0}}));
    CHECK(r.rows() == 4);
    CHECK(r(3, 1) == 0.0F);
    CHECK_THROWS_AS(concat_rows(t, Tensor2D(1, 3)), ContractError);
  }

  TEST_CASE("finite check") {
    Tensor2D t(2, 2);
    CHECK(t.all_finite());
    t(1, 1) = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
  }

  TEST_CASE("derived seeds are stable and distinct per tag") {
    CHECK(derive_seed(7, "g1A") == derive_seed(7, "g1A"));
    CHECK(derive_seed(7, "g1A") != derive_seed(7, "g1P"));
    CHECK(derive_seed(7, "g1A") != derive_seed(8, "g1A"));
    // FNV-1a reference value for the empty string.
    CHECK(fnv1a64("") == 0xCBF29CE484222325ULL);
    CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
  }

  TEST_CASE("permutation and sampling") {
    Rng rng(3);
    auto p = permutation(50, rng);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);

    Rng a(11);
    Rng b(11);
    CHECK(sample_without_replacement(100, 10, a) == sample_without_replacement(100, 10, b));
    Rng c(12);
    const auto s = sample_without_replacement(100, 40, c);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 40);
    CHECK_THROWS_AS(sample_without_replacement(3, 4, c), ContractError);
  }
}
