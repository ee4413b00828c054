#include <doctest.h>

#include <cstdio>
#include <limits>
#include <string>

#include "apcvfl/error.hpp"
#include "apcvfl/footprint.hpp"

using namespace apcvfl;

namespace {

std::string two_decimals(double mb) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", mb);
  return buf;
}

}  // namespace

TEST_SUITE("footprint") {
  TEST_CASE("single-transmission cost at the tabulated alignment levels") {
    const std::pair<std::uint64_t, const char*> table[] = {
        {9500, "9.73"}, {7000, "7.17"}, {4500, "4.61"}, {2000, "2.05"},
        {200, "0.20"},  {150, "0.15"},  {100, "0.10"}};
    for (auto [d_a, printed] : table) {
      CHECK(footprint_apcvfl(d_a, 256) == d_a * 1024);
      CHECK(two_decimals(to_megabytes(footprint_apcvfl(d_a, 256))) == printed);
    }
  }

  TEST_CASE("split-learning closed form") {
    // 3 epochs, 10 rows, batch 4: 3 batches per epoch.
    const auto parts = footprint_splitnn_parts(3, 10, 256, 4, kPassiveLastLayerParams);
    CHECK(parts.forward == 3ULL * 10 * 256 * 4);
    CHECK(parts.backward == 3ULL * 3 * 33024 * 4);
    CHECK(footprint_splitnn(3, 10, 256, 4, kPassiveLastLayerParams) == parts.total());
    CHECK(kPassiveLastLayerParams == 33024);
    CHECK(footprint_splitnn(0, 10, 256, 4, 7) == 0);
    CHECK_THROWS_AS(footprint_splitnn(1, 10, 256, 0, 7), ContractError);
  }

  TEST_CASE("VFedTrans formula") {
    CHECK(footprint_vfedtrans(1, 1, 1) == 40);
    // Element count expanded by hand for d=3, x_t=2, x_d=1 (x=3):
    // 18 + 6 + 3 + 6 + 3 + 9 = 45.
    CHECK(footprint_vfedtrans(3, 2, 1) == 45 * 4);
    const double ratio = static_cast<double>(footprint_vfedtrans(9500, 5, 10)) /
                         static_cast<double>(footprint_apcvfl(9500, 256));
    CHECK(ratio > 60.0);
    CHECK(ratio < 90.0);
  }

  TEST_CASE("byte formatting and overflow") {
    CHECK(format_bytes(9728000) == "9728000 B (9.73 MB)");
    CHECK(format_bytes(40) == "40 B");
    CHECK(format_bytes(4999) == "4999 B");
    CHECK(format_bytes(5000) == "5000 B (0.01 MB)");
    CHECK_THROWS_AS(footprint_apcvfl(std::numeric_limits<std::uint64_t>::max() / 2, 256),
                    ContractError);
    CHECK_THROWS_AS(footprint_vfedtrans(std::uint64_t{1} << 32, 1, 1), ContractError);
  }
}
