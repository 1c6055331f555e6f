#include <doctest.h>

#include "blpnet/wordmap.hpp"

using namespace blpnet;

namespace {

std::vector<Recognition> reading(const std::vector<std::pair<std::string, std::size_t>>& labels) {
  std::vector<Recognition> out;
  for (const auto& [l, row] : labels) out.push_back(Recognition{0, l, 1.0, row});
  return out;
}

}  // namespace

TEST_SUITE("wordmap") {
  TEST_CASE("key groups become words and digits are grouped") {
    const auto table = parse_table("# districts\nDM\tDHAKA METRO\nD\tDHAKA\n");
    CHECK(table.size() == 2);
    const auto r = reading({{"D", 0}, {"M", 0}, {"G", 0}, {"1", 1}, {"2", 1}, {"3", 1}, {"4", 1}});
    CHECK(map_plate(r, table) == "DHAKA METRO G 12-34");
  }

  TEST_CASE("single-row plates split off trailing digits") {
    const auto table = parse_table("D\tDHAKA\n");
    CHECK(map_plate(reading({{"D", 0}, {"1", 0}, {"2", 0}, {"3", 0}, {"4", 0}}), table) == "DHAKA 12-34");
  }

  TEST_CASE("an empty table passes the raw string through") {
    const auto table = parse_table("");
    CHECK(table.size() == 0);
    CHECK(map_plate(reading({{"X", 0}, {"1", 1}, {"2", 1}}), table) == "X12");
  }

  TEST_CASE("Bengali digits are digits") {
    CHECK(is_digit_label("১"));
    CHECK(is_digit_label("7"));
    CHECK_FALSE(is_digit_label("ক"));
    const auto table = parse_table("ক\tKA\n");
    const auto r = reading({{"ক", 0}, {"১", 1}, {"২", 1}, {"৩", 1}, {"৪", 1}});
    CHECK(map_plate(r, table) == "KA ১২-৩৪");
  }

  TEST_CASE("options change digit grouping") {
    const auto table = parse_table("@group_digits off\nD\tDHAKA\n");
    CHECK_FALSE(table.group_digits);
    CHECK(map_plate(reading({{"D", 0}, {"1", 1}, {"2", 1}, {"3", 1}, {"4", 1}}), table) == "DHAKA 1234");
    const auto sep = parse_table("@digit_separator /\n@group_after 1\nD\tDHAKA\n");
    CHECK(map_plate(reading({{"D", 0}, {"1", 1}, {"2", 1}, {"3", 1}, {"4", 1}}), sep) == "DHAKA 1/234");
  }

  TEST_CASE("duplicate keys report the offending line") {
    try {
      parse_table("A\tx\n\nA\ty\n");
      FAIL("expected an error");
    } catch (const WordMapError& e) {
      CHECK(e.kind() == WordMapError::Kind::DuplicateKey);
      CHECK(e.line() == 3);
    }
  }

  TEST_CASE("malformed lines are parse errors") {
    CHECK_THROWS_AS(parse_table("no tab here\n"), WordMapError);
    CHECK_THROWS_AS(parse_table("@group_after many\n"), WordMapError);
    CHECK_THROWS_AS(parse_table("@bogus 1\n"), WordMapError);
    try {
      load_table("/nonexistent/table.tsv");
      FAIL("expected an error");
    } catch (const WordMapError& e) {
      CHECK(e.kind() == WordMapError::Kind::Io);
    }
  }
}
