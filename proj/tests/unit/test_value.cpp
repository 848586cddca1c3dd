#include <doctest.h>

#include "sparta/value.hpp"

using namespace sparta;

TEST_CASE("reals keep a decimal point in plain text") {
  CHECK(to_text(Value{3.0}) == "3.0");
  CHECK(to_text(Value{0.452}) == "0.452");
  CHECK(to_text(Value{std::int64_t{25}}) == "25");
  CHECK(to_text(Value{}) == "NULL");
}

TEST_CASE("canonical text uses six significant digits") {
  CHECK(canonical_text(Value{1.0 / 3.0}) == "0.333333");
  CHECK(canonical_text(Value{123456789.0}) == "1.23457e+08");
  CHECK(canonical_text(Value{2.0}) == "2");
  CHECK(canonical_text(Value{std::string("x")}) == "x");
  CHECK(std::get<double>(canonicalize(Value{0.1234567})) == doctest::Approx(0.123457));
}

TEST_CASE("sql literals escape quotes") {
  CHECK(to_sql_literal(Value{std::string("O'Neal")}) == "'O''Neal'");
  CHECK(to_sql_literal(Value{std::int64_t{-4}}) == "-4");
}

TEST_CASE("json round trip preserves the variant") {
  for (const Value& v : {Value{}, Value{std::int64_t{7}}, Value{2.5}, Value{std::string("a")}})
    CHECK(value_from_json(to_json(v)) == v);
}

TEST_CASE("comparison orders null before numbers before text") {
  CHECK(compare_values(Value{}, Value{std::int64_t{1}}) < 0);
  CHECK(compare_values(Value{std::int64_t{2}}, Value{1.5}) > 0);
  CHECK(compare_values(Value{std::int64_t{2}}, Value{std::string("1")}) < 0);
  CHECK(compare_values(Value{std::string("b")}, Value{std::string("a")}) > 0);
  CHECK(compare_values(Value{std::int64_t{3}}, Value{3.0}) == 0);
}
