#include <random>

#include "doctest.h"
#include "quali/csv.hpp"
#include "quali/error.hpp"
#include "quali/text.hpp"
#include "test_support.hpp"

using namespace quali;

TEST_CASE("utf8 validation") {
    CHECK(text::is_valid_utf8(""));
    CHECK(text::is_valid_utf8("plain ascii"));
    CHECK(text::is_valid_utf8("caf\xC3\xA9 \xE2\x80\x94 \xF0\x9F\x98\x80"));
    CHECK_FALSE(text::is_valid_utf8("\xC3"));
    CHECK_FALSE(text::is_valid_utf8("\xC0\xAF"));
    CHECK_FALSE(text::is_valid_utf8("\xED\xA0\x80"));
    CHECK_FALSE(text::is_valid_utf8("\xF0\x9F\x98"));
    CHECK_FALSE(text::is_valid_utf8("\xFF"));
}

TEST_CASE("trim keeps interior bytes") {
    CHECK(text::trim("  a  b \t\n") == "a  b");
    CHECK(text::trim(" \r\n ").empty());
}

TEST_CASE("casefold and whitespace collapsing") {
    CHECK(text::casefold("Hello \xE2\x80\x9CWorld\xE2\x80\x9D") == "hello \"world\"");
    CHECK(text::casefold("It\xE2\x80\x99s") == "it's");
    CHECK(text::collapse_whitespace("  a \t\n b\xC2\xA0\xC2\xA0" "c  ") == "a b c");
}

TEST_CASE("edge punctuation stripping") {
    CHECK(text::strip_edge_punctuation("...I love it!") == "I love it");
    CHECK(text::strip_edge_punctuation("\xE2\x80\xA6 quoted \xE2\x80\xA6") == "quoted");
    CHECK(text::strip_edge_punctuation("\"it's fine,\"") == "it's fine");
    CHECK(text::strip_edge_punctuation("!!!").empty());
}

TEST_CASE("word counting") {
    CHECK(text::count_words("") == 0);
    CHECK(text::count_words("  one two\tthree\nfour ") == 4);
}

TEST_CASE("csv parse handles quoting") {
    const auto rows = csv::parse("a,b,c\r\n\"x, y\",\"say \"\"hi\"\"\",\"multi\nline\"\n1,,3");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == csv::Row{"a", "b", "c"});
    CHECK(rows[1] == csv::Row{"x, y", "say \"hi\"", "multi\nline"});
    CHECK(rows[2] == csv::Row{"1", "", "3"});
}

TEST_CASE("csv trailing newline does not add a record") {
    CHECK(csv::parse("a,b\n").size() == 1);
    CHECK(csv::parse("a,b\r\n1,2\r\n").size() == 2);
}

TEST_CASE("csv tab delimiter") {
    const auto rows = csv::parse("a\tb\n\"x\ty\"\tz\n", '\t');
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == csv::Row{"x\ty", "z"});
}

TEST_CASE("csv malformed input") {
    CHECK_THROWS_AS(csv::parse("a,\"unterminated\n"), Error);
    CHECK_THROWS_AS(csv::parse("a,b\"c\n"), Error);
}

TEST_CASE("csv escape and round trip") {
    CHECK(csv::escape_field("plain") == "plain");
    CHECK(csv::escape_field("a,b") == "\"a,b\"");
    CHECK(csv::escape_field("say \"x\"") == "\"say \"\"x\"\"\"");
    CHECK(csv::escape_field(" pad") == "\" pad\"");

    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        csv::Row row;
        const auto width = 1 + rng() % 5;
        for (std::size_t c = 0; c < width; ++c) row.push_back(testing::random_text(rng, rng() % 40));
        if (width == 1 && row[0].empty()) row[0] = "x";
        std::string out;
        csv::append_row(out, row);
        const auto back = csv::parse(out);
        REQUIRE(back.size() == 1);
        CHECK(back[0] == row);
    }
}
