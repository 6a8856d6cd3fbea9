#include "doctest.h"
#include "quali/error.hpp"
#include "quali/office.hpp"
#include "test_support.hpp"

using namespace quali;
using quali::testing::make_docx;
using quali::testing::make_xlsx;
using quali::testing::make_zip;

TEST_CASE("zip entries stored and deflated") {
    const auto zip = make_zip({{"a.txt", "hello", false}, {"b.txt", std::string(5000, 'z'), true}});
    const auto entries = office::read_zip(zip);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].name == "a.txt");
    CHECK(entries[0].data == "hello");
    CHECK(entries[1].data == std::string(5000, 'z'));
}

TEST_CASE("non-zip bytes are rejected") {
    CHECK_THROWS_AS(office::read_zip("not a zip at all, just some text"), Error);
    try {
        office::read_zip("short");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::format_mismatch);
    }
}

TEST_CASE("first worksheet follows the workbook relationships") {
    const auto xlsx = make_xlsx({{"speaker", "message"}, {"P1", "Hello & welcome"}, {"P2", "Fine <really>"}});
    const auto rows = office::read_first_worksheet(xlsx);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == csv::Row{"speaker", "message"});
    CHECK(rows[1] == csv::Row{"P1", "Hello & welcome"});
    CHECK(rows[2] == csv::Row{"P2", "Fine <really>"});
}

TEST_CASE("missing cells are padded") {
    const auto xlsx = make_xlsx({{"a", "b", "c"}, {"1", "", "3"}, {"x"}}, false);
    const auto rows = office::read_first_worksheet(xlsx);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1] == csv::Row{"1", "", "3"});
    CHECK(rows[2] == csv::Row{"x", "", ""});
}

TEST_CASE("docx paragraphs become blank-line separated blocks") {
    const auto docx = make_docx({"Interviewer: How was it?", "", "P1: It was good."});
    const auto text = office::docx_to_plain_text(docx);
    CHECK(text.find("Interviewer: How was it?") != std::string::npos);
    CHECK(text.find("\n\nP1: It was good.") != std::string::npos);
}

TEST_CASE("a docx without a document part is rejected") {
    const auto zip = make_zip({{"other.xml", "<x/>", false}});
    CHECK_THROWS_AS(office::docx_to_plain_text(zip), Error);
}
