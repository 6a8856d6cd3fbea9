#include <random>
#include <set>

#include "doctest.h"
#include "quali/themeparse.hpp"
#include "test_support.hpp"

using namespace quali;
namespace qt = quali::testing;

namespace {

const std::string kHeader = "| Themes | Description | Quotes | Participant Count |\n|---|---|---|---|\n";

ThemeTable table_of(const ParseResult& r) {
    REQUIRE(std::holds_alternative<ThemeTable>(r));
    return std::get<ThemeTable>(r);
}

ParseFailure failure_of(const ParseResult& r) {
    REQUIRE(std::holds_alternative<ParseFailure>(r));
    return std::get<ParseFailure>(r);
}

std::string random_cell(std::mt19937_64& rng, bool allow_empty) {
    static const std::vector<std::string> pieces{"work", "home", " ", "|", "\\", "\"", ";", ",", "\n",
                                                  "caf\xC3\xA9", "\xE2\x80\x9C", "x", "Y", "-", "\\|", "\\n"};
    std::string s;
    const auto n = (allow_empty ? 0 : 1) + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
    while (!s.empty() && (s.front() == ' ' || s.front() == '\n')) s.erase(s.begin());
    while (!s.empty() && (s.back() == ' ' || s.back() == '\n')) s.pop_back();
    if (!allow_empty && s.empty()) s = "t";
    return s;
}

}  // namespace

TEST_CASE("two well-formed rows") {
    const auto raw = "Sure, here is the table.\n\n" + kHeader +
                     "| Flexibility | Control over hours | \"I can shape my day\"; \"I decide\" | 3 |\n"
                     "| Isolation | Missing colleagues | \"I feel lonely\" | 2 |\n\nHope this helps.";
    const auto& t = table_of(parse_theme_table(raw, 2));
    REQUIRE(t.entries.size() == 2);
    CHECK(t.entries[0].theme == "Flexibility");
    CHECK(t.entries[0].description == "Control over hours");
    REQUIRE(t.entries[0].quotes.size() == 2);
    CHECK(t.entries[0].quotes[1].text == "I decide");
    CHECK(t.entries[0].participant_count == 3);
    CHECK(t.entries[1].quotes[0].text == "I feel lonely");
}

TEST_CASE("row count mismatch carries the parsed rows") {
    const auto raw = kHeader + "| A | a | \"x\" | 1 |\n| B | b | \"y\" | 1 |\n";
    const auto& f = failure_of(parse_theme_table(raw, 3));
    CHECK(f.error.kind == ErrorKind::count_mismatch);
    REQUIRE(f.partial);
    CHECK(f.partial->entries.size() == 2);
}

TEST_CASE("malformed tables are format errors") {
    CHECK(failure_of(parse_theme_table(kHeader + "| A | a | 1 |\n", 1)).error.kind == ErrorKind::format_error);
    CHECK(failure_of(parse_theme_table(kHeader + "| A | a | \"x\" | many |\n", 1)).error.kind ==
          ErrorKind::format_error);
    CHECK(failure_of(parse_theme_table(kHeader + "|  | a | \"x\" | 1 |\n", 1)).error.kind ==
          ErrorKind::format_error);
    CHECK(failure_of(parse_theme_table(kHeader + "| A | a | \"x\" | 1 |\n| a | b | \"y\" | 2 |\n", 2)).error.kind ==
          ErrorKind::format_error);
    CHECK(failure_of(parse_theme_table("no table here", 1)).error.kind == ErrorKind::format_error);
    CHECK(failure_of(parse_theme_table("   ", 1)).error.kind == ErrorKind::format_error);
}

TEST_CASE("header is case- and order-tolerant") {
    const auto raw = "| participant count | QUOTES | themes | description |\n| --- | --- | --- | --- |\n"
                     "| 4 | \"q\" | Theme A | Desc |\n";
    const auto& t = table_of(parse_theme_table(raw, 1));
    CHECK(t.entries[0].theme == "Theme A");
    CHECK(t.entries[0].participant_count == 4);
    CHECK(t.entries[0].description == "Desc");
}

TEST_CASE("a header missing any required column is never accepted") {
    const std::vector<std::string> cols{"Themes", "Description", "Quotes", "Participant Count"};
    for (std::size_t drop = 0; drop < cols.size(); ++drop) {
        std::string header = "|";
        std::string row = "|";
        for (std::size_t c = 0; c < cols.size(); ++c) {
            header += " " + (c == drop ? std::string("Notes") : cols[c]) + " |";
            row += c == 3 ? " 1 |" : " \"v\" |";
        }
        const auto r = parse_theme_table(header + "\n|---|---|---|---|\n" + row + "\n", 1);
        CHECK(failure_of(r).error.kind == ErrorKind::format_error);
    }
    const auto extra = parse_theme_table(
        "| Themes | Description | Quotes | Participant Count | Notes |\n| T | d | \"q\" | 1 | n |\n", 1);
    CHECK(std::holds_alternative<ParseFailure>(extra));
}

TEST_CASE("escaped pipes and curly quotes") {
    const auto raw = kHeader + "| Tools \\| apps | a\\|b | \xE2\x80\x9C" "curly quote\xE2\x80\x9D; \"plain\" | 2 |\n";
    const auto& t = table_of(parse_theme_table(raw, 1));
    CHECK(t.entries[0].theme == "Tools | apps");
    CHECK(t.entries[0].description == "a|b");
    REQUIRE(t.entries[0].quotes.size() == 2);
    CHECK(t.entries[0].quotes[0].text == "curly quote");
}

TEST_CASE("unquoted quote cells split on semicolons") {
    const auto& t = table_of(parse_theme_table(kHeader + "| A | d | first bit; second bit ; | 1 |\n", 1));
    REQUIRE(t.entries[0].quotes.size() == 2);
    CHECK(t.entries[0].quotes[1].text == "second bit");
}

TEST_CASE("the table ends at the first non-table line") {
    const auto raw = kHeader + "| A | a | \"x\" | 1 |\nThat is all.\n| B | b | \"y\" | 1 |\n";
    CHECK(table_of(parse_theme_table(raw, 1)).entries.size() == 1);
}

TEST_CASE("parse after render is the identity") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        ThemeTable t;
        std::set<std::string> seen;
        const auto rows = rng() % 8;
        for (std::size_t i = 0; i < rows; ++i) {
            ThemeEntry e;
            e.theme = random_cell(rng, false) + " " + std::to_string(i);
            if (!seen.insert(normalize_theme(e.theme)).second) continue;
            e.description = random_cell(rng, true);
            for (std::size_t q = 0; q < 1 + rng() % 3; ++q) e.quotes.push_back({random_cell(rng, true), std::nullopt});
            e.participant_count = rng() % 100;
            t.entries.push_back(e);
        }
        const auto rendered = render_pipe_table(t);
        const auto parsed = parse_theme_table(rendered, t.entries.size());
        REQUIRE(std::holds_alternative<ThemeTable>(parsed));
        const auto& back = std::get<ThemeTable>(parsed);
        REQUIRE(back.entries.size() == t.entries.size());
        for (std::size_t i = 0; i < t.entries.size(); ++i) {
            CHECK(back.entries[i].theme == t.entries[i].theme);
            CHECK(back.entries[i].description == t.entries[i].description);
            CHECK(back.entries[i].quotes == t.entries[i].quotes);
            CHECK(back.entries[i].participant_count == t.entries[i].participant_count);
        }
    }
}

TEST_CASE("normalization") {
    CHECK(normalize_quote("  \"...I  LOVE\tthe flexibility!\"  ") == "i love the flexibility");
    CHECK(normalize_record_text("Honestly,  I love\nit.") == "honestly, i love it.");
    CHECK(normalize_theme("  Work  Life ") == "work life");
}

TEST_CASE("quote verification") {
    const auto ds = qt::make_dataset({{"P1", "We started at nine."},
                                      {"P2", "...honestly, I love the flexibility of remote work..."},
                                      {"P3", "I love the flexibility too"}});
    ThemeTable t;
    t.entries.push_back({"Flex", "d", {{"I love the flexibility", std::nullopt}}, 1, std::nullopt});
    t.entries.push_back({"Start", "d", {{"We started at nine.", std::nullopt}, {"Made up words", std::nullopt}}, 2,
                         std::nullopt});
    const auto report = verify_quotes(t, ds);

    // oracle: lower-case, collapse spaces and strip edge punctuation, then look for a substring
    auto norm = [](std::string s) {
        std::string out;
        for (char c : s) {
            const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (std::isspace(static_cast<unsigned char>(l))) {
                if (!out.empty() && out.back() != ' ') out += ' ';
            } else {
                out += l;
            }
        }
        while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) || out.back() == ' ')) out.pop_back();
        std::size_t b = 0;
        while (b < out.size() && (std::ispunct(static_cast<unsigned char>(out[b])) || out[b] == ' ')) ++b;
        return out.substr(b);
    };
    std::optional<std::string> expected;
    for (const auto& r : ds.records) {
        std::string rec;
        for (char c : r.text) rec += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (rec.find(norm("I love the flexibility")) != std::string::npos) {
            expected = r.record_id;
            break;
        }
    }
    REQUIRE(expected == "r1");
    CHECK(t.entries[0].quotes[0].matched_record_id == expected);
    CHECK(t.entries[1].quotes[0].matched_record_id == "r0");
    CHECK_FALSE(t.entries[1].quotes[1].matched_record_id);
    CHECK(report.verified == 2);
    REQUIRE(report.unmatched.size() == 1);
    CHECK(report.unmatched[0] == std::make_pair(std::string("Start"), std::string("Made up words")));
    CHECK(report.verification_rate == doctest::Approx(2.0 / 3.0));
    CHECK(report.total() == 3);
}

TEST_CASE("a whole-record quote and empty tables") {
    const auto ds = qt::make_dataset({{"A", "Exactly this."}});
    ThemeTable t;
    t.entries.push_back({"T", "", {{"Exactly this.", std::nullopt}, {"", std::nullopt}}, 0, std::nullopt});
    const auto r = verify_quotes(t, ds);
    CHECK(t.entries[0].quotes[0].matched_record_id == "r0");
    CHECK(r.verified == 1);
    CHECK(r.unmatched.size() == 1);

    ThemeTable empty;
    const auto e = verify_quotes(empty, ds);
    CHECK(e.total() == 0);
    CHECK(e.verification_rate == 1.0);
}

TEST_CASE("verification is monotone in the dataset") {
    std::mt19937_64 rng(3);
    const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "eps"};
    auto sentence = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + vocab[rng() % vocab.size()];
        return s;
    };
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<std::string, std::string>> rows;
        for (std::size_t i = 0; i < 1 + rng() % 5; ++i) rows.push_back({"S", sentence(3 + rng() % 6)});
        ThemeTable t;
        ThemeEntry e;
        e.theme = "T";
        for (std::size_t q = 0; q < 1 + rng() % 5; ++q) e.quotes.push_back({sentence(1 + rng() % 3), std::nullopt});
        t.entries.push_back(e);

        auto small = t;
        const auto before = verify_quotes(small, qt::make_dataset(rows));
        for (std::size_t i = 0; i < 1 + rng() % 4; ++i) rows.push_back({"S", sentence(3 + rng() % 6)});
        auto large = t;
        const auto after = verify_quotes(large, qt::make_dataset(rows));
        CHECK(after.verification_rate >= before.verification_rate);
    }
}

TEST_CASE("participant recount") {
    const auto ds = qt::make_dataset({{"P1", "one"}, {"P2", "two"}, {"P1", "three"}, {"", "four"}});
    ThemeTable t;
    t.entries.push_back({"T", "", {{"one", {}}, {"two", {}}, {"three", {}}, {"four", {}}}, 9, std::nullopt});
    t.entries.push_back({"U", "", {{"nothing like it", {}}}, 5, std::nullopt});
    verify_quotes(t, ds);
    recount_participants(t, ds);
    CHECK(t.entries[0].participant_count == 2);
    CHECK(t.entries[0].claimed_count == 9u);
    CHECK(t.entries[1].participant_count == 0);
    CHECK(t.entries[1].claimed_count == 5u);
    recount_participants(t, ds);
    CHECK(t.entries[0].claimed_count == 9u);
}

TEST_CASE("recount never exceeds the distinct speaker count") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<std::string, std::string>> rows;
        const auto n = 1 + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) rows.push_back({"S" + std::to_string(rng() % 6), "text " + std::to_string(i) + " end"});
        const auto ds = qt::make_dataset(rows);
        ThemeTable t;
        ThemeEntry e;
        e.theme = "T";
        for (std::size_t q = 0; q < rng() % 30; ++q) e.quotes.push_back({"text " + std::to_string(rng() % (n + 3)) + " end", {}});
        e.participant_count = rng() % 50;
        t.entries.push_back(e);
        verify_quotes(t, ds);
        recount_participants(t, ds);
        CHECK(t.entries[0].participant_count <= ds.speaker_labels().size());
    }
}
