#include "quali/text.hpp"

#include <array>
#include <cctype>
#include <cstdint>

namespace quali::text {

namespace {

// Multi-byte punctuation that may bracket a quote: ellipsis, typographic
// quotes, en/em dashes, guillemets.
constexpr std::array<std::string_view, 9> kWidePunct = {
    "\xE2\x80\xA6", "\xE2\x80\x98", "\xE2\x80\x99", "\xE2\x80\x9C", "\xE2\x80\x9D",
    "\xE2\x80\x93", "\xE2\x80\x94", "\xC2\xAB",     "\xC2\xBB",
};

constexpr std::string_view kNbsp = "\xC2\xA0";

bool starts_with_wide_punct(std::string_view s, std::size_t& len) {
    for (auto p : kWidePunct) {
        if (s.starts_with(p)) {
            len = p.size();
            return true;
        }
    }
    return false;
}

bool ends_with_wide_punct(std::string_view s, std::size_t& len) {
    for (auto p : kWidePunct) {
        if (s.ends_with(p)) {
            len = p.size();
            return true;
        }
    }
    return false;
}

}  // namespace

bool is_valid_utf8(std::string_view s) noexcept {
    std::size_t i = 0;
    const auto n = s.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= n) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        // Overlong forms, surrogates, and out-of-range code points.
        if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
            (extra == 3 && (cp < 0x10000 || cp > 0x10FFFF)) || (cp >= 0xD800 && cp <= 0xDFFF)) {
            return false;
        }
        i += extra + 1;
    }
    return true;
}

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

std::string_view trim(std::string_view s) noexcept {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string casefold(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c == 0xE2 && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x80) {
            const auto t = static_cast<unsigned char>(s[i + 2]);
            if (t == 0x98 || t == 0x99) {
                out.push_back('\'');
                i += 2;
                continue;
            }
            if (t == 0x9C || t == 0x9D) {
                out.push_back('"');
                i += 2;
                continue;
            }
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (is_space(s[i])) {
            pending_space = true;
            continue;
        }
        if (s.substr(i).starts_with(kNbsp)) {
            pending_space = true;
            ++i;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(s[i]);
    }
    return out;
}

std::string strip_edge_punctuation(std::string_view s) {
    for (;;) {
        const auto before = s.size();
        s = trim(s);
        std::size_t len = 0;
        if (!s.empty() && std::ispunct(static_cast<unsigned char>(s.front()))) {
            s.remove_prefix(1);
        } else if (starts_with_wide_punct(s, len)) {
            s.remove_prefix(len);
        }
        if (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) {
            s.remove_suffix(1);
        } else if (ends_with_wide_punct(s, len)) {
            s.remove_suffix(len);
        }
        if (s.size() == before) break;
    }
    return std::string(s);
}

std::size_t count_words(std::string_view s) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : s) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words;
}

bool iequals(std::string_view a, std::string_view b) noexcept {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

}  // namespace quali::text
