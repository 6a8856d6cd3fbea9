#include "quali/office.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>

#include "quali/error.hpp"

namespace quali::office {

namespace {

[[noreturn]] void fail(const std::string& what) {
    throw Error(ErrorCode::format_mismatch, what);
}

std::uint32_t le32(std::string_view b, std::size_t at) {
    if (at + 4 > b.size()) fail("truncated zip archive");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
    return v;
}

std::uint16_t le16(std::string_view b, std::size_t at) {
    if (at + 2 > b.size()) fail("truncated zip archive");
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                      (static_cast<unsigned char>(b[at + 1]) << 8));
}

std::string inflate_raw(std::string_view compressed, std::size_t expected_size) {
    std::string out(expected_size, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) fail("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected_size) fail("corrupt deflate stream in zip entry");
    return out;
}

// ---- minimal XML pull scanner -------------------------------------------

struct XmlEvent {
    enum Kind { start, end, text, eof } kind = eof;
    std::string name;  // local name, namespace prefix removed
    std::map<std::string, std::string> attrs;
    bool self_closing = false;
    std::string content;
};

std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        const auto semi = s.find(';', i);
        if (semi == std::string_view::npos) {
            out.push_back('&');
            continue;
        }
        const auto ent = s.substr(i + 1, semi - i - 1);
        if (ent == "amp") out.push_back('&');
        else if (ent == "lt") out.push_back('<');
        else if (ent == "gt") out.push_back('>');
        else if (ent == "quot") out.push_back('"');
        else if (ent == "apos") out.push_back('\'');
        else if (!ent.empty() && ent[0] == '#') {
            std::uint32_t cp = 0;
            try {
                cp = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')
                         ? static_cast<std::uint32_t>(std::stoul(std::string(ent.substr(2)), nullptr, 16))
                         : static_cast<std::uint32_t>(std::stoul(std::string(ent.substr(1))));
            } catch (const std::exception&) {
                fail("bad character reference in XML");
            }
            if (cp < 0x80) {
                out.push_back(static_cast<char>(cp));
            } else if (cp < 0x800) {
                out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            } else if (cp < 0x10000) {
                out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
                out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            } else {
                out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
                out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            }
        } else {
            out.append(s.substr(i, semi - i + 1));
        }
        i = semi;
    }
    return out;
}

std::string local_name(std::string_view qname) {
    const auto colon = qname.find(':');
    return std::string(colon == std::string_view::npos ? qname : qname.substr(colon + 1));
}

class XmlScanner {
public:
    explicit XmlScanner(std::string_view doc) : doc_(doc) {}

    XmlEvent next() {
        for (;;) {
            if (pos_ >= doc_.size()) return {};
            if (doc_[pos_] != '<') {
                const auto lt = doc_.find('<', pos_);
                const auto raw = doc_.substr(pos_, lt == std::string_view::npos ? lt : lt - pos_);
                pos_ = lt == std::string_view::npos ? doc_.size() : lt;
                XmlEvent ev;
                ev.kind = XmlEvent::text;
                ev.content = decode_entities(raw);
                return ev;
            }
            if (doc_.substr(pos_).starts_with("<?")) {
                skip_past("?>");
                continue;
            }
            if (doc_.substr(pos_).starts_with("<!--")) {
                skip_past("-->");
                continue;
            }
            if (doc_.substr(pos_).starts_with("<![CDATA[")) {
                const auto begin = pos_ + 9;
                const auto close = doc_.find("]]>", begin);
                if (close == std::string_view::npos) fail("unterminated CDATA");
                XmlEvent ev;
                ev.kind = XmlEvent::text;
                ev.content = std::string(doc_.substr(begin, close - begin));
                pos_ = close + 3;
                return ev;
            }
            if (doc_.substr(pos_).starts_with("<!")) {
                skip_past(">");
                continue;
            }
            return read_tag();
        }
    }

private:
    void skip_past(std::string_view marker) {
        const auto at = doc_.find(marker, pos_);
        if (at == std::string_view::npos) fail("malformed XML");
        pos_ = at + marker.size();
    }

    XmlEvent read_tag() {
        const auto close = doc_.find('>', pos_);
        if (close == std::string_view::npos) fail("unterminated XML tag");
        auto body = doc_.substr(pos_ + 1, close - pos_ - 1);
        pos_ = close + 1;
        XmlEvent ev;
        if (!body.empty() && body.front() == '/') {
            ev.kind = XmlEvent::end;
            ev.name = local_name(body.substr(1, body.find_first_of(" \t\r\n", 1) - 1));
            return ev;
        }
        ev.kind = XmlEvent::start;
        if (!body.empty() && body.back() == '/') {
            ev.self_closing = true;
            body.remove_suffix(1);
        }
        std::size_t i = body.find_first_of(" \t\r\n");
        ev.name = local_name(body.substr(0, i));
        while (i != std::string_view::npos && i < body.size()) {
            i = body.find_first_not_of(" \t\r\n", i);
            if (i == std::string_view::npos) break;
            const auto eq = body.find('=', i);
            if (eq == std::string_view::npos) break;
            auto key = body.substr(i, eq - i);
            while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.remove_suffix(1);
            const auto q = body.find_first_of("\"'", eq);
            if (q == std::string_view::npos) fail("malformed XML attribute");
            const auto qend = body.find(body[q], q + 1);
            if (qend == std::string_view::npos) fail("malformed XML attribute");
            ev.attrs[std::string(key)] = decode_entities(body.substr(q + 1, qend - q - 1));
            i = qend + 1;
        }
        return ev;
    }

    std::string_view doc_;
    std::size_t pos_ = 0;
};

std::optional<std::string> attr_with_suffix(const XmlEvent& ev, std::string_view suffix) {
    for (const auto& [k, v] : ev.attrs) {
        if (k == suffix || (k.size() > suffix.size() && k.ends_with(suffix) &&
                            k[k.size() - suffix.size() - 1] == ':')) {
            return v;
        }
    }
    return std::nullopt;
}

const std::string* find_entry(const std::vector<ZipEntry>& entries, std::string_view name) {
    for (const auto& e : entries) {
        if (e.name == name) return &e.data;
    }
    return nullptr;
}

std::vector<std::string> read_shared_strings(std::string_view xml) {
    std::vector<std::string> out;
    XmlScanner sc(xml);
    std::string current;
    bool in_si = false;
    bool in_t = false;
    int phonetic_depth = 0;
    for (auto ev = sc.next(); ev.kind != XmlEvent::eof; ev = sc.next()) {
        if (ev.kind == XmlEvent::start) {
            if (ev.name == "si" && !ev.self_closing) {
                in_si = true;
                current.clear();
            } else if (ev.name == "si") {
                out.emplace_back();
            } else if (ev.name == "rPh" && !ev.self_closing) {
                ++phonetic_depth;
            } else if (ev.name == "t" && !ev.self_closing) {
                in_t = true;
            }
        } else if (ev.kind == XmlEvent::end) {
            if (ev.name == "si") {
                out.push_back(current);
                in_si = false;
            } else if (ev.name == "rPh") {
                --phonetic_depth;
            } else if (ev.name == "t") {
                in_t = false;
            }
        } else if (ev.kind == XmlEvent::text && in_si && in_t && phonetic_depth == 0) {
            current += ev.content;
        }
    }
    return out;
}

std::size_t column_index(std::string_view cell_ref) {
    std::size_t col = 0;
    std::size_t letters = 0;
    for (char c : cell_ref) {
        if (c >= 'A' && c <= 'Z') {
            col = col * 26 + static_cast<std::size_t>(c - 'A' + 1);
            ++letters;
        } else if (c >= 'a' && c <= 'z') {
            col = col * 26 + static_cast<std::size_t>(c - 'a' + 1);
            ++letters;
        } else {
            break;
        }
    }
    if (letters == 0) fail("bad cell reference '" + std::string(cell_ref) + "'");
    return col - 1;
}

std::string first_sheet_path(const std::vector<ZipEntry>& entries) {
    const auto* workbook = find_entry(entries, "xl/workbook.xml");
    const auto* rels = find_entry(entries, "xl/_rels/workbook.xml.rels");
    if (workbook && rels) {
        std::optional<std::string> rid;
        XmlScanner wb(*workbook);
        for (auto ev = wb.next(); ev.kind != XmlEvent::eof; ev = wb.next()) {
            if (ev.kind == XmlEvent::start && ev.name == "sheet") {
                rid = attr_with_suffix(ev, "id");
                break;
            }
        }
        if (rid) {
            XmlScanner rs(*rels);
            for (auto ev = rs.next(); ev.kind != XmlEvent::eof; ev = rs.next()) {
                if (ev.kind != XmlEvent::start || ev.name != "Relationship") continue;
                if (ev.attrs["Id"] != *rid) continue;
                std::string target = ev.attrs["Target"];
                if (target.starts_with("/")) return target.substr(1);
                return "xl/" + target;
            }
        }
    }
    return "xl/worksheets/sheet1.xml";
}

}  // namespace

std::vector<ZipEntry> read_zip(std::string_view b) {
    constexpr std::uint32_t kEocd = 0x06054b50;
    constexpr std::uint32_t kCentral = 0x02014b50;
    constexpr std::uint32_t kLocal = 0x04034b50;
    if (b.size() < 22) fail("not a zip archive");
    std::size_t eocd = std::string_view::npos;
    const std::size_t lowest = b.size() > 22 + 65535 ? b.size() - 22 - 65535 : 0;
    for (std::size_t at = b.size() - 22 + 1; at-- > lowest;) {
        if (le32(b, at) == kEocd) {
            eocd = at;
            break;
        }
    }
    if (eocd == std::string_view::npos) fail("not a zip archive (no end of central directory)");
    const std::uint16_t count = le16(b, eocd + 10);
    std::size_t at = le32(b, eocd + 16);
    std::vector<ZipEntry> entries;
    entries.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i) {
        if (le32(b, at) != kCentral) fail("corrupt zip central directory");
        const auto method = le16(b, at + 10);
        const auto csize = le32(b, at + 20);
        const auto usize = le32(b, at + 24);
        const auto name_len = le16(b, at + 28);
        const auto extra_len = le16(b, at + 30);
        const auto comment_len = le16(b, at + 32);
        const auto local = le32(b, at + 42);
        if (csize == 0xFFFFFFFFu || usize == 0xFFFFFFFFu || local == 0xFFFFFFFFu) {
            fail("zip64 archives are not supported");
        }
        if (at + 46 + name_len > b.size()) fail("truncated zip archive");
        ZipEntry entry;
        entry.name = std::string(b.substr(at + 46, name_len));
        at += 46 + name_len + extra_len + comment_len;

        if (le32(b, local) != kLocal) fail("corrupt zip local header");
        const auto data_at = local + 30 + le16(b, local + 26) + le16(b, local + 28);
        if (data_at + csize > b.size()) fail("truncated zip entry");
        const auto payload = b.substr(data_at, csize);
        if (method == 0) {
            entry.data = std::string(payload);
        } else if (method == 8) {
            entry.data = inflate_raw(payload, usize);
        } else {
            fail("unsupported zip compression method " + std::to_string(method));
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<csv::Row> read_first_worksheet(std::string_view xlsx_bytes) {
    const auto entries = read_zip(xlsx_bytes);
    std::vector<std::string> shared;
    if (const auto* ss = find_entry(entries, "xl/sharedStrings.xml")) shared = read_shared_strings(*ss);
    const auto sheet_path = first_sheet_path(entries);
    const auto* sheet = find_entry(entries, sheet_path);
    if (!sheet) fail("workbook has no worksheet at " + sheet_path);

    std::vector<csv::Row> rows;
    XmlScanner sc(*sheet);
    csv::Row row;
    bool in_row = false;
    std::size_t next_col = 0;
    std::size_t cell_col = 0;
    std::string cell_type;
    std::string value;
    bool in_value = false;
    bool in_cell = false;
    std::size_t width = 0;

    auto store = [&](std::size_t col, std::string v) {
        if (row.size() <= col) row.resize(col + 1);
        row[col] = std::move(v);
    };

    for (auto ev = sc.next(); ev.kind != XmlEvent::eof; ev = sc.next()) {
        if (ev.kind == XmlEvent::start) {
            if (ev.name == "row") {
                in_row = !ev.self_closing;
                row.clear();
                next_col = 0;
                if (ev.self_closing) rows.emplace_back();
            } else if (ev.name == "c" && in_row) {
                auto ref = ev.attrs.find("r");
                cell_col = ref != ev.attrs.end() ? column_index(ref->second) : next_col;
                next_col = cell_col + 1;
                cell_type = ev.attrs.count("t") ? ev.attrs["t"] : "n";
                value.clear();
                in_cell = !ev.self_closing;
            } else if ((ev.name == "v" || ev.name == "t") && in_cell && !ev.self_closing) {
                in_value = true;
            }
        } else if (ev.kind == XmlEvent::end) {
            if (ev.name == "v" || ev.name == "t") {
                in_value = false;
            } else if (ev.name == "c" && in_cell) {
                in_cell = false;
                if (cell_type == "s") {
                    std::size_t idx = 0;
                    try {
                        idx = std::stoul(value);
                    } catch (const std::exception&) {
                        fail("bad shared string index");
                    }
                    if (idx >= shared.size()) fail("shared string index out of range");
                    store(cell_col, shared[idx]);
                } else {
                    store(cell_col, value);
                }
            } else if (ev.name == "row" && in_row) {
                in_row = false;
                width = std::max(width, row.size());
                rows.push_back(row);
            }
        } else if (ev.kind == XmlEvent::text && in_value) {
            value += ev.content;
        }
    }
    for (auto& r : rows) r.resize(width);
    return rows;
}

std::string docx_to_plain_text(std::string_view docx_bytes) {
    const auto entries = read_zip(docx_bytes);
    const auto* doc = find_entry(entries, "word/document.xml");
    if (!doc) fail("not a Word document (word/document.xml missing)");
    std::string out;
    std::string para;
    bool in_text = false;
    XmlScanner sc(*doc);
    for (auto ev = sc.next(); ev.kind != XmlEvent::eof; ev = sc.next()) {
        if (ev.kind == XmlEvent::start) {
            if (ev.name == "t" && !ev.self_closing) in_text = true;
            else if (ev.name == "tab") para.push_back('\t');
            else if (ev.name == "br" || ev.name == "cr") para.push_back('\n');
            else if (ev.name == "p" && ev.self_closing) para.clear();
        } else if (ev.kind == XmlEvent::end) {
            if (ev.name == "t") {
                in_text = false;
            } else if (ev.name == "p") {
                if (para.find_first_not_of(" \t\r\n") != std::string::npos) {
                    if (!out.empty()) out += "\n\n";
                    out += para;
                }
                para.clear();
            }
        } else if (ev.kind == XmlEvent::text && in_text) {
            para += ev.content;
        }
    }
    return out;
}

}  // namespace quali::office
