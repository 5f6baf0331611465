#include "pw/io.hpp"

#include <bit>
#include <charconv>
#include <climits>
#include <fstream>
#include <sstream>

namespace pw {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw ConfigError(msg); }

const Json& require_key(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object()) bad(where + " must be an object");
    auto it = j.find(key);
    if (it == j.end()) bad(where + " is missing \"" + std::string(key) + "\"");
    return *it;
}

std::uint64_t get_uint(const Json& j, const char* key, const std::string& where) {
    const Json& v = require_key(j, key, where);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    bad("\"" + std::string(key) + "\" in " + where + " must be a nonnegative integer");
}

double get_number(const Json& j, const char* key, const std::string& where) {
    const Json& v = require_key(j, key, where);
    if (!v.is_number()) bad("\"" + std::string(key) + "\" in " + where + " must be a number");
    return v.get<double>();
}

std::string get_string(const Json& j, const char* key, const std::string& where) {
    const Json& v = require_key(j, key, where);
    if (!v.is_string()) bad("\"" + std::string(key) + "\" in " + where + " must be a string");
    return v.get<std::string>();
}

LatticePoint point_from(const Json& v, int d, const std::string& where) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(d))
        bad(where + " must be an array of " + std::to_string(d) + " integers");
    LatticePoint p;
    p.c.reserve(static_cast<std::size_t>(d));
    for (const auto& e : v) {
        if (!e.is_number_integer() && !e.is_number_unsigned())
            bad(where + " must contain only integers");
        p.c.push_back(e.get<Coord>());
    }
    return p;
}

}  // namespace

void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) bad(where + " must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const auto& k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) bad("unknown key \"" + item.key() + "\" in " + where);
    }
}

JumpLaw law_from_json(const Json& j, int d, bool require_centered) {
    std::string family = get_string(j, "family", "law");
    if (family == "table") {
        reject_unknown_keys(j, {"family", "entries"}, "table law");
        const Json& ents = require_key(j, "entries", "table law");
        if (!ents.is_array() || ents.empty())
            bad("\"entries\" in table law must be a nonempty array");
        std::vector<TableEntry> entries;
        entries.reserve(ents.size());
        for (const auto& e : ents) {
            reject_unknown_keys(e, {"jump", "prob"}, "table entry");
            TableEntry te;
            te.jump = point_from(require_key(e, "jump", "table entry"), d, "\"jump\"");
            te.prob = get_number(e, "prob", "table entry");
            entries.push_back(std::move(te));
        }
        return require_centered ? make_table_law(std::move(entries))
                                : make_table_row(std::move(entries));
    }
    if (family == "axis_power_tail") {
        reject_unknown_keys(j, {"family", "beta", "hold", "cutoff"}, "axis law");
        double beta = get_number(j, "beta", "axis law");
        double hold = j.contains("hold") ? get_number(j, "hold", "axis law") : 0.0;
        std::optional<Coord> cutoff;
        if (j.contains("cutoff")) {
            std::uint64_t c = get_uint(j, "cutoff", "axis law");
            if (c < 1) bad("\"cutoff\" must be at least 1");
            cutoff = static_cast<Coord>(c);
        }
        // A cutoff makes the row bounded, so the base-law factory serves both
        // roles; unbounded override rows may take beta all the way down to 1.
        if (require_centered || cutoff) return make_axis_power_tail_law(d, beta, hold, cutoff);
        return make_impurity_tail_law(d, beta, hold);
    }
    if (family == "product_lazy") {
        reject_unknown_keys(j, {"family"}, "product-lazy law");
        return make_product_lazy_law(d);
    }
    bad("unknown law family \"" + family + "\"");
}

Json law_to_json(const JumpLaw& law) {
    Json j = Json::object();
    switch (law.family) {
        case LawFamily::ProductLazy:
            j["family"] = "product_lazy";
            return j;
        case LawFamily::Table: {
            j["family"] = "table";
            Json arr = Json::array();
            for (const auto& e : law.entries) {
                Json ej = Json::object();
                ej["jump"] = e.jump.c;
                ej["prob"] = e.prob;
                arr.push_back(std::move(ej));
            }
            j["entries"] = std::move(arr);
            return j;
        }
        case LawFamily::AxisPowerTail: {
            j["family"] = "axis_power_tail";
            j["beta"] = law.beta;
            j["hold"] = law.hold;
            if (law.tail_cutoff) j["cutoff"] = *law.tail_cutoff;
            return j;
        }
    }
    throw InvalidSpec("unserializable law family");
}

WalkSpec walk_from_json(const Json& j, std::uint64_t seed) {
    reject_unknown_keys(j, {"d", "base", "impurities", "start", "horizon", "record"},
                        "walk");
    std::uint64_t d_raw = get_uint(j, "d", "walk");
    if (d_raw < 2 || d_raw > 64) bad("\"d\" must be between 2 and 64");
    int d = static_cast<int>(d_raw);
    JumpLaw base = law_from_json(require_key(j, "base", "walk"), d, true);
    ImpuritySet impurities;
    if (j.contains("impurities")) {
        const Json& arr = j.at("impurities");
        if (!arr.is_array()) bad("\"impurities\" must be an array");
        std::vector<ImpurityOverride> rows;
        rows.reserve(arr.size());
        for (const auto& e : arr) {
            reject_unknown_keys(e, {"site", "law"}, "impurity");
            ImpurityOverride row;
            row.site = point_from(require_key(e, "site", "impurity"), d, "\"site\"");
            row.law = law_from_json(require_key(e, "law", "impurity"), d, false);
            rows.push_back(std::move(row));
        }
        impurities = ImpuritySet(std::move(rows), d);
    }
    LatticePoint start = j.contains("start")
                             ? point_from(j.at("start"), d, "\"start\"")
                             : LatticePoint::zero(d);
    std::uint64_t horizon = get_uint(j, "horizon", "walk");
    RecordMode record = RecordMode::Summary;
    if (j.contains("record")) {
        std::string r = get_string(j, "record", "walk");
        if (r == "endpoint")
            record = RecordMode::EndpointOnly;
        else if (r == "summary")
            record = RecordMode::Summary;
        else if (r == "full")
            record = RecordMode::FullPath;
        else
            bad("\"record\" must be \"endpoint\", \"summary\", or \"full\"");
    }
    return make_walk_spec(std::move(base), std::move(impurities), std::move(start), horizon,
                          seed, record);
}

Json walk_to_json(const WalkSpec& spec) {
    Json j = Json::object();
    j["d"] = spec.d();
    j["base"] = law_to_json(spec.base);
    Json arr = Json::array();
    for (const auto& row : spec.impurities.rows()) {
        Json e = Json::object();
        e["site"] = row.site.c;
        e["law"] = law_to_json(row.law);
        arr.push_back(std::move(e));
    }
    j["impurities"] = std::move(arr);
    j["start"] = spec.start.c;
    j["horizon"] = spec.horizon;
    switch (spec.record) {
        case RecordMode::EndpointOnly: j["record"] = "endpoint"; break;
        case RecordMode::Summary: j["record"] = "summary"; break;
        case RecordMode::FullPath: j["record"] = "full"; break;
    }
    return j;
}

// --- CSV ----------------------------------------------------------------------

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string csv_to_string(const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    auto append_line = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) out.push_back(',');
            out += fields[i];
        }
        out.push_back('\n');
    };
    append_line(header);
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw InvalidSpec("csv row width differs from the header");
        append_line(row);
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) bad("cannot open \"" + path + "\" for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) bad("failed writing \"" + path + "\"");
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) bad("cannot open \"" + path + "\"");
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) bad("failed reading \"" + path + "\"");
    return ss.str();
}

// --- binary grids ---------------------------------------------------------------

namespace {

void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& s, std::int32_t v) {
    auto u = static_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
    const std::string& data;
    std::size_t off = 0;
    const std::string& name;

    void need(std::size_t n) const {
        if (off + n > data.size()) bad("\"" + name + "\" is truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data[off++]);
    }
    std::uint16_t u16() {
        std::uint16_t lo = u8(), hi = u8();
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    std::int32_t i32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return static_cast<std::int32_t>(v);
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void magic(const char* m) {
        need(4);
        if (data.compare(off, 4, m) != 0)
            bad("\"" + name + "\" is not a " + std::string(m) + " file");
        off += 4;
    }
};

}  // namespace

void write_path_file(const std::string& path, const std::vector<LatticePoint>& pts) {
    if (pts.empty()) throw InvalidSpec("a path file needs at least the start point");
    int d = pts.front().dim();
    if (d < 2 || d > 0xffff) throw InvalidSpec("path dimension out of range");
    std::string out;
    out.reserve(16 + pts.size() * static_cast<std::size_t>(d) * 4);
    out += "PWLK";
    put_u16(out, 1);
    put_u16(out, static_cast<std::uint16_t>(d));
    put_u64(out, static_cast<std::uint64_t>(pts.size() - 1));
    for (const auto& p : pts) {
        if (p.dim() != d) throw DimensionMismatch("path points of mixed dimension");
        for (Coord v : p.c) {
            if (v < INT32_MIN || v > INT32_MAX)
                throw InvalidSpec("path coordinate does not fit in 32 bits");
            put_i32(out, static_cast<std::int32_t>(v));
        }
    }
    write_text_file(path, out);
}

std::vector<LatticePoint> read_path_file(const std::string& path) {
    std::string data = read_text_file(path);
    ByteReader r{data, 0, path};
    r.magic("PWLK");
    std::uint16_t version = r.u16();
    if (version != 1) bad("\"" + path + "\" has unsupported version");
    std::uint16_t d = r.u16();
    std::uint64_t n = r.u64();
    if (d < 2) bad("\"" + path + "\" has dimension below 2");
    std::uint64_t expect = 16 + (n + 1) * d * 4;
    if (data.size() != expect) bad("\"" + path + "\" has the wrong size for its header");
    std::vector<LatticePoint> pts;
    pts.reserve(n + 1);
    for (std::uint64_t i = 0; i <= n; ++i) {
        LatticePoint p;
        p.c.reserve(d);
        for (std::uint16_t k = 0; k < d; ++k) p.c.push_back(r.i32());
        pts.push_back(std::move(p));
    }
    return pts;
}

void write_pmf_file(const std::string& path, const LatticePmf& pmf) {
    if (pmf.d < 2 || pmf.d > 0xffff) throw InvalidSpec("pmf dimension out of range");
    std::string out;
    out.reserve(16 + pmf.mass.size() * 8);
    out += "PPMF";
    put_u16(out, 1);
    put_u16(out, static_cast<std::uint16_t>(pmf.d));
    put_u64(out, static_cast<std::uint64_t>(pmf.radius));
    for (double v : pmf.mass) put_f64(out, v);
    write_text_file(path, out);
}

LatticePmf read_pmf_file(const std::string& path) {
    std::string data = read_text_file(path);
    ByteReader r{data, 0, path};
    r.magic("PPMF");
    std::uint16_t version = r.u16();
    if (version != 1) bad("\"" + path + "\" has unsupported version");
    std::uint16_t d = r.u16();
    std::uint64_t radius = r.u64();
    if (d < 2) bad("\"" + path + "\" has dimension below 2");
    std::uint64_t side = 2 * radius + 1, cells = 1;
    for (std::uint16_t i = 0; i < d; ++i) {
        if (cells > (100'000'000ULL / side)) bad("\"" + path + "\" box is implausibly large");
        cells *= side;
    }
    if (data.size() != 16 + cells * 8)
        bad("\"" + path + "\" has the wrong size for its header");
    LatticePmf pmf;
    pmf.d = d;
    pmf.radius = static_cast<Coord>(radius);
    pmf.mass.reserve(cells);
    KahanSum total;
    for (std::uint64_t i = 0; i < cells; ++i) {
        double v = r.f64();
        pmf.mass.push_back(v);
        total.add(v);
    }
    pmf.leaked = std::max(0.0, 1.0 - total.value());
    return pmf;
}

}  // namespace pw
