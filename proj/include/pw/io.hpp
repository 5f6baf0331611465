#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pw/engine.hpp"
#include "pw/oracle.hpp"

// Serialization: strict JSON for laws and walks, locale-free CSV, and the
// two little binary grid formats (paths and box pmfs).  "Strict" means an
// unknown key anywhere is a ConfigError naming the key -- typos must not
// silently fall back to defaults.

namespace pw {

using Json = nlohmann::ordered_json;

// Throws ConfigError when any key of j is not in `allowed`; `where` names the
// object in the message.
void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where);

// Law objects: {"family": "table" | "axis_power_tail" | "product_lazy", ...}
// with "entries": [{"jump": [..], "prob": p}, ...] for tables and "beta",
// "hold", "cutoff" for axis laws.  d comes from the enclosing walk object
// (table jumps must match it).  Base laws must be centered; override rows
// (require_centered = false) may have drift and may take beta down to 1.
JumpLaw law_from_json(const Json& j, int d, bool require_centered);
Json law_to_json(const JumpLaw& law);

// Walk objects: {"d", "base", "impurities": [{"site": [..], "law": {...}}],
// "start", "horizon", "record": "endpoint"|"summary"|"full"}.  The seed is
// not part of the walk object; it comes from the enclosing config.
WalkSpec walk_from_json(const Json& j, std::uint64_t seed);
Json walk_to_json(const WalkSpec& spec);

// --- CSV ---------------------------------------------------------------------

// Shortest-field-free formatting: 17 significant digits via std::to_chars,
// '.' decimal point regardless of locale.
std::string format_double(double x);

std::string csv_to_string(const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// --- binary grids -------------------------------------------------------------

// Path file: "PWLK", u16 version = 1, u16 d, u64 n (step count), then
// (n+1) * d little-endian int32 coordinates, X_0 first.  Writing a
// coordinate outside int32 range throws InvalidSpec.
void write_path_file(const std::string& path, const std::vector<LatticePoint>& pts);
std::vector<LatticePoint> read_path_file(const std::string& path);

// Pmf file: "PPMF", u16 version = 1, u16 d, u64 radius, then (2 radius + 1)^d
// little-endian float64 cells, row-major, last axis fastest.  Leaked mass is
// not stored; the reader recovers it as 1 - sum(cells).
void write_pmf_file(const std::string& path, const LatticePmf& pmf);
LatticePmf read_pmf_file(const std::string& path);

}  // namespace pw
