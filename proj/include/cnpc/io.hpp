#ifndef CNPC_IO_HPP_
#define CNPC_IO_HPP_

#include <string>
#include <string_view>

#include <json.hpp>

namespace cnpc {

// Deterministic JSON text: keys sorted, two-space indent, arrays of scalars
// kept on one line, floating-point values with 17 significant digits.
std::string canonical_dump(const nlohmann::json& value);

std::string format_double(double value);
// Shortest text that reads back to the same double; used for reports.
std::string format_short(double value);

std::string sha256_hex(std::string_view bytes);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

// Parses JSON, translating parser failures into ValidationError.
nlohmann::json parse_json(std::string_view text, std::string_view what);

}  // namespace cnpc

#endif  // CNPC_IO_HPP_
