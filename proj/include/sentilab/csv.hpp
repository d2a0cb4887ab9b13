#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sentilab::csv {

using Row = std::vector<std::string>;

// RFC 4180: quoted fields, doubled quotes, CRLF or LF line ends, embedded
// newlines inside quotes. Each returned row carries its 1-based physical
// starting line in `lines` when provided.
std::vector<Row> parse(std::string_view text, std::vector<std::size_t>* lines = nullptr);

std::string quote(std::string_view field);

std::string join(const Row& row);

}  // namespace sentilab::csv
