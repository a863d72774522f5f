#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace curator::csv {

using Row = std::vector<std::string>;

/// Quotes a field when it contains a comma, quote, or line break.
std::string escape(std::string_view field);
std::string format_row(const Row& row);

struct Table {
  Row header;
  std::vector<Row> rows;

  /// Column index by header name; throws if absent.
  std::size_t column(std::string_view name) const;
};

/// RFC 4180 style parser. Every row must have the header's width unless
/// `ragged` is set.
Table parse(std::string_view text, bool ragged = false);

}  // namespace curator::csv
