#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svynn/dataset.hpp"

namespace svynn {

/// Raw numeric CSV contents: one column of optional doubles per header name.
/// Empty cells and the literals NA/NaN/na count as missing. Rows containing a
/// cell that fails to parse as a number are dropped and reported, with their
/// 1-based line number.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> cells;  // column-major
    std::vector<std::size_t> line_numbers;                  // per surviving row
    std::vector<std::string> warnings;

    std::size_t n_rows() const { return line_numbers.size(); }
    bool has_column(const std::string& name) const;
    std::size_t column_index(const std::string& name) const;  // schema_error if absent
};

CsvTable load_csv_table(const std::string& path);

/// Which columns a caller wants out of a CSV file.
struct CsvSchema {
    std::vector<std::string> feature_columns;
    std::string weight_column = "weight";
    std::string id_column = "id";
    std::string label_column;  // optional: binary 0/1 labels
};

/// Typed dataset from a CSV file. Rows with a missing value in any requested
/// column are dropped; the number of dropped rows is appended to `warnings`
/// (when given) and reported on stderr.
Dataset load_csv(const std::string& path, const CsvSchema& schema,
                 std::vector<std::string>* warnings = nullptr);

/// Same, starting from an already-parsed table.
Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema,
                           std::vector<std::string>* warnings = nullptr);

} // namespace svynn
