#include "svynn/csv.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace svynn {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == ".";
}

// Parses one cell; returns false on a malformed number (as opposed to a
// missing value, which parses to an empty optional).
bool parse_cell(const std::string& raw, std::optional<double>& out) {
    const std::string s = trim(raw);
    if (is_missing_token(s)) {
        out.reset();
        return true;
    }
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) return false;
    out = v;
    return true;
}

} // namespace

bool CsvTable::has_column(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::size_t CsvTable::column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end())
        throw schema_error("missing required column: " + name);
    return static_cast<std::size_t>(it - columns.begin());
}

CsvTable load_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open CSV file: " + path);

    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw schema_error("empty CSV file: " + path);
    for (const std::string& h : split_line(line)) table.columns.push_back(trim(h));
    table.cells.resize(table.columns.size());

    std::size_t line_no = 1;
    std::vector<std::optional<double>> row(table.columns.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != table.columns.size()) {
            table.warnings.push_back("line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(table.columns.size()) + " fields, got " +
                                     std::to_string(fields.size()) + "; row dropped");
            continue;
        }
        bool ok = true;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (!parse_cell(fields[c], row[c])) {
                table.warnings.push_back("line " + std::to_string(line_no) +
                                         ": unparseable value '" + trim(fields[c]) +
                                         "' in column " + table.columns[c] + "; row dropped");
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        for (std::size_t c = 0; c < row.size(); ++c) table.cells[c].push_back(row[c]);
        table.line_numbers.push_back(line_no);
    }
    return table;
}

Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema,
                           std::vector<std::string>* warnings) {
    std::vector<std::size_t> feature_cols;
    for (const std::string& name : schema.feature_columns)
        feature_cols.push_back(table.column_index(name));
    const std::size_t weight_col = table.column_index(schema.weight_column);
    const std::size_t id_col = table.column_index(schema.id_column);
    const bool with_label = !schema.label_column.empty();
    const std::size_t label_col = with_label ? table.column_index(schema.label_column) : 0;

    Dataset ds;
    ds.feature_names = schema.feature_columns;
    std::size_t dropped = 0;
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        bool complete = table.cells[weight_col][r].has_value() &&
                        table.cells[id_col][r].has_value() &&
                        (!with_label || table.cells[label_col][r].has_value());
        for (std::size_t c : feature_cols) complete = complete && table.cells[c][r].has_value();
        if (!complete) {
            ++dropped;
            continue;
        }
        const double w = *table.cells[weight_col][r];
        if (!(w > 0.0)) {
            ++dropped;
            if (warnings)
                warnings->push_back("line " + std::to_string(table.line_numbers[r]) +
                                    ": nonpositive weight; row dropped");
            continue;
        }
        for (std::size_t c : feature_cols) ds.features.push_back(*table.cells[c][r]);
        ds.weights.push_back(w);
        ds.ids.push_back(static_cast<std::int64_t>(*table.cells[id_col][r]));
        if (with_label) ds.labels.push_back(*table.cells[label_col][r]);
    }
    if (dropped > 0) {
        const std::string msg =
            "dropped " + std::to_string(dropped) + " rows with missing values in requested columns";
        if (warnings) warnings->push_back(msg);
        std::cerr << "[csv] " << msg << "\n";
    }
    return ds;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema,
                 std::vector<std::string>* warnings) {
    const CsvTable table = load_csv_table(path);
    if (warnings)
        warnings->insert(warnings->end(), table.warnings.begin(), table.warnings.end());
    for (const std::string& w : table.warnings) std::cerr << "[csv] " << w << "\n";
    return dataset_from_table(table, schema, warnings);
}

} // namespace svynn
