#pragma once

// Readers for sketch input: dense CSV (one vector per line) and sparse
// NDJSON lines {"id": ..., "entries": [[index, value], ...]}.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "stablesketch/errors.hpp"
#include "stablesketch/sketch.hpp"

namespace stablesketch {

inline DataMatrix read_csv_matrix(std::istream& in, const std::string& name = "<csv>") {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        const char* p = line.c_str();
        for (;;) {
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(p, &end);
            while (*end == ' ' || *end == '\t') ++end;
            if (end == p || (*end != ',' && *end != '\0') || errno == ERANGE) {
                throw FormatError(name + ":" + std::to_string(lineno) + ": malformed number");
            }
            if (!std::isfinite(v)) throw FormatError(name + ":" + std::to_string(lineno) + ": non-finite value");
            row.push_back(v);
            if (*end == '\0') break;
            p = end + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError(name + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(rows.front().size()) + " values, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    return DataMatrix::dense(std::move(rows));
}

/// `dim` = 0 takes the dimension as one past the largest index seen.
inline DataMatrix read_ndjson_matrix(std::istream& in, std::size_t dim = 0, std::vector<std::string>* ids = nullptr,
                                     const std::string& name = "<ndjson>") {
    std::vector<SparseRow> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t max_index_plus_one = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("entries") || !rec["entries"].is_array()) {
            throw FormatError(where + ": record needs an \"entries\" array");
        }
        SparseRow row;
        std::vector<std::pair<std::size_t, double>> entries;
        for (const auto& e : rec["entries"]) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number() || e[0].get<long long>() < 0) {
                throw FormatError(where + ": entries must be [non-negative index, value] pairs");
            }
            entries.emplace_back(e[0].get<std::size_t>(), e[1].get<double>());
        }
        std::sort(entries.begin(), entries.end());
        for (std::size_t t = 0; t < entries.size(); ++t) {
            if (t > 0 && entries[t].first == entries[t - 1].first) throw FormatError(where + ": duplicate index");
            row.indices.push_back(entries[t].first);
            row.values.push_back(entries[t].second);
            max_index_plus_one = std::max(max_index_plus_one, entries[t].first + 1);
        }
        if (ids) {
            const auto it = rec.find("id");
            ids->push_back(it == rec.end() ? std::to_string(rows.size()) : (it->is_string() ? it->get<std::string>() : it->dump()));
        }
        rows.push_back(std::move(row));
    }
    if (dim == 0) dim = max_index_plus_one;
    return DataMatrix::sparse(dim, std::move(rows));
}

/// Dispatches on the extension: .ndjson / .jsonl are sparse, anything else CSV.
inline DataMatrix read_matrix_file(const std::string& path, std::size_t dim = 0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open input '" + path + "'");
    auto ends_with = [&](const char* ext) {
        const std::string e(ext);
        return path.size() >= e.size() && path.compare(path.size() - e.size(), e.size(), e) == 0;
    };
    if (ends_with(".ndjson") || ends_with(".jsonl")) return read_ndjson_matrix(in, dim, nullptr, path);
    return read_csv_matrix(in, path);
}

}  // namespace stablesketch
