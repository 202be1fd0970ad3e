#pragma once

// CSV output with shortest round-trip double formatting, so identical runs
// produce byte-identical files.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "enscon/errors.hpp"
#include "enscon/synthesis.hpp"

namespace enscon {

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
        path_ = path.string();
    }

    void header(const std::vector<std::string>& names) { raw_row(names); }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_double(values[i]);
        }
        out_ << '\n';
    }

    void raw_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("failed writing '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            table.header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        bool numeric = true;
        for (const auto& c : cells) {
            double v = 0.0;
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc{}) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) continue; // secondary header line (e.g. the summary block)
        table.rows.push_back(std::move(row));
    }
    return table;
}

/// control.csv: header t,u1..um; one row per synthesis node t_k, k = 1..N.
inline void write_control_csv(const std::filesystem::path& path, const ControlSignal& u) {
    CsvWriter w(path);
    std::vector<std::string> head{"t"};
    for (int c = 1; c <= u.input_dim; ++c) head.push_back("u" + std::to_string(c));
    w.header(head);
    std::vector<double> row(static_cast<std::size_t>(u.input_dim) + 1);
    for (int k = 1; k <= u.grid.steps; ++k) {
        row[0] = u.grid.node(k);
        for (int c = 0; c < u.input_dim; ++c)
            row[static_cast<std::size_t>(c) + 1] = u.values(k - 1, c);
        w.row(row);
    }
    w.close();
}

inline ControlSignal read_control_csv(const std::filesystem::path& path) {
    CsvTable table = read_csv(path);
    if (table.header.size() < 2 || table.header[0] != "t")
        throw IoError("'" + path.string() + "' is not a control file (expected header t,u1,..)");
    const int m = static_cast<int>(table.header.size()) - 1;
    const int N = static_cast<int>(table.rows.size());
    if (N < 1) throw IoError("control file has no rows");
    const double T = table.rows.back()[0];
    ControlSignal u;
    u.grid = TimeGrid(N, T);
    u.input_dim = m;
    u.values.resize(N, m);
    for (int k = 0; k < N; ++k) {
        const auto& row = table.rows[static_cast<std::size_t>(k)];
        if (static_cast<int>(row.size()) != m + 1)
            throw IoError("control file row " + std::to_string(k + 1) + " has wrong width");
        if (std::abs(row[0] - u.grid.node(k + 1)) > 1e-9 * std::max(1.0, T))
            throw IoError("control file time nodes are not equispaced");
        for (int c = 0; c < m; ++c) u.values(k, c) = row[static_cast<std::size_t>(c) + 1];
    }
    return u;
}

inline void write_singular_values_csv(const std::filesystem::path& path,
                                      const OperatorFactorization& fact) {
    CsvWriter w(path);
    w.header({"index", "s"});
    for (int j = 0; j < fact.rank; ++j) w.row({static_cast<double>(j + 1), fact.s[j]});
    w.close();
}

inline void write_diagnostic_csv(const std::filesystem::path& path,
                                 const ControllabilityDiagnostic& diag) {
    CsvWriter w(path);
    w.header({"index", "partial_sum"});
    for (Eigen::Index j = 0; j < diag.partial_sums.size(); ++j)
        w.row({static_cast<double>(j + 1), diag.partial_sums[j]});
    w.close();
}

} // namespace enscon
