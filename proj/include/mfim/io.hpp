#pragma once

// CSV tables, JSON sidecars and JSON-lines records. Every file carries the
// config hash and code version; nothing time- or host-dependent is written so
// reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfim/error.hpp"
#include "mfim/protocol.hpp"
#include "mfim/sampling.hpp"

namespace mfim {

using json = nlohmann::json;

#ifndef MFIM_VERSION
#define MFIM_VERSION "dev"
#endif

inline std::string code_version() { return MFIM_VERSION; }

struct Provenance {
    std::string config_hash;
    std::string workflow;
    std::uint64_t seed = 0;

    json to_json() const {
        return {{"config_hash", config_hash}, {"code_version", code_version()}, {"workflow", workflow}, {"seed", seed}};
    }
};

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add_row(const std::vector<double>& values) {
        if (values.size() != columns_.size()) throw InvalidArgument("row width does not match the header");
        std::vector<std::string> row;
        for (double v : values) row.push_back(format_number(v));
        rows_.push_back(std::move(row));
    }

    void add_row(std::vector<std::string> values) {
        if (values.size() != columns_.size()) throw InvalidArgument("row width does not match the header");
        rows_.push_back(std::move(values));
    }

    std::size_t size() const { return rows_.size(); }

    std::string str(const Provenance& prov) const {
        std::ostringstream os;
        os << "# config_hash=" << prov.config_hash << " code_version=" << code_version() << " workflow=" << prov.workflow
           << " seed=" << prov.seed << '\n';
        write_line(os, columns_);
        for (const auto& r : rows_) write_line(os, r);
        return os.str();
    }

private:
    static void write_line(std::ostream& os, const std::vector<std::string>& v) {
        for (std::size_t k = 0; k < v.size(); ++k) os << (k ? "," : "") << v[k];
        os << '\n';
    }

    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

/// Parsed CSV: '#' lines skipped, first remaining line is the header.
struct CsvData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t k = 0; k < columns.size(); ++k)
            if (columns[k] == name) return k;
        throw InvalidArgument("CSV has no column '" + name + "'");
    }
};

inline CsvData read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    CsvData d;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (header) {
            d.columns = cells;
            header = false;
            continue;
        }
        if (cells.size() != d.columns.size()) throw InvalidArgument(path.string() + ": ragged row");
        std::vector<double> row;
        for (const auto& s : cells) {
            try {
                row.push_back(std::stod(s));
            } catch (const std::exception&) {
                throw InvalidArgument(path.string() + ": non-numeric cell '" + s + "'");
            }
        }
        d.rows.push_back(std::move(row));
    }
    if (header) throw InvalidArgument(path.string() + ": empty CSV");
    return d;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << text;
}

inline void write_json(const std::filesystem::path& path, json body, const Provenance& prov) {
    body["provenance"] = prov.to_json();
    write_text(path, body.dump(2) + "\n");
}

/// Columnar table: t, r, mean, then one column per ensemble member when kept.
inline CsvTable correlator_table(const CorrelatorGrid& g) {
    std::vector<std::string> cols{"t", "r", "mean"};
    for (std::size_t k = 0; k < g.samples.size(); ++k) cols.push_back("sample_" + std::to_string(k));
    CsvTable t(cols);
    for (std::size_t ti = 0; ti < g.times.size(); ++ti)
        for (std::size_t ri = 0; ri < g.r.size(); ++ri) {
            const auto row = static_cast<Eigen::Index>(ri), col = static_cast<Eigen::Index>(ti);
            std::vector<double> v{g.times[ti], static_cast<double>(g.r[ri]), g.values(row, col)};
            for (const auto& s : g.samples) v.push_back(s(row, col));
            t.add_row(v);
        }
    return t;
}

inline json grid_metadata(const CorrelatorGrid& g) {
    return {{"L", g.L},
            {"backend", backend_name(g.backend)},
            {"ensemble", g.ensemble},
            {"shots", g.shots},
            {"seed", g.seed},
            {"num_times", g.times.size()},
            {"num_samples", g.samples.size()}};
}

/// Rebuilds the mean grid from a correlator table.
inline CorrelatorGrid grid_from_csv(const CsvData& d) {
    const std::size_t ct = d.column("t"), cr = d.column("r"), cm = d.column("mean");
    std::vector<double> times;
    std::vector<int> rs;
    for (const auto& row : d.rows) {
        if (times.empty() || row[ct] != times.back()) times.push_back(row[ct]);
        const int r = static_cast<int>(std::lround(row[cr]));
        if (times.size() == 1) rs.push_back(r);
    }
    if (rs.empty() || d.rows.size() != times.size() * rs.size())
        throw InvalidArgument("correlator table is not a complete (t, r) grid");
    CorrelatorGrid g;
    g.L = static_cast<int>(rs.size());
    g.r = rs;
    if (g.r != r_offsets(g.L)) throw InvalidArgument("correlator table does not hold every offset r");
    g.times = times;
    g.values = Eigen::MatrixXd::Zero(g.L, static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < d.rows.size(); ++k)
        g.values(static_cast<Eigen::Index>(k % rs.size()), static_cast<Eigen::Index>(k / rs.size())) = d.rows[k][cm];
    return g;
}

inline json raw_count_json(std::size_t member, const RawCountRecord& r, const Provenance& prov) {
    json counts = json::object();
    for (const auto& [bits, c] : r.counts) counts[to_bitstring(bits, static_cast<int>(r.y.size()))] = c;
    return {{"member", member}, {"y", r.y},         {"t_step", r.t_step},
            {"nu", r.nu},       {"sign", r.sign},   {"cb", r.cb},
            {"basis", std::string(1, r.basis)},     {"seed", r.seed},
            {"counts", counts}, {"config_hash", prov.config_hash}, {"code_version", code_version()}};
}

}  // namespace mfim
