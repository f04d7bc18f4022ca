#pragma once

/// CSV and JSON report writers. Doubles are written in the shortest form that
/// round-trips, so identical runs give identical bytes.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "nmsim/error.hpp"
#include "nmsim/labcli/config.hpp"

namespace nmsim::labcli {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw Error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

/// A CSV cell; empty means "no value".
struct Cell {
    std::string text;
    Cell() = default;
    Cell(double v) : text(format_double(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(std::size_t v) : text(std::to_string(v)) {}
    Cell(const char* s) : text(s) {}
    Cell(std::string s) : text(std::move(s)) {}
};

class CsvWriter {
public:
    /// Opens `path` and writes the comment header: version, config echo (minus threads), notes.
    CsvWriter(const std::filesystem::path& path, const ExperimentConfig& cfg, const std::vector<std::string>& notes,
              const std::vector<std::string>& columns)
        : path_(path), out_(path, std::ios::binary), width_(columns.size()) {
        if (!out_) throw Error("cannot open output file '" + path.string() + "'");
        out_ << "# nmsim " << kVersion << '\n';
        // the thread count cannot change results, so it stays out of the byte-stable file
        nlohmann::ordered_json echo = to_json(cfg);
        echo.erase("threads");
        out_ << "# config " << echo.dump() << '\n';
        for (const std::string& n : notes) out_ << "# " << n << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
    }

    void row(const std::vector<Cell>& cells) {
        if (cells.size() != width_) throw Error("csv row width mismatch in '" + path_.string() + "'");
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i].text;
        out_ << '\n';
    }

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_;
};

struct RunReport {
    ExperimentConfig config;
    std::vector<std::string> outputs;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    double wall_time_s = 0.0;
    int exit_status = 0;
    std::string error;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["version"] = kVersion;
        j["config"] = labcli::to_json(config);
        j["outputs"] = outputs;
        j["summary"] = summary;
        j["wall_time_s"] = wall_time_s;
        j["exit_status"] = exit_status;
        if (!error.empty()) j["error"] = error;
        return j;
    }
};

inline void write_report(const std::filesystem::path& path, const RunReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open report file '" + path.string() + "'");
    out << r.to_json().dump(2) << '\n';
}

}  // namespace nmsim::labcli
