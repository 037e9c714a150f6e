#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ensemble.hpp"
#include "moments.hpp"

namespace cfsde {

// 17 significant digits: enough to reproduce any double exactly on re-read.
inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Write-temp-then-rename so readers never observe a half-written file and a
// failed run never clobbers the previous artifact.
inline void atomic_write_text(const std::filesystem::path& path, std::string_view text) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("atomic_write_text: cannot open " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) throw std::runtime_error("atomic_write_text: write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string moment_series_csv(const MomentSeries& series) {
    std::string out = "t,m2,stderr,censored\n";
    for (std::size_t n = 0; n < series.grid.size(); ++n) {
        out += format_full(series.grid[n]);
        out += ',';
        out += format_full(series.m2[n]);
        out += ',';
        out += format_full(series.std_error[n]);
        out += ',';
        out += std::to_string(series.censored[n]);
        out += '\n';
    }
    return out;
}

inline std::string ensemble_csv(const PathEnsemble& ensemble) {
    std::string out = "path_id,step,t,u,overflow_flag\n";
    for (std::size_t p = 0; p < ensemble.config.n_paths; ++p) {
        for (std::size_t n = 0; n < ensemble.n_times(); ++n) {
            out += std::to_string(p);
            out += ',';
            out += std::to_string(n);
            out += ',';
            out += format_full(ensemble.grid[n]);
            out += ',';
            out += format_full(ensemble.at(p, n));
            out += ',';
            out += ensemble.censored_at(p, n) ? '1' : '0';
            out += '\n';
        }
    }
    return out;
}

inline std::string contraction_csv(std::span<const double> distances) {
    std::string out = "iteration,d\n";
    for (std::size_t k = 0; k < distances.size(); ++k) {
        out += std::to_string(k + 1);
        out += ',';
        out += format_full(distances[k]);
        out += '\n';
    }
    return out;
}

inline std::string gronwall_csv(std::span<const double> t, std::span<const double> y,
                                std::span<const double> bound) {
    std::string out = "t,y,bound\n";
    for (std::size_t n = 0; n < t.size(); ++n) {
        out += format_full(t[n]);
        out += ',';
        out += format_full(y[n]);
        out += ',';
        out += format_full(bound[n]);
        out += '\n';
    }
    return out;
}

}  // namespace cfsde
