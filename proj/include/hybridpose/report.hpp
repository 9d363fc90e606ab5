#pragma once

// Plain-text MAE tables in the usual "Method | Yaw | Pitch | Roll | MAE"
// layout, and the one-row CSV form of a MaeReport.

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hybridpose/angles.hpp"
#include "hybridpose/text_io.hpp"

namespace hybridpose {

inline constexpr std::string_view kMaeCsvHeader = "yaw_mae,pitch_mae,roll_mae,mean_mae,n_samples";

struct TableRow {
    std::string label;
    MaeReport report;
};

/// Left-aligned columns separated by two spaces; numbers in fixed notation.
inline std::string format_mae_table(const std::vector<TableRow>& rows, int precision = 3) {
    const std::vector<std::string> header{"Method", "Yaw", "Pitch", "Roll", "MAE"};
    std::vector<std::vector<std::string>> cells;
    cells.push_back(header);
    for (const auto& row : rows) {
        const MaeReport& r = row.report;
        cells.push_back({row.label, format_fixed(r.yaw_mae, precision), format_fixed(r.pitch_mae, precision),
                         format_fixed(r.roll_mae, precision), format_fixed(r.mean_mae, precision)});
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
    }
    std::size_t total = 0;
    for (std::size_t w : widths) total += w;
    total += 2 * (widths.size() - 1);

    auto render = [&widths](const std::vector<std::string>& line) {
        std::string out;
        for (std::size_t c = 0; c < line.size(); ++c) {
            out += line[c];
            if (c + 1 < line.size()) out += std::string(widths[c] - line[c].size() + 2, ' ');
        }
        return out + '\n';
    };
    std::string out = render(cells.front());
    out += std::string(total, '-') + '\n';
    for (std::size_t i = 1; i < cells.size(); ++i) out += render(cells[i]);
    return out;
}

inline std::string format_mae_csv(const MaeReport& r) {
    std::string out(kMaeCsvHeader);
    out += '\n';
    out += format_double(r.yaw_mae) + ',' + format_double(r.pitch_mae) + ',' + format_double(r.roll_mae) + ',' +
           format_double(r.mean_mae) + ',' + std::to_string(r.n_samples) + '\n';
    return out;
}

} // namespace hybridpose
