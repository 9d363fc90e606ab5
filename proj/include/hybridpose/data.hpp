#pragma once

// Ground-truth annotation formats and the +-99 degree range filter.
//
// BIWI pose text (one file per frame):
//
//     r00 r01 r02
//     r10 r11 r12
//     r20 r21 r22
//                       <- at most one blank line
//     tx ty tz
//
// Tokens are whitespace-separated decimals; leading/trailing whitespace on a
// line and trailing blank lines are ignored. The matrix is read row-major and
// interpreted with the Euler convention documented in angles.hpp.
//
// Annotation CSV: header "id,yaw,pitch,roll", then one record per line in
// decimal degrees. Ids are unique.
//
// Predictions CSV: header "id,yaw_pred,pitch_pred,roll_pred,yaw_true,pitch_true,roll_true".

#include <algorithm>
#include <array>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridpose/angles.hpp"
#include "hybridpose/binning.hpp"
#include "hybridpose/errors.hpp"
#include "hybridpose/sample.hpp"
#include "hybridpose/text_io.hpp"

namespace hybridpose {

struct BiwiPose {
    RotationMatrix rotation;
    std::array<double, 3> translation{};
};

namespace detail {

inline std::array<double, 3> parse_triple(std::string_view line, std::size_t line_no, const char* what) {
    const auto tokens = split_whitespace(line);
    if (tokens.size() != 3) {
        throw ParseError(std::string("expected 3 numbers in ") + what + ", found " + std::to_string(tokens.size()),
                         line_no);
    }
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto v = parse_double(tokens[i].text);
        if (!v) throw ParseError("'" + std::string(tokens[i].text) + "' is not a number", line_no, tokens[i].column);
        out[i] = *v;
    }
    return out;
}

inline bool is_blank(std::string_view line) { return trim(line).empty(); }

} // namespace detail

inline BiwiPose parse_biwi_pose(std::string_view text, double tolerance = kRotationTolerance) {
    const auto lines = split_lines(text);
    BiwiPose pose;
    std::size_t i = 0;
    for (std::size_t row = 0; row < 3; ++row, ++i) {
        if (i >= lines.size()) throw ParseError("missing rotation matrix row " + std::to_string(row + 1), i + 1);
        const auto values = detail::parse_triple(lines[i], i + 1, "rotation row");
        for (std::size_t c = 0; c < 3; ++c) pose.rotation(row, c) = values[c];
    }
    if (i < lines.size() && detail::is_blank(lines[i])) ++i;
    if (i >= lines.size() || detail::is_blank(lines[i])) throw ParseError("missing translation line", i + 1);
    pose.translation = detail::parse_triple(lines[i], i + 1, "translation");
    for (++i; i < lines.size(); ++i) {
        if (!detail::is_blank(lines[i])) throw ParseError("unexpected content after translation", i + 1);
    }
    try {
        validate_rotation(pose.rotation, tolerance);
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), 1);
    }
    return pose;
}

/// Inverse of parse_biwi_pose; numbers use shortest round-trip formatting.
inline std::string format_biwi_pose(const BiwiPose& pose) {
    std::string out;
    for (std::size_t r = 0; r < 3; ++r) {
        out += format_double(pose.rotation(r, 0)) + ' ' + format_double(pose.rotation(r, 1)) + ' ' +
               format_double(pose.rotation(r, 2)) + '\n';
    }
    out += '\n';
    out += format_double(pose.translation[0]) + ' ' + format_double(pose.translation[1]) + ' ' +
           format_double(pose.translation[2]) + '\n';
    return out;
}

enum class AnnotationSource { Biwi, Csv, Synthetic };

struct AnnotationRecord {
    std::string sample_id;
    PoseAngles pose;
    AnnotationSource source = AnnotationSource::Csv;

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline constexpr std::string_view kAnnotationHeader = "id,yaw,pitch,roll";
inline constexpr std::string_view kPredictionsHeader = "id,yaw_pred,pitch_pred,roll_pred,yaw_true,pitch_true,roll_true";

namespace detail {

inline std::size_t expect_header(const std::vector<std::string_view>& lines, std::string_view header) {
    std::size_t i = 0;
    while (i < lines.size() && is_blank(lines[i])) ++i;
    if (i == lines.size()) throw ParseError("missing header \"" + std::string(header) + "\"", 1);
    if (trim(lines[i]) != header) {
        throw ParseError("expected header \"" + std::string(header) + "\", found \"" + std::string(trim(lines[i])) + "\"",
                         i + 1);
    }
    return i + 1;
}

inline std::vector<double> parse_numeric_fields(const std::vector<std::string_view>& fields, std::size_t first,
                                                std::size_t line_no) {
    std::vector<double> out;
    for (std::size_t f = first; f < fields.size(); ++f) {
        const auto v = parse_double(trim(fields[f]));
        if (!v) {
            throw ParseError("field " + std::to_string(f + 1) + " ('" + std::string(trim(fields[f])) +
                                 "') is not a number",
                             line_no);
        }
        out.push_back(*v);
    }
    return out;
}

} // namespace detail

inline std::vector<AnnotationRecord> parse_annotation_csv(std::string_view text,
                                                          AnnotationSource source = AnnotationSource::Csv) {
    const auto lines = split_lines(text);
    std::vector<AnnotationRecord> out;
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = detail::expect_header(lines, kAnnotationHeader); i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (detail::is_blank(lines[i])) continue;
        const auto fields = split_fields(lines[i]);
        if (fields.size() != 4) {
            throw ParseError("expected 4 fields (id,yaw,pitch,roll), found " + std::to_string(fields.size()), line_no);
        }
        const std::string id(trim(fields[0]));
        if (id.empty()) throw ParseError("empty id", line_no);
        const auto v = detail::parse_numeric_fields(fields, 1, line_no);
        if (!seen.insert(id).second) throw ParseError("duplicate id '" + id + "'", line_no);
        out.push_back({id, {v[0], v[1], v[2]}, source});
    }
    return out;
}

inline std::string format_annotation_csv(std::span<const AnnotationRecord> records) {
    std::string out(kAnnotationHeader);
    out += '\n';
    for (const auto& r : records) {
        out += r.sample_id + ',' + format_double(r.pose.yaw) + ',' + format_double(r.pose.pitch) + ',' +
               format_double(r.pose.roll) + '\n';
    }
    return out;
}

struct PredictionRecord {
    std::string sample_id;
    PoseAngles predicted;
    PoseAngles truth;

    friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

inline std::vector<PredictionRecord> parse_predictions_csv(std::string_view text) {
    const auto lines = split_lines(text);
    std::vector<PredictionRecord> out;
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = detail::expect_header(lines, kPredictionsHeader); i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (detail::is_blank(lines[i])) continue;
        const auto fields = split_fields(lines[i]);
        if (fields.size() != 7) throw ParseError("expected 7 fields, found " + std::to_string(fields.size()), line_no);
        const std::string id(trim(fields[0]));
        if (id.empty()) throw ParseError("empty id", line_no);
        const auto v = detail::parse_numeric_fields(fields, 1, line_no);
        if (!seen.insert(id).second) throw ParseError("duplicate id '" + id + "'", line_no);
        out.push_back({id, {v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    }
    return out;
}

inline std::string format_predictions_csv(std::span<const PredictionRecord> records) {
    std::string out(kPredictionsHeader);
    out += '\n';
    for (const auto& r : records) {
        out += r.sample_id;
        for (double v : {r.predicted.yaw, r.predicted.pitch, r.predicted.roll, r.truth.yaw, r.truth.pitch, r.truth.roll}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

/// Joins predictions and truths by id, in truth order. Throws UsageError
/// listing every id present on one side only.
inline std::vector<PredictionRecord> join_by_id(std::span<const AnnotationRecord> predictions,
                                                std::span<const AnnotationRecord> truths) {
    std::vector<const AnnotationRecord*> sorted_preds;
    for (const auto& p : predictions) sorted_preds.push_back(&p);
    std::sort(sorted_preds.begin(), sorted_preds.end(),
              [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
    auto find = [&](const std::string& id) -> const AnnotationRecord* {
        const auto it = std::lower_bound(sorted_preds.begin(), sorted_preds.end(), id,
                                         [](const auto* r, const std::string& key) { return r->sample_id < key; });
        return (it != sorted_preds.end() && (*it)->sample_id == id) ? *it : nullptr;
    };

    std::vector<PredictionRecord> out;
    std::vector<std::string> missing_pred;
    std::set<std::string, std::less<>> truth_ids;
    for (const auto& t : truths) {
        truth_ids.insert(t.sample_id);
        if (const auto* p = find(t.sample_id)) {
            out.push_back({t.sample_id, p->pose, t.pose});
        } else {
            missing_pred.push_back(t.sample_id);
        }
    }
    std::vector<std::string> missing_truth;
    for (const auto& p : predictions) {
        if (!truth_ids.contains(p.sample_id)) missing_truth.push_back(p.sample_id);
    }
    if (!missing_pred.empty() || !missing_truth.empty()) {
        std::string msg = "prediction/ground-truth id mismatch";
        auto list = [&msg](const char* label, const std::vector<std::string>& ids) {
            if (ids.empty()) return;
            msg += std::string("; ") + label + ":";
            for (const auto& id : ids) msg += " " + id;
        };
        list("missing predictions for", missing_pred);
        list("missing ground truth for", missing_truth);
        throw UsageError(msg);
    }
    return out;
}

inline MaeReport mae(std::span<const PredictionRecord> records) {
    std::vector<PoseAngles> preds, truths;
    preds.reserve(records.size());
    truths.reserve(records.size());
    for (const auto& r : records) {
        preds.push_back(r.predicted);
        truths.push_back(r.truth);
    }
    return mae(preds, truths);
}

template <typename Record>
struct FilterResult {
    std::vector<Record> kept;
    std::size_t discarded = 0;
};

namespace detail {
inline const PoseAngles& pose_of(const AnnotationRecord& r) { return r.pose; }
inline const PoseAngles& pose_of(const Sample& s) { return s.truth; }
} // namespace detail

/// Keeps records whose every angle satisfies |angle| <= limit (inclusive), in order.
template <typename Record>
FilterResult<Record> filter_range(std::span<const Record> records, double limit = kAngleLimit) {
    FilterResult<Record> out;
    for (const auto& r : records) {
        const PoseAngles& p = detail::pose_of(r);
        if (p.is_finite() && p.within(limit)) {
            out.kept.push_back(r);
        } else {
            ++out.discarded;
        }
    }
    return out;
}

template <typename Record>
FilterResult<Record> filter_range(const std::vector<Record>& records, double limit = kAngleLimit) {
    return filter_range(std::span<const Record>(records), limit);
}

} // namespace hybridpose
