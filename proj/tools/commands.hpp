#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hybridpose/loss.hpp"

namespace hybridpose::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "key = value" lines; '#' starts a comment. Keys may use '-' or '_'.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);

/// "alpha;b1,b2,...", e.g. "2;7,5,3,1,1".
LossWeights parse_weight_row(std::string_view text);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

std::string read_file(const std::string& path);

} // namespace hybridpose::cli
