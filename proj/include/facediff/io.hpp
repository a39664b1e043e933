#pragma once

#include "facediff/blendshape.hpp"
#include "facediff/conditioning.hpp"
#include "facediff/tensor.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace facediff {

// Shortest decimal text that parses back to the same double; '.' decimal, no locale.
std::string format_double(double value);
// Strict full-string parse; throws ValidationError on malformed text.
double parse_double(std::string_view text);

struct LoadOptions {
  double fps = 25.0;
  // Clamp blendshape values outside [0,1] instead of only reporting them.
  bool clamp = false;
  // Receives range-violation reports. Defaults to the library logger.
  std::function<void(const std::string&)> on_warning;
};

// Sequence CSV: header row of channel names, one frame per row.
void save_sequence(const ExpressionSequence& seq, const ChannelLayout& layout,
                   const std::filesystem::path& path);
// Throws ParseError (with line number) on header mismatch, short rows, or
// non-finite / malformed values.
ExpressionSequence load_sequence(const std::filesystem::path& path, const ChannelLayout& layout,
                                 const LoadOptions& options = {});

// Binary feature matrix: 8-byte magic "FDFEAT01", uint64 rows, uint64 cols
// (little-endian), then rows*cols little-endian float64 values, row-major.
inline constexpr std::string_view kFeatureMagic = "FDFEAT01";

void save_feature_matrix(const Matrix& m, const std::filesystem::path& path);
// CSV fallback: header row "f0,f1,...", then one row per frame.
void save_feature_csv(const Matrix& m, const std::filesystem::path& path);
// Detects the binary magic, otherwise parses CSV.
Matrix load_feature_matrix(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace facediff
