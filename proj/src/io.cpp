#include "facediff/io.hpp"

#include "facediff/error.hpp"

#include <spdlog/spdlog.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace facediff {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

void write_csv_row(std::ostream& out, const auto& row) {
  for (Eigen::Index c = 0; c < row.size(); ++c) {
    if (c) out << ',';
    out << format_double(row[c]);
  }
  out << '\n';
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError("malformed number '" + std::string(text) + "'");
  }
  return v;
}

void save_sequence(const ExpressionSequence& seq, const ChannelLayout& layout,
                   const std::filesystem::path& path) {
  if (static_cast<std::size_t>(seq.frames.cols()) != layout.dim()) {
    throw DimensionError("save_sequence: sequence width does not match layout");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write sequence file " + path.string());
  const auto& names = layout.channel_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out << ',';
    out << names[i];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < seq.frames.rows(); ++r) write_csv_row(out, seq.frames.row(r));
  if (!out) throw IoError("failed writing sequence file " + path.string());
}

ExpressionSequence load_sequence(const std::filesystem::path& path, const ChannelLayout& layout,
                                 const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sequence file " + path.string());
  const auto& names = layout.channel_names();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file", 1);
  auto header = split_commas(trim_cr(line));
  if (header.size() != names.size()) {
    throw ParseError(path.string() + ": header has " + std::to_string(header.size()) +
                         " columns, layout expects " + std::to_string(names.size()),
                     1);
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (header[i] != names[i]) {
      throw ParseError(path.string() + ": header column " + std::to_string(i) + " is '" +
                           std::string(header[i]) + "', layout expects '" + names[i] + "'",
                       1);
    }
  }

  auto warn = options.on_warning ? options.on_warning
                                 : [](const std::string& msg) { spdlog::warn("{}", msg); };
  std::vector<double> values;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto row = trim_cr(line);
    if (row.empty()) continue;
    auto cells = split_commas(row);
    if (cells.size() != names.size()) {
      throw ParseError(path.string() + ": row has " + std::to_string(cells.size()) +
                           " values, expected " + std::to_string(names.size()),
                       line_no);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v = 0.0;
      try {
        v = parse_double(cells[i]);
      } catch (const ValidationError&) {
        throw ParseError(path.string() + ": malformed value '" + std::string(cells[i]) +
                             "' in channel '" + names[i] + "'",
                         line_no);
      }
      if (!std::isfinite(v)) {
        throw ParseError(path.string() + ": non-finite value in channel '" + names[i] + "'",
                         line_no);
      }
      if (!layout.is_pose(i) && (v < 0.0 || v > 1.0)) {
        warn(path.string() + ":" + std::to_string(line_no) + ": channel '" + names[i] +
             "' value " + format_double(v) + " outside [0,1]" +
             (options.clamp ? " (clamped)" : ""));
        if (options.clamp) v = std::clamp(v, 0.0, 1.0);
      }
      values.push_back(v);
    }
    ++rows;
  }
  ExpressionSequence seq;
  seq.fps = options.fps;
  seq.frames = ConstMatrixMap(values.data(), static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(names.size()));
  return seq;
}

void save_feature_matrix(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file " + path.string());
  out.write(kFeatureMagic.data(), static_cast<std::streamsize>(kFeatureMagic.size()));
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()),
                                 static_cast<std::uint64_t>(m.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!out) throw IoError("failed writing feature file " + path.string());
}

void save_feature_csv(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file " + path.string());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if (c) out << ',';
    out << 'f' << c;
  }
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) write_csv_row(out, m.row(r));
}

Matrix load_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() == 8 && std::string_view(magic, 8) == kFeatureMagic) {
    std::uint64_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw ParseError(path.string() + ": truncated feature header", 1);
    Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * dims[0] * dims[1]));
    if (!in) throw ParseError(path.string() + ": truncated feature data", 1);
    if (!m.allFinite()) throw ParseError(path.string() + ": non-finite feature value", 1);
    return m;
  }

  in.clear();
  in.seekg(0);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty feature file", 1);
  const std::size_t cols = split_commas(trim_cr(line)).size();
  std::vector<double> values;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto row = trim_cr(line);
    if (row.empty()) continue;
    auto cells = split_commas(row);
    if (cells.size() != cols) {
      throw ParseError(path.string() + ": feature row has " + std::to_string(cells.size()) +
                           " values, expected " + std::to_string(cols),
                       line_no);
    }
    for (auto cell : cells) {
      double v = 0.0;
      try {
        v = parse_double(cell);
      } catch (const ValidationError&) {
        throw ParseError(path.string() + ": malformed feature value '" + std::string(cell) + "'",
                         line_no);
      }
      if (!std::isfinite(v)) throw ParseError(path.string() + ": non-finite feature value", line_no);
      values.push_back(v);
    }
    ++rows;
  }
  return ConstMatrixMap(values.data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace facediff
