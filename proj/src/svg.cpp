#include "snmt/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "snmt/error.hpp"

namespace snmt {

namespace {

constexpr int kCell = 40;
constexpr int kPad = 10;
constexpr int kCharWidth = 9;  // rough advance at font-size 14
constexpr int kFontSize = 14;

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::size_t code_points(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

int label_extent(const TokenList& labels) {
  std::size_t widest = 0;
  for (const auto& l : labels) widest = std::max(widest, code_points(l));
  return static_cast<int>(widest) * kCharWidth + kPad;
}

std::string hex_gray(int level) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
  return buf;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void check_attention_matrix(const AttentionMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw DimensionError("empty attention matrix");
  for (const auto& row : m.weights) {
    if (row.size() != m.cols()) throw DimensionError("ragged attention matrix");
    for (double a : row) {
      if (!(a >= 0.0 && a <= 1.0)) throw DomainError("attention weight outside [0, 1]: " + fixed(a));
    }
  }
  if (m.source_tokens.size() != m.cols() || m.target_tokens.size() != m.rows()) {
    throw DimensionError("attention matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " but has " +
                         std::to_string(m.target_tokens.size()) + " row and " +
                         std::to_string(m.source_tokens.size()) + " column labels");
  }
}

std::string render_attention_svg(const AttentionMatrix& m) {
  check_attention_matrix(m);
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  const int left = label_extent(m.target_tokens) + kPad;
  const int top = label_extent(m.source_tokens) + kPad;
  const int width = left + cols * kCell + kPad;
  const int height = top + rows * kCell + kPad;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
       std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " +
       std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"" +
       std::to_string(kFontSize) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  s += "<g class=\"col-labels\" text-anchor=\"start\">\n";
  for (int j = 0; j < cols; ++j) {
    const int x = left + j * kCell + kCell / 2 + kFontSize / 3;
    const int y = top - kPad;
    s += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" transform=\"rotate(-90 " +
         std::to_string(x) + " " + std::to_string(y) + ")\">" + xml_escape(m.source_tokens[j]) +
         "</text>\n";
  }
  s += "</g>\n<g class=\"row-labels\" text-anchor=\"end\">\n";
  for (int i = 0; i < rows; ++i) {
    s += "<text x=\"" + std::to_string(left - kPad) + "\" y=\"" +
         std::to_string(top + i * kCell + kCell / 2 + kFontSize / 3) + "\">" +
         xml_escape(m.target_tokens[i]) + "</text>\n";
  }
  s += "</g>\n<g class=\"cells\" stroke=\"#808080\" stroke-width=\"0.5\">\n";
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double a = m.weights[i][j];
      const int level = static_cast<int>(std::lround(255.0 * a));
      s += "<rect x=\"" + std::to_string(left + j * kCell) + "\" y=\"" + std::to_string(top + i * kCell) +
           "\" width=\"" + std::to_string(kCell) + "\" height=\"" + std::to_string(kCell) +
           "\" fill=\"" + hex_gray(level) + "\" data-row=\"" + std::to_string(i) + "\" data-col=\"" +
           std::to_string(j) + "\"><title>" + fixed(a) + "</title></rect>\n";
    }
  }
  s += "</g>\n</svg>\n";
  return s;
}

}  // namespace snmt
