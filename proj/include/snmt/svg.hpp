#pragma once

#include <string>

#include "snmt/decode.hpp"

namespace snmt {

/// Grayscale heatmap: one cell per weight, fill luminance round(255 * alpha),
/// source tokens label the columns and target tokens the rows. Output bytes
/// depend only on the matrix.
std::string render_attention_svg(const AttentionMatrix& matrix);

/// Throws DimensionError unless the weights are a non-empty rectangle whose
/// sides match the label counts, DomainError for weights outside [0, 1].
void check_attention_matrix(const AttentionMatrix& matrix);

}  // namespace snmt
