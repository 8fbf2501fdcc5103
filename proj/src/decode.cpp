#include "snmt/decode.hpp"

namespace snmt {

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty() && !is_detached_punctuation(t)) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace snmt
