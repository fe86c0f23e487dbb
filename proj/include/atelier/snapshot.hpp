#pragma once

// Textual parameter snapshots: a `params 1` header, then per matrix a line
// `mat <name> <rows> <cols>` followed by one line per row of 17-significant-
// digit decimals. Values round-trip bit-exactly.

#include "atelier/composer.hpp"
#include "atelier/embedding.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace atelier {

using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

std::string write_matrices(const NamedMatrices& mats);
NamedMatrices read_matrices(std::string_view text);

std::string write_snapshot(const EncoderDecoderParams& enc, const ComposerParams& comp);

struct Snapshot {
  EncoderDecoderParams encoder;
  ComposerParams composer;
};
Snapshot read_snapshot(std::string_view text);

}  // namespace atelier
