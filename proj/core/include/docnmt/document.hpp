#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace docnmt {

using TokenIds = std::vector<std::size_t>;

// Aligned sentence pairs of one document as vocabulary ids. Target sentences
// do not carry the end token.
struct Document {
  std::string id;
  std::vector<TokenIds> src;
  std::vector<TokenIds> trg;

  std::size_t size() const { return src.size(); }
};

TokenIds with_end(const TokenIds& y);
// Drops a trailing end token if present.
TokenIds strip_end(const TokenIds& y);

}  // namespace docnmt
