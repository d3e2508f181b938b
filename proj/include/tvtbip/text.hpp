#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace tvtbip {

using Stopwords = std::unordered_set<std::string>;

// Lowercases `text`, deletes digits, and splits on whitespace after
// punctuation has been mapped to spaces. Apostrophes and hyphens are deleted
// rather than mapped, so "export-import" becomes one token "exportimport".
// Tokens found in `stopwords` are dropped; order is preserved. Invalid UTF-8
// bytes are treated as separators.
std::vector<std::string> tokenize(std::string_view text,
                                  const Stopwords& stopwords);

// Adjacent token pairs joined by a single space.
std::vector<std::string> extract_bigrams(const std::vector<std::string>& tokens);

// One token per line; blank lines and lines starting with '#' are ignored.
Stopwords load_stopwords(const std::string& path);

// Small built-in English list used when no stopword file is configured.
const Stopwords& default_stopwords();

}  // namespace tvtbip
