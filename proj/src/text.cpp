#include "tvtbip/text.hpp"

#include <fstream>

#include "tvtbip/errors.hpp"

namespace tvtbip {
namespace {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes one code point starting at text[pos] and advances pos. Malformed
// sequences consume a single byte and yield kInvalid.
char32_t next_code_point(std::string_view text, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(text[pos]);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return kInvalid;
  }
  if (pos + len > text.size()) {
    ++pos;
    return kInvalid;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[pos + k]);
    if ((b & 0xC0) != 0x80) {
      ++pos;
      return kInvalid;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_digit(char32_t c) {
  return (c >= U'0' && c <= U'9') || (c >= 0xFF10 && c <= 0xFF19);
}

// Apostrophes and hyphens join the surrounding letters.
bool is_joiner(char32_t c) {
  return c == U'\'' || c == U'-' || c == 0x2019 || c == 0x2018 ||
         (c >= 0x2010 && c <= 0x2013) || c == 0xAD;
}

bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
           (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E) || c < 0x20 ||
           c == 0x7F;
  }
  return (c >= 0xA1 && c <= 0xBF) || c == 0xD7 || c == 0xF7 ||
         (c >= 0x2000 && c <= 0x206F) || (c >= 0x3000 && c <= 0x303F) ||
         (c >= 0xFF01 && c <= 0xFF0F) || c == kInvalid;
}

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 0x20;
  // Latin-1 supplement and Greek/Cyrillic capitals with a fixed offset.
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  // Latin Extended-A alternates upper/lower on even/odd code points.
  if (c >= 0x100 && c <= 0x137 && c % 2 == 0) return c + 1;
  if (c >= 0x14A && c <= 0x177 && c % 2 == 0) return c + 1;
  return c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text,
                                  const Stopwords& stopwords) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !stopwords.contains(current)) {
      tokens.push_back(current);
    }
    current.clear();
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t c = next_code_point(text, pos);
    if (is_digit(c) || is_joiner(c)) continue;
    if (is_space(c) || is_punct(c)) {
      flush();
      continue;
    }
    append_utf8(current, to_lower(c));
  }
  flush();
  return tokens;
}

std::vector<std::string> extract_bigrams(
    const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  if (tokens.size() < 2) return out;
  out.reserve(tokens.size() - 1);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    out.push_back(tokens[i] + ' ' + tokens[i + 1]);
  }
  return out;
}

Stopwords load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stopword file " + path);
  Stopwords words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                             line.back() == '\t')) {
      line.pop_back();
    }
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    words.insert(line.substr(start));
  }
  return words;
}

const Stopwords& default_stopwords() {
  static const Stopwords words = {
      "a",     "about", "above", "after", "again", "against", "all",   "am",
      "an",    "and",   "any",   "are",   "as",    "at",      "be",    "because",
      "been",  "before", "being", "below", "between", "both", "but",   "by",
      "can",   "could", "did",   "do",    "does",  "doing",   "down",  "during",
      "each",  "few",   "for",   "from",  "further", "had",   "has",   "have",
      "having", "he",   "her",   "here",  "hers",  "herself", "him",   "himself",
      "his",   "how",   "i",     "if",    "in",    "into",    "is",    "it",
      "its",   "itself", "just", "me",    "more",  "most",    "my",    "myself",
      "no",    "nor",   "not",   "now",   "of",    "off",     "on",    "once",
      "only",  "or",    "other", "our",   "ours",  "ourselves", "out", "over",
      "own",   "same",  "she",   "should", "so",   "some",    "such",  "than",
      "that",  "the",   "their", "theirs", "them", "themselves", "then", "there",
      "these", "they",  "this",  "those", "through", "to",    "too",   "under",
      "until", "up",    "very",  "was",   "we",    "were",    "what",  "when",
      "where", "which", "while", "who",   "whom",  "why",     "will",  "with",
      "would", "you",   "your",  "yours", "yourself", "yourselves"};
  return words;
}

}  // namespace tvtbip
