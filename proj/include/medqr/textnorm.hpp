#pragma once

// Character normalization, markup cleaning, tokenization and stop-words.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "medqr/error.hpp"
#include "medqr/io.hpp"
#include "medqr/utf8.hpp"

namespace medqr {

inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

// ---------------------------------------------------------------------------
// TokenSequence

/// Half-open byte range [start, end) into the UTF-8 source text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// Tokens with their source offsets. For tokenize() output every offset
/// slices the source to exactly its token. Derived sequences (noised,
/// masked, keyphrase sequences) keep the offsets of the tokens they came from;
/// inserted separators get an empty span at the end of the preceding token.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<Span> offsets;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens[i]; }

  void push_back(std::string token, Span span) {
    tokens.push_back(std::move(token));
    offsets.push_back(span);
  }

  /// Sequence without meaningful offsets, for hand-built inputs in tests and
  /// tools: token i gets the span [i, i+1).
  static TokenSequence from_tokens(std::vector<std::string> toks) {
    TokenSequence seq;
    seq.offsets.reserve(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) seq.offsets.push_back({i, i + 1});
    seq.tokens = std::move(toks);
    return seq;
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// ---------------------------------------------------------------------------
// MappingTable

/// Codepoint-sequence substitutions applied longest-match-first in a single
/// left-to-right pass. Empty targets delete their source.
///
/// Construction enforces closure so normalize() is idempotent:
///  * normalizing any target alone leaves it unchanged, and
///  * no codepoint of a multi-codepoint source occurs in any target, so
///    substituted text cannot combine with its neighbours into a new match.
class MappingTable {
 public:
  struct Entry {
    std::u32string source;
    std::string target;
    std::size_t line = 0;  // 0 when not loaded from a file
  };

  MappingTable() = default;

  explicit MappingTable(std::vector<Entry> entries, const std::string& origin = "<table>") {
    for (auto& e : entries) {
      if (e.source.empty()) throw ParseError(origin, e.line, "empty source sequence");
      std::string key;
      for (char32_t cp : e.source) utf8::append(key, cp);
      if (map_.contains(key)) throw ParseError(origin, e.line, "duplicate source sequence");
      max_source_len_ = std::max(max_source_len_, e.source.size());
      map_.emplace(std::move(key), e.target);
    }
    entries_ = std::move(entries);
    check_closure(origin);
  }

  std::size_t size() const noexcept { return map_.size(); }
  bool empty() const noexcept { return map_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Target for an exact UTF-8 source, or nullptr.
  const std::string* find(std::string_view source_utf8) const {
    auto it = map_.find(std::string(source_utf8));
    return it == map_.end() ? nullptr : &it->second;
  }

  std::string apply(std::string_view text) const {
    if (map_.empty()) return std::string(text);
    std::string out;
    out.reserve(text.size());
    std::vector<std::size_t> ends;  // boundaries after 1..max_source_len_ codepoints
    std::size_t pos = 0;
    std::string key;
    while (pos < text.size()) {
      ends.clear();
      std::size_t p = pos;
      while (ends.size() < max_source_len_ && p < text.size()) {
        auto d = utf8::decode(text, p);
        if (!d) break;
        p += d->length;
        ends.push_back(p);
      }
      bool matched = false;
      for (auto it = ends.rbegin(); it != ends.rend(); ++it) {
        key.assign(text.substr(pos, *it - pos));
        auto found = map_.find(key);
        if (found != map_.end()) {
          out += found->second;
          pos = *it;
          matched = true;
          break;
        }
      }
      if (!matched) {
        // Unmapped codepoint, or a stray invalid byte passed through as-is.
        const std::size_t len = ends.empty() ? 1 : ends.front() - pos;
        out.append(text.substr(pos, len));
        pos += len;
      }
    }
    return out;
  }

 private:
  void check_closure(const std::string& origin) const {
    std::set<char32_t> multi_source_cps;
    for (const auto& e : entries_) {
      if (e.source.size() > 1) multi_source_cps.insert(e.source.begin(), e.source.end());
    }
    for (const auto& e : entries_) {
      if (apply(e.target) != e.target) {
        throw ParseError(origin, e.line,
                         "closure violation: target \"" + e.target + "\" is rewritten by the table");
      }
      for (std::size_t pos = 0; pos < e.target.size();) {
        auto d = utf8::decode_lenient(e.target, pos);
        if (multi_source_cps.contains(d.cp)) {
          throw ParseError(origin, e.line,
                           "closure violation: target \"" + e.target +
                               "\" contains a codepoint of a multi-codepoint source");
        }
        pos += d.length;
      }
    }
  }

  std::unordered_map<std::string, std::string> map_;
  std::vector<Entry> entries_;
  std::size_t max_source_len_ = 0;
};

/// Parses `SOURCE<TAB>TARGET` lines; SOURCE is hex codepoints joined by `+`.
/// Blank lines and lines starting with `#` are skipped.
inline MappingTable parse_mapping_table(std::string_view content,
                                        const std::string& origin = "<table>") {
  if (auto bad = utf8::first_invalid(content)) {
    throw Error(origin + ": not valid UTF-8 (byte offset " + std::to_string(*bad) + ")");
  }
  std::vector<MappingTable::Entry> entries;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    std::string_view line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError(origin, lineno, "expected SOURCE<TAB>TARGET");
    std::string_view src = line.substr(0, tab);
    std::string_view target = line.substr(tab + 1);
    if (target.find('\t') != std::string_view::npos) {
      throw ParseError(origin, lineno, "more than one TAB on line");
    }
    MappingTable::Entry entry;
    entry.line = lineno;
    entry.target = std::string(target);
    while (true) {
      const std::size_t plus = src.find('+');
      std::string_view hex = src.substr(0, plus);
      std::uint32_t cp = 0;
      auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), cp, 16);
      if (hex.empty() || ec != std::errc{} || ptr != hex.data() + hex.size() || cp > 0x10FFFF ||
          (cp >= 0xD800 && cp <= 0xDFFF)) {
        throw ParseError(origin, lineno, "bad hex codepoint \"" + std::string(hex) + "\"");
      }
      entry.source.push_back(static_cast<char32_t>(cp));
      if (plus == std::string_view::npos) break;
      src.remove_prefix(plus + 1);
    }
    entries.push_back(std::move(entry));
  }
  return MappingTable(std::move(entries), origin);
}

inline MappingTable load_mapping_table(const std::filesystem::path& path) {
  return parse_mapping_table(io::read_file(path), path.string());
}

inline std::string normalize(std::string_view text, const MappingTable& table) {
  return table.apply(text);
}

// ---------------------------------------------------------------------------
// Markup cleaning

struct CleanResult {
  std::string text;
  std::size_t warnings = 0;  // unclosed tags / elements encountered
};

namespace detail {

inline bool iequals_prefix(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  }
  return true;
}

inline std::size_t ifind(std::string_view s, std::string_view needle, std::size_t from) {
  for (std::size_t p = from; p + needle.size() <= s.size(); ++p) {
    if (iequals_prefix(s, p, needle)) return p;
  }
  return std::string_view::npos;
}

inline bool is_tag_start(std::string_view s, std::size_t pos) {
  if (s[pos] != '<' || pos + 1 >= s.size()) return false;
  const auto c = static_cast<unsigned char>(s[pos + 1]);
  return std::isalpha(c) || c == '/' || c == '!' || c == '?';
}

// `<script` / `<style` followed by a delimiter.
inline std::string_view raw_element_at(std::string_view s, std::size_t pos) {
  for (std::string_view name : {std::string_view("script"), std::string_view("style")}) {
    if (!iequals_prefix(s, pos + 1, name)) continue;
    const std::size_t after = pos + 1 + name.size();
    if (after >= s.size()) return name;
    const char c = s[after];
    if (c == '>' || c == '/' || c == ' ' || c == '\t' || c == '\n' || c == '\r') return name;
  }
  return {};
}

inline std::string strip_tags(std::string_view s, std::size_t& warnings) {
  std::string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (!is_tag_start(s, pos)) {
      out.push_back(s[pos++]);
      continue;
    }
    if (auto name = raw_element_at(s, pos); !name.empty()) {
      const std::string closing = "</" + std::string(name);
      const std::size_t close = ifind(s, closing, pos + 1);
      const std::size_t gt = close == std::string_view::npos ? close : s.find('>', close);
      if (gt == std::string_view::npos) {
        ++warnings;
        break;
      }
      out.push_back(' ');
      pos = gt + 1;
      continue;
    }
    const std::size_t gt = s.find('>', pos);
    const std::size_t nl = s.find('\n', pos);
    if (gt == std::string_view::npos || (nl != std::string_view::npos && nl < gt)) {
      ++warnings;
      pos = nl == std::string_view::npos ? s.size() : nl;
      continue;
    }
    out.push_back(' ');
    pos = gt + 1;
  }
  return out;
}

inline std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (s[pos] != '&') {
      out.push_back(s[pos++]);
      continue;
    }
    static constexpr std::pair<std::string_view, char> kNamed[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}};
    bool done = false;
    for (auto [name, ch] : kNamed) {
      if (s.substr(pos, name.size()) == name) {
        out.push_back(ch);
        pos += name.size();
        done = true;
        break;
      }
    }
    if (done) continue;
    if (s.substr(pos, 2) == "&#") {
      std::size_t p = pos + 2;
      int base = 10;
      if (p < s.size() && (s[p] == 'x' || s[p] == 'X')) base = 16, ++p;
      std::uint32_t cp = 0;
      auto [ptr, ec] = std::from_chars(s.data() + p, s.data() + s.size(), cp, base);
      const std::size_t end = static_cast<std::size_t>(ptr - s.data());
      if (ec == std::errc{} && end > p && end < s.size() && s[end] == ';' && cp > 0 &&
          cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF)) {
        utf8::append(out, static_cast<char32_t>(cp));
        pos = end + 1;
        continue;
      }
    }
    out.push_back(s[pos++]);
  }
  return out;
}

inline bool is_url_token(std::string_view tok) {
  return iequals_prefix(tok, 0, "http://") || iequals_prefix(tok, 0, "https://") ||
         iequals_prefix(tok, 0, "www.");
}

// Drops URL tokens, collapses Unicode whitespace runs to one space, trims.
inline std::string drop_urls_and_collapse(std::string_view s) {
  std::string out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size()) {
      auto d = utf8::decode_lenient(s, pos);
      if (!utf8::is_space(d.cp)) break;
      pos += d.length;
    }
    const std::size_t start = pos;
    while (pos < s.size()) {
      auto d = utf8::decode_lenient(s, pos);
      if (utf8::is_space(d.cp)) break;
      pos += d.length;
    }
    if (pos == start) break;
    std::string_view tok = s.substr(start, pos - start);
    if (is_url_token(tok)) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

}  // namespace detail

/// Strips markup from a fragment: tags (script/style elements with their
/// contents), URL tokens, and the basic entities; then collapses whitespace.
/// Passes repeat until the text stops changing, so the result is a fixpoint
/// (every pass either shrinks the text or only rewrites whitespace).
inline CleanResult clean_markup(std::string_view text) {
  CleanResult result;
  std::string current(text);
  while (true) {
    std::string next = detail::strip_tags(current, result.warnings);
    next = detail::decode_entities(next);
    next = detail::drop_urls_and_collapse(next);
    if (next == current) break;
    current = std::move(next);
  }
  result.text = std::move(current);
  return result;
}

/// clean_markup then normalize, repeated until neither changes the text.
/// Needed because deleting a zero-width character can expose a URL token or
/// a run of spaces that the first cleaning pass could not see. The pass cap
/// only matters for a table whose targets reintroduce markup.
inline CleanResult clean_and_normalize(std::string_view text, const MappingTable& table) {
  CleanResult result;
  std::string current(text);
  for (int pass = 0; pass < 16; ++pass) {
    CleanResult c = clean_markup(current);
    result.warnings += c.warnings;
    std::string next = normalize(c.text, table);
    if (next == current) break;
    current = std::move(next);
  }
  result.text = std::move(current);
  return result;
}

// ---------------------------------------------------------------------------
// Tokenizer

/// Whitespace split; each punctuation character is its own token; digit runs
/// form number tokens; everything else groups into word tokens.
inline TokenSequence tokenize(std::string_view text) {
  enum class Kind { none, word, number };
  TokenSequence seq;
  Kind kind = Kind::none;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    if (kind != Kind::none && end > start) {
      seq.push_back(std::string(text.substr(start, end - start)), {start, end});
    }
    kind = Kind::none;
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto d = utf8::decode_lenient(text, pos);
    if (utf8::is_space(d.cp)) {
      flush(pos);
    } else if (utf8::is_punct(d.cp)) {
      flush(pos);
      seq.push_back(std::string(text.substr(pos, d.length)), {pos, pos + d.length});
    } else {
      const Kind k = utf8::is_digit(d.cp) ? Kind::number : Kind::word;
      if (k != kind) {
        flush(pos);
        kind = k;
        start = pos;
      }
    }
    pos += d.length;
  }
  flush(text.size());
  return seq;
}

/// Pluggable tokenizer; backends with their own vocabulary may substitute one.
using Tokenizer = std::function<TokenSequence(std::string_view)>;

inline Tokenizer default_tokenizer() {
  return [](std::string_view text) { return tokenize(text); };
}

// ---------------------------------------------------------------------------
// Stop-words

class StopwordSet {
 public:
  StopwordSet() = default;

  /// Normalizes every entry with `table` and deduplicates.
  StopwordSet(const std::vector<std::string>& tokens, const MappingTable& table) {
    for (const auto& t : tokens) {
      std::string n = normalize(t, table);
      if (!n.empty()) tokens_.insert(std::move(n));
    }
  }

  explicit StopwordSet(const std::vector<std::string>& tokens)
      : StopwordSet(tokens, MappingTable{}) {}

  bool contains(std::string_view token) const { return tokens_.find(token) != tokens_.end(); }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  /// Members in ascending byte order.
  std::vector<std::string> sorted() const { return {tokens_.begin(), tokens_.end()}; }

  friend bool operator==(const StopwordSet&, const StopwordSet&) = default;

 private:
  std::set<std::string, std::less<>> tokens_;
};

/// One token per line, `#` lines are comments, surrounding blanks trimmed.
inline StopwordSet load_stopwords(const std::filesystem::path& path, const MappingTable& table) {
  const std::string content = io::read_file(path);
  if (auto bad = utf8::first_invalid(content)) {
    throw Error(path.string() + ": not valid UTF-8 (byte offset " + std::to_string(*bad) + ")");
  }
  std::vector<std::string> tokens;
  for (std::string_view line : io::split_lines(content)) {
    line = io::trim_ascii(line);
    if (line.empty() || line.front() == '#') continue;
    tokens.emplace_back(line);
  }
  return StopwordSet(tokens, table);
}

}  // namespace medqr
