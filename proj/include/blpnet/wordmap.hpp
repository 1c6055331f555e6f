#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "blpnet/ocr.hpp"

namespace blpnet {

class WordMapError : public std::runtime_error {
 public:
  enum class Kind { Parse, DuplicateKey, Io };
  WordMapError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(what), kind_(kind), line_(line) {}
  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

struct WordRule {
  std::string key;  // concatenated character labels
  std::string word;
};

/// Key-character groups and their replacement words. Bottom-row digits are
/// grouped as "NN-NNNN" once there are at least min_group_digits of them.
struct WordMapTable {
  std::vector<WordRule> rules;
  bool group_digits = true;
  std::size_t group_after = 2;
  std::size_t min_group_digits = 4;
  std::string digit_separator = "-";

  const WordRule* find(std::string_view key) const;
  std::size_t size() const { return rules.size(); }
};

// One "key<TAB>word" rule per line; blank lines and "#" comments skipped.
// Lines starting with "@" set options: @group_digits on|off,
// @group_after N, @min_group_digits N, @digit_separator S.
WordMapTable parse_table(std::string_view text);
WordMapTable load_table(const std::filesystem::path& path);

// True for a single ASCII or Bengali decimal digit.
bool is_digit_label(std::string_view label);

// Greedy longest match over the top-row labels; matched words and leftover
// characters are joined by spaces, followed by the digit group. When no rule
// matches anywhere the raw concatenation is returned unchanged.
std::string map_plate(std::span<const Recognition> recognitions, const WordMapTable& table);

}  // namespace blpnet
