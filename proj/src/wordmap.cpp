#include "blpnet/wordmap.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace blpnet {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::size_t parse_count(std::string_view value, std::size_t line) {
  std::size_t out = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size())
    throw WordMapError(WordMapError::Kind::Parse, line,
                       "word map line " + std::to_string(line) + ": expected a count, got '" + std::string(value) + "'");
  return out;
}

void apply_option(WordMapTable& t, std::string_view name, std::string_view value, std::size_t line) {
  if (name == "group_digits") {
    if (value != "on" && value != "off")
      throw WordMapError(WordMapError::Kind::Parse, line,
                         "word map line " + std::to_string(line) + ": @group_digits takes on|off");
    t.group_digits = value == "on";
  } else if (name == "group_after") {
    t.group_after = parse_count(value, line);
  } else if (name == "min_group_digits") {
    t.min_group_digits = parse_count(value, line);
  } else if (name == "digit_separator") {
    t.digit_separator = std::string(value);
  } else {
    throw WordMapError(WordMapError::Kind::Parse, line,
                       "word map line " + std::to_string(line) + ": unknown option @" + std::string(name));
  }
}

}  // namespace

const WordRule* WordMapTable::find(std::string_view key) const {
  for (const auto& r : rules)
    if (r.key == key) return &r;
  return nullptr;
}

WordMapTable parse_table(std::string_view text) {
  WordMapTable t;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (line.front() == '@') {
      const auto sep = line.find_first_of("\t ");
      if (sep == std::string_view::npos)
        throw WordMapError(WordMapError::Kind::Parse, line_no,
                           "word map line " + std::to_string(line_no) + ": option without a value");
      apply_option(t, line.substr(1, sep - 1), trim(line.substr(sep + 1)), line_no);
      continue;
    }
    if (tab == std::string_view::npos)
      throw WordMapError(WordMapError::Kind::Parse, line_no,
                         "word map line " + std::to_string(line_no) + ": expected key<TAB>word");
    const auto key = trim(line.substr(0, tab)), word = trim(line.substr(tab + 1));
    if (key.empty() || word.empty())
      throw WordMapError(WordMapError::Kind::Parse, line_no,
                         "word map line " + std::to_string(line_no) + ": empty key or word");
    if (t.find(key))
      throw WordMapError(WordMapError::Kind::DuplicateKey, line_no,
                         "word map line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    t.rules.push_back({std::string(key), std::string(word)});
  }
  return t;
}

WordMapTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WordMapError(WordMapError::Kind::Io, 0, "cannot open word map " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str());
}

bool is_digit_label(std::string_view label) {
  if (label.size() == 1) return label[0] >= '0' && label[0] <= '9';
  // U+09E6..U+09EF encode as E0 A7 A6..AF.
  return label.size() == 3 && static_cast<unsigned char>(label[0]) == 0xE0 &&
         static_cast<unsigned char>(label[1]) == 0xA7 && static_cast<unsigned char>(label[2]) >= 0xA6 &&
         static_cast<unsigned char>(label[2]) <= 0xAF;
}

std::string map_plate(std::span<const Recognition> recs, const WordMapTable& table) {
  std::string raw;
  for (const auto& r : recs) raw += r.label;

  std::vector<std::string> top, bottom;
  const bool single_row = std::all_of(recs.begin(), recs.end(), [&](const Recognition& r) { return r.row == recs.front().row; });
  if (single_row) {
    std::size_t split = recs.size();
    while (split > 0 && is_digit_label(recs[split - 1].label)) --split;
    for (std::size_t i = 0; i < recs.size(); ++i) (i < split ? top : bottom).push_back(recs[i].label);
  } else {
    const std::size_t first_row = recs.front().row;
    for (const auto& r : recs) (r.row == first_row ? top : bottom).push_back(r.label);
  }

  std::vector<std::string> tokens;
  bool matched = false;
  for (std::size_t i = 0; i < top.size();) {
    std::size_t best = 0;
    const WordRule* rule = nullptr;
    std::string key;
    for (std::size_t j = i; j < top.size(); ++j) {
      key += top[j];
      if (const auto* r = table.find(key)) {
        best = j + 1 - i;
        rule = r;
      }
    }
    if (rule) {
      tokens.push_back(rule->word);
      matched = true;
      i += best;
    } else {
      tokens.push_back(top[i++]);
    }
  }
  if (!matched) return raw;

  std::string digits;
  const bool all_digits = std::all_of(bottom.begin(), bottom.end(), [](const std::string& s) { return is_digit_label(s); });
  for (std::size_t i = 0; i < bottom.size(); ++i) {
    if (table.group_digits && all_digits && bottom.size() >= table.min_group_digits && i == table.group_after && i > 0)
      digits += table.digit_separator;
    digits += bottom[i];
  }
  if (!digits.empty()) tokens.push_back(digits);

  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace blpnet
