#include <algorithm>
#include <fstream>
#include <sstream>

#include "radsearch/augment/augment.hpp"
#include "radsearch/errors.hpp"

namespace radsearch {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

SynonymLexicon SynonymLexicon::builtin() {
  return parse(
      "maxilla: upper jaw\n"
      "mandible: lower jaw\n"
      "upper molar right: right upper molar | upper right molar | right maxillary molar\n"
      "upper molar left: left upper molar | upper left molar | left maxillary molar\n"
      "lower molar left: left lower molar | lower left molar | left mandibular molar\n"
      "lower molar right: right lower molar | lower right molar | right mandibular molar\n"
      "lower anterior: mandibular anterior | lower front\n"
      "upper anterior: maxillary anterior | upper front\n");
}

SynonymLexicon SynonymLexicon::parse(std::string_view text) {
  SynonymLexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw LexiconError("lexicon line " + std::to_string(line_no) + " has no ':' separator");
    }
    const std::string canonical = trim(std::string_view(line).substr(0, colon));
    if (canonical.empty()) throw LexiconError("lexicon line " + std::to_string(line_no) + " has an empty term");
    std::string_view rest = std::string_view(line).substr(colon + 1);
    std::size_t added = 0;
    while (!rest.empty()) {
      const auto bar = rest.find('|');
      const std::string syn = trim(rest.substr(0, bar));
      if (!syn.empty()) {
        lex.add(canonical, syn);
        ++added;
      }
      if (bar == std::string_view::npos) break;
      rest.remove_prefix(bar + 1);
    }
    if (added == 0) {
      throw LexiconError("lexicon line " + std::to_string(line_no) + " lists no synonyms for '" + canonical + "'");
    }
  }
  return lex;
}

SynonymLexicon SynonymLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void SynonymLexicon::add(std::string_view canonical, std::string_view synonym) {
  const std::string key = to_lower(canonical);
  const std::string syn = to_lower(synonym);
  if (syn == key) throw LexiconError("term '" + key + "' cannot be its own synonym");
  auto& list = entries_[key];
  if (std::find(list.begin(), list.end(), syn) == list.end()) list.push_back(syn);
}

const std::vector<std::string>* SynonymLexicon::synonyms(std::string_view canonical) const {
  auto it = entries_.find(to_lower(canonical));
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> SynonymLexicon::canonical_of(std::string_view term) const {
  const std::string t = to_lower(term);
  if (entries_.count(t)) return t;
  for (const auto& [canonical, syns] : entries_)
    for (const auto& s : syns)
      if (s == t) return canonical;
  return std::nullopt;
}

}  // namespace radsearch
