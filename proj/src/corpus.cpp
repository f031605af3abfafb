#include "cdv/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "cdv/error.hpp"
#include "json.hpp"

namespace cdv::corpus {

using nlohmann::json;

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

const std::unordered_set<std::string>& abbreviations() {
  static const std::unordered_set<std::string> kAbbrev = {
      "e.g", "i.e", "dr", "mr", "mrs", "ms", "prof", "vs", "etc", "fig", "figs",
      "st", "no", "approx", "al", "cf", "ca", "jr", "sr", "mt", "resp", "incl"};
  return kAbbrev;
}

std::string open_file_error(const std::filesystem::path& path) {
  return "cannot open " + path.string();
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw ParseError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

Document parse_document(const json& rec, const std::string& where_prefix) {
  Document doc;
  std::string where = where_prefix;
  if (!rec.is_object()) throw ParseError(where + ": record is not an object");
  doc.doc_id = require_string(rec, "id", where);
  where += " (doc " + doc.doc_id + ")";
  doc.title = require_string(rec, "title", where);
  doc.title_entity_id = require_string(rec, "entity_id", where);
  if (doc.title_entity_id.empty()) throw ParseError(where + ": empty entity_id");
  if (auto it = rec.find("source"); it != rec.end() && it->is_string()) {
    doc.source_tag = it->get<std::string>();
  }
  const json& sections = require(rec, "sections", where);
  if (!sections.is_array()) throw ParseError(where + ": 'sections' must be an array");

  for (const json& sec : sections) {
    if (!sec.is_object()) throw ParseError(where + ": section is not an object");
    Section section;
    if (auto it = sec.find("heading"); it != sec.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(where + ": heading must be a string");
      section.heading = it->get<std::string>();
    }
    const json& paragraphs = require(sec, "paragraphs", where);
    if (!paragraphs.is_array()) throw ParseError(where + ": 'paragraphs' must be an array");

    // Link and list indices address the raw entries of the section in order.
    std::map<std::size_t, std::vector<std::string>> links;
    if (auto it = sec.find("links"); it != sec.end() && !it->is_null()) {
      if (!it->is_array()) throw ParseError(where + ": 'links' must be an array");
      for (const json& link : *it) {
        const json& idx = require(link, "sentence_index", where);
        if (!idx.is_number_unsigned()) {
          throw ParseError(where + ": link sentence_index must be a non-negative integer");
        }
        links[idx.get<std::size_t>()].push_back(require_string(link, "entity_id", where));
      }
    }
    std::unordered_set<std::size_t> list_items;
    if (auto it = sec.find("list_item_sentence_indices"); it != sec.end() && !it->is_null()) {
      if (!it->is_array()) throw ParseError(where + ": list indices must be an array");
      for (const json& idx : *it) {
        if (!idx.is_number_unsigned()) throw ParseError(where + ": bad list item index");
        list_items.insert(idx.get<std::size_t>());
      }
    }

    std::size_t raw_index = 0;
    std::size_t paragraph_ordinal = 0;
    for (const json& para : paragraphs) {
      if (!para.is_array()) throw ParseError(where + ": paragraph must be an array of strings");
      bool emitted = false;
      for (const json& entry : para) {
        if (!entry.is_string()) throw ParseError(where + ": sentence must be a string");
        const std::string text = entry.get<std::string>();
        for (const std::string& piece : split_sentences(text)) {
          Sentence s;
          s.text = piece;
          s.tokens = tokenize(piece);
          if (s.tokens.empty()) continue;
          if (auto l = links.find(raw_index); l != links.end()) {
            s.entity_links.insert(l->second.begin(), l->second.end());
          }
          s.flags.list_item = list_items.count(raw_index) > 0;
          s.paragraph = paragraph_ordinal;
          section.sentences.push_back(std::move(s));
          emitted = true;
        }
        ++raw_index;
      }
      if (emitted) ++paragraph_ordinal;
    }
    if (!section.sentences.empty()) doc.sections.push_back(std::move(section));
  }
  if (doc.sections.empty()) throw ParseError(where + ": document has no sentences");
  assign_structural_flags(doc);
  return doc;
}

}  // namespace

std::size_t Document::sentence_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sections) n += s.sentences.size();
  return n;
}

std::vector<const Sentence*> Document::sentences() const {
  std::vector<const Sentence*> out;
  out.reserve(sentence_count());
  for (const auto& sec : sections) {
    for (const auto& s : sec.sentences) out.push_back(&s);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (is_word_byte(static_cast<unsigned char>(ch))) {
      current.push_back(lower(ch));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    // Absorb runs of terminal punctuation and closing quotes/brackets.
    std::size_t j = i + 1;
    while (j < n && (text[j] == '.' || text[j] == '!' || text[j] == '?' || text[j] == '"' ||
                     text[j] == '\'' || text[j] == ')' || text[j] == ']')) {
      ++j;
    }
    if (j >= n || !is_space(text[j])) continue;
    std::size_t k = j;
    while (k < n && is_space(text[k])) ++k;
    if (k >= n) continue;
    const unsigned char next = static_cast<unsigned char>(text[k]);
    if (!(std::isupper(next) || std::isdigit(next))) continue;
    if (c == '.') {
      std::size_t w = i;
      while (w > start && !is_space(text[w - 1])) --w;
      std::string word;
      for (std::size_t p = w; p < i; ++p) word.push_back(lower(text[p]));
      while (!word.empty() && (word.front() == '(' || word.front() == '"')) word.erase(0, 1);
      if (abbreviations().count(word) > 0) continue;
      // Single-letter initials such as "J. Smith".
      if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) continue;
    }
    std::string piece = trim(text.substr(start, j - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    start = k;
    i = k - 1;
  }
  std::string tail = trim(text.substr(std::min(start, n)));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::vector<std::string> heading_normalize(std::string_view raw) {
  std::string cleaned;
  cleaned.reserve(raw.size() + 8);
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    if (ch == '&') {
      cleaned += " and ";
    } else if (is_word_byte(u)) {
      cleaned.push_back(lower(ch));
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> fragments;
  std::string current;
  std::istringstream words(cleaned);
  std::string word;
  auto flush = [&] {
    if (!current.empty()) fragments.push_back(std::move(current));
    current.clear();
  };
  while (words >> word) {
    if (word == "and") {
      flush();
      continue;
    }
    if (!current.empty()) current.push_back(' ');
    current += word;
  }
  flush();
  return fragments;
}

std::vector<Document> parse_corpus(std::istream& in, const std::string& source_name) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = (source_name.empty() ? "corpus" : source_name) + ":" +
                              std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    Document doc = parse_document(rec, where);
    if (!seen.insert(doc.doc_id).second) {
      throw IntegrityError(where + ": duplicate doc_id " + doc.doc_id);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(open_file_error(path));
  return parse_corpus(in, path.filename().string());
}

void write_corpus(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& doc : docs) {
    json rec;
    rec["id"] = doc.doc_id;
    rec["title"] = doc.title;
    rec["entity_id"] = doc.title_entity_id;
    if (!doc.source_tag.empty()) rec["source"] = doc.source_tag;
    json sections = json::array();
    for (const auto& sec : doc.sections) {
      json paragraphs = json::array();
      json links = json::array();
      json list_items = json::array();
      std::size_t current_paragraph = static_cast<std::size_t>(-1);
      for (std::size_t i = 0; i < sec.sentences.size(); ++i) {
        const Sentence& s = sec.sentences[i];
        if (i == 0 || s.paragraph != current_paragraph) {
          paragraphs.push_back(json::array());
          current_paragraph = s.paragraph;
        }
        paragraphs.back().push_back(s.text);
        for (const auto& e : s.entity_links) {
          links.push_back({{"sentence_index", i}, {"entity_id", e}});
        }
        if (s.flags.list_item) list_items.push_back(i);
      }
      json jsec = {{"heading", sec.heading}, {"paragraphs", paragraphs}};
      if (!links.empty()) jsec["links"] = links;
      if (!list_items.empty()) jsec["list_item_sentence_indices"] = list_items;
      sections.push_back(std::move(jsec));
    }
    rec["sections"] = std::move(sections);
    out << rec.dump() << '\n';
  }
}

void assign_structural_flags(Document& doc) {
  std::vector<Sentence*> all;
  for (auto& sec : doc.sections) {
    for (std::size_t i = 0; i < sec.sentences.size(); ++i) {
      Sentence& s = sec.sentences[i];
      const bool list_item = s.flags.list_item;
      s.flags = {};
      s.flags.list_item = list_item;
      s.flags.begin_paragraph = i == 0 || sec.sentences[i - 1].paragraph != s.paragraph;
      s.flags.end_paragraph =
          i + 1 == sec.sentences.size() || sec.sentences[i + 1].paragraph != s.paragraph;
      all.push_back(&s);
    }
  }
  if (!all.empty()) {
    all.front()->flags.begin_document = true;
    all.back()->flags.end_document = true;
  }
}

std::vector<SentenceLabels> derive_labels(const Document& doc) {
  std::vector<SentenceLabels> labels;
  labels.reserve(doc.sentence_count());
  for (const auto& sec : doc.sections) {
    std::set<std::string> aspects;
    for (auto& frag : heading_normalize(sec.heading)) aspects.insert(std::move(frag));
    if (aspects.empty()) aspects.insert(std::string(kAbstractAspect));
    for (const auto& s : sec.sentences) {
      SentenceLabels l;
      l.entities.insert(doc.title_entity_id);
      l.entities.insert(s.entity_links.begin(), s.entity_links.end());
      l.aspects = aspects;
      labels.push_back(std::move(l));
    }
  }
  return labels;
}

std::string make_passage_id(const std::string& doc_id, std::size_t section_index) {
  return doc_id + "/" + std::to_string(section_index);
}

std::vector<Passage> build_passages(const Document& doc) {
  std::vector<Passage> passages;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < doc.sections.size(); ++k) {
    const Section& sec = doc.sections[k];
    Passage p;
    p.passage_id = make_passage_id(doc.doc_id, k);
    p.doc_id = doc.doc_id;
    p.start = offset;
    p.end = offset + sec.sentences.size();
    p.heading = sec.heading.empty() ? std::string(kAbstractAspect) : sec.heading;
    offset = p.end;
    passages.push_back(std::move(p));
  }
  return passages;
}

Document truncate_for_training(const Document& doc, std::size_t max_sentences,
                               std::size_t max_tokens) {
  if (max_sentences == 0 || max_tokens == 0) {
    throw InvalidArgumentError("truncation limits must be at least 1");
  }
  Document out = doc;
  out.sections.clear();
  std::size_t kept = 0;
  for (const auto& sec : doc.sections) {
    if (kept >= max_sentences) break;
    Section clipped;
    clipped.heading = sec.heading;
    for (const auto& s : sec.sentences) {
      if (kept >= max_sentences) break;
      Sentence copy = s;
      if (copy.tokens.size() > max_tokens) copy.tokens.resize(max_tokens);
      clipped.sentences.push_back(std::move(copy));
      ++kept;
    }
    out.sections.push_back(std::move(clipped));
  }
  assign_structural_flags(out);
  return out;
}

std::vector<KnowledgeBaseEntry> parse_knowledge_base(std::istream& in) {
  std::vector<KnowledgeBaseEntry> kb;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "knowledge base:" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw ParseError(where + ": record is not an object");
    KnowledgeBaseEntry entry;
    entry.entity_id = require_string(rec, "entity_id", where);
    entry.name = require_string(rec, "name", where);
    if (auto it = rec.find("descriptions"); it != rec.end() && !it->is_null()) {
      if (!it->is_array()) throw ParseError(where + ": descriptions must be an array");
      for (const json& d : *it) {
        if (!d.is_string()) throw ParseError(where + ": description must be a string");
        for (auto& piece : split_sentences(d.get<std::string>())) {
          entry.descriptions.push_back(std::move(piece));
        }
      }
    }
    if (!seen.insert(entry.entity_id).second) {
      throw IntegrityError(where + ": duplicate entity_id " + entry.entity_id);
    }
    kb.push_back(std::move(entry));
  }
  return kb;
}

std::vector<KnowledgeBaseEntry> load_knowledge_base(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(open_file_error(path));
  return parse_knowledge_base(in);
}

void write_knowledge_base(std::ostream& out, const std::vector<KnowledgeBaseEntry>& kb) {
  for (const auto& e : kb) {
    json rec = {{"entity_id", e.entity_id}, {"name", e.name}, {"descriptions", e.descriptions}};
    out << rec.dump() << '\n';
  }
}

std::vector<EvalQuery> parse_queries(std::istream& in) {
  std::vector<EvalQuery> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 4) {
      throw ParseError("queries:" + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    EvalQuery q;
    q.query_id = "q" + std::to_string(queries.size());
    q.entity_id = trim(fields[0]);
    q.mention = trim(fields[1]);
    q.aspect = trim(fields[2]);
    std::stringstream ids(fields[3]);
    std::string id;
    while (std::getline(ids, id, ',')) {
      id = trim(id);
      if (!id.empty()) q.relevant.push_back(id);
    }
    if (q.entity_id.empty() && q.mention.empty()) {
      throw ParseError("queries:" + std::to_string(line_no) + ": query has neither id nor mention");
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

std::vector<EvalQuery> load_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(open_file_error(path));
  return parse_queries(in);
}

void write_queries(std::ostream& out, const std::vector<EvalQuery>& queries) {
  for (const auto& q : queries) {
    out << q.entity_id << '\t' << q.mention << '\t' << q.aspect << '\t';
    for (std::size_t i = 0; i < q.relevant.size(); ++i) {
      if (i > 0) out << ',';
      out << q.relevant[i];
    }
    out << '\n';
  }
}

}  // namespace cdv::corpus
