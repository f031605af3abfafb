#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cdv::corpus {

/// Aspect label given to sentences that precede the first heading.
inline constexpr std::string_view kAbstractAspect = "information";

struct StructuralFlags {
  bool begin_document = false;
  bool end_document = false;
  bool begin_paragraph = false;
  bool end_paragraph = false;
  bool list_item = false;

  friend bool operator==(const StructuralFlags&, const StructuralFlags&) = default;
};

inline constexpr std::size_t kFlagCount = 5;

struct Sentence {
  std::string text;
  std::vector<std::string> tokens;
  std::set<std::string> entity_links;
  StructuralFlags flags;
  std::size_t paragraph = 0;  // paragraph ordinal within the section

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Section {
  std::string heading;  // empty for the abstract
  std::vector<Sentence> sentences;

  friend bool operator==(const Section&, const Section&) = default;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string title_entity_id;
  std::vector<Section> sections;
  std::string source_tag;

  std::size_t sentence_count() const noexcept;
  // Sentences in global document order.
  std::vector<const Sentence*> sentences() const;

  friend bool operator==(const Document&, const Document&) = default;
};

struct Passage {
  std::string passage_id;
  std::string doc_id;
  std::size_t start = 0;  // [start, end) over the document's sentence order
  std::size_t end = 0;
  std::string heading;

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const Passage&, const Passage&) = default;
};

struct SentenceLabels {
  std::set<std::string> entities;
  std::set<std::string> aspects;
};

// --- text processing -------------------------------------------------------

/// Lowercased alphanumeric runs; non-ASCII bytes count as word characters.
std::vector<std::string> tokenize(std::string_view text);

/// Rule-based splitter: terminal punctuation followed by whitespace and an
/// uppercase letter or digit ends a sentence unless the preceding word is a
/// known abbreviation.
std::vector<std::string> split_sentences(std::string_view text);

/// Lowercase, strip punctuation, split at "and" / "&".
std::vector<std::string> heading_normalize(std::string_view raw);

// --- corpus ----------------------------------------------------------------

std::vector<Document> load_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::istream& in, const std::string& source_name = "");
void write_corpus(std::ostream& out, const std::vector<Document>& docs);

/// Recomputes begin/end document and paragraph flags from sentence order and
/// paragraph ordinals. List-item flags are kept.
void assign_structural_flags(Document& doc);

std::vector<SentenceLabels> derive_labels(const Document& doc);
std::string make_passage_id(const std::string& doc_id, std::size_t section_index);
std::vector<Passage> build_passages(const Document& doc);
Document truncate_for_training(const Document& doc, std::size_t max_sentences,
                               std::size_t max_tokens);

// --- knowledge base --------------------------------------------------------

struct KnowledgeBaseEntry {
  std::string entity_id;
  std::string name;
  std::vector<std::string> descriptions;
};

/// Line-delimited records {"entity_id", "name", "descriptions": [...]}.
std::vector<KnowledgeBaseEntry> load_knowledge_base(const std::filesystem::path& path);
std::vector<KnowledgeBaseEntry> parse_knowledge_base(std::istream& in);
void write_knowledge_base(std::ostream& out, const std::vector<KnowledgeBaseEntry>& kb);

// --- queries ---------------------------------------------------------------

struct EvalQuery {
  std::string query_id;
  std::string entity_id;
  std::string mention;
  std::string aspect;
  std::vector<std::string> relevant;

  // Query text used by the term-based baselines.
  std::string text() const { return mention + " " + aspect; }
};

/// Tab-separated: entity_id, mention, aspect, comma-separated passage ids.
std::vector<EvalQuery> load_queries(const std::filesystem::path& path);
std::vector<EvalQuery> parse_queries(std::istream& in);
void write_queries(std::ostream& out, const std::vector<EvalQuery>& queries);

}  // namespace cdv::corpus
