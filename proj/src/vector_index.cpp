#include "cdv/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdv/checkpoint.hpp"
#include "cdv/error.hpp"
#include "cdv/rng.hpp"

namespace cdv::index {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'V', 'I', 'N', 'D', 'X', '1'};

double cosine_slice(std::span<const double> q, std::span<const float> v) {
  double dot = 0.0, qq = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double x = static_cast<double>(v[k]);
    dot += q[k] * x;
    qq += q[k] * q[k];
    vv += x * x;
  }
  if (qq == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(qq) * std::sqrt(vv)), -1.0, 1.0);
}

double entry_score(const Vector& qcat, const IndexEntry& entry) {
  return cosine_slice(qcat, entry.vector);
}

struct Ranked {
  std::size_t passage;
  double score;
};

bool ranked_before(const Ranked& a, const Ranked& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.passage < b.passage;
}

ScoredPassage scored_from_entries(const PassageRecord& p, const std::vector<double>& entry_scores) {
  ScoredPassage out;
  out.passage_id = p.passage_id;
  out.sentence_scores.assign(entry_scores.begin() + static_cast<std::ptrdiff_t>(p.first_entry),
                             entry_scores.begin() +
                                 static_cast<std::ptrdiff_t>(p.first_entry + p.end - p.start));
  double sum = 0.0;
  for (double s : out.sentence_scores) sum += s;
  out.score = sum / static_cast<double>(out.sentence_scores.size());
  return out;
}

ScoredPassage score_record(const Vector& qcat, const VectorIndex& index, const PassageRecord& p) {
  ScoredPassage out;
  out.passage_id = p.passage_id;
  double sum = 0.0;
  for (std::size_t i = p.first_entry; i < p.first_entry + (p.end - p.start); ++i) {
    const double v = entry_score(qcat, index.entries()[i]);
    out.sentence_scores.push_back(v);
    sum += v;
  }
  out.score = sum / static_cast<double>(out.sentence_scores.size());
  return out;
}

Vector query_concat(const spaces::QueryVector& q, const VectorIndex& index) {
  check_dims(index.entity_dim(), q.entity.size(), "query entity vector");
  check_dims(index.aspect_dim(), q.aspect.size(), "query aspect vector");
  return q.concatenated();
}

}  // namespace

const PassageRecord& VectorIndex::passage(const std::string& passage_id) const {
  const auto it = passage_lookup_.find(passage_id);
  if (it == passage_lookup_.end()) throw NotFoundError("unknown passage '" + passage_id + "'");
  return passages_[it->second];
}

bool VectorIndex::has_passage(const std::string& passage_id) const {
  return passage_lookup_.count(passage_id) != 0;
}

bool VectorIndex::has_document(const std::string& doc_id) const {
  return doc_lookup_.count(doc_id) != 0;
}

std::pair<std::size_t, std::size_t> VectorIndex::document_range(const std::string& doc_id) const {
  const auto it = doc_lookup_.find(doc_id);
  if (it == doc_lookup_.end()) throw NotFoundError("unknown document '" + doc_id + "'");
  return it->second;
}

void VectorIndex::rebuild_lookup() {
  passage_lookup_.clear();
  doc_lookup_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto [it, inserted] = doc_lookup_.try_emplace(entries_[i].doc_id, i, 0);
    if (!inserted && it->second.first + it->second.second != i) {
      throw IntegrityError("entries of document '" + entries_[i].doc_id + "' are not contiguous");
    }
    ++it->second.second;
  }
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const PassageRecord& p = passages_[i];
    if (!passage_lookup_.emplace(p.passage_id, i).second) {
      throw IntegrityError("duplicate passage id '" + p.passage_id + "'");
    }
    const auto doc = doc_lookup_.find(p.doc_id);
    if (doc == doc_lookup_.end() || p.start >= p.end || p.end > doc->second.second ||
        p.first_entry != doc->second.first + p.start) {
      throw IntegrityError("passage '" + p.passage_id + "' refers to sentences missing from the index");
    }
  }
}

VectorIndex build_index(const std::vector<model::DiscourseMatrix>& matrices,
                        const std::vector<corpus::Passage>& passages,
                        std::uint64_t build_fingerprint) {
  VectorIndex index;
  index.build_fingerprint = build_fingerprint;
  bool have_dims = false;
  std::map<std::string, std::size_t> seen;
  for (const auto& m : matrices) {
    if (m.entity.size() != m.aspect.size()) {
      throw ShapeError("discourse matrix '" + m.doc_id + "' has mismatched decoder lengths");
    }
    if (!seen.emplace(m.doc_id, index.entries_.size()).second) {
      throw IntegrityError("document '" + m.doc_id + "' indexed twice");
    }
    for (std::size_t t = 0; t < m.entity.size(); ++t) {
      if (!have_dims) {
        index.entity_dim_ = m.entity[t].size();
        index.aspect_dim_ = m.aspect[t].size();
        have_dims = true;
      }
      check_dims(index.entity_dim_, m.entity[t].size(), "decoded entity vector");
      check_dims(index.aspect_dim_, m.aspect[t].size(), "decoded aspect vector");
      IndexEntry e;
      e.doc_id = m.doc_id;
      e.sentence_index = t;
      e.vector.reserve(index.dim());
      for (double x : m.entity[t]) e.vector.push_back(static_cast<float>(x));
      for (double x : m.aspect[t]) e.vector.push_back(static_cast<float>(x));
      index.entries_.push_back(std::move(e));
    }
  }
  for (const auto& p : passages) {
    PassageRecord r;
    r.passage_id = p.passage_id;
    r.doc_id = p.doc_id;
    r.heading = p.heading;
    r.start = p.start;
    r.end = p.end;
    const auto it = seen.find(p.doc_id);
    r.first_entry = (it == seen.end() ? 0 : it->second) + p.start;
    if (it == seen.end()) {
      throw IntegrityError("passage '" + p.passage_id + "' refers to unindexed document '" +
                           p.doc_id + "'");
    }
    index.passages_.push_back(std::move(r));
  }
  index.rebuild_lookup();
  return index;
}

void VectorIndex::write(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  nn::write_u32(out, static_cast<std::uint32_t>(entity_dim_));
  nn::write_u32(out, static_cast<std::uint32_t>(aspect_dim_));
  nn::write_u64(out, entries_.size());
  nn::write_u64(out, passages_.size());
  nn::write_u64(out, build_fingerprint);
  for (const auto& e : entries_) {
    nn::write_string(out, e.doc_id);
    nn::write_u64(out, e.sentence_index);
    for (float x : e.vector) nn::write_f32(out, x);
  }
  for (const auto& p : passages_) {
    nn::write_string(out, p.passage_id);
    nn::write_string(out, p.doc_id);
    nn::write_string(out, p.heading);
    nn::write_u64(out, p.start);
    nn::write_u64(out, p.end);
    nn::write_u64(out, p.first_entry);
  }
  if (!out) throw IoError("failed to write vector index");
}

VectorIndex VectorIndex::read(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw ParseError("not a vector index file (bad magic)");
  }
  VectorIndex index;
  index.entity_dim_ = nn::read_u32(in);
  index.aspect_dim_ = nn::read_u32(in);
  const std::uint64_t n_entries = nn::read_u64(in);
  const std::uint64_t n_passages = nn::read_u64(in);
  index.build_fingerprint = nn::read_u64(in);
  const std::size_t dim = index.dim();
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    IndexEntry e;
    e.doc_id = nn::read_string(in);
    e.sentence_index = nn::read_u64(in);
    e.vector.resize(dim);
    for (float& x : e.vector) x = nn::read_f32(in);
    index.entries_.push_back(std::move(e));
  }
  for (std::uint64_t i = 0; i < n_passages; ++i) {
    PassageRecord p;
    p.passage_id = nn::read_string(in);
    p.doc_id = nn::read_string(in);
    p.heading = nn::read_string(in);
    p.start = nn::read_u64(in);
    p.end = nn::read_u64(in);
    p.first_entry = nn::read_u64(in);
    index.passages_.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after vector index");
  index.rebuild_lookup();
  return index;
}

void VectorIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in);
}

std::string VectorIndex::to_bytes() const {
  std::ostringstream out(std::ios::binary);
  write(out);
  return out.str();
}

std::uint64_t VectorIndex::fingerprint() const {
  Fingerprint fp;
  fp.update(to_bytes());
  return fp.value();
}

double score_sentence(const spaces::QueryVector& q, const IndexEntry& entry) {
  check_dims(entry.vector.size(), q.dim(), "query vector");
  return entry_score(q.concatenated(), entry);
}

ScoredPassage score_passage(const spaces::QueryVector& q, const VectorIndex& index,
                            const std::string& passage_id) {
  const Vector qcat = query_concat(q, index);
  return score_record(qcat, index, index.passage(passage_id));
}

std::vector<ScoredPassage> rank_candidates(const spaces::QueryVector& q, const VectorIndex& index,
                                           const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw EmptyInputError("no candidate passages to rank");
  const Vector qcat = query_concat(q, index);
  std::vector<Ranked> ranked;
  std::vector<ScoredPassage> scored;
  ranked.reserve(candidates.size());
  std::map<std::size_t, std::size_t> slot;
  for (const auto& id : candidates) {
    const PassageRecord& p = index.passage(id);
    const std::size_t reg = static_cast<std::size_t>(&p - index.passages().data());
    if (slot.count(reg)) continue;
    ScoredPassage s = score_record(qcat, index, p);
    slot[reg] = scored.size();
    ranked.push_back({reg, s.score});
    scored.push_back(std::move(s));
  }
  std::sort(ranked.begin(), ranked.end(), ranked_before);
  std::vector<ScoredPassage> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back(std::move(scored[slot[r.passage]]));
  return out;
}

std::vector<ScoredPassage> search_all(const spaces::QueryVector& q, const VectorIndex& index,
                                      std::size_t top_k) {
  if (top_k == 0) throw InvalidArgumentError("top_k must be at least 1");
  if (index.passage_count() == 0) return {};
  const Vector qcat = query_concat(q, index);
  std::vector<double> entry_scores(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) entry_scores[i] = entry_score(qcat, index.entries()[i]);
  std::vector<Ranked> ranked(index.passage_count());
  for (std::size_t p = 0; p < ranked.size(); ++p) {
    const PassageRecord& rec = index.passages()[p];
    double sum = 0.0;
    for (std::size_t i = rec.first_entry; i < rec.first_entry + (rec.end - rec.start); ++i) {
      sum += entry_scores[i];
    }
    ranked[p] = {p, sum / static_cast<double>(rec.end - rec.start)};
  }
  const std::size_t k = std::min(top_k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    ranked_before);
  std::vector<ScoredPassage> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    out.push_back(scored_from_entries(index.passages()[ranked[r].passage], entry_scores));
    out.back().score = ranked[r].score;
  }
  return out;
}

SentenceHistogram sentence_histogram(const spaces::QueryVector& q, const VectorIndex& index,
                                     const std::string& doc_id) {
  const auto [first, count] = index.document_range(doc_id);
  const Vector qcat = query_concat(q, index);
  const std::size_t de = index.entity_dim();
  SentenceHistogram h;
  for (std::size_t i = first; i < first + count; ++i) {
    const std::span<const float> v = index.entries()[i].vector;
    h.combined.push_back(cosine_slice(qcat, v));
    h.entity.push_back(cosine_slice(q.entity, v.subspan(0, de)));
    h.aspect.push_back(cosine_slice(q.aspect, v.subspan(de)));
  }
  return h;
}

IvfBackend::IvfBackend(const VectorIndex& index, const IvfConfig& config)
    : index_(&index), config_(config) {
  const std::size_t n = index.passage_count();
  const std::size_t dim = index.dim();
  passage_means_.assign(n, Vector(dim, 0.0));
  for (std::size_t p = 0; p < n; ++p) {
    const PassageRecord& rec = index.passages()[p];
    const std::size_t len = rec.end - rec.start;
    for (std::size_t i = rec.first_entry; i < rec.first_entry + len; ++i) {
      const auto& v = index.entries()[i].vector;
      double norm = 0.0;
      for (float x : v) norm += static_cast<double>(x) * x;
      if (norm == 0.0) continue;
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < dim; ++k) passage_means_[p][k] += v[k] / norm / static_cast<double>(len);
    }
  }
  if (n == 0) return;
  std::size_t lists = config_.lists;
  if (lists == 0) lists = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  lists = std::clamp<std::size_t>(lists, 1, n);

  Rng rng(config_.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t c = 0; c < lists; ++c) centroids_.push_back(passage_means_[order[c]]);

  std::vector<std::size_t> assign(n, 0);
  for (std::size_t it = 0; it <= config_.iterations; ++it) {
    for (std::size_t p = 0; p < n; ++p) {
      double best = -INFINITY;
      for (std::size_t c = 0; c < lists; ++c) {
        const double s = nn::dot(passage_means_[p], centroids_[c]);
        if (s > best) {
          best = s;
          assign[p] = c;
        }
      }
    }
    if (it == config_.iterations) break;
    std::vector<Vector> sums(lists, Vector(dim, 0.0));
    std::vector<std::size_t> counts(lists, 0);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t k = 0; k < dim; ++k) sums[assign[p]][k] += passage_means_[p][k];
      ++counts[assign[p]];
    }
    for (std::size_t c = 0; c < lists; ++c) {
      if (counts[c] == 0) continue;  // keep the old centroid for an empty list
      const double norm = nn::l2_norm(sums[c]);
      if (norm > 0.0) {
        for (double& x : sums[c]) x /= norm;
        centroids_[c] = std::move(sums[c]);
      }
    }
  }
  lists_.assign(lists, {});
  for (std::size_t p = 0; p < n; ++p) lists_[assign[p]].push_back(p);
}

std::vector<ScoredPassage> IvfBackend::search(const spaces::QueryVector& q, std::size_t top_k) const {
  if (top_k == 0) throw InvalidArgumentError("top_k must be at least 1");
  if (centroids_.empty()) return {};
  const Vector qcat = query_concat(q, *index_);
  std::vector<std::pair<double, std::size_t>> lists;
  for (std::size_t c = 0; c < centroids_.size(); ++c) lists.emplace_back(-nn::dot(qcat, centroids_[c]), c);
  const std::size_t probe = std::min(probe_count(), lists.size());
  std::partial_sort(lists.begin(), lists.begin() + static_cast<std::ptrdiff_t>(probe), lists.end());
  std::vector<Ranked> ranked;
  for (std::size_t l = 0; l < probe; ++l) {
    for (std::size_t p : lists_[lists[l].second]) {
      ranked.push_back({p, score_record(qcat, *index_, index_->passages()[p]).score});
    }
  }
  const std::size_t k = std::min(top_k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    ranked_before);
  std::vector<ScoredPassage> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    out.push_back(score_record(qcat, *index_, index_->passages()[ranked[r].passage]));
  }
  return out;
}

std::size_t IvfBackend::probe_count() const noexcept {
  if (config_.nprobe != 0) return config_.nprobe;
  return std::max<std::size_t>(1, (centroids_.size() * 3 + 4) / 5);
}

}  // namespace cdv::index
