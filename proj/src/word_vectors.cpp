#include "cdv/word_vectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdv/checkpoint.hpp"
#include "cdv/error.hpp"
#include "cdv/rng.hpp"

namespace cdv::text {

namespace {

std::uint32_t fnv1a32(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

bool utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

double sigmoid(double z) {
  if (z > 20.0) return 1.0;
  if (z < -20.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

bool WordEmbeddingTable::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::vector<std::uint32_t> WordEmbeddingTable::ngram_buckets(std::string_view token) const {
  std::vector<std::uint32_t> out;
  if (!has_subwords_ || subwords_.buckets == 0) return out;
  const std::string word = "<" + std::string(token) + ">";
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (utf8_continuation(static_cast<unsigned char>(word[i]))) continue;
    std::string ngram;
    std::size_t j = i;
    for (std::size_t n = 1; j < word.size() && n <= subwords_.max_n; ++n) {
      ngram.push_back(word[j++]);
      while (j < word.size() && utf8_continuation(static_cast<unsigned char>(word[j]))) {
        ngram.push_back(word[j++]);
      }
      if (n >= subwords_.min_n && !(n == 1 && (i == 0 || j == word.size())) &&
          ngram != word) {
        out.push_back(fnv1a32(ngram) % subwords_.buckets);
      }
    }
  }
  return out;
}

Vector WordEmbeddingTable::compose_from_subwords(std::string_view token) const {
  Vector out(dim_, 0.0);
  const auto ids = ngram_buckets(token);
  if (ids.empty()) return out;
  for (std::uint32_t id : ids) {
    auto it = buckets_.find(id);
    if (it == buckets_.end()) continue;
    for (std::size_t k = 0; k < dim_; ++k) out[k] += it->second[k];
  }
  for (double& v : out) v /= static_cast<double>(ids.size());
  return out;
}

Vector WordEmbeddingTable::lookup(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) {
    return vectors_[it->second];
  }
  return compose_from_subwords(token);
}

void WordEmbeddingTable::add(std::string token, Vector vec) {
  check_dims(dim_, vec.size(), "word vector");
  if (index_.count(token) > 0) throw ParseError("duplicate token in word table: " + token);
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  vectors_.push_back(std::move(vec));
}

void WordEmbeddingTable::set_bucket(std::uint32_t bucket, Vector vec) {
  check_dims(dim_, vec.size(), "subword bucket vector");
  buckets_[bucket] = std::move(vec);
}

namespace {

nn::Checkpoint to_checkpoint(const WordEmbeddingTable& t) {
  nn::Checkpoint ckpt;
  ckpt.metadata["kind"] = "word_table";
  ckpt.metadata["dim"] = t.dim();
  ckpt.metadata["has_subwords"] = t.has_subwords();
  ckpt.metadata["min_n"] = t.subword_config().min_n;
  ckpt.metadata["max_n"] = t.subword_config().max_n;
  ckpt.metadata["bucket_count"] = t.subword_config().buckets;
  ckpt.metadata["vocabulary"] = t.tokens();
  nn::Tensor2 vectors(t.vocabulary_size(), t.dim());
  for (std::size_t r = 0; r < t.vocabulary_size(); ++r) {
    const Vector v = t.lookup(t.tokens()[r]);
    std::copy(v.begin(), v.end(), vectors.row(r).begin());
  }
  ckpt.add("vectors", std::move(vectors));
  nn::Tensor2 ids(t.buckets().size(), 1);
  nn::Tensor2 bucket_vectors(t.buckets().size(), t.dim());
  std::size_t r = 0;
  for (const auto& [id, vec] : t.buckets()) {
    ids(r, 0) = static_cast<double>(id);
    std::copy(vec.begin(), vec.end(), bucket_vectors.row(r).begin());
    ++r;
  }
  ckpt.add("bucket_ids", std::move(ids));
  ckpt.add("bucket_vectors", std::move(bucket_vectors));
  return ckpt;
}

}  // namespace

void WordEmbeddingTable::save(const std::filesystem::path& path) const {
  to_checkpoint(*this).save(path);
}

std::string WordEmbeddingTable::to_bytes() const { return to_checkpoint(*this).to_bytes(); }

std::uint64_t WordEmbeddingTable::fingerprint() const {
  return to_checkpoint(*this).fingerprint();
}

WordEmbeddingTable WordEmbeddingTable::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
  const auto& meta = ckpt.metadata;
  if (meta.value("kind", "") != "word_table") {
    throw ParseError(path.string() + " is not a word table checkpoint");
  }
  const std::size_t dim = meta.at("dim").get<std::size_t>();
  WordEmbeddingTable table(dim);
  if (meta.at("has_subwords").get<bool>()) {
    SubwordConfig sub;
    sub.min_n = meta.at("min_n").get<std::size_t>();
    sub.max_n = meta.at("max_n").get<std::size_t>();
    sub.buckets = meta.at("bucket_count").get<std::uint32_t>();
    table = WordEmbeddingTable(dim, sub);
  } else {
    table.subwords_.min_n = meta.at("min_n").get<std::size_t>();
    table.subwords_.max_n = meta.at("max_n").get<std::size_t>();
    table.subwords_.buckets = meta.at("bucket_count").get<std::uint32_t>();
  }
  const auto tokens = meta.at("vocabulary").get<std::vector<std::string>>();
  const nn::Tensor2& vectors = ckpt.get("vectors");
  check_dims(tokens.size(), vectors.rows(), "word table rows");
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    auto row = vectors.row(r);
    table.add(tokens[r], Vector(row.begin(), row.end()));
  }
  const nn::Tensor2& ids = ckpt.get("bucket_ids");
  const nn::Tensor2& bvec = ckpt.get("bucket_vectors");
  for (std::size_t r = 0; r < ids.rows(); ++r) {
    auto row = bvec.row(r);
    table.set_bucket(static_cast<std::uint32_t>(ids(r, 0)), Vector(row.begin(), row.end()));
  }
  return table;
}

WordEmbeddingTable train_skipgram(const std::vector<std::vector<std::string>>& sentences,
                                  const SkipGramConfig& config) {
  if (config.dim == 0) throw InvalidArgumentError("skip-gram dimension must be positive");
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total_tokens = 0;
  for (const auto& s : sentences) {
    for (const auto& tok : s) {
      ++counts[tok];
      ++total_tokens;
    }
  }
  if (total_tokens == 0) throw EmptyInputError("skip-gram training corpus has no tokens");

  // Vocabulary ordered by frequency, then lexicographically.
  std::vector<std::pair<std::string, std::size_t>> vocab;
  for (const auto& [tok, n] : counts) {
    if (n >= config.min_count) vocab.emplace_back(tok, n);
  }
  if (vocab.empty()) throw EmptyInputError("no token reaches the minimum count");
  std::sort(vocab.begin(), vocab.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < vocab.size(); ++i) ids.emplace(vocab[i].first, i);

  const std::size_t dim = config.dim;
  WordEmbeddingTable table = config.use_subwords ? WordEmbeddingTable(dim, config.subwords)
                                                 : WordEmbeddingTable(dim);

  // Each word's input components: its own row plus compacted n-gram rows.
  std::vector<std::uint32_t> bucket_of_row;
  std::unordered_map<std::uint32_t, std::size_t> bucket_rows;
  std::vector<std::vector<std::size_t>> components(vocab.size());
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    components[w].push_back(w);
    for (std::uint32_t b : table.ngram_buckets(vocab[w].first)) {
      auto [it, inserted] = bucket_rows.emplace(b, vocab.size() + bucket_of_row.size());
      if (inserted) bucket_of_row.push_back(b);
      components[w].push_back(it->second);
    }
  }

  Rng rng(config.seed);
  const std::size_t input_rows = vocab.size() + bucket_of_row.size();
  std::vector<double> input(input_rows * dim, 0.0);
  for (std::size_t i = 0; i < vocab.size() * dim; ++i) {
    input[i] = rng.uniform(-1.0, 1.0) / static_cast<double>(dim);
  }
  std::vector<double> output(vocab.size() * dim, 0.0);

  // Unigram^0.75 negative sampling table.
  std::vector<std::size_t> neg_table;
  {
    double z = 0.0;
    for (const auto& v : vocab) z += std::pow(static_cast<double>(v.second), 0.75);
    const std::size_t table_size = std::max<std::size_t>(vocab.size() * 100, 10000);
    for (std::size_t w = 0; w < vocab.size(); ++w) {
      const double share = std::pow(static_cast<double>(vocab[w].second), 0.75) / z;
      const auto n = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(share * static_cast<double>(table_size))));
      neg_table.insert(neg_table.end(), n, w);
    }
  }

  std::vector<std::vector<std::size_t>> encoded;
  encoded.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<std::size_t> row;
    for (const auto& tok : s) {
      if (auto it = ids.find(tok); it != ids.end()) row.push_back(it->second);
    }
    if (row.size() > 1) encoded.push_back(std::move(row));
  }

  Vector hidden(dim), grad(dim);
  const double total_work = static_cast<double>(config.epochs) * static_cast<double>(total_tokens);
  double processed = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& sent : encoded) {
      for (std::size_t pos = 0; pos < sent.size(); ++pos) {
        const double lr =
            config.learning_rate * std::max(1e-4, 1.0 - processed / std::max(1.0, total_work));
        processed += 1.0;
        const auto& comps = components[sent[pos]];
        std::fill(hidden.begin(), hidden.end(), 0.0);
        for (std::size_t row : comps) {
          const double* src = &input[row * dim];
          for (std::size_t k = 0; k < dim; ++k) hidden[k] += src[k];
        }
        for (double& h : hidden) h /= static_cast<double>(comps.size());

        const std::size_t span = 1 + rng.below(std::max<std::size_t>(1, config.window));
        const std::size_t lo = pos >= span ? pos - span : 0;
        const std::size_t hi = std::min(sent.size() - 1, pos + span);
        for (std::size_t ctx = lo; ctx <= hi; ++ctx) {
          if (ctx == pos) continue;
          std::fill(grad.begin(), grad.end(), 0.0);
          for (std::size_t n = 0; n <= config.negatives; ++n) {
            std::size_t target = sent[ctx];
            double label = 1.0;
            if (n > 0) {
              target = neg_table[rng.below(neg_table.size())];
              if (target == sent[ctx]) continue;
              label = 0.0;
            }
            double* out = &output[target * dim];
            double score = 0.0;
            for (std::size_t k = 0; k < dim; ++k) score += hidden[k] * out[k];
            const double g = lr * (label - sigmoid(score));
            for (std::size_t k = 0; k < dim; ++k) {
              grad[k] += g * out[k];
              out[k] += g * hidden[k];
            }
          }
          for (std::size_t row : comps) {
            double* dst = &input[row * dim];
            for (std::size_t k = 0; k < dim; ++k) dst[k] += grad[k];
          }
        }
      }
    }
  }

  for (std::size_t b = 0; b < bucket_of_row.size(); ++b) {
    const double* src = &input[(vocab.size() + b) * dim];
    table.set_bucket(bucket_of_row[b], Vector(src, src + dim));
  }
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    Vector v(dim, 0.0);
    for (std::size_t row : components[w]) {
      const double* src = &input[row * dim];
      for (std::size_t k = 0; k < dim; ++k) v[k] += src[k];
    }
    for (double& x : v) x /= static_cast<double>(components[w].size());
    table.add(vocab[w].first, std::move(v));
  }
  return table;
}

WordEmbeddingTable parse_word_vectors(std::istream& in) {
  WordEmbeddingTable table;
  bool have_dim = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("word vectors line " + std::to_string(line_no) +
                         ": non-numeric component '" + field + "'");
      }
    }
    if (line_no == 1 && values.size() == 1 &&
        token.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "count dim" header
    }
    if (values.empty()) {
      throw ParseError("word vectors line " + std::to_string(line_no) + ": no components");
    }
    if (!have_dim) {
      table = WordEmbeddingTable(values.size());
      have_dim = true;
    } else if (values.size() != table.dim()) {
      throw ParseError("word vectors line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.dim()) + " components, got " +
                       std::to_string(values.size()));
    }
    try {
      table.add(token, std::move(values));
    } catch (const ParseError& e) {
      throw ParseError("word vectors line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

WordEmbeddingTable load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_word_vectors(in);
}

Vector average_tokens(const std::vector<std::string>& tokens, const WordEmbeddingTable& table) {
  Vector out(table.dim(), 0.0);
  if (tokens.empty()) return out;
  for (const auto& tok : tokens) {
    const Vector v = table.lookup(tok);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
  }
  for (double& x : out) x /= static_cast<double>(tokens.size());
  return out;
}

Vector sigma_avg(const corpus::Sentence& sentence, const WordEmbeddingTable& table) {
  Vector out = average_tokens(sentence.tokens, table);
  const auto& f = sentence.flags;
  for (bool bit : {f.begin_document, f.end_document, f.begin_paragraph, f.end_paragraph,
                   f.list_item}) {
    out.push_back(bit ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace cdv::text
