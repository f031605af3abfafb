#include "cdv/spaces.hpp"

#include <algorithm>
#include <numeric>

#include "cdv/adam.hpp"
#include "cdv/checkpoint.hpp"
#include "cdv/error.hpp"
#include "cdv/loss.hpp"
#include "cdv/rng.hpp"

namespace cdv::spaces {

BloomEncoder::BloomEncoder(std::size_t bits, std::size_t hashes, std::uint64_t seed)
    : bits_(bits), hashes_(hashes), seed_(seed) {
  if (hashes_ == 0) throw InvalidArgumentError("bloom encoder needs at least one hash");
  if (bits_ < hashes_) throw InvalidArgumentError("bloom encoder needs bits >= hashes");
  for (std::size_t k = 0; k < hashes_; ++k) hash_seeds_.push_back(mix64(seed_ + k * 0x9e37));
}

std::vector<std::size_t> BloomEncoder::positions(std::string_view id) const {
  if (id.empty()) throw InvalidArgumentError("bloom encoding of an empty id");
  std::vector<std::size_t> out;
  out.reserve(hashes_);
  for (std::uint64_t s : hash_seeds_) out.push_back(hash64(id, s) % bits_);
  return out;
}

std::vector<bool> BloomEncoder::encode(std::string_view id) const {
  std::vector<bool> bitset(bits_, false);
  for (std::size_t p : positions(id)) bitset[p] = true;
  return bitset;
}

std::vector<bool> BloomEncoder::encode_all(const std::set<std::string>& ids) const {
  std::vector<bool> bitset(bits_, false);
  for (const auto& id : ids) {
    for (std::size_t p : positions(id)) bitset[p] = true;
  }
  return bitset;
}

EntityEncoder::EntityEncoder(std::shared_ptr<const text::WordEmbeddingTable> words,
                             std::size_t hidden, std::size_t dim, std::size_t bloom_bits)
    : blstm(words->dim(), hidden),
      embed(hidden, dim, nn::Activation::kTanh),
      output(dim, bloom_bits, nn::Activation::kSigmoid),
      words_(std::move(words)) {}

void EntityEncoder::init(Rng& rng, double scale) {
  blstm.init(rng, scale);
  embed.init_uniform(rng, scale);
  output.init_uniform(rng, scale);
}

nn::ParamList EntityEncoder::params() {
  nn::ParamList out;
  blstm.collect(out, "encoder.blstm");
  embed.collect(out, "encoder.embed");
  output.collect(out, "encoder.output");
  return out;
}

namespace {

std::vector<Vector> lookup_all(const text::WordEmbeddingTable& words,
                               const std::vector<std::string>& tokens) {
  std::vector<Vector> inputs;
  inputs.reserve(tokens.size());
  for (const auto& t : tokens) inputs.push_back(words.lookup(t));
  return inputs;
}

Vector summarize(const nn::BlstmOutput& states) {
  const Vector& last_fwd = states.forward.back();
  const Vector& first_bwd = states.backward.front();
  Vector s(last_fwd.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = 0.5 * (last_fwd[k] + first_bwd[k]);
  return s;
}

}  // namespace

Vector EntityEncoder::embed_vectors(const std::vector<Vector>& inputs) const {
  if (inputs.empty()) throw EmptyInputError("cannot embed an empty sentence");
  return embed.forward(summarize(blstm.forward(inputs)));
}

Vector EntityEncoder::embed_tokens(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw EmptyInputError("cannot embed an empty sentence");
  return embed_vectors(lookup_all(*words_, tokens));
}

Vector EntityEncoder::forward(const std::vector<Vector>& inputs, EncoderTrace* trace,
                              const Vector* dropout_scale) const {
  if (inputs.empty()) throw EmptyInputError("cannot encode an empty sentence");
  EncoderTrace local;
  EncoderTrace& t = trace != nullptr ? *trace : local;
  t.inputs = inputs;
  const nn::BlstmOutput states = blstm.forward(inputs, &t.blstm);
  t.summary = summarize(states);
  t.dropout_scale.clear();
  if (dropout_scale != nullptr) {
    check_dims(t.summary.size(), dropout_scale->size(), "dropout mask");
    t.dropout_scale = *dropout_scale;
    for (std::size_t k = 0; k < t.summary.size(); ++k) t.summary[k] *= t.dropout_scale[k];
  }
  const Vector emb = embed.forward(t.summary, &t.embed);
  Vector scores = output.forward(emb, &t.output);
  t.valid = true;
  return scores;
}

void EntityEncoder::backward(const EncoderTrace& trace, const Vector& d_scores) {
  if (!trace.valid) throw StateError("encoder backward called before forward");
  const Vector d_emb = output.backward(trace.output, d_scores);
  Vector d_summary = embed.backward(trace.embed, d_emb);
  if (!trace.dropout_scale.empty()) {
    for (std::size_t k = 0; k < d_summary.size(); ++k) d_summary[k] *= trace.dropout_scale[k];
  }
  const std::size_t n = trace.inputs.size();
  const std::size_t hidden = blstm.hidden_dim();
  std::vector<Vector> d_fwd(n, Vector(hidden, 0.0)), d_bwd(n, Vector(hidden, 0.0));
  for (std::size_t k = 0; k < hidden; ++k) {
    d_fwd[n - 1][k] = 0.5 * d_summary[k];
    d_bwd[0][k] = 0.5 * d_summary[k];
  }
  blstm.backward(trace.blstm, d_fwd, d_bwd);
}

EntityEncoder train_encoder(std::shared_ptr<const text::WordEmbeddingTable> words,
                            const std::vector<EncoderExample>& examples,
                            const EncoderConfig& config, EncoderTrainingStats* stats) {
  if (examples.empty()) throw EmptyInputError("encoder training set is empty");
  Rng rng(config.seed);
  EntityEncoder encoder(words, config.hidden, config.dim, config.bloom_bits);
  encoder.init(rng, config.init_scale);
  nn::ParamList params = encoder.params();

  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.epoch_decay = config.epoch_decay;
  adam_cfg.weight_decay = config.weight_decay;
  nn::Adam adam(adam_cfg);

  std::vector<std::vector<Vector>> inputs;
  inputs.reserve(examples.size());
  for (const auto& ex : examples) inputs.push_back(lookup_all(*words, ex.tokens));

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, config.batch);
  const double keep = 1.0 - config.dropout;
  if (stats != nullptr) stats->examples = examples.size();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      nn::zero_grads(params);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        Vector mask;
        if (config.dropout > 0.0) {
          mask.resize(config.hidden);
          for (double& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        }
        EncoderTrace trace;
        const Vector scores =
            encoder.forward(inputs[idx], &trace, mask.empty() ? nullptr : &mask);
        nn::BpmllResult loss = nn::bpmll_loss(scores, examples[idx].target);
        epoch_loss += loss.value;
        for (double& g : loss.d_scores) g *= scale;
        encoder.backward(trace, loss.d_scores);
      }
      adam.step(params);
    }
    if (stats != nullptr) {
      stats->epochs.push_back(
          {epoch, epoch_loss / static_cast<double>(examples.size()), adam.learning_rate()});
    }
    adam.end_epoch();
  }
  return encoder;
}

EntityEncoder train_entity_encoder(const std::vector<corpus::KnowledgeBaseEntry>& kb,
                                   std::shared_ptr<const text::WordEmbeddingTable> words,
                                   const BloomEncoder& bloom, const EncoderConfig& config,
                                   EncoderTrainingStats* stats) {
  check_dims(config.bloom_bits, bloom.bits(), "bloom width");
  std::vector<EncoderExample> examples;
  std::size_t skipped = 0;
  for (const auto& entry : kb) {
    const auto target = bloom.encode(entry.entity_id);
    std::size_t used = 0;
    for (const auto& d : entry.descriptions) {
      auto tokens = corpus::tokenize(d);
      if (tokens.empty()) continue;
      examples.push_back({std::move(tokens), target});
      ++used;
    }
    if (used == 0) ++skipped;
  }
  EntityEncoder enc = train_encoder(std::move(words), examples, config, stats);
  if (stats != nullptr) stats->skipped = skipped;
  return enc;
}

std::vector<HeadingContext> heading_contexts(const std::vector<corpus::Document>& docs) {
  std::vector<HeadingContext> pairs;
  for (const auto& doc : docs) {
    const auto labels = corpus::derive_labels(doc);
    const auto sentences = doc.sentences();
    for (std::size_t t = 0; t < sentences.size(); ++t) {
      pairs.push_back({sentences[t]->tokens, labels[t].aspects});
    }
  }
  return pairs;
}

EntityEncoder train_aspect_encoder(const std::vector<HeadingContext>& pairs,
                                   std::shared_ptr<const text::WordEmbeddingTable> words,
                                   const BloomEncoder& bloom, const EncoderConfig& config,
                                   EncoderTrainingStats* stats) {
  check_dims(config.bloom_bits, bloom.bits(), "bloom width");
  std::vector<EncoderExample> examples;
  for (const auto& p : pairs) {
    if (p.tokens.empty() || p.aspects.empty()) continue;
    examples.push_back({p.tokens, bloom.encode_all(p.aspects)});
  }
  return train_encoder(std::move(words), examples, config, stats);
}

EmbeddingSpace::EmbeddingSpace(SpaceKind kind, EntityEncoder encoder, BloomEncoder bloom)
    : kind_(kind), encoder_(std::move(encoder)), bloom_(std::move(bloom)) {}

const Vector* EmbeddingSpace::find(const std::string& key) const {
  auto it = table_.find(key);
  return it == table_.end() ? nullptr : &it->second;
}

void EmbeddingSpace::set(const std::string& key, Vector vec) {
  check_dims(dim(), vec.size(), "space vector");
  table_[key] = std::move(vec);
}

namespace {

nn::Checkpoint space_checkpoint(const EmbeddingSpace& space) {
  nn::Checkpoint ckpt;
  auto& m = ckpt.metadata;
  m["kind"] = space.kind() == SpaceKind::kEntity ? "entity_space" : "aspect_space";
  m["dim"] = space.dim();
  m["hidden"] = space.encoder().blstm.hidden_dim();
  m["input_dim"] = space.encoder().blstm.input_dim();
  m["bloom_bits"] = space.bloom().bits();
  m["bloom_hashes"] = space.bloom().hashes();
  m["bloom_seed"] = space.bloom().seed();
  m["bloom_hash_seeds"] = space.bloom().hash_seeds();
  m["word_table_fingerprint"] = space.encoder().words().fingerprint();
  std::vector<std::string> keys;
  nn::Tensor2 table(space.table().size(), space.dim());
  std::size_t r = 0;
  for (const auto& [key, vec] : space.table()) {
    keys.push_back(key);
    std::copy(vec.begin(), vec.end(), table.row(r++).begin());
  }
  m["labels"] = keys;
  m["names"] = space.names();
  EntityEncoder encoder = space.encoder();
  ckpt.add_params(encoder.params());
  ckpt.add("table", std::move(table));
  return ckpt;
}

}  // namespace

void EmbeddingSpace::save(const std::filesystem::path& path) const {
  space_checkpoint(*this).save(path);
}

std::string EmbeddingSpace::to_bytes() const { return space_checkpoint(*this).to_bytes(); }

std::uint64_t EmbeddingSpace::fingerprint() const {
  return space_checkpoint(*this).fingerprint();
}

EmbeddingSpace EmbeddingSpace::load(const std::filesystem::path& path,
                                    std::shared_ptr<const text::WordEmbeddingTable> words) {
  const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
  const auto& m = ckpt.metadata;
  const std::string kind = m.value("kind", "");
  if (kind != "entity_space" && kind != "aspect_space") {
    throw ParseError(path.string() + " is not an embedding space checkpoint");
  }
  if (m.at("word_table_fingerprint").get<std::uint64_t>() != words->fingerprint()) {
    throw IntegrityError(path.string() + " was trained with a different word table");
  }
  check_dims(m.at("input_dim").get<std::size_t>(), words->dim(), "space word dimension");
  EntityEncoder encoder(words, m.at("hidden").get<std::size_t>(), m.at("dim").get<std::size_t>(),
                        m.at("bloom_bits").get<std::size_t>());
  ckpt.restore_params(encoder.params());
  BloomEncoder bloom(m.at("bloom_bits").get<std::size_t>(), m.at("bloom_hashes").get<std::size_t>(),
                     m.at("bloom_seed").get<std::uint64_t>());
  EmbeddingSpace space(kind == "entity_space" ? SpaceKind::kEntity : SpaceKind::kAspect,
                       std::move(encoder), std::move(bloom));
  const auto keys = m.at("labels").get<std::vector<std::string>>();
  const nn::Tensor2& table = ckpt.get("table");
  check_dims(keys.size(), table.rows(), "space table rows");
  for (std::size_t r = 0; r < keys.size(); ++r) {
    auto row = table.row(r);
    space.set(keys[r], Vector(row.begin(), row.end()));
  }
  for (const auto& [key, name] : m.at("names").items()) {
    space.set_name(key, name.get<std::string>());
  }
  return space;
}

namespace {

Vector mean_of(const std::vector<Vector>& vs, std::size_t dim) {
  Vector out(dim, 0.0);
  for (const auto& v : vs) {
    for (std::size_t k = 0; k < dim; ++k) out[k] += v[k];
  }
  for (double& x : out) x /= static_cast<double>(vs.size());
  return out;
}

}  // namespace

EntitySpace build_entity_space(const EntityEncoder& encoder, const BloomEncoder& bloom,
                               const std::vector<corpus::KnowledgeBaseEntry>& kb) {
  EntitySpace space(SpaceKind::kEntity, encoder, bloom);
  for (const auto& entry : kb) {
    std::vector<Vector> embeddings;
    for (const auto& d : entry.descriptions) {
      auto tokens = corpus::tokenize(d);
      if (!tokens.empty()) embeddings.push_back(encoder.embed_tokens(tokens));
    }
    if (embeddings.empty()) {
      auto tokens = corpus::tokenize(entry.name);
      if (tokens.empty()) continue;
      embeddings.push_back(encoder.embed_tokens(tokens));
    }
    space.set(entry.entity_id, mean_of(embeddings, encoder.dim()));
    space.set_name(entry.entity_id, entry.name);
  }
  return space;
}

AspectSpace build_aspect_space(const EntityEncoder& encoder, const BloomEncoder& bloom,
                               const std::vector<HeadingContext>& pairs) {
  AspectSpace space(SpaceKind::kAspect, encoder, bloom);
  std::map<std::string, std::vector<Vector>> grouped;
  for (const auto& p : pairs) {
    if (p.tokens.empty()) continue;
    const Vector e = encoder.embed_tokens(p.tokens);
    for (const auto& a : p.aspects) grouped[a].push_back(e);
  }
  for (const auto& [aspect, embeddings] : grouped) {
    space.set(aspect, mean_of(embeddings, encoder.dim()));
    space.set_name(aspect, aspect);
  }
  return space;
}

Vector embed_entity(const EntitySpace& space, const EntityRef& entity) {
  if (!entity.id.empty()) {
    if (const Vector* v = space.find(entity.id)) return *v;
  }
  const auto tokens = corpus::tokenize(entity.mention);
  if (tokens.empty()) {
    throw UnresolvableError("entity '" + entity.id +
                            "' is not in the knowledge base and has no usable mention");
  }
  return space.encoder().embed_tokens(tokens);
}

Vector embed_aspect(const AspectSpace& space, std::string_view aspect) {
  const std::string key(aspect);
  if (const Vector* v = space.find(key)) return *v;
  const auto fragments = corpus::heading_normalize(aspect);
  if (!fragments.empty()) {
    std::vector<Vector> known;
    for (const auto& f : fragments) {
      if (const Vector* v = space.find(f)) known.push_back(*v);
    }
    if (known.size() == fragments.size()) return mean_of(known, space.dim());
  }
  const auto tokens = corpus::tokenize(aspect);
  if (tokens.empty()) throw UnresolvableError("aspect '" + key + "' has no usable tokens");
  return space.encoder().embed_tokens(tokens);
}

QueryVector build_query(const EntitySpace& entities, const AspectSpace& aspects,
                        const EntityRef& entity, std::string_view aspect) {
  QueryVector q;
  q.entity = embed_entity(entities, entity);
  q.aspect = embed_aspect(aspects, aspect);
  return q;
}

}  // namespace cdv::spaces
