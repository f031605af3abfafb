#include "cdv/cdv_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdv/adam.hpp"
#include "cdv/checkpoint.hpp"
#include "cdv/error.hpp"

namespace cdv::model {

CdvModel::CdvModel(const CdvDims& dims)
    : blstm(dims.input_dim, dims.hidden),
      discourse_layer(2 * dims.hidden, dims.discourse, nn::Activation::kTanh),
      entity_decoder(dims.discourse, dims.entity_dim, nn::Activation::kTanh),
      aspect_decoder(dims.discourse, dims.aspect_dim, nn::Activation::kTanh),
      dims_(dims) {}

void CdvModel::init(Rng& rng, double scale) {
  blstm.init(rng, scale);
  discourse_layer.init_uniform(rng, scale);
  entity_decoder.init_uniform(rng, scale);
  aspect_decoder.init_uniform(rng, scale);
}

nn::ParamList CdvModel::params() {
  nn::ParamList out;
  blstm.collect(out, "cdv.blstm");
  discourse_layer.collect(out, "cdv.discourse");
  entity_decoder.collect(out, "cdv.entity_decoder");
  aspect_decoder.collect(out, "cdv.aspect_decoder");
  return out;
}

DiscourseMatrix CdvModel::encode(const std::vector<Vector>& sentence_vectors,
                                 const std::string& doc_id, CdvTrace* trace) const {
  if (sentence_vectors.empty()) throw EmptyInputError("cannot encode an empty document");
  const std::size_t steps = sentence_vectors.size();
  DiscourseMatrix out;
  out.doc_id = doc_id;
  out.discourse.reserve(steps);
  out.entity.reserve(steps);
  out.aspect.reserve(steps);
  if (trace != nullptr) {
    trace->pre_norm.assign(steps, {});
    trace->discourse.assign(steps, {});
    trace->entity.assign(steps, {});
    trace->aspect.assign(steps, {});
  }
  const nn::BlstmOutput states =
      blstm.forward(sentence_vectors, trace != nullptr ? &trace->blstm : nullptr);
  for (std::size_t t = 0; t < steps; ++t) {
    const Vector joined = nn::concat(states.forward[t], states.backward[t]);
    Vector pre = discourse_layer.forward(joined, trace != nullptr ? &trace->discourse[t] : nullptr);
    Vector delta = nn::l2_normalize(pre);
    out.entity.push_back(entity_decoder.forward(delta, trace != nullptr ? &trace->entity[t] : nullptr));
    out.aspect.push_back(aspect_decoder.forward(delta, trace != nullptr ? &trace->aspect[t] : nullptr));
    if (trace != nullptr) trace->pre_norm[t] = std::move(pre);
    out.discourse.push_back(std::move(delta));
  }
  if (trace != nullptr) trace->valid = true;
  return out;
}

std::pair<Vector, Vector> CdvModel::decode(const Vector& discourse) const {
  check_dims(dims_.discourse, discourse.size(), "discourse vector");
  return {entity_decoder.forward(discourse), aspect_decoder.forward(discourse)};
}

void CdvModel::backward(const CdvTrace& trace, const std::vector<Vector>& d_entity,
                        const std::vector<Vector>& d_aspect) {
  if (!trace.valid) throw StateError("cdv backward called before forward");
  const std::size_t steps = trace.pre_norm.size();
  check_dims(steps, d_entity.size(), "cdv entity gradient length");
  check_dims(steps, d_aspect.size(), "cdv aspect gradient length");
  const std::size_t hidden = dims_.hidden;
  std::vector<Vector> d_fwd(steps), d_bwd(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Vector d_delta = entity_decoder.backward(trace.entity[t], d_entity[t]);
    const Vector d_delta_a = aspect_decoder.backward(trace.aspect[t], d_aspect[t]);
    for (std::size_t k = 0; k < d_delta.size(); ++k) d_delta[k] += d_delta_a[k];
    const Vector d_pre = nn::l2_normalize_backward(trace.pre_norm[t], d_delta);
    const Vector d_joined = discourse_layer.backward(trace.discourse[t], d_pre);
    d_fwd[t].assign(d_joined.begin(), d_joined.begin() + static_cast<std::ptrdiff_t>(hidden));
    d_bwd[t].assign(d_joined.begin() + static_cast<std::ptrdiff_t>(hidden), d_joined.end());
  }
  blstm.backward(trace.blstm, d_fwd, d_bwd);
}

double CdvModel::accumulate(const std::vector<Vector>& sentence_vectors,
                            const TrainingTargets& targets, nn::CdvLossKind loss,
                            double grad_scale) {
  CdvTrace trace;
  const DiscourseMatrix m = encode(sentence_vectors, "", &trace);
  nn::CdvLossResult result =
      nn::cdv_loss(loss, m.entity, m.aspect, targets.entity, targets.aspect, targets.include);
  if (grad_scale != 1.0) {
    for (auto& g : result.d_entity) {
      for (double& x : g) x *= grad_scale;
    }
    for (auto& g : result.d_aspect) {
      for (double& x : g) x *= grad_scale;
    }
  }
  backward(trace, result.d_entity, result.d_aspect);
  return result.value;
}

namespace {

nn::Checkpoint model_checkpoint(const CdvModel& model) {
  nn::Checkpoint ckpt;
  auto& m = ckpt.metadata;
  const CdvDims& d = model.dims();
  m["kind"] = "cdv_model";
  m["dims"] = {{"input", d.input_dim},
               {"hidden", d.hidden},
               {"discourse", d.discourse},
               {"entity", d.entity_dim},
               {"aspect", d.aspect_dim}};
  m["seed"] = model.seed;
  m["word_table_fingerprint"] = model.word_table_fingerprint;
  m["entity_space_fingerprint"] = model.entity_space_fingerprint;
  m["aspect_space_fingerprint"] = model.aspect_space_fingerprint;
  m["hyperparameters"] = model.hyperparameters;
  CdvModel copy = model;
  ckpt.add_params(copy.params());
  return ckpt;
}

}  // namespace

void CdvModel::save(const std::filesystem::path& path) const { model_checkpoint(*this).save(path); }

std::string CdvModel::to_bytes() const { return model_checkpoint(*this).to_bytes(); }

std::uint64_t CdvModel::fingerprint() const { return model_checkpoint(*this).fingerprint(); }

CdvModel CdvModel::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::Checkpoint::load(path);
  const auto& m = ckpt.metadata;
  if (m.value("kind", "") != "cdv_model") {
    throw ParseError(path.string() + " is not a cdv model checkpoint");
  }
  CdvDims dims;
  const auto& jd = m.at("dims");
  dims.input_dim = jd.at("input").get<std::size_t>();
  dims.hidden = jd.at("hidden").get<std::size_t>();
  dims.discourse = jd.at("discourse").get<std::size_t>();
  dims.entity_dim = jd.at("entity").get<std::size_t>();
  dims.aspect_dim = jd.at("aspect").get<std::size_t>();
  CdvModel model(dims);
  ckpt.restore_params(model.params());
  model.seed = m.at("seed").get<std::uint64_t>();
  model.word_table_fingerprint = m.at("word_table_fingerprint").get<std::uint64_t>();
  model.entity_space_fingerprint = m.at("entity_space_fingerprint").get<std::uint64_t>();
  model.aspect_space_fingerprint = m.at("aspect_space_fingerprint").get<std::uint64_t>();
  model.hyperparameters = m.at("hyperparameters");
  return model;
}

std::vector<Vector> sentence_vectors(const corpus::Document& doc,
                                     const text::WordEmbeddingTable& words) {
  std::vector<Vector> out;
  out.reserve(doc.sentence_count());
  for (const corpus::Sentence* s : doc.sentences()) out.push_back(text::sigma_avg(*s, words));
  return out;
}

namespace {

bool mean_into(const std::vector<Vector>& vs, Vector& out) {
  if (vs.empty()) return false;
  out.assign(vs.front().size(), 0.0);
  for (const auto& v : vs) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
  }
  for (double& x : out) x /= static_cast<double>(vs.size());
  return true;
}

}  // namespace

TrainingTargets build_targets(const corpus::Document& doc,
                              const std::vector<corpus::SentenceLabels>& labels,
                              const spaces::EntitySpace& entities,
                              const spaces::AspectSpace& aspects) {
  check_dims(doc.sentence_count(), labels.size(), "sentence labels");
  TrainingTargets targets;
  targets.entity.resize(labels.size());
  targets.aspect.resize(labels.size());
  targets.include.assign(labels.size(), true);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    std::vector<Vector> ev, av;
    for (const auto& id : labels[t].entities) {
      spaces::EntityRef ref{id, id == doc.title_entity_id ? doc.title : std::string()};
      try {
        ev.push_back(spaces::embed_entity(entities, ref));
      } catch (const UnresolvableError&) {
        // Linked entities outside the knowledge base carry no mention.
      }
    }
    for (const auto& a : labels[t].aspects) {
      try {
        av.push_back(spaces::embed_aspect(aspects, a));
      } catch (const UnresolvableError&) {
      }
    }
    const bool ok_e = mean_into(ev, targets.entity[t]);
    const bool ok_a = mean_into(av, targets.aspect[t]);
    if (!ok_e) targets.entity[t].assign(entities.dim(), 0.0);
    if (!ok_a) targets.aspect[t].assign(aspects.dim(), 0.0);
    targets.include[t] = ok_e && ok_a;
  }
  return targets;
}

DiscourseMatrix encode_document(const CdvModel& model, const std::vector<Vector>& sentence_vectors,
                                const std::string& doc_id) {
  return model.encode(sentence_vectors, doc_id);
}

std::vector<PreparedDocument> prepare_training_set(const std::vector<corpus::Document>& docs,
                                                   const text::WordEmbeddingTable& words,
                                                   const spaces::EntitySpace& entities,
                                                   const spaces::AspectSpace& aspects,
                                                   const CdvTrainConfig& config) {
  std::vector<PreparedDocument> out;
  out.reserve(docs.size());
  for (const auto& original : docs) {
    const corpus::Document doc =
        corpus::truncate_for_training(original, config.max_sentences, config.max_tokens);
    PreparedDocument p;
    p.doc_id = doc.doc_id;
    p.inputs = sentence_vectors(doc, words);
    p.targets = build_targets(doc, corpus::derive_labels(doc), entities, aspects);
    if (std::none_of(p.targets.include.begin(), p.targets.include.end(), [](bool b) { return b; })) {
      continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

double accumulate_batch(CdvModel& model, std::vector<const PreparedDocument*> batch,
                        nn::CdvLossKind loss) {
  if (batch.empty()) return 0.0;
  std::sort(batch.begin(), batch.end(),
            [](const PreparedDocument* a, const PreparedDocument* b) { return a->doc_id < b->doc_id; });
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const PreparedDocument* doc : batch) {
    total += model.accumulate(doc->inputs, doc->targets, loss, scale);
  }
  return total;
}

CdvModel train_cdv(const std::vector<corpus::Document>& docs,
                   std::shared_ptr<const text::WordEmbeddingTable> words,
                   const spaces::EntitySpace& entities, const spaces::AspectSpace& aspects,
                   const CdvTrainConfig& config, std::vector<EpochLog>* log,
                   const EpochCallback& on_epoch) {
  const std::vector<PreparedDocument> prepared =
      prepare_training_set(docs, *words, entities, aspects, config);
  if (prepared.empty()) throw EmptyInputError("no labeled sentences to train the cdv model on");

  CdvDims dims;
  dims.input_dim = text::sentence_vector_dim(*words);
  dims.hidden = config.hidden;
  dims.discourse = config.discourse;
  dims.entity_dim = entities.dim();
  dims.aspect_dim = aspects.dim();
  CdvModel model(dims);
  Rng rng(config.seed);
  model.init(rng, config.init_scale);
  model.seed = config.seed;
  model.word_table_fingerprint = words->fingerprint();
  model.entity_space_fingerprint = entities.fingerprint();
  model.aspect_space_fingerprint = aspects.fingerprint();
  model.hyperparameters = {{"epochs", config.epochs},
                           {"batch", config.batch},
                           {"learning_rate", config.learning_rate},
                           {"epoch_decay", config.epoch_decay},
                           {"weight_decay", config.weight_decay},
                           {"loss", config.loss == nn::CdvLossKind::kRobust ? "robust" : "plain"},
                           {"max_sentences", config.max_sentences},
                           {"max_tokens", config.max_tokens},
                           {"init_scale", config.init_scale}};

  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.epoch_decay = config.epoch_decay;
  adam_cfg.weight_decay = config.weight_decay;
  nn::Adam adam(adam_cfg);
  nn::ParamList params = model.params();

  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = std::max<std::size_t>(1, config.batch);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<const PreparedDocument*> batch;
      for (std::size_t b = start; b < end; ++b) batch.push_back(&prepared[order[b]]);
      nn::zero_grads(params);
      total += accumulate_batch(model, batch, config.loss);
      adam.step(params);
    }
    const EpochLog entry{epoch, total / static_cast<double>(prepared.size()), adam.learning_rate()};
    if (!std::isfinite(entry.mean_loss)) {
      throw StateError("cdv training diverged at epoch " + std::to_string(epoch));
    }
    if (log != nullptr) log->push_back(entry);
    if (on_epoch) on_epoch(entry);
    adam.end_epoch();
  }
  return model;
}

}  // namespace cdv::model
