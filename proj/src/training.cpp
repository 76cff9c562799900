#include "akgan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

namespace akgan {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (layers < 0) throw ConfigError("layers must be >= 0");
  if (layers < 1 || layers > 3)
    warn("layers = " + std::to_string(layers) + " is outside the tested range {1, 2, 3}");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(node_dropout >= 0.0 && node_dropout < 1.0))
    throw ConfigError("node_dropout must be in [0, 1)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (eval_k < 1) throw ConfigError("eval_k must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must be in [0, 1)");
  schedule.validate();
}

// ---------------------------------------------------------------- sampling

TripleSampler::TripleSampler(const InteractionSet& data) : data_(data) {
  offsets_.reserve(data.user_count + 1);
  offsets_.push_back(0);
  for (const auto& items : data.train) offsets_.push_back(offsets_.back() + items.size());
}

std::vector<TrainTriple> TripleSampler::sample(std::size_t batch_size,
                                               std::mt19937_64& rng) const {
  AKGAN_EXPECT(positive_count() > 0, "sample_batch: empty training set");
  std::uniform_int_distribution<std::size_t> pick_pair(0, positive_count() - 1);
  std::uniform_int_distribution<ItemId> pick_item(0, static_cast<ItemId>(data_.item_count - 1));
  std::vector<TrainTriple> batch;
  batch.reserve(batch_size);
  std::size_t skipped = 0;
  for (std::size_t n = 0; n < batch_size; ++n) {
    const std::size_t k = pick_pair(rng);
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), k);
    const auto u = static_cast<UserId>(it - offsets_.begin() - 1);
    const auto& items = data_.train[u];
    const ItemId pos = items[k - offsets_[u]];
    if (items.size() >= data_.item_count) {
      ++skipped;
      continue;
    }
    ItemId neg = pick_item(rng);
    while (std::binary_search(items.begin(), items.end(), neg)) neg = pick_item(rng);
    batch.push_back({u, pos, neg});
  }
  if (skipped > 0)
    warn(std::to_string(skipped) + " draw(s) skipped: user interacted with every item");
  return batch;
}

std::vector<TrainTriple> sample_batch(const InteractionSet& data, std::size_t batch_size,
                                      std::mt19937_64& rng) {
  return TripleSampler(data).sample(batch_size, rng);
}

// ---------------------------------------------------------------- objective

double neg_log_sigmoid(double x) {
  // softplus(-x) = max(-x, 0) + log1p(exp(-|x|))
  return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double squared_norm(std::span<const double> v) { return dot(v, v); }

// Forward state of one batch.
struct BatchForward {
  std::vector<UserId> users;
  std::vector<std::int32_t> user_slot;  // per batch triple
  ReceptiveField field;
  Matrix item_reps;  // e* per target row
  std::vector<UserForward> user_fw;
  std::vector<std::vector<std::int32_t>> history_rows;
  double pairwise = 0.0;

  BatchForward(const ModelState& s, std::span<const EntityId> targets)
      : field(s.graph, targets, s.spec.layers) {}
};

std::vector<EntityId> batch_targets(std::span<const TrainTriple> batch, const InteractionSet& data,
                                    std::vector<UserId>& users) {
  users.clear();
  for (const TrainTriple& t : batch) users.push_back(t.user);
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::vector<EntityId> targets;
  for (const TrainTriple& t : batch) {
    targets.push_back(t.positive);
    targets.push_back(t.negative);
  }
  for (UserId u : users) targets.insert(targets.end(), data.train[u].begin(), data.train[u].end());
  return targets;
}

BatchForward run_forward(std::span<const TrainTriple> batch, const ModelState& s) {
  AKGAN_EXPECT(s.spec.attention == false || s.means.mean.size() == s.spec.width(),
               "objective: item means do not match the model width");
  std::vector<UserId> users;
  std::vector<EntityId> targets = batch_targets(batch, s.data, users);
  BatchForward fw(s, targets);
  fw.users = std::move(users);
  fw.item_reps = fw.field.forward(s.params, s.spec.layout, s.spec.combine);

  fw.user_fw.reserve(fw.users.size());
  fw.history_rows.reserve(fw.users.size());
  for (UserId u : fw.users) {
    std::vector<std::int32_t> rows;
    std::vector<std::span<const double>> history;
    for (ItemId i : s.data.train[u]) {
      rows.push_back(fw.field.target_row(i));
      history.push_back(fw.item_reps.row(static_cast<std::size_t>(rows.back())));
    }
    fw.user_fw.push_back(user_forward(s.params.user_vecs.row(u), history, s.means.mean,
                                      s.spec.layout, s.spec.temperature, s.spec.attention));
    fw.history_rows.push_back(std::move(rows));
  }

  for (const TrainTriple& t : batch) {
    const auto slot = std::lower_bound(fw.users.begin(), fw.users.end(), t.user) - fw.users.begin();
    fw.user_slot.push_back(static_cast<std::int32_t>(slot));
    const auto& rep = fw.user_fw[static_cast<std::size_t>(slot)].rep;
    const double diff =
        dot(rep, fw.item_reps.row(static_cast<std::size_t>(fw.field.target_row(t.positive)))) -
        dot(rep, fw.item_reps.row(static_cast<std::size_t>(fw.field.target_row(t.negative))));
    fw.pairwise += neg_log_sigmoid(diff);
  }
  return fw;
}

double full_regularizer(const ParameterStore& params) {
  double r = 0.0;
  for (std::size_t t = 0; t < params.table_count(); ++t) r += squared_norm(params.table(t).data);
  return r;
}

}  // namespace

double pairwise_loss(std::span<const TrainTriple> batch, const ModelState& state) {
  return run_forward(batch, state).pairwise;
}

double bpr_loss(std::span<const TrainTriple> batch, const ModelState& state) {
  const BatchForward fw = run_forward(batch, state);
  double reg = 0.0;
  if (state.l2 > 0.0) {
    if (state.regularization == RegularizationScope::full) {
      reg = full_regularizer(state.params);
    } else {
      for (const auto& [r, j] : fw.field.parameter_entries())
        reg += squared_norm(state.params.entity_blocks[r].row(j));
      for (UserId u : fw.users) reg += squared_norm(state.params.user_vecs.row(u));
    }
  }
  return fw.pairwise + state.l2 * reg;
}

double gradients(std::span<const TrainTriple> batch, const ModelState& state,
                 GradientStore& grads) {
  grads.clear();
  const ModelSpec& spec = state.spec;
  const BatchForward fw = run_forward(batch, state);
  const std::size_t width = spec.width();

  Matrix grad_items(fw.item_reps.rows, width);
  Matrix grad_users(fw.users.size(), width);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const TrainTriple& t = batch[n];
    const auto slot = static_cast<std::size_t>(fw.user_slot[n]);
    const auto& rep = fw.user_fw[slot].rep;
    const auto pos_row = static_cast<std::size_t>(fw.field.target_row(t.positive));
    const auto neg_row = static_cast<std::size_t>(fw.field.target_row(t.negative));
    const double diff = dot(rep, fw.item_reps.row(pos_row)) - dot(rep, fw.item_reps.row(neg_row));
    // d/d diff of -ln sigmoid(diff)
    const double c = -sigmoid(-diff);
    axpy(c, fw.item_reps.row(pos_row), grad_users.row(slot));
    axpy(-c, fw.item_reps.row(neg_row), grad_users.row(slot));
    axpy(c, rep, grad_items.row(pos_row));
    axpy(-c, rep, grad_items.row(neg_row));
  }

  std::vector<double> grad_history(width);
  for (std::size_t s = 0; s < fw.users.size(); ++s) {
    const UserId u = fw.users[s];
    std::fill(grad_history.begin(), grad_history.end(), 0.0);
    user_backward(fw.user_fw[s], state.params.user_vecs.row(u), state.means.mean, spec.layout,
                  spec.temperature, grad_users.row(s), grads.tables[state.params.user_table()].row(u),
                  grad_history);
    const auto& rows = fw.history_rows[s];
    if (rows.empty()) continue;
    const double w = 1.0 / static_cast<double>(rows.size());
    for (std::int32_t r : rows) axpy(w, grad_history, grad_items.row(static_cast<std::size_t>(r)));
  }

  fw.field.backward(grad_items, spec.layout, spec.combine, grads);

  double reg = 0.0;
  if (state.l2 > 0.0) {
    if (state.regularization == RegularizationScope::full) {
      for (std::size_t t = 0; t < state.params.table_count(); ++t) {
        const Matrix& table = state.params.table(t);
        for (std::size_t r = 0; r < table.rows; ++r) axpy(2.0 * state.l2, table.row(r), grads.tables[t].row(r));
      }
      reg = full_regularizer(state.params);
    } else {
      for (std::size_t t = 0; t < state.params.table_count(); ++t) {
        const Matrix& table = state.params.table(t);
        for (std::uint32_t r : grads.tables[t].touched()) {
          reg += squared_norm(table.row(r));
          axpy(2.0 * state.l2, table.row(r), grads.tables[t].row(r));
        }
      }
    }
  }
  return fw.pairwise + state.l2 * reg;
}

// ---------------------------------------------------------------- Adam

AdamState::AdamState(const ParameterStore& params) {
  tables_.resize(params.table_count());
  for (std::size_t t = 0; t < params.table_count(); ++t) {
    tables_[t].width = params.table(t).cols;
    tables_[t].slot.assign(params.table(t).rows, -1);
  }
}

AdamState::Row AdamState::row(std::size_t table, std::size_t r) {
  Table& t = tables_[table];
  if (t.slot[r] < 0) {
    t.slot[r] = static_cast<std::int32_t>(t.steps.size());
    t.steps.push_back(0);
    t.m.resize(t.m.size() + t.width, 0.0);
    t.v.resize(t.v.size() + t.width, 0.0);
  }
  const auto s = static_cast<std::size_t>(t.slot[r]);
  return {{t.m.data() + s * t.width, t.width}, {t.v.data() + s * t.width, t.width}, t.steps[s]};
}

bool AdamState::allocated(std::size_t table, std::size_t r) const {
  return tables_[table].slot[r] >= 0;
}

std::uint64_t AdamState::steps(std::size_t table, std::size_t r) const {
  const Table& t = tables_[table];
  return t.slot[r] < 0 ? 0 : t.steps[static_cast<std::size_t>(t.slot[r])];
}

std::span<const double> AdamState::first_moment(std::size_t table, std::size_t r) const {
  const Table& t = tables_[table];
  if (t.slot[r] < 0) return {};
  return {t.m.data() + static_cast<std::size_t>(t.slot[r]) * t.width, t.width};
}

namespace {

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw LoadError("training state truncated");
}
template <class T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
  write_pod(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <class T>
void read_vec(std::istream& in, std::vector<T>& v) {
  std::uint64_t n = 0;
  read_pod(in, n);
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw LoadError("training state truncated");
}

}  // namespace

void AdamState::save(std::ostream& out) const {
  write_pod(out, static_cast<std::uint64_t>(tables_.size()));
  for (const Table& t : tables_) {
    write_pod(out, static_cast<std::uint64_t>(t.width));
    write_vec(out, t.slot);
    write_vec(out, t.m);
    write_vec(out, t.v);
    write_vec(out, t.steps);
  }
}

void AdamState::load(std::istream& in) {
  std::uint64_t n = 0;
  read_pod(in, n);
  tables_.assign(n, Table{});
  for (Table& t : tables_) {
    std::uint64_t width = 0;
    read_pod(in, width);
    t.width = width;
    read_vec(in, t.slot);
    read_vec(in, t.m);
    read_vec(in, t.v);
    read_vec(in, t.steps);
  }
}

void adam_step(ParameterStore& params, const GradientStore& grads, AdamState& state, double lr) {
  AKGAN_EXPECT(grads.tables.size() == params.table_count(), "adam_step: gradient tables mismatch");
  for (const SparseRows& table : grads.tables)
    for (std::uint32_t r : table.touched())
      for (double g : table.find(r))
        if (!std::isfinite(g)) throw NumericError("non-finite gradient; optimizer step aborted");

  for (std::size_t t = 0; t < grads.tables.size(); ++t) {
    Matrix& values = params.table(t);
    for (std::uint32_t r : grads.tables[t].touched()) {
      const auto g = grads.tables[t].find(r);
      AdamState::Row s = state.row(t, r);
      ++s.steps;
      const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(s.steps));
      const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(s.steps));
      auto theta = values.row(r);
      for (std::size_t k = 0; k < g.size(); ++k) {
        s.m[k] = AdamState::kBeta1 * s.m[k] + (1.0 - AdamState::kBeta1) * g[k];
        s.v[k] = AdamState::kBeta2 * s.v[k] + (1.0 - AdamState::kBeta2) * g[k] * g[k];
        theta[k] -= lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + AdamState::kEpsilon);
      }
    }
  }
}

// ---------------------------------------------------------------- dropout

KnowledgeGraph node_dropout(const KnowledgeGraph& g, double ratio, std::mt19937_64& rng) {
  AKGAN_EXPECT(ratio >= 0.0 && ratio < 1.0, "node_dropout: ratio must be in [0, 1)");
  if (ratio == 0.0) return g;
  std::bernoulli_distribution drop(ratio);
  std::vector<char> masked(g.entity_count());
  for (auto& m : masked) m = drop(rng) ? 1 : 0;
  std::vector<Triple> kept;
  for (const Triple& t : g.directed_triples())
    if (!masked[t.head]) kept.push_back(t);
  return KnowledgeGraph::from_directed(std::move(kept), g.entity_count(),
                                       g.canonical_relation_count());
}

// ---------------------------------------------------------------- trainer

namespace {

// Deterministic split of each user's train list into fit and held-out parts.
void split_validation(const InteractionSet& data, double fraction, std::uint64_t seed,
                      InteractionSet& fit, InteractionSet& validation) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::vector<ItemId>> fit_train(data.user_count), held(data.user_count);
  for (UserId u = 0; u < data.user_count; ++u) {
    std::vector<ItemId> items = data.train[u];
    std::shuffle(items.begin(), items.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(items.size())));
    held[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_held));
    fit_train[u].assign(items.begin() + static_cast<std::ptrdiff_t>(n_held), items.end());
  }
  fit = make_interactions(fit_train, data.test, data.item_count);
  validation = make_interactions(std::move(fit_train), std::move(held), data.item_count);
}

}  // namespace

Trainer::Trainer(TrainConfig config, const KnowledgeGraph& graph, const InteractionSet& data)
    : config_(std::move(config)), graph_(graph), data_(data) {
  config_.validate();
  check_items_prefix(graph, data);
  spec_ = make_model_spec(config_.variant, graph, config_.schedule, config_.temperature,
                          config_.layers);
  if (config_.validation_fraction > 0.0) {
    split_validation(data, config_.validation_fraction, config_.seed, fit_data_, validation_data_);
  } else {
    fit_data_ = data;
    validation_data_ = data;
  }
  params_ = init_model_params(spec_, graph.entity_count(), data.user_count, config_.seed);
  best_params_ = params_;
  adam_ = AdamState(params_);
}

std::mt19937_64 Trainer::epoch_rng(int epoch, std::uint64_t stream) const {
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed),
                    static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

bool Trainer::finished() const {
  return epoch_ >= config_.max_epochs || stale_epochs_ >= config_.patience;
}

EpochLog Trainer::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  ++epoch_;
  std::mt19937_64 dropout_rng = epoch_rng(epoch_, 1);
  std::mt19937_64 batch_rng = epoch_rng(epoch_, 2);

  const KnowledgeGraph view = node_dropout(graph_, config_.node_dropout, dropout_rng);
  ItemBlockMeans means;
  if (spec_.attention)
    means = forward_pass(spec_, params_, view, data_.item_count, static_cast<std::uint64_t>(epoch_)).means;

  const TripleSampler sampler(fit_data_);
  std::size_t batches = (sampler.positive_count() + config_.batch_size - 1) / config_.batch_size;
  if (config_.max_batches_per_epoch > 0) batches = std::min(batches, config_.max_batches_per_epoch);

  GradientStore grads(params_);
  double total_loss = 0.0;
  std::size_t triples = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::vector<TrainTriple> batch = sampler.sample(config_.batch_size, batch_rng);
    if (batch.empty()) continue;
    const ModelState state{spec_, view, fit_data_, params_, means, config_.l2, config_.regularization};
    total_loss += gradients(batch, state, grads);
    triples += batch.size();
    adam_step(params_, grads, adam_, config_.learning_rate);
  }
  if (!params_.all_finite()) throw NumericError("parameters became non-finite");

  const ForwardPass pass = forward_pass(spec_, params_, graph_, data_.item_count,
                                        static_cast<std::uint64_t>(epoch_));
  EpochLog entry;
  entry.epoch = epoch_;
  entry.mean_loss = triples > 0 ? total_loss / static_cast<double>(triples) : 0.0;
  const InteractionSet& eval_data = config_.validation_fraction > 0.0 ? fit_data_ : data_;
  const RankingResult test = evaluate(spec_, params_, pass, eval_data, config_.eval_k);
  entry.recall = test.recall;
  entry.ndcg = test.ndcg;
  const double metric = config_.validation_fraction > 0.0
                            ? evaluate(spec_, params_, pass, validation_data_, config_.eval_k).recall
                            : test.recall;
  if (metric > best_metric_) {
    best_metric_ = metric;
    best_epoch_ = epoch_;
    best_params_ = params_;
    stale_epochs_ = 0;
  } else {
    ++stale_epochs_;
  }
  entry.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log_.push_back(entry);
  return entry;
}

namespace {
constexpr char kStateMagic[8] = {'A', 'K', 'G', 'A', 'N', 'S', 'T', '1'};

void write_matrix(std::ostream& out, const Matrix& m) {
  write_pod(out, static_cast<std::uint64_t>(m.rows));
  write_pod(out, static_cast<std::uint64_t>(m.cols));
  write_vec(out, m.data);
}
void read_matrix(std::istream& in, Matrix& m) {
  std::uint64_t rows = 0, cols = 0;
  read_pod(in, rows);
  read_pod(in, cols);
  m.rows = rows;
  m.cols = cols;
  read_vec(in, m.data);
  if (m.data.size() != rows * cols) throw LoadError("training state: matrix size mismatch");
}
void write_params(std::ostream& out, const ParameterStore& p) {
  write_pod(out, static_cast<std::uint64_t>(p.table_count()));
  for (std::size_t t = 0; t < p.table_count(); ++t) write_matrix(out, p.table(t));
}
void read_params(std::istream& in, ParameterStore& p) {
  std::uint64_t n = 0;
  read_pod(in, n);
  if (n == 0) throw LoadError("training state: no parameter tables");
  p.entity_blocks.assign(n - 1, Matrix{});
  for (std::size_t t = 0; t < n; ++t) read_matrix(in, p.table(t));
}
}  // namespace

void Trainer::save_state(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(kStateMagic, sizeof kStateMagic);
  write_pod(out, static_cast<std::int32_t>(epoch_));
  write_pod(out, static_cast<std::int32_t>(best_epoch_));
  write_pod(out, best_metric_);
  write_pod(out, static_cast<std::int32_t>(stale_epochs_));
  write_params(out, params_);
  write_params(out, best_params_);
  adam_.save(out);
  write_pod(out, static_cast<std::uint64_t>(log_.size()));
  for (const EpochLog& e : log_) write_pod(out, e);
  if (!out) throw LoadError("failed writing " + path.string());
}

void Trainer::load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kStateMagic)) throw LoadError("training state: bad magic");
  std::int32_t epoch = 0, best_epoch = 0, stale = 0;
  read_pod(in, epoch);
  read_pod(in, best_epoch);
  read_pod(in, best_metric_);
  read_pod(in, stale);
  ParameterStore params, best;
  read_params(in, params);
  read_params(in, best);
  if (params.table_count() != params_.table_count() ||
      params.user_vecs.cols != params_.user_vecs.cols)
    throw LoadError("training state does not match the model layout");
  for (std::size_t t = 0; t < params.table_count(); ++t)
    if (params.table(t).rows != params_.table(t).rows || params.table(t).cols != params_.table(t).cols)
      throw LoadError("training state does not match the model layout");
  params_ = std::move(params);
  best_params_ = std::move(best);
  adam_.load(in);
  std::uint64_t n = 0;
  read_pod(in, n);
  log_.resize(n);
  for (EpochLog& e : log_) read_pod(in, e);
  epoch_ = epoch;
  best_epoch_ = best_epoch;
  stale_epochs_ = stale;
}

TrainResult train(const TrainConfig& config, const KnowledgeGraph& graph,
                  const InteractionSet& data, const std::function<void(const EpochLog&)>& on_epoch) {
  Trainer trainer(config, graph, data);
  while (!trainer.finished()) {
    const EpochLog entry = trainer.run_epoch();
    if (on_epoch) on_epoch(entry);
  }
  return {trainer.spec(), trainer.best_params(), trainer.params(), trainer.log(),
          trainer.best_epoch()};
}

}  // namespace akgan
