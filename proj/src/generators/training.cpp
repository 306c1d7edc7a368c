#include "emoflow/generators/training.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/generators/losses.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::gen {

namespace {

std::vector<int> draw_rows(const std::vector<int>& pool, int n, numerics::Rng& rng) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = pool[rng.index(pool.size())];
  return rows;
}

std::vector<int> all_rows(const FrameTable& t) {
  std::vector<int> rows(static_cast<std::size_t>(t.size()));
  for (int i = 0; i < t.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

std::vector<int> rows_with_previous(const FrameTable& t) {
  std::vector<int> rows;
  for (int i = 0; i < t.size(); ++i)
    if (t.previous[static_cast<std::size_t>(i)] >= 0) rows.push_back(i);
  return rows;
}

void check_config(const TrainConfig& c) {
  if (c.steps < 0 || c.batch < 1 || c.consistency_batch < 0 || !(c.learning_rate > 0))
    throw ConfigError("training: steps >= 0, batch >= 1, consistency_batch >= 0 and lr > 0 required");
}

template <typename Trainer>
void apply_gradients(Trainer& tr, ad::Tape& tape, ad::Var total, long step) {
  if (!std::isfinite(total.scalar())) throw TrainingError("training diverged: non-finite loss", step);
  tape.backward(total);
  try {
    numerics::adam_update(tr.model.params, tape.grads(tr.model.params), tr.optimizer);
  } catch (const NumericError& e) {
    throw TrainingError(std::string("training diverged: ") + e.what(), step);
  }
  ++tr.model.trained_steps;
}

}  // namespace

ExpFlowTrainer::ExpFlowTrainer(ExpFlowModel m, const TrainConfig& c)
    : model(std::move(m)), rng(c.seed), config(c) {
  check_config(config);
  optimizer = numerics::OptimizerState::fresh(model.params, numerics::AdamConfig{config.learning_rate});
}

void ExpFlowTrainer::run(const FrameTable& table, int n) {
  const std::vector<int> pool = all_rows(table);
  const std::vector<int> pairs = rows_with_previous(table);
  const bool use_con = model.config.lambda_con > 0.0 && config.consistency_batch > 0 && !pairs.empty();
  for (int i = 0; i < n; ++i) {
    const long step = model.trained_steps;
    FrameBatch batch = table.select(draw_rows(pool, config.batch, rng));
    batch.raw.keep = context::dropout_keep_mask(config.batch, model.config.dropout, rng);
    ad::Tape tape;
    ad::Var nll = expflow_nll(tape, model, model.params, batch);
    ad::Var total = nll;
    double con_value = 0.0;
    if (use_con) {
      const std::vector<int> cur_rows = draw_rows(pairs, config.consistency_batch, rng);
      std::vector<int> prev_rows;
      for (int r : cur_rows) prev_rows.push_back(table.previous[static_cast<std::size_t>(r)]);
      FrameBatch cur = table.select(cur_rows), prev = table.select(prev_rows);
      cur.raw.keep = context::dropout_keep_mask(config.consistency_batch, model.config.dropout, rng);
      prev.raw.keep = cur.raw.keep;
      const latent::Smm smm = model.smm();
      Matrix z(config.consistency_batch, model.dim());
      for (int k = 0; k < config.consistency_batch; ++k)
        z.row(k) = latent::sample_class(cur.classes[static_cast<std::size_t>(k)], smm, rng).transpose();
      ad::Var con = expflow_consistency(tape, model, model.params, prev, cur, z);
      con_value = con.scalar();
      total = ad::add(total, ad::scale(con, model.config.lambda_con));
    }
    history.nll.push_back(nll.scalar());
    history.consistency.push_back(con_value);
    history.loss.push_back(total.scalar());
    apply_gradients(*this, tape, total, step);
  }
}

PoseFlowTrainer::PoseFlowTrainer(PoseFlowModel m, const TrainConfig& c) : model(std::move(m)), rng(c.seed), config(c) {
  check_config(config);
  optimizer = numerics::OptimizerState::fresh(model.params, numerics::AdamConfig{config.learning_rate});
}

void PoseFlowTrainer::run(const FrameTable& table, int n) {
  const std::vector<int> pool = all_rows(table);
  for (int i = 0; i < n; ++i) {
    const long step = model.trained_steps;
    FrameBatch batch = table.select(draw_rows(pool, config.batch, rng));
    batch.raw.keep = context::dropout_keep_mask(config.batch, model.config.dropout, rng);
    ad::Tape tape;
    ad::Var nll = poseflow_nll(tape, model, model.params, batch);
    history.nll.push_back(nll.scalar());
    history.consistency.push_back(0.0);
    history.loss.push_back(nll.scalar());
    apply_gradients(*this, tape, nll, step);
  }
}

std::pair<ExpFlowModel, TrainHistory> train_expflow(const context::Dataset& ds, const ExpFlowConfig& model_config,
                                                    const TrainConfig& config, std::uint64_t seed) {
  if (ds.sequences.empty()) throw DataError("train_expflow: dataset is empty");
  std::vector<bool> seen(static_cast<std::size_t>(model_config.classes), false);
  for (const auto& s : ds.sequences) {
    if (s.emotion < 0 || s.emotion >= model_config.classes) throw DataError("train_expflow: class id out of range");
    seen[static_cast<std::size_t>(s.emotion)] = true;
  }
  for (bool b : seen)
    if (!b) throw DataError("train_expflow: every class must be present in the training set");
  TrainConfig c = config;
  c.seed = numerics::mix_seed(seed, 1);
  ExpFlowTrainer tr(ExpFlowModel::create(model_config, seed), c);
  tr.run(FrameTable::build(ds, tr.model.config.encoders, context::Variant::Expression), config.steps);
  return {std::move(tr.model), std::move(tr.history)};
}

std::pair<PoseFlowModel, TrainHistory> train_poseflow(const context::Dataset& ds, const PoseFlowConfig& model_config,
                                                      const TrainConfig& config, std::uint64_t seed) {
  if (ds.sequences.empty()) throw DataError("train_poseflow: dataset is empty");
  TrainConfig c = config;
  c.seed = numerics::mix_seed(seed, 1);
  PoseFlowTrainer tr(PoseFlowModel::create(model_config, seed), c);
  tr.run(FrameTable::build(ds, tr.model.config.encoders, context::Variant::Pose), config.steps);
  return {std::move(tr.model), std::move(tr.history)};
}

namespace {
template <typename Model, typename LossFn>
double chunked_mean(const Model& model, const FrameTable& table, LossFn loss) {
  constexpr int kChunk = 512;
  double total = 0.0;
  for (int start = 0; start < table.size(); start += kChunk) {
    const int n = std::min(kChunk, table.size() - start);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = start + i;
    total += loss(model, table.select(rows)) * n;
  }
  return total / table.size();
}
}  // namespace

double mean_nll(const ExpFlowModel& model, const context::Dataset& ds) {
  return chunked_mean(model, FrameTable::build(ds, model.config.encoders, context::Variant::Expression),
                      [](const ExpFlowModel& m, const FrameBatch& b) { return expflow_nll_loss(m, b); });
}

double mean_pose_nll(const PoseFlowModel& model, const context::Dataset& ds) {
  return chunked_mean(model, FrameTable::build(ds, model.config.encoders, context::Variant::Pose),
                      [](const PoseFlowModel& m, const FrameBatch& b) { return poseflow_loss(m, b); });
}

}  // namespace emoflow::gen
