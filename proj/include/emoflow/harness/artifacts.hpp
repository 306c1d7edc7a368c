#pragma once

#include <functional>
#include <string>

#include "emoflow/context/synthetic.hpp"
#include "emoflow/generators/training.hpp"
#include "emoflow/harness/checkpoint.hpp"
#include "emoflow/harness/config.hpp"
#include "emoflow/vq/train.hpp"
#include "emoflow/vqig/train.hpp"

// Corpora, staged training loops and checkpoint adapters shared by the CLI
// and the acceptance runner. Every stochastic choice derives from the
// RunConfig seeds, so two runs of the same config produce identical bytes.

namespace emoflow::harness {

using Progress = std::function<void(const std::string&)>;

context::Dataset train_dataset(const RunConfig& c);
context::Dataset heldout_dataset(const RunConfig& c);
vq::PatchCorpus train_patches(const RunConfig& c);
vq::PatchCorpus heldout_patches(const RunConfig& c);
vq::PairCorpus train_pairs(const RunConfig& c);
vq::PairCorpus heldout_pairs(const RunConfig& c);

/// DataError naming the first class with no sequence in `ds`.
void require_all_classes(const context::Dataset& ds, int classes);

// Fresh trainers from the config, then `steps` more steps in logged chunks.
// A negative `steps` means the configured count.
gen::ExpFlowTrainer expflow_trainer(const RunConfig& c);
gen::PoseFlowTrainer poseflow_trainer(const RunConfig& c);
vq::CodebookTrainer codebook_trainer(const RunConfig& c);
vqig::VqigTrainer vqig_trainer(const RunConfig& c, const vq::PatchAutoencoder& ae);

void run_expflow(gen::ExpFlowTrainer& tr, const context::Dataset& train, int steps, const Progress& log = {});
void run_poseflow(gen::PoseFlowTrainer& tr, const context::Dataset& train, int steps, const Progress& log = {});
void run_codebook(vq::CodebookTrainer& tr, const vq::PatchCorpus& corpus, int steps, const Progress& log = {});
void run_vqig(vqig::VqigTrainer& tr, const vq::PairCorpus& pairs, int steps, const Progress& log = {});

// Checkpoint adapters. Trainer checkpoints carry the optimizer and RNG and
// resume bit-identically; model checkpoints carry parameters only.
Checkpoint expflow_checkpoint(const gen::ExpFlowTrainer& tr, const RunConfig& c);
Checkpoint poseflow_checkpoint(const gen::PoseFlowTrainer& tr, const RunConfig& c);
Checkpoint codebook_checkpoint(const vq::CodebookTrainer& tr, const RunConfig& c);
Checkpoint codebook_checkpoint(const vq::PatchAutoencoder& ae, const RunConfig& c);
Checkpoint vqig_checkpoint(const vqig::VqigTrainer& tr, const RunConfig& c);

/// Config snapshot of a checkpoint; DataError if it does not parse.
RunConfig checkpoint_config(const Checkpoint& ck);

gen::ExpFlowModel expflow_model(const Checkpoint& ck);
gen::PoseFlowModel poseflow_model(const Checkpoint& ck);
vq::PatchAutoencoder codebook_model(const Checkpoint& ck);
vqig::VqigModel vqig_model(const Checkpoint& ck, const vq::PatchAutoencoder& ae);

/// Full trainer state; DataError if the checkpoint carries no optimizer or RNG.
gen::ExpFlowTrainer expflow_resume(const Checkpoint& ck);
gen::PoseFlowTrainer poseflow_resume(const Checkpoint& ck);
vq::CodebookTrainer codebook_resume(const Checkpoint& ck);

/// Replaces `tr` only after the file at `path` has been fully read and
/// validated; on any error `tr` is left untouched.
void resume_from(gen::ExpFlowTrainer& tr, const std::string& path);

}  // namespace emoflow::harness
