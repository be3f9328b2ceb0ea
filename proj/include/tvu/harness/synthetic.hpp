#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "tvu/grounding.hpp"
#include "tvu/meta_reweight.hpp"
#include "tvu/temporal_contrast.hpp"

namespace tvu::harness {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double stddev = 1.0);

struct SyntheticPairSpec {
  Eigen::Index pairs = 64;
  Eigen::Index dims = 32;
  double align = 0.8;           // weight of the shared latent
  double noisy_fraction = 0.0;  // pairs whose text side is unrelated
  double imbalance = 1.0;       // P(label 0) / P(label 1)
  std::uint64_t seed = 0;

  void validate() const;
};

struct PairedEmbeddings {
  Eigen::MatrixXd video;  // pairs x dims
  Eigen::MatrixXd text;
  std::vector<bool> noisy;
  std::vector<int> labels;

  /// Row-normalised video * text'.
  Eigen::MatrixXd cosine_similarity() const;
};

/// video = a z + (1 - a) n_v, text = a z + (1 - a) n_t; noisy pairs draw a fresh z for the text.
PairedEmbeddings gen_paired_embeddings(const SyntheticPairSpec& spec);

/// Linearly separable logistic task; a `noise` fraction of training labels is flipped.
/// The meta split is drawn from the same law with clean labels.
struct LabelNoiseTask {
  Dataset train;
  Dataset meta;
  Eigen::VectorXd truth;
};

LabelNoiseTask gen_label_noise_task(Eigen::Index samples, Eigen::Index dims, Eigen::Index meta_samples, double noise,
                                    std::uint64_t seed);

struct EventSpec {
  double start = 0.0;  // clip units, [start, end)
  double end = 0.0;
  int signature = -1;  // events with equal signature ids share a feature vector; -1 = unique
};

struct EventVideo {
  Eigen::MatrixXd features;  // T x D
  std::vector<MomentSpan> moments;
  std::vector<PyramidTargets> targets;  // one per event
};

/// Background noise plus a per-event signature on the event's clips.
/// Targets come from center sampling at every pyramid level; every other index is a negative.
EventVideo gen_event_video(Eigen::Index length, Eigen::Index dims, const std::vector<EventSpec>& events,
                           std::uint64_t seed, int levels = 4, double alpha = 1.5);

/// Level l averages blocks of 2^l consecutive rows (ceil length).
std::vector<Eigen::MatrixXd> pyramid_features(const Eigen::MatrixXd& x, int levels);

}  // namespace tvu::harness
