#include "tvu/harness/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "tvu/errors.hpp"

namespace tvu::harness {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

void SyntheticPairSpec::validate() const {
  if (pairs < 1 || dims < 1) throw PreconditionError("SyntheticPairSpec: sizes must be positive");
  if (align < 0.0 || align > 1.0) throw PreconditionError("SyntheticPairSpec: align outside [0, 1]");
  if (noisy_fraction < 0.0 || noisy_fraction > 1.0) throw PreconditionError("SyntheticPairSpec: noisy_fraction");
  if (!(imbalance > 0.0)) throw PreconditionError("SyntheticPairSpec: imbalance must be positive");
}

Eigen::MatrixXd PairedEmbeddings::cosine_similarity() const {
  const Eigen::VectorXd nv = video.rowwise().norm().cwiseInverse();
  const Eigen::VectorXd nt = text.rowwise().norm().cwiseInverse();
  return (nv.asDiagonal() * (video * text.transpose()) * nt.asDiagonal()).cwiseMax(-1.0).cwiseMin(1.0);
}

PairedEmbeddings gen_paired_embeddings(const SyntheticPairSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Eigen::MatrixXd z = gaussian_matrix(spec.pairs, spec.dims, rng);
  const Eigen::MatrixXd nv = gaussian_matrix(spec.pairs, spec.dims, rng);
  const Eigen::MatrixXd nt = gaussian_matrix(spec.pairs, spec.dims, rng);
  const Eigen::MatrixXd z_other = gaussian_matrix(spec.pairs, spec.dims, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PairedEmbeddings out;
  const double a = spec.align;
  out.video = a * z + (1.0 - a) * nv;
  out.text = a * z + (1.0 - a) * nt;
  const double p0 = spec.imbalance / (1.0 + spec.imbalance);
  for (Eigen::Index i = 0; i < spec.pairs; ++i) {
    const bool noisy = unit(rng) < spec.noisy_fraction;
    out.noisy.push_back(noisy);
    if (noisy) out.text.row(i) = a * z_other.row(i) + (1.0 - a) * nt.row(i);
    out.labels.push_back(unit(rng) < p0 ? 0 : 1);
  }
  return out;
}

LabelNoiseTask gen_label_noise_task(Eigen::Index samples, Eigen::Index dims, Eigen::Index meta_samples, double noise,
                                    std::uint64_t seed) {
  if (samples < 1 || dims < 1 || meta_samples < 1) throw PreconditionError("label noise task: sizes must be positive");
  if (noise < 0.0 || noise > 1.0) throw PreconditionError("label noise task: noise outside [0, 1]");
  std::mt19937_64 rng(seed);
  LabelNoiseTask task;
  task.truth = gaussian_matrix(dims, 1, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](Eigen::Index n, double flip) {
    Dataset d;
    d.x = gaussian_matrix(n, dims, rng);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double clean = d.x.row(i).dot(task.truth.transpose()) > 0.0 ? 1.0 : 0.0;
      const bool flipped = unit(rng) < flip;
      d.y[i] = flipped ? 1.0 - clean : clean;
      d.noisy.push_back(flipped);
    }
    return d;
  };
  task.train = draw(samples, noise);
  task.meta = draw(meta_samples, 0.0);
  return task;
}

EventVideo gen_event_video(Eigen::Index length, Eigen::Index dims, const std::vector<EventSpec>& events,
                           std::uint64_t seed, int levels, double alpha) {
  if (length < 1 || dims < 1) throw PreconditionError("gen_event_video: sizes must be positive");
  for (std::size_t a = 0; a < events.size(); ++a) {
    const auto& e = events[a];
    if (!(e.start >= 0.0 && e.end <= static_cast<double>(length) && e.end > e.start)) {
      throw PreconditionError("gen_event_video: event " + std::to_string(a) + " outside [0, T)");
    }
    for (std::size_t b = 0; b < a; ++b) {
      const auto& f = events[b];
      if (e.signature >= 0 && e.signature == f.signature && e.start < f.end && f.start < e.end) {
        throw PreconditionError("gen_event_video: overlapping events share a signature");
      }
    }
  }
  std::mt19937_64 rng(seed);
  EventVideo out;
  out.features = gaussian_matrix(length, dims, rng, 0.1);
  std::vector<std::pair<int, Eigen::RowVectorXd>> shared;
  for (const auto& e : events) {
    Eigen::RowVectorXd sig;
    auto it = std::find_if(shared.begin(), shared.end(), [&](const auto& s) { return s.first == e.signature; });
    if (e.signature >= 0 && it != shared.end()) {
      sig = it->second;
    } else {
      sig = gaussian_matrix(1, dims, rng).normalized();
      if (e.signature >= 0) shared.emplace_back(e.signature, sig);
    }
    const auto first = static_cast<Eigen::Index>(std::floor(e.start));
    const auto last = std::min<Eigen::Index>(length, static_cast<Eigen::Index>(std::ceil(e.end)));
    for (Eigen::Index t = first; t < last; ++t) out.features.row(t) += sig;

    out.moments.push_back({e.start, e.end, 1.0});
    PyramidTargets tg;
    const double center = 0.5 * (e.start + e.end);
    const auto lens = pyramid_lengths(length, levels);
    for (int l = 0; l < levels; ++l) {
      auto pos = center_sampling_targets(center, l, length, alpha);
      std::vector<Eigen::Index> neg;
      for (Eigen::Index c = 0; c < lens[static_cast<std::size_t>(l)]; ++c)
        if (!std::binary_search(pos.begin(), pos.end(), c)) neg.push_back(c);
      tg.positives.push_back(std::move(pos));
      tg.negatives.push_back(std::move(neg));
    }
    out.targets.push_back(std::move(tg));
  }
  return out;
}

std::vector<Eigen::MatrixXd> pyramid_features(const Eigen::MatrixXd& x, int levels) {
  const auto lens = pyramid_lengths(x.rows(), levels);
  std::vector<Eigen::MatrixXd> out;
  for (int l = 0; l < levels; ++l) {
    const Eigen::Index stride = Eigen::Index{1} << l;
    Eigen::MatrixXd m(lens[static_cast<std::size_t>(l)], x.cols());
    for (Eigen::Index c = 0; c < m.rows(); ++c) {
      const Eigen::Index n = std::min(stride, x.rows() - c * stride);
      m.row(c) = x.middleRows(c * stride, n).colwise().mean();
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace tvu::harness
