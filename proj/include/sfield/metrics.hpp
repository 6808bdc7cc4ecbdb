#pragma once
// Evaluation suite: Fréchet distance over a handcrafted grid-moment image
// embedding (reported as "fid_style", not comparable to Inception-based
// numbers), category KL divergence, scene classification accuracy, and
// average pairwise L2 diversity.

#include <map>

#include "sfield/geometry.hpp"
#include "sfield/tensor.hpp"

namespace sfield {

constexpr int kFeatureGrid = 8;
constexpr int kFeatureWidth = kFeatureGrid * kFeatureGrid * 6;  // 384

// Per-cell means and second moments of the 3 normal channels over an
// 8x8 spatial grid; deterministic.
std::vector<double> extract_features(const Tensor& normal_image);

struct FeatureSummary {
  std::vector<double> mean;  // k
  Tensor covariance;         // [k,k], symmetric PSD
  int count = 0;
};

// Sample mean and unbiased covariance; needs at least two samples.
FeatureSummary summarize_features(const std::vector<std::vector<double>>& f);

// |mu_a - mu_b|^2 + tr(Ca + Cb - 2 sqrt(Ca Cb)), matrix square root by
// symmetric eigendecomposition; rejects non-PSD inputs beyond tolerance.
double frechet_distance(const FeatureSummary& a, const FeatureSummary& b);

struct CategoryHistogram {
  std::map<std::string, double> p;  // probabilities, sum 1
};

CategoryHistogram category_histogram(const std::vector<Scene>& scenes);

// sum p log(p/q) with q smoothed (eps 1e-6, renormalized); 0 log 0 = 0.
double category_kl(const CategoryHistogram& p, const CategoryHistogram& q);

// mean over ordered pairs i != j of the euclidean distance between
// flattened images; needs at least two images.
double diversity(const std::vector<Tensor>& images);

// Held-out accuracy of a small feature classifier separating the two
// image sets (80/20 split, deterministic per seed). 0.5 means the sets
// are indistinguishable.
double sca(const std::vector<Tensor>& real_images,
           const std::vector<Tensor>& fake_images, std::uint64_t seed);

constexpr int kScaMinImages = 32;

}  // namespace sfield
