#include "sfield/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfield/optim.hpp"
#include "sfield/rng.hpp"
#include "sfield/tape.hpp"

namespace sfield {

std::vector<double> extract_features(const Tensor& image) {
  require(image.rank() == 3 && image.dim(2) == 3,
          "extract_features: image must be [H,W,3], got ",
          shape_str(image.shape()));
  const int h = image.dim(0), w = image.dim(1);
  require(h >= kFeatureGrid && w >= kFeatureGrid,
          "extract_features: image smaller than the feature grid");
  std::vector<double> features;
  features.reserve(kFeatureWidth);
  for (int gi = 0; gi < kFeatureGrid; ++gi) {
    const int r0 = gi * h / kFeatureGrid, r1 = (gi + 1) * h / kFeatureGrid;
    for (int gj = 0; gj < kFeatureGrid; ++gj) {
      const int c0 = gj * w / kFeatureGrid, c1 = (gj + 1) * w / kFeatureGrid;
      const double count = static_cast<double>((r1 - r0) * (c1 - c0));
      for (int ch = 0; ch < 3; ++ch) {
        double m1 = 0.0, m2 = 0.0;
        for (int r = r0; r < r1; ++r)
          for (int c = c0; c < c1; ++c) {
            const double v = image[(static_cast<std::int64_t>(r) * w + c) * 3 + ch];
            m1 += v;
            m2 += v * v;
          }
        features.push_back(m1 / count);
        features.push_back(m2 / count);
      }
    }
  }
  return features;
}

FeatureSummary summarize_features(const std::vector<std::vector<double>>& f) {
  require(f.size() >= 2, "summarize_features: need at least 2 samples, got ",
          f.size());
  const int k = static_cast<int>(f[0].size());
  const int n = static_cast<int>(f.size());
  FeatureSummary s;
  s.count = n;
  s.mean.assign(k, 0.0);
  for (const auto& row : f) {
    require(static_cast<int>(row.size()) == k,
            "summarize_features: ragged feature rows");
    for (int i = 0; i < k; ++i) s.mean[i] += row[i];
  }
  for (double& v : s.mean) v /= n;
  s.covariance = Tensor({k, k});
  for (const auto& row : f)
    for (int i = 0; i < k; ++i) {
      const double di = row[i] - s.mean[i];
      for (int j = 0; j < k; ++j)
        s.covariance[static_cast<std::int64_t>(i) * k + j] +=
            di * (row[j] - s.mean[j]);
    }
  const double denom = n - 1;
  for (std::int64_t i = 0; i < s.covariance.size(); ++i)
    s.covariance[i] /= denom;
  return s;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  const int k = t.rows();
  Eigen::MatrixXd m(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) m(i, j) = t[static_cast<std::int64_t>(i) * k + j];
  return m;
}

constexpr double kPsdTolerance = 1e-9;

void check_psd(const Eigen::VectorXd& eigenvalues, const char* which) {
  const double scale = std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  require(eigenvalues.minCoeff() >= -kPsdTolerance * scale,
          "frechet_distance: ", which,
          " covariance is not positive semidefinite (min eigenvalue ",
          eigenvalues.minCoeff(), ")");
}

}  // namespace

double frechet_distance(const FeatureSummary& a, const FeatureSummary& b) {
  require(a.mean.size() == b.mean.size(), "frechet_distance: width mismatch ",
          a.mean.size(), " vs ", b.mean.size());
  const int k = static_cast<int>(a.mean.size());

  double mean_term = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }

  const Eigen::MatrixXd ca = to_eigen(a.covariance);
  const Eigen::MatrixXd cb = to_eigen(b.covariance);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ca);
  check_psd(ea.eigenvalues(), "first");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(cb);
  check_psd(eb.eigenvalues(), "second");

  // sqrt(Ca) via the eigendecomposition, negatives clipped
  Eigen::VectorXd sqrt_vals = ea.eigenvalues();
  for (int i = 0; i < k; ++i)
    sqrt_vals[i] = std::sqrt(std::max(0.0, sqrt_vals[i]));
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * sqrt_vals.asDiagonal() *
                                 ea.eigenvectors().transpose();

  // tr(sqrt(Ca Cb)) = tr(sqrt(sqrt(Ca) Cb sqrt(Ca))), a symmetric product
  Eigen::MatrixXd inner = sqrt_a * cb * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner);
  double trace_sqrt = 0.0;
  for (int i = 0; i < k; ++i)
    trace_sqrt += std::sqrt(std::max(0.0, ei.eigenvalues()[i]));

  return mean_term + ca.trace() + cb.trace() - 2.0 * trace_sqrt;
}

CategoryHistogram category_histogram(const std::vector<Scene>& scenes) {
  CategoryHistogram h;
  double total = 0.0;
  for (const Scene& s : scenes)
    for (const SceneObject& o : s.objects) {
      h.p[o.category] += 1.0;
      total += 1.0;
    }
  require(total > 0.0, "category_histogram: no objects");
  for (auto& [cat, v] : h.p) v /= total;
  return h;
}

double category_kl(const CategoryHistogram& p, const CategoryHistogram& q) {
  // smooth q over the union vocabulary, then renormalize
  constexpr double kEps = 1e-6;
  std::map<std::string, double> qs;
  double qtotal = 0.0;
  for (const auto& [cat, v] : q.p) qs[cat] = v;
  for (const auto& [cat, v] : p.p) qs.emplace(cat, 0.0);
  for (auto& [cat, v] : qs) {
    v += kEps;
    qtotal += v;
  }
  double kl = 0.0;
  for (const auto& [cat, pv] : p.p) {
    if (pv <= 0.0) continue;
    kl += pv * std::log(pv / (qs[cat] / qtotal));
  }
  return kl;
}

double diversity(const std::vector<Tensor>& images) {
  require(images.size() >= 2, "diversity: need at least 2 images, got ",
          images.size());
  const std::size_t n = images.size();
  for (const Tensor& img : images)
    require(img.same_shape(images[0]), "diversity: resolution mismatch ",
            shape_str(img.shape()), " vs ", shape_str(images[0].shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double sq = 0.0;
      for (std::int64_t k = 0; k < images[i].size(); ++k) {
        const double d = images[i][k] - images[j][k];
        sq += d * d;
      }
      acc += std::sqrt(sq);
    }
  return acc / (static_cast<double>(n) * (n - 1));
}

double sca(const std::vector<Tensor>& real_images,
           const std::vector<Tensor>& fake_images, std::uint64_t seed) {
  require(real_images.size() >= kScaMinImages &&
              fake_images.size() >= kScaMinImages,
          "sca: need at least ", kScaMinImages, " images per side, got ",
          real_images.size(), " and ", fake_images.size());

  std::vector<std::vector<double>> feats[2];
  for (const Tensor& img : real_images)
    feats[0].push_back(extract_features(img));
  for (const Tensor& img : fake_images)
    feats[1].push_back(extract_features(img));

  // deterministic 80/20 split per class; equal-sized classes share one
  // permutation so identical sets land in identical splits
  Rng rng(seed);
  std::vector<int> perm[2];
  for (int c = 0; c < 2; ++c) {
    perm[c].resize(feats[c].size());
    std::iota(perm[c].begin(), perm[c].end(), 0);
  }
  const bool shared = feats[0].size() == feats[1].size();
  for (int i = static_cast<int>(perm[0].size()) - 1; i > 0; --i)
    std::swap(perm[0][i], perm[0][rng.uniform_int(0, i)]);
  if (shared) {
    perm[1] = perm[0];
  } else {
    for (int i = static_cast<int>(perm[1].size()) - 1; i > 0; --i)
      std::swap(perm[1][i], perm[1][rng.uniform_int(0, i)]);
  }

  std::vector<const std::vector<double>*> train_x, test_x;
  std::vector<double> train_y, test_y;
  for (int c = 0; c < 2; ++c) {
    const std::size_t n_train = perm[c].size() * 8 / 10;
    for (std::size_t i = 0; i < perm[c].size(); ++i) {
      const auto* row = &feats[c][perm[c][i]];
      if (i < n_train) {
        train_x.push_back(row);
        train_y.push_back(c);
      } else {
        test_x.push_back(row);
        test_y.push_back(c);
      }
    }
  }

  // standardize with train statistics
  const int k = kFeatureWidth;
  std::vector<double> mu(k, 0.0), sd(k, 0.0);
  for (const auto* row : train_x)
    for (int i = 0; i < k; ++i) mu[i] += (*row)[i];
  for (double& v : mu) v /= train_x.size();
  for (const auto* row : train_x)
    for (int i = 0; i < k; ++i) {
      const double d = (*row)[i] - mu[i];
      sd[i] += d * d;
    }
  for (double& v : sd) v = std::sqrt(v / train_x.size()) + 1e-8;

  auto standardized = [&](const std::vector<const std::vector<double>*>& xs) {
    Tensor out({static_cast<int>(xs.size()), k});
    for (std::size_t r = 0; r < xs.size(); ++r)
      for (int i = 0; i < k; ++i)
        out[r * k + i] = ((*xs[r])[i] - mu[i]) / sd[i];
    return out;
  };
  const Tensor train_mat = standardized(train_x);
  const Tensor test_mat = standardized(test_x);
  Tensor train_labels({static_cast<int>(train_y.size())});
  std::copy(train_y.begin(), train_y.end(), train_labels.data());

  // small two-layer classifier; the output layer starts at zero so a
  // signal-free problem stays at chance
  const int hidden = 16;
  Rng init_rng(derive_seed(seed, 0x5caffe));
  ParameterStore store;
  {
    Tensor w1({k, hidden}), b1({hidden});
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    for (std::int64_t i = 0; i < w1.size(); ++i)
      w1[i] = init_rng.uniform(-bound, bound);
    store.add("w1", std::move(w1));
    store.add("b1", std::move(b1));
    store.add("w2", Tensor({hidden, 1}));
    store.add("b2", Tensor({1}));
  }
  AdamWConfig ac;
  ac.lr = 3e-3;
  ac.weight_decay = 0.1;
  AdamW opt(ac);
  for (int step = 0; step < 200; ++step) {
    Tape t;
    std::vector<Value> p;
    for (int i = 0; i < store.count(); ++i)
      p.push_back(t.input(store[i].value));
    Value h = relu(add_row(matmul(t.constant(train_mat), p[0]), p[1]));
    Value logits = add_row(matmul(h, p[2]), p[3]);
    Value loss = bce_logits(reshape(logits, {static_cast<int>(train_y.size())}),
                            t.constant(train_labels));
    t.backward(loss);
    std::vector<Tensor> grads;
    for (Value v : p) grads.push_back(t.grad(v));
    opt.step(store, grads);
  }

  // held-out accuracy; prediction is class 1 iff logit > 0
  Tape t;
  std::vector<Value> p;
  for (int i = 0; i < store.count(); ++i)
    p.push_back(t.input(store[i].value));
  Value h = relu(add_row(matmul(t.constant(test_mat), p[0]), p[1]));
  Value logits = add_row(matmul(h, p[2]), p[3]);
  const Tensor& lv = t.value(logits);
  int correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    const int pred = lv[i] > 0.0 ? 1 : 0;
    correct += pred == static_cast<int>(test_y[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

}  // namespace sfield
