#include "cdistill/pca.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <stdexcept>

namespace cdistill {

namespace {

constexpr std::uint64_t kFillSeed = 0x7063612d66696c6cULL;
constexpr double kRankThreshold = 1e-9;  // eigenvalue relative to the leading one
constexpr Eigen::Index kGuardVectors = 4;  // extra block columns beyond k

void fix_sign(Eigen::Ref<Vector> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0.0) v = -v;
}

// Deterministic d x p start block with orthonormal columns.
Matrix make_start_block(Eigen::Index d, Eigen::Index p) {
  const HashEmbedder rows(static_cast<std::size_t>(p), kFillSeed ^ 0x5bd1e995ULL);
  Matrix block(d, p);
  for (Eigen::Index i = 0; i < d; ++i) block.row(i) = rows.row(static_cast<TokenId>(i)).transpose();
  return Eigen::HouseholderQR<Matrix>(block).householderQ() * Matrix::Identity(d, p);
}

const Matrix& start_block(Eigen::Index d, Eigen::Index p) {
  thread_local std::map<std::pair<Eigen::Index, Eigen::Index>, Matrix> cache;
  auto it = cache.find({d, p});
  if (it == cache.end()) it = cache.emplace(std::make_pair(d, p), make_start_block(d, p)).first;
  return it->second;
}

struct RitzPairs {
  Matrix vectors;  // d x p, columns by descending value
  Vector values;
};

RitzPairs rayleigh_ritz(const Matrix& m, const Matrix& q) {
  const Matrix h = q.transpose() * m * q;
  Eigen::SelfAdjointEigenSolver<Matrix> small(0.5 * (h + h.transpose()));
  const auto p = q.cols();
  RitzPairs out{Matrix(q.rows(), p), Vector(p)};
  for (Eigen::Index i = 0; i < p; ++i) {
    out.vectors.col(i) = q * small.eigenvectors().col(p - 1 - i);
    out.values[i] = small.eigenvalues()[p - 1 - i];
  }
  return out;
}

}  // namespace

PcaResult principal_components(const Matrix& x, std::size_t k, const PcaOptions& options) {
  if (x.rows() == 0) throw std::invalid_argument("pca: input has no rows");
  const auto d = x.cols();
  if (k > static_cast<std::size_t>(d)) throw std::invalid_argument("pca: more components requested than dimensions");

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  const Matrix y = (x.rowwise() - mean) / std::sqrt(denom);

  PcaResult result;
  result.components = Matrix::Zero(static_cast<Eigen::Index>(k), d);
  result.variances.assign(k, 0.0);

  // Block power iteration with a Rayleigh-Ritz step per sweep, so nearly
  // equal eigenvalues inside the block still separate. Short inputs iterate on
  // the l x l Gram matrix Y Y^T, which shares the nonzero spectrum of C = Y^T Y.
  const bool gram = y.rows() < d;
  const Matrix m = gram ? Matrix(y * y.transpose()) : Matrix(y.transpose() * y);
  const Eigen::Index n = m.rows();
  const Eigen::Index p = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(k) + kGuardVectors);
  if (k > 0 && m.trace() > 0.0) {
    Matrix amplified = m;
    for (std::size_t sq = 0; sq < options.squarings; ++sq) {
      amplified /= amplified.cwiseAbs().maxCoeff();
      amplified = amplified * amplified;
    }
    RitzPairs ritz = rayleigh_ritz(m, start_block(n, p));
    const auto usable = std::min<Eigen::Index>(p, static_cast<Eigen::Index>(k));
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      double worst = 0.0;
      for (Eigen::Index i = 0; i < usable; ++i) {
        if (!(ritz.values[i] > kRankThreshold * ritz.values[0])) break;
        const Vector v = ritz.vectors.col(i);
        worst = std::max(worst, (m * v - ritz.values[i] * v).norm());
      }
      if (it > 0 && worst <= options.tolerance * ritz.values[0]) break;
      const Matrix z = amplified * ritz.vectors;
      ritz = rayleigh_ritz(m, Eigen::HouseholderQR<Matrix>(z).householderQ() * Matrix::Identity(n, p));
    }
    for (Eigen::Index i = 0; i < usable; ++i) {
      if (!(ritz.values[i] > kRankThreshold * ritz.values[0])) break;
      Vector v = gram ? Vector(y.transpose() * ritz.vectors.col(i)) : Vector(ritz.vectors.col(i));
      v.normalize();
      fix_sign(v);
      result.components.row(i) = v.transpose();
      result.variances[static_cast<std::size_t>(i)] = ritz.values[i];
      result.rank = static_cast<std::size_t>(i) + 1;
    }
  }

  if (result.rank < k) {
    Vector base = x.colwise().sum().transpose();
    if (base.norm() > 0.0) {
      base.normalize();
    } else {
      base = Vector::Unit(d, 0);
    }
    const HashEmbedder perturbations(static_cast<std::size_t>(d) < 2 ? 2 : static_cast<std::size_t>(d), kFillSeed);
    for (std::size_t i = result.rank; i < k; ++i) {
      for (std::size_t attempt = 0;; ++attempt) {
        Vector candidate = base + 0.5 * perturbations.row(static_cast<TokenId>(i + attempt * k)).head(d);
        for (int pass = 0; pass < 2; ++pass) {
          for (std::size_t j = 0; j < i; ++j) {
            const Vector prev = result.components.row(static_cast<Eigen::Index>(j)).transpose();
            candidate -= candidate.dot(prev) * prev;
          }
        }
        const double norm = candidate.norm();
        if (norm > 1e-8) {
          candidate /= norm;
          fix_sign(candidate);
          result.components.row(static_cast<Eigen::Index>(i)) = candidate.transpose();
          break;
        }
      }
    }
  }
  return result;
}

}  // namespace cdistill
