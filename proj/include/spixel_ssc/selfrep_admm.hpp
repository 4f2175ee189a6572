#pragma once

#include "spixel_ssc/common.hpp"

#include <filesystem>
#include <vector>

namespace spixel_ssc::selfrep {

/// Ŝ: the transposed superpixel centroids with unit-norm columns (D×M).
struct NormalizedFeatures {
  Matrix shat;
  Vector norms;                 // original column norms
  std::vector<bool> degenerate; // column had norm < 1e-12 and was replaced by e_1
};

NormalizedFeatures normalize_features(const RowMatrix& centers);

/// Adjoint of normalize_features: dL/dS (M×D) from dL/dŜ (D×M).
RowMatrix normalize_features_backward(const NormalizedFeatures& normalized, const Matrix& shat_bar);

/// Cholesky factor of 2ŜᵀŜ + ρI, built once per forward pass.
struct GramFactorization {
  Eigen::LLT<Matrix> llt;
  Matrix two_gram;  // 2ŜᵀŜ
  double rho = 1.0;

  Matrix solve(const Matrix& rhs) const { return llt.solve(rhs); }
};

GramFactorization gram_factorization(const Matrix& shat, double rho);

/// C = (2ŜᵀŜ + ρI)⁻¹ (2ŜᵀŜ − (μ − ρZ)).
Matrix c_update(const Matrix& z, const Matrix& mu, const GramFactorization& fact);

/// Z = soft-threshold(C + μ/ρ, λ/ρ) with the diagonal zeroed.
Matrix z_update(const Matrix& c, const Matrix& mu, double rho, double lambda_sr);

/// μ + ρ(C − Z).
Matrix mu_update(const Matrix& mu, const Matrix& c, const Matrix& z, double rho);

struct SelfRepState {
  Matrix c;
  Matrix z;
  Matrix mu;
  double rho = 1.0;
  double lambda_sr = 0.1;
  int layers = 0;
};

/// Forward pass of K unfolded layers, keeping every layer's output.
struct Unfolding {
  GramFactorization fact;
  double lambda_sr = 0.1;
  std::vector<SelfRepState> layers;  // layers[k] is the state after layer k+1

  const SelfRepState& state() const { return layers.back(); }
};

/// C = Z = μ = 0, then K rounds of {c_update, z_update, mu_update}.
Unfolding unfold_forward(const Matrix& shat, int layers, double rho, double lambda_sr);

struct UnfoldingGradient {
  Matrix shat;          // D×M
  double lambda_sr = 0.0;
};

/// Reverse pass through all layers given dL/dZ of the last layer. The
/// soft-threshold derivative at the kink is taken as 0.
UnfoldingGradient unfold_backward(const Unfolding& unfolding, const Matrix& shat, const Matrix& z_bar);

/// A = (|Z| + |Z|ᵀ)/2 with zero diagonal.
Matrix affinity(const Matrix& z);

/// Full matrix, one row per line, 17 significant digits.
void write_dense_csv(const Matrix& m, const std::filesystem::path& path);
/// "row,col,value" for every |value| > 1e-10.
void write_triplet_csv(const Matrix& m, const std::filesystem::path& path);

}  // namespace spixel_ssc::selfrep
