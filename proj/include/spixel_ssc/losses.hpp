#pragma once

#include "spixel_ssc/common.hpp"

namespace spixel_ssc::losses {

inline constexpr double kEntropyEpsilon = 1e-8;
inline constexpr double kDefaultNoiseWeight = 50.0;

struct LossReport {
  double spixel_compact = 0.0;
  double spixel_consistency = 0.0;
  double recon = 0.0;
  double l1 = 0.0;
  double entropy = 0.0;
  double noise = 0.0;
  double rep = 0.0;    // 2·recon + l1 + entropy
  double total = 0.0;  // α·rep + (compact + consistency) + noise
};

/// Fills rep and total from the individual terms.
LossReport compose(LossReport parts, double alpha);

/// Stand-alone form of the composition.
double total_loss(const LossReport& parts, double alpha);

struct SpixelTerms {
  double compact = 0.0;
  double consistency = 0.0;
};

/// compact = (1/N) Σ‖X'_i − F_i‖²; consistency = mean over 4-neighbor pairs of
/// 1 − cos(P_i, P_n), with each assignment row embedded in R^M (zeros off its
/// candidate set).
SpixelTerms spixel_loss(const RowMatrix& features, const RowMatrix& quantized, const RowMatrix& probs,
                        const IndexMatrix& candidates, int height, int width);

/// Adds weight_compact·∂compact and weight_consistency·∂consistency into the
/// three adjoint buffers.
void spixel_loss_backward(const RowMatrix& features, const RowMatrix& quantized, const RowMatrix& probs,
                          const IndexMatrix& candidates, int height, int width, double weight_compact,
                          double weight_consistency, RowMatrix& features_bar, RowMatrix& quantized_bar,
                          RowMatrix& probs_bar);

/// ‖ŜZ − Ŝ‖_F².
double recon_loss(const Matrix& shat, const Matrix& z);
/// Adds weight·∂recon into shat_bar and z_bar.
void recon_loss_backward(const Matrix& shat, const Matrix& z, double weight, Matrix& shat_bar, Matrix& z_bar);

/// Σ|z_ij|.
double l1_loss(const Matrix& z);
void l1_loss_backward(const Matrix& z, double weight, Matrix& z_bar);

/// −(1/M) Σ_j Σ_i c̃_ij log(c̃_ij + ε), c̃_ij = |z_ij| / (Σ_i |z_ij| + ε).
double entropy_loss(const Matrix& z);
void entropy_loss_backward(const Matrix& z, double weight, Matrix& z_bar);

/// (λ / (N·D)) ‖δ‖_F².
double noise_loss(const RowMatrix& delta, double lambda = kDefaultNoiseWeight);
void noise_loss_backward(const RowMatrix& delta, double lambda, double weight, RowMatrix& delta_bar);

}  // namespace spixel_ssc::losses
