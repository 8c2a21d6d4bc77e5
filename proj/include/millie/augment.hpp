#pragma once

#include "millie/image.hpp"
#include "millie/rng.hpp"

namespace millie {

// Applied identically at train and test time; every magnitude is
// configurable and zero magnitudes give the identity.
struct AugmentConfig {
  bool enable_geometric = true;
  bool enable_hue = true;
  bool enable_gamma = true;
  bool enable_noise = true;
  float hue_shift_max = 8.0f;  // degrees
  float gamma_lo = 0.7f;
  float gamma_hi = 1.4f;
  float noise_sigma_max = 5.0f;  // in units of 1/255

  void validate() const;
  bool any_spectral() const;
};

// Uniform quarter-turn rotation composed with independent flips; a pure
// pixel permutation.
PatchImage random_geometric(const PatchImage& patch, Rng& rng);

// Hue rotation, value-channel gamma, then per-channel Gaussian noise.
PatchImage random_spectral(const PatchImage& patch, const AugmentConfig& config, Rng& rng);

// Geometric then spectral.
PatchImage augment(const PatchImage& patch, const AugmentConfig& config, Rng& rng);

}  // namespace millie
