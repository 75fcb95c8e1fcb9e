#pragma once

#include "sargan/autodiff.hpp"
#include "sargan/networks.hpp"

namespace sargan {

struct LossBreakdown {
  double d_loss_real = 0.0;
  double d_loss_fake = 0.0;
  double g_gan_term = 0.0;
  double g_l1_term = 0.0;
  double g_total = 0.0;
};

/// mean(-log D(x, y)) + mean(-log(1 - D(x, G(x)))), the discriminator's
/// ascent target negated for descent. Probabilities are clamped to
/// [1e-7, 1 - 1e-7].
Var discriminator_loss(Var d_real, Var d_fake);
double discriminator_loss(const Tensor& d_real, const Tensor& d_fake);

struct GeneratorLoss {
  Var gan;    // mean(-log D(x, G(x))), non-saturating form
  Var l1;     // mean |y - G(x)|
  Var total;  // lambda_gan * gan + lambda_l1 * l1
};

GeneratorLoss generator_loss(Var d_fake, Var fake, Var target, const VariantConfig& cfg);
LossBreakdown generator_loss(const Tensor& d_fake, const Tensor& fake, const Tensor& target,
                             const VariantConfig& cfg);

// The weighting exactly as the tape composes it.
double combine_generator_terms(double gan_term, double l1_term, const VariantConfig& cfg);

double l1_distance(const Tensor& a, const Tensor& b);

}  // namespace sargan
