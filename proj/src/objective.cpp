#include "sargan/objective.hpp"

#include "sargan/ops.hpp"

namespace sargan {

Var discriminator_loss(Var d_real, Var d_fake) {
  return add(neg_log_mean(d_real), neg_log1m_mean(d_fake));
}

double discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  Tape tape;
  return discriminator_loss(tape.constant(d_real), tape.constant(d_fake)).value()[0];
}

GeneratorLoss generator_loss(Var d_fake, Var fake, Var target, const VariantConfig& cfg) {
  GeneratorLoss loss;
  loss.gan = neg_log_mean(d_fake);
  loss.l1 = l1_mean(target, fake);
  loss.total = add(scale(loss.gan, cfg.lambda_gan), scale(loss.l1, cfg.lambda_l1));
  return loss;
}

LossBreakdown generator_loss(const Tensor& d_fake, const Tensor& fake, const Tensor& target,
                             const VariantConfig& cfg) {
  Tape tape;
  const GeneratorLoss g =
      generator_loss(tape.constant(d_fake), tape.constant(fake), tape.constant(target), cfg);
  LossBreakdown out;
  out.g_gan_term = g.gan.value()[0];
  out.g_l1_term = g.l1.value()[0];
  out.g_total = g.total.value()[0];
  return out;
}

double combine_generator_terms(double gan_term, double l1_term, const VariantConfig& cfg) {
  return cfg.lambda_gan * gan_term + cfg.lambda_l1 * l1_term;
}

double l1_distance(const Tensor& a, const Tensor& b) {
  Tape tape;
  return l1_mean(tape.constant(a), tape.constant(b)).value()[0];
}

}  // namespace sargan
