// Small tour: sampler closed form, store sampling and a short toy-RL run.
#include <iostream>

#include "aes/simplex_sampler.hpp"
#include "aes/toy_rl/environment.hpp"
#include "aes/toy_rl/trainer.hpp"
#include "aes/weighted_store.hpp"

int main() {
  using namespace aes;

  SamplerState sampler(SamplerConfig{.buffer_capacity = 3, .nu = 1.0, .kappa = 0.0});
  const double d[] = {3.0, 0.0, 1.0};
  sampler.record_full_feedback(d);
  const SimplexDistribution p = compute_distribution(sampler);
  std::cout << "p after one full-feedback step:";
  for (double v : p.values()) std::cout << ' ' << v;
  std::cout << '\n';

  const auto env = toy_rl::Environment::gridworld4x4();
  toy_rl::TrainingConfig cfg;
  cfg.iterations = 2000;
  cfg.logit_clip = 2.0;
  cfg.sampler.nu = 10.0;
  cfg.sampler.reset_period = 200;
  const auto trace = toy_rl::run_aes(env, cfg);
  std::cout << "gridworld: optimal value " << toy_rl::optimal_value(env) << ", greedy return after "
            << trace.updates << " updates " << trace.final_return() << '\n';
  toy_rl::write_trace_csv(std::cout, trace);
}
