#pragma once

// Small trained twin shared by the pipeline-level suites.

#include <memory>
#include <vector>

#include "thermotwin/config.hpp"
#include "thermotwin/pipeline.hpp"
#include "thermotwin/simulator.hpp"

namespace twin::test {

inline TwinConfig small_config() {
  TwinConfig c;
  c.simulator.width = 40;
  c.simulator.height = 30;
  c.simulator.coil_spread = 3.0;
  return c;
}

/// Trained once per process on the small sweep.
inline std::shared_ptr<const TwinModel> small_model() {
  static const std::shared_ptr<const TwinModel> model = [] {
    const TwinConfig c = small_config();
    return std::make_shared<const TwinModel>(train(generate_training_sweep(c.simulator), c));
  }();
  return model;
}

inline std::vector<Frame> heating_stream(const SimulatorConfig& c, double volts, int frames,
                                         std::uint64_t seed) {
  Plate p(c);
  p.set_voltage(volts);
  std::vector<Frame> out;
  for (int k = 0; k < frames; ++k) {
    out.push_back(p.render(frame_seed(seed, 0, static_cast<std::uint64_t>(k))));
    p.step(c.dt);
  }
  return out;
}

}  // namespace twin::test
