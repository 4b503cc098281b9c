#include <doctest.h>

#include "thermotwin/config.hpp"
#include "thermotwin/pipeline.hpp"
#include "thermotwin/simulator.hpp"

using namespace twin;

// The default sparsity weight and penalty are tuned for camera-size windows,
// so this runs at full frame size with the command line defaults.
TEST_CASE("default RPCA on a camera-size splash run isolates the splash") {
  const TwinConfig c;
  Plate p(c.simulator);
  p.set_voltage(85.0);
  p.settle(1e-6, 100000);
  std::vector<Frame> frames;
  for (int k = 0; k < 50; ++k) {
    if (k == 40) p.inject({AnomalyKind::Splash, 150.0, 120.0, 3.7, 3.0});
    frames.push_back(p.render(frame_seed(9, 0, static_cast<std::uint64_t>(k))));
    p.step(c.simulator.dt);
  }
  const SnapshotMatrix X = stack(frames);
  RpcaConfig rc;
  rc.profile = "camera";
  rc.window = 50;
  const RpcaSplit split = rpca_windows(X.data, rc);

  const auto disc = disc_cells(c.simulator.width, c.simulator.height, 150.0, 120.0, 3.7);
  Eigen::MatrixXf outside = split.S;
  double inside = 0.0;
  for (Index i : disc) {
    inside += split.S.row(i).rightCols(9).squaredNorm();
    outside.row(i).rightCols(9).setZero();
  }
  const double share = inside / static_cast<double>(split.S.squaredNorm());
  const float peak = split.S.rightCols(9).cwiseAbs().maxCoeff();
  const double support = (split.S.array() != 0.0f).cast<double>().mean();
  MESSAGE("splash share of S energy " << share << ", peak " << peak << ", elsewhere "
          << outside.cwiseAbs().maxCoeff() << ", S support " << support);
  CHECK(share > 0.5);
  CHECK(outside.cwiseAbs().maxCoeff() < 0.5f * peak);
  CHECK(support < 0.1);
}
