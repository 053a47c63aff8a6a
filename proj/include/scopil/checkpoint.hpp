#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "scopil/sac.hpp"

namespace scopil {

/// Everything needed to resume or evaluate a run (the replay buffer is not
/// stored).
struct Checkpoint {
  SacNets<float> nets;
  SacOptimizers<float> opt;
  double lambda = 0.0;
  std::int64_t step = 0;
  std::int64_t episode = 0;
  double demo_nll = 0.0;  // full-demo mean NLL at save time (NaN without demos)

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

nlohmann::json params_to_json(const net::MlpParams<float>& p);
net::MlpParams<float> params_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reads only the policy network of a checkpoint. Throws net::ShapeError when
/// its input/output sizes do not match the environment.
net::MlpParams<float> load_policy(const std::filesystem::path& path);

}  // namespace scopil
