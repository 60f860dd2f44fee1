#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "funad/feature_store.hpp"
#include "funad/train.hpp"

namespace funad::cli {

/// Entry point of the `funad` executable. Exit codes: 0 success, 1 runtime
/// failure, 2 usage error.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// JSON config readers; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SyntheticGaussianConfig synthetic_config_from_json(const nlohmann::json& j);

}  // namespace funad::cli
