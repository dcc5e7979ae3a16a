#pragma once

// JSON persistence for every artifact the pipeline writes. Matrices are arrays
// of rows; each top-level document carries "schema_version".

#include <filesystem>
#include <string>

#include "json.hpp"

#include "petbench/core.hpp"
#include "petbench/pet.hpp"
#include "petbench/policyopt.hpp"
#include "petbench/rewardmodel.hpp"
#include "petbench/theory.hpp"
#include "petbench/worldgen.hpp"

namespace petbench {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const Distribution& d);
Distribution distribution_from_json(const Json& j);

Json to_json(const RewardTable& r);
RewardTable reward_from_json(const Json& j);

Json to_json(const TabularPolicy& p);
TabularPolicy policy_from_json(const Json& j);

Json to_json(const PreferenceDataset& d);
PreferenceDataset dataset_from_json(const Json& j);

Json to_json(const PairDistribution& p);
PairDistribution pair_distribution_from_json(const Json& j);

Json to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const Json& j);

Json to_json(const World& w);
World world_from_json(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const PetConfig& c);
PetConfig pet_config_from_json(const Json& j);

Json to_json(const OptConfig& c);
OptConfig opt_config_from_json(const Json& j);

Json to_json(const BoundReport& b);

/// Adds schema_version and writes with two-space indentation. Throws Io.
void write_json_file(const std::filesystem::path& path, const Json& j);
/// Throws Io when unreadable, Config when malformed.
Json read_json_file(const std::filesystem::path& path);

/// Serialized form of a double that survives a round trip; non-finite values
/// become the strings "inf", "-inf" and "nan".
Json number_or_tag(double v);
double number_from_json(const Json& j);

}  // namespace petbench
