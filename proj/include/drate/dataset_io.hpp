#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "drate/dgp.hpp"
#include "drate/json_util.hpp"

namespace drate {

Json dgp_to_json(const DgpSpec& spec);
/// Unknown keys and out-of-range values raise InvalidParameter naming the field.
DgpSpec dgp_from_json(const Json& j);

/// CSV layout: x1,...,xp,d,y[,y0,y1]. Doubles use shortest round-trip text.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& ds);

/// Throws DataError carrying the 1-based line number of the first bad line.
Dataset read_dataset_csv(const std::filesystem::path& path);
Dataset dataset_from_csv(const std::string& text);

struct DatasetMeta {
  DgpSpec dgp;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
};

Json meta_to_json(const DatasetMeta& meta);
DatasetMeta meta_from_json(const Json& j);

/// Sidecar path convention: data.csv -> data.meta.json.
std::filesystem::path meta_path_for(const std::filesystem::path& csv_path);
void write_meta(const DatasetMeta& meta, const std::filesystem::path& path);
std::optional<DatasetMeta> read_meta_if_present(const std::filesystem::path& csv_path);

}  // namespace drate
