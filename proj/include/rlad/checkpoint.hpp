#pragma once

#include "rlad/nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace rlad::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Binary parameter dump:
///   "RLADCKPT" | u32 version | str kind | str meta-json | u32 count |
///   count x (str name | u32 rows | u32 cols | rows*cols f64, column-major)
/// where str is a u32 byte length followed by the bytes. Values are stored
/// as raw IEEE-754 doubles so a round trip is bit-exact.
struct Checkpoint {
    std::string kind;
    nlohmann::json meta;
    std::vector<nn::Param> params;
};

void save(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& meta,
          const nn::ConstParamRefs& params);

/// Throws MissingFile when absent and ShapeMismatch when the file is
/// truncated, has a bad header, or trailing bytes.
Checkpoint load(const std::filesystem::path& path);

/// Copies values into `params`; names, count and shapes must match.
void restore(const Checkpoint& ckpt, const std::string& expected_kind, const nn::ParamRefs& params);

}  // namespace rlad::checkpoint
