#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "persp/decoding.hpp"
#include "persp/generation.hpp"

namespace persp {

using KeyValues = std::map<std::string, std::string>;

/// Parses "key = value" lines. '#' starts a comment; blank lines are ignored.
KeyValues parse_key_values(std::istream& in);
KeyValues read_key_value_file(const std::filesystem::path& path);

/// Applies recognised keys; unknown keys raise InvalidArgument so typos in a
/// config file are not silently dropped. Keys carrying a "decode." prefix are
/// skipped by apply_train_config and vice versa.
void apply_train_config(TrainConfig& config, const KeyValues& values);
void apply_decode_config(DecodeConfig& config, const KeyValues& values);

}  // namespace persp
