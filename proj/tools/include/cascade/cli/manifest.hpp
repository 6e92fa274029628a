#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cascade::cli {

struct FileDigest {
  std::string path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);
std::string sha256_hex(std::string_view data);
FileDigest digest_file(const std::string& path);

// Everything needed to rerun a command and get the same bytes back.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::vector<FileDigest> inputs;
  std::vector<std::uint64_t> seeds;
  std::string tool_version;
  std::vector<FileDigest> outputs;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

}  // namespace cascade::cli
