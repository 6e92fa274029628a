#include "cascade/cli/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>

#include "cascade/error.hpp"
#include "cascade/io_util.hpp"

namespace cascade::cli {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

FileDigest digest_file(const std::string& path) {
  const std::string data = read_file(path);
  return {path, sha256_hex(data), data.size()};
}

namespace {

json digests_json(const std::vector<FileDigest>& files) {
  json a = json::array();
  for (const auto& f : files) a.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return a;
}

std::vector<FileDigest> digests_from(const json& a) {
  std::vector<FileDigest> out;
  for (const auto& f : a)
    out.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                   f.at("bytes").get<std::uintmax_t>()});
  return out;
}

}  // namespace

json to_json(const RunManifest& m) {
  return {{"tool", "cascade"},
          {"tool_version", m.tool_version},
          {"command", m.command},
          {"argv", m.argv},
          {"config", m.config},
          {"seeds", m.seeds},
          {"inputs", digests_json(m.inputs)},
          {"outputs", digests_json(m.outputs)}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.at("config");
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.inputs = digests_from(j.at("inputs"));
  m.outputs = digests_from(j.at("outputs"));
  return m;
}

}  // namespace cascade::cli
