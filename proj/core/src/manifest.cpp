// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/manifest.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "semmix/error.hpp"

namespace semmix {

std::string_view code_version() { return SEMMIX_VERSION; }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCategory::kInternal, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_not_found("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id();
  auto tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_io("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw_io("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& o : outputs) outs.push_back({{"path", o.path}, {"sha256", o.sha256}});
  return {{"command", command},
          {"config", config},
          {"version", version},
          {"checkpoint_sha256", checkpoint_sha256},
          {"seeds", seeds},
          {"outputs", outs},
          {"auxiliary", auxiliary}};
}

RunManifest RunManifest::from_json(const nlohmann::json& doc) {
  RunManifest m;
  try {
    m.command = doc.at("command").get<std::string>();
    m.config = doc.at("config");
    m.version = doc.value("version", "");
    m.checkpoint_sha256 = doc.value("checkpoint_sha256", "");
    m.seeds = doc.value("seeds", std::vector<std::uint64_t>{});
    for (const auto& o : doc.at("outputs")) {
      m.outputs.push_back({o.at("path").get<std::string>(), o.at("sha256").get<std::string>()});
    }
    m.auxiliary = doc.value("auxiliary", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

void RunManifest::add_output(const std::filesystem::path& dir, const std::string& relative) {
  outputs.push_back({relative, sha256_file(dir / relative)});
}

void RunManifest::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump(2) + "\n");
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw_invalid("run manifest is not valid JSON: " + std::string(e.what()));
  }
}

}  // namespace semmix
