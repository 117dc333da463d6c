#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "invariant_atlas/core/error.hpp"
#include "invariant_atlas/pipeline/config.hpp"

namespace atlas::pipeline {

inline constexpr const char* kSoftwareVersion = "0.1.0";

namespace detail {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw Error("sha256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace detail

inline std::string sha256_hex(const std::string& data) {
  detail::Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "' for checksumming");
  detail::Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

struct ArtifactRecord {
  std::string file;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct StageRecord {
  std::string config_hash;
  double seconds = 0.0;
  std::vector<ArtifactRecord> artifacts;
  Json summary = Json::object();
};

/// manifest.json in the output directory: software version, resolved config
/// hash, and per stage its input hash, timing and artifact checksums.
class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path dir) : dir_(std::move(dir)) {
    const auto path = dir_ / "manifest.json";
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return;
    config_hash_ = j.value("config_hash", "");
    if (!j.contains("stages")) return;
    for (auto it = j["stages"].begin(); it != j["stages"].end(); ++it) {
      StageRecord rec;
      rec.config_hash = it->value("config_hash", "");
      rec.seconds = it->value("seconds", 0.0);
      if (it->contains("summary")) rec.summary = (*it)["summary"];
      for (const auto& a : (*it)["artifacts"])
        rec.artifacts.push_back({a.value("file", ""), a.value("sha256", ""), a.value("bytes", std::uintmax_t{0})});
      stages_.emplace_back(it.key(), std::move(rec));
    }
  }

  const std::filesystem::path& dir() const { return dir_; }
  void set_config_hash(std::string h) { config_hash_ = std::move(h); }

  const StageRecord* find(const std::string& stage) const {
    for (const auto& [name, rec] : stages_)
      if (name == stage) return &rec;
    return nullptr;
  }

  /// True when `stage` ran with `hash` and all its artifacts still match.
  bool up_to_date(const std::string& stage, const std::string& hash) const {
    const StageRecord* rec = find(stage);
    if (!rec || rec->config_hash != hash) return false;
    for (const auto& a : rec->artifacts) {
      const auto p = dir_ / a.file;
      if (!std::filesystem::exists(p) || sha256_file(p) != a.sha256) return false;
    }
    return true;
  }

  void record(const std::string& stage, const std::string& hash, double seconds,
              const std::vector<std::string>& files, Json summary = Json::object()) {
    StageRecord rec;
    rec.config_hash = hash;
    rec.seconds = seconds;
    rec.summary = std::move(summary);
    for (const auto& f : files) {
      const auto p = dir_ / f;
      rec.artifacts.push_back({f, sha256_file(p), std::filesystem::file_size(p)});
    }
    for (auto& [name, old] : stages_)
      if (name == stage) {
        old = std::move(rec);
        return;
      }
    stages_.emplace_back(stage, std::move(rec));
  }

  void save() const {
    Json j;
    j["software_version"] = kSoftwareVersion;
    j["config_hash"] = config_hash_;
    Json stages = Json::object();
    for (const auto& [name, rec] : stages_) {
      Json s;
      s["config_hash"] = rec.config_hash;
      s["seconds"] = rec.seconds;
      Json arts = Json::array();
      for (const auto& a : rec.artifacts) arts.push_back({{"file", a.file}, {"sha256", a.sha256}, {"bytes", a.bytes}});
      s["artifacts"] = arts;
      s["summary"] = rec.summary;
      stages[name] = s;
    }
    j["stages"] = stages;
    const auto tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out(tmp);
      out << j.dump(2) << '\n';
      if (!out) throw Error("cannot write manifest in '" + dir_.string() + "'");
    }
    std::filesystem::rename(tmp, dir_ / "manifest.json");
  }

 private:
  std::filesystem::path dir_;
  std::string config_hash_;
  std::vector<std::pair<std::string, StageRecord>> stages_;
};

/// Exclusive ownership of an output directory for the lifetime of a run.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    std::filesystem::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw ConfigError("output directory '" + dir.string() +
                        "' is locked by another run (delete .lock if that run is gone)");
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace atlas::pipeline
