#include "ont/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace ont {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ManifestItem> DatasetManifest::split_items(const std::string& split) const {
  std::vector<ManifestItem> out;
  for (const auto& it : items)
    if (it.split == split) out.push_back(it);
  return out;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest: parse error in '" + path + "': " + e.what());
  }
  if (!j.is_object() || !j.contains("items") || !j["items"].is_array())
    throw DataError("manifest: expected an object with an 'items' array");

  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty()) return p;
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  DatasetManifest m;
  m.sample_rate_hz = j.value("sample_rate_hz", 0);
  for (const auto& ji : j["items"]) {
    if (!ji.is_object()) throw DataError("manifest: items must be objects");
    ManifestItem item;
    item.id = ji.value("id", std::string());
    item.split = ji.value("split", std::string("train"));
    item.noisy = resolve(ji.value("noisy", std::string()));
    item.clean = resolve(ji.value("clean", std::string()));
    item.noisy2 = resolve(ji.value("noisy2", std::string()));
    item.extra_noise = resolve(ji.value("extra_noise", std::string()));
    if (item.noisy.empty())
      throw DataError("manifest: item '" + item.id + "' is missing the noisy path");
    if (item.split != "train" && item.split != "test")
      throw DataError("manifest: item '" + item.id + "' has unknown split '" + item.split + "'");
    if (item.id.empty()) item.id = fs::path(item.noisy).stem().string();
    m.items.push_back(std::move(item));
  }
  if (m.items.empty()) throw DataError("manifest: no items in '" + path + "'");
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json j;
  j["sample_rate_hz"] = manifest.sample_rate_hz;
  j["items"] = json::array();
  for (const auto& it : manifest.items) {
    json ji;
    ji["id"] = it.id;
    ji["split"] = it.split;
    ji["noisy"] = it.noisy;
    if (!it.clean.empty()) ji["clean"] = it.clean;
    if (!it.noisy2.empty()) ji["noisy2"] = it.noisy2;
    if (!it.extra_noise.empty()) ji["extra_noise"] = it.extra_noise;
    j["items"].push_back(std::move(ji));
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("manifest: cannot open '" + path + "' for writing");
  os << j.dump(2) << '\n';
  if (!os) throw DataError("manifest: write failed for '" + path + "'");
}

}  // namespace ont
