#pragma once

// Dataset manifests: a JSON file listing clips by role. Paths inside the
// file are taken relative to the manifest's directory and are resolved at
// load time.

#include <string>
#include <vector>

#include "ont/error.hpp"

namespace ont {

struct ManifestItem {
  std::string id;
  std::string split = "train";  // "train" | "test"
  std::string noisy;            // required for every strategy
  std::string clean;            // NCT target / evaluation reference
  std::string noisy2;           // NNT target
  std::string extra_noise;      // NerNT mixing source
};

struct DatasetManifest {
  int sample_rate_hz = 0;  // informative; individual files carry their own rate
  std::vector<ManifestItem> items;

  std::vector<ManifestItem> split_items(const std::string& split) const;
};

DatasetManifest load_manifest(const std::string& path);

// Writes items with paths exactly as provided (callers pass manifest-relative
// paths when the files sit next to the manifest).
void save_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace ont
