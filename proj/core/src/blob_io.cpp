#include "prism/blob_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "prism/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "f32le blob IO assumes a little-endian host");

namespace prism::io {

namespace fs = std::filesystem;

void write_bytes_atomic(const fs::path& path, const void* data, size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    PRISM_CHECK(f.good(), "write: cannot open ", tmp.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    PRISM_CHECK(f.good(), "write: short write to ", tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

void write_json_atomic(const fs::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  PRISM_CHECK(f.good(), "read: cannot open ", path.string());
  std::string s((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());
  return s;
}

Json read_json(const fs::path& path) {
  return Json::parse(read_text(path));
}

void write_f32_blob(const fs::path& path, const std::vector<float>& values) {
  write_bytes_atomic(path, values.data(), values.size() * sizeof(float));
}

std::vector<float> read_f32_blob(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  PRISM_CHECK(f.good(), "read: cannot open ", path.string());
  const auto bytes = static_cast<size_t>(f.tellg());
  PRISM_CHECK(bytes % sizeof(float) == 0, "blob ", path.string(),
              ": size not a multiple of 4 bytes");
  std::vector<float> out(bytes / sizeof(float));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(out.data()),
         static_cast<std::streamsize>(bytes));
  PRISM_CHECK(f.good(), "read: short read from ", path.string());
  return out;
}

void save_checkpoint(const fs::path& prefix, const ad::ParamStore<float>& params,
                     const std::string& stage, uint64_t seed,
                     const Json& hyperparameters) {
  Json manifest;
  manifest["stage"] = stage;
  manifest["seed"] = seed;
  manifest["hyperparameters"] = hyperparameters;
  manifest["dtype"] = "f32le";
  Json plist = Json::array();
  std::vector<float> blob;
  for (const auto& name : params.order) {
    const auto& a = params.values.at(name);
    Json p;
    p["name"] = name;
    p["shape"] = a.shape;
    plist.push_back(p);
    blob.insert(blob.end(), a.v.begin(), a.v.end());
  }
  manifest["params"] = plist;
  write_f32_blob(fs::path(prefix.string() + ".bin"), blob);
  write_json_atomic(fs::path(prefix.string() + ".json"), manifest);
}

ad::ParamStore<float> load_checkpoint(const fs::path& prefix, Json* manifest_out) {
  const Json manifest = read_json(fs::path(prefix.string() + ".json"));
  const auto blob = read_f32_blob(fs::path(prefix.string() + ".bin"));
  ad::ParamStore<float> params;
  size_t offset = 0;
  for (const auto& p : manifest.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    std::vector<int64_t> shape = p.at("shape").get<std::vector<int64_t>>();
    const auto n = static_cast<size_t>(ad::Arr32::numel_of(shape));
    PRISM_CHECK(offset + n <= blob.size(), "checkpoint ", prefix.string(),
                ": blob too short for ", name);
    params.add(name, ad::Arr32(std::move(shape),
                               {blob.begin() + static_cast<int64_t>(offset),
                                blob.begin() + static_cast<int64_t>(offset + n)}));
    offset += n;
  }
  PRISM_CHECK(offset == blob.size(), "checkpoint ", prefix.string(),
              ": blob has ", blob.size() - offset, " trailing values");
  if (manifest_out) *manifest_out = manifest;
  return params;
}

}  // namespace prism::io
