#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"

namespace hke {

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, ItemId& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Sidecar holding stimulus descriptors: `foo.csv` -> `foo.stimuli.json`.
inline std::filesystem::path stimulus_sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".stimuli.json");
  return p;
}

inline nlohmann::json to_json(const Stimulus& s) {
  nlohmann::json j = nlohmann::json::object();
  if (s.is_shape()) {
    j["shape"] = s.shape;
    j["deformation"] = s.deformation;
    j["color"] = s.color;
    j["thickness"] = s.thickness;
  }
  if (!s.image.empty()) j["image"] = s.image;
  return j;
}

inline Stimulus stimulus_from_json(const nlohmann::json& j) {
  Stimulus s;
  s.shape = j.value("shape", "");
  s.deformation = j.value("deformation", "");
  s.color = j.value("color", "");
  s.thickness = j.value("thickness", "");
  s.image = j.value("image", "");
  return s;
}

/// Parses the dataset CSV (`id,label_path,f0,...,f{dim-1}`). Errors name the
/// offending line (header is line 1).
inline Dataset parse_dataset_csv(std::istream& in, std::string name) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  std::vector<Item> items;
  std::unordered_map<ItemId, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split(line, ',');
    if (!have_header) {
      if (cells.size() < 3 || cells[0] != "id" || cells[1] != "label_path") {
        throw ValidationError("line " + std::to_string(line_no) + ": expected header 'id,label_path,f0,...'");
      }
      dim = cells.size() - 2;
      for (std::size_t c = 0; c < dim; ++c) {
        if (cells[c + 2] != "f" + std::to_string(c)) {
          throw ValidationError("line " + std::to_string(line_no) + ": header column " + std::to_string(c + 2) +
                                " should be f" + std::to_string(c));
        }
      }
      have_header = true;
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != dim + 2) {
      throw ValidationError(where + ": expected " + std::to_string(dim) + " features, got " +
                            std::to_string(cells.size() < 2 ? 0 : cells.size() - 2) + " (dimension mismatch)");
    }
    Item item;
    if (!detail::parse_int(cells[0], item.id)) throw ValidationError(where + ": malformed id '" + std::string(cells[0]) + "'");
    if (auto [it, fresh] = seen.emplace(item.id, line_no); !fresh) {
      throw ValidationError(where + ": duplicate id " + std::to_string(item.id) + " (first seen on line " +
                            std::to_string(it->second) + ")");
    }
    if (!cells[1].empty()) {
      for (auto part : detail::split(cells[1], '/')) {
        if (part.empty()) throw ValidationError(where + ": empty concept in label path");
        item.label_path.emplace_back(part);
      }
    }
    item.features.resize(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      if (!detail::parse_double(cells[c + 2], item.features[c])) {
        throw ValidationError(where + ": malformed feature f" + std::to_string(c) + " '" + std::string(cells[c + 2]) + "'");
      }
      if (!std::isfinite(item.features[c])) throw ValidationError(where + ": non-finite feature f" + std::to_string(c));
    }
    items.push_back(std::move(item));
  }
  if (!have_header || items.empty()) throw ValidationError("dataset file has no items");
  return Dataset(std::move(name), dim, std::move(items));
}

inline void write_dataset_csv(const Dataset& dataset, std::ostream& out) {
  out << "id,label_path";
  for (std::size_t c = 0; c < dataset.dim(); ++c) out << ",f" << c;
  out << '\n';
  for (const auto& item : dataset.items()) {
    for (const auto& concept_name : item.label_path) {
      if (concept_name.find_first_of(",/\n") != std::string::npos) {
        throw ValidationError("item " + std::to_string(item.id) + ": concept '" + concept_name +
                              "' contains a reserved character");
      }
    }
    out << item.id << ',' << item.path_string();
    for (double v : item.features) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

/// Loads a dataset CSV plus its stimulus sidecar when present. The dataset
/// name is the file stem.
inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  Dataset base = parse_dataset_csv(in, path.stem().string());
  auto sidecar = stimulus_sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) return base;

  std::ifstream sin(sidecar);
  nlohmann::json j;
  try {
    sin >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("stimulus sidecar " + sidecar.string() + ": " + e.what());
  }
  std::vector<Item> items = base.items();
  for (auto& item : items) {
    auto key = std::to_string(item.id);
    if (j.contains(key)) item.stimulus = stimulus_from_json(j[key]);
  }
  return Dataset(base.name(), base.dim(), std::move(items));
}

inline void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  write_dataset_csv(dataset, out);
  nlohmann::json side = nlohmann::json::object();
  for (const auto& item : dataset.items()) {
    if (item.stimulus) side[std::to_string(item.id)] = to_json(*item.stimulus);
  }
  auto sidecar = stimulus_sidecar_path(path);
  if (!side.empty()) {
    std::ofstream sout(sidecar);
    if (!sout) throw IoError("cannot write stimulus sidecar " + sidecar.string());
    sout << side.dump(1) << '\n';
  } else if (std::filesystem::exists(sidecar)) {
    std::filesystem::remove(sidecar);
  }
}

}  // namespace hke
