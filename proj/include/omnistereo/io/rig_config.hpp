#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "omnistereo/error.hpp"
#include "omnistereo/geometry.hpp"
#include "omnistereo/io/pfm.hpp"

namespace omnistereo::io {

inline constexpr int kRigSchemaVersion = 1;

struct CameraConfig {
  std::string id;
  Pose pose;           // camera to world
  std::string image;   // optional panorama path, relative to the rig file
};

/// Multi-camera rig. Every camera records panoramas of `geometry`.
struct RigConfig {
  std::string layout;
  std::string reference;
  PanoramaGeometry geometry{Projection::ERP, 512, 256};
  std::vector<CameraConfig> cameras;

  int index_of(const std::string& id) const {
    for (std::size_t i = 0; i < cameras.size(); ++i)
      if (cameras[i].id == id) return static_cast<int>(i);
    throw DomainError("rig: unknown camera id '" + id + "'");
  }
  int reference_index() const { return index_of(reference); }

  void check() const {
    if (cameras.size() < 3) throw DomainError("rig: at least three cameras are required");
    std::set<std::string> ids;
    for (const auto& c : cameras) {
      if (c.id.empty()) throw DomainError("rig: camera id must not be empty");
      if (!ids.insert(c.id).second) throw DomainError("rig: duplicate camera id '" + c.id + "'");
      check_pose(c.pose);
    }
    if (!ids.count(reference)) throw DomainError("rig: reference camera '" + reference + "' not found");
    check_geometry(geometry);
  }
};

namespace detail {

using nlohmann::json;

inline double json_number(const json& j, const std::string& what) {
  if (!j.is_number()) throw FormatError("rig: " + what + " must be a number", 0);
  return j.get<double>();
}

inline Vec3 json_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw FormatError("rig: " + what + " must be an array of 3 numbers", 0);
  return {json_number(j[0], what), json_number(j[1], what), json_number(j[2], what)};
}

}  // namespace detail

/// Reads a pose object: "translation" [x, y, z] plus either "quaternion"
/// [w, x, y, z] or "rotation" as three rows of three. Missing parts are identity.
inline Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("rig: pose must be an object", 0);
  Pose p;
  if (j.contains("quaternion") && j.contains("rotation"))
    throw FormatError("rig: give either quaternion or rotation, not both", 0);
  if (j.contains("quaternion")) {
    const auto& q = j["quaternion"];
    if (!q.is_array() || q.size() != 4) throw FormatError("rig: quaternion must be [w, x, y, z]", 0);
    Eigen::Quaterniond quat(detail::json_number(q[0], "quaternion"), detail::json_number(q[1], "quaternion"),
                            detail::json_number(q[2], "quaternion"), detail::json_number(q[3], "quaternion"));
    if (!(quat.norm() > 1e-12)) throw DomainError("rig: zero quaternion");
    p.rotation = quat.normalized().toRotationMatrix();
  } else if (j.contains("rotation")) {
    const auto& r = j["rotation"];
    if (!r.is_array() || r.size() != 3) throw FormatError("rig: rotation must be 3 rows of 3", 0);
    for (int i = 0; i < 3; ++i) p.rotation.row(i) = detail::json_vec3(r[i], "rotation row").transpose();
    if (!is_rotation(p.rotation, 1e-6)) throw DomainError("rig: rotation matrix is not orthonormal");
  }
  if (j.contains("translation")) p.translation = detail::json_vec3(j["translation"], "translation");
  return p;
}

inline nlohmann::json pose_to_json(const Pose& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({p.rotation(i, 0), p.rotation(i, 1), p.rotation(i, 2)});
  return {{"rotation", rows}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what(), e.byte);
  }
}

inline RigConfig rig_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw FormatError("rig: top level must be an object", 0);
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
      throw FormatError("rig: missing schema_version", 0);
    if (j["schema_version"].get<int>() != kRigSchemaVersion)
      throw FormatError("rig: unsupported schema_version " + j["schema_version"].dump(), 0);
    RigConfig rig;
    rig.layout = j.value("layout", std::string());
    rig.reference = j.at("reference").get<std::string>();
    if (j.contains("geometry")) {
      const auto& g = j["geometry"];
      const auto proj = projection_from_string(g.at("projection").get<std::string>());
      if (!proj) throw FormatError("rig: unknown projection " + g["projection"].dump(), 0);
      rig.geometry = {*proj, g.at("width").get<int>(), g.at("height").get<int>()};
    }
    for (const auto& c : j.at("cameras")) {
      CameraConfig cam;
      cam.id = c.at("id").get<std::string>();
      cam.pose = pose_from_json(c);
      cam.image = c.value("image", std::string());
      rig.cameras.push_back(std::move(cam));
    }
    rig.check();
    return rig;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rig: ") + e.what(), 0);
  }
}

inline nlohmann::json rig_to_json(const RigConfig& rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : rig.cameras) {
    auto cj = pose_to_json(c.pose);
    cj["id"] = c.id;
    if (!c.image.empty()) cj["image"] = c.image;
    cams.push_back(cj);
  }
  return {{"schema_version", kRigSchemaVersion},
          {"layout", rig.layout},
          {"reference", rig.reference},
          {"geometry",
           {{"projection", std::string(to_string(rig.geometry.projection))},
            {"width", rig.geometry.width},
            {"height", rig.geometry.height}}},
          {"cameras", cams}};
}

/// Loads a rig file; relative image paths are resolved against its directory.
inline RigConfig read_rig(const std::string& path) {
  RigConfig rig;
  try {
    rig = rig_from_json(parse_json_text(read_file(path), path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.message(), e.offset());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  for (auto& c : rig.cameras)
    if (!c.image.empty() && std::filesystem::path(c.image).is_relative()) c.image = (dir / c.image).string();
  return rig;
}

inline Pose read_pose(const std::string& path) {
  try {
    return pose_from_json(parse_json_text(read_file(path), path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what(), 0);
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace omnistereo::io
