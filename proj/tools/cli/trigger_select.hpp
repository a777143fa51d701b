#pragma once

#include <string>

#include "tdk/attack.hpp"

namespace tdk::cli {

/// "white-patch" and "blue-star" name the built-in triggers; anything else is
/// a trigger JSON file.
inline TriggerSpec resolve_trigger(const std::string& name_or_path, const Shape& shape) {
  TriggerSpec t;
  if (name_or_path == "white-patch") {
    t = white_patch_trigger(shape);
  } else if (name_or_path == "blue-star") {
    t = blue_star_trigger(shape);
  } else {
    t = load_trigger(name_or_path);
  }
  validate_trigger(t, shape);
  return t;
}

}  // namespace tdk::cli
