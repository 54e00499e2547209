#pragma once
#include <string>

#include "mei3d/mesh.hpp"

namespace mei3d {

// Wavefront OBJ subset: `v x y z` and triangular `f` records; `#` comments
// skipped; `f` vertex references may carry /vt/vn suffixes which are ignored.
// Faces are converted between the file's 1-based and internal 0-based indexing.
Mesh load_obj(const std::string& path);

// Positions written with 17 significant digits so a save/load round trip
// reproduces coordinates exactly.
void save_obj(const Mesh& mesh, const std::string& path);

}  // namespace mei3d
