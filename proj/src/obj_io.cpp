#include "mei3d/obj_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "mei3d/errors.hpp"

namespace mei3d {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line_no, const std::string& what) {
    throw IoError(path + ":" + std::to_string(line_no) + ": " + what);
}

// Accepts "i", "i/t", "i/t/n", "i//n"; returns the vertex index token.
bool parse_face_ref(const std::string& token, long& out) {
    const char* s = token.c_str();
    char* end = nullptr;
    errno = 0;
    long v = std::strtol(s, &end, 10);
    if (end == s || errno == ERANGE) return false;
    if (*end != '\0' && *end != '/') return false;
    out = v;
    return true;
}

}  // namespace

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open OBJ file: " + path);

    Mesh mesh;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;  // blank line
        if (tag[0] == '#') continue;

        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) parse_fail(path, line_no, "malformed vertex record");
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<long> refs;
            std::string token;
            while (ss >> token) {
                long v;
                if (!parse_face_ref(token, v)) parse_fail(path, line_no, "malformed face reference '" + token + "'");
                refs.push_back(v);
            }
            if (refs.size() != 3) parse_fail(path, line_no, "only triangular faces are supported");
            FaceIndices f{};
            for (int k = 0; k < 3; ++k) {
                long v = refs[k];
                if (v < 1 || v > static_cast<long>(mesh.vertices.size())) {
                    parse_fail(path, line_no, "face index " + std::to_string(v) + " out of range (have " +
                                                  std::to_string(mesh.vertices.size()) + " vertices)");
                }
                f[k] = static_cast<int>(v - 1);
            }
            if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
                parse_fail(path, line_no, "face has repeated indices");
            }
            mesh.faces.push_back(f);
        }
        // vn/vt/o/g/s/usemtl/mtllib records carry no position data; skipped.
    }
    validate_mesh(mesh);
    return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const auto& v : mesh.vertices) {
        std::fprintf(f, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    }
    for (const auto& face : mesh.faces) {
        std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
    }
    if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace mei3d
