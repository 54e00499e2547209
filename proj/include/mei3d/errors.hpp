#pragma once
#include <stdexcept>
#include <string>

namespace mei3d {

// Base of all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: config schema violations, malformed files, missing paths.
// The CLI maps these to exit code 2.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Mesh construction/validation failures (degenerate faces, bad indices, size caps).
struct MeshError : Error {
    explicit MeshError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Scene/render preconditions (mesh behind camera, invalid resolution, ...).
struct RenderError : Error {
    explicit RenderError(const std::string& msg) : Error(msg) {}
};

// Response-model failures: protocol violations, timeouts, non-finite outputs.
struct ModelError : Error {
    explicit ModelError(const std::string& msg) : Error(msg) {}
};

// Mid-run aborts of an optimization (non-finite loss or parameters).
struct OptimizationError : Error {
    explicit OptimizationError(const std::string& msg) : Error(msg) {}
};

}  // namespace mei3d
