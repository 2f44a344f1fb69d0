#pragma once

#include <stdexcept>
#include <string>

namespace stylos {

/// Invalid configuration: indivisible resolutions, width mismatches, missing loss terms.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user-supplied data: empty folders, undecodable files.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Degenerate geometry, e.g. voxelizing a point map without valid points.
class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A runtime invariant was violated (frozen parameter moved, non-finite loss).
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace stylos
