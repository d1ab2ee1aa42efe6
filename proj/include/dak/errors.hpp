// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dak {

// Malformed or out-of-range input document (hardware, model, CLI flags).
class ConfigError : public std::runtime_error {
   public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Data does not fit: footprint overflows host+HBM, or staging buffers overflow HBM.
class CapacityError : public std::runtime_error {
   public:
    explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dak
