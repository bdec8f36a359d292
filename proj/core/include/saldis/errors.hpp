#pragma once

#include <stdexcept>
#include <string>

namespace saldis {

/// Malformed or inconsistent external data (files, corpora, CLI inputs).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: divergence, non-convergence, collapsed maps.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace saldis
