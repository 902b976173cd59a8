#pragma once

#include <stdexcept>
#include <string>

namespace headgate {

// Error taxonomy used across the library. The CLI maps these onto exit
// codes: validation_error -> 1, numeric_error -> 2, io_error -> 3.

// Bad configuration, out-of-range index, shape mismatch, violated invariant.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value detected during computation. Carries the (layer, head)
// location when known; -1 means "not attributable".
class numeric_error : public std::runtime_error {
public:
    numeric_error(const std::string& what, int layer = -1, int head = -1)
        : std::runtime_error(what), layer(layer), head(head) {}
    int layer;
    int head;
};

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace headgate
