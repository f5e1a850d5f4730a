#pragma once

#include <bit>
#include <istream>
#include <ostream>

#include "entwit/errors.hpp"

namespace entwit {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian");

namespace detail {

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw format_error("unexpected end of file");
    return v;
}

}  // namespace detail
}  // namespace entwit
