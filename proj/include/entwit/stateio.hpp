#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "entwit/errors.hpp"
#include "entwit/qstate.hpp"

namespace entwit {

/// Plain-text pure state: first line n_qubits, then 2^n lines "re im".
inline PureState read_pure_state(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    int n = 0;
    if (!(in >> n) || n < 1) throw format_error("pure state file: bad qubit count");
    Eigen::Index len = Eigen::Index{1} << n;
    CVec amp(len);
    for (Eigen::Index i = 0; i < len; ++i) {
        double re, im;
        if (!(in >> re >> im)) throw format_error("pure state file: truncated amplitudes");
        amp(i) = {re, im};
    }
    double norm = amp.norm();
    if (std::abs(norm - 1.0) > 1e-9)
        throw std::invalid_argument("pure state file: amplitudes are not unit norm");
    return {n, amp};
}

inline void write_pure_state(const std::string& path, const PureState& psi) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << psi.n_qubits << "\n";
    char buf[80];
    for (Eigen::Index i = 0; i < psi.amp.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g\n", psi.amp(i).real(), psi.amp(i).imag());
        out << buf;
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace entwit
