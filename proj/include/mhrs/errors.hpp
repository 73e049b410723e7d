#pragma once

#include <stdexcept>
#include <string>

namespace mhrs {

// Configuration / input problems map to CLI exit code 2.
struct invalid_config : std::runtime_error {
    explicit invalid_config(const std::string& what) : std::runtime_error(what) {}
};

struct invalid_input : std::runtime_error {
    explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

struct format_error : std::runtime_error {
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

struct undefined_metric : std::runtime_error {
    explicit undefined_metric(const std::string& what) : std::runtime_error(what) {}
};

struct invalid_comparison : std::runtime_error {
    explicit invalid_comparison(const std::string& what) : std::runtime_error(what) {}
};

// Broken caller contracts and internal invariant breaches map to exit code 3.
struct contract_violation : std::logic_error {
    explicit contract_violation(const std::string& what) : std::logic_error(what) {}
};

struct training_diverged : std::runtime_error {
    explicit training_diverged(const std::string& what) : std::runtime_error(what) {}
};

struct simulation_halt : std::runtime_error {
    explicit simulation_halt(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mhrs
