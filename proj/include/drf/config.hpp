#pragma once
// Run configuration: an INI-style document with sections [data], [model],
// [train], [uq], [tune] and [predict]. Every key has a default; unknown
// sections and keys are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "drf/data.hpp"
#include "drf/hyperopt.hpp"
#include "drf/network.hpp"
#include "drf/training.hpp"

namespace drf {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RunConfig {
public:
    // All keys at their defaults.
    RunConfig();

    static RunConfig load(const std::filesystem::path& path);
    static RunConfig parse(std::istream& in, const std::string& source);

    // where is used in diagnostics ("file:line" or "override").
    void set(const std::string& section, const std::string& key, const std::string& value,
             const std::string& where = "override");
    // "section.key=value".
    void apply_override(const std::string& assignment);

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::size_t get_size(const std::string& section, const std::string& key) const;
    std::uint64_t get_seed(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    // Fully resolved document in schema order.
    void write(std::ostream& out) const;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

CoordKind coord_kind(const RunConfig& cfg);
Domain data_domain(const RunConfig& cfg);
FieldConfig field_config(const RunConfig& cfg);

NetworkSpec network_spec(const RunConfig& cfg);
// weight_decay = "auto" resolves to noise_std^2 / n_train.
TrainConfig train_config(const RunConfig& cfg, std::size_t n_train);
HyperSpace hyper_space(const RunConfig& cfg);

// Writes a point of the tuning space back into the config.
void apply_hyperparameters(RunConfig& cfg, const HyperSpace& space, const std::vector<double>& lambda);

}  // namespace drf
