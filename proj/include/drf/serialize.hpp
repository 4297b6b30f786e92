#pragma once
// Versioned binary model files. A file stores the network spec, seed,
// every frozen feature array and every trainable array bit-exactly
// (little-endian IEEE-754 doubles).
//
//   magic   "DRFMODEL"          8 bytes
//   version u32                 currently 1
//   kind    u32                 0 = point model, 1 = variational posterior
//   spec, seed, feature layers, weights [, log-variances]

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "drf/network.hpp"

namespace drf {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
    DrfModel model;
    // Present for variational posteriors: the model weights hold the
    // means, this the per-weight log-variances.
    std::optional<std::vector<double>> log_variance;
};

void write_model(std::ostream& out, const DrfModel& model,
                 const std::vector<double>* log_variance = nullptr);
ModelFile read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const DrfModel& model,
                const std::vector<double>* log_variance = nullptr);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace drf
