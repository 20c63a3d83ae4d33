#pragma once

#include <string>

#include "mixflow/flow.hpp"

namespace mixflow {

inline constexpr uint32_t kCheckpointVersion = 1;

// Versioned little-endian container: format version, a metadata JSON blob,
// the model layout (network specs, coupling regime, kappa mode), every
// parameter as a length-prefixed named f64 array, the EMA shadows, the
// optimizer step count, and the RNG seed state (master seed + iteration).
void save_checkpoint(const std::string& path, const FlowModel& model,
                     const std::string& meta_json = "{}");

FlowModel load_checkpoint(const std::string& path, std::string* meta_json = nullptr);

// Plain-text JSON equivalent of the binary container, for debugging.
void export_checkpoint_json(const std::string& path, const FlowModel& model,
                            const std::string& meta_json = "{}");

}  // namespace mixflow
