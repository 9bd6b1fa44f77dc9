#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fcmformer {

// Shape disagreement between tensors (or between a tensor and a file column
// layout). The message always names both shapes involved.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid configuration: width not divisible by head count, bad split sizes,
// unknown config keys, values out of range.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Violated call contract: non-scalar loss passed to backward, out-of-range
// class label, mismatched prediction/truth lengths.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Unusable model input, e.g. a sample with zero events.
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// FCS byte-stream problem. `offset` is the byte position the parser was
// looking at when it gave up.
struct FcsError : std::runtime_error {
  enum class Kind {
    unsupported_version,
    unsupported_datatype,
    unsupported_amplification,
    unsupported_byte_order,
    corrupt,
  };

  FcsError(Kind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        kind(kind),
        offset(offset) {}

  Kind kind;
  std::size_t offset;
};

// A tube whose parameters match none of the canonical panel features.
struct EmptyPanelError : std::runtime_error {
  explicit EmptyPanelError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed cohort manifest; the message names the offending row.
struct ManifestError : std::runtime_error {
  explicit ManifestError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or incompatible checkpoint file.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Metric that is undefined on the given inputs (e.g. ROC-AUC with a
// single-class truth vector). The message lists the absent classes.
struct MetricError : std::runtime_error {
  explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fcmformer
