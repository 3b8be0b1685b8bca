#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "idm/tape.hpp"

namespace idm::ad {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structured-text checkpoint: a format-version header, optional metadata
// lines, then ordered (name, shape, float64 values) records.
void save_checkpoint(std::ostream& os,
                     const std::vector<const Parameter*>& params,
                     const std::vector<std::string>& metadata = {});
void save_checkpoint(const std::string& path,
                     const std::vector<const Parameter*>& params,
                     const std::vector<std::string>& metadata = {});

// Loads values into matching parameters (by order; names and shapes must
// agree). Returns the metadata lines.
std::vector<std::string> load_checkpoint(std::istream& is,
                                         const std::vector<Parameter*>& params);
std::vector<std::string> load_checkpoint(const std::string& path,
                                         const std::vector<Parameter*>& params);

}  // namespace idm::ad
