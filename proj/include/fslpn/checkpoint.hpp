#pragma once

#include <string>

#include "fslpn/params.hpp"

namespace fslpn {

// Checkpoint container: magic "FSLPCKPT", format version, a precision flag,
// the resolved config echo, then named tensors (name length + name bytes +
// rank + extents + little-endian 32-bit values) in name order. Partition and
// trainability are recovered from the name (prefix / ".running_" infix).
// Round-trips are bit-exact, batch-norm running statistics included.

struct LoadedCheckpoint {
    ParameterSet<float> params;
    std::string config_echo;
};

void save_checkpoint(const ParameterSet<float>& params, const std::string& config_echo,
                     const std::string& path);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace fslpn
