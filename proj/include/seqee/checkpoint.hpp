#pragma once

#include <string>

#include "seqee/data_io.hpp"
#include "seqee/encoder.hpp"

namespace seqee {

// Everything a downstream command needs to run the model against text.
struct Checkpoint {
    ModelConfig config;
    EncoderWeights weights;
    LabelVocab labels;
    TokenVocab tokens;
};

// Binary checkpoint, format "SEQEECK1" (see README for the byte layout).
// Little-endian, float64 tensors in row-major order with explicit shapes;
// load(save(x)) is bit-exact.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace seqee
