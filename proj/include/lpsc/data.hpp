#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lpsc/tensor.hpp"

namespace lpsc {

struct Dataset {
    Tensor images;                     // (N, H, W, C), values in [0, 1]
    std::vector<std::size_t> labels;   // N entries
    std::size_t classes = 0;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
    void validate() const;
};

/// Raw IDX contents: unsigned-byte images (N, rows, cols) and labels.
struct IdxData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
    std::vector<std::uint8_t> labels;
};

/// Parses the IDX pair (image magic 0x00000803, label magic 0x00000801),
/// scaling bytes by 1/255 into a single-channel dataset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
IdxData read_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const std::string& images_path, const std::string& labels_path, const IdxData& data);

/// Quantizes a [0, 1] single-channel dataset to IDX bytes.
IdxData to_idx(const Dataset& dataset);

/// Two classes of noisy size x size images: class 0 holds a bright horizontal
/// bar, class 1 a vertical one, each spanning the image at a random offset.
/// Samples alternate by class; deterministic for a seed.
Dataset make_oriented_edges(std::size_t n_per_class, std::size_t size, std::uint64_t seed);

}  // namespace lpsc
