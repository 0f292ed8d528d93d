#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bc/tensor.hpp"

namespace bc {

struct Dataset {
    Tensor inputs;           // [N,H,W,1] images or [N,D] features
    std::vector<int> labels; // in [0, classes)
    std::size_t classes = 0;
    std::string split;       // "train" | "test"

    std::size_t size() const { return labels.size(); }
};

// Parses the big-endian IDX pair of the MNIST distribution. Pixel values are
// kept as raw bytes in [0,255]; call rescale() before training.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Maps byte pixels onto [-1, 1]: x -> x/127.5 - 1.
Dataset rescale(Dataset d);

// First n samples, in stored order.
Dataset subset(const Dataset& d, std::size_t n);

// Gaussian blobs around equidistant class centers; labels round-robin.
Dataset synth_blobs(std::size_t n, std::size_t classes, std::size_t dim,
                    double separation, std::uint64_t seed);

// Copies the selected rows into a batch tensor.
void gather(const Dataset& d, const std::vector<std::size_t>& idx, Tensor& X,
            std::vector<int>& y);

// Writes an IDX image/label pair (test fixtures, round-trip checks).
void write_idx(const Dataset& d, const std::string& images_path,
               const std::string& labels_path);

} // namespace bc
