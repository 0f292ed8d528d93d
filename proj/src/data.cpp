#include "bc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "bc/rng.hpp"

namespace bc {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IoError("truncated IDX file: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot open " + images_path);
    std::uint32_t magic = read_be32(imgs, images_path);
    if (magic != kImagesMagic)
        throw IoError("bad magic in " + images_path + ": expected 0x803");
    std::uint32_t n = read_be32(imgs, images_path);
    std::uint32_t rows = read_be32(imgs, images_path);
    std::uint32_t cols = read_be32(imgs, images_path);
    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * rows * cols);
    if (!imgs.read(reinterpret_cast<char*>(pixels.data()), pixels.size()))
        throw IoError("truncated IDX file: " + images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError("cannot open " + labels_path);
    magic = read_be32(labs, labels_path);
    if (magic != kLabelsMagic)
        throw IoError("bad magic in " + labels_path + ": expected 0x801");
    std::uint32_t nl = read_be32(labs, labels_path);
    if (nl != n)
        throw IoError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(nl) + " labels");
    std::vector<unsigned char> bytes(nl);
    if (!labs.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
        throw IoError("truncated IDX file: " + labels_path);

    Dataset d;
    d.inputs = Tensor(Shape{n, rows, cols, 1});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        d.inputs[i] = static_cast<double>(pixels[i]);
    d.labels.assign(bytes.begin(), bytes.end());
    int mx = 0;
    for (int l : d.labels) mx = std::max(mx, l);
    d.classes = static_cast<std::size_t>(mx) + 1;
    return d;
}

void write_idx(const Dataset& d, const std::string& images_path,
               const std::string& labels_path) {
    if (d.inputs.rank() != 4) throw IoError("write_idx expects [N,H,W,1] inputs");
    std::ofstream imgs(images_path, std::ios::binary);
    write_be32(imgs, kImagesMagic);
    write_be32(imgs, static_cast<std::uint32_t>(d.inputs.shape[0]));
    write_be32(imgs, static_cast<std::uint32_t>(d.inputs.shape[1]));
    write_be32(imgs, static_cast<std::uint32_t>(d.inputs.shape[2]));
    for (double v : d.inputs.data) {
        unsigned char b = static_cast<unsigned char>(v);
        imgs.write(reinterpret_cast<char*>(&b), 1);
    }
    std::ofstream labs(labels_path, std::ios::binary);
    write_be32(labs, kLabelsMagic);
    write_be32(labs, static_cast<std::uint32_t>(d.labels.size()));
    for (int l : d.labels) {
        unsigned char b = static_cast<unsigned char>(l);
        labs.write(reinterpret_cast<char*>(&b), 1);
    }
}

Dataset rescale(Dataset d) {
    for (double& v : d.inputs.data) v = v / 127.5 - 1.0;
    return d;
}

Dataset subset(const Dataset& d, std::size_t n) {
    n = std::min(n, d.size());
    Dataset out;
    Shape s = d.inputs.shape;
    std::size_t row = numel(s) / s[0];
    s[0] = n;
    out.inputs = Tensor(s, std::vector<double>(d.inputs.data.begin(),
                                               d.inputs.data.begin() + n * row));
    out.labels.assign(d.labels.begin(), d.labels.begin() + n);
    out.classes = d.classes;
    out.split = d.split;
    return out;
}

Dataset synth_blobs(std::size_t n, std::size_t classes, std::size_t dim,
                    double separation, std::uint64_t seed) {
    if (n < classes) throw DomainError("synth_blobs: n must be >= classes");
    Rng rng(seed);
    Dataset d;
    d.inputs = Tensor(Shape{n, dim});
    d.labels.resize(n);
    d.classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = i % classes;
        d.labels[i] = static_cast<int>(c);
        for (std::size_t k = 0; k < dim; ++k) {
            double center;
            if (dim == 1) {
                center = separation * static_cast<double>(c);
            } else {
                double angle = 2.0 * M_PI * static_cast<double>(c) /
                               static_cast<double>(classes);
                center = k == 0 ? separation * std::cos(angle)
                       : k == 1 ? separation * std::sin(angle)
                                : 0.0;
            }
            d.inputs.data[i * dim + k] = center + rng.normal();
        }
    }
    return d;
}

void gather(const Dataset& d, const std::vector<std::size_t>& idx, Tensor& X,
            std::vector<int>& y) {
    Shape s = d.inputs.shape;
    std::size_t row = numel(s) / s[0];
    s[0] = idx.size();
    X = Tensor(s);
    y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(d.inputs.data.begin() + idx[i] * row, row,
                    X.data.begin() + i * row);
        y[i] = d.labels[idx[i]];
    }
}

} // namespace bc
