#include "lpsc/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

namespace lpsc {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& path) {
    if (bytes.size() < offset + 4) throw FormatError(path + ": truncated IDX header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    out.write(b.data(), 4);
}

}  // namespace

void Dataset::validate() const {
    if (images.rank() != 4) throw ValidationError("dataset images must be (N, H, W, C)");
    if (labels.empty()) throw ValidationError("dataset is empty");
    if (images.dim(0) != labels.size()) throw ValidationError("dataset image and label counts differ");
    if (!images.all_finite()) throw ValidationError("dataset contains NaN or Inf");
    for (std::size_t l : labels)
        if (l >= classes) throw ValidationError("label " + std::to_string(l) + " out of range for " +
                                                std::to_string(classes) + " classes");
}

IdxData read_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = slurp(images_path);
    const auto lab = slurp(labels_path);
    if (be32(img, 0, images_path) != kImageMagic)
        throw FormatError(images_path + ": bad IDX image magic (expected 0x00000803)");
    if (be32(lab, 0, labels_path) != kLabelMagic)
        throw FormatError(labels_path + ": bad IDX label magic (expected 0x00000801)");
    const std::size_t n = be32(img, 4, images_path);
    IdxData d;
    d.rows = be32(img, 8, images_path);
    d.cols = be32(img, 12, images_path);
    const std::size_t n_labels = be32(lab, 4, labels_path);
    if (n != n_labels)
        throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) +
                          " labels");
    const std::size_t payload = n * d.rows * d.cols;
    if (img.size() != 16 + payload)
        throw FormatError(images_path + ": expected " + std::to_string(16 + payload) + " bytes, found " +
                          std::to_string(img.size()));
    if (lab.size() != 8 + n) throw FormatError(labels_path + ": expected " + std::to_string(8 + n) +
                                               " bytes, found " + std::to_string(lab.size()));
    d.pixels.assign(img.begin() + 16, img.end());
    d.labels.assign(lab.begin() + 8, lab.end());
    return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const IdxData raw = read_idx(images_path, labels_path);
    if (raw.labels.empty()) throw FormatError(images_path + ": IDX file holds no samples");
    Dataset ds;
    const std::size_t n = raw.labels.size();
    ds.images = Tensor({n, raw.rows, raw.cols, 1});
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) ds.images[i] = raw.pixels[i] / 255.0;
    ds.labels.assign(raw.labels.begin(), raw.labels.end());
    ds.classes = static_cast<std::size_t>(*std::max_element(raw.labels.begin(), raw.labels.end())) + 1;
    return ds;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const IdxData& data) {
    const std::size_t n = data.labels.size();
    if (data.pixels.size() != n * data.rows * data.cols)
        throw ValidationError("write_idx: pixel count does not match labels x rows x cols");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open '" + images_path + "' for writing");
    put_be32(img, kImageMagic);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, static_cast<std::uint32_t>(data.rows));
    put_be32(img, static_cast<std::uint32_t>(data.cols));
    img.write(reinterpret_cast<const char*>(data.pixels.data()), static_cast<std::streamsize>(data.pixels.size()));

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open '" + labels_path + "' for writing");
    put_be32(lab, kLabelMagic);
    put_be32(lab, static_cast<std::uint32_t>(n));
    lab.write(reinterpret_cast<const char*>(data.labels.data()), static_cast<std::streamsize>(n));
    if (!img || !lab) throw FormatError("failed writing IDX files");
}

IdxData to_idx(const Dataset& dataset) {
    dataset.validate();
    if (dataset.images.dim(3) != 1) throw ValidationError("IDX export needs single-channel images");
    if (dataset.classes > 256) throw ValidationError("IDX labels are bytes: at most 256 classes");
    IdxData d;
    d.rows = dataset.images.dim(1);
    d.cols = dataset.images.dim(2);
    d.pixels.resize(dataset.images.size());
    for (std::size_t i = 0; i < d.pixels.size(); ++i)
        d.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(dataset.images[i], 0.0, 1.0) * 255.0));
    d.labels.assign(dataset.labels.begin(), dataset.labels.end());
    return d;
}

Dataset make_oriented_edges(std::size_t n_per_class, std::size_t size, std::uint64_t seed) {
    if (size < 8) throw ValidationError("oriented-edges images need size >= 8");
    if (n_per_class < 1) throw ValidationError("oriented-edges needs at least one sample per class");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.3);
    std::uniform_real_distribution<double> brightness(0.7, 1.0);
    std::uniform_int_distribution<std::size_t> offset(0, size - 1);

    const std::size_t n = 2 * n_per_class;
    Dataset ds{Tensor({n, size, size, 1}), std::vector<std::size_t>(n), 2};
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t label = s % 2;
        ds.labels[s] = label;
        Tensor img({size, size, 1});
        for (double& v : img.data()) v = noise(rng);
        const std::size_t at = offset(rng);
        const double level = brightness(rng);
        for (std::size_t t = 0; t < size; ++t) {
            if (label == 0) img.at(at, t, 0) = level;
            else img.at(t, at, 0) = level;
        }
        ds.images.set_slice(s, img);
    }
    return ds;
}

}  // namespace lpsc
