#pragma once

// Paired rainy/clean dataset handling. Pairs are matched by file name: every
// PNG in the rainy directory must have a same-named counterpart in the clean
// directory.

#include <algorithm>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/image_io.hpp"
#include "edrain/rainmix.hpp"
#include "edrain/tensor.hpp"

namespace edrain {

struct DatasetPair {
    std::filesystem::path rainy, clean;
    std::string name;
};

struct DatasetIndex {
    std::vector<DatasetPair> pairs;
};

inline DatasetIndex build_dataset_index(const std::filesystem::path& rainy_dir,
                                        const std::filesystem::path& clean_dir) {
    if (!std::filesystem::is_directory(rainy_dir))
        throw std::runtime_error("dataset: not a directory: " + rainy_dir.string());
    if (!std::filesystem::is_directory(clean_dir))
        throw std::runtime_error("dataset: not a directory: " + clean_dir.string());
    DatasetIndex idx;
    for (const auto& e : std::filesystem::directory_iterator(rainy_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        const auto clean = clean_dir / e.path().filename();
        if (!std::filesystem::is_regular_file(clean))
            throw std::runtime_error("dataset: no clean counterpart for " + e.path().string());
        idx.pairs.push_back({e.path(), clean, e.path().filename().string()});
    }
    std::sort(idx.pairs.begin(), idx.pairs.end(),
              [](const DatasetPair& a, const DatasetPair& b) { return a.name < b.name; });
    if (idx.pairs.empty())
        throw std::runtime_error("dataset: no PNG pairs found in " + rainy_dir.string());
    return idx;
}

template <typename T>
struct LoadedDataset {
    std::vector<Tensor<T>> rainy, clean; // (C, H, W) each, per pair
    std::vector<std::string> names;
};

template <typename T>
LoadedDataset<T> load_dataset(const DatasetIndex& idx) {
    LoadedDataset<T> ds;
    for (const auto& p : idx.pairs) {
        Tensor<T> r = load_image<T>(p.rainy.string());
        Tensor<T> c = load_image<T>(p.clean.string());
        if (!r.same_shape(c))
            throw std::runtime_error("dataset: pair '" + p.name + "' shapes differ: rainy " +
                                     r.shape_str() + " vs clean " + c.shape_str());
        if (!ds.rainy.empty() && r.dim(0) != ds.rainy.front().dim(0))
            throw std::runtime_error("dataset: pair '" + p.name + "' has " +
                                     std::to_string(r.dim(0)) +
                                     " channels, earlier pairs have " +
                                     std::to_string(ds.rainy.front().dim(0)));
        ds.rainy.push_back(std::move(r));
        ds.clean.push_back(std::move(c));
        ds.names.push_back(p.name);
    }
    return ds;
}

// Streak maps from a directory of PNGs; RGB inputs are reduced to luma.
template <typename T>
RainStreakSet<T> load_streak_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("streaks: not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("streaks: no PNG files in " + dir.string());

    RainStreakSet<T> set;
    for (const auto& f : files) {
        const Tensor<T> img = load_image<T>(f.string());
        const int h = img.dim(1), w = img.dim(2);
        RainMap<T> map({h, w});
        if (img.dim(0) == 1) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) map.at(y, x) = img.at(0, y, x);
        } else {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    map.at(y, x) = static_cast<T>(0.299) * img.at(0, y, x) +
                                   static_cast<T>(0.587) * img.at(1, y, x) +
                                   static_cast<T>(0.114) * img.at(2, y, x);
        }
        set.maps.push_back(std::move(map));
        set.names.push_back(f.filename().string());
    }
    return set;
}

template <typename T>
Tensor<T> crop_image(const Tensor<T>& img, int y0, int x0, int h, int w) {
    if (img.rank() != 3)
        throw std::invalid_argument("crop_image: expected CHW, got rank " +
                                    std::to_string(img.rank()));
    if (y0 < 0 || x0 < 0 || y0 + h > img.dim(1) || x0 + w > img.dim(2))
        throw std::invalid_argument("crop_image: window " + std::to_string(h) + "x" +
                                    std::to_string(w) + "+" + std::to_string(y0) + "+" +
                                    std::to_string(x0) + " outside " + img.shape_str());
    Tensor<T> out({img.dim(0), h, w});
    for (int c = 0; c < img.dim(0); ++c)
        for (int y = 0; y < h; ++y)
            std::copy_n(&img.at(c, y0 + y, x0), w, &out.at(c, y, 0));
    return out;
}

// Replicate-pad on the bottom/right so H and W become multiples of m.
template <typename T>
Tensor<T> pad_to_multiple(const Tensor<T>& img, int m) {
    if (img.rank() != 3)
        throw std::invalid_argument("pad_to_multiple: expected CHW, got rank " +
                                    std::to_string(img.rank()));
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int hp = (h + m - 1) / m * m, wp = (w + m - 1) / m * m;
    if (hp == h && wp == w) return img;
    Tensor<T> out({c, hp, wp});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < hp; ++y) {
            const int sy = std::min(y, h - 1);
            for (int x = 0; x < wp; ++x) out.at(ci, y, x) = img.at(ci, sy, std::min(x, w - 1));
        }
    return out;
}

} // namespace edrain
