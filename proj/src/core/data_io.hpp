#pragma once

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace gadan::data_io {

/// One unpaired image domain: a directory scanned once at construction.
/// The file list is sorted lexicographically before any shuffling so batch
/// order is platform-independent.
struct DomainDataset {
    std::string root;
    std::vector<std::string> files;  // decodable files only, sorted
    int size = 0;
    int channels = 0;
};

/// Enumerate and validate the supported images (png/jpeg/bmp) in a
/// directory. Undecodable files are skipped with a warning; an empty result
/// raises EmptyDomain.
DomainDataset load_domain(const std::string& dir, int size, int channels);

/// Deterministic epoch cursor: a seeded shuffle per epoch, batches never
/// spanning epochs (the final batch of an epoch may be short).
struct BatchCursor {
    Rng rng;
    std::vector<uint32_t> perm;
    size_t pos = 0;

    std::string serialize() const;
    void deserialize(const std::string& text);
};

/// Decode, resize and scale the next batch; advances the cursor.
Tensor next_batch(const DomainDataset& ds, int batch_size, BatchCursor& cursor);

/// Decode one file to 1 x C x H x W in [-1, 1] (v / 127.5 - 1 after a
/// bilinear resize to size x size).
Tensor decode_image(const std::string& path, int size, int channels);

/// Inverse scaling to 8-bit PNG with clamping and round-half-away-from-zero.
/// Accepts C x H x W or 1 x C x H x W.
void encode_output(const Tensor& image, const std::string& path);

}  // namespace gadan::data_io
