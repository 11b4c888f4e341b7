#include "core/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "core/error.hpp"
#include "core/log.hpp"

namespace fs = std::filesystem;

namespace gadan::data_io {

namespace {

bool supported_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

cv::Mat decode_mat(const std::string& path, int size, int channels) {
    cv::Mat img = cv::imread(path, channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    if (img.empty()) throw IoError("cannot decode image: " + path);
    if (img.rows != size || img.cols != size)
        cv::resize(img, img, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
    return img;
}

void mat_to_tensor(const cv::Mat& img, int channels, double* out) {
    const int h = img.rows, w = img.cols;
    // Channel-planar RGB (OpenCV decodes BGR).
    for (int c = 0; c < channels; ++c) {
        const int src_c = channels == 3 ? 2 - c : 0;
        double* plane = out + static_cast<int64_t>(c) * h * w;
        for (int i = 0; i < h; ++i) {
            const uint8_t* row = img.ptr<uint8_t>(i);
            for (int j = 0; j < w; ++j)
                plane[static_cast<int64_t>(i) * w + j] =
                    row[j * channels + src_c] / 127.5 - 1.0;
        }
    }
}

}  // namespace

DomainDataset load_domain(const std::string& dir, int size, int channels) {
    if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
    if (size < 2) throw ConfigError("image size must be >= 2");
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);

    std::vector<std::string> candidates;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && supported_extension(entry.path()))
            candidates.push_back(entry.path().string());
    }
    if (ec) throw IoError("cannot list directory: " + dir);
    std::sort(candidates.begin(), candidates.end());

    DomainDataset ds;
    ds.root = dir;
    ds.size = size;
    ds.channels = channels;
    for (const std::string& path : candidates) {
        cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
        if (img.empty()) {
            GADAN_WARN("skipping undecodable file: " << path);
            continue;
        }
        ds.files.push_back(path);
    }
    if (ds.files.empty())
        throw EmptyDomain("no decodable images in " + dir);
    return ds;
}

std::string BatchCursor::serialize() const {
    std::ostringstream os;
    os << rng.serialize() << "\n" << pos << " " << perm.size();
    for (uint32_t v : perm) os << " " << v;
    return os.str();
}

void BatchCursor::deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string engine;
    std::getline(is, engine);
    rng.deserialize(engine);
    size_t n = 0;
    is >> pos >> n;
    perm.resize(n);
    for (size_t i = 0; i < n; ++i) is >> perm[i];
    if (!is) throw IoError("corrupt batch cursor state");
}

Tensor next_batch(const DomainDataset& ds, int batch_size, BatchCursor& cursor) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const size_t n = ds.files.size();
    if (cursor.perm.size() != n || cursor.pos >= n) {
        cursor.perm.resize(n);
        for (size_t i = 0; i < n; ++i) cursor.perm[i] = static_cast<uint32_t>(i);
        // Fisher-Yates with our own engine; std::shuffle is implementation-defined.
        for (size_t i = n; i > 1; --i) {
            const size_t j = static_cast<size_t>(cursor.rng.below(i));
            std::swap(cursor.perm[i - 1], cursor.perm[j]);
        }
        cursor.pos = 0;
    }
    const size_t take = std::min<size_t>(batch_size, n - cursor.pos);
    Tensor batch({static_cast<int64_t>(take), ds.channels, ds.size, ds.size});
    for (size_t i = 0; i < take; ++i) {
        const std::string& path = ds.files[cursor.perm[cursor.pos + i]];
        cv::Mat img = decode_mat(path, ds.size, ds.channels);
        mat_to_tensor(img, ds.channels,
                      batch.data() + static_cast<int64_t>(i) * ds.channels * ds.size * ds.size);
    }
    cursor.pos += take;
    return batch;
}

Tensor decode_image(const std::string& path, int size, int channels) {
    cv::Mat img = decode_mat(path, size, channels);
    Tensor out({1, channels, size, size});
    mat_to_tensor(img, channels, out.data());
    return out;
}

void encode_output(const Tensor& image, const std::string& path) {
    Tensor img = image;
    if (img.rank() == 4) {
        if (img.dim(0) != 1) throw ShapeMismatch("encode_output: batch must be 1");
        img = img.reshaped({img.dim(1), img.dim(2), img.dim(3)});
    }
    if (img.rank() != 3) throw ShapeMismatch("encode_output: need C x H x W");
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (c != 1 && c != 3) throw ShapeMismatch("encode_output: channels must be 1 or 3");
    cv::Mat mat(static_cast<int>(h), static_cast<int>(w),
                c == 1 ? CV_8UC1 : CV_8UC3);
    for (int64_t i = 0; i < h; ++i) {
        uint8_t* row = mat.ptr<uint8_t>(static_cast<int>(i));
        for (int64_t j = 0; j < w; ++j)
            for (int64_t ch = 0; ch < c; ++ch) {
                const int64_t src_c = c == 3 ? 2 - ch : 0;  // planar RGB -> BGR
                double v = (img[(src_c * h + i) * w + j] + 1.0) * 127.5;
                v = std::round(v);  // round half away from zero
                v = std::min(255.0, std::max(0.0, v));
                row[j * c + ch] = static_cast<uint8_t>(v);
            }
    }
    if (!cv::imwrite(path, mat)) throw IoError("cannot write image: " + path);
}

}  // namespace gadan::data_io
