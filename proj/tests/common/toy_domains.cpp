#include "common/toy_domains.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <vector>

#include "core/data_io.hpp"
#include "core/synth.hpp"

namespace toy {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Quad {
    double x[4], y[4];  // corners, counter-clockwise
};

Quad scene_quad(const Scene& s, double tilt_deg) {
    const double c = std::cos(tilt_deg * kPi / 180.0), sn = std::sin(tilt_deg * kPi / 180.0);
    const double dx[4] = {-s.half_w, s.half_w, s.half_w, -s.half_w};
    const double dy[4] = {-s.half_h, -s.half_h, s.half_h, s.half_h};
    Quad q;
    for (int i = 0; i < 4; ++i) {
        q.x[i] = s.cx + c * dx[i] - sn * dy[i];
        q.y[i] = s.cy + sn * dx[i] + c * dy[i];
    }
    return q;
}

bool inside(const Quad& q, double px, double py) {
    for (int i = 0; i < 4; ++i) {
        const int j = (i + 1) % 4;
        const double cross =
            (q.x[j] - q.x[i]) * (py - q.y[i]) - (q.y[j] - q.y[i]) * (px - q.x[i]);
        if (cross < 0.0) return false;
    }
    return true;
}

gadan::Tensor rasterize(const Quad& q, int size, double fg, double bg, gadan::Rng& rng) {
    gadan::Tensor img({1, 1, size, size});
    // 3x3 supersampling for soft edges.
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            int hits = 0;
            for (int si = 0; si < 3; ++si)
                for (int sj = 0; sj < 3; ++sj)
                    if (inside(q, j + (sj + 0.5) / 3.0, i + (si + 0.5) / 3.0)) ++hits;
            const double frac = hits / 9.0;
            double v = bg + frac * (fg - bg) + 0.02 * rng.normal();
            img[i * size + j] = std::clamp(v, -1.0, 1.0);
        }
    return img;
}

}  // namespace

Scene random_scene(gadan::Rng& rng, int size) {
    Scene s;
    s.half_w = rng.uniform(0.18, 0.34) * size;
    s.half_h = s.half_w / rng.uniform(1.8, 2.8);
    const double margin = std::max(s.half_w, s.half_h) + 0.09 * size;
    s.cx = rng.uniform(margin, size - margin);
    s.cy = rng.uniform(margin, size - margin);
    s.fg = rng.uniform(0.55, 0.9);
    s.bg = rng.uniform(-0.9, -0.7);
    return s;
}

gadan::Tensor render_axis_aligned(const Scene& scene, int size) {
    gadan::Rng noise(static_cast<uint64_t>(scene.cx * 7919 + scene.cy * 104729));
    return rasterize(scene_quad(scene, 0.0), size, scene.fg, scene.bg, noise);
}

gadan::Tensor render_tilted(const Scene& scene, int size, double tilt_deg, double blur_sigma) {
    gadan::Rng noise(static_cast<uint64_t>(scene.cx * 7919 + scene.cy * 104729) + 1);
    gadan::Tensor img = rasterize(scene_quad(scene, tilt_deg), size, scene.fg, scene.bg, noise);
    return blur_sigma > 0.0 ? gadan::synth::gaussian_blur(img, blur_sigma) : img;
}

void write_domains(const std::string& x_dir, const std::string& y_dir, int nx, int ny, int size,
                   double tilt_range_deg, double blur_sigma, uint64_t seed) {
    std::filesystem::create_directories(x_dir);
    std::filesystem::create_directories(y_dir);
    gadan::Rng rng(seed);
    char name[64];
    for (int i = 0; i < nx; ++i) {
        gadan::Tensor img = render_axis_aligned(random_scene(rng, size), size);
        std::snprintf(name, sizeof(name), "/x_%04d.png", i);
        gadan::data_io::encode_output(img, x_dir + name);
    }
    for (int i = 0; i < ny; ++i) {
        const double tilt = rng.uniform(-tilt_range_deg, tilt_range_deg);
        gadan::Tensor img = render_tilted(random_scene(rng, size), size, tilt, blur_sigma);
        std::snprintf(name, sizeof(name), "/y_%04d.png", i);
        gadan::data_io::encode_output(img, y_dir + name);
    }
}

std::optional<double> estimate_tilt_deg(const gadan::Tensor& image) {
    const int64_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
    const double* v = image.data();

    // Largest bright connected component (threshold at 0, 4-connectivity).
    std::vector<int32_t> label(static_cast<size_t>(h * w), 0);
    int32_t next = 0;
    int64_t best_size = 0;
    int32_t best_label = 0;
    for (int64_t start = 0; start < h * w; ++start) {
        if (v[start] <= 0.0 || label[start] != 0) continue;
        ++next;
        int64_t count = 0;
        std::deque<int64_t> queue{start};
        label[start] = next;
        while (!queue.empty()) {
            const int64_t p = queue.front();
            queue.pop_front();
            ++count;
            const int64_t pi = p / w, pj = p % w;
            const int64_t neighbors[4] = {p - w, p + w, p - 1, p + 1};
            const bool ok[4] = {pi > 0, pi < h - 1, pj > 0, pj < w - 1};
            for (int n = 0; n < 4; ++n) {
                if (!ok[n]) continue;
                const int64_t q = neighbors[n];
                if (v[q] > 0.0 && label[q] == 0) {
                    label[q] = next;
                    queue.push_back(q);
                }
            }
        }
        if (count > best_size) {
            best_size = count;
            best_label = next;
        }
    }
    if (best_size < 30) return std::nullopt;

    std::vector<std::pair<double, double>> pts;
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
            if (label[i * w + j] == best_label)
                pts.emplace_back(static_cast<double>(j), static_cast<double>(i));

    // Convex hull (monotone chain).
    std::sort(pts.begin(), pts.end());
    auto cross = [](const std::pair<double, double>& o, const std::pair<double, double>& a,
                    const std::pair<double, double>& b) {
        return (a.first - o.first) * (b.second - o.second) -
               (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> hull(2 * pts.size());
    size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    const size_t lower = k + 1;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k > 1 ? k - 1 : k);
    if (hull.size() < 3) return std::nullopt;

    // Minimum-area enclosing rectangle over hull edge directions; the tilt is
    // the orientation of the rectangle's long side.
    double best_area = 1e300, best_angle = 0.0;
    for (size_t e = 0; e < hull.size(); ++e) {
        const auto& a = hull[e];
        const auto& b = hull[(e + 1) % hull.size()];
        const double ex = b.first - a.first, ey = b.second - a.second;
        const double len = std::hypot(ex, ey);
        if (len < 1e-9) continue;
        const double ux = ex / len, uy = ey / len;
        double min_u = 1e300, max_u = -1e300, min_v = 1e300, max_v = -1e300;
        for (const auto& p : hull) {
            const double pu = p.first * ux + p.second * uy;
            const double pv = -p.first * uy + p.second * ux;
            min_u = std::min(min_u, pu);
            max_u = std::max(max_u, pu);
            min_v = std::min(min_v, pv);
            max_v = std::max(max_v, pv);
        }
        const double du = max_u - min_u, dv = max_v - min_v;
        const double area = du * dv;
        if (area < best_area) {
            best_area = area;
            // Long side direction in image coordinates.
            double angle = du >= dv ? std::atan2(uy, ux) : std::atan2(ux, -uy);
            angle *= 180.0 / kPi;
            while (angle > 90.0) angle -= 180.0;
            while (angle <= -90.0) angle += 180.0;
            if (angle > 45.0) angle -= 90.0;
            if (angle <= -45.0) angle += 90.0;
            best_angle = angle;
        }
    }
    return best_angle;
}

double laplacian_energy(const gadan::Tensor& image) {
    const int64_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
    const double* v = image.data();
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t i = 1; i + 1 < h; ++i)
        for (int64_t j = 1; j + 1 < w; ++j) {
            const double lap =
                v[(i - 1) * w + j] + v[(i + 1) * w + j] + v[i * w + j - 1] + v[i * w + j + 1] -
                4.0 * v[i * w + j];
            sum += lap * lap;
            ++count;
        }
    return sum / count;
}

}  // namespace toy
