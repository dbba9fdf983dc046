#include "focus/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "focus/png_io.hpp"
#include "focus/rng.hpp"

namespace fs = std::filesystem;

namespace focus {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// one deterministic lattice value in [0,1) per (key, cell)
double lattice(uint64_t key, long cx, long cy) {
    uint64_t k = key ^ (static_cast<uint64_t>(cx) * 0x9E3779B97F4A7C15ULL) ^
                 (static_cast<uint64_t>(cy) * 0xC2B2AE3D27D4EB4FULL);
    return Rng(k).uniform();
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// bilinear value noise at lattice frequency `freq` cells per unit square
double value_noise(uint64_t key, double x, double y, double freq) {
    double fx = x * freq, fy = y * freq;
    long cx = static_cast<long>(std::floor(fx)), cy = static_cast<long>(std::floor(fy));
    double tx = smoothstep(fx - cx), ty = smoothstep(fy - cy);
    double v00 = lattice(key, cx, cy), v10 = lattice(key, cx + 1, cy);
    double v01 = lattice(key, cx, cy + 1), v11 = lattice(key, cx + 1, cy + 1);
    double a = v00 + (v10 - v00) * tx;
    double b = v01 + (v11 - v01) * tx;
    return a + (b - a) * ty;
}

struct TextureSpec {
    double base[3];
    uint64_t key[3];
    double freq = 4.0;
    double amplitude = 0.15;
    double phase_x = 0.0, phase_y = 0.0;  // coordinate shift, in texture units
};

// x, y in [0,1)
double texture_at(const TextureSpec& t, int ch, double x, double y) {
    double n1 = value_noise(t.key[ch], x + t.phase_x, y + t.phase_y, t.freq);
    double n2 = value_noise(t.key[ch] ^ 0xABCDEF1234567891ULL, x + t.phase_x, y + t.phase_y,
                            2.0 * t.freq);
    double n = (2.0 * n1 + n2) / 3.0;
    return std::clamp(t.base[ch] + t.amplitude * (n - 0.5) * 2.0, 0.0, 1.0);
}

struct BlobSpec {
    double cx, cy, r0;      // pixels
    double a[4], phi[4];    // harmonics k = 2..5
    double radius(double theta) const {
        double r = 1.0;
        for (int k = 0; k < 4; ++k) r += a[k] * std::cos((k + 2) * theta + phi[k]);
        return r0 * r;
    }
    double max_radius() const {
        double s = 1.0;
        for (double v : a) s += std::fabs(v);
        return r0 * s;
    }
    bool inside(double x, double y) const {
        double dx = x - cx, dy = y - cy;
        double r = std::sqrt(dx * dx + dy * dy);
        if (r == 0.0) return true;
        return r <= radius(std::atan2(dy, dx));
    }
};

}  // namespace

double texture_histogram_distance(const Tensor& image, const Tensor& mask) {
    if (image.rank() != 3 || image.dim(0) != 3 || mask.rank() != 2 ||
        image.dim(1) != mask.dim(0) || image.dim(2) != mask.dim(1))
        throw std::invalid_argument("texture_histogram_distance: want [3,H,W] image, [H,W] mask");
    const long n = mask.numel();
    double hin[32] = {0}, hout[32] = {0};
    double nin = 0, nout = 0;
    for (long i = 0; i < n; ++i) {
        double gray =
            (image.values()[i] + image.values()[n + i] + image.values()[2 * n + i]) / 3.0;
        int bin = std::min(31, static_cast<int>(gray * 32.0));
        if (mask.values()[i] > 0.5) {
            hin[bin] += 1.0;
            nin += 1.0;
        } else {
            hout[bin] += 1.0;
            nout += 1.0;
        }
    }
    if (nin == 0.0 || nout == 0.0) return 0.0;
    double dist = 0.0;
    for (int b = 0; b < 32; ++b) dist += std::fabs(hin[b] / nin - hout[b] / nout);
    return dist;
}

Scene gen_scene(uint64_t seed, long index, const SynthOptions& opt) {
    if (opt.size < 16) throw std::invalid_argument("gen_scene: size must be at least 16");
    if (opt.mode != "salient" && opt.mode != "camouflage")
        throw std::invalid_argument("gen_scene: unknown mode '" + opt.mode + "'");
    const long sz = opt.size;
    Rng rng = named_stream(seed, "scene" + std::to_string(index));

    for (long attempt = 1; attempt <= opt.max_attempts; ++attempt) {
        TextureSpec bg, fg;
        for (int ch = 0; ch < 3; ++ch) {
            bg.base[ch] = rng.uniform(0.15, 0.85);
            bg.key[ch] = rng.next_u64();
        }
        bg.freq = rng.uniform(3.0, 6.0);
        fg = bg;
        if (opt.mode == "salient") {
            // push each channel well away from the background, toward
            // whichever end of [0,1] is farther
            for (int ch = 0; ch < 3; ++ch) {
                double off = rng.uniform(0.35, 0.45);
                fg.base[ch] = bg.base[ch] + (bg.base[ch] < 0.5 ? off : -off);
                fg.key[ch] = rng.next_u64();
            }
            fg.freq = rng.uniform(3.0, 6.0);
        } else {
            // identical palette, phase-shifted only. Both fields switch to a
            // fine grain: at 3-6 cells the object straddles so few noise
            // patches that its gray histogram rarely converges to the
            // background's, and the contrast bound would reject most draws.
            bg.freq = rng.uniform(10.0, 16.0);
            fg.freq = bg.freq;
            fg.phase_x = rng.uniform(0.25, 0.75);
            fg.phase_y = rng.uniform(0.25, 0.75);
        }

        BlobSpec blob;
        blob.cx = rng.uniform(0.3, 0.7) * sz;
        blob.cy = rng.uniform(0.3, 0.7) * sz;
        blob.r0 = rng.uniform(0.15, 0.40) * sz;
        for (int k = 0; k < 4; ++k) {
            blob.a[k] = 0.35 * rng.uniform() / (k + 2);
            blob.phi[k] = rng.uniform(0.0, kTau);
        }

        // keep at least a 2-pixel background margin on every side
        double mr = blob.max_radius();
        if (blob.cx - mr < 2.0 || blob.cx + mr > sz - 2.0 || blob.cy - mr < 2.0 ||
            blob.cy + mr > sz - 2.0)
            continue;

        // 4x4 supersampled coverage
        Tensor coverage = Tensor::zeros({sz, sz});
        long covered = 0;
        for (long y = 0; y < sz; ++y)
            for (long x = 0; x < sz; ++x) {
                int in = 0;
                for (int sy = 0; sy < 4; ++sy)
                    for (int sx2 = 0; sx2 < 4; ++sx2)
                        in += blob.inside(x + (sx2 + 0.5) / 4.0, y + (sy + 0.5) / 4.0);
                double c = in / 16.0;
                coverage.raw()[y * sz + x] = c;
                covered += c > 0.5;
            }
        double area = static_cast<double>(covered) / static_cast<double>(sz * sz);
        if (area < opt.min_area || area > opt.max_area) continue;

        Scene scene;
        scene.image = Tensor::zeros({3, sz, sz});
        scene.mask = Tensor::zeros({sz, sz});
        for (long y = 0; y < sz; ++y)
            for (long x = 0; x < sz; ++x) {
                double u = (x + 0.5) / sz, v = (y + 0.5) / sz;
                double c = coverage.values()[y * sz + x];
                scene.mask.raw()[y * sz + x] = c > 0.5 ? 1.0 : 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                    double t = (1.0 - c) * texture_at(bg, ch, u, v) + c * texture_at(fg, ch, u, v);
                    scene.image.raw()[ch * sz * sz + y * sz + x] = t;
                }
            }
        scene.area_fraction = area;
        scene.texture_distance = texture_histogram_distance(scene.image, scene.mask);
        scene.attempts = attempt;
        if (opt.mode == "salient" && scene.texture_distance <= opt.contrast_bound) continue;
        if (opt.mode == "camouflage" && scene.texture_distance >= opt.contrast_bound) continue;
        return scene;
    }
    throw std::runtime_error("gen_scene: no valid scene for index " + std::to_string(index) +
                             " after " + std::to_string(opt.max_attempts) + " attempts");
}

void write_dataset(const std::string& root, uint64_t seed, long count, const SynthOptions& opt) {
    fs::create_directories(fs::path(root) / "images");
    fs::create_directories(fs::path(root) / "masks");
    for (long i = 0; i < count; ++i) {
        Scene s = gen_scene(seed, i, opt);
        char name[32];
        std::snprintf(name, sizeof(name), "%05ld.png", i);
        write_png_rgb((fs::path(root) / "images" / name).string(), s.image);
        write_png_gray((fs::path(root) / "masks" / name).string(), s.mask);
    }
}

std::vector<Sample> read_dataset(const std::string& root) {
    fs::path images = fs::path(root) / "images";
    fs::path masks = fs::path(root) / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks))
        throw std::runtime_error("read_dataset: " + root + " needs images/ and masks/");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(images))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    std::vector<Sample> out;
    for (const std::string& id : ids) {
        fs::path mpath = masks / (id + ".png");
        if (!fs::exists(mpath))
            throw std::runtime_error("read_dataset: no mask for image id " + id);
        Sample s;
        s.id = id;
        s.image = read_png((images / (id + ".png")).string());
        Tensor m = read_png(mpath.string());
        long h = m.dim(1), w = m.dim(2);
        s.mask = Tensor::zeros({h, w});
        for (long i = 0; i < h * w; ++i) {
            double gray = (m.values()[i] + m.values()[h * w + i] + m.values()[2 * h * w + i]) / 3.0;
            s.mask.raw()[i] = gray >= 128.0 / 255.0 ? 1.0 : 0.0;
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace focus
