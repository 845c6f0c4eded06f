#include "licda/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

namespace licda {

namespace fs = std::filesystem;

std::string to_string(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::kSmoothTexture: return "smooth-texture";
        case SyntheticKind::kLineSketch: return "line-sketch";
        case SyntheticKind::kFlatRegions: return "flat-regions";
    }
    return "?";
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "smooth-texture") return SyntheticKind::kSmoothTexture;
    if (s == "line-sketch") return SyntheticKind::kLineSketch;
    if (s == "flat-regions") return SyntheticKind::kFlatRegions;
    throw ConfigError("unknown synthetic kind '" + s + "'");
}

namespace {

// Gaussian-filtered RGB noise (sigma ~ 4px), rescaled around a random base color.
Image synth_smooth_texture(int H, int W, Rng& rng) {
    Image img = make_image(H, W);
    const double sigma = 4.0;
    const int radius = 12;
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= ksum;

    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> base_dist(0.3, 0.7);
    std::uniform_real_distribution<double> amp_dist(0.14, 0.24);
    std::vector<double> field(static_cast<std::size_t>(H) * W), tmp(field.size());
    for (int c = 0; c < 3; ++c) {
        const double base = base_dist(rng), amp = amp_dist(rng);
        for (auto& v : field) v = noise(rng);
        // separable blur with mirrored edges
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] * field[static_cast<std::size_t>(y) * W + mirror_index(x + i, W)];
                tmp[static_cast<std::size_t>(y) * W + x] = acc;
            }
        for (int x = 0; x < W; ++x)
            for (int y = 0; y < H; ++y) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(mirror_index(y + i, H)) * W + x];
                field[static_cast<std::size_t>(y) * W + x] = acc;
            }
        double m = 0.0, m2 = 0.0;
        for (double v : field) {
            m += v;
            m2 += v * v;
        }
        m /= static_cast<double>(field.size());
        const double sd = std::sqrt(std::max(1e-12, m2 / static_cast<double>(field.size()) - m * m));
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                img.at(c, y, x) = clamp01(static_cast<float>(base + amp * (field[static_cast<std::size_t>(y) * W + x] - m) / sd));
    }
    return img;
}

// White canvas with dark polyline strokes; the painted-pixel budget keeps at
// least 90% of the canvas within 0.1 of white.
Image synth_line_sketch(int H, int W, Rng& rng) {
    Image img = make_image(H, W, 1.0f);
    const std::size_t budget = static_cast<std::size_t>(H) * W / 10;
    std::size_t painted = 0;
    std::uniform_int_distribution<int> stroke_count(10, 40);
    std::uniform_int_distribution<int> seg_count(2, 5);
    std::uniform_int_distribution<int> xd(0, W - 1), yd(0, H - 1);
    std::uniform_real_distribution<double> len(8.0, 28.0), ang(0.0, 2.0 * 3.14159265358979);
    std::uniform_real_distribution<float> shade(0.0f, 0.25f);
    std::uniform_int_distribution<int> thick(2, 3);

    auto paint = [&](int x, int y, float v, int t) {
        for (int dy = 0; dy < t; ++dy)
            for (int dx = 0; dx < t; ++dx) {
                const int px = x + dx, py = y + dy;
                if (px < 0 || px >= W || py < 0 || py >= H) continue;
                if (img.at(0, py, px) == 1.0f) ++painted;
                for (int c = 0; c < 3; ++c) img.at(c, py, px) = v;
            }
    };

    const int strokes = stroke_count(rng);
    for (int s = 0; s < strokes && painted < budget; ++s) {
        double x = xd(rng), y = yd(rng);
        const float v = shade(rng);
        const int t = thick(rng);
        const int segs = seg_count(rng);
        for (int g = 0; g < segs && painted < budget; ++g) {
            const double a = ang(rng), l = len(rng);
            const double nx = x + l * std::cos(a), ny = y + l * std::sin(a);
            const int steps = static_cast<int>(std::ceil(l)) + 1;
            for (int i = 0; i <= steps && painted < budget; ++i) {
                const double tt = static_cast<double>(i) / steps;
                paint(static_cast<int>(std::lround(x + (nx - x) * tt)), static_cast<int>(std::lround(y + (ny - y) * tt)), v, t);
            }
            x = nx;
            y = ny;
        }
    }
    return img;
}

// Voronoi cells filled with flat colors, 1px dark borders.
Image synth_flat_regions(int H, int W, Rng& rng) {
    std::uniform_int_distribution<int> cell_count(8, 24);
    const int cells = cell_count(rng);
    std::uniform_int_distribution<int> xd(0, W - 1), yd(0, H - 1);
    std::uniform_real_distribution<float> col(0.1f, 0.9f);
    std::vector<int> cx(static_cast<std::size_t>(cells)), cy(static_cast<std::size_t>(cells));
    std::vector<std::array<float, 3>> palette(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) {
        cx[static_cast<std::size_t>(i)] = xd(rng);
        cy[static_cast<std::size_t>(i)] = yd(rng);
        palette[static_cast<std::size_t>(i)] = {col(rng), col(rng), col(rng)};
    }
    std::vector<int> label(static_cast<std::size_t>(H) * W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            long best = -1;
            int bi = 0;
            for (int i = 0; i < cells; ++i) {
                const long dx = x - cx[static_cast<std::size_t>(i)], dy = y - cy[static_cast<std::size_t>(i)];
                const long d = dx * dx + dy * dy;
                if (best < 0 || d < best) {
                    best = d;
                    bi = i;
                }
            }
            label[static_cast<std::size_t>(y) * W + x] = bi;
        }
    Image img = make_image(H, W);
    const float border = 0.05f;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int l = label[static_cast<std::size_t>(y) * W + x];
            const bool edge = (x + 1 < W && label[static_cast<std::size_t>(y) * W + x + 1] != l) ||
                              (y + 1 < H && label[(static_cast<std::size_t>(y) + 1) * W + x] != l);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = edge ? border : palette[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)];
        }
    return img;
}

}  // namespace

Image synthesize(const SyntheticDomainSpec& spec, int index) {
    if (spec.height < 64 || spec.width < 64) throw ConfigError("synthetic images must be at least 64x64");
    Rng rng = make_rng(spec.seed, to_string(spec.kind) + "#" + std::to_string(index));
    Image img;
    switch (spec.kind) {
        case SyntheticKind::kSmoothTexture: img = synth_smooth_texture(spec.height, spec.width, rng); break;
        case SyntheticKind::kLineSketch: img = synth_line_sketch(spec.height, spec.width, rng); break;
        case SyntheticKind::kFlatRegions: img = synth_flat_regions(spec.height, spec.width, rng); break;
    }
    img.source_path = to_string(spec.kind) + "#" + std::to_string(index);
    return img;
}

// ---------------------------------------------------------------------------

const Image& ImageCache::get(const std::string& path) {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    Image img = read_png(path);
    validate_image(img);
    return cache_.emplace(path, std::move(img)).first->second;
}

void ImageCache::put(const std::string& key, Image img) { cache_[key] = std::move(img); }

DomainSplits ingest_directory(const std::string& root, const std::string& source_domain, std::uint64_t seed) {
    if (!fs::is_directory(root)) throw ConfigError("dataset root '" + root + "' is not a directory");
    std::vector<std::string> domains;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) domains.push_back(e.path().filename().string());
    std::sort(domains.begin(), domains.end());
    if (domains.empty()) throw ConfigError("dataset root '" + root + "' has no domain directories");

    if (!source_domain.empty()) {
        auto it = std::find(domains.begin(), domains.end(), source_domain);
        if (it == domains.end()) throw ConfigError("source domain '" + source_domain + "' not found under " + root);
        domains.erase(it);
        domains.insert(domains.begin(), source_domain);
    }

    DomainSplits ds;
    ds.K = static_cast<int>(domains.size()) - 1;
    ds.domain_names = domains;
    ds.train.split = Split::kTrain;
    ds.val.split = Split::kVal;
    ds.test.split = Split::kTest;
    ds.train.K = ds.val.K = ds.test.K = ds.K;

    for (int label = 0; label <= ds.K; ++label) {
        const std::string& dom = domains[static_cast<std::size_t>(label)];
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(root) / dom))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());

        int kept = 0;
        for (const auto& f : files) {
            try {
                read_png(f);
            } catch (const Error& err) {
                std::cerr << "warning: skipping " << f << ": " << err.what() << "\n";
                continue;
            }
            const std::string key = dom + "/" + fs::path(f).filename().string();
            const std::uint64_t h = derive_seed(seed, key) % 10;
            DatasetItem item{f, label};
            if (h == 0)
                ds.val.items.push_back(item);
            else if (h == 1)
                ds.test.items.push_back(item);
            else
                ds.train.items.push_back(item);
            ++kept;
        }
        if (kept == 0) throw ConfigError("domain directory '" + dom + "' contains no readable PNG images");
    }
    return ds;
}

std::string split_manifest(const DomainSplits& ds) {
    std::ostringstream os;
    auto dump = [&os](const DomainDataset& d, const char* name) {
        for (const auto& item : d.items) os << name << "\t" << item.label << "\t" << item.path << "\n";
    };
    dump(ds.train, "train");
    dump(ds.val, "val");
    dump(ds.test, "test");
    return os.str();
}

// ---------------------------------------------------------------------------

std::vector<Batch> epoch_batches(const DomainDataset& ds, ImageCache& cache, int batch_size, int crop,
                                 bool augment, std::uint64_t seed, int epoch) {
    if (ds.items.empty()) throw ConfigError("dataset split is empty");
    if (batch_size < 1 || crop < 1) throw ConfigError("bad batch_size or crop");

    const int domains = ds.K + 1;
    std::vector<std::vector<std::size_t>> per_label(static_cast<std::size_t>(domains));
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const int l = ds.items[i].label;
        if (l < 0 || l > ds.K) throw ConfigError("dataset label out of range");
        per_label[static_cast<std::size_t>(l)].push_back(i);
    }
    for (int l = 0; l < domains; ++l)
        if (per_label[static_cast<std::size_t>(l)].empty())
            throw ConfigError("dataset is missing domain label " + std::to_string(l));

    // Shuffled cyclic order per domain; domains interleaved via a per-epoch
    // permutation so counts per epoch differ by at most one.
    std::vector<std::size_t> cursor(static_cast<std::size_t>(domains), 0);
    for (int l = 0; l < domains; ++l) {
        Rng r = make_rng(seed, "order/" + std::to_string(epoch) + "/" + std::to_string(l));
        std::shuffle(per_label[static_cast<std::size_t>(l)].begin(), per_label[static_cast<std::size_t>(l)].end(), r);
    }
    std::vector<int> dperm(static_cast<std::size_t>(domains));
    std::iota(dperm.begin(), dperm.end(), 0);
    {
        Rng r = make_rng(seed, "dperm/" + std::to_string(epoch));
        std::shuffle(dperm.begin(), dperm.end(), r);
    }
    Rng aug_rng = make_rng(seed, "aug/" + std::to_string(epoch));

    const std::size_t n = ds.items.size();
    const std::size_t nbatches = n / static_cast<std::size_t>(batch_size);
    std::vector<Batch> out;
    out.reserve(nbatches);
    const std::size_t chw = 3u * static_cast<std::size_t>(crop) * crop;

    std::size_t s = 0;
    for (std::size_t bi = 0; bi < nbatches; ++bi) {
        std::vector<float> buf(static_cast<std::size_t>(batch_size) * chw);
        std::vector<int> labels(static_cast<std::size_t>(batch_size));
        for (int b = 0; b < batch_size; ++b, ++s) {
            const int l = dperm[s % static_cast<std::size_t>(domains)];
            auto& pool = per_label[static_cast<std::size_t>(l)];
            const DatasetItem& item = ds.items[pool[cursor[static_cast<std::size_t>(l)]++ % pool.size()]];
            const Image& img = cache.get(item.path);
            if (img.height < crop || img.width < crop)
                throw ConfigError("image " + item.path + " smaller than crop " + std::to_string(crop));
            std::uniform_int_distribution<int> oy(0, img.height - crop), ox(0, img.width - crop);
            const int y0 = oy(aug_rng), x0 = ox(aug_rng);
            const bool flip = augment && std::bernoulli_distribution(0.5)(aug_rng);
            float* dst = buf.data() + static_cast<std::size_t>(b) * chw;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < crop; ++y)
                    for (int x = 0; x < crop; ++x)
                        dst[(static_cast<std::size_t>(c) * crop + y) * crop + x] =
                            img.at(c, y0 + y, x0 + (flip ? crop - 1 - x : x));
            labels[static_cast<std::size_t>(b)] = item.label;
        }
        Batch batch;
        batch.images = Tensor<float>::from({batch_size, 3, crop, crop}, std::move(buf));
        batch.labels = std::move(labels);
        out.push_back(std::move(batch));
    }
    return out;
}

}  // namespace licda
