#include "manetl/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "manetl/error.hpp"
#include "manetl/hash.hpp"

namespace manetl {

namespace fs = std::filesystem;

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::size_t DatasetManifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [s](const SampleRecord& r) { return r.split == s; }));
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].split == s) out.push_back(i);
    }
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::string PreprocessOptions::describe() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "enabled=%d size=%zu max_rotation=%g fill=%u", enabled ? 1 : 0, size,
                  max_rotation, static_cast<unsigned>(fill));
    return buf;
}

std::uint64_t PreprocessOptions::fingerprint() const { return Fnv1a().text(describe()).value(); }

Plane preprocess_pipeline(const Image& raw, const PreprocessOptions& options, bool augment,
                          std::uint64_t aug_seed) {
    if (raw.channels != 3) {
        throw DimensionError("preprocess: expected a 3-channel image, got " + std::to_string(raw.channels));
    }
    if (!options.enabled) return resize_to_unit(channel_mean(raw), options.size);
    Image gray = to_grayscale(invert_colors(raw));
    if (augment && options.max_rotation > 0) {
        const double angle = (2.0 * unit_uniform(mix64(aug_seed)) - 1.0) * options.max_rotation;
        gray = rotate_with_fill(gray, angle, options.fill);
    }
    return resize_to_unit(gray, options.size);
}

// ---------------------------------------------------------------------------
// Synthetic glyphs

namespace {

constexpr std::size_t kCanvas = 48;
constexpr double kGlyphSpan = 30.0;  // pixels covered by the unit glyph box

struct Point {
    double x, y;
};

using Stroke = std::vector<Point>;  // polyline in unit glyph coordinates, y down

Stroke arc(Point c, double r, double from_deg, double to_deg, int segments) {
    Stroke s;
    for (int i = 0; i <= segments; ++i) {
        const double a = (from_deg + (to_deg - from_deg) * i / segments) * std::numbers::pi / 180.0;
        s.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
    return s;
}

const std::vector<Stroke>& primitives() {
    static const std::vector<Stroke> p = {
        {{0.05, 0.12}, {0.95, 0.12}},                 // headline
        {{0.15, 0.50}, {0.85, 0.50}},                 // middle bar
        {{0.15, 0.88}, {0.85, 0.88}},                 // base bar
        {{0.18, 0.12}, {0.18, 0.88}},                 // left stem
        {{0.82, 0.12}, {0.82, 0.88}},                 // right stem
        {{0.50, 0.12}, {0.50, 0.88}},                 // centre stem
        {{0.15, 0.20}, {0.85, 0.88}},                 // falling diagonal
        {{0.85, 0.20}, {0.15, 0.88}},                 // rising diagonal
        arc({0.50, 0.58}, 0.22, 0, 360, 16),          // ring
        arc({0.38, 0.40}, 0.22, 90, 270, 8),          // left bowl
        arc({0.50, 0.55}, 0.32, 0, 180, 10),          // lower cup
        {{0.70, 0.12}, {0.70, 0.42}, {0.42, 0.50}},   // hook
        {{0.50, 0.30}, {0.50, 0.30}},                 // dot
    };
    return p;
}

// Class k draws a fixed set of three primitives. Sets are chosen so that, as
// far as possible, two classes share at most one primitive.
const std::vector<std::array<int, 3>>& class_strokes() {
    static const std::vector<std::array<int, 3>> table = [] {
        const int n = static_cast<int>(primitives().size());
        std::vector<std::array<int, 3>> all;
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                for (int c = b + 1; c < n; ++c) all.push_back({a, b, c});
        // Fixed shuffle so the table does not depend on any run seed.
        std::uint64_t state = 0x6c79706873ull;
        for (std::size_t i = all.size() - 1; i > 0; --i) {
            state = mix64(state);
            std::swap(all[i], all[state % (i + 1)]);
        }
        auto overlap = [](const std::array<int, 3>& x, const std::array<int, 3>& y) {
            int k = 0;
            for (int a : x)
                for (int b : y) k += a == b;
            return k;
        };
        std::vector<std::array<int, 3>> chosen;
        std::vector<bool> used(all.size(), false);
        for (int limit = 1; limit <= 2; ++limit) {
            for (std::size_t i = 0; i < all.size() && chosen.size() < 50; ++i) {
                if (used[i]) continue;
                bool ok = true;
                for (const auto& c : chosen) ok = ok && overlap(c, all[i]) <= limit;
                if (ok) {
                    chosen.push_back(all[i]);
                    used[i] = true;
                }
            }
        }
        return chosen;
    }();
    return table;
}

class Jitter {
public:
    explicit Jitter(std::uint64_t seed) : state_(seed) {}
    double uniform(double lo, double hi) {
        state_ = mix64(state_);
        return lo + (hi - lo) * unit_uniform(state_);
    }

private:
    std::uint64_t state_;
};

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

Image render_glyph(std::size_t label, std::uint64_t seed) {
    Jitter j(seed);
    const double angle = j.uniform(-10, 10) * std::numbers::pi / 180.0;
    const double scale = j.uniform(0.85, 1.1) * kGlyphSpan;
    const double tx = j.uniform(-3, 3), ty = j.uniform(-3, 3);
    const double half_width = j.uniform(2.5, 4.5) / 2.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double centre = (kCanvas - 1) / 2.0;

    std::vector<std::pair<Point, Point>> segments;
    for (int id : class_strokes()[label]) {
        Stroke s = primitives()[static_cast<std::size_t>(id)];
        std::vector<Point> placed;
        for (Point p : s) {
            const double u = p.x - 0.5 + j.uniform(-0.03, 0.03);
            const double v = p.y - 0.5 + j.uniform(-0.03, 0.03);
            placed.push_back({centre + tx + scale * (ca * u - sa * v), centre + ty + scale * (sa * u + ca * v)});
        }
        for (std::size_t i = 0; i + 1 < placed.size(); ++i) segments.push_back({placed[i], placed[i + 1]});
    }

    std::array<double, 3> ground, ink;
    const double base = j.uniform(215, 250), dark = j.uniform(15, 70);
    for (int c = 0; c < 3; ++c) {
        ground[c] = std::clamp(base + j.uniform(-6, 6), 0.0, 255.0);
        ink[c] = std::clamp(dark + j.uniform(-6, 6), 0.0, 255.0);
    }

    Image img(kCanvas, kCanvas, 3);
    for (std::size_t y = 0; y < kCanvas; ++y) {
        for (std::size_t x = 0; x < kCanvas; ++x) {
            double d = 1e9;
            for (const auto& [a, b] : segments) d = std::min(d, segment_distance({double(x), double(y)}, a, b));
            const double cover = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = ground[c] - cover * (ground[c] - ink[c]) + j.uniform(-8, 8);
                img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return img;
}

std::string padded(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, v);
    return buf;
}

std::uint64_t augment_seed(std::uint64_t seed, const std::string& path) {
    return hash_combine(hash_combine(seed, std::string_view("augment")), path);
}

}  // namespace

Dataset generate_synthetic_dataset(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
    if (classes < 2 || classes > 50) {
        throw ConfigError("synthetic classes must be in [2, 50], got " + std::to_string(classes));
    }
    if (per_class < 2) throw ConfigError("synthetic per_class must be >= 2, got " + std::to_string(per_class));
    Dataset ds;
    ds.manifest.classes = classes;
    ds.manifest.per_class = per_class;
    ds.manifest.seed = seed;
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < per_class; ++i) {
            SampleRecord r;
            r.path = padded(k, 2) + "/" + padded(i, 4) + ".bmp";
            r.label = static_cast<int>(k);
            r.aug_seed = augment_seed(seed, r.path);
            ds.images.push_back(render_glyph(k, hash_combine(hash_combine(seed, std::string_view("glyph")), r.path)));
            ds.manifest.samples.push_back(std::move(r));
        }
    }
    ds.manifest.dataset_hash = dataset_fingerprint(ds);
    return ds;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie strictly between 0 and 1, got " + std::to_string(train_fraction));
    }
    DatasetManifest out = manifest;
    out.seed = seed;
    out.train_fraction = train_fraction;
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < out.samples.size(); ++i) by_class[out.samples[i].label].push_back(i);
    for (auto& [label, members] : by_class) {
        const std::size_t n = members.size();
        if (n < 2) {
            throw ConfigError("class " + std::to_string(label) + " has " + std::to_string(n) +
                              " sample(s); a split needs at least 2");
        }
        auto rank = [&](std::size_t i) {
            return std::make_pair(hash_combine(seed, out.samples[i].path), out.samples[i].path);
        };
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return rank(a) < rank(b); });
        const auto wanted = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
        const std::size_t train = std::clamp<std::size_t>(wanted, 1, n - 1);
        for (std::size_t r = 0; r < n; ++r) out.samples[members[r]].split = r < train ? Split::Train : Split::Test;
    }
    return out;
}

std::uint64_t dataset_fingerprint(const Dataset& dataset) {
    Fnv1a h;
    for (std::size_t i = 0; i < dataset.images.size(); ++i) {
        const SampleRecord& r = dataset.manifest.samples.at(i);
        const Image& img = dataset.images[i];
        h.text(r.path).u64(static_cast<std::uint64_t>(r.label));
        h.u64(img.height).u64(img.width).u64(img.channels).bytes(img.pixels);
    }
    return h.value();
}

// ---------------------------------------------------------------------------
// Manifest text

namespace {

constexpr const char* kManifestTitle = "# manetl manifest v1";
constexpr const char* kManifestColumns = "path,label,split,aug_seed";

[[noreturn]] void manifest_error(std::size_t line, const std::string& what) {
    throw FormatError("manifest line " + std::to_string(line) + ": " + what);
}

std::uint64_t parse_u64(const std::string& s, int base, std::size_t line, const char* field) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(s, &used, base);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s[0] == '-') {
        manifest_error(line, std::string("bad ") + field + " '" + s + "'");
    }
    return v;
}

}  // namespace

std::string format_manifest(const DatasetManifest& m) {
    std::ostringstream out;
    char fraction[32];
    const auto end = std::to_chars(fraction, fraction + sizeof fraction - 1, m.train_fraction).ptr;
    *end = '\0';
    out << kManifestTitle << "\n";
    out << "# classes=" << m.classes << "\n";
    out << "# per_class=" << m.per_class << "\n";
    out << "# seed=" << m.seed << "\n";
    out << "# train_fraction=" << fraction << "\n";
    out << "# preprocess=" << m.preprocess << "\n";
    out << "# preprocess_fingerprint=" << hex64(m.preprocess_hash) << "\n";
    out << "# dataset_fingerprint=" << hex64(m.dataset_hash) << "\n";
    out << kManifestColumns << "\n";
    for (const SampleRecord& r : m.samples) {
        out << r.path << ',' << r.label << ',' << split_name(r.split) << ',' << r.aug_seed << "\n";
    }
    return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
    DatasetManifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    bool columns_seen = false;
    if (!std::getline(in, line) || line != kManifestTitle) {
        manifest_error(1, "expected '" + std::string(kManifestTitle) + "'");
    }
    ++n;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!columns_seen) {
            if (line == kManifestColumns) {
                columns_seen = true;
                continue;
            }
            if (line.rfind("# ", 0) != 0) manifest_error(n, "expected a '# key=value' header line");
            const auto eq = line.find('=');
            if (eq == std::string::npos) manifest_error(n, "header line without '='");
            const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
            if (key == "classes") m.classes = parse_u64(value, 10, n, "classes");
            else if (key == "per_class") m.per_class = parse_u64(value, 10, n, "per_class");
            else if (key == "seed") m.seed = parse_u64(value, 10, n, "seed");
            else if (key == "train_fraction") {
                try {
                    m.train_fraction = std::stod(value);
                } catch (const std::exception&) {
                    manifest_error(n, "bad train_fraction '" + value + "'");
                }
            } else if (key == "preprocess") m.preprocess = value;
            else if (key == "preprocess_fingerprint") m.preprocess_hash = parse_u64(value, 16, n, "preprocess_fingerprint");
            else if (key == "dataset_fingerprint") m.dataset_hash = parse_u64(value, 16, n, "dataset_fingerprint");
            else manifest_error(n, "unknown header key '" + key + "'");
            continue;
        }
        std::array<std::string, 4> f;
        std::size_t start = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            const auto comma = line.find(',', start);
            if ((comma == std::string::npos) != (i == 3)) manifest_error(n, "expected 4 comma-separated fields");
            f[i] = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            start = comma + 1;
        }
        SampleRecord r;
        r.path = f[0];
        if (r.path.empty()) manifest_error(n, "empty path");
        const std::uint64_t label = parse_u64(f[1], 10, n, "label");
        if (label >= m.classes) {
            manifest_error(n, "label " + f[1] + " outside [0, " + std::to_string(m.classes) + ")");
        }
        r.label = static_cast<int>(label);
        if (f[2] == "train") r.split = Split::Train;
        else if (f[2] == "test") r.split = Split::Test;
        else manifest_error(n, "split must be train or test, got '" + f[2] + "'");
        r.aug_seed = parse_u64(f[3], 10, n, "aug_seed");
        m.samples.push_back(std::move(r));
    }
    if (!columns_seen) manifest_error(n, "missing column header '" + std::string(kManifestColumns) + "'");
    return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << format_manifest(manifest);
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open manifest " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_manifest(text.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Directory layout

Dataset scan_dataset_directory(const fs::path& root, std::uint64_t seed) {
    if (!fs::is_directory(root)) throw InputError("dataset root is not a directory: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw InputError("no class directories under " + root.string());

    Dataset ds;
    ds.manifest.classes = class_dirs.size();
    ds.manifest.seed = seed;
    std::size_t uniform = 0;
    bool equal_sizes = true;
    for (std::size_t k = 0; k < class_dirs.size(); ++k) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[k])) {
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (e.is_regular_file() && ext == ".bmp") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw InputError("class directory has no .bmp files: " + class_dirs[k].string());
        if (k == 0) uniform = files.size();
        equal_sizes = equal_sizes && files.size() == uniform;
        for (const fs::path& f : files) {
            SampleRecord r;
            r.path = class_dirs[k].filename().string() + "/" + f.filename().string();
            r.label = static_cast<int>(k);
            r.aug_seed = augment_seed(seed, r.path);
            ds.images.push_back(read_bmp(f));
            ds.manifest.samples.push_back(std::move(r));
        }
    }
    ds.manifest.per_class = equal_sizes ? uniform : 0;
    ds.manifest.dataset_hash = dataset_fingerprint(ds);
    return ds;
}

Dataset load_dataset(const fs::path& root, const DatasetManifest& manifest) {
    Dataset ds;
    ds.manifest = manifest;
    for (const SampleRecord& r : manifest.samples) {
        if (r.label < 0 || static_cast<std::size_t>(r.label) >= manifest.classes) {
            throw InputError("sample " + r.path + " has label " + std::to_string(r.label) + " outside [0, " +
                             std::to_string(manifest.classes) + ")");
        }
        ds.images.push_back(read_bmp(root / r.path));
    }
    const std::uint64_t actual = dataset_fingerprint(ds);
    if (manifest.dataset_hash != 0 && actual != manifest.dataset_hash) {
        throw InputError("dataset fingerprint mismatch under " + root.string() + ": manifest says " +
                         hex64(manifest.dataset_hash) + ", files give " + hex64(actual));
    }
    ds.manifest.dataset_hash = actual;
    return ds;
}

void write_dataset_images(const fs::path& root, const Dataset& dataset) {
    for (std::size_t i = 0; i < dataset.images.size(); ++i) {
        const fs::path p = root / dataset.manifest.samples.at(i).path;
        fs::create_directories(p.parent_path());
        write_bmp(p, dataset.images[i]);
    }
}

Tensor<float> make_batch(std::span<const Plane* const> planes) {
    if (planes.empty()) throw InputError("make_batch: no samples");
    const std::size_t h = planes[0]->height, w = planes[0]->width;
    std::vector<float> data;
    data.reserve(planes.size() * h * w);
    for (const Plane* p : planes) {
        if (p->height != h || p->width != w) throw DimensionError("make_batch: planes differ in size");
        data.insert(data.end(), p->values.begin(), p->values.end());
    }
    return Tensor<float>({planes.size(), 1, h, w}, std::move(data));
}

}  // namespace manetl
