#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>

#include "doctest.h"
#include "manetl/dataset.hpp"
#include "manetl/error.hpp"

using namespace manetl;
namespace fs = std::filesystem;

namespace {

double mean_abs_distance(const Plane& a, const Plane& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += std::abs(double(a.values[i]) - b.values[i]);
    return s / static_cast<double>(a.values.size());
}

DatasetManifest uniform_manifest(std::size_t classes, std::size_t per_class) {
    DatasetManifest m;
    m.classes = classes;
    m.per_class = per_class;
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < per_class; ++i) {
            m.samples.push_back({std::to_string(k) + "/" + std::to_string(i) + ".bmp", int(k), Split::Train, i});
        }
    }
    return m;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("manetl_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("preprocess: all-white input becomes all zeros") {
    const Image white(48, 48, 3, 255);
    const Plane p = preprocess_pipeline(white, {}, false, 0);
    CHECK(p.height == 32);
    CHECK(p.width == 32);
    CHECK(std::all_of(p.values.begin(), p.values.end(), [](float v) { return v == 0.0f; }));
    // Rotation fill matches the inverted background.
    const Plane aug = preprocess_pipeline(white, {}, true, 99);
    CHECK(std::all_of(aug.values.begin(), aug.values.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("preprocess: determinism and range") {
    const Dataset ds = generate_synthetic_dataset(3, 4, 5);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const auto seed = ds.manifest.samples[i].aug_seed;
        const Plane a = preprocess_pipeline(ds.images[i], {}, false, seed);
        CHECK(a == preprocess_pipeline(ds.images[i], {}, false, seed + 1));
        const Plane b = preprocess_pipeline(ds.images[i], {}, true, seed);
        CHECK(b == preprocess_pipeline(ds.images[i], {}, true, seed));
        for (const Plane* p : {&a, &b}) {
            CHECK(p->values.size() == 32 * 32);
            CHECK(std::all_of(p->values.begin(), p->values.end(), [](float v) { return v >= 0 && v <= 1; }));
        }
    }
}

TEST_CASE("preprocess: augmentation draws different angles for different seeds") {
    const Dataset ds = generate_synthetic_dataset(2, 2, 1);
    const Plane a = preprocess_pipeline(ds.images[0], {}, true, 1);
    const Plane b = preprocess_pipeline(ds.images[0], {}, true, 2);
    CHECK_FALSE(a == b);
}

TEST_CASE("preprocess: disabled path keeps polarity") {
    const Image white(40, 40, 3, 255);
    PreprocessOptions raw;
    raw.enabled = false;
    const Plane p = preprocess_pipeline(white, raw, true, 3);
    CHECK(std::all_of(p.values.begin(), p.values.end(), [](float v) { return v == 1.0f; }));
    CHECK(raw.fingerprint() != PreprocessOptions{}.fingerprint());
}

TEST_CASE("preprocess: rejects non-RGB input") {
    CHECK_THROWS_AS(preprocess_pipeline(Image(8, 8, 1), {}, false, 0), DimensionError);
}

TEST_CASE("synthetic: counts, labels and determinism") {
    const Dataset a = generate_synthetic_dataset(10, 20, 7);
    REQUIRE(a.images.size() == 200);
    std::map<int, int> per;
    for (const auto& r : a.manifest.samples) ++per[r.label];
    CHECK(per.size() == 10);
    for (const auto& [label, n] : per) CHECK(n == 20);
    for (const Image& img : a.images) {
        CHECK(img.channels == 3);
        CHECK(img.height == 48);
    }
    const Dataset b = generate_synthetic_dataset(10, 20, 7);
    CHECK(a.images == b.images);
    CHECK(a.manifest.dataset_hash == b.manifest.dataset_hash);
    CHECK(generate_synthetic_dataset(10, 20, 8).manifest.dataset_hash != a.manifest.dataset_hash);
}

TEST_CASE("synthetic: dark ink on a light ground") {
    const Dataset ds = generate_synthetic_dataset(4, 3, 2);
    for (const Image& img : ds.images) {
        std::vector<std::uint8_t> sorted = img.pixels;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted[sorted.size() / 2] > 180);  // median is background
        CHECK(sorted.front() < 100);             // some ink exists
    }
}

TEST_CASE("synthetic: classes are farther apart than samples within a class") {
    const Dataset ds = generate_synthetic_dataset(10, 20, 7);
    std::vector<Plane> planes;
    for (const Image& img : ds.images) planes.push_back(preprocess_pipeline(img, {}, false, 0));
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < planes.size(); ++i) {
        for (std::size_t j = i + 1; j < planes.size(); ++j) {
            const double d = mean_abs_distance(planes[i], planes[j]);
            if (ds.manifest.samples[i].label == ds.manifest.samples[j].label) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    }
    intra /= double(n_intra);
    inter /= double(n_inter);
    MESSAGE("intra " << intra << " inter " << inter);
    CHECK(inter > intra);
}

TEST_CASE("synthetic: argument checks") {
    CHECK_THROWS_AS(generate_synthetic_dataset(51, 2, 0), ConfigError);
    CHECK_THROWS_AS(generate_synthetic_dataset(5, 1, 0), ConfigError);
}

TEST_CASE("split: 240 per class at 0.8 gives 192 / 48") {
    const DatasetManifest m = split_dataset(uniform_manifest(3, 240), 0.8, 4);
    for (int k = 0; k < 3; ++k) {
        std::size_t train = 0, test = 0;
        for (const auto& r : m.samples) {
            if (r.label != k) continue;
            (r.split == Split::Train ? train : test) += 1;
        }
        CHECK(train == 192);
        CHECK(test == 48);
    }
    CHECK(m.count(Split::Train) + m.count(Split::Test) == m.samples.size());
}

TEST_CASE("split: extreme fractions keep both sides non-empty") {
    for (double f : {0.01, 0.99, 0.999}) {
        for (std::size_t n : {2, 3, 10}) {
            const DatasetManifest m = split_dataset(uniform_manifest(2, n), f, 1);
            for (int k = 0; k < 2; ++k) {
                std::size_t test = 0, train = 0;
                for (const auto& r : m.samples) {
                    if (r.label == k) (r.split == Split::Train ? train : test) += 1;
                }
                CHECK(train >= 1);
                CHECK(test >= 1);
            }
        }
    }
}

TEST_CASE("split: reproducible from the seed, and seed-dependent") {
    const auto base = uniform_manifest(4, 50);
    const auto a = split_dataset(base, 0.7, 9);
    const auto b = split_dataset(base, 0.7, 9);
    const auto c = split_dataset(base, 0.7, 10);
    auto splits = [](const DatasetManifest& m) {
        std::vector<Split> s;
        for (const auto& r : m.samples) s.push_back(r.split);
        return s;
    };
    CHECK(splits(a) == splits(b));
    CHECK(splits(a) != splits(c));
    // Sample order in the input does not change any assignment.
    auto reversed = base;
    std::reverse(reversed.samples.begin(), reversed.samples.end());
    const auto r = split_dataset(reversed, 0.7, 9);
    for (const auto& rec : r.samples) {
        const auto it = std::find_if(a.samples.begin(), a.samples.end(),
                                     [&](const SampleRecord& x) { return x.path == rec.path; });
        CHECK(it->split == rec.split);
    }
}

TEST_CASE("split: errors") {
    CHECK_THROWS_AS(split_dataset(uniform_manifest(2, 1), 0.5, 0), ConfigError);
    CHECK_THROWS_AS(split_dataset(uniform_manifest(2, 4), 0.0, 0), ConfigError);
    CHECK_THROWS_AS(split_dataset(uniform_manifest(2, 4), 1.0, 0), ConfigError);
}

TEST_CASE("manifest: text round-trip") {
    Dataset ds = generate_synthetic_dataset(3, 5, 2);
    DatasetManifest m = split_dataset(ds.manifest, 0.6, 2);
    m.preprocess = PreprocessOptions{}.describe();
    m.preprocess_hash = PreprocessOptions{}.fingerprint();
    const std::string text = format_manifest(m);
    const DatasetManifest back = parse_manifest(text);
    CHECK(format_manifest(back) == text);
    CHECK(back.samples.size() == 15);
    CHECK(back.dataset_hash == ds.manifest.dataset_hash);
    CHECK(text.find("path,label,split,aug_seed") != std::string::npos);
}

TEST_CASE("manifest: malformed lines name the line") {
    const std::string head = "# manetl manifest v1\n# classes=2\npath,label,split,aug_seed\n";
    auto message = [](const std::string& text) {
        try {
            (void)parse_manifest(text);
        } catch (const FormatError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(head + "a.bmp,5,train,1\n").find("line 4") != std::string::npos);
    CHECK(message(head + "a.bmp,0,validate,1\n").find("split") != std::string::npos);
    CHECK(message(head + "a.bmp,0,train\n").find("4 comma-separated") != std::string::npos);
    CHECK(message("# manetl manifest v1\n# colour=blue\n").find("colour") != std::string::npos);
    CHECK(message("hello\n").find("line 1") != std::string::npos);
}

TEST_CASE("directory layout: write, scan, load") {
    const fs::path root = scratch_dir("layout");
    Dataset ds = generate_synthetic_dataset(3, 4, 6);
    write_dataset_images(root, ds);
    CHECK(fs::exists(root / "00" / "0000.bmp"));
    CHECK(fs::exists(root / "02" / "0003.bmp"));

    const Dataset scanned = scan_dataset_directory(root, 6);
    CHECK(scanned.images == ds.images);
    CHECK(scanned.manifest.dataset_hash == ds.manifest.dataset_hash);
    CHECK(scanned.manifest.per_class == 4);

    const DatasetManifest split = split_dataset(scanned.manifest, 0.5, 1);
    write_manifest(root / "manifest.csv", split);
    const Dataset loaded = load_dataset(root, read_manifest(root / "manifest.csv"));
    CHECK(loaded.images == ds.images);

    // Altering one file breaks the fingerprint.
    Image changed = ds.images[0];
    changed.pixels[0] ^= 1;
    write_bmp(root / "00" / "0000.bmp", changed);
    CHECK_THROWS_AS(load_dataset(root, split), InputError);
    fs::remove_all(root);
}

TEST_CASE("make_batch stacks planes") {
    Plane a{2, 2, {0, 1, 2, 3}}, b{2, 2, {4, 5, 6, 7}};
    const Plane* ps[] = {&a, &b};
    const auto t = make_batch(ps);
    CHECK(t.shape() == Shape{2, 1, 2, 2});
    CHECK(t.data()[5] == 5.0f);
}
