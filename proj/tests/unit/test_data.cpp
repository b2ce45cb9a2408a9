#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "xrf/augment.h"
#include "xrf/dataset.h"
#include "xrf/error.h"
#include "xrf/image.h"
#include "xrf/labels.h"
#include "xrf/rng.h"
#include "xrf/synth.h"

using namespace xrf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "xrf_unit" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::size_t index_of(std::string_view name) { return *find_class(name); }

Image random_image(std::int64_t c, std::int64_t h, std::int64_t w, std::uint64_t seed) {
    auto rng = make_rng(seed, "img");
    Image img(c, h, w);
    for (auto& v : img.pixels) v = uniform01(rng);
    return img;
}

}  // namespace

TEST(Labels, VocabularyOrder) {
    ASSERT_EQ(kClassNames.size(), 15u);
    EXPECT_EQ(kClassNames[0], "Atelectasis");
    EXPECT_EQ(kClassNames[11], "Pleural_Thickening");
    EXPECT_EQ(kClassNames[kNoFindingIndex], "No Finding");
    std::set<std::string_view> unique(kClassNames.begin(), kClassNames.end());
    EXPECT_EQ(unique.size(), 15u);
}

TEST(Labels, EncodeExamples) {
    const auto v = encode_labels("Cardiomegaly|Emphysema");
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        const bool on = i == index_of("Cardiomegaly") || i == index_of("Emphysema");
        EXPECT_EQ(v[i], on ? 1.0 : 0.0);
    }
    const auto nf = encode_labels("No Finding");
    for (std::size_t i = 0; i < kNumClasses; ++i) EXPECT_EQ(nf[i], i == kNoFindingIndex ? 1.0 : 0.0);
    try {
        encode_labels("Hernia|Bogus");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("Bogus"), std::string::npos);
    }
    EXPECT_THROW(encode_labels("No Finding|Mass"), DataError);
}

TEST(Labels, RoundTripEverySubset) {
    for (unsigned mask = 1; mask < (1u << kNumDiseases); ++mask) {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < kNumDiseases; ++i)
            if (mask & (1u << i)) names.emplace_back(kClassNames[i]);
        std::string joined;
        for (const auto& n : names) joined += (joined.empty() ? "" : "|") + n;
        ASSERT_EQ(decode_labels(encode_labels(joined)), names);
    }
    EXPECT_EQ(decode_labels(encode_labels("No Finding")), std::vector<std::string>{"No Finding"});
}

TEST(Labels, CsvParsing) {
    const std::string text =
        "Image Index,Finding Labels,Follow-up #,Patient ID\n"
        "a.png,Cardiomegaly|Emphysema,0,1\n"
        "b.png,No Finding,0,2\n"
        "\"c.png\",\"Mass\",1,3\n";
    const auto rows = parse_label_csv_text(text);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].image_id, "a.png");
    EXPECT_EQ(rows[1].labels[kNoFindingIndex], 1.0);
    EXPECT_EQ(rows[2].image_id, "c.png");
    EXPECT_EQ(rows[2].labels[index_of("Mass")], 1.0);
    try {
        parse_label_csv_text("Image Index,Finding Labels\nx.png,Mass\ny.png,Hernia|Bogus\n");
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("Bogus"), std::string::npos);
        EXPECT_NE(msg.find("3"), std::string::npos) << msg;
    }
    EXPECT_THROW(parse_label_csv_text("Image Index,Labels\nx.png,Mass\n"), DataError);
}

TEST(Labels, CsvFileRoundTrip) {
    const auto dir = temp_dir("csv");
    std::vector<LabelRecord> recs{{"a.png", encode_labels("Edema|Mass")}, {"b.png", encode_labels("No Finding")}};
    write_label_csv(dir / "labels.csv", recs);
    const auto back = parse_label_csv(dir / "labels.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].labels, recs[0].labels);
    EXPECT_EQ(back[1].image_id, "b.png");
    EXPECT_EQ(class_file_stem(kNoFindingIndex), "No_Finding");
}

TEST(Image, PngRoundTrip) {
    const auto dir = temp_dir("png");
    Image img(3, 5, 7);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i % 256) / 255.0;
    write_png(img, dir / "rgb.png");
    const auto back = read_png(dir / "rgb.png");
    ASSERT_EQ(back.channels, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-12);
    EXPECT_THROW(read_png(dir / "missing.png"), DataError);
    {
        std::ofstream junk(dir / "junk.png");
        junk << "nope";
    }
    EXPECT_THROW(read_png(dir / "junk.png"), DataError);
}

TEST(Image, ConstantGrayLoadsAsHalf) {
    const auto dir = temp_dir("gray");
    Image gray(1, 6, 6, 128.0 / 255.0);
    write_png(gray, dir / "g.png");
    const auto img = load_image(dir / "g.png", 9, 4);
    ASSERT_EQ(img.channels, 3);
    ASSERT_EQ(img.height, 9);
    for (double v : img.pixels) EXPECT_NEAR(v, 0.502, 1e-3);
}

TEST(Image, BilinearCheckerboard) {
    Image cb(1, 2, 2);
    cb.pixels = {0.0, 1.0, 1.0, 0.0};
    const auto up = resize_bilinear(cb, 4, 4);
    // Half-pixel centres: interior samples sit a quarter of the way between
    // source pixels, so the four centre values are 0.375/0.625 and every 2x2
    // block of the centre averages to 0.5.
    EXPECT_DOUBLE_EQ(up.at(0, 1, 1), 0.375);
    EXPECT_DOUBLE_EQ(up.at(0, 1, 2), 0.625);
    EXPECT_DOUBLE_EQ(up.at(0, 2, 1), 0.625);
    EXPECT_DOUBLE_EQ(up.at(0, 2, 2), 0.375);
    EXPECT_DOUBLE_EQ((up.at(0, 1, 1) + up.at(0, 1, 2) + up.at(0, 2, 1) + up.at(0, 2, 2)) / 4.0, 0.5);
    EXPECT_DOUBLE_EQ(up.at(0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(up.at(0, 0, 3), 1.0);
}

TEST(Image, ResizeOfConstantIsConstant) {
    const Image c(3, 5, 8, 0.3);
    const auto r = resize_bilinear(c, 13, 3);
    for (double v : r.pixels) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Augment, IdentityConfig) {
    LabeledSample s{"x", random_image(3, 8, 8, 1), encode_labels("Mass")};
    AugmentationConfig cfg;
    cfg.height = 8, cfg.width = 8, cfg.hflip_prob = 0.0, cfg.rotation_max_degrees = 0.0;
    auto rng = make_rng(1, "aug");
    const auto out = augment(s, cfg, rng);
    EXPECT_EQ(out.image, s.image);
    EXPECT_EQ(out.labels, s.labels);
}

TEST(Augment, FlipIsInvolutionAndZeroRotationIsIdentity) {
    const auto img = random_image(3, 6, 9, 2);
    EXPECT_EQ(hflip(hflip(img)), img);
    const auto r = rotate(img, 0.0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(r.pixels[i], img.pixels[i], 1e-12);
}

TEST(Augment, KeepsLabelsAndRange) {
    AugmentationConfig cfg;
    cfg.height = 16, cfg.width = 16, cfg.hflip_prob = 0.5, cfg.rotation_max_degrees = 25.0;
    auto rng = make_rng(3, "aug");
    for (int i = 0; i < 30; ++i) {
        LabeledSample s{"x", random_image(3, 20, 12, static_cast<std::uint64_t>(i)), encode_labels("Edema|Nodule")};
        const auto out = augment(s, cfg, rng);
        EXPECT_EQ(out.labels, s.labels);
        EXPECT_EQ(out.image.height, 16);
        for (double v : out.image.pixels) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
    }
    cfg.hflip_prob = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Augment, RotationMovesContentAboutCentre) {
    Image img(1, 9, 9, 0.0);
    img.at(0, 4, 8) = 1.0;  // right of centre
    const auto r = rotate(img, 90.0);
    double best = -1;
    std::int64_t by = 0, bx = 0;
    for (std::int64_t y = 0; y < 9; ++y)
        for (std::int64_t x = 0; x < 9; ++x)
            if (r.at(0, y, x) > best) best = r.at(0, y, x), by = y, bx = x;
    EXPECT_EQ(bx, 4);
    EXPECT_TRUE(by == 0 || by == 8);
    EXPECT_NEAR(best, 1.0, 1e-9);
}

TEST(Synth, DeterministicAndValid) {
    const auto a = synthesize_dataset(40, 7);
    const auto b = synthesize_dataset(40, 7);
    ASSERT_EQ(a.size(), 40u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].image_id, b[i].image_id);
        EXPECT_EQ(a[i].image, b[i].image);
        EXPECT_EQ(a[i].labels, b[i].labels);
        EXPECT_TRUE(labels_valid(a[i].labels));
        EXPECT_EQ(a[i].image.channels, 3);
        for (double v : a[i].image.pixels) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
    }
    EXPECT_NE(synthesize_dataset(5, 8)[0].image, a[0].image);
}

TEST(Synth, NoFindingRate) {
    const auto d = synthesize_dataset(100, 0);
    int nf = 0;
    for (const auto& s : d) nf += s.labels[kNoFindingIndex] == 1.0 ? 1 : 0;
    EXPECT_NEAR(nf, 50, 10);
}

TEST(Synth, ImbalanceProfileShiftsMarginals) {
    SynthConfig cfg;
    cfg.n = 600;
    cfg.no_finding_rate = 0.2;
    cfg.disease_weights.fill(1.0);
    cfg.disease_weights[0] = 10.0;
    cfg.max_diseases = 1;
    const auto d = synthesize_dataset(cfg);
    int first = 0, second = 0;
    for (const auto& s : d) {
        first += s.labels[0] == 1.0;
        second += s.labels[1] == 1.0;
    }
    EXPECT_GT(first, 4 * second);
}

TEST(Synth, PlantedDiscsAreMirrored) {
    SynthConfig cfg;
    cfg.n = 50;
    cfg.noise = 0.0;
    for (const auto& s : synthesize_dataset(cfg)) EXPECT_EQ(hflip(s.image), s.image) << s.image_id;
}

TEST(Dataset, HashSplitIsDisjointAndDeterministic) {
    const auto ds = Dataset::from_samples(synthesize_dataset(300, 3));
    const auto tr = ds.split(Split::train, 0.15, 0.15), va = ds.split(Split::val, 0.15, 0.15),
               te = ds.split(Split::test, 0.15, 0.15);
    EXPECT_EQ(tr.size() + va.size() + te.size(), ds.size());
    std::set<std::string> ids;
    for (const auto* part : {&tr, &va, &te})
        for (std::size_t i = 0; i < part->size(); ++i) EXPECT_TRUE(ids.insert(part->entry(i).image_id).second);
    EXPECT_GT(va.size(), 20u);
    EXPECT_GT(te.size(), 20u);
    const auto again = ds.split(Split::val, 0.15, 0.15);
    ASSERT_EQ(again.size(), va.size());
    for (std::size_t i = 0; i < va.size(); ++i) EXPECT_EQ(again.entry(i).image_id, va.entry(i).image_id);
}

TEST(Dataset, ManifestOverridesHash) {
    const auto dir = temp_dir("manifest");
    const auto ds = Dataset::from_samples(synthesize_dataset(10, 3));
    std::vector<std::pair<std::string, Split>> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) rows.emplace_back(ds.entry(i).image_id, i < 4 ? Split::test : Split::train);
    write_split_manifest(dir / "split.tsv", rows);
    const auto m = read_split_manifest(dir / "split.tsv");
    EXPECT_EQ(ds.split(Split::test, 0.15, 0.15, &m).size(), 4u);
    EXPECT_EQ(ds.split(Split::train, 0.15, 0.15, &m).size(), 6u);
}

TEST(Dataset, DirectoryLoading) {
    const auto dir = temp_dir("dir");
    fs::create_directories(dir / "images");
    const auto samples = synthesize_dataset(4, 1);
    std::vector<LabelRecord> recs;
    for (const auto& s : samples) {
        write_png(s.image, dir / "images" / s.image_id);
        recs.push_back({s.image_id, s.labels});
    }
    write_label_csv(dir / "Data_Entry_2017.csv", recs);
    const auto ds = Dataset::from_directory(dir);
    ASSERT_EQ(ds.size(), 4u);
    const auto s = ds.load(2, 32, 32);
    EXPECT_EQ(s.labels, samples[2].labels);
    EXPECT_EQ(s.image.height, 32);
    fs::remove(dir / "images" / samples[1].image_id);
    EXPECT_THROW(Dataset::from_directory(dir), DataError);
}

TEST(Dataset, Stacking) {
    const auto samples = synthesize_dataset(3, 1);
    EXPECT_EQ(stack_images(samples).shape(), (Shape{3, 3, 64, 64}));
    EXPECT_EQ(stack_labels(samples).shape(), (Shape{3, 15}));
    EXPECT_THROW(stack_images({}), DataError);
}
