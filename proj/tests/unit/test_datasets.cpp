#include "condlab/datasets.hpp"
#include "condlab/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace condlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "condlab_test_datasets";
    fs::create_directories(dir);
    return dir / name;
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx_images(const fs::path& p, std::uint32_t magic, std::uint32_t n, const std::vector<unsigned char>& px) {
    std::ofstream out(p, std::ios::binary);
    put_be32(out, magic);
    put_be32(out, n);
    put_be32(out, 28);
    put_be32(out, 28);
    out.write(reinterpret_cast<const char*>(px.data()), std::streamsize(px.size()));
}

void write_idx_labels(const fs::path& p, const std::vector<unsigned char>& labels) {
    std::ofstream out(p, std::ios::binary);
    put_be32(out, 0x801);
    put_be32(out, std::uint32_t(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

} // namespace

TEST(LoadIdx, RoundTripsHandWrittenBytes) {
    std::vector<unsigned char> px(2 * 28 * 28);
    for (std::size_t k = 0; k < px.size(); ++k) px[k] = static_cast<unsigned char>((k * 37) % 256);
    write_idx_images(temp_path("img.idx"), 0x803, 2, px);
    write_idx_labels(temp_path("lab.idx"), {3, 9});

    const ImageBatch b = load_idx(temp_path("img.idx"), temp_path("lab.idx"));
    EXPECT_EQ(b.images.n, 2u);
    EXPECT_EQ(b.images.w, 28u);
    EXPECT_EQ(b.images.h, 28u);
    EXPECT_EQ(b.images.c, 1u);
    EXPECT_EQ(b.images(0, 0, 0, 0), px[0] / 255.0);
    // byte order is row-major: row u, column v
    EXPECT_EQ(b.images(1, 3, 5, 0), px[28 * 28 + 3 * 28 + 5] / 255.0);
    EXPECT_EQ(b.labels(0, 0), 3.0);
    EXPECT_EQ(b.labels(1, 0), 9.0);
}

TEST(LoadIdx, OneHotLabelsAndOffset) {
    std::vector<unsigned char> px(28 * 28, 0);
    write_idx_images(temp_path("img1.idx"), 0x803, 1, px);
    write_idx_labels(temp_path("lab1.idx"), {4});
    LoadOptions opts;
    opts.label_kind = LabelKind::OneHot;
    opts.pixel_offset = 0.01;
    const ImageBatch b = load_idx(temp_path("img1.idx"), temp_path("lab1.idx"), opts);
    ASSERT_EQ(b.labels.cols, 10u);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(b.labels(0, k), k == 4 ? 1.0 : 0.0);
    EXPECT_DOUBLE_EQ(b.images(0, 0, 0, 0), 0.01);
    EXPECT_DOUBLE_EQ(b.meta.norm.offset, 0.01);
}

TEST(LoadIdx, LabelMagicInImageSlotIsFormatError) {
    write_idx_images(temp_path("bad.idx"), 0x801, 1, std::vector<unsigned char>(28 * 28));
    write_idx_labels(temp_path("lab2.idx"), {1});
    EXPECT_THROW(load_idx(temp_path("bad.idx"), temp_path("lab2.idx")), FormatError);
}

TEST(LoadIdx, TruncatedImageIsTruncationError) {
    write_idx_images(temp_path("short.idx"), 0x803, 2, std::vector<unsigned char>(28 * 28 + 100));
    write_idx_labels(temp_path("lab3.idx"), {1, 2});
    EXPECT_THROW(load_idx(temp_path("short.idx"), temp_path("lab3.idx")), TruncationError);
}

TEST(LoadCifar, SingleRecordAllWhite) {
    std::vector<unsigned char> rec(3073, 255);
    rec[0] = 7;
    {
        std::ofstream out(temp_path("one.bin"), std::ios::binary);
        out.write(reinterpret_cast<const char*>(rec.data()), 3073);
    }
    const ImageBatch b = load_cifar10(temp_path("one.bin"));
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b.labels(0, 0), 7.0);
    EXPECT_EQ(b.images.w, 32u);
    EXPECT_EQ(b.images.c, 3u);
    for (double x : b.images.data) EXPECT_EQ(x, 1.0);
}

TEST(LoadCifar, ChannelPlanesMapToAlpha) {
    std::vector<unsigned char> rec(3073, 0);
    rec[1 + 0 * 1024 + 5 * 32 + 6] = 255; // R at (5,6)
    rec[1 + 2 * 1024 + 1 * 32 + 2] = 51;  // B at (1,2)
    {
        std::ofstream out(temp_path("planes.bin"), std::ios::binary);
        out.write(reinterpret_cast<const char*>(rec.data()), 3073);
    }
    const ImageBatch b = load_cifar10(temp_path("planes.bin"));
    EXPECT_EQ(b.images(0, 5, 6, 0), 1.0);
    EXPECT_EQ(b.images(0, 5, 6, 1), 0.0);
    EXPECT_DOUBLE_EQ(b.images(0, 1, 2, 2), 51 / 255.0);
}

TEST(LoadCifar, EmptyAndRaggedFilesRejected) {
    { std::ofstream out(temp_path("empty.bin"), std::ios::binary); }
    EXPECT_THROW(load_cifar10(temp_path("empty.bin")), FormatError);
    {
        std::ofstream out(temp_path("ragged.bin"), std::ios::binary);
        std::vector<char> bytes(3073 + 10, 0);
        out.write(bytes.data(), std::streamsize(bytes.size()));
    }
    EXPECT_THROW(load_cifar10(temp_path("ragged.bin")), FormatError);
}

TEST(LoadCifar, TwoRecords) {
    {
        std::ofstream out(temp_path("two.bin"), std::ios::binary);
        std::vector<char> bytes(2 * 3073, 0);
        out.write(bytes.data(), std::streamsize(bytes.size()));
    }
    EXPECT_EQ(load_cifar10(temp_path("two.bin")).size(), 2u);
}

TEST(Synthesize, BoundsHold) {
    const ImageBatch b = synthesize(4, 5, 5, 1, 2.0, 7);
    for (double x : b.images.data) {
        EXPECT_GE(std::abs(x), 0.5);
        EXPECT_LE(std::abs(x), 2.0);
    }
    for (double y : b.labels.data) {
        EXPECT_GE(std::abs(y), 0.5);
        EXPECT_LE(std::abs(y), 2.0);
    }
}

TEST(Synthesize, DeterministicPerSeed) {
    const ImageBatch a = synthesize(10, 4, 4, 2, 3.0, 11), b = synthesize(10, 4, 4, 2, 3.0, 11);
    EXPECT_EQ(a.images.data, b.images.data);
    EXPECT_EQ(a.labels.data, b.labels.data);
    const ImageBatch c = synthesize(10, 4, 4, 2, 3.0, 12);
    EXPECT_NE(a.images.data, c.images.data);
}

TEST(Synthesize, ExhaustiveScanLargeBatch) {
    const ImageBatch b = synthesize(1000, 6, 6, 1, 2.0, 3);
    double mn = 1e300;
    bool saw_negative = false;
    for (double x : b.images.data) {
        mn = std::min(mn, std::abs(x));
        saw_negative = saw_negative || x < 0;
    }
    EXPECT_GE(mn, 0.5);
    EXPECT_TRUE(saw_negative);
}

TEST(Synthesize, PositiveModeHasNoNegatives) {
    const ImageBatch b = synthesize(50, 4, 4, 1, 2.0, 3, SignMode::Positive);
    for (double x : b.images.data) EXPECT_GE(x, 0.5);
    for (double y : b.labels.data) EXPECT_GE(y, 0.5);
}

TEST(Synthesize, RejectsSmallBound) {
    EXPECT_THROW(synthesize(4, 4, 4, 1, 1.0, 1), InvalidParameter);
    EXPECT_THROW(synthesize(4, 4, 4, 1, 0.5, 1), InvalidParameter);
}

TEST(Subsample, FullSizeIsPermutation) {
    const ImageBatch b = synthesize(12, 3, 3, 1, 2.0, 5);
    const ImageBatch s = subsample(b, 12, 99);
    std::multiset<double> x(b.labels.data.begin(), b.labels.data.end()), y(s.labels.data.begin(), s.labels.data.end());
    EXPECT_EQ(x, y);
}

TEST(Subsample, SingleSampleReproducible) {
    const ImageBatch b = synthesize(12, 3, 3, 1, 2.0, 5);
    const ImageBatch s1 = subsample(b, 1, 4), s2 = subsample(b, 1, 4);
    EXPECT_EQ(s1.images.data, s2.images.data);
    EXPECT_EQ(s1.size(), 1u);
}

TEST(Subsample, RejectsOversizedRequest) {
    const ImageBatch b = synthesize(5, 3, 3, 1, 2.0, 5);
    EXPECT_THROW(subsample(b, 6, 1), InvalidParameter);
    EXPECT_THROW(subsample(b, 0, 1), InvalidParameter);
}

TEST(Subsample, SelectionFrequencyIsUniform) {
    std::vector<int> hits(10, 0);
    const int trials = 10000;
    for (int s = 0; s < trials; ++s)
        for (std::size_t i : subsample_indices(10, 5, std::uint64_t(s))) ++hits[i];
    for (int h : hits) EXPECT_NEAR(double(h) / trials, 0.5, 0.02);
}

TEST(Subsample, PreservesOneHotEncoding) {
    ImageBatch b = synthesize(6, 3, 3, 1, 2.0, 5);
    b.labels = Matrix(6, 3);
    b.label_kind = LabelKind::OneHot;
    for (std::size_t i = 0; i < 6; ++i) b.labels(i, i % 3) = 1.0;
    const ImageBatch s = subsample(b, 4, 2);
    EXPECT_EQ(s.label_kind, LabelKind::OneHot);
    EXPECT_EQ(s.labels.cols, 3u);
}

TEST(BatchCsv, RoundTripIsExact) {
    const ImageBatch b = synthesize(7, 4, 3, 2, 2.5, 21);
    write_batch_csv(b, temp_path("batch.csv"));
    const ImageBatch r = read_batch_csv(temp_path("batch.csv"));
    EXPECT_EQ(r.images.w, 4u);
    EXPECT_EQ(r.images.h, 3u);
    EXPECT_EQ(r.images.c, 2u);
    EXPECT_EQ(r.images.data, b.images.data);
    EXPECT_EQ(r.labels.data, b.labels.data);
}

TEST(BatchCsv, TruncatedFileRejected) {
    {
        std::ofstream out(temp_path("trunc.csv"));
        out << "2,1,1,1,scalar\n1,0.5\n";
    }
    EXPECT_THROW(read_batch_csv(temp_path("trunc.csv")), TruncationError);
}
