#include "condlab/datasets.hpp"

#include "condlab/errors.hpp"
#include "condlab/rng.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace condlab {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off) {
    if (off + 4 > buf.size()) throw TruncationError("IDX header truncated");
    return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
           (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
}

void set_labels(ImageBatch& b, const std::vector<int>& classes, const LoadOptions& opts) {
    const std::size_t n = classes.size();
    if (opts.label_kind == LabelKind::Scalar) {
        b.labels = Matrix(n, 1);
        for (std::size_t i = 0; i < n; ++i) b.labels(i, 0) = classes[i];
    } else {
        b.labels = Matrix(n, opts.num_classes);
        for (std::size_t i = 0; i < n; ++i) {
            if (classes[i] < 0 || std::size_t(classes[i]) >= opts.num_classes)
                throw FormatError("label " + std::to_string(classes[i]) + " outside class range");
            b.labels(i, std::size_t(classes[i])) = 1.0;
        }
    }
    b.label_kind = opts.label_kind;
}

} // namespace

std::string to_string(LabelKind k) { return k == LabelKind::Scalar ? "scalar" : "onehot"; }

LabelKind label_kind_from_string(const std::string& s) {
    if (s == "scalar") return LabelKind::Scalar;
    if (s == "onehot") return LabelKind::OneHot;
    throw InvalidParameter("unknown label kind '" + s + "'");
}

std::string to_string(SignMode s) { return s == SignMode::Symmetric ? "symmetric" : "positive"; }

SignMode sign_mode_from_string(const std::string& s) {
    if (s == "symmetric") return SignMode::Symmetric;
    if (s == "positive") return SignMode::Positive;
    throw InvalidParameter("unknown sign mode '" + s + "'");
}

void ImageBatch::validate() const {
    if (images.n == 0 || images.w == 0 || images.h == 0 || images.c == 0)
        throw DimensionError("image batch has an empty dimension");
    if (labels.rows != images.n) throw DimensionError("label count differs from image count");
    if (labels.cols == 0) throw DimensionError("labels have zero width");
}

ImageBatch load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                    const LoadOptions& opts) {
    const auto img = read_all(image_path);
    const auto lab = read_all(label_path);

    if (read_be32(img, 0) != kIdxImagesMagic)
        throw FormatError(image_path.string() + ": not an IDX image file (bad magic)");
    if (read_be32(lab, 0) != kIdxLabelsMagic)
        throw FormatError(label_path.string() + ": not an IDX label file (bad magic)");

    const std::size_t n = read_be32(img, 4);
    const std::size_t rows = read_be32(img, 8);
    const std::size_t cols = read_be32(img, 12);
    const std::size_t n_lab = read_be32(lab, 4);
    if (n == 0 || rows == 0 || cols == 0) throw FormatError("IDX image file declares an empty batch");
    if (n != n_lab) throw FormatError("IDX image and label counts differ");

    const std::size_t img_bytes = 16 + n * rows * cols;
    const std::size_t lab_bytes = 8 + n;
    if (img.size() != img_bytes)
        throw TruncationError(image_path.string() + ": expected " + std::to_string(img_bytes) +
                              " bytes, found " + std::to_string(img.size()));
    if (lab.size() != lab_bytes)
        throw TruncationError(label_path.string() + ": expected " + std::to_string(lab_bytes) +
                              " bytes, found " + std::to_string(lab.size()));

    ImageBatch b;
    b.images = Tensor4(n, rows, cols, 1);
    const unsigned char* px = img.data() + 16;
    for (std::size_t k = 0; k < n * rows * cols; ++k) b.images.data[k] = px[k] / 255.0 + opts.pixel_offset;

    std::vector<int> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = lab[8 + i];
    set_labels(b, classes, opts);
    b.meta = {"idx:" + image_path.filename().string(), {1.0 / 255.0, opts.pixel_offset}};
    return b;
}

ImageBatch load_cifar10(const std::filesystem::path& path, const LoadOptions& opts) {
    const auto buf = read_all(path);
    if (buf.empty()) throw FormatError(path.string() + ": empty CIFAR-10 file");
    if (buf.size() % kCifarRecord != 0)
        throw FormatError(path.string() + ": size " + std::to_string(buf.size()) +
                          " is not a multiple of the 3073-byte record");
    const std::size_t n = buf.size() / kCifarRecord;

    ImageBatch b;
    b.images = Tensor4(n, kCifarSide, kCifarSide, 3);
    std::vector<int> classes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = buf.data() + i * kCifarRecord;
        classes[i] = rec[0];
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t u = 0; u < kCifarSide; ++u)
                for (std::size_t v = 0; v < kCifarSide; ++v)
                    b.images(i, u, v, a) = rec[1 + a * kCifarPlane + u * kCifarSide + v] / 255.0 + opts.pixel_offset;
    }
    set_labels(b, classes, opts);
    b.meta = {"cifar10:" + path.filename().string(), {1.0 / 255.0, opts.pixel_offset}};
    return b;
}

ImageBatch synthesize(std::size_t n, std::size_t w0, std::size_t h0, std::size_t c0, double c,
                      std::uint64_t seed, SignMode sign) {
    if (!(c > 1.0)) throw InvalidParameter("synthesize: c must exceed 1");
    if (n == 0 || w0 == 0 || h0 == 0 || c0 == 0) throw InvalidParameter("synthesize: all sizes must be >= 1");

    Rng rng(seed);
    std::uniform_real_distribution<double> mag(1.0 / c, c);
    std::bernoulli_distribution coin(0.5);
    auto draw = [&] {
        const double m = mag(rng);
        if (sign == SignMode::Positive) return m;
        return coin(rng) ? m : -m;
    };

    ImageBatch b;
    b.images = Tensor4(n, w0, h0, c0);
    for (double& x : b.images.data) x = draw();
    b.labels = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) b.labels(i, 0) = draw();
    b.label_kind = LabelKind::Scalar;
    b.meta = {"synthetic:" + to_string(sign) + ":c=" + fmt_double(c), {}};
    return b;
}

std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t n_sub, std::uint64_t seed) {
    if (n_sub < 1 || n_sub > n)
        throw InvalidParameter("subsample: need 1 <= n_sub <= n (n_sub=" + std::to_string(n_sub) +
                               ", n=" + std::to_string(n) + ")");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // Partial Fisher-Yates: the first n_sub slots are the draw.
    for (std::size_t k = 0; k < n_sub; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    idx.resize(n_sub);
    return idx;
}

ImageBatch subsample(const ImageBatch& batch, std::size_t n_sub, std::uint64_t seed) {
    const auto idx = subsample_indices(batch.size(), n_sub, seed);
    const auto& src = batch.images;
    ImageBatch out;
    out.images = Tensor4(n_sub, src.w, src.h, src.c);
    out.labels = Matrix(n_sub, batch.labels.cols);
    for (std::size_t k = 0; k < n_sub; ++k) {
        const auto s = src.sample(idx[k]);
        std::copy(s.begin(), s.end(), out.images.sample(k).begin());
        const auto l = batch.labels.row(idx[k]);
        std::copy(l.begin(), l.end(), out.labels.row(k).begin());
    }
    out.label_kind = batch.label_kind;
    out.meta = batch.meta;
    out.meta.source += ":subsample(" + std::to_string(n_sub) + ")";
    return out;
}

void write_batch_csv(const ImageBatch& batch, const std::filesystem::path& path) {
    batch.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const auto& im = batch.images;
    out << im.n << ',' << im.w << ',' << im.h << ',' << im.c << ',' << to_string(batch.label_kind) << '\n';
    for (std::size_t i = 0; i < im.n; ++i) {
        bool first = true;
        for (double y : batch.labels.row(i)) {
            if (!first) out << ',';
            out << fmt_double(y);
            first = false;
        }
        for (double x : im.sample(i)) out << ',' << fmt_double(x);
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

ImageBatch read_batch_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");

    std::vector<std::string> head;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) head.push_back(tok);
    }
    if (head.size() != 5) throw FormatError(path.string() + ": header must be n,W0,H0,C0,label_kind");
    std::size_t n, w, h, c;
    try {
        n = std::stoul(head[0]);
        w = std::stoul(head[1]);
        h = std::stoul(head[2]);
        c = std::stoul(head[3]);
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": non-numeric header field");
    }
    const LabelKind kind = label_kind_from_string(head[4]);
    if (n == 0 || w == 0 || h == 0 || c == 0) throw FormatError(path.string() + ": empty dimension in header");

    ImageBatch b;
    b.images = Tensor4(n, w, h, c);
    b.label_kind = kind;
    const std::size_t npx = w * h * c;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw TruncationError(path.string() + ": fewer rows than header n");
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                vals.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw FormatError(path.string() + ": bad number '" + tok + "'");
            }
        }
        if (vals.size() <= npx) throw FormatError(path.string() + ": row " + std::to_string(i) + " too short");
        const std::size_t d = vals.size() - npx;
        if (i == 0) b.labels = Matrix(n, d);
        if (d != b.labels.cols) throw FormatError(path.string() + ": inconsistent label width");
        if (kind == LabelKind::Scalar && d != 1) throw FormatError(path.string() + ": scalar rows need one label");
        std::copy(vals.begin(), vals.begin() + d, b.labels.row(i).begin());
        std::copy(vals.begin() + d, vals.end(), b.images.sample(i).begin());
    }
    b.meta = {"csv:" + path.filename().string(), {}};
    return b;
}

} // namespace condlab
