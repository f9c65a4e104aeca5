#include "soda2/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "soda2/error.hpp"
#include "soda2/rng.hpp"

namespace soda2 {

namespace {

using nlohmann::json;

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32le(std::string& out, float v) { put_u32le(out, std::bit_cast<std::uint32_t>(v)); }

void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw FormatError("short write to " + path);
}

std::uint32_t get_u32le(const std::string& d, std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(d[off])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(d[off + 1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(d[off + 2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(d[off + 3])) << 24);
}

json parse_header(const std::string& data, const char* magic, const std::string& path,
                  std::size_t& payload_off) {
    if (data.size() < 8)
        throw FormatError(path + ": truncated before header (offset " +
                          std::to_string(data.size()) + ")");
    if (std::memcmp(data.data(), magic, 4) != 0)
        throw FormatError(path + ": bad magic at offset 0, expected " + magic);
    const std::uint32_t hlen = get_u32le(data, 4);
    if (data.size() < 8 + static_cast<std::size_t>(hlen))
        throw FormatError(path + ": truncated header (offset " + std::to_string(data.size()) +
                          ", need " + std::to_string(8 + hlen) + ")");
    payload_off = 8 + hlen;
    try {
        return json::parse(data.substr(8, hlen));
    } catch (const json::exception& e) {
        throw FormatError(path + ": header JSON invalid at offset 8: " + e.what());
    }
}

// bilinear upsample of a coarse normal grid; corners map to corners
std::vector<double> smooth_field(Rng& rng, std::size_t size, std::size_t coarse) {
    std::vector<double> g(coarse * coarse);
    for (double& v : g) v = rng.normal();
    std::vector<double> out(size * size);
    const double scale =
        size > 1 ? static_cast<double>(coarse - 1) / static_cast<double>(size - 1) : 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double fi = static_cast<double>(i) * scale;
        const std::size_t i0 = std::min(static_cast<std::size_t>(fi), coarse - 2);
        const double wi = fi - static_cast<double>(i0);
        for (std::size_t j = 0; j < size; ++j) {
            const double fj = static_cast<double>(j) * scale;
            const std::size_t j0 = std::min(static_cast<std::size_t>(fj), coarse - 2);
            const double wj = fj - static_cast<double>(j0);
            out[i * size + j] = g[i0 * coarse + j0] * (1 - wi) * (1 - wj) +
                                g[i0 * coarse + j0 + 1] * (1 - wi) * wj +
                                g[(i0 + 1) * coarse + j0] * wi * (1 - wj) +
                                g[(i0 + 1) * coarse + j0 + 1] * wi * wj;
        }
    }
    return out;
}

std::vector<double> gauss_smooth(const std::vector<double>& v, double sd) {
    const std::size_t n = v.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0, wsum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = std::exp(-d * d / (2.0 * sd * sd));
            acc += w * v[j];
            wsum += w;
        }
        out[i] = acc / wsum;
    }
    return out;
}

// Synthetic scene design constants. Class identity is carried by an
// amplitude ladder plus a per-class smooth spectral profile; unknown classes
// sit well above the ladder so their features stay outside the kernel reach
// of the alignment loss. The shift is affine per spectrum: a smooth per-pixel
// gain field plus a rank-1 (pixel x band) contamination term, both of which
// survive per-band standardization.
struct SynthDesign {
    double level_base = 0.7;
    double level_ratio = 1.5;
    double profile_wiggle = 0.30;
    double unknown_boost = 3.4;   // x top known level
    double unknown_ratio = 1.25;  // between successive unknowns
    double noise_sd = 0.08;
    double unknown_fraction = 0.10;
    std::size_t train_per_class = 64;
    std::size_t coarse_labels = 8;
    std::size_t coarse_shift = 6;
    double gain_mean = 0.08;    // x shift
    double gain_spread = 0.15;  // x shift
    double rank1_scale = 0.15;  // x shift
    double tex_base = 0.01;
    double tex_step = 0.03;  // x (c % 3)
    double tex_unknown = 0.05;
};

std::vector<std::vector<double>> make_signatures(Rng& rng, std::size_t bands, int known,
                                                 int unknown, const SynthDesign& d,
                                                 std::vector<double>& tex) {
    std::vector<std::vector<double>> sigs;
    tex.clear();
    double top_level = d.level_base;
    for (int c = 0; c < known; ++c) {
        const double level = d.level_base * std::pow(d.level_ratio, c);
        top_level = level;
        std::vector<double> prof(bands);
        for (double& v : prof) v = rng.normal();
        prof = gauss_smooth(prof, 2.0);
        double mx = 0.0;
        for (double v : prof) mx = std::max(mx, std::abs(v));
        std::vector<double> sig(bands);
        for (std::size_t b = 0; b < bands; ++b)
            sig[b] = level * (1.0 + d.profile_wiggle * prof[b] / (mx + 1e-300));
        sigs.push_back(std::move(sig));
        tex.push_back(d.tex_base + d.tex_step * static_cast<double>(c % 3));
    }
    for (int u = 0; u < unknown; ++u) {
        const double level = top_level * d.unknown_boost * std::pow(d.unknown_ratio, u);
        std::vector<double> prof(bands);
        for (double& v : prof) v = rng.normal();
        prof = gauss_smooth(prof, 2.0);
        double mx = 0.0;
        for (double v : prof) mx = std::max(mx, std::abs(v));
        std::vector<double> sig(bands);
        for (std::size_t b = 0; b < bands; ++b)
            sig[b] = level * (1.0 + d.profile_wiggle * prof[b] / (mx + 1e-300));
        sigs.push_back(std::move(sig));
        tex.push_back(d.tex_unknown);
    }
    return sigs;
}

void ensure_class_present(std::vector<int>& lab, std::size_t size, int cls, Rng& rng) {
    for (int v : lab)
        if (v == cls) return;
    const std::size_t span = std::min<std::size_t>(4, size);
    const std::size_t i0 = rng.below(size - span + 1);
    const std::size_t j0 = rng.below(size - span + 1);
    for (std::size_t i = i0; i < i0 + span; ++i)
        for (std::size_t j = j0; j < j0 + span; ++j)
            lab[i * size + j] = cls;
}

std::vector<int> known_layout(Rng& rng, std::size_t size, int known,
                              const SynthDesign& d) {
    std::vector<std::vector<double>> fields;
    fields.reserve(known);
    for (int c = 0; c < known; ++c) fields.push_back(smooth_field(rng, size, d.coarse_labels));
    std::vector<int> lab(size * size, 0);
    for (std::size_t p = 0; p < size * size; ++p) {
        int best = 0;
        for (int c = 1; c < known; ++c)
            if (fields[c][p] > fields[best][p]) best = c;
        lab[p] = best;
    }
    for (int c = 0; c < known; ++c) ensure_class_present(lab, size, c, rng);
    return lab;
}

void carve_unknown_regions(Rng& rng, std::vector<int>& lab, std::size_t size, int known,
                           int unknown, const SynthDesign& d) {
    for (int u = 0; u < unknown; ++u) {
        std::vector<double> f = smooth_field(rng, size, d.coarse_labels);
        std::vector<double> sorted = f;
        std::sort(sorted.begin(), sorted.end());
        const double q = 1.0 - d.unknown_fraction / static_cast<double>(unknown);
        const std::size_t qi = std::min(
            sorted.size() - 1,
            static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5));
        const double thr = sorted[qi];
        for (std::size_t p = 0; p < size * size; ++p)
            if (f[p] > thr) lab[p] = known + u;
        ensure_class_present(lab, size, known + u, rng);
    }
}

void render_cube(HsiCube& cube, const std::vector<int>& lab,
                 const std::vector<std::vector<double>>& sigs,
                 const std::vector<double>& tex, double noise_sd, Rng& rng) {
    const std::size_t size = cube.height;
    const std::size_t bands = cube.bands;
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
            const int c = lab[i * size + j];
            const double chk = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            const double mod = 1.0 + tex[static_cast<std::size_t>(c)] * chk;
            for (std::size_t b = 0; b < bands; ++b)
                cube.at(b, i, j) =
                    sigs[static_cast<std::size_t>(c)][b] * mod + noise_sd * rng.normal();
        }
}

void quantize_f32(HsiCube& cube) {
    for (double& v : cube.values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

void HsiCube::validate() const {
    if (bands < 1) throw ValueError("cube must have at least one band");
    if (values.size() != bands * height * width)
        throw ValueError("cube value count does not match dimensions");
    for (double v : values)
        if (!std::isfinite(v)) throw ValueError("cube contains non-finite values");
}

HsiCube load_cube(const std::string& path) {
    const std::string data = read_file(path);
    std::size_t off = 0;
    const json h = parse_header(data, "HSC1", path, off);
    HsiCube cube;
    try {
        cube.bands = h.at("bands").get<std::size_t>();
        cube.height = h.at("height").get<std::size_t>();
        cube.width = h.at("width").get<std::size_t>();
        if (h.at("dtype").get<std::string>() != "f32")
            throw FormatError(path + ": unsupported dtype");
    } catch (const json::exception& e) {
        throw FormatError(path + ": header fields invalid: " + e.what());
    }
    const std::size_t n = cube.bands * cube.height * cube.width;
    if (data.size() != off + 4 * n)
        throw FormatError(path + ": payload truncated at offset " +
                          std::to_string(data.size()) + ", expected " +
                          std::to_string(off + 4 * n) + " bytes");
    cube.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = get_u32le(data, off + 4 * i);
        const float f = std::bit_cast<float>(bits);
        if (!std::isfinite(f))
            throw FormatError(path + ": non-finite value at offset " +
                              std::to_string(off + 4 * i));
        cube.values[i] = static_cast<double>(f);
    }
    cube.name = path;
    return cube;
}

void save_cube(const HsiCube& cube, const std::string& path) {
    cube.validate();
    const json h = {{"bands", cube.bands},
                    {"height", cube.height},
                    {"width", cube.width},
                    {"dtype", "f32"}};
    const std::string header = h.dump();
    std::string out = "HSC1";
    put_u32le(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    out.reserve(out.size() + 4 * cube.values.size());
    for (double v : cube.values) put_f32le(out, static_cast<float>(v));
    write_file(path, out);
}

LabelMap load_labels(const std::string& path) {
    const std::string data = read_file(path);
    std::size_t off = 0;
    const json h = parse_header(data, "HSL1", path, off);
    LabelMap map;
    try {
        map.height = h.at("height").get<std::size_t>();
        map.width = h.at("width").get<std::size_t>();
        map.class_names = h.at("classes").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(path + ": header fields invalid: " + e.what());
    }
    const std::size_t n = map.height * map.width;
    if (data.size() != off + 2 * n)
        throw FormatError(path + ": payload truncated at offset " +
                          std::to_string(data.size()));
    map.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        map.labels[i] = static_cast<std::uint16_t>(
            static_cast<unsigned char>(data[off + 2 * i]) |
            (static_cast<unsigned char>(data[off + 2 * i + 1]) << 8));
        if (map.labels[i] != 0 && map.labels[i] != kUnknownSentinel &&
            map.labels[i] > map.class_names.size())
            throw FormatError(path + ": label " + std::to_string(map.labels[i]) +
                              " exceeds declared class count at offset " +
                              std::to_string(off + 2 * i));
    }
    return map;
}

void save_labels(const LabelMap& map, const std::string& path) {
    if (map.labels.size() != map.height * map.width)
        throw ValueError("label count does not match dimensions");
    const json h = {{"height", map.height},
                    {"width", map.width},
                    {"classes", map.class_names}};
    const std::string header = h.dump();
    std::string out = "HSL1";
    put_u32le(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (std::uint16_t v : map.labels) put_u16le(out, v);
    write_file(path, out);
}

HsiCube standardize_bands(const HsiCube& cube) {
    cube.validate();
    HsiCube out = cube;
    const std::size_t n = cube.height * cube.width;
    for (std::size_t b = 0; b < cube.bands; ++b) {
        double* band = out.values.data() + b * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += band[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = band[i] - mean;
            var += d * d;
        }
        if (var == 0.0)
            throw ValueError("standardize_bands: band " + std::to_string(b) +
                             " is constant");
        const double inv_sd = 1.0 / std::sqrt(var / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) band[i] = (band[i] - mean) * inv_sd;
    }
    return out;
}

namespace {
// reflect across the border without repeating the edge sample
std::size_t mirror_index(long v, std::size_t n) {
    const long nn = static_cast<long>(n);
    while (v < 0 || v >= nn) {
        if (v < 0) v = -v;
        if (v >= nn) v = 2 * nn - 2 - v;
    }
    return static_cast<std::size_t>(v);
}
}  // namespace

PatchBatch extract_patches(const HsiCube& cube, const LabelMap* labels, std::size_t p,
                           Domain domain) {
    if (p % 2 == 0) throw ShapeError("extract_patches: patch size must be odd");
    if (p > cube.height || p > cube.width)
        throw ShapeError("extract_patches: patch size exceeds scene extent");
    if (labels && (labels->height != cube.height || labels->width != cube.width))
        throw ShapeError("extract_patches: label map extent mismatch");

    std::vector<std::pair<std::size_t, std::size_t>> centers;
    std::vector<int> out_labels;
    for (std::size_t i = 0; i < cube.height; ++i)
        for (std::size_t j = 0; j < cube.width; ++j) {
            if (labels) {
                const std::uint16_t v = labels->at(i, j);
                if (v == 0 || v == kUnknownSentinel) continue;
                out_labels.push_back(static_cast<int>(v));
            }
            centers.emplace_back(i, j);
        }
    if (centers.empty()) throw ValueError("extract_patches: no labeled pixels");

    const long r = static_cast<long>(p) / 2;
    PatchBatch batch;
    batch.domain = domain;
    batch.patch = p;
    batch.patches = Tensor({centers.size(), cube.bands, p, p});
    if (domain == Domain::Source) batch.labels = std::move(out_labels);
    double* dst = batch.patches.values.data();
    for (const auto& [ci, cj] : centers) {
        for (std::size_t b = 0; b < cube.bands; ++b)
            for (long di = -r; di <= r; ++di) {
                const std::size_t ii = mirror_index(static_cast<long>(ci) + di, cube.height);
                for (long dj = -r; dj <= r; ++dj) {
                    const std::size_t jj =
                        mirror_index(static_cast<long>(cj) + dj, cube.width);
                    *dst++ = cube.at(b, ii, jj);
                }
            }
    }
    return batch;
}

SynthResult synth_pair(const DatasetMeta& meta, double shift, std::size_t bands,
                       std::size_t size, std::size_t p, int unknown_classes) {
    if (meta.known_classes < 2) throw ConfigError("synth_pair: need at least two classes");
    if (shift < 0.0) throw ConfigError("synth_pair: shift must be nonnegative");
    if (!meta.unknown_present) unknown_classes = 0;
    const SynthDesign d;

    Rng rng_sig(derive_seed(meta.seed, 1));
    Rng rng_src_layout(derive_seed(meta.seed, 2));
    Rng rng_tgt_layout(derive_seed(meta.seed, 3));
    Rng rng_src_noise(derive_seed(meta.seed, 4));
    Rng rng_tgt_noise(derive_seed(meta.seed, 5));
    Rng rng_shift(derive_seed(meta.seed, 6));
    Rng rng_split(derive_seed(meta.seed, 7));

    std::vector<double> tex;
    const auto sigs =
        make_signatures(rng_sig, bands, meta.known_classes, unknown_classes, d, tex);

    const std::vector<int> src_lab = known_layout(rng_src_layout, size, meta.known_classes, d);
    std::vector<int> tgt_lab = known_layout(rng_tgt_layout, size, meta.known_classes, d);
    if (unknown_classes > 0)
        carve_unknown_regions(rng_tgt_layout, tgt_lab, size, meta.known_classes,
                              unknown_classes, d);

    SynthResult out;
    out.source.bands = out.target.bands = bands;
    out.source.height = out.target.height = size;
    out.source.width = out.target.width = size;
    out.source.values.assign(bands * size * size, 0.0);
    out.target.values.assign(bands * size * size, 0.0);
    out.source.name = "synth-source";
    out.target.name = "synth-target";

    render_cube(out.source, src_lab, sigs, tex, d.noise_sd, rng_src_noise);
    render_cube(out.target, tgt_lab, sigs, tex, d.noise_sd, rng_tgt_noise);

    // affine shift a*x + b: smooth per-pixel gain plus rank-1 pixel x band term
    const std::vector<double> gain_field = smooth_field(rng_shift, size, d.coarse_shift);
    const std::vector<double> rank1_field = smooth_field(rng_shift, size, d.coarse_shift);
    std::vector<double> coarse_curve(d.coarse_shift);
    for (double& v : coarse_curve) v = rng_shift.normal();
    std::vector<double> band_curve(bands);
    for (std::size_t b = 0; b < bands; ++b) {
        const double pos = bands > 1 ? static_cast<double>(b) *
                                           static_cast<double>(d.coarse_shift - 1) /
                                           static_cast<double>(bands - 1)
                                     : 0.0;
        const std::size_t k0 =
            std::min(static_cast<std::size_t>(pos), d.coarse_shift - 2);
        const double w = pos - static_cast<double>(k0);
        band_curve[b] = coarse_curve[k0] * (1.0 - w) + coarse_curve[k0 + 1] * w;
    }
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
            const double a =
                1.0 + d.gain_mean * shift + d.gain_spread * shift * gain_field[i * size + j];
            const double r1 = d.rank1_scale * shift * rank1_field[i * size + j];
            for (std::size_t b = 0; b < bands; ++b)
                out.target.at(b, i, j) = a * out.target.at(b, i, j) + r1 * band_curve[b];
        }

    quantize_f32(out.source);
    quantize_f32(out.target);

    // class names
    std::vector<std::string> names;
    for (int c = 0; c < meta.known_classes; ++c)
        names.push_back("class-" + std::to_string(c + 1));

    // dense target truth (unknown regions carry the sentinel)
    out.target_labels.height = out.target_labels.width = size;
    out.target_labels.class_names = names;
    out.target_labels.labels.resize(size * size);
    for (std::size_t q = 0; q < size * size; ++q)
        out.target_labels.labels[q] =
            tgt_lab[q] < meta.known_classes
                ? static_cast<std::uint16_t>(tgt_lab[q] + 1)
                : kUnknownSentinel;

    // sparse source training split from region interiors (radius = patch/2)
    out.source_labels.height = out.source_labels.width = size;
    out.source_labels.class_names = names;
    out.source_labels.labels.assign(size * size, 0);
    const long radius = static_cast<long>(p) / 2;
    for (int c = 0; c < meta.known_classes; ++c) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < size; ++i)
            for (std::size_t j = 0; j < size; ++j) {
                if (src_lab[i * size + j] != c) continue;
                bool interior = true;
                for (long di = -radius; di <= radius && interior; ++di)
                    for (long dj = -radius; dj <= radius && interior; ++dj) {
                        const long ii = static_cast<long>(i) + di;
                        const long jj = static_cast<long>(j) + dj;
                        if (ii < 0 || jj < 0 || ii >= static_cast<long>(size) ||
                            jj >= static_cast<long>(size) ||
                            src_lab[static_cast<std::size_t>(ii) * size +
                                    static_cast<std::size_t>(jj)] != c)
                            interior = false;
                    }
                if (interior) pool.push_back(i * size + j);
            }
        if (pool.empty())
            for (std::size_t q = 0; q < size * size; ++q)
                if (src_lab[q] == c) pool.push_back(q);
        rng_split.shuffle(pool);
        const std::size_t take = std::min(pool.size(), d.train_per_class);
        for (std::size_t t = 0; t < take; ++t)
            out.source_labels.labels[pool[t]] = static_cast<std::uint16_t>(c + 1);
    }
    return out;
}

std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
batch_index_plan(std::size_t n_source, std::size_t n_target, std::size_t batch_size,
                 std::uint64_t seed) {
    if (batch_size < 2 || batch_size % 2 != 0)
        throw ConfigError("batch size must be even and at least 2");
    if (n_source == 0 || n_target == 0) throw ValueError("empty source or target pool");
    const std::size_t half = batch_size / 2;

    Rng rng(seed);
    std::vector<std::size_t> sperm(n_source);
    for (std::size_t i = 0; i < n_source; ++i) sperm[i] = i;
    rng.shuffle(sperm);

    std::vector<std::size_t> tseq;
    tseq.reserve(n_source);
    if (n_target >= n_source) {
        std::vector<std::size_t> tperm(n_target);
        for (std::size_t i = 0; i < n_target; ++i) tperm[i] = i;
        rng.shuffle(tperm);
        tseq.assign(tperm.begin(), tperm.begin() + static_cast<long>(n_source));
    } else {
        for (std::size_t i = 0; i < n_source; ++i) tseq.push_back(rng.below(n_target));
    }

    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> plan;
    for (std::size_t pos = 0; pos < n_source; pos += half) {
        const std::size_t take = std::min(half, n_source - pos);
        plan.emplace_back(
            std::vector<std::size_t>(sperm.begin() + static_cast<long>(pos),
                                     sperm.begin() + static_cast<long>(pos + take)),
            std::vector<std::size_t>(tseq.begin() + static_cast<long>(pos),
                                     tseq.begin() + static_cast<long>(pos + take)));
    }
    return plan;
}

PatchBatch gather_patches(const PatchBatch& batch, const std::vector<std::size_t>& idx) {
    PatchBatch out;
    out.domain = batch.domain;
    out.patch = batch.patch;
    const std::size_t per = batch.patches.numel() / batch.size();
    std::vector<std::size_t> shape = batch.patches.shape;
    shape[0] = idx.size();
    out.patches = Tensor(std::move(shape));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(batch.patches.values.data() + idx[i] * per, per,
                    out.patches.values.data() + i * per);
        if (batch.domain == Domain::Source) out.labels.push_back(batch.labels[idx[i]]);
    }
    return out;
}

BatchIter::BatchIter(const PatchBatch& source, const PatchBatch& target,
                     std::size_t batch_size, std::uint64_t seed)
    : source_(source),
      target_(target),
      plan_(batch_index_plan(source.size(), target.size(), batch_size, seed)) {}

std::optional<BatchIter::Pair> BatchIter::next() {
    if (cursor_ >= plan_.size()) return std::nullopt;
    const auto& [sidx, tidx] = plan_[cursor_++];
    return Pair{gather_patches(source_, sidx), gather_patches(target_, tidx)};
}

}  // namespace soda2
