#include "s5cl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

float clamp01(double v)
{
    return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

double sample_clamped(const ImagePatch& img, double y, double x, int ch)
{
    y = std::min(static_cast<double>(img.height - 1), std::max(0.0, y));
    x = std::min(static_cast<double>(img.width - 1), std::max(0.0, x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const double wy = y - y0;
    const double wx = x - x0;
    const double top = (1.0 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch);
    const double bot = (1.0 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch);
    return (1.0 - wy) * top + wy * bot;
}

// Row-normalized H&E&DAB stain vectors (Ruifrok & Johnston) and the inverse
// used to project optical density onto stain concentrations.
struct StainBasis {
    double rgb_from_hed[3][3]; // row i = unit stain vector i
    double hed_from_rgb[3][3]; // inverse of the above
};

StainBasis make_stain_basis()
{
    StainBasis b{};
    const double raw[3][3] = {{0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, {0.27, 0.57, 0.78}};
    for (int i = 0; i < 3; ++i) {
        const double n = std::sqrt(raw[i][0] * raw[i][0] + raw[i][1] * raw[i][1] + raw[i][2] * raw[i][2]);
        for (int j = 0; j < 3; ++j) b.rgb_from_hed[i][j] = raw[i][j] / n;
    }
    const auto& m = b.rgb_from_hed;
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    const double inv_det = 1.0 / det;
    b.hed_from_rgb[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    b.hed_from_rgb[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    b.hed_from_rgb[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    b.hed_from_rgb[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    b.hed_from_rgb[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    b.hed_from_rgb[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    b.hed_from_rgb[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    b.hed_from_rgb[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    b.hed_from_rgb[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    return b;
}

const StainBasis& stain_basis()
{
    static const StainBasis basis = make_stain_basis();
    return basis;
}

} // namespace

ImagePatch ImagePatch::constant(int h, int w, float value)
{
    ImagePatch img(h, w);
    std::fill(img.pixels.begin(), img.pixels.end(), value);
    return img;
}

Strength strength_from_string(const std::string& name)
{
    if (name == "weak") return Strength::weak;
    if (name == "strong") return Strength::strong;
    fail_invalid("unknown augmentation strength '" + name + "' (expected weak or strong)");
}

CropMode crop_mode_from_string(const std::string& name)
{
    if (name == "inception") return CropMode::inception;
    if (name == "center") return CropMode::center;
    fail_invalid("unknown crop mode '" + name + "' (expected inception or center)");
}

const char* to_string(Strength s) { return s == Strength::weak ? "weak" : "strong"; }
const char* to_string(CropMode m) { return m == CropMode::inception ? "inception" : "center"; }

void AugmentationPolicy::validate() const
{
    if (color_jitter_magnitude < 0 || hed_jitter_alpha < 0 || hed_jitter_beta < 0)
        fail_invalid("augmentation magnitudes must be non-negative");
    if (!(crop_fraction_min > 0) || crop_fraction_max > 1 || crop_fraction_min > crop_fraction_max)
        fail_invalid("crop fractions must satisfy 0 < min <= max <= 1");
    if (affine_max_rotation_deg < 0 || affine_max_translate_fraction < 0)
        fail_invalid("affine magnitudes must be non-negative");
    if (flip_probability < 0 || flip_probability > 1)
        fail_invalid("flip probability must lie in [0,1]");
}

AugmentationPolicy AugmentationPolicy::weak_default()
{
    AugmentationPolicy p;
    p.strength = Strength::weak;
    return p;
}

AugmentationPolicy AugmentationPolicy::strong_default()
{
    AugmentationPolicy p;
    p.strength = Strength::strong;
    return p;
}

ImagePatch rotate90(const ImagePatch& img, int quarter_turns)
{
    if (quarter_turns < 0 || quarter_turns > 3)
        fail_invalid("rotate90: quarter_turns must be in 0..3");
    if (quarter_turns % 2 == 1 && img.height != img.width)
        fail_invalid("rotate90: odd quarter-turns require a square image");
    if (quarter_turns == 0) return img;

    ImagePatch out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                // One counter-clockwise turn sends (r, c) to (W - 1 - c, r);
                // iterating that map gives the half and three-quarter cases.
                if (quarter_turns == 1)
                    out.at(img.width - 1 - c, r, ch) = img.at(r, c, ch);
                else if (quarter_turns == 2)
                    out.at(img.height - 1 - r, img.width - 1 - c, ch) = img.at(r, c, ch);
                else
                    out.at(c, img.height - 1 - r, ch) = img.at(r, c, ch);
            }
    return out;
}

ImagePatch flip(const ImagePatch& img, FlipAxis axis)
{
    ImagePatch out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                if (axis == FlipAxis::horizontal)
                    out.at(r, img.width - 1 - c, ch) = img.at(r, c, ch);
                else
                    out.at(img.height - 1 - r, c, ch) = img.at(r, c, ch);
            }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v)
{
    const double maxc = std::max(r, std::max(g, b));
    const double minc = std::min(r, std::min(g, b));
    v = maxc;
    const double d = maxc - minc;
    s = maxc <= 0.0 ? 0.0 : d / maxc;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    double hp;
    if (maxc == r)
        hp = (g - b) / d;
    else if (maxc == g)
        hp = (b - r) / d + 2.0;
    else
        hp = (r - g) / d + 4.0;
    h = hp / 6.0;
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b)
{
    h -= std::floor(h);
    const double h6 = h * 6.0;
    const int i = std::min(5, static_cast<int>(std::floor(h6)));
    const double f = h6 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
    }
}

ImagePatch color_jitter(const ImagePatch& img, Rng& rng, double magnitude)
{
    if (magnitude < 0) fail_invalid("color_jitter: magnitude must be non-negative");
    const double brightness = rng.uniform(1.0 - magnitude, 1.0 + magnitude);
    const double contrast = rng.uniform(1.0 - magnitude, 1.0 + magnitude);
    const double saturation = rng.uniform(1.0 - magnitude, 1.0 + magnitude);
    const double hue_shift = rng.uniform(-magnitude, magnitude);

    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    std::vector<double> work(img.pixels.begin(), img.pixels.end());

    for (double& v : work) v = std::min(1.0, std::max(0.0, v * brightness));

    double mean_luma = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        mean_luma += 0.299 * work[i * 3] + 0.587 * work[i * 3 + 1] + 0.114 * work[i * 3 + 2];
    mean_luma /= static_cast<double>(std::max<std::size_t>(n, 1));
    for (double& v : work) v = std::min(1.0, std::max(0.0, mean_luma + contrast * (v - mean_luma)));

    for (std::size_t i = 0; i < n; ++i) {
        const double luma = 0.299 * work[i * 3] + 0.587 * work[i * 3 + 1] + 0.114 * work[i * 3 + 2];
        for (int ch = 0; ch < 3; ++ch) {
            double v = luma + saturation * (work[i * 3 + ch] - luma);
            work[i * 3 + ch] = std::min(1.0, std::max(0.0, v));
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        double h, s, v;
        rgb_to_hsv(work[i * 3], work[i * 3 + 1], work[i * 3 + 2], h, s, v);
        hsv_to_rgb(h + hue_shift, s, v, work[i * 3], work[i * 3 + 1], work[i * 3 + 2]);
    }

    ImagePatch out(img.height, img.width);
    for (std::size_t i = 0; i < work.size(); ++i) out.pixels[i] = clamp01(work[i]);
    return out;
}

void rgb_to_hed(double r, double g, double b, double& h, double& e, double& d)
{
    const StainBasis& basis = stain_basis();
    const double od[3] = {-std::log10(std::max(r, 1e-6)), -std::log10(std::max(g, 1e-6)),
                          -std::log10(std::max(b, 1e-6))};
    double hed[3];
    for (int k = 0; k < 3; ++k)
        hed[k] = od[0] * basis.hed_from_rgb[0][k] + od[1] * basis.hed_from_rgb[1][k] +
                 od[2] * basis.hed_from_rgb[2][k];
    h = hed[0];
    e = hed[1];
    d = hed[2];
}

void hed_to_rgb(double h, double e, double d, double& r, double& g, double& b)
{
    const StainBasis& basis = stain_basis();
    const double hed[3] = {h, e, d};
    double* rgb[3] = {&r, &g, &b};
    for (int ch = 0; ch < 3; ++ch) {
        const double od = hed[0] * basis.rgb_from_hed[0][ch] + hed[1] * basis.rgb_from_hed[1][ch] +
                          hed[2] * basis.rgb_from_hed[2][ch];
        *rgb[ch] = clamp01(std::pow(10.0, -od));
    }
}

ImagePatch hed_jitter(const ImagePatch& img, Rng& rng, double alpha, double beta)
{
    if (alpha < 0 || beta < 0) fail_invalid("hed_jitter: alpha and beta must be non-negative");
    double a[3], b[3];
    for (double& v : a) v = rng.uniform(-alpha, alpha);
    for (double& v : b) v = rng.uniform(-beta, beta);

    ImagePatch out(img.height, img.width);
    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    for (std::size_t i = 0; i < n; ++i) {
        double hed[3];
        rgb_to_hed(img.pixels[i * 3], img.pixels[i * 3 + 1], img.pixels[i * 3 + 2], hed[0], hed[1],
                   hed[2]);
        for (int k = 0; k < 3; ++k) hed[k] = hed[k] * (1.0 + a[k]) + b[k];
        double r, g, bl;
        hed_to_rgb(hed[0], hed[1], hed[2], r, g, bl);
        out.pixels[i * 3] = static_cast<float>(r);
        out.pixels[i * 3 + 1] = static_cast<float>(g);
        out.pixels[i * 3 + 2] = static_cast<float>(bl);
    }
    return out;
}

ImagePatch resize_bilinear(const ImagePatch& img, int out_height, int out_width)
{
    if (out_height <= 0 || out_width <= 0) fail_invalid("resize_bilinear: output size must be positive");
    ImagePatch out(out_height, out_width);
    const double sy = static_cast<double>(img.height) / out_height;
    const double sx = static_cast<double>(img.width) / out_width;
    for (int r = 0; r < out_height; ++r)
        for (int c = 0; c < out_width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) =
                    clamp01(sample_clamped(img, (r + 0.5) * sy - 0.5, (c + 0.5) * sx - 0.5, ch));
    return out;
}

ImagePatch crop_resize(const ImagePatch& img, Rng& rng, double fraction_min, double fraction_max,
                       CropMode mode)
{
    if (!(fraction_min > 0) || fraction_max > 1 || fraction_min > fraction_max)
        fail_invalid("crop_resize: fractions must satisfy 0 < min <= max <= 1");

    int crop_h, crop_w, top, left;
    if (mode == CropMode::inception) {
        const double area_fraction = rng.uniform(fraction_min, fraction_max);
        const double aspect = rng.uniform(3.0 / 4.0, 4.0 / 3.0);
        const double target_area = area_fraction * img.height * img.width;
        crop_w = static_cast<int>(std::lround(std::sqrt(target_area * aspect)));
        crop_h = static_cast<int>(std::lround(std::sqrt(target_area / aspect)));
        crop_w = std::min(img.width, std::max(2, crop_w));
        crop_h = std::min(img.height, std::max(2, crop_h));
        top = rng.uniform_int(0, img.height - crop_h);
        left = rng.uniform_int(0, img.width - crop_w);
    } else {
        const double side_fraction = rng.uniform(fraction_min, fraction_max);
        const int limit = std::min(img.height, img.width);
        int side = static_cast<int>(std::lround(side_fraction * limit));
        side = std::min(limit, std::max(2, side));
        crop_h = crop_w = side;
        top = (img.height - side) / 2;
        left = (img.width - side) / 2;
    }

    ImagePatch crop(crop_h, crop_w);
    for (int r = 0; r < crop_h; ++r)
        for (int c = 0; c < crop_w; ++c)
            for (int ch = 0; ch < 3; ++ch) crop.at(r, c, ch) = img.at(top + r, left + c, ch);

    if (crop_h == img.height && crop_w == img.width) return crop;
    return resize_bilinear(crop, img.height, img.width);
}

ImagePatch affine(const ImagePatch& img, Rng& rng, double max_rotation_deg,
                  double max_translate_fraction)
{
    const double rotation_deg = rng.uniform(-max_rotation_deg, max_rotation_deg);
    const double tx = rng.uniform(-max_translate_fraction, max_translate_fraction) * img.width;
    const double ty = rng.uniform(-max_translate_fraction, max_translate_fraction) * img.height;
    return affine_transform(img, rotation_deg, tx, ty);
}

ImagePatch affine_transform(const ImagePatch& img, double rotation_deg, double tx, double ty)
{
    const double theta = rotation_deg * 3.14159265358979323846 / 180.0;
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);

    ImagePatch out(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const double u = c - cx - tx;
            const double v = r - cy - ty;
            const double src_x = cos_t * u + sin_t * v + cx;
            const double src_y = -sin_t * u + cos_t * v + cy;
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = clamp01(sample_clamped(img, src_y, src_x, ch));
        }
    }
    return out;
}

ImagePatch apply_policy(const ImagePatch& img, const AugmentationPolicy& policy, Rng& rng)
{
    policy.validate();
    ImagePatch out = img;
    if (policy.enable_rotation) {
        int turns = img.height == img.width ? rng.uniform_int(0, 3) : 2 * rng.uniform_int(0, 1);
        if (turns != 0) out = rotate90(out, turns);
    }
    if (rng.uniform() < policy.flip_probability) out = flip(out, FlipAxis::horizontal);
    if (rng.uniform() < policy.flip_probability) out = flip(out, FlipAxis::vertical);

    if (policy.strength == Strength::weak) {
        out = color_jitter(out, rng, policy.color_jitter_magnitude);
    } else {
        out = hed_jitter(out, rng, policy.hed_jitter_alpha, policy.hed_jitter_beta);
        out = crop_resize(out, rng, policy.crop_fraction_min, policy.crop_fraction_max, policy.crop_mode);
        out = affine(out, rng, policy.affine_max_rotation_deg, policy.affine_max_translate_fraction);
    }
    return out;
}

} // namespace s5cl
