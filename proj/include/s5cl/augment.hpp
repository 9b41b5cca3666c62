#pragma once

#include <string>
#include <vector>

#include "s5cl/rng.hpp"

namespace s5cl {

// Small H x W x 3 raster with channel values in [0,1], row-major RGB.
// Pixels are stored as float so that container round-trips are bit-exact.
struct ImagePatch {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    ImagePatch() = default;
    ImagePatch(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

    static ImagePatch constant(int h, int w, float value);

    float& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }
    float at(int r, int c, int ch) const { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }
    std::size_t size() const { return pixels.size(); }
};

enum class Strength { weak, strong };
enum class FlipAxis { horizontal, vertical };
enum class CropMode { inception, center };

Strength strength_from_string(const std::string& name);
CropMode crop_mode_from_string(const std::string& name);
const char* to_string(Strength s);
const char* to_string(CropMode m);

struct AugmentationPolicy {
    Strength strength = Strength::weak;
    double color_jitter_magnitude = 0.1;
    double hed_jitter_alpha = 0.05;
    double hed_jitter_beta = 0.01;
    double crop_fraction_min = 0.5;
    double crop_fraction_max = 1.0;
    CropMode crop_mode = CropMode::center;
    double affine_max_rotation_deg = 10.0;
    double affine_max_translate_fraction = 0.1;
    double flip_probability = 0.5;
    bool enable_rotation = true;

    void validate() const;

    static AugmentationPolicy weak_default();
    static AugmentationPolicy strong_default();
};

// Counter-clockwise rotation by 90-degree steps; odd turns require a square image.
ImagePatch rotate90(const ImagePatch& img, int quarter_turns);

ImagePatch flip(const ImagePatch& img, FlipAxis axis);

// Brightness, contrast, saturation, and hue perturbations applied in that fixed
// order, each factor drawn once from the stream.
ImagePatch color_jitter(const ImagePatch& img, Rng& rng, double magnitude);

// Stain-space perturbation: RGB -> optical density -> HED channels, then
// hed' = hed * (1 + a_ch) + b_ch with a ~ U[-alpha, alpha], b ~ U[-beta, beta].
ImagePatch hed_jitter(const ImagePatch& img, Rng& rng, double alpha, double beta);

// Random crop (inception: area fraction + aspect at random position; center:
// centered square of sampled side fraction) followed by bilinear rescale back
// to the original size. Crops smaller than 2x2 are clamped to 2x2.
ImagePatch crop_resize(const ImagePatch& img, Rng& rng, double fraction_min, double fraction_max,
                       CropMode mode);

// Random rotation + translation with inverse-mapped bilinear resampling;
// out-of-bounds samples take the nearest border pixel.
ImagePatch affine(const ImagePatch& img, Rng& rng, double max_rotation_deg,
                  double max_translate_fraction);

// Deterministic core of affine: rotation about the image center followed by a
// translation of (tx, ty) pixels in (column, row) direction.
ImagePatch affine_transform(const ImagePatch& img, double rotation_deg, double tx, double ty);

// weak:   rotate90 -> optional flips -> color_jitter
// strong: rotate90 -> optional flips -> hed_jitter -> crop_resize -> affine
ImagePatch apply_policy(const ImagePatch& img, const AugmentationPolicy& policy, Rng& rng);

// Bilinear resize with the half-pixel source-coordinate convention.
ImagePatch resize_bilinear(const ImagePatch& img, int out_height, int out_width);

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

// Color deconvolution between RGB and the HED stain coordinates via optical
// densities. hed_to_rgb(rgb_to_hed(x)) == x within 1e-6 for channels >= 1e-6
// (darker values hit the optical-density floor).
void rgb_to_hed(double r, double g, double b, double& h, double& e, double& d);
void hed_to_rgb(double h, double e, double d, double& r, double& g, double& b);

} // namespace s5cl
