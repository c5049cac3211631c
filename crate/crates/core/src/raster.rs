//! Projection of semantic Gaussians and front-to-back compositing of color
//! and semantic feature channels.
//!
//! Two renderers share the same per-splat arithmetic:
//!
//! * [`render_reference`] walks every projected splat for every pixel. It is
//!   slow and exists as the correctness oracle.
//! * [`render_tiled`] bins splats into screen tiles, composites tiles in
//!   parallel and stops a pixel once its transmittance falls below
//!   [`TRANSMITTANCE_EPSILON`].
//!
//! For a pixel `v` the feature channel is
//! `F(v) = sum_i f_i * a_i * prod_{j<i} (1 - a_j)` over splats sorted by
//! camera depth, with `a_i = o_i * G2d_i(v)`. Color uses the same recurrence.

use nalgebra::{Matrix2x3, Vector3};
use rayon::prelude::*;

use crate::scene::{covariance_of, FeatureMap, PinholeCamera, SemanticGaussian};

pub const ALPHA_MAX: f32 = 0.99;
/// Contributions below this are skipped entirely.
pub const ALPHA_MIN: f32 = 1.0 / 255.0;
/// Screen-space anti-aliasing floor added to every 2D covariance, in px².
pub const COV2D_REGULARIZATION: f64 = 0.3;
pub const TRANSMITTANCE_EPSILON: f32 = 1e-4;
pub const DEFAULT_TILE_SIZE: u32 = 16;
pub const DEFAULT_NEAR: f64 = 0.01;

/// A Gaussian after projection to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: [f32; 2],
    /// Regularized 2D covariance `(xx, xy, yy)`, px².
    pub cov2d: [f32; 3],
    /// Inverse of `cov2d`, `(xx, xy, yy)`.
    pub conic: [f32; 3],
    pub depth: f32,
    pub opacity: f32,
    pub color: [f32; 3],
    pub feature: [f32; 3],
}

impl ProjectedGaussian {
    /// Half extents (x, y) of the axis-aligned box outside of which
    /// [`alpha_at`] is guaranteed to return zero. `None` when the splat can
    /// never reach the skip threshold.
    pub fn cutoff_extent(&self) -> Option<[f32; 2]> {
        let peak = self.opacity.min(ALPHA_MAX);
        if peak < ALPHA_MIN {
            return None;
        }
        // o * exp(-q/2) >= 1/255  <=>  q <= 2 ln(255 o). The ellipse q <= k²
        // has x half-width k*sqrt(cov_xx).
        let k2 = 2.0 * (f64::from(peak) / f64::from(ALPHA_MIN)).ln();
        let k = k2.max(0.0).sqrt();
        // One extra pixel absorbs rounding in the f32 evaluation.
        Some([
            (k * f64::from(self.cov2d[0]).sqrt() + 1.0) as f32,
            (k * f64::from(self.cov2d[2]).sqrt() + 1.0) as f32,
        ])
    }
}

/// Projects `g` through `cam`. Returns `None` (culled) when the camera-space
/// depth is at or in front of `near`.
pub fn project(g: &SemanticGaussian, cam: &PinholeCamera, near: f64) -> Option<ProjectedGaussian> {
    let w = cam.rotation();
    let p = w * Vector3::from(g.mean.map(f64::from)) + cam.translation();
    if p.z <= near {
        return None;
    }
    let z = p.z;
    let mean2d = [cam.fx * p.x / z + cam.cx, cam.fy * p.y / z + cam.cy];

    #[rustfmt::skip]
    let j = Matrix2x3::new(
        cam.fx / z, 0.0, -cam.fx * p.x / (z * z),
        0.0, cam.fy / z, -cam.fy * p.y / (z * z),
    );
    let t = j * w;
    let cov = t * covariance_of(g) * t.transpose();
    let a = cov[(0, 0)] + COV2D_REGULARIZATION;
    let b = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    let c = cov[(1, 1)] + COV2D_REGULARIZATION;
    let det = a * c - b * b;
    if det.is_nan() || det <= 0.0 {
        return None;
    }
    Some(ProjectedGaussian {
        mean2d: mean2d.map(|v| v as f32),
        cov2d: [a as f32, b as f32, c as f32],
        conic: [(c / det) as f32, (-b / det) as f32, (a / det) as f32],
        depth: z as f32,
        opacity: g.opacity,
        color: g.color,
        feature: g.feature,
    })
}

/// Opacity contribution of `p` at pixel center `v`, clamped to
/// [`ALPHA_MAX`] and zeroed below [`ALPHA_MIN`].
#[inline]
pub fn alpha_at(p: &ProjectedGaussian, v: [f32; 2]) -> f32 {
    let dx = v[0] - p.mean2d[0];
    let dy = v[1] - p.mean2d[1];
    let power = -0.5 * (p.conic[0] * dx * dx + 2.0 * p.conic[1] * dx * dy + p.conic[2] * dy * dy);
    if power > 0.0 {
        return 0.0;
    }
    let alpha = (p.opacity * power.exp()).min(ALPHA_MAX);
    if alpha < ALPHA_MIN {
        0.0
    } else {
        alpha
    }
}

/// Stable argsort by ascending depth.
pub fn sort_by_depth(depths: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..depths.len()).collect();
    order.sort_by(|&a, &b| depths[a].total_cmp(&depths[b]));
    order
}

/// Projects, culls and depth-sorts a scene for one camera.
pub fn prepare(gaussians: &[SemanticGaussian], cam: &PinholeCamera, near: f64) -> Vec<ProjectedGaussian> {
    let projected: Vec<ProjectedGaussian> = gaussians
        .par_iter()
        .filter_map(|g| project(g, cam, near))
        .collect();
    let depths: Vec<f32> = projected.iter().map(|p| p.depth).collect();
    sort_by_depth(&depths)
        .into_iter()
        .map(|i| projected[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub rgb: FeatureMap,
    pub feature: FeatureMap,
    /// Accumulated opacity `1 - T`.
    pub alpha: Vec<f32>,
}

impl RenderOutput {
    fn blank(width: u32, height: u32) -> Self {
        Self {
            rgb: FeatureMap::filled(width, height, [0.0; 3]),
            feature: FeatureMap::filled(width, height, [0.0; 3]),
            alpha: vec![0.0; width as usize * height as usize],
        }
    }

    /// Largest per-channel absolute difference across rgb, feature and alpha.
    pub fn max_abs_diff(&self, other: &RenderOutput) -> f32 {
        let maps = self
            .rgb
            .values
            .iter()
            .zip(&other.rgb.values)
            .chain(self.feature.values.iter().zip(&other.feature.values));
        let channels = maps
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0f32, f32::max);
        self.alpha
            .iter()
            .zip(&other.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(channels, f32::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub tile_size: u32,
    pub near: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            near: DEFAULT_NEAR,
        }
    }
}

/// Running compositing state of a single pixel.
#[derive(Clone, Copy)]
struct PixelAccum {
    rgb: [f32; 3],
    feature: [f32; 3],
    transmittance: f32,
}

impl PixelAccum {
    const EMPTY: Self = Self {
        rgb: [0.0; 3],
        feature: [0.0; 3],
        transmittance: 1.0,
    };

    /// One front-to-back step. Both renderers go through here so their
    /// arithmetic is identical.
    #[inline(always)]
    fn blend(&mut self, p: &ProjectedGaussian, alpha: f32) {
        let w = alpha * self.transmittance;
        for c in 0..3 {
            self.rgb[c] += p.color[c] * w;
            self.feature[c] += p.feature[c] * w;
        }
        self.transmittance *= 1.0 - alpha;
    }
}

#[inline]
fn pixel_center(x: u32, y: u32) -> [f32; 2] {
    [x as f32, y as f32]
}

/// Oracle renderer: every pixel composites every projected splat in depth
/// order, with no binning and no early exit.
pub fn render_reference(gaussians: &[SemanticGaussian], cam: &PinholeCamera) -> RenderOutput {
    render_reference_with(gaussians, cam, DEFAULT_NEAR)
}

pub fn render_reference_with(gaussians: &[SemanticGaussian], cam: &PinholeCamera, near: f64) -> RenderOutput {
    let sorted = prepare(gaussians, cam, near);
    let mut out = RenderOutput::blank(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let v = pixel_center(x, y);
            let mut acc = PixelAccum::EMPTY;
            for p in &sorted {
                let alpha = alpha_at(p, v);
                if alpha > 0.0 {
                    acc.blend(p, alpha);
                }
            }
            let i = (y * cam.width + x) as usize;
            out.rgb.values[i] = acc.rgb;
            out.feature.values[i] = acc.feature;
            out.alpha[i] = 1.0 - acc.transmittance;
        }
    }
    out
}

/// Compositing weights `a_i * prod_{j<i}(1 - a_j)` at pixel `(x, y)` for an
/// already depth-sorted list, as `(index, weight)` pairs for every splat
/// that contributes.
pub fn compositing_weights(sorted: &[ProjectedGaussian], x: u32, y: u32) -> Vec<(usize, f32)> {
    let v = pixel_center(x, y);
    let mut t = 1.0f32;
    let mut weights = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        let alpha = alpha_at(p, v);
        if alpha > 0.0 {
            weights.push((i, alpha * t));
            t *= 1.0 - alpha;
        }
    }
    weights
}

/// Splat indices per tile, in depth order (CSR layout).
struct TileBins {
    tiles_x: u32,
    tiles_y: u32,
    offsets: Vec<u32>,
    entries: Vec<u32>,
    /// Inclusive pixel box `[x0, x1, y0, y1]` of each splat's cutoff.
    boxes: Vec<[u32; 4]>,
}

impl TileBins {
    fn build(sorted: &[ProjectedGaussian], width: u32, height: u32, tile: u32) -> Self {
        let tiles_x = width.div_ceil(tile);
        let tiles_y = height.div_ceil(tile);
        let boxes: Vec<Option<[u32; 4]>> = sorted.par_iter().map(|p| pixel_box(p, width, height)).collect();
        let ranges: Vec<Option<[u32; 4]>> = boxes
            .iter()
            .map(|b| b.map(|[x0, x1, y0, y1]| [x0 / tile, x1 / tile, y0 / tile, y1 / tile]))
            .collect();

        let mut counts = vec![0u32; (tiles_x * tiles_y) as usize + 1];
        for [x0, x1, y0, y1] in ranges.iter().flatten() {
            for ty in *y0..=*y1 {
                for tx in *x0..=*x1 {
                    counts[(ty * tiles_x + tx) as usize + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut entries = vec![0u32; *offsets.last().unwrap() as usize];
        // Walking splats in depth order keeps every tile list depth-sorted.
        for (i, range) in ranges.iter().enumerate() {
            let Some([x0, x1, y0, y1]) = *range else { continue };
            for ty in y0..=y1 {
                for tx in x0..=x1 {
                    let t = (ty * tiles_x + tx) as usize;
                    entries[cursor[t] as usize] = i as u32;
                    cursor[t] += 1;
                }
            }
        }
        Self {
            tiles_x,
            tiles_y,
            offsets,
            entries,
            boxes: boxes.into_iter().map(|b| b.unwrap_or_default()).collect(),
        }
    }

    fn tile(&self, t: usize) -> &[u32] {
        &self.entries[self.offsets[t] as usize..self.offsets[t + 1] as usize]
    }
}

/// Inclusive pixel box `[x0, x1, y0, y1]` covered by the splat's cutoff,
/// clipped to the image.
fn pixel_box(p: &ProjectedGaussian, width: u32, height: u32) -> Option<[u32; 4]> {
    let [ex, ey] = p.cutoff_extent()?;
    let min_x = (p.mean2d[0] - ex).ceil().max(0.0);
    let max_x = (p.mean2d[0] + ex).floor().min(width as f32 - 1.0);
    let min_y = (p.mean2d[1] - ey).ceil().max(0.0);
    let max_y = (p.mean2d[1] + ey).floor().min(height as f32 - 1.0);
    if !(min_x <= max_x && min_y <= max_y) {
        return None;
    }
    Some([min_x as u32, max_x as u32, min_y as u32, max_y as u32])
}

/// Fast renderer: tile binning, per-tile depth order, early termination.
pub fn render_tiled(gaussians: &[SemanticGaussian], cam: &PinholeCamera, tile_size: u32) -> RenderOutput {
    render_with(
        gaussians,
        cam,
        &RenderOptions {
            tile_size,
            ..RenderOptions::default()
        },
    )
}

pub fn render_with(gaussians: &[SemanticGaussian], cam: &PinholeCamera, opts: &RenderOptions) -> RenderOutput {
    let sorted = prepare(gaussians, cam, opts.near);
    render_prepared(&sorted, cam.width, cam.height, opts.tile_size)
}

/// Tiled compositing of an already projected and depth-sorted splat list.
pub fn render_prepared(sorted: &[ProjectedGaussian], width: u32, height: u32, tile_size: u32) -> RenderOutput {
    assert!(tile_size >= 1, "tile_size must be at least 1");
    let bins = TileBins::build(sorted, width, height, tile_size);
    let tile_count = (bins.tiles_x * bins.tiles_y) as usize;

    let tiles: Vec<Vec<PixelAccum>> = (0..tile_count)
        .into_par_iter()
        .map(|t| {
            let tx = t as u32 % bins.tiles_x;
            let ty = t as u32 / bins.tiles_x;
            let x0 = tx * tile_size;
            let y0 = ty * tile_size;
            let x1 = (x0 + tile_size).min(width);
            let y1 = (y0 + tile_size).min(height);
            let tw = x1 - x0;
            let mut pixels = vec![PixelAccum::EMPTY; (tw * (y1 - y0)) as usize];
            let mut done = vec![false; pixels.len()];
            let mut live = pixels.len();
            // Splat-major within the tile; each pixel still sees splats in
            // depth order, and outside its box a splat's alpha is zero.
            for &i in bins.tile(t) {
                let p = &sorted[i as usize];
                let [bx0, bx1, by0, by1] = bins.boxes[i as usize];
                for y in by0.max(y0)..=by1.min(y1 - 1) {
                    let row = ((y - y0) * tw) as usize;
                    for x in bx0.max(x0)..=bx1.min(x1 - 1) {
                        let k = row + (x - x0) as usize;
                        if done[k] {
                            continue;
                        }
                        let alpha = alpha_at(p, pixel_center(x, y));
                        if alpha > 0.0 {
                            pixels[k].blend(p, alpha);
                            if pixels[k].transmittance < TRANSMITTANCE_EPSILON {
                                done[k] = true;
                                live -= 1;
                            }
                        }
                    }
                }
                if live == 0 {
                    break;
                }
            }
            pixels
        })
        .collect();

    let mut out = RenderOutput::blank(width, height);
    for (t, pixels) in tiles.into_iter().enumerate() {
        let tx = t as u32 % bins.tiles_x;
        let ty = t as u32 / bins.tiles_x;
        let x0 = tx * tile_size;
        let y0 = ty * tile_size;
        let tw = (x0 + tile_size).min(width) - x0;
        for (k, acc) in pixels.into_iter().enumerate() {
            let x = x0 + k as u32 % tw;
            let y = y0 + k as u32 / tw;
            let i = (y * width + x) as usize;
            out.rgb.values[i] = acc.rgb;
            out.feature.values[i] = acc.feature;
            out.alpha[i] = 1.0 - acc.transmittance;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis_camera(width: u32, height: u32) -> PinholeCamera {
        #[rustfmt::skip]
        let identity = [
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        PinholeCamera::new(100.0, 100.0, 50.0, 50.0, width, height, identity).unwrap()
    }

    fn splat(mean: [f32; 3], sigma: f32, opacity: f32, feature: [f32; 3]) -> SemanticGaussian {
        SemanticGaussian::isotropic(mean, sigma, opacity, feature, feature).unwrap()
    }

    #[test]
    fn projects_principal_point() {
        let cam = axis_camera(100, 100);
        let p = project(&splat([0.0, 0.0, 1.0], 0.01, 1.0, [0.0; 3]), &cam, DEFAULT_NEAR).unwrap();
        assert_eq!(p.mean2d, [50.0, 50.0]);
        assert_eq!(p.depth, 1.0);
    }

    #[test]
    fn isotropic_covariance_on_axis() {
        let cam = axis_camera(100, 100);
        let (sigma, d) = (0.05f32, 2.0f64);
        let p = project(&splat([0.0, 0.0, d as f32], sigma, 1.0, [0.0; 3]), &cam, DEFAULT_NEAR).unwrap();
        // On the axis J = diag(f/d, f/d, .) and the z column is zero.
        let expected = (100.0 * f64::from(sigma) / d).powi(2) + COV2D_REGULARIZATION;
        assert_abs_diff_eq!(f64::from(p.cov2d[0]), expected, epsilon = 1e-5);
        assert_abs_diff_eq!(f64::from(p.cov2d[2]), expected, epsilon = 1e-5);
        assert_abs_diff_eq!(p.cov2d[1], 0.0, epsilon = 1e-7);
    }

    #[test]
    fn culls_behind_camera() {
        let cam = axis_camera(10, 10);
        assert!(project(&splat([0.0, 0.0, -1.0], 0.1, 1.0, [0.0; 3]), &cam, DEFAULT_NEAR).is_none());
        assert!(project(&splat([0.0, 0.0, DEFAULT_NEAR as f32], 0.1, 1.0, [0.0; 3]), &cam, DEFAULT_NEAR).is_none());
    }

    fn unit_projected(opacity: f32) -> ProjectedGaussian {
        ProjectedGaussian {
            mean2d: [3.0, 4.0],
            cov2d: [1.0, 0.0, 1.0],
            conic: [1.0, 0.0, 1.0],
            depth: 1.0,
            opacity,
            color: [0.0; 3],
            feature: [0.0; 3],
        }
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_at(&unit_projected(0.5), [3.0, 4.0]), 0.5);
        assert_eq!(alpha_at(&unit_projected(1.0), [3.0, 4.0]), ALPHA_MAX);
        let a = alpha_at(&unit_projected(1.0), [5.0, 4.0]);
        assert_abs_diff_eq!(a, (-2.0f32).exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(a, 0.135_335_28, epsilon = 1e-6);
        // Far away drops below 1/255 and is skipped.
        assert_eq!(alpha_at(&unit_projected(1.0), [7.0, 4.0]), 0.0);
    }

    #[test]
    fn cutoff_extent_bounds_support() {
        let p = unit_projected(1.0);
        let [ex, _] = p.cutoff_extent().unwrap();
        let k = (2.0 * (0.99f32 * 255.0).ln()).sqrt();
        assert!(ex >= k);
        assert!(alpha_at(&p, [3.0 + ex, 4.0]) == 0.0);
        assert!(unit_projected(0.001).cutoff_extent().is_none());
    }

    #[test]
    fn sort_examples() {
        assert_eq!(sort_by_depth(&[3.0, 1.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(sort_by_depth(&[1.0, 1.0]), vec![0, 1]);
    }

    #[test]
    fn empty_scene_renders_zero() {
        let cam = axis_camera(8, 8);
        let out = render_reference(&[], &cam);
        assert!(out.feature.values.iter().all(|v| *v == [0.0; 3]));
        assert!(out.alpha.iter().all(|&a| a == 0.0));
        assert_eq!(render_tiled(&[], &cam, 4), out);
    }

    #[test]
    fn single_splat_center_pixel() {
        let cam = axis_camera(100, 100);
        let g = splat([0.0, 0.0, 1.0], 0.02, 1.0, [1.0, 0.0, 0.0]);
        let out = render_reference(&[g], &cam);
        assert_eq!(out.feature.get(50, 50), [0.99, 0.0, 0.0]);
        assert_abs_diff_eq!(out.alpha[50 * 100 + 50], 0.99, epsilon = 1e-7);
    }

    #[test]
    fn two_coincident_splats() {
        let cam = axis_camera(100, 100);
        let front = splat([0.0, 0.0, 1.0], 0.02, 0.5, [1.0, 0.0, 0.0]);
        let back = splat([0.0, 0.0, 2.0], 0.04, 0.5, [0.0, 1.0, 0.0]);
        // front: 0.5 * 1; back: 0.5 * (1 - 0.5).
        for out in [
            render_reference(&[back, front], &cam),
            render_tiled(&[back, front], &cam, 16),
        ] {
            assert_eq!(out.feature.get(50, 50), [0.5, 0.25, 0.0]);
        }
    }

    #[test]
    fn tile_size_equal_to_image_matches_small_tiles() {
        let cam = axis_camera(40, 30);
        let scene: Vec<_> = (0..20)
            .map(|i| {
                let t = i as f32 / 20.0;
                splat([t * 0.3 - 0.15, 0.1 - t * 0.2, 1.0 + t], 0.01 + 0.02 * t, 0.3 + 0.6 * t, [t, 1.0 - t, 0.5])
            })
            .collect();
        let one_tile = render_tiled(&scene, &cam, 64);
        let small = render_tiled(&scene, &cam, 8);
        assert_eq!(one_tile, small);
        assert!(one_tile.max_abs_diff(&render_reference(&scene, &cam)) <= 1e-4);
    }

    #[test]
    fn everything_behind_camera_renders_zero() {
        let cam = axis_camera(16, 16);
        let scene = vec![splat([0.0, 0.0, -2.0], 0.5, 1.0, [1.0; 3]); 4];
        let out = render_tiled(&scene, &cam, 4);
        assert!(out.alpha.iter().all(|&a| a == 0.0));
        assert!(out.rgb.values.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn weights_sum_to_accumulated_alpha() {
        let cam = axis_camera(100, 100);
        let scene = vec![
            splat([0.0, 0.0, 1.0], 0.02, 0.7, [1.0, 0.0, 0.0]),
            splat([0.01, 0.0, 1.5], 0.03, 0.9, [0.0, 1.0, 0.0]),
        ];
        let sorted = prepare(&scene, &cam, DEFAULT_NEAR);
        let out = render_reference(&scene, &cam);
        let w: f32 = compositing_weights(&sorted, 50, 50).iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(w, out.alpha[50 * 100 + 50], epsilon = 1e-6);
        assert!(w <= 1.0);
    }
}
