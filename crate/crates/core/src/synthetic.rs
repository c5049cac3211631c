//! Synthetic scenes with analytically known geometry and labels.
//!
//! [`SphereScene`] ray-casts spheres in front of a backdrop plane. It produces
//! the per-view images and label maps an upstream segmenter would, the
//! pixel-aligned Gaussians a feed-forward predictor would, and exact object
//! masks for any camera. The random generators feed oracle and benchmark
//! runs.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::bank::{build_bank, label_image, MemoryBank, ViewEmbedding};
use crate::scene::{Embedding, FeatureMap, Label, LabelMap, PinholeCamera, SemanticGaussian};

/// Pixel-aligned splat size relative to the pixel footprint at its depth.
const FOOTPRINT_SIGMA: f64 = 0.25;
/// Surfel thickness relative to its tangent extent.
const SURFEL_THICKNESS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    /// Label the upstream tracker assigns; arbitrary non-zero values.
    pub label: Label,
    pub color: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Sphere index, `None` for the backdrop.
    pub object: Option<usize>,
    pub point: Vector3<f64>,
    pub color: [f32; 3],
}

/// Spheres in front of the plane `z = backdrop_z`, with two input views and
/// one held-out view between them.
#[derive(Debug, Clone)]
pub struct SphereScene {
    pub spheres: Vec<Sphere>,
    pub backdrop_z: f64,
    pub inputs: Vec<PinholeCamera>,
    pub held_out: PinholeCamera,
}

impl SphereScene {
    /// Three separated spheres; the held-out camera sits at the midpoint of
    /// the two input cameras.
    pub fn three_objects(width: u32, height: u32) -> Self {
        let spheres = vec![
            Sphere { center: [-1.1, -0.3, 0.2], radius: 0.45, label: 7, color: [0.85, 0.2, 0.15] },
            Sphere { center: [0.0, 0.25, -0.2], radius: 0.5, label: 42, color: [0.2, 0.7, 0.25] },
            Sphere { center: [1.1, -0.1, 0.4], radius: 0.45, label: 99, color: [0.2, 0.3, 0.9] },
        ];
        let f = 0.866 * f64::from(width);
        let target = [0.0, 0.0, 0.5];
        let up = [0.0, -1.0, 0.0];
        let cam = |eye: [f64; 3]| PinholeCamera::look_at(eye, target, up, f, f, width, height).unwrap();
        Self {
            spheres,
            backdrop_z: 2.5,
            inputs: vec![cam([-0.25, -0.05, -3.0]), cam([0.25, 0.05, -3.0])],
            held_out: cam([0.0, 0.0, -3.0]),
        }
    }

    pub fn raycast(&self, cam: &PinholeCamera, x: u32, y: u32) -> Option<Hit> {
        let origin = cam.center();
        let dir = cam.ray_direction(f64::from(x), f64::from(y));
        let mut best: Option<(f64, usize)> = None;
        for (i, s) in self.spheres.iter().enumerate() {
            let oc = origin - Vector3::from(s.center);
            let b = oc.dot(&dir);
            let c = oc.norm_squared() - s.radius * s.radius;
            let disc = b * b - c;
            if disc < 0.0 {
                continue;
            }
            let t = -b - disc.sqrt();
            if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
        if let Some((t, i)) = best {
            let s = &self.spheres[i];
            let point = origin + dir * t;
            let normal = (point - Vector3::from(s.center)) / s.radius;
            let light = Vector3::new(-0.4, -0.6, -0.7).normalize();
            let shade = (0.35 + 0.65 * normal.dot(&light).max(0.0)) as f32;
            return Some(Hit {
                object: Some(i),
                point,
                color: s.color.map(|c| c * shade),
            });
        }
        if dir.z <= 0.0 {
            return None;
        }
        let t = (self.backdrop_z - origin.z) / dir.z;
        if t <= 0.0 {
            return None;
        }
        let point = origin + dir * t;
        let u = point.x as f32;
        let v = point.y as f32;
        Some(Hit {
            object: None,
            point,
            color: [
                0.55 + 0.15 * (1.3 * u).sin(),
                0.5 + 0.12 * (0.9 * v).cos(),
                0.45 + 0.1 * (0.7 * (u + v)).sin(),
            ],
        })
    }

    /// Tracker-namespace labels as seen from `cam`; 0 for the backdrop.
    pub fn label_map(&self, cam: &PinholeCamera) -> LabelMap {
        let labels = pixels(cam)
            .map(|(x, y)| match self.raycast(cam, x, y).and_then(|h| h.object) {
                Some(i) => self.spheres[i].label,
                None => 0,
            })
            .collect();
        LabelMap::new(cam.width, cam.height, labels).unwrap()
    }

    /// Exact visibility mask of sphere `object` from `cam`.
    pub fn object_mask(&self, cam: &PinholeCamera, object: usize) -> Vec<bool> {
        pixels(cam)
            .map(|(x, y)| self.raycast(cam, x, y).and_then(|h| h.object) == Some(object))
            .collect()
    }

    pub fn image(&self, cam: &PinholeCamera) -> FeatureMap {
        let values = pixels(cam)
            .map(|(x, y)| self.raycast(cam, x, y).map_or([0.0; 3], |h| h.color))
            .collect();
        FeatureMap::new(cam.width, cam.height, values).unwrap()
    }

    /// One opaque surfel per input pixel, view-major and row-major, placed
    /// on the visible surface with the pixel's color. Features are zero
    /// until assigned from the label images.
    pub fn pixel_aligned_gaussians(&self) -> Vec<SemanticGaussian> {
        self.surfels(FOOTPRINT_SIGMA, SURFEL_THICKNESS)
    }

    #[doc(hidden)]
    pub fn surfels(&self, footprint: f64, thickness: f64) -> Vec<SemanticGaussian> {
        let mut out = Vec::new();
        for cam in &self.inputs {
            for (x, y) in pixels(cam) {
                let hit = self.raycast(cam, x, y).expect("backdrop covers every input pixel");
                let normal = match hit.object {
                    Some(i) => (hit.point - Vector3::from(self.spheres[i].center)).normalize(),
                    None => Vector3::new(0.0, 0.0, -1.0),
                };
                let view = (hit.point - cam.center()).normalize();
                let sigma = footprint * cam.to_camera(hit.point).z / cam.fx;
                out.push(surfel(hit.point, normal, view, sigma, thickness, hit.color));
            }
        }
        out
    }
}

/// Flat Gaussian tangent to the surface, stretched along the direction the
/// source view foreshortens so it covers the pixel's surface patch.
fn surfel(
    point: Vector3<f64>,
    normal: Vector3<f64>,
    view: Vector3<f64>,
    sigma: f64,
    thickness: f64,
    color: [f32; 3],
) -> SemanticGaussian {
    let cos = normal.dot(&view).abs();
    let along = view - normal * normal.dot(&view);
    let a = if along.norm() > 1e-9 {
        along.normalize()
    } else {
        normal.cross(&Vector3::x()).try_normalize(1e-9).unwrap_or_else(|| normal.cross(&Vector3::y()).normalize())
    };
    let b = normal.cross(&a);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[a, b, normal]));
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let scale = [sigma / cos.max(0.25), sigma, sigma * thickness].map(|s| s as f32);
    SemanticGaussian::new(
        point.map(|v| v as f32).into(),
        scale,
        [q.w, q.i, q.j, q.k].map(|c| c as f32),
        1.0,
        color,
        [0.0; 3],
    )
    .unwrap()
}

fn pixels(cam: &PinholeCamera) -> impl Iterator<Item = (u32, u32)> {
    let (w, h) = (cam.width, cam.height);
    (0..h).flat_map(move |y| (0..w).map(move |x| (x, y)))
}

fn random_rotation(rng: &mut Xoshiro256PlusPlus) -> [f32; 4] {
    loop {
        let q: [f32; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|c| c * c).sum::<f32>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return q.map(|c| c / n);
        }
    }
}

/// Random scene of `count` Gaussians around the origin and a random camera
/// looking at it.
pub fn random_scene(seed: u64, count: usize, width: u32, height: u32) -> (Vec<SemanticGaussian>, PinholeCamera) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let phi = rng.random_range(-0.6..0.6f64);
    let dist = rng.random_range(3.0..4.5);
    let eye = [dist * phi.cos() * theta.cos(), dist * phi.sin(), dist * phi.cos() * theta.sin()];
    let f = rng.random_range(0.6..1.2) * f64::from(width);
    let cam = PinholeCamera::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0], f, f, width, height).unwrap();
    let gaussians = (0..count)
        .map(|_| {
            let mean: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.2..1.2));
            let scale: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.02..0.25));
            SemanticGaussian::new(
                mean,
                scale,
                random_rotation(&mut rng),
                rng.random_range(0.05..1.0),
                std::array::from_fn(|_| rng.random_range(0.0..=1.0)),
                std::array::from_fn(|_| rng.random_range(0.0..=1.0)),
            )
            .unwrap()
        })
        .collect();
    (gaussians, cam)
}

/// Throughput scene: `count` small Gaussians spread through the view
/// frustum at depths 2..8, each a few pixels across on screen.
pub fn benchmark_scene(seed: u64, count: usize, width: u32, height: u32) -> (Vec<SemanticGaussian>, PinholeCamera) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let f = 0.9 * f64::from(width);
    #[rustfmt::skip]
    let identity = [
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ];
    let cam = PinholeCamera::new(
        f,
        f,
        f64::from(width) / 2.0,
        f64::from(height) / 2.0,
        width,
        height,
        identity,
    )
    .unwrap();
    let ids = crate::bank::generate_ids(256, seed).unwrap();
    let gaussians = (0..count)
        .map(|_| {
            let z = rng.random_range(2.0..8.0f64);
            let u = rng.random_range(0.0..f64::from(width));
            let v = rng.random_range(0.0..f64::from(height));
            let mean = [((u - cam.cx) * z / f) as f32, ((v - cam.cy) * z / f) as f32, z as f32];
            let px = rng.random_range(0.5..2.5f64);
            let s = (px * z / f) as f32;
            SemanticGaussian::new(
                mean,
                [s, s * rng.random_range(0.5..1.0f32), s * rng.random_range(0.5..1.0f32)],
                random_rotation(&mut rng),
                rng.random_range(0.3..1.0),
                std::array::from_fn(|_| rng.random_range(0.0..=1.0)),
                ids[rng.random_range(0..ids.len())],
            )
            .unwrap()
        })
        .collect();
    (gaussians, cam)
}

/// Random unit vector.
pub fn random_unit(rng: &mut Xoshiro256PlusPlus, dim: usize) -> Embedding {
    loop {
        let e = Embedding((0..dim).map(|_| rng.random_range(-1.0..1.0f32)).collect());
        if e.norm() > 1e-3 {
            return e.normalized();
        }
    }
}

/// Query workload: a bank of `labels` objects over `views` views with
/// random embeddings, and a feature map tiling the image into one block per
/// label with small jitter around each ID, as a render would produce.
pub fn query_workload(seed: u64, labels: usize, views: usize, dim: usize, width: u32, height: u32) -> (FeatureMap, MemoryBank) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let cols = (labels as f64).sqrt().ceil() as u32;
    let rows = (labels as u32).div_ceil(cols);
    let map_labels = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (c, r) = (x * cols / width, y * rows / height);
            let l = r * cols + c;
            if (l as usize) < labels {
                l as Label + 1
            } else {
                0
            }
        })
        .collect();
    let map = LabelMap::new(width, height, map_labels).unwrap();
    let records: Vec<ViewEmbedding> = (1..=labels as Label)
        .flat_map(|label| (0..views).map(move |view| (view, label)))
        .map(|(view, label)| ViewEmbedding { view, label, embedding: random_unit(&mut rng, dim) })
        .collect();
    let maps = vec![map.clone(); views];
    let bank = build_bank(&maps, &records, dim, seed).unwrap();
    let spacing = crate::bank::lattice_spacing(bank.lattice_m()).unwrap_or(1.0);
    let jitter = spacing * 0.1;
    let mut fm = label_image(&map, &bank).unwrap();
    for v in fm.values.iter_mut() {
        for c in v.iter_mut() {
            *c += rng.random_range(-jitter..jitter);
        }
    }
    (fm, bank)
}
