//! Procedural rendering of a textured ground plane, optionally broken up
//! by textured boxes standing on it: the analytic scene that makes
//! dense-flow and loop-closure claims checkable end to end.

use nalgebra::Vector3;

use crate::geometry::{CameraIntrinsics, Pixel2, PoseSE3};
use crate::imageops::GrayImage;
use crate::reconstruct::DepthMap;

#[derive(Debug, Clone, Copy)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// World-frame y of the ground plane (camera y points down).
    pub ground_y: f64,
    /// Feature size of the base texture octave, in world units.
    pub texture_scale: f64,
    pub octaves: usize,
    pub seed: u64,
    /// Number of boxes standing on the ground; they are placed
    /// deterministically in the region ahead of the origin, so cameras
    /// are expected to stay near it.
    pub pillars: usize,
    /// Rays per pixel axis; n*n samples are averaged. 1 point-samples,
    /// which aliases texture features near the pixel scale.
    pub supersample: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            ground_y: 1.7,
            texture_scale: 1.2,
            octaves: 3,
            seed: 0,
            pillars: 0,
            supersample: 1,
        }
    }
}

fn lattice(seed: u64, ix: i64, iz: i64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iz as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, x: f64, z: f64) -> f64 {
    let ix = x.floor();
    let iz = z.floor();
    let fx = smoothstep(x - ix);
    let fz = smoothstep(z - iz);
    let (ix, iz) = (ix as i64, iz as i64);
    let v00 = lattice(seed, ix, iz);
    let v10 = lattice(seed, ix + 1, iz);
    let v01 = lattice(seed, ix, iz + 1);
    let v11 = lattice(seed, ix + 1, iz + 1);
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fz
}

/// Multi-octave value noise in [0.1, 0.9], a pure function of (seed, x, z).
pub(crate) fn ground_texture(cfg: &RenderConfig, x: f64, z: f64) -> f64 {
    let mut amp = 1.0;
    let mut freq = 1.0 / cfg.texture_scale;
    let mut total = 0.0;
    let mut norm = 0.0;
    for octave in 0..cfg.octaves.max(1) as u64 {
        total += amp * value_noise(cfg.seed.wrapping_add(octave), x * freq, z * freq);
        norm += amp;
        amp *= 0.55;
        freq *= 2.1;
    }
    0.1 + 0.8 * (total / norm)
}

#[derive(Debug, Clone, Copy)]
struct Pillar {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    seed: u64,
}

/// Box placement as a pure function of the config: jittered positions in
/// x in [-3, 3], z in [1.3, 6], widths 0.15-0.4, heights 0.4-1.3.
fn build_pillars(cfg: &RenderConfig) -> Vec<Pillar> {
    (0..cfg.pillars)
        .map(|i| {
            let s = cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(0x51AB_C0DE);
            let h = |j: i64| lattice(s, j, i as i64);
            let cx = -3.0 + 6.0 * h(0);
            let cz = 1.3 + 4.7 * h(1);
            let half = 0.15 + 0.25 * h(2);
            let height = 0.4 + 0.9 * h(3);
            Pillar {
                lo: Vector3::new(cx - half, cfg.ground_y - height, cz - half),
                hi: Vector3::new(cx + half, cfg.ground_y, cz + half),
                seed: s.wrapping_add(i as u64),
            }
        })
        .collect()
}

/// Slab intersection; returns the entry parameter and the axis of the
/// face crossed there. Rays starting inside the box miss it.
fn ray_box(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> Option<(f64, usize)> {
    let mut t_near = -f64::INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for a in 0..3 {
        if dir[a].abs() < 1e-12 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut t0, mut t1) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            axis = a;
        }
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    (t_near > 1e-9).then_some((t_near, axis))
}

/// Per-face shading multipliers give the boxes crisp vertical edges.
const FACE_LIGHT: [f64; 3] = [0.80, 1.0, 0.62];

fn shade_pixel(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    cfg: &RenderConfig,
    pillars: &[Pillar],
) -> (f64, Option<f64>) {
    let mut best = f64::INFINITY;
    let mut on_ground = false;
    // y points down, so the ground below is reached along positive dir.y.
    if dir.y > 1e-9 {
        let t = (cfg.ground_y - origin.y) / dir.y;
        if t > 0.0 {
            best = t;
            on_ground = true;
        }
    }
    let mut hit_pillar: Option<(&Pillar, usize)> = None;
    for p in pillars {
        if let Some((t, axis)) = ray_box(origin, dir, &p.lo, &p.hi) {
            if t < best {
                best = t;
                on_ground = false;
                hit_pillar = Some((p, axis));
            }
        }
    }
    if let Some((p, axis)) = hit_pillar {
        let hit = origin + dir * best;
        let tex_cfg = RenderConfig { seed: p.seed, ..*cfg };
        // Mix height into the texture arguments so vertical faces vary.
        let tex = ground_texture(&tex_cfg, hit.x + 3.7 * hit.y, hit.z - 2.9 * hit.y);
        return ((tex * FACE_LIGHT[axis]).clamp(0.1, 0.9), Some(best));
    }
    if on_ground {
        let hit = origin + dir * best;
        return (ground_texture(cfg, hit.x, hit.z), Some(best));
    }
    let up = (-dir.y / dir.norm()).clamp(0.0, 1.0);
    (0.78 + 0.12 * up, None)
}

/// Renders the scene from a camera-to-world pose by intersecting each
/// pixel ray with the ground plane and the boxes; the nearest hit wins.
/// Rays that escape get a smooth sky gradient. Also returns the exact
/// depth of every surface pixel (the ray parameter equals camera-frame
/// z because back-projected rays have unit forward component).
pub fn render_with_depth(
    pose: &PoseSE3,
    k: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> (GrayImage, DepthMap) {
    let pillars = build_pillars(cfg);
    let mut img = GrayImage::new(cfg.width, cfg.height);
    let mut depth = DepthMap::new(cfg.width, cfg.height);
    let origin = pose.translation;
    let ss = cfg.supersample.max(1);
    for py in 0..cfg.height {
        for px in 0..cfg.width {
            let ray_cam = k.ray(Pixel2::new(px as f64, py as f64));
            let dir: Vector3<f64> = pose.rotation * ray_cam;
            // Depth stays the exact center-ray value; only the shade is
            // integrated over the pixel footprint.
            let (center_value, z) = shade_pixel(&origin, &dir, cfg, &pillars);
            let value = if ss == 1 {
                center_value
            } else {
                let mut acc = 0.0;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let u = px as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                        let v = py as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                        let d = pose.rotation * k.ray(Pixel2::new(u, v));
                        acc += shade_pixel(&origin, &d, cfg, &pillars).0;
                    }
                }
                acc / (ss * ss) as f64
            };
            img.set(px, py, value);
            if let Some(z) = z {
                depth.set(px, py, z, 0.0);
            }
        }
    }
    (img, depth)
}

pub fn render_ground_view(pose: &PoseSE3, k: &CameraIntrinsics, cfg: &RenderConfig) -> GrayImage {
    render_with_depth(pose, k, cfg).0
}
