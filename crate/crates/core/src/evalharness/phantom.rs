//! Synthetic fundus phantoms with exact lesion ground truth.
//!
//! The background is an orange-red fundus with a luminance ramp, vignetting
//! and a darker macula inside a circular field of view. Dark vessels fan out
//! from the optic disc. Hard lesions are sharp yellow chains of disks, soft
//! lesions pale feathered ellipses, flares bright near-white disks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, ColorSpace, RasterImage};
use crate::severity::{Point, RetinalLandmarks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Relative luminance change across the image.
    pub ramp_amplitude: f64,
    pub vessel_count: usize,
    /// Vessel width range in pixels.
    pub vessel_width: [f64; 2],
    pub hard_count: usize,
    /// Radius range of the disks making up a hard lesion.
    pub hard_radius: [f64; 2],
    /// Yellow chroma of hard lesions, 0 (white) to 1 (saturated yellow).
    pub hard_chroma: f64,
    pub soft_count: usize,
    /// Semi-minor axis range of soft lesions.
    pub soft_radius: [f64; 2],
    /// Semi-major over semi-minor axis.
    pub soft_aspect: [f64; 2],
    /// Width of the feathered soft-lesion edge in pixels.
    pub soft_feather: f64,
    pub flare_count: usize,
    pub flare_radius: [f64; 2],
    /// Standard deviation of additive sensor noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 400,
            height: 400,
            ramp_amplitude: 0.3,
            vessel_count: 8,
            vessel_width: [2.0, 4.0],
            hard_count: 5,
            hard_radius: [3.0, 6.0],
            hard_chroma: 0.7,
            soft_count: 3,
            soft_radius: [5.0, 8.0],
            soft_aspect: [2.0, 2.6],
            soft_feather: 1.0,
            flare_count: 1,
            flare_radius: [9.0, 13.0],
            noise: 0.01,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0] >= min && r[1] >= r[0] && r[1].is_finite()) {
        return Err(Error::arg(format!("phantom {name} range {r:?} is invalid")));
    }
    Ok(())
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::arg("phantoms must be at least 64x64"));
        }
        check_range("vessel_width", self.vessel_width, 0.5)?;
        check_range("hard_radius", self.hard_radius, 1.0)?;
        check_range("soft_radius", self.soft_radius, 1.0)?;
        check_range("soft_aspect", self.soft_aspect, 1.0)?;
        check_range("flare_radius", self.flare_radius, 1.0)?;
        if !(0.0..=1.0).contains(&self.hard_chroma) {
            return Err(Error::arg("hard_chroma must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.ramp_amplitude) || !(self.noise >= 0.0) || !(self.soft_feather > 0.0) {
            return Err(Error::arg(
                "ramp_amplitude in [0, 1), noise >= 0 and soft_feather > 0 required",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: RasterImage,
    /// Union of hard and soft lesions.
    pub exudate: BinaryMask,
    pub hard: BinaryMask,
    pub soft: BinaryMask,
    pub flare: BinaryMask,
    /// Pixels inside the camera aperture.
    pub field_of_view: BinaryMask,
    pub landmarks: RetinalLandmarks,
}

#[derive(Debug, Clone, Copy)]
struct Disk {
    x: f64,
    y: f64,
    r: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    Hard(Vec<Disk>),
    Soft { x: f64, y: f64, a: f64, b: f64, theta: f64 },
    Flare(Disk),
}

impl Shape {
    /// Center and radius of a circle containing the shape.
    fn bounds(&self) -> (f64, f64, f64) {
        match self {
            Shape::Hard(disks) => {
                let (cx, cy) = (disks[0].x, disks[0].y);
                let r = disks
                    .iter()
                    .map(|d| ((d.x - cx).powi(2) + (d.y - cy).powi(2)).sqrt() + d.r)
                    .fold(0.0, f64::max);
                (cx, cy, r)
            }
            Shape::Soft { x, y, a, .. } => (*x, *y, *a + 1.0),
            Shape::Flare(d) => (d.x, d.y, d.r + 1.0),
        }
    }
}

struct Canvas {
    w: usize,
    h: usize,
    planes: [Vec<f64>; 3],
}

impl Canvas {
    fn blend(&mut self, i: usize, color: [f64; 3], alpha: f64) {
        for c in 0..3 {
            let v = &mut self.planes[c][i];
            *v = *v * (1.0 - alpha) + color[c] * alpha;
        }
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Vessel darkening in `[0, 1]` per pixel.
fn paint_vessels(spec: &PhantomSpec, rng: &mut ChaCha8Rng, od: (f64, f64), fov_r: f64, center: (f64, f64)) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let mut depth = vec![0.0f64; w * h];
    for v in 0..spec.vessel_count {
        let base = std::f64::consts::TAU * (v as f64 + rng.random::<f64>() * 0.6) / spec.vessel_count.max(1) as f64;
        let mut theta = base;
        let mut turn = rng.random_range(-0.012..0.012);
        let width0 = rng.random_range(spec.vessel_width[0]..=spec.vessel_width[1]);
        let (mut x, mut y) = (od.0 + 6.0 * theta.cos(), od.1 + 6.0 * theta.sin());
        let length = rng.random_range(0.8..1.6) * fov_r;
        let mut t = 0.0;
        while t < length {
            let half = (width0 * (1.0 - 0.35 * t / length)).max(spec.vessel_width[0] * 0.6) / 2.0;
            let reach = half + 1.5;
            let (x0, x1) = (
                (x - reach).floor().max(0.0) as usize,
                ((x + reach).ceil() as usize).min(w - 1),
            );
            let (y0, y1) = (
                (y - reach).floor().max(0.0) as usize,
                ((y + reach).ceil() as usize).min(h - 1),
            );
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let d = ((px as f64 - x).powi(2) + (py as f64 - y).powi(2)).sqrt();
                    let a = logistic((half - d) / 0.45);
                    let i = py * w + px;
                    depth[i] = depth[i].max(a);
                }
            }
            theta += turn;
            turn = (turn + rng.random_range(-0.003..0.003)).clamp(-0.02, 0.02);
            x += theta.cos();
            y += theta.sin();
            t += 1.0;
            if ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt() > fov_r {
                break;
            }
        }
    }
    depth
}

/// Draws one phantom; identical specs give identical phantoms.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = (w as f64 / 2.0, h as f64 / 2.0);
    let fov_r = 0.47 * w.min(h) as f64;
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let od = (
        center.0 + side * (0.42 * fov_r + rng.random_range(-0.05..0.05) * fov_r),
        center.1 + rng.random_range(-0.08..0.08) * fov_r,
    );
    let fovea = (
        center.0 - side * (0.22 * fov_r + rng.random_range(-0.04..0.04) * fov_r),
        center.1 + rng.random_range(-0.06..0.06) * fov_r,
    );

    let field_of_view = BinaryMask::from_fn(w, h, |x, y| {
        (x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2) <= fov_r * fov_r
    });

    let ramp_dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (rc, rs) = (ramp_dir.cos(), ramp_dir.sin());
    let lum = |x: f64, y: f64| {
        let u = ((x - center.0) * rc + (y - center.1) * rs) / fov_r;
        let rho2 = ((x - center.0).powi(2) + (y - center.1).powi(2)) / (fov_r * fov_r);
        let macula = 0.18 * (-((x - fovea.0).powi(2) + (y - fovea.1).powi(2)) / (2.0 * 22.0 * 22.0)).exp();
        (1.0 + spec.ramp_amplitude * u) * (1.0 - 0.25 * rho2) * (1.0 - macula)
    };
    let base = [
        rng.random_range(0.66..0.74),
        rng.random_range(0.32..0.38),
        rng.random_range(0.13..0.18),
    ];

    let vessels = paint_vessels(spec, &mut rng, od, fov_r, center);
    let mut canvas = Canvas {
        w,
        h,
        planes: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !field_of_view.get(x, y) {
                continue;
            }
            let l = lum(x as f64, y as f64);
            let dark = 1.0 - 0.5 * vessels[i];
            for c in 0..3 {
                canvas.planes[c][i] = base[c] * l * dark;
            }
        }
    }

    // place lesions and flares without overlap, clear of vessels and the optic disc
    let mut shapes: Vec<Shape> = Vec::new();
    let wanted: Vec<u8> = std::iter::repeat_n(0u8, spec.hard_count)
        .chain(std::iter::repeat_n(1u8, spec.soft_count))
        .chain(std::iter::repeat_n(2u8, spec.flare_count))
        .collect();
    for kind in wanted {
        let mut placed = false;
        for _ in 0..4000 {
            let shape = match kind {
                0 => {
                    let r0 = rng.random_range(spec.hard_radius[0]..=spec.hard_radius[1]);
                    let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
                    // lobed chain of overlapping disks along a wandering heading
                    let mut disks = vec![Disk { x: cx, y: cy, r: r0 }];
                    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    for _ in 0..rng.random_range(2..=4) {
                        let last = disks[disks.len() - 1];
                        let r = (rng.random_range(0.6..1.0) * r0).max(spec.hard_radius[0]);
                        heading += rng.random_range(-0.9..0.9);
                        let d = rng.random_range(0.9..1.3) * last.r.max(r);
                        disks.push(Disk {
                            x: last.x + d * heading.cos(),
                            y: last.y + d * heading.sin(),
                            r,
                        });
                    }
                    Shape::Hard(disks)
                }
                1 => {
                    let b = rng.random_range(spec.soft_radius[0]..=spec.soft_radius[1]);
                    Shape::Soft {
                        x: rng.random_range(0.0..w as f64),
                        y: rng.random_range(0.0..h as f64),
                        a: b * rng.random_range(spec.soft_aspect[0]..=spec.soft_aspect[1]),
                        b,
                        theta: rng.random_range(0.0..std::f64::consts::PI),
                    }
                }
                _ => Shape::Flare(Disk {
                    x: rng.random_range(0.0..w as f64),
                    y: rng.random_range(0.0..h as f64),
                    r: rng.random_range(spec.flare_radius[0]..=spec.flare_radius[1]),
                }),
            };
            let (sx, sy, sr) = shape.bounds();
            let dc = ((sx - center.0).powi(2) + (sy - center.1).powi(2)).sqrt();
            if dc + sr > 0.88 * fov_r {
                continue;
            }
            let clear_od = ((sx - od.0).powi(2) + (sy - od.1).powi(2)).sqrt() > sr + 20.0;
            let apart = shapes.iter().all(|o| {
                let (ox, oy, or) = o.bounds();
                ((sx - ox).powi(2) + (sy - oy).powi(2)).sqrt() > sr + or + 12.0
            });
            let reach = sr + 4.0;
            let clear_vessels = {
                let (x0, x1) = ((sx - reach).max(0.0) as usize, ((sx + reach) as usize).min(w - 1));
                let (y0, y1) = ((sy - reach).max(0.0) as usize, ((sy + reach) as usize).min(h - 1));
                (y0..=y1).all(|y| {
                    (x0..=x1).all(|x| {
                        (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2) > reach * reach || vessels[y * w + x] < 0.05
                    })
                })
            };
            if clear_od && apart && clear_vessels {
                shapes.push(shape);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::arg(
                "could not place all phantom lesions; reduce counts or sizes",
            ));
        }
    }

    let mut hard = BinaryMask::new(w, h);
    let mut soft = BinaryMask::new(w, h);
    let mut flare = BinaryMask::new(w, h);
    for shape in &shapes {
        let (sx, sy, sr) = shape.bounds();
        let reach = sr + 4.0;
        let (x0, x1) = ((sx - reach).max(0.0) as usize, ((sx + reach) as usize).min(w - 1));
        let (y0, y1) = ((sy - reach).max(0.0) as usize, ((sy + reach) as usize).min(h - 1));
        match shape {
            Shape::Hard(disks) => {
                let tone = rng.random_range(0.9..1.0);
                let yellow = [0.97 * tone, 0.90 * tone, (1.0 - spec.hard_chroma) * 0.9 * tone + 0.05];
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let inside = disks
                            .iter()
                            .any(|d| (x as f64 - d.x).powi(2) + (y as f64 - d.y).powi(2) <= d.r * d.r);
                        if inside {
                            let l = 0.85 + 0.15 * lum(x as f64, y as f64);
                            canvas.blend(y * w + x, yellow.map(|c| (c * l).min(1.0)), 1.0);
                            hard.set(x, y, true);
                        }
                    }
                }
            }
            Shape::Soft {
                x: cx,
                y: cy,
                a,
                b,
                theta,
            } => {
                let (ct, st) = (theta.cos(), theta.sin());
                let pale = [0.93, 0.86, 0.74];
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        let (u, v) = (dx * ct + dy * st, -dx * st + dy * ct);
                        let rho = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
                        // distance to the outline along the ray through the center
                        let r_local = if rho > 0.0 { (u * u + v * v).sqrt() / rho } else { *b };
                        let alpha = logistic((1.0 - rho) * r_local / spec.soft_feather);
                        if alpha > 0.002 {
                            canvas.blend(y * w + x, pale, 0.9 * alpha);
                        }
                        if rho < 1.0 {
                            soft.set(x, y, true);
                        }
                    }
                }
            }
            Shape::Flare(d) => {
                let white = [0.99, 0.97, 0.93];
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let dist = ((x as f64 - d.x).powi(2) + (y as f64 - d.y).powi(2)).sqrt();
                        let alpha = logistic((d.r - dist) / 0.6);
                        if alpha > 0.002 {
                            canvas.blend(y * w + x, white, alpha);
                        }
                        if dist < d.r {
                            flare.set(x, y, true);
                        }
                    }
                }
            }
        }
    }

    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::arg(e.to_string()))?;
        for i in 0..n {
            if field_of_view.bits()[i] {
                for c in 0..3 {
                    canvas.planes[c][i] += normal.sample(&mut rng);
                }
            }
        }
    }
    for p in canvas.planes.iter_mut() {
        p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let image = RasterImage::from_planes(canvas.w, canvas.h, ColorSpace::Rgb, &canvas.planes)?;
    let exudate = hard.union(&soft)?;
    Ok(Phantom {
        image,
        exudate,
        hard,
        soft,
        flare,
        field_of_view,
        landmarks: RetinalLandmarks {
            fovea: Point(fovea.0, fovea.1),
            optic_disc: Point(od.0, od.1),
            image_width: w,
            image_height: h,
        },
    })
}
