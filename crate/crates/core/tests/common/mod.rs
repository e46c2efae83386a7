//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retina_kit::imgio::{BinaryMask, InterestMap};
use retina_kit::severity::{Grade, LEVELS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> InterestMap {
    InterestMap::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Values on a 1/256 grid, so `1 - (1 - v)` is exact.
pub fn dyadic_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> InterestMap {
    InterestMap::new(
        w,
        h,
        (0..w * h).map(|_| rng.random_range(0..=256) as f64 / 256.0).collect(),
    )
    .unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

/// Sauvola by recomputing every window directly, edges replicated.
pub fn sauvola_oracle(m: &InterestMap, window: usize, c: f64) -> Vec<bool> {
    let (w, h) = (m.width() as isize, m.height() as isize);
    let r = (window / 2) as isize;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut vals = Vec::with_capacity(window * window);
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    vals.push(m.get(sx, sy));
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
    }
    let big = stds.iter().copied().fold(0.0, f64::max);
    if big == 0.0 {
        return vec![false; means.len()];
    }
    m.values()
        .iter()
        .zip(means.iter().zip(&stds))
        .map(|(&v, (&mu, &s))| v > mu * (1.0 + c * (s / big - 1.0)))
        .collect()
}

/// Recursive 8-connected flood fill; labels from 1, 0 for background.
pub fn flood_fill_labels(mask: &BinaryMask) -> Vec<usize> {
    fn fill(mask: &BinaryMask, labels: &mut [usize], x: isize, y: isize, label: usize) {
        let (w, h) = (mask.width() as isize, mask.height() as isize);
        if x < 0 || y < 0 || x >= w || y >= h {
            return;
        }
        let i = (y * w + x) as usize;
        if !mask.bits()[i] || labels[i] != 0 {
            return;
        }
        labels[i] = label;
        for dy in -1..=1 {
            for dx in -1..=1 {
                if dx != 0 || dy != 0 {
                    fill(mask, labels, x + dx, y + dy, label);
                }
            }
        }
    }
    let mut labels = vec![0; mask.bits().len()];
    let mut next = 0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) && labels[y * mask.width() + x] == 0 {
                next += 1;
                fill(mask, &mut labels, x as isize, y as isize, next);
            }
        }
    }
    labels
}

/// True when two labelings induce the same partition of the foreground.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut ab = std::collections::HashMap::new();
    let mut ba = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *ab.entry(x).or_insert(y) != y || *ba.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Gift-wrapping hull of all pixel centers, then a count of the lattice points
/// inside or on it.
pub fn hull_lattice_count(pixels: &[(usize, usize)]) -> usize {
    let pts: Vec<(i64, i64)> = pixels.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    let start = *pts.iter().min().unwrap();
    let d2 = |a: (i64, i64), b: (i64, i64)| (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2);
    let mut hull = vec![start];
    let mut p = start;
    loop {
        let mut q = match pts.iter().find(|&&r| r != p) {
            Some(&r) => r,
            None => break,
        };
        for &r in &pts {
            let c = cross(p, q, r);
            if c < 0 || (c == 0 && d2(p, r) > d2(p, q)) {
                q = r;
            }
        }
        if q == start {
            break;
        }
        hull.push(q);
        p = q;
    }
    let (x0, x1) = (
        pts.iter().map(|p| p.0).min().unwrap(),
        pts.iter().map(|p| p.0).max().unwrap(),
    );
    let (y0, y1) = (
        pts.iter().map(|p| p.1).min().unwrap(),
        pts.iter().map(|p| p.1).max().unwrap(),
    );
    let n = hull.len();
    let mut count = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let inside = (0..n).all(|i| n == 1 || cross(hull[i], hull[(i + 1) % n], (x, y)) >= 0);
            count += inside as usize;
        }
    }
    count
}

/// Moore-neighbor boundary trace stopped when the state after the first step recurs; diagonal steps count sqrt(2).
pub fn moore_perimeter(pixels: &[(usize, usize)]) -> f64 {
    if pixels.len() < 2 {
        return 0.0;
    }
    let set: HashSet<(i64, i64)> = pixels.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    let start = pixels
        .iter()
        .map(|&(x, y)| (y as i64, x as i64))
        .min()
        .map(|(y, x)| (x, y))
        .unwrap();
    // clockwise on screen (y down), starting west
    const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
    let mut p = start;
    let mut back = (start.0 - 1, start.1);
    let mut first: Option<((i64, i64), (i64, i64), f64)> = None;
    let mut length = 0.0;
    loop {
        let k = RING.iter().position(|&d| (p.0 + d.0, p.1 + d.1) == back).unwrap();
        let (next, prev) = (1..=8)
            .map(|i| (RING[(k + i) % 8], RING[(k + i - 1) % 8]))
            .find(|(d, _)| set.contains(&(p.0 + d.0, p.1 + d.1)))
            .unwrap();
        length += if next.0 != 0 && next.1 != 0 {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        back = (p.0 + prev.0, p.1 + prev.1);
        p = (p.0 + next.0, p.1 + next.1);
        match first {
            None => first = Some((p, back, length)),
            Some((fp, fb, l0)) if (fp, fb) == (p, back) => return length - l0,
            _ => {}
        }
        assert!(length < 1e6, "trace did not close");
    }
}

/// Severity ladder written out rule by rule.
pub fn grade_oracle(n: [usize; LEVELS], t: [f64; LEVELS]) -> Grade {
    let within = |i: usize| n[i] > 0 && n[i] as f64 <= t[i];
    let over = |i: usize| n[i] as f64 > t[i];
    let mut g = Grade::None;
    if within(2) || n[3] > 0 {
        g = Grade::Mild;
    }
    if within(1) || over(2) {
        g = Grade::Moderate;
    }
    if within(0) || over(1) {
        g = Grade::Severe;
    }
    if over(0) {
        g = Grade::Proliferate;
    }
    g
}

/// Probability that a random positive outscores a random negative, ties count half.
pub fn mann_whitney_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| t).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| !t).map(|(&s, _)| s).collect();
    let mut u = 0.0;
    for &p in &pos {
        for &n in &neg {
            u += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    u / (pos.len() * neg.len()) as f64
}

/// `max` / `min` over in-bounds neighbors at the given offsets.
pub fn brute_neighborhood(m: &InterestMap, offsets: &[(isize, isize)], dilate: bool) -> Vec<f64> {
    let (w, h) = (m.width() as isize, m.height() as isize);
    let mut out = Vec::with_capacity(m.values().len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = if dilate { f64::NEG_INFINITY } else { f64::INFINITY };
            for &(dx, dy) in offsets {
                let (sx, sy) = if dilate { (x - dx, y - dy) } else { (x + dx, y + dy) };
                if sx >= 0 && sy >= 0 && sx < w && sy < h {
                    let v = m.get(sx as usize, sy as usize);
                    acc = if dilate { acc.max(v) } else { acc.min(v) };
                }
            }
            out.push(acc);
        }
    }
    out
}
