//! Dyadic Morse lattice on the cylinder coordinates `(r, θ)` of a genus-g surface.
//!
//! `r ∈ [0, 2g+2]` runs from the minimum to the maximum with saddle levels at
//! `r = 1, …, 2g`; `θ ∈ [0, 2g)` is periodic. At resolution N the grid step is
//! `h = 2^{−N}`, giving `(2g+2)·2^N` rows and `2g·2^N` columns of faces. Face
//! `(row, col)` has index `row·cols + col`.
//!
//! Saddle `a` sits at `(a, a − ½)`. The 4g curve slots sit at `θ = b/2`; arc `X_b`
//! is the interval `[(b−1)/2, b/2]`, followed by `U_b` for `b ≤ 2g` and by
//! `U_{b−2g}^{-1}` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::gl8;
use crate::stats::{linear_fit, pairwise_sum, LinearFit};

/// Radius of the singular region around each saddle, in the metric `√(Δr² + 4Δθ²)`.
pub const SINGULAR_RADIUS: f64 = 0.25;
/// Memory guard on the number of faces.
pub const MAX_FACES: u64 = 1 << 27;
pub const MAX_RESOLUTION: u32 = 14;
const MAX_DEPTH: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaSpec {
    Uniform,
    MorseSingular,
}

/// Smooth factor of the area density.
pub type SmoothDensity = dyn Fn(f64, f64) -> f64 + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Generator {
    /// Face loop `l_F`.
    Face(usize),
    /// Stable loop `s_i`, `0 ≤ i < 2g`.
    Stable(usize),
}

/// A word in the loop generators; `true` marks an inverse letter.
pub type Word = Vec<(Generator, bool)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CircleItem {
    /// Horizontal edge in column `col` at the circle's level.
    Arc { col: usize },
    /// Haar element `U_generator` (or its inverse) at a curve slot.
    Insert { generator: usize, inverse: bool },
}

#[derive(Debug, Clone)]
pub struct MorseLattice {
    pub genus: u32,
    pub resolution: u32,
    pub rows: usize,
    pub cols: usize,
    pub step: f64,
    pub spec: AreaSpec,
    pub total_area: f64,
    areas: Vec<f64>,
    corona: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeSummary {
    pub genus: u32,
    pub resolution: u32,
    pub spec: AreaSpec,
    pub r_levels: usize,
    pub theta_lines: usize,
    pub faces: usize,
    pub horizontal_edges: usize,
    pub stable_loops: usize,
    pub total_area: f64,
    pub min_area: f64,
    pub max_area: f64,
    /// Counts of faces per unit bin of `log2(area)`, starting at `histogram_start`.
    pub histogram_start: i32,
    pub histogram: Vec<usize>,
    pub corona_counts: Vec<usize>,
}

/// `∫∫ 1/√(x² + y²)` over `[x0,x1]×[y0,y1]` from the antiderivative `x ln(y+r) + y ln(x+r)`.
fn inverse_radius_rect(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    fn xlog(x: f64, y: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let r = x.hypot(y);
        if y >= 0.0 {
            x * (y + r).ln()
        } else {
            x * ((x * x).ln() - (r - y).ln())
        }
    }
    let g = |x: f64, y: f64| xlog(x, y) + xlog(y, x);
    g(x1, y1) - g(x0, y1) - g(x1, y0) + g(x0, y0)
}

/// Singular weight `β/d + (1 − β)` with a cubic blend between `ρ0/2` and `ρ0`.
pub fn singular_weight(d: f64) -> f64 {
    let half = 0.5 * SINGULAR_RADIUS;
    if d <= half {
        1.0 / d
    } else if d >= SINGULAR_RADIUS {
        1.0
    } else {
        let x = (d - half) / half;
        let beta = 1.0 - (3.0 * x * x - 2.0 * x * x * x);
        beta / d + (1.0 - beta)
    }
}

impl MorseLattice {
    pub fn build(genus: u32, resolution: u32, spec: AreaSpec, total_area: f64) -> Result<Self> {
        Self::build_inner(genus, resolution, spec, total_area, None)
    }

    /// Build with a user-supplied smooth factor `σ̃(r, θ)` of the area density.
    pub fn build_with_density(
        genus: u32,
        resolution: u32,
        spec: AreaSpec,
        total_area: f64,
        smooth: &SmoothDensity,
    ) -> Result<Self> {
        Self::build_inner(genus, resolution, spec, total_area, Some(smooth))
    }

    fn build_inner(
        genus: u32,
        resolution: u32,
        spec: AreaSpec,
        total_area: f64,
        smooth: Option<&SmoothDensity>,
    ) -> Result<Self> {
        if genus < 1 {
            return Err(Error::InvalidArgument("genus must be at least 1".into()));
        }
        if resolution < 1 {
            return Err(Error::InvalidArgument("resolution must be at least 1".into()));
        }
        if !(total_area > 0.0) || !total_area.is_finite() {
            return Err(Error::InvalidArgument(format!("total area {total_area}")));
        }
        let g = genus as u64;
        let faces = if resolution > 40 { u64::MAX } else { (2 * g + 2) * (2 * g) << (2 * resolution) };
        if resolution > MAX_RESOLUTION || faces > MAX_FACES {
            return Err(Error::ResolutionTooHigh { n: resolution, faces });
        }
        let side = 1usize << resolution;
        let rows = (2 * genus as usize + 2) * side;
        let cols = 2 * genus as usize * side;
        let step = 1.0 / side as f64;
        let mut lat = MorseLattice {
            genus,
            resolution,
            rows,
            cols,
            step,
            spec,
            total_area,
            areas: Vec::new(),
            corona: Vec::new(),
        };
        let mut raw = vec![0.0; rows * cols];
        for row in 0..rows {
            for col in 0..cols {
                raw[row * cols + col] = lat.raw_face_mass(row, col, smooth)?;
            }
        }
        let sum = pairwise_sum(&raw);
        let scale = total_area / sum;
        lat.areas = raw.into_iter().map(|a| a * scale).collect();
        lat.corona = (0..rows * cols).map(|f| lat.compute_corona(f)).collect();
        Ok(lat)
    }

    pub fn faces(&self) -> usize {
        self.rows * self.cols
    }

    pub fn face_index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::IndexOutOfRange(format!("face ({row}, {col})")));
        }
        Ok(row * self.cols + col)
    }

    pub fn face_coords(&self, face: usize) -> (usize, usize) {
        (face / self.cols, face % self.cols)
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn face_area(&self, face: usize) -> Result<f64> {
        self.areas.get(face).copied().ok_or_else(|| Error::IndexOutOfRange(format!("face {face}")))
    }

    /// `σ(0, 2g+2, θ, θ₊)`: total area of a θ-column.
    pub fn strip_area(&self, col: usize) -> Result<f64> {
        if col >= self.cols {
            return Err(Error::IndexOutOfRange(format!("column {col}")));
        }
        let v: Vec<f64> = (0..self.rows).map(|r| self.areas[r * self.cols + col]).collect();
        Ok(pairwise_sum(&v))
    }

    pub fn max_strip_area(&self) -> f64 {
        (0..self.cols).map(|c| self.strip_area(c).unwrap()).fold(0.0, f64::max)
    }

    /// Area below level `level` (sum of the first `level` rows).
    pub fn area_below(&self, level: usize) -> f64 {
        pairwise_sum(&self.areas[..level.min(self.rows) * self.cols])
    }

    pub fn saddles(&self) -> Vec<(f64, f64)> {
        (1..=2 * self.genus).map(|a| (a as f64, a as f64 - 0.5)).collect()
    }

    /// Row index of a saddle level `a` (1-based).
    pub fn saddle_level(&self, a: usize) -> usize {
        a << self.resolution
    }

    /// θ positions of the 4g curve slots.
    pub fn slot_angles(&self) -> Vec<f64> {
        (1..=4 * self.genus).map(|b| b as f64 / 2.0).collect()
    }

    /// Period of θ.
    pub fn period(&self) -> f64 {
        2.0 * self.genus as f64
    }

    pub fn level_of(&self, r: f64) -> Result<usize> {
        let k = (r / self.step).round();
        if (k * self.step - r).abs() > 1e-9 || k < 0.0 || k as usize > self.rows {
            return Err(Error::IndexOutOfRange(format!("r = {r} is not a grid level")));
        }
        Ok(k as usize)
    }

    /// Face loops (one per face) and the 2g stable loops.
    pub fn loop_basis(&self) -> (Vec<Word>, Vec<Word>) {
        let faces = (0..self.faces()).map(|f| vec![(Generator::Face(f), false)]).collect();
        let stable = (0..2 * self.genus as usize).map(|i| vec![(Generator::Stable(i), false)]).collect();
        (faces, stable)
    }

    /// Ordered items of the circle at grid level `level`, counterclockwise from θ = 0.
    /// With insertions the level must lie above the last saddle.
    pub fn level_circle(&self, level: usize, insertions: bool) -> Result<Vec<CircleItem>> {
        if level > self.rows {
            return Err(Error::IndexOutOfRange(format!("level {level}")));
        }
        let two_g = 2 * self.genus as usize;
        if insertions && level <= self.saddle_level(two_g) {
            return Err(Error::LevelBelowSaddles(level as f64 * self.step));
        }
        let per = self.cols / (2 * two_g);
        let mut out = Vec::with_capacity(self.cols + 2 * two_g);
        for b in 0..2 * two_g {
            for c in 0..per {
                out.push(CircleItem::Arc { col: b * per + c });
            }
            if insertions {
                out.push(if b < two_g {
                    CircleItem::Insert { generator: b, inverse: false }
                } else {
                    CircleItem::Insert { generator: b - two_g, inverse: true }
                });
            }
        }
        Ok(out)
    }

    /// Generator and orientation of the curve at slot `b` (0-based), and the saddle
    /// row above which it crosses level circles.
    pub fn slot_curve(&self, b: usize) -> (usize, bool, usize) {
        let two_g = 2 * self.genus as usize;
        let (generator, inverse) = if b < two_g { (b, false) } else { (b - two_g, true) };
        (generator, inverse, self.saddle_level(b / 2 + 1))
    }

    pub fn corona_index(&self, face: usize) -> u8 {
        self.corona[face]
    }

    pub fn corona(&self) -> &[u8] {
        &self.corona
    }

    /// Anisotropic distance from a face to the nearest saddle.
    pub fn saddle_distance(&self, face: usize) -> f64 {
        let (row, col) = self.face_coords(face);
        let (r0, r1) = (row as f64 * self.step, (row + 1) as f64 * self.step);
        let (t0, t1) = (col as f64 * self.step, (col + 1) as f64 * self.step);
        self.saddles()
            .iter()
            .map(|&(sr, st)| {
                let dr = if sr < r0 { r0 - sr } else if sr > r1 { sr - r1 } else { 0.0 };
                let dt = self.wrapped_gap(st, t0, t1);
                dr.hypot(2.0 * dt)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// θ-distance from `s` to `[t0, t1]` on the circle of period 2g.
    fn wrapped_gap(&self, s: f64, t0: f64, t1: f64) -> f64 {
        let p = self.period();
        [s - p, s, s + p]
            .iter()
            .map(|&x| if x < t0 { t0 - x } else if x > t1 { x - t1 } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    /// Unnormalized area density at `(r, θ)` without a smooth factor: 1 on the uniform
    /// spec, the singular weight of the nearest saddle otherwise.
    pub fn area_weight(&self, r: f64, theta: f64) -> f64 {
        if self.spec == AreaSpec::Uniform {
            return 1.0;
        }
        let d = self
            .saddles()
            .iter()
            .map(|&(sr, st)| (r - sr).hypot(2.0 * self.wrapped_gap(st, theta, theta)))
            .fold(f64::INFINITY, f64::min);
        singular_weight(d)
    }

    /// Anisotropic distance from a face centre to the nearest saddle.
    pub fn saddle_center_distance(&self, face: usize) -> f64 {
        let (row, col) = self.face_coords(face);
        let (r, t) = ((row as f64 + 0.5) * self.step, (col as f64 + 0.5) * self.step);
        self.saddles()
            .iter()
            .map(|&(sr, st)| (r - sr).hypot(2.0 * self.wrapped_gap(st, t, t)))
            .fold(f64::INFINITY, f64::min)
    }

    fn compute_corona(&self, face: usize) -> u8 {
        let d = self.saddle_center_distance(face);
        let n = self.resolution as f64;
        if d <= 0.0 {
            return self.resolution as u8;
        }
        (-d.log2()).floor().clamp(0.0, n) as u8
    }

    /// Unnormalized mass of the area density on a face.
    fn raw_face_mass(&self, row: usize, col: usize, smooth: Option<&SmoothDensity>) -> Result<f64> {
        let h = self.step;
        let (r0, t0) = (row as f64 * h, col as f64 * h);
        if self.spec == AreaSpec::Uniform {
            return match smooth {
                None => Ok(h * h),
                Some(s) => Ok(gl_rect(&|r, t| s(r, t), r0, r0 + h, t0, t0 + h)),
            };
        }
        // nearest saddle, shifted into the θ-copy closest to the face
        let p = self.period();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for (sr, st) in self.saddles() {
            for shift in [-p, 0.0, p] {
                let s = st + shift;
                let dr = if sr < r0 { r0 - sr } else if sr > r0 + h { sr - r0 - h } else { 0.0 };
                let dt = if s < t0 { t0 - s } else if s > t0 + h { s - t0 - h } else { 0.0 };
                let d = dr.hypot(2.0 * dt);
                if d < best.0 {
                    best = (d, sr, s);
                }
            }
        }
        if best.0 >= SINGULAR_RADIUS && smooth.is_none() {
            return Ok(h * h);
        }
        let sig = |r: f64, t: f64| smooth.map_or(1.0, |s| s(r, t));
        cell_mass(&sig, best.1, best.2, r0, r0 + h, t0, t0 + h, 0)
    }

    /// Least-squares slope of per-corona mean `log2(area)` against `j` over `j ∈ [3, N]`.
    pub fn corona_regression(&self) -> Option<LinearFit> {
        let n = self.resolution as usize;
        let mut sums = vec![(0.0, 0usize); n + 1];
        for (a, &j) in self.areas.iter().zip(&self.corona) {
            sums[j as usize].0 += a.log2();
            sums[j as usize].1 += 1;
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (j, &(s, c)) in sums.iter().enumerate().skip(3) {
            if c > 0 {
                x.push(j as f64);
                y.push(s / c as f64);
            }
        }
        (x.len() >= 2).then(|| linear_fit(&x, &y))
    }

    pub fn summary(&self) -> LatticeSummary {
        let min = self.areas.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.areas.iter().copied().fold(0.0, f64::max);
        let start = min.log2().floor() as i32;
        let end = max.log2().floor() as i32;
        let mut histogram = vec![0usize; (end - start + 1) as usize];
        for a in &self.areas {
            histogram[(a.log2().floor() as i32 - start) as usize] += 1;
        }
        let mut corona_counts = vec![0usize; self.resolution as usize + 1];
        for &j in &self.corona {
            corona_counts[j as usize] += 1;
        }
        LatticeSummary {
            genus: self.genus,
            resolution: self.resolution,
            spec: self.spec,
            r_levels: self.rows + 1,
            theta_lines: self.cols,
            faces: self.faces(),
            horizontal_edges: (self.rows + 1) * self.cols,
            stable_loops: 2 * self.genus as usize,
            total_area: pairwise_sum(&self.areas),
            min_area: min,
            max_area: max,
            histogram_start: start,
            histogram,
            corona_counts,
        }
    }
}

fn gl_rect<F: Fn(f64, f64) -> f64>(f: &F, r0: f64, r1: f64, t0: f64, t1: f64) -> f64 {
    let (x, w) = gl8();
    let (rc, rh) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
    let (tc, th) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let mut inner = 0.0;
        for (xj, wj) in x.iter().zip(w) {
            inner += wj * f(rc + rh * xi, tc + th * xj);
        }
        acc += wi * inner;
    }
    acc * rh * th
}

/// Mass of `σ̃·w` on a cell relative to the saddle at `(sr, st)` by quadtree subdivision.
#[allow(clippy::too_many_arguments)]
fn cell_mass<F: Fn(f64, f64) -> f64>(
    sig: &F,
    sr: f64,
    st: f64,
    r0: f64,
    r1: f64,
    t0: f64,
    t1: f64,
    depth: u32,
) -> Result<f64> {
    let gap = |s: f64, a: f64, b: f64| if s < a { a - s } else if s > b { s - b } else { 0.0 };
    let far = |s: f64, a: f64, b: f64| (s - a).abs().max((s - b).abs());
    let d_min = gap(sr, r0, r1).hypot(2.0 * gap(st, t0, t1));
    let d_max = far(sr, r0, r1).hypot(2.0 * far(st, t0, t1));
    let dist = |r: f64, t: f64| (r - sr).hypot(2.0 * (t - st));
    if d_min >= SINGULAR_RADIUS {
        return Ok(gl_rect(sig, r0, r1, t0, t1));
    }
    if d_max <= 0.5 * SINGULAR_RADIUS {
        // inner ellipse: w = 1/d exactly
        let s0 = sig(sr, st);
        let singular = 0.5 * inverse_radius_rect(r0 - sr, r1 - sr, 2.0 * (t0 - st), 2.0 * (t1 - st));
        let rest = gl_rect(
            &|r, t| {
                let d = dist(r, t);
                if d > 0.0 { (sig(r, t) - s0) / d } else { 0.0 }
            },
            r0,
            r1,
            t0,
            t1,
        );
        return Ok(s0 * singular + rest);
    }
    let size = (r1 - r0).max(2.0 * (t1 - t0));
    if d_min >= size {
        return Ok(gl_rect(&|r, t| sig(r, t) * singular_weight(dist(r, t)), r0, r1, t0, t1));
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure(format!("cell at r = {r0}, θ = {t0} not resolved")));
    }
    let (rm, tm) = (0.5 * (r0 + r1), 0.5 * (t0 + t1));
    Ok(cell_mass(sig, sr, st, r0, rm, t0, tm, depth + 1)?
        + cell_mass(sig, sr, st, rm, r1, t0, tm, depth + 1)?
        + cell_mass(sig, sr, st, r0, rm, tm, t1, depth + 1)?
        + cell_mass(sig, sr, st, rm, r1, tm, t1, depth + 1)?)
}
