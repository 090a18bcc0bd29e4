//! Discrete anisotropic Gagliardo sums and the corona-weighted norm of lattice fields.

use serde::{Deserialize, Serialize};

use crate::action::ActionFamily;
use crate::error::{Error, Result};
use crate::group::AlgebraElement;
use crate::lattice::MorseLattice;
use crate::quad::gl8;
use crate::sampler::{map_samples, GaugeConfig, GaugeSampler};
use crate::stats::{mean_se, pairwise_sum, weighted_linear_fit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub alpha: f64,
    pub p: f64,
    pub s: f64,
}

impl NormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.p >= 2.0 && self.p.fract() == 0.0) {
            return Err(Error::InvalidArgument(format!("p = {} must be an integer ≥ 2", self.p)));
        }
        if !self.s.is_finite() {
            return Err(Error::InvalidArgument("s must be finite".into()));
        }
        Ok(())
    }

    /// Hypotheses of the tightness statement.
    pub fn tightness_regime(&self) -> bool {
        self.alpha > 0.0 && self.alpha < 0.5 && self.s < 0.5
    }
}

#[inline]
fn pow_norm(sq: f64, p: f64) -> f64 {
    let half = 0.5 * p;
    if half.fract() == 0.0 {
        sq.powi(half as i32)
    } else {
        sq.powf(half)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Gagliardo1d {
    /// `12^p/M^{1−pα} Σ_{k<l} |f_k − f_l|^p/(l−k)^{1+pα}`.
    pub discrete_bound: f64,
    /// `∬ |f(t) − f(s)|^p/|t − s|^{1+pα}` over `[0, 1]²` for the piecewise affine interpolant.
    pub quadrature: f64,
}

impl Gagliardo1d {
    pub fn holds(&self) -> bool {
        self.quadrature <= self.discrete_bound * (1.0 + 1e-6)
    }
}

/// Discrete bound and quadrature value of the fractional seminorm of the piecewise
/// affine function through `values` at `k/M`, `M = values.len() − 1`.
pub fn gagliardo_1d(values: &[AlgebraElement], alpha: f64, p: f64) -> Result<Gagliardo1d> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("need at least two grid values".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha}, p = {p}")));
    }
    let m = values.len() - 1;
    let mf = m as f64;
    let expo = 1.0 + p * alpha;
    let mut terms = Vec::new();
    for k in 0..=m {
        for l in k + 1..=m {
            let d = values[l].sub(&values[k]).norm();
            if d > 0.0 {
                terms.push(d.powf(p) / ((l - k) as f64).powf(expo));
            }
        }
    }
    let discrete_bound = 12f64.powf(p) / mf.powf(1.0 - p * alpha) * pairwise_sum(&terms);

    let h = 1.0 / mf;
    let q = p - 1.0 - p * alpha;
    let f = |t: f64| -> AlgebraElement {
        let i = ((t / h) as usize).min(m - 1);
        let s = t / h - i as f64;
        values[i].add(&values[i + 1].sub(&values[i]).scale(s))
    };
    let kernel = |x: f64, y: f64| {
        let d = f(x).sub(&f(y)).norm();
        if d == 0.0 {
            0.0
        } else {
            d.powf(p) / (x - y).abs().powf(expo)
        }
    };
    let (gx, gw) = gl8();
    let rect = |a0: f64, a1: f64, b0: f64, b1: f64| {
        let mut acc = 0.0;
        for (xi, wi) in gx.iter().zip(gw) {
            let x = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * xi;
            for (yj, wj) in gx.iter().zip(gw) {
                let y = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * yj;
                acc += wi * wj * kernel(x, y);
            }
        }
        acc * 0.25 * (a1 - a0) * (b1 - b0)
    };
    let mut parts = Vec::new();
    for i in 0..m {
        // same cell: |f(x) − f(y)| = slope·|x − y|
        let slope = values[i + 1].sub(&values[i]).norm() / h;
        parts.push(slope.powf(p) * 2.0 * h.powf(q + 2.0) / ((q + 1.0) * (q + 2.0)));
        for j in i + 1..m {
            let (a0, a1, b0, b1) = (i as f64 * h, (i + 1) as f64 * h, j as f64 * h, (j + 1) as f64 * h);
            let v = if j == i + 1 {
                // geometric grading towards the shared corner
                let layers: usize = 24;
                let cuts: Vec<f64> = (0..=layers).map(|e| if e == layers { 0.0 } else { h * 0.5f64.powi(e as i32) }).collect();
                let mut acc = 0.0;
                for u in 0..layers {
                    for w in 0..layers {
                        let (u0, u1) = (cuts[u + 1], cuts[u]);
                        let (w0, w1) = (cuts[w + 1], cuts[w]);
                        acc += rect(a1 - u1, a1 - u0, b0 + w0, b0 + w1);
                    }
                }
                acc
            } else {
                rect(a0, a1, b0, b1)
            };
            parts.push(2.0 * v);
        }
    }
    Ok(Gagliardo1d { discrete_bound, quadrature: pairwise_sum(&parts) })
}

/// `log M` on every arc, stored by coordinates; entries outside the computed region are NaN.
#[derive(Debug, Clone)]
pub struct LineGrid {
    pub levels: usize,
    pub cols: usize,
    pub dim: usize,
    data: Vec<[f64; 3]>,
}

/// Inclusive index box: levels `[level0, level1]`, column boundaries `[col0, col1]`
/// (columns wrap around the circle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub level0: usize,
    pub level1: usize,
    pub col0: i64,
    pub col1: i64,
}

impl LineGrid {
    pub fn from_values(levels: usize, cols: usize, dim: usize, values: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != levels * cols || !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument("line grid shape".into()));
        }
        Ok(LineGrid { levels, cols, dim, data: values })
    }

    pub fn from_config(cfg: &GaugeConfig) -> Result<Self> {
        let w = Window { level0: 0, level1: cfg.top_level, col0: 0, col1: cfg.cols as i64 };
        Self::from_config_regions(cfg, &[w])
    }

    /// Logs only for arcs inside the given windows.
    pub fn from_config_regions(cfg: &GaugeConfig, windows: &[Window]) -> Result<Self> {
        let levels = cfg.top_level + 1;
        let mut data = vec![[f64::NAN; 3]; levels * cfg.cols];
        for w in windows {
            for level in w.level0..=w.level1.min(cfg.top_level) {
                for c in w.col0..w.col1 {
                    let col = c.rem_euclid(cfg.cols as i64) as usize;
                    let e = &mut data[level * cfg.cols + col];
                    if e[0].is_nan() {
                        *e = cfg.m(level, col).log_map()?.coords();
                    }
                }
            }
        }
        Ok(LineGrid { levels, cols: cfg.cols, dim: cfg.group.dim(), data })
    }

    #[inline]
    pub fn get(&self, level: usize, col: i64) -> &[f64; 3] {
        &self.data[level * self.cols + col.rem_euclid(self.cols as i64) as usize]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut g = self.clone();
        for e in g.data.iter_mut() {
            for x in e.iter_mut() {
                *x *= c;
            }
        }
        g
    }

    /// `A(k →^{level} l) = Σ_{i=k}^{l−1} log M^{(level)}_i`.
    pub fn arc_integral(&self, level: usize, k: i64, l: i64) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for i in k..l {
            let v = self.get(level, i);
            for d in 0..3 {
                acc[d] += v[d];
            }
        }
        acc
    }
}

/// `Σ_{n<m} Σ_{k<l} |A(k →^m l) − A(k →^n l)|^p / ((l−k)^{1+pα}(m−n)^{1+pα})` over a window.
pub fn discrete_aniso_seminorm(lines: &LineGrid, w: &Window, alpha: f64, p: f64) -> Result<f64> {
    if w.level1 <= w.level0 || w.col1 <= w.col0 {
        return Err(Error::EmptyWindow);
    }
    if w.level1 >= lines.levels {
        return Err(Error::IndexOutOfRange(format!("level {} of {}", w.level1, lines.levels)));
    }
    let width = (w.col1 - w.col0) as usize;
    let nl = w.level1 - w.level0 + 1;
    let dim = lines.dim;
    let expo = 1.0 + p * alpha;
    let weight: Vec<f64> = (0..=width.max(nl)).map(|d| if d == 0 { 0.0 } else { (d as f64).powf(-expo) }).collect();
    // prefix sums per level and coordinate
    let mut prefix = vec![vec![0.0f64; (width + 1) * nl]; dim];
    for (li, level) in (w.level0..=w.level1).enumerate() {
        for d in 0..dim {
            let row = &mut prefix[d][li * (width + 1)..(li + 1) * (width + 1)];
            for j in 0..width {
                row[j + 1] = row[j] + lines.get(level, w.col0 + j as i64)[d];
            }
        }
    }
    let mut q = vec![vec![0.0f64; width + 1]; 3];
    let mut per_pair = Vec::with_capacity(nl * (nl - 1) / 2);
    for n in 0..nl {
        for m in n + 1..nl {
            for d in 0..dim {
                let pn = &prefix[d][n * (width + 1)..(n + 1) * (width + 1)];
                let pm = &prefix[d][m * (width + 1)..(m + 1) * (width + 1)];
                for j in 0..=width {
                    q[d][j] = pm[j] - pn[j];
                }
            }
            let acc = match dim {
                1 => row_pairs_1(&q[0], &weight, p),
                _ => row_pairs_3(&q[0], &q[1], &q[2], &weight, p),
            };
            per_pair.push(acc * weight[m - n]);
        }
    }
    let v = pairwise_sum(&per_pair);
    if !v.is_finite() {
        return Err(Error::InvalidArgument("window touches arcs without stored logarithms".into()));
    }
    Ok(v)
}

/// `Σ_i f((x_i − c)²) w_i` with four independent accumulators.
#[inline(always)]
fn lane_sum<F: Fn(f64) -> f64>(xs: &[f64], ws: &[f64], c: f64, f: F) -> f64 {
    let mut acc = [0.0f64; 4];
    let xc = xs.chunks_exact(4);
    let wc = ws.chunks_exact(4);
    let (xr, wr) = (xc.remainder(), wc.remainder());
    for (x, w) in xc.zip(wc) {
        for j in 0..4 {
            let d = x[j] - c;
            acc[j] += f(d * d) * w[j];
        }
    }
    let mut tail = 0.0;
    for (x, w) in xr.iter().zip(wr) {
        let d = x - c;
        tail += f(d * d) * w;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Σ_{k<l} |q_l − q_k|^p w_{l−k}` for scalar rows.
fn row_pairs_1(q: &[f64], weight: &[f64], p: f64) -> f64 {
    let half = 0.5 * p;
    let mut total = 0.0;
    for k in 0..q.len() {
        let qk = q[k];
        let rest = &q[k + 1..];
        let w = &weight[1..=rest.len()];
        total += match half as i32 {
            _ if half.fract() != 0.0 => lane_sum(rest, w, qk, |s| s.powf(half)),
            1 => lane_sum(rest, w, qk, |s| s),
            2 => lane_sum(rest, w, qk, |s| s * s),
            3 => lane_sum(rest, w, qk, |s| s * s * s),
            4 => lane_sum(rest, w, qk, |s| {
                let s2 = s * s;
                s2 * s2
            }),
            h => lane_sum(rest, w, qk, |s| s.powi(h)),
        };
    }
    total
}

/// Same for three-component rows.
fn row_pairs_3(a: &[f64], b: &[f64], c: &[f64], weight: &[f64], p: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..a.len() {
        let mut acc = 0.0;
        for l in k + 1..a.len() {
            let (x, y, z) = (a[l] - a[k], b[l] - b[k], c[l] - c[k]);
            acc += pow_norm(x * x + y * y + z * z, p) * weight[l - k];
        }
        total += acc;
    }
    total
}

/// `∫∫∫∫ |ΔW|^p / (|r−r'|^{1+pα}|θ−θ'|^{1+pα})` of the bilinear interpolant of the window,
/// rescaled to the unit square, by tensor Gauss–Legendre on cell pairs.
pub fn aniso_quadrature(lines: &LineGrid, w: &Window, alpha: f64, p: f64) -> Result<f64> {
    if w.level1 <= w.level0 || w.col1 <= w.col0 {
        return Err(Error::EmptyWindow);
    }
    let mr = w.level1 - w.level0;
    let mt = (w.col1 - w.col0) as usize;
    // W at grid nodes: W[i][j] = A(col0 →^{level0+i} col0+j)
    let mut wn = vec![vec![[0.0f64; 3]; mt + 1]; mr + 1];
    for i in 0..=mr {
        for j in 0..mt {
            let v = lines.get(w.level0 + i, w.col0 + j as i64);
            for d in 0..3 {
                wn[i][j + 1][d] = wn[i][j][d] + v[d];
            }
        }
    }
    let (hr, ht) = (1.0 / mr as f64, 1.0 / mt as f64);
    let wat = |r: f64, t: f64| -> [f64; 3] {
        let i = ((r / hr) as usize).min(mr - 1);
        let j = ((t / ht) as usize).min(mt - 1);
        let (a, b) = (r / hr - i as f64, t / ht - j as f64);
        let mut out = [0.0; 3];
        for d in 0..3 {
            out[d] = (1.0 - a) * ((1.0 - b) * wn[i][j][d] + b * wn[i][j + 1][d])
                + a * ((1.0 - b) * wn[i + 1][j][d] + b * wn[i + 1][j + 1][d]);
        }
        out
    };
    let expo = 1.0 + p * alpha;
    let (gx, gw) = crate::quad::gauss_legendre(4);
    let nodes = |c0: f64, h: f64| -> Vec<(f64, f64)> {
        gx.iter().zip(&gw).map(|(x, wt)| (c0 + 0.5 * h * (1.0 + x), 0.5 * h * wt)).collect()
    };
    let rn: Vec<Vec<(f64, f64)>> = (0..mr).map(|i| nodes(i as f64 * hr, hr)).collect();
    let tn: Vec<Vec<(f64, f64)>> = (0..mt).map(|j| nodes(j as f64 * ht, ht)).collect();
    let mut total = Vec::new();
    for r1c in &rn {
        for r2c in &rn {
            for t1c in &tn {
                for t2c in &tn {
                    let mut acc = 0.0;
                    for &(r1, wr1) in r1c {
                        for &(r2, wr2) in r2c {
                            let dr = (r1 - r2).abs();
                            for &(t1, wt1) in t1c {
                                for &(t2, wt2) in t2c {
                                    let dt = (t1 - t2).abs();
                                    if dr == 0.0 || dt == 0.0 {
                                        continue;
                                    }
                                    let (a, b, c, e) = (wat(r2, t2), wat(r2, t1), wat(r1, t2), wat(r1, t1));
                                    let mut sq = 0.0;
                                    for d in 0..3 {
                                        let x = a[d] - b[d] - c[d] + e[d];
                                        sq += x * x;
                                    }
                                    if sq > 0.0 {
                                        acc += wr1 * wr2 * wt1 * wt2 * pow_norm(sq, p) / (dr.powf(expo) * dt.powf(expo));
                                    }
                                }
                            }
                        }
                    }
                    total.push(acc);
                }
            }
        }
    }
    Ok(pairwise_sum(&total))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeightedNorm {
    /// Corona-scaled window sums over scales `n ≤ N`.
    pub corona: f64,
    /// `2^{2pN(s−2α)} |single increment at the saddle|^p`, summed over saddles.
    pub top: f64,
}

impl WeightedNorm {
    pub fn total(&self) -> f64 {
        self.corona + self.top
    }
}

/// Offsets of the 12 squares covering the unit corona (outer ring of a 4×4 block).
pub const CORONA_SQUARES: [(i64, i64); 12] = [
    (-2, -2),
    (-2, -1),
    (-2, 0),
    (-2, 1),
    (-1, -2),
    (-1, 1),
    (0, -2),
    (0, 1),
    (1, -2),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Saddle grid positions `(level, column)`.
fn saddle_nodes(lat: &MorseLattice) -> Vec<(i64, i64)> {
    lat.saddles()
        .iter()
        .map(|&(r, t)| ((r / lat.step).round() as i64, (t / lat.step).round() as i64))
        .collect()
}

/// Corona windows at every scale `n` with a square side of at least one cell, with their
/// scale prefactors `2^{np(s−2α)}/2^{2N(1−pα)}`.
pub fn corona_windows(lat: &MorseLattice, params: &NormParams, top_level: usize) -> Vec<(f64, Window)> {
    let big_n = lat.resolution as i64;
    let (a, p, s) = (params.alpha, params.p, params.s);
    let mut out = Vec::new();
    for (sr, st) in saddle_nodes(lat) {
        for n in 0..=big_n - 2 {
            let side = 1i64 << (big_n - n - 2);
            let pref = 2f64.powf(n as f64 * p * (s - 2.0 * a)) / 2f64.powf(2.0 * big_n as f64 * (1.0 - p * a));
            for &(qa, qb) in &CORONA_SQUARES {
                let l0 = sr + qa * side;
                let l1 = l0 + side;
                if l0 < 0 || l1 > top_level as i64 {
                    continue;
                }
                out.push((pref, Window { level0: l0 as usize, level1: l1 as usize, col0: st + qb * side, col1: st + (qb + 1) * side }));
            }
        }
    }
    out
}

/// Highest level touched by the norm's windows and the top term.
pub fn norm_support_level(lat: &MorseLattice) -> usize {
    let side = 1i64 << (lat.resolution as i64 - 2).max(0);
    saddle_nodes(lat).iter().map(|&(r, _)| (r + 2 * side).max(r + 1)).max().unwrap_or(0).min(lat.rows as i64) as usize
}

/// Right-hand side of the weighted-norm bound on the field of `lines`.
pub fn weighted_norm(lines: &LineGrid, lat: &MorseLattice, params: &NormParams) -> Result<WeightedNorm> {
    params.validate()?;
    let top_level = lines.levels - 1;
    let windows = corona_windows(lat, params, top_level);
    let mut parts = Vec::with_capacity(windows.len());
    for (pref, w) in &windows {
        parts.push(pref * discrete_aniso_seminorm(lines, w, params.alpha, params.p)?);
    }
    let big_n = lat.resolution as f64;
    let top_pref = 2f64.powf(2.0 * params.p * big_n * (params.s - 2.0 * params.alpha));
    let mut top = Vec::new();
    for (sr, st) in saddle_nodes(lat) {
        let sr = sr as usize;
        if sr < top_level {
            let (a, b) = (lines.get(sr + 1, st), lines.get(sr, st));
            let sq: f64 = (0..3).map(|d| (a[d] - b[d]).powi(2)).sum();
            top.push(top_pref * pow_norm(sq, params.p));
        }
    }
    Ok(WeightedNorm { corona: pairwise_sum(&parts), top: pairwise_sum(&top) })
}

/// Windows (as line-grid regions) needed by the weighted norm, including the top term.
pub fn norm_regions(lat: &MorseLattice, params: &NormParams) -> Vec<Window> {
    let top = norm_support_level(lat);
    let mut v: Vec<Window> = corona_windows(lat, params, top).into_iter().map(|(_, w)| w).collect();
    for (sr, st) in saddle_nodes(lat) {
        v.push(Window { level0: sr as usize, level1: (sr + 1) as usize, col0: st, col1: st + 1 });
    }
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct TightnessRow {
    pub resolution: u32,
    pub mean: f64,
    pub se: f64,
    pub top_mean: f64,
    pub samples: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TightnessReport {
    pub rows: Vec<TightnessRow>,
    /// Slope of `log E[norm]` against N (weighted by the relative standard errors).
    pub slope: f64,
    pub slope_se: f64,
}

impl TightnessReport {
    /// No growth: slope ≤ 0 within two standard errors.
    pub fn bounded(&self) -> bool {
        self.slope <= 2.0 * self.slope_se
    }
}

/// MC estimate of `E[weighted_norm]` along a resolution ladder.
#[allow(clippy::too_many_arguments)]
pub fn tightness_experiment(
    genus: u32,
    ladder: &[u32],
    spec: crate::lattice::AreaSpec,
    fam: &ActionFamily,
    params: &NormParams,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<TightnessReport> {
    params.validate()?;
    let mut rows = Vec::with_capacity(ladder.len());
    for &n in ladder {
        if n < 2 {
            return Err(Error::InvalidArgument("resolution must be at least 2".into()));
        }
        let lat = MorseLattice::build(genus, n, spec, 1.0)?;
        let regions = norm_regions(&lat, params);
        let top = norm_support_level(&lat);
        let cols: Vec<usize> = (0..lat.cols).collect();
        let sampler = GaugeSampler::new(&lat, fam, seed)?;
        let vals = map_samples(samples, threads, |i| {
            let cfg = sampler.sample_partial(i, &cols, top);
            let lines = LineGrid::from_config_regions(&cfg, &regions).ok()?;
            weighted_norm(&lines, &lat, params).ok()
        });
        let ok: Vec<WeightedNorm> = vals.into_iter().flatten().collect();
        let rejected = samples - ok.len();
        let (mean, se) = mean_se(&ok.iter().map(|w| w.total()).collect::<Vec<_>>());
        let (top_mean, _) = mean_se(&ok.iter().map(|w| w.top).collect::<Vec<_>>());
        rows.push(TightnessRow { resolution: n, mean, se, top_mean, samples, rejected });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.resolution as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean.ln()).collect();
    let sig: Vec<f64> = rows.iter().map(|r| (r.se / r.mean).max(1e-300)).collect();
    let (slope, slope_se) = if rows.len() >= 2 {
        let f = weighted_linear_fit(&x, &y, &sig);
        (f.slope, f.slope_se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(TightnessReport { rows, slope, slope_se })
}
