//! Gauge configurations in discrete Morse gauge and Monte Carlo checks built on them.
//!
//! A configuration holds the horizontal-edge elements `M` on every level
//! (level-major, `level·cols + col`) and the 2g Haar elements `U`. The bottom
//! level is the identity; each face increment `Δ_F = M_r^{-1} M_{r+1}` is drawn
//! from the action at the face area. Draws are laid out column by column so a
//! partial configuration (some columns, lower levels) reproduces the full one
//! exactly.

use std::collections::HashMap;

use serde::Serialize;

use crate::action::{haar_from_uniforms, ActionFamily, FaceSampler};
use crate::character::convolve_spectrum;
use crate::error::{Error, Result};
use crate::group::{Group, GroupElement, Irrep};
use crate::lattice::{CircleItem, Generator, MorseLattice};
use crate::stats::{mean_se, pairwise_sum};
use crate::stream::DrawStream;

/// Runs `f` on every sample index, splitting the range into contiguous chunks over
/// `threads` workers; the output order is the index order.
pub fn map_samples<T, F>(samples: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let threads = threads.clamp(1, samples.max(1));
    if threads == 1 {
        return (0..samples as u64).map(&f).collect();
    }
    let chunk = samples.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                let f = &f;
                s.spawn(move || {
                    let lo = (k * chunk).min(samples) as u64;
                    let hi = ((k + 1) * chunk).min(samples) as u64;
                    (lo..hi).map(f).collect::<Vec<T>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Clone)]
pub struct GaugeConfig {
    pub group: Group,
    pub genus: u32,
    pub rows: usize,
    pub cols: usize,
    /// Highest level present (equal to `rows` for a full configuration).
    pub top_level: usize,
    m: Vec<GroupElement>,
    pub u: Vec<GroupElement>,
    pub seed: u64,
    pub index: u64,
}

impl GaugeConfig {
    pub fn identity(lat: &MorseLattice, group: Group) -> Self {
        Self::identity_to(lat, group, lat.rows)
    }

    /// Identity configuration storing levels `0..=top_level` only.
    pub fn identity_to(lat: &MorseLattice, group: Group, top_level: usize) -> Self {
        GaugeConfig {
            group,
            genus: lat.genus,
            rows: lat.rows,
            cols: lat.cols,
            top_level,
            m: vec![GroupElement::identity(group); (top_level + 1) * lat.cols],
            u: vec![GroupElement::identity(group); 2 * lat.genus as usize],
            seed: 0,
            index: 0,
        }
    }

    /// Horizontal edge element at `level` in column `col`.
    #[inline]
    pub fn m(&self, level: usize, col: usize) -> &GroupElement {
        &self.m[level * self.cols + col]
    }

    pub fn set_m(&mut self, level: usize, col: usize, g: GroupElement) {
        self.m[level * self.cols + col] = g;
    }

    /// `Δ_F = M_r^{-1} M_{r+1}` for face `(row, col)`.
    pub fn increment(&self, face: usize) -> GroupElement {
        let (row, col) = (face / self.cols, face % self.cols);
        self.m(row, col).inverse() * *self.m(row + 1, col)
    }

    pub fn holonomy(&self, word: &[(Generator, bool)]) -> Result<GroupElement> {
        let mut h = GroupElement::identity(self.group);
        for &(gen, inv) in word {
            let g = match gen {
                Generator::Face(f) if f < self.rows * self.cols && f / self.cols < self.top_level => self.increment(f),
                Generator::Stable(i) if i < self.u.len() => self.u[i],
                other => return Err(Error::UnknownGenerator(format!("{other:?}"))),
            };
            h = h * if inv { g.inverse() } else { g };
        }
        Ok(h)
    }

    /// Ordered product along the circle at `level`.
    pub fn circle_holonomy(&self, items: &[CircleItem], level: usize) -> GroupElement {
        let mut h = GroupElement::identity(self.group);
        for it in items {
            h = h * match *it {
                CircleItem::Arc { col } => *self.m(level, col),
                CircleItem::Insert { generator, inverse } => {
                    if inverse {
                        self.u[generator].inverse()
                    } else {
                        self.u[generator]
                    }
                }
            };
        }
        h
    }

    pub fn level_holonomy(&self, lat: &MorseLattice, level: usize, insertions: bool) -> Result<GroupElement> {
        if level > self.top_level {
            return Err(Error::IndexOutOfRange(format!("level {level} not sampled")));
        }
        Ok(self.circle_holonomy(&lat.level_circle(level, insertions)?, level))
    }
}

/// Draws gauge configurations for one lattice and action.
pub struct GaugeSampler<'a> {
    lat: &'a MorseLattice,
    group: Group,
    seed: u64,
    samplers: Vec<FaceSampler>,
    /// Sampler slot per face, `u32::MAX` when the column was not prepared.
    slot: Vec<u32>,
}

impl<'a> GaugeSampler<'a> {
    pub fn new(lat: &'a MorseLattice, fam: &ActionFamily, seed: u64) -> Result<Self> {
        let cols: Vec<usize> = (0..lat.cols).collect();
        Self::for_columns(lat, fam, seed, &cols)
    }

    /// Prepares face samplers only for the listed columns.
    pub fn for_columns(lat: &'a MorseLattice, fam: &ActionFamily, seed: u64, cols: &[usize]) -> Result<Self> {
        let mut slot = vec![u32::MAX; lat.faces()];
        let mut by_area: HashMap<u64, u32> = HashMap::new();
        let mut samplers = Vec::new();
        for &c in cols {
            if c >= lat.cols {
                return Err(Error::IndexOutOfRange(format!("column {c}")));
            }
            for r in 0..lat.rows {
                let f = r * lat.cols + c;
                let a = lat.areas()[f];
                let s = match by_area.get(&a.to_bits()) {
                    Some(&s) => s,
                    None => {
                        samplers.push(fam.sampler(a)?);
                        let s = (samplers.len() - 1) as u32;
                        by_area.insert(a.to_bits(), s);
                        s
                    }
                };
                slot[f] = s;
            }
        }
        Ok(GaugeSampler { lat, group: fam.group, seed, samplers, slot })
    }

    pub fn lattice(&self) -> &MorseLattice {
        self.lat
    }

    pub fn sample(&self, index: u64) -> GaugeConfig {
        let cols: Vec<usize> = (0..self.lat.cols).collect();
        self.sample_partial(index, &cols, self.lat.rows)
    }

    /// `M` along one column for levels `0..=top_level`, written into `out`.
    pub fn column_path(&self, stream: &mut DrawStream, col: usize, top_level: usize, out: &mut Vec<GroupElement>) {
        let lat = self.lat;
        out.clear();
        let mut m = GroupElement::identity(self.group);
        out.push(m);
        stream.seek((col * lat.rows) as u128);
        for r in 0..top_level.min(lat.rows) {
            let s = self.slot[r * lat.cols + col];
            assert!(s != u32::MAX, "column {col} was not prepared");
            m = m * self.samplers[s as usize].sample_uniforms(stream.uniforms());
            out.push(m);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Samples the listed columns up to `top_level`; other entries stay at the identity.
    pub fn sample_partial(&self, index: u64, cols: &[usize], top_level: usize) -> GaugeConfig {
        let lat = self.lat;
        let top = top_level.min(lat.rows);
        let mut cfg = GaugeConfig::identity_to(lat, self.group, top);
        cfg.seed = self.seed;
        cfg.index = index;
        let mut stream = DrawStream::new(self.seed, index);
        for &c in cols {
            stream.seek((c * lat.rows) as u128);
            let mut m = GroupElement::identity(self.group);
            for r in 0..top {
                let s = self.slot[r * lat.cols + c];
                assert!(s != u32::MAX, "column {c} was not prepared");
                let d = self.samplers[s as usize].sample_uniforms(stream.uniforms());
                m = m * d;
                cfg.m[(r + 1) * lat.cols + c] = m;
            }
        }
        stream.seek((lat.cols * lat.rows) as u128);
        for b in 0..cfg.u.len() {
            cfg.u[b] = haar_from_uniforms(self.group, stream.uniforms());
        }
        cfg
    }
}

/// Full edge representation: horizontal edges carry `M`, vertical edges the identity.
/// Used to check gauge invariance of loop observables.
#[derive(Debug, Clone)]
pub struct EdgeConfig {
    pub rows: usize,
    pub cols: usize,
    /// Edge from vertex `(level, col)` to `(level, col+1)`.
    pub horizontal: Vec<GroupElement>,
    /// Edge from vertex `(row, col)` to `(row+1, col)`.
    pub vertical: Vec<GroupElement>,
}

impl EdgeConfig {
    pub fn from_gauge(cfg: &GaugeConfig) -> Self {
        EdgeConfig {
            rows: cfg.rows,
            cols: cfg.cols,
            horizontal: cfg.m.clone(),
            vertical: vec![GroupElement::identity(cfg.group); cfg.rows * cfg.cols],
        }
    }

    fn vertex(&self, level: usize, col: usize) -> usize {
        level * self.cols + col % self.cols
    }

    /// `g_e ↦ k_{source} g_e k_{target}^{-1}` with one element per vertex.
    pub fn gauge_transform(&self, k: &[GroupElement]) -> Self {
        let mut out = self.clone();
        for level in 0..=self.rows {
            for col in 0..self.cols {
                let e = level * self.cols + col;
                out.horizontal[e] = k[self.vertex(level, col)] * self.horizontal[e] * k[self.vertex(level, col + 1)].inverse();
                if level < self.rows {
                    out.vertical[e] = k[self.vertex(level, col)] * self.vertical[e] * k[self.vertex(level + 1, col)].inverse();
                }
            }
        }
        out
    }

    /// Holonomy around face `(row, col)` based at its lower-left vertex.
    pub fn face_holonomy(&self, face: usize) -> GroupElement {
        let (row, col) = (face / self.cols, face % self.cols);
        let right = self.vertical[row * self.cols + (col + 1) % self.cols];
        self.vertical[face] * self.horizontal[(row + 1) * self.cols + col] * right.inverse() * self.horizontal[face].inverse()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub irrep: i64,
    pub mean: f64,
    pub se: f64,
    pub prediction: f64,
}

impl MomentRow {
    pub fn within(&self, k: f64) -> bool {
        (self.mean - self.prediction).abs() <= k * self.se || (self.mean == self.prediction)
    }
}

/// MC character moments of the top boundary holonomy against the character-sum prediction
/// `d·Π(μ̂/d)/d^{2g}`.
pub fn boundary_law_check(
    lat: &MorseLattice,
    fam: &ActionFamily,
    irreps: &[Irrep],
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<MomentRow>> {
    let sampler = GaugeSampler::new(lat, fam, seed)?;
    let items = lat.level_circle(lat.rows, true)?;
    let c2max = irreps.iter().map(|l| l.casimir()).fold(0.0, f64::max);
    let spec = convolve_spectrum(lat.areas(), fam, c2max)?;
    let hol = map_samples(samples, threads, |i| sampler.sample(i).circle_holonomy(&items, lat.rows));
    let g2 = 2 * lat.genus as i32;
    irreps
        .iter()
        .map(|l| {
            let xs: Vec<f64> = hol.iter().map(|h| l.character_re(h)).collect();
            let (mean, se) = mean_se(&xs);
            let d = l.dim() as f64;
            let prediction = spec.coefficient(l).unwrap_or(0.0) / d.powi(g2);
            Ok(MomentRow { irrep: l.index, mean, se, prediction })
        })
        .collect()
}

/// MC character moments of the level circle without insertions, against the character
/// coefficient of the faces below the level (`d·e^{−A c2}` for the heat kernel).
pub fn level_circle_check(
    lat: &MorseLattice,
    fam: &ActionFamily,
    level: usize,
    irreps: &[Irrep],
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<MomentRow>> {
    let sampler = GaugeSampler::new(lat, fam, seed)?;
    let items = lat.level_circle(level, false)?;
    let cols: Vec<usize> = (0..lat.cols).collect();
    let hol = map_samples(samples, threads, |i| sampler.sample_partial(i, &cols, level).circle_holonomy(&items, level));
    let c2max = irreps.iter().map(|l| l.casimir()).fold(0.0, f64::max);
    let below: Vec<f64> = lat.areas()[..level * lat.cols].to_vec();
    let spec = if below.is_empty() { None } else { Some(convolve_spectrum(&below, fam, c2max)?) };
    irreps
        .iter()
        .map(|l| {
            let xs: Vec<f64> = hol.iter().map(|h| l.character_re(h)).collect();
            let (mean, se) = mean_se(&xs);
            let prediction = match &spec {
                None => l.dim() as f64,
                Some(s) => s.coefficient(l).unwrap_or(0.0),
            };
            Ok(MomentRow { irrep: l.index, mean, se, prediction })
        })
        .collect()
}

/// Observable of a configuration, supported on the faces of rows `< support_rows`.
pub struct Observable<'f> {
    pub support_rows: usize,
    f: Box<dyn Fn(&GaugeConfig) -> f64 + Sync + 'f>,
}

impl<'f> Observable<'f> {
    pub fn new(support_rows: usize, f: impl Fn(&GaugeConfig) -> f64 + Sync + 'f) -> Self {
        Observable { support_rows, f: Box::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Observable::new(0, move |_| c)
    }

    /// `Re χ_λ(Δ_F)`.
    pub fn face_character(lat: &MorseLattice, face: usize, irrep: Irrep) -> Self {
        let row = face / lat.cols;
        Observable::new(row + 1, move |cfg| irrep.character_re(&cfg.increment(face)))
    }

    pub fn eval(&self, cfg: &GaugeConfig) -> f64 {
        (self.f)(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionedEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ess: f64,
    pub samples: usize,
}

/// Self-normalized estimate of `E[F | H_top = 1]` from configurations sampled up to
/// `level`, weighted by the density of the faces above `level` at `H_level^{-1}`.
pub fn condition_close(
    lat: &MorseLattice,
    fam: &ActionFamily,
    observable: &Observable<'_>,
    level: usize,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<ConditionedEstimate> {
    if observable.support_rows > level {
        return Err(Error::SupportViolation { row: observable.support_rows - 1, level });
    }
    let items = lat.level_circle(level, true)?;
    let above = &lat.areas()[level * lat.cols..];
    let c2max = conditioning_truncation(fam, above)?;
    let rest = convolve_spectrum(above, fam, c2max)?;
    let sampler = GaugeSampler::new(lat, fam, seed)?;
    let cols: Vec<usize> = (0..lat.cols).collect();
    let pairs = map_samples(samples, threads, |i| {
        let cfg = sampler.sample_partial(i, &cols, level);
        let h = cfg.circle_holonomy(&items, level);
        (observable.eval(&cfg), rest.value(&h.inverse()))
    });
    let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let fw: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
    let sw = pairwise_sum(&w);
    let sw2 = pairwise_sum(&w.iter().map(|x| x * x).collect::<Vec<_>>());
    let ess = sw * sw / sw2;
    if ess < 0.01 * samples as f64 {
        return Err(Error::EssCollapse { ess, samples });
    }
    let estimate = pairwise_sum(&fw) / sw;
    // delta-method standard error of the ratio estimator
    let resid: Vec<f64> = pairs.iter().map(|(f, w)| (w * (f - estimate)).powi(2)).collect();
    let se = pairwise_sum(&resid).sqrt() / sw;
    Ok(ConditionedEstimate { estimate, se, ess, samples })
}

/// Smallest truncation whose spectrum tail is below tolerance for the given areas.
fn conditioning_truncation(fam: &ActionFamily, areas: &[f64]) -> Result<f64> {
    let total = pairwise_sum(areas);
    let mut c2 = (40.0 / total).max(10.0);
    for _ in 0..12 {
        let s = convolve_spectrum(areas, fam, c2)?;
        if !s.under_truncated {
            return Ok(c2);
        }
        c2 *= 2.0;
    }
    Err(Error::UnderTruncated { tail: convolve_spectrum(areas, fam, c2)?.tail })
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementMoment {
    pub estimate: f64,
    pub se: f64,
    /// Shape of the bound, `l^β((m−n)^β ε^β + n^{2β}ε^{2β})` with `ε` the grid step squared.
    pub bound_shape: f64,
    pub rejected: usize,
}

/// MC estimate of `E|Σ_{j=k}^{l−1} (log M^{(m)}_j − log M^{(n)}_j)|^{2β}` for levels `n < m`.
#[allow(clippy::too_many_arguments)]
pub fn increment_moment_check(
    lat: &MorseLattice,
    fam: &ActionFamily,
    k: usize,
    l: usize,
    n: usize,
    m: usize,
    two_beta: f64,
    samples: usize,
    seed: u64,
) -> Result<IncrementMoment> {
    if k > l || l > lat.cols || n > m || m > lat.rows {
        return Err(Error::IndexOutOfRange(format!("columns {k}..{l}, levels {n}..{m}")));
    }
    let beta = 0.5 * two_beta;
    let eps = lat.step * lat.step;
    let width = (l - k) as f64;
    let bound_shape = width.powf(beta) * (((m - n) as f64 * eps).powf(beta) + (n as f64).powf(two_beta) * eps.powf(two_beta));
    if k == l {
        return Ok(IncrementMoment { estimate: 0.0, se: 0.0, bound_shape, rejected: 0 });
    }
    let cols: Vec<usize> = (k..l).collect();
    let sampler = GaugeSampler::for_columns(lat, fam, seed, &cols)?;
    let mut vals = Vec::with_capacity(samples);
    let mut rejected = 0;
    for i in 0..samples as u64 {
        let cfg = sampler.sample_partial(i, &cols, m);
        let mut acc = [0.0f64; 3];
        let mut bad = false;
        for &c in &cols {
            match (cfg.m(m, c).log_map(), cfg.m(n, c).log_map()) {
                (Ok(a), Ok(b)) => {
                    let d = a.sub(&b).coords();
                    for q in 0..3 {
                        acc[q] += d[q];
                    }
                }
                _ => bad = true,
            }
        }
        if bad {
            rejected += 1;
            continue;
        }
        let norm = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
        vals.push(norm.powf(two_beta));
    }
    if rejected * 1000 > samples {
        return Err(Error::CutLocusFractionExceeded { rejected, total: samples });
    }
    let (estimate, se) = mean_se(&vals);
    Ok(IncrementMoment { estimate, se, bound_shape, rejected })
}
