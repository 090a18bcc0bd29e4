//! Piecewise lattice 1-forms, the discrete white noise and their pairings.
//!
//! The `dθ` coefficient on the arc `(level, col)` is `log M / h`; it is constant in
//! θ along the arc and affine in r between levels. The flat part enters through
//! `log U_b` at the curve slots.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::action::ActionFamily;
use crate::error::{Error, Result};
use crate::group::{AlgebraElement, Group, GroupElement};
use crate::lattice::MorseLattice;
use crate::quad::gl8;
use crate::sampler::{map_samples, GaugeConfig, GaugeSampler};
use crate::stats::{mean_se, pairwise_sum};
use crate::stream::DrawStream;

/// Unstable-curve term crossing level circles above `above_level`.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub angle: f64,
    pub generator: usize,
    pub inverse: bool,
    pub above_level: usize,
    pub log: AlgebraElement,
}

#[derive(Debug, Clone)]
pub struct LatticeOneForm {
    pub group: Group,
    pub rows: usize,
    pub cols: usize,
    pub step: f64,
    pub top_level: usize,
    coeff: Vec<AlgebraElement>,
    pub crossings: Vec<Crossing>,
    u: Vec<GroupElement>,
}

/// Builds the 1-form of a configuration. Fails with `CutLocus` when some `M` has no
/// principal logarithm.
pub fn assemble(cfg: &GaugeConfig, lat: &MorseLattice) -> Result<LatticeOneForm> {
    if cfg.rows != lat.rows || cfg.cols != lat.cols {
        return Err(Error::InvalidArgument("configuration does not match lattice".into()));
    }
    let inv_h = 1.0 / lat.step;
    let mut coeff = Vec::with_capacity((cfg.top_level + 1) * lat.cols);
    for level in 0..=cfg.top_level {
        for col in 0..lat.cols {
            coeff.push(cfg.m(level, col).log_map()?.scale(inv_h));
        }
    }
    let slots = lat.slot_angles();
    let mut crossings = Vec::with_capacity(slots.len());
    for (b, &angle) in slots.iter().enumerate() {
        let (generator, inverse, above_level) = lat.slot_curve(b);
        let l = cfg.u[generator].log_map()?;
        crossings.push(Crossing { angle, generator, inverse, above_level, log: if inverse { l.scale(-1.0) } else { l } });
    }
    Ok(LatticeOneForm {
        group: cfg.group,
        rows: lat.rows,
        cols: lat.cols,
        step: lat.step,
        top_level: cfg.top_level,
        coeff,
        crossings,
        u: cfg.u.clone(),
    })
}

impl LatticeOneForm {
    pub fn period(&self) -> f64 {
        self.cols as f64 * self.step
    }

    /// Stored coefficient at a grid level and column.
    pub fn node(&self, level: usize, col: usize) -> &AlgebraElement {
        &self.coeff[level * self.cols + col]
    }

    /// `log M` on the arc `(level, col)`.
    pub fn line_value(&self, level: usize, col: usize) -> AlgebraElement {
        self.node(level, col).scale(self.step)
    }

    fn locate(&self, r: f64) -> Result<(usize, f64)> {
        let top = self.top_level as f64 * self.step;
        if !(r >= 0.0 && r <= top) {
            return Err(Error::IndexOutOfRange(format!("r = {r} outside [0, {top}]")));
        }
        let x = r / self.step;
        let i = (x.floor() as usize).min(self.top_level.saturating_sub(1));
        Ok((i, x - i as f64))
    }

    fn column_of(&self, theta: f64) -> usize {
        let p = self.period();
        let t = theta.rem_euclid(p);
        ((t / self.step) as usize).min(self.cols - 1)
    }

    fn coeff_at(&self, i: usize, s: f64, col: usize) -> AlgebraElement {
        let a = self.node(i, col);
        if s == 0.0 || self.top_level == 0 {
            return *a;
        }
        a.scale(1.0 - s).add(&self.node(i + 1, col).scale(s))
    }

    /// The `dθ` coefficient of `A^M` at `(r, θ)`.
    pub fn eval(&self, r: f64, theta: f64) -> Result<AlgebraElement> {
        let (i, s) = self.locate(r)?;
        Ok(self.coeff_at(i, s, self.column_of(theta)))
    }

    /// Arc pieces `(col, length)` of `[θ1, θ2]` and the crossings met, in order.
    fn pieces(&self, r: f64, t1: f64, t2: f64) -> Result<Vec<Piece>> {
        let p = self.period();
        if !(t2 > t1) || t2 - t1 > p * (1.0 + 1e-12) {
            return Err(Error::DegenerateInterval);
        }
        let h = self.step;
        let mut out = Vec::new();
        let base = (t1 / p).floor() * p;
        let (a, b) = (t1 - base, t2 - base);
        let mut x = a;
        let mut k = (a / h).floor() as i64;
        while x < b {
            let end = ((k + 1) as f64 * h).min(b);
            if end > x {
                out.push(Piece::Arc { col: (k.rem_euclid(self.cols as i64)) as usize, len: end - x });
            }
            // crossings sit at column boundaries
            let boundary = (k + 1) as f64 * h;
            if boundary <= b {
                for (ci, c) in self.crossings.iter().enumerate() {
                    let wraps = ((boundary - c.angle) / p).round();
                    if (boundary - c.angle - wraps * p).abs() < 0.25 * h && r > c.above_level as f64 * h + 1e-12 {
                        out.push(Piece::Cross(ci));
                    }
                }
            }
            x = end;
            k += 1;
        }
        Ok(out)
    }

    /// `∫ A` along the level circle at `r` from `θ1` to `θ2` (`θ1 < θ2 ≤ θ1 + period`).
    pub fn line_integral(&self, r: f64, t1: f64, t2: f64) -> Result<AlgebraElement> {
        let (i, s) = self.locate(r)?;
        let mut acc = AlgebraElement::zero(self.group);
        for piece in self.pieces(r, t1, t2)? {
            acc = match piece {
                Piece::Arc { col, len } => acc.add(&self.coeff_at(i, s, col).scale(len)),
                Piece::Cross(c) => acc.add(&self.crossings[c].log),
            };
        }
        Ok(acc)
    }

    /// Ordered product of segment exponentials with the `U_b^{±1}` factors at crossings.
    pub fn holonomy_ode(&self, r: f64, t1: f64, t2: f64) -> Result<GroupElement> {
        let (i, s) = self.locate(r)?;
        let mut h = GroupElement::identity(self.group);
        for piece in self.pieces(r, t1, t2)? {
            h = h * match piece {
                Piece::Arc { col, len } => self.coeff_at(i, s, col).scale(len).exp_map(),
                Piece::Cross(c) => {
                    let x = &self.crossings[c];
                    if x.inverse {
                        self.u[x.generator].inverse()
                    } else {
                        self.u[x.generator]
                    }
                }
            };
        }
        Ok(h)
    }
}

enum Piece {
    Arc { col: usize, len: f64 },
    Cross(usize),
}

/// Discrete white noise: per face `(log M_{r+} − log M_r) / σ(F)`.
pub fn xi_n(cfg: &GaugeConfig, lat: &MorseLattice) -> Result<Vec<AlgebraElement>> {
    let form = assemble(cfg, lat)?;
    Ok(xi_from_form(&form, lat))
}

pub fn xi_from_form(form: &LatticeOneForm, lat: &MorseLattice) -> Vec<AlgebraElement> {
    let rows = form.top_level;
    let mut out = Vec::with_capacity(rows * lat.cols);
    for row in 0..rows {
        for col in 0..lat.cols {
            let d = form.line_value(row + 1, col).sub(&form.line_value(row, col));
            out.push(d.scale(1.0 / lat.areas()[row * lat.cols + col]));
        }
    }
    out
}

/// Grid description of a scalar test function, bilinear between nodes and zero
/// outside the node box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestGrid {
    pub r_nodes: Vec<f64>,
    pub theta_nodes: Vec<f64>,
    /// Row-major values, `values[i][j]` at `(r_nodes[i], theta_nodes[j])`.
    pub values: Vec<Vec<f64>>,
    pub direction: Vec<f64>,
}

impl TestGrid {
    pub fn eval(&self, r: f64, t: f64) -> f64 {
        let find = |xs: &[f64], x: f64| -> Option<(usize, f64)> {
            if xs.len() < 2 || x < xs[0] || x > xs[xs.len() - 1] {
                return None;
            }
            let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1) - 1;
            Some((i, (x - xs[i]) / (xs[i + 1] - xs[i])))
        };
        match (find(&self.r_nodes, r), find(&self.theta_nodes, t)) {
            (Some((i, a)), Some((j, b))) => {
                let v = &self.values;
                (1.0 - a) * ((1.0 - b) * v[i][j] + b * v[i][j + 1]) + a * ((1.0 - b) * v[i + 1][j] + b * v[i + 1][j + 1])
            }
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sorted = |xs: &[f64]| xs.len() >= 2 && xs.windows(2).all(|w| w[1] > w[0]) && xs.iter().all(|x| x.is_finite());
        if !sorted(&self.r_nodes) || !sorted(&self.theta_nodes) {
            return Err(Error::InvalidArgument("test grid nodes must be increasing and finite".into()));
        }
        if self.values.len() != self.r_nodes.len()
            || self.values.iter().any(|row| row.len() != self.theta_nodes.len() || row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument("test grid values do not match nodes".into()));
        }
        Ok(())
    }
}

/// Face means `K_F ψ` of a scalar test function times an algebra direction.
#[derive(Debug, Clone)]
pub struct TestForm {
    pub direction: AlgebraElement,
    /// `(face, K_F ψ)` for faces meeting the support.
    pub face_means: Vec<(usize, f64)>,
    /// `(r0, r1, θ0, θ1)`.
    pub support: (f64, f64, f64, f64),
    /// `‖ψ‖²_{L²(σ)}` by the same per-face quadrature.
    pub sigma_norm_sq: f64,
}

impl TestForm {
    pub fn zero(lat: &MorseLattice, group: Group) -> Self {
        let _ = lat;
        TestForm { direction: AlgebraElement::zero(group), face_means: Vec::new(), support: (0.0, 0.0, 0.0, 0.0), sigma_norm_sq: 0.0 }
    }

    /// Face means of `f` under each face's own area weight, over faces meeting `support`.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(
        lat: &MorseLattice,
        f: F,
        direction: AlgebraElement,
        support: (f64, f64, f64, f64),
    ) -> Result<Self> {
        let (r0, r1, t0, t1) = support;
        let h = lat.step;
        if !(r0 >= 0.0 && r1 > r0 && r1 <= lat.rows as f64 * h && t0 >= 0.0 && t1 > t0 && t1 <= lat.period()) {
            return Err(Error::InvalidArgument(format!("support {support:?} outside the cylinder")));
        }
        let norm = direction.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("zero direction".into()));
        }
        let direction = direction.scale(1.0 / norm);
        let (x, w) = gl8();
        let rows = ((r0 / h).floor() as usize)..((r1 / h).ceil() as usize).min(lat.rows);
        let cols = ((t0 / h).floor() as usize)..((t1 / h).ceil() as usize).min(lat.cols);
        let mut face_means = Vec::new();
        let mut sq = Vec::new();
        for row in rows {
            for col in cols.clone() {
                let (fr, ft) = (row as f64 * h, col as f64 * h);
                let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
                for (xi, wi) in x.iter().zip(w) {
                    for (xj, wj) in x.iter().zip(w) {
                        let r = fr + 0.5 * h * (1.0 + xi);
                        let t = ft + 0.5 * h * (1.0 + xj);
                        let wt = wi * wj * lat.area_weight(r, t);
                        let v = f(r, t);
                        if !v.is_finite() {
                            return Err(Error::InvalidArgument(format!("test function not finite at ({r}, {t})")));
                        }
                        m0 += wt;
                        m1 += wt * v;
                        m2 += wt * v * v;
                    }
                }
                let face = row * lat.cols + col;
                let mean = m1 / m0;
                if mean != 0.0 || m2 != 0.0 {
                    face_means.push((face, mean));
                    sq.push(lat.areas()[face] * m2 / m0);
                }
            }
        }
        Ok(TestForm { direction, face_means, support, sigma_norm_sq: pairwise_sum(&sq) })
    }

    pub fn from_grid(lat: &MorseLattice, group: Group, grid: &TestGrid) -> Result<Self> {
        grid.validate()?;
        let dir = AlgebraElement::from_coords(group, &grid.direction);
        let support = (
            grid.r_nodes[0],
            *grid.r_nodes.last().unwrap(),
            grid.theta_nodes[0],
            *grid.theta_nodes.last().unwrap(),
        );
        Self::from_fn(lat, |r, t| grid.eval(r, t), dir, support)
    }

    /// Highest face row touched, plus one.
    pub fn support_rows(&self, cols: usize) -> usize {
        self.face_means.iter().map(|(f, _)| f / cols + 1).max().unwrap_or(0)
    }

    pub fn support_cols(&self, cols: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.face_means.iter().map(|(f, _)| f % cols).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// `Σ_F σ(F) (K_F ψ)²`.
    pub fn discrete_norm_sq(&self, lat: &MorseLattice) -> f64 {
        pairwise_sum(&self.face_means.iter().map(|&(f, m)| lat.areas()[f] * m * m).collect::<Vec<_>>())
    }
}

/// `⟨ξ_N, ψ⟩ = Σ_F σ(F) ⟨ξ_F, K_F ψ⟩`.
pub fn pair(xi: &[AlgebraElement], lat: &MorseLattice, psi: &TestForm) -> Result<f64> {
    let mut terms = Vec::with_capacity(psi.face_means.len());
    for &(f, m) in &psi.face_means {
        let x = xi.get(f).ok_or_else(|| Error::IndexOutOfRange(format!("face {f}")))?;
        terms.push(lat.areas()[f] * m * x.inner(&psi.direction)?);
    }
    Ok(pairwise_sum(&terms))
}

/// Pairing computed directly from a configuration, touching only faces in the support.
pub fn pair_config(cfg: &GaugeConfig, lat: &MorseLattice, psi: &TestForm) -> Result<f64> {
    let mut terms = Vec::with_capacity(psi.face_means.len());
    for &(f, m) in &psi.face_means {
        let (row, col) = (f / lat.cols, f % lat.cols);
        let d = cfg.m(row + 1, col).log_map()?.sub(&cfg.m(row, col).log_map()?);
        terms.push(m * d.inner(&psi.direction)?);
    }
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, Serialize)]
pub struct CharFun {
    pub re: f64,
    pub im: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub samples: usize,
    pub rejected: usize,
}

impl CharFun {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    /// Standard error of `|estimate − target|` (combined componentwise).
    pub fn se(&self) -> f64 {
        self.se_re.hypot(self.se_im)
    }
}

/// MC estimate of `E exp(i⟨ξ_N, ψ⟩)`. Samples with a cut-locus logarithm are dropped and counted.
pub fn charfun_mc(
    lat: &MorseLattice,
    fam: &ActionFamily,
    psi: &TestForm,
    samples: usize,
    seed: u64,
    threads: usize,
) -> Result<CharFun> {
    if psi.face_means.is_empty() {
        return Ok(CharFun { re: 1.0, im: 0.0, se_re: 0.0, se_im: 0.0, samples, rejected: 0 });
    }
    let cols = psi.support_cols(lat.cols);
    let top = psi.support_rows(lat.cols);
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lat.cols];
    for &(f, m) in &psi.face_means {
        by_col[f % lat.cols].push((f / lat.cols, m));
    }
    let sampler = GaugeSampler::for_columns(lat, fam, seed, &cols)?;
    let vals = map_samples(samples, threads, |i| {
        let mut stream = DrawStream::new(seed, i);
        let mut path = Vec::with_capacity(top + 1);
        let mut proj = Vec::with_capacity(top + 1);
        let mut terms = Vec::with_capacity(psi.face_means.len());
        for &c in &cols {
            sampler.column_path(&mut stream, c, top, &mut path);
            proj.clear();
            for g in &path {
                proj.push(g.log_map().ok()?.inner(&psi.direction).ok()?);
            }
            for &(row, m) in &by_col[c] {
                terms.push(m * (proj[row + 1] - proj[row]));
            }
        }
        Some(pairwise_sum(&terms))
    });
    let x: Vec<f64> = vals.iter().flatten().copied().collect();
    let rejected = samples - x.len();
    let (re, se_re) = mean_se(&x.iter().map(|v| v.cos()).collect::<Vec<_>>());
    let (im, se_im) = mean_se(&x.iter().map(|v| v.sin()).collect::<Vec<_>>());
    Ok(CharFun { re, im, se_re, se_im, samples, rejected })
}

/// Sum over columns of the error terms bounding the deviation of the characteristic
/// functional from its product form, with moment exponent `p`.
pub fn charfun_error_terms(lat: &MorseLattice, p: f64) -> f64 {
    let mut per_col = Vec::with_capacity(lat.cols);
    for col in 0..lat.cols {
        let s: Vec<f64> = (0..lat.rows).map(|row| lat.areas()[row * lat.cols + col]).collect();
        let sum = pairwise_sum(&s);
        let pw = |e: f64| pairwise_sum(&s.iter().map(|x| x.powf(e)).collect::<Vec<_>>());
        per_col.push(sum.powf(1.5) + pw(0.5) * sum.powf(p) + pw(p) + pw(1.5) + sum * sum);
    }
    pairwise_sum(&per_col)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Irrep;
    use crate::lattice::{AreaSpec, CircleItem};

    fn setup() -> (MorseLattice, GaugeConfig) {
        let lat = MorseLattice::build(1, 3, AreaSpec::Uniform, 1.0).unwrap();
        let s = GaugeSampler::new(&lat, &ActionFamily::wilson(Group::SU2), 5).unwrap();
        let cfg = s.sample(2);
        (lat, cfg)
    }

    #[test]
    fn identity_config_gives_zero_form() {
        let lat = MorseLattice::build(1, 2, AreaSpec::Uniform, 1.0).unwrap();
        let cfg = GaugeConfig::identity(&lat, Group::SU2);
        let form = assemble(&cfg, &lat).unwrap();
        assert_eq!(form.eval(1.3, 0.7).unwrap().norm(), 0.0);
        assert!(xi_n(&cfg, &lat).unwrap().iter().all(|x| x.norm() == 0.0));
        assert_eq!(form.line_integral(2.5, 0.1, 1.9).unwrap().norm(), 0.0);
        assert_eq!(form.holonomy_ode(2.5, 0.0, 2.0).unwrap(), GroupElement::identity(Group::SU2));
    }

    #[test]
    fn interpolation_nodes_and_midpoints() {
        let (lat, cfg) = setup();
        let form = assemble(&cfg, &lat).unwrap();
        let h = lat.step;
        let (level, col) = (5, 3);
        let node = form.eval(level as f64 * h, (col as f64 + 0.5) * h).unwrap();
        let exact = cfg.m(level, col).log_map().unwrap().scale(1.0 / h);
        assert_eq!(node, exact);
        let mid = form.eval((level as f64 + 0.5) * h, (col as f64 + 0.5) * h).unwrap();
        let mean = form.node(level, col).add(form.node(level + 1, col)).scale(0.5);
        assert!(mid.sub(&mean).norm() < 1e-12);
        assert_eq!(form.eval(0.0, 0.3).unwrap().norm(), 0.0);
    }

    #[test]
    fn top_circle_matches_sampler_holonomy() {
        let (lat, cfg) = setup();
        let form = assemble(&cfg, &lat).unwrap();
        let top = lat.rows as f64 * lat.step;
        let ode = form.holonomy_ode(top, 0.0, lat.period()).unwrap();
        let direct = cfg.level_holonomy(&lat, lat.rows, true).unwrap();
        let l = Irrep::new(Group::SU2, 1).unwrap();
        assert!((l.character_re(&ode) - l.character_re(&direct)).abs() < 1e-12);
        let q = |g: GroupElement| g.quaternion().unwrap();
        for (a, b) in q(ode).iter().zip(q(direct)) {
            assert!((a - b).abs() < 1e-12);
        }
        // below the saddles no crossing is met
        let level = 4;
        let items: Vec<CircleItem> = lat.level_circle(level, false).unwrap();
        let low = form.holonomy_ode(level as f64 * lat.step, 0.0, lat.period()).unwrap();
        let direct = cfg.circle_holonomy(&items, level);
        for (a, b) in q(low).iter().zip(q(direct)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn holonomy_is_multiplicative() {
        let (lat, cfg) = setup();
        let form = assemble(&cfg, &lat).unwrap();
        let r = 3.3;
        for &(a, b, c) in &[(0.1, 0.77, 1.6), (0.0, 0.5, 2.0), (0.3, 1.0, 1.05)] {
            let lhs = form.holonomy_ode(r, a, b).unwrap() * form.holonomy_ode(r, b, c).unwrap();
            let rhs = form.holonomy_ode(r, a, c).unwrap();
            for (x, y) in lhs.quaternion().unwrap().iter().zip(rhs.quaternion().unwrap()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(matches!(form.line_integral(r, 1.0, 1.0), Err(Error::DegenerateInterval)));
    }

    #[test]
    fn abelian_column_sums_telescope() {
        let lat = MorseLattice::build(1, 3, AreaSpec::MorseSingular, 1.0).unwrap();
        let s = GaugeSampler::new(&lat, &ActionFamily::villain(Group::U1), 11).unwrap();
        let cfg = s.sample(0);
        let xi = xi_n(&cfg, &lat).unwrap();
        for col in [0, 5, 13] {
            let sum: f64 = (0..lat.rows).map(|r| xi[r * lat.cols + col].coords()[0] * lat.areas()[r * lat.cols + col]).sum();
            let top = cfg.m(lat.rows, col).log_map().unwrap().coords()[0];
            assert!((sum - top).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_test_form_has_unit_charfun() {
        let lat = MorseLattice::build(1, 2, AreaSpec::Uniform, 1.0).unwrap();
        let z = TestForm::zero(&lat, Group::U1);
        let c = charfun_mc(&lat, &ActionFamily::villain(Group::U1), &z, 10, 1, 1).unwrap();
        assert_eq!((c.re, c.im), (1.0, 0.0));
    }

    #[test]
    fn grid_test_form_round_trip() {
        let lat = MorseLattice::build(1, 3, AreaSpec::Uniform, 1.0).unwrap();
        let grid = TestGrid {
            r_nodes: vec![0.5, 1.0],
            theta_nodes: vec![0.25, 0.75],
            values: vec![vec![2.0, 2.0], vec![2.0, 2.0]],
            direction: vec![3.0],
        };
        let tf = TestForm::from_grid(&lat, Group::U1, &grid).unwrap();
        assert_eq!(tf.face_means.len(), 16);
        assert!(tf.face_means.iter().all(|&(_, m)| (m - 2.0).abs() < 1e-14));
        let area: f64 = tf.face_means.iter().map(|&(f, _)| lat.areas()[f]).sum();
        assert!((tf.sigma_norm_sq - 4.0 * area).abs() < 1e-12);
        let json = serde_json::to_string(&grid).unwrap();
        let back: TestGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back.values, grid.values);
    }

    #[test]
    fn error_terms_shrink_on_uniform_lattice() {
        let v: Vec<f64> = (3..=7)
            .map(|n| charfun_error_terms(&MorseLattice::build(1, n, AreaSpec::Uniform, 1.0).unwrap(), 2.0))
            .collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }
}
