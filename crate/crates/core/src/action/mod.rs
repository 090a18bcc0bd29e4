//! Heat-kernel (Villain), Manton and Wilson action families on U(1) and SU(2).
//!
//! All three are class measures, so densities, Fourier coefficients and
//! samplers only see the class angle `a ∈ [0, π]`. Wilson uses the normalized
//! trace, `exp(−(1 − Re tr g / dim V)/t)`, which for both groups reads
//! `exp(−(1 − cos a)/t)`.

mod table;
mod verify;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::group::{Group, GroupElement, Irrep};
use crate::quad;
use crate::stream::uniforms_from;

pub use table::ClassTable;
pub use verify::{HReport, MomentEstimate};

/// Absolute tail target for truncated character sums.
pub const CHARACTER_TAIL_TARGET: f64 = 1e-12;
/// Tail above which a configured truncation is rejected.
pub const CHARACTER_TAIL_LIMIT: f64 = 1e-10;
/// Class-angle cutoff for sampling tables, in units of `√t`.
const TABLE_SPAN: f64 = 14.0;
/// Largest time at which the Villain density is evaluated by images.
const IMAGE_SUM_MAX_TIME: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Villain,
    Manton,
    Wilson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFamily {
    pub kind: ActionKind,
    pub group: Group,
    /// Fixed Casimir truncation for character sums; `None` picks it from the tail bound.
    pub c2max: Option<f64>,
    /// Number of intervals in a freshly built sampling table.
    pub table_nodes: usize,
    pub t_max: f64,
}

impl ActionFamily {
    pub fn new(kind: ActionKind, group: Group) -> Self {
        ActionFamily { kind, group, c2max: None, table_nodes: 2048, t_max: 4.0 }
    }

    pub fn villain(group: Group) -> Self {
        Self::new(ActionKind::Villain, group)
    }

    pub fn manton(group: Group) -> Self {
        Self::new(ActionKind::Manton, group)
    }

    pub fn wilson(group: Group) -> Self {
        Self::new(ActionKind::Wilson, group)
    }

    pub fn with_c2max(mut self, c2max: f64) -> Self {
        self.c2max = Some(c2max);
        self
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonPositiveTime(t));
        }
        Ok(())
    }

    /// Unnormalized class weight of Manton/Wilson with respect to Haar measure.
    fn raw_weight(&self, t: f64, a: f64) -> f64 {
        match self.kind {
            ActionKind::Manton => (-a * a / (2.0 * t)).exp(),
            ActionKind::Wilson => {
                let s = (0.5 * a).sin();
                (-2.0 * s * s / t).exp()
            }
            ActionKind::Villain => unreachable!("villain has no closed-form weight"),
        }
    }

    /// Normalizer of the Manton/Wilson weight against Haar probability measure.
    pub fn normalizer(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if self.kind == ActionKind::Villain {
            return Ok(1.0);
        }
        let key = (self.kind, self.group, t.to_bits());
        let cache = normalizer_cache();
        if let Some(z) = cache.lock().unwrap().get(&key) {
            return Ok(*z);
        }
        let g = self.group;
        let z = quad::integrate_with_breaks(
            |a| self.raw_weight(t, a) * g.class_haar_density(a),
            &class_breaks(t),
            0.0,
            1e-14,
        )?;
        let mut c = cache.lock().unwrap();
        if c.len() > 1 << 16 {
            c.clear();
        }
        c.insert(key, z);
        Ok(z)
    }

    /// Density with respect to normalized Haar measure.
    pub fn density(&self, t: f64, g: &GroupElement) -> Result<f64> {
        self.check_group(g.group())?;
        self.density_at_angle(t, g.class_angle())
    }

    pub fn density_at_angle(&self, t: f64, a: f64) -> Result<f64> {
        self.check_time(t)?;
        match self.kind {
            ActionKind::Villain => self.villain_density(t, a),
            _ => Ok(self.raw_weight(t, a) / self.normalizer(t)?),
        }
    }

    fn check_group(&self, g: Group) -> Result<()> {
        if g != self.group {
            return Err(Error::GroupMismatch(self.group, g));
        }
        Ok(())
    }

    /// Highest irrep index kept in the Villain character sum at time `t`.
    pub fn villain_truncation(&self, t: f64) -> Result<usize> {
        let m = villain_auto_truncation(self.group, t);
        match self.c2max {
            None => Ok(m),
            Some(c2max) => {
                let mmax = max_index_below(self.group, c2max);
                let tail = villain_tail(self.group, t, mmax);
                if tail > CHARACTER_TAIL_LIMIT {
                    return Err(Error::TruncationInsufficient { c2max, tail });
                }
                Ok(mmax.min(m))
            }
        }
    }

    /// Villain density at class angle `a`. With a configured truncation this is the
    /// truncated character sum; otherwise the image sum is used at small times,
    /// where the two agree to the tail target.
    fn villain_density(&self, t: f64, a: f64) -> Result<f64> {
        if self.c2max.is_none() && t <= IMAGE_SUM_MAX_TIME {
            return Ok(villain_image_sum(self.group, t, a));
        }
        let m = self.villain_truncation(t)?;
        Ok(villain_class_sum(self.group, t, a, m))
    }

    /// `∫ χ_λ dμ_t`; real for these symmetric measures.
    pub fn fourier_coeff(&self, t: f64, l: &Irrep) -> Result<f64> {
        self.check_time(t)?;
        self.check_group(l.group)?;
        let heat = l.dim() as f64 * (-t * l.casimir()).exp();
        match (self.kind, self.group) {
            (ActionKind::Villain, _) => Ok(heat),
            _ if l.is_trivial() => Ok(1.0),
            (ActionKind::Manton, Group::U1) => {
                let (j0, jn, scale) = manton_u1_parts(t, l.index.unsigned_abs())?;
                Ok(heat + scale * (j0 * heat - jn))
            }
            _ => self.fourier_coeff_quadrature(t, l),
        }
    }

    fn fourier_coeff_quadrature(&self, t: f64, l: &Irrep) -> Result<f64> {
        let z = self.normalizer(t)?;
        let g = self.group;
        let m = l.index.unsigned_abs() as usize;
        let n = l.index as f64;
        let f = |a: f64| {
            let chi = match g {
                Group::U1 => (n * a).cos(),
                Group::SU2 => crate::group::su2_character(m, a.cos(), a),
            };
            chi * self.raw_weight(t, a) * g.class_haar_density(a)
        };
        let mut breaks = class_breaks(t);
        // resolve oscillations of high characters
        let osc = (l.index.unsigned_abs() as usize + 1).min(4096);
        if osc > 8 {
            let step = PI / osc as f64;
            let mut extra: Vec<f64> = (1..osc).map(|k| k as f64 * step).collect();
            breaks.append(&mut extra);
            breaks.sort_by(|a, b| a.total_cmp(b));
            breaks.dedup();
        }
        let v = quad::integrate_with_breaks(f, &breaks, 1e-16 * z, 1e-13)?;
        Ok(v / z)
    }

    /// Relative deviation `ε` in `μ̂_t(λ) = d_λ e^{−t c2(λ)} (1 + ε)`; `None` when the
    /// heat coefficient underflows.
    pub fn heat_deviation(&self, t: f64, l: &Irrep) -> Result<Option<f64>> {
        self.check_time(t)?;
        let tc = t * l.casimir();
        if tc > 600.0 {
            return Ok(None);
        }
        match (self.kind, self.group) {
            (ActionKind::Villain, _) => Ok(Some(0.0)),
            _ if l.is_trivial() => Ok(Some(0.0)),
            (ActionKind::Manton, Group::U1) => Ok(Some(manton_u1_deviation(t, l.index.unsigned_abs())?)),
            _ => {
                let c = self.fourier_coeff_quadrature(t, l)?;
                Ok(Some(c / (l.dim() as f64 * (-tc).exp()) - 1.0))
            }
        }
    }

    /// Fourier coefficient together with its relative deviation from the heat kernel,
    /// sharing one quadrature.
    pub(crate) fn coeff_and_deviation(&self, t: f64, l: &Irrep) -> Result<(f64, Option<f64>)> {
        self.check_time(t)?;
        self.check_group(l.group)?;
        let tc = t * l.casimir();
        let heat = l.dim() as f64 * (-tc).exp();
        match (self.kind, self.group) {
            (ActionKind::Villain, _) => Ok((heat, Some(0.0))),
            _ if l.is_trivial() => Ok((1.0, Some(0.0))),
            (ActionKind::Manton, Group::U1) => {
                let eps = manton_u1_deviation(t, l.index.unsigned_abs())?;
                Ok((heat * (1.0 + eps), (tc <= 600.0).then_some(eps)))
            }
            _ => {
                let c = self.fourier_coeff_quadrature(t, l)?;
                Ok((c, (tc <= 600.0).then(|| c / heat - 1.0)))
            }
        }
    }

    /// Sampler for face measures of area `t`; tables are shared through a global LRU.
    pub fn sampler(&self, t: f64) -> Result<FaceSampler> {
        self.check_time(t)?;
        if self.kind == ActionKind::Villain && self.group == Group::U1 {
            return Ok(FaceSampler::WrappedGaussian { sd: t.sqrt() });
        }
        let table = table::cached_table(self, t)?;
        Ok(FaceSampler::Table { group: self.group, table })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, t: f64, rng: &mut R) -> Result<GroupElement> {
        let s = self.sampler(t)?;
        Ok(s.sample_uniforms(uniforms_from(rng)))
    }

    /// Unnormalized class-angle density (weight times Haar Jacobian) used by tables.
    pub(crate) fn class_angle_weight(&self, t: f64, a: f64) -> Result<f64> {
        let h = self.group.class_haar_density(a);
        match self.kind {
            ActionKind::Villain => Ok(self.villain_density(t, a)? * h),
            _ => Ok(self.raw_weight(t, a) * h),
        }
    }

    pub(crate) fn table_span(&self, t: f64) -> f64 {
        (TABLE_SPAN * t.sqrt()).min(PI)
    }
}

/// Break points for class-angle quadrature, refined near the peak at 0.
pub(crate) fn class_breaks(t: f64) -> Vec<f64> {
    let s = t.sqrt();
    let mut v = vec![0.0];
    let mut x = s / 4.0;
    while x < PI {
        v.push(x);
        x *= 2.0;
    }
    v.push(PI);
    v
}

fn normalizer_cache() -> &'static Mutex<HashMap<(ActionKind, Group, u64), f64>> {
    static C: OnceLock<Mutex<HashMap<(ActionKind, Group, u64), f64>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

fn max_index_below(group: Group, c2max: f64) -> usize {
    match group {
        Group::U1 => (2.0 * c2max).sqrt().floor() as usize,
        Group::SU2 => ((1.0 + 2.0 * c2max).sqrt() - 1.0).floor() as usize,
    }
}

/// Upper bound on the sup-norm tail of the Villain character sum beyond index `m`.
pub fn villain_tail(group: Group, t: f64, m: usize) -> f64 {
    let y = m as f64 + 1.0;
    match group {
        // Σ_{|n|>m} e^{−t n²/2} ≤ 2∫_m^∞ e^{−t x²/2} dx
        Group::U1 => {
            let mm = m as f64;
            2.0 * (PI / (2.0 * t)).sqrt() * erfc(mm * (t / 2.0).sqrt())
        }
        // Σ_{k>m} (k+1)² e^{−t k(k+2)/2} ≤ e^{t/2} ∫_{m+1}^∞ y² e^{−t y²/2} dy once decreasing
        Group::SU2 => {
            if y * y * t < 2.0 {
                return f64::INFINITY;
            }
            let gauss = (PI / (2.0 * t * t * t)).sqrt() * erfc(y * (t / 2.0).sqrt());
            (t / 2.0).exp() * (y * (-t * y * y / 2.0).exp() / t + gauss)
        }
    }
}

pub(crate) fn villain_auto_truncation(group: Group, t: f64) -> usize {
    let mut lo = 1usize;
    let mut hi = 2usize;
    while villain_tail(group, t, hi) > CHARACTER_TAIL_TARGET {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if villain_tail(group, t, mid) > CHARACTER_TAIL_TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `Σ_{λ ≤ m} d_λ e^{−t c2(λ)} χ_λ(a)` at class angle `a`.
pub(crate) fn villain_class_sum(group: Group, t: f64, a: f64, m: usize) -> f64 {
    match group {
        Group::U1 => {
            let (s1, c1) = a.sin_cos();
            let (mut s, mut c) = (0.0f64, 1.0f64);
            let mut acc = 0.0;
            for n in 1..=m {
                let cn = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = cn;
                let w = (-0.5 * t * (n * n) as f64).exp();
                if w == 0.0 {
                    break;
                }
                acc += w * c;
            }
            1.0 + 2.0 * acc
        }
        Group::SU2 => {
            let sa = a.sin();
            if sa.abs() < 1e-7 {
                // χ_k(a) ≈ ±(k+1)(1 − k(k+2)δ²/6) with δ the distance to the endpoint
                let (delta, alt) = if a < 1.0 { (a, false) } else { (PI - a, true) };
                let mut acc = 0.0;
                for k in 0..=m {
                    let kk = k as f64;
                    let w = (-0.5 * t * kk * (kk + 2.0)).exp();
                    if w == 0.0 {
                        break;
                    }
                    let sign = if alt && k % 2 == 1 { -1.0 } else { 1.0 };
                    acc += sign * (kk + 1.0) * (kk + 1.0) * (1.0 - kk * (kk + 2.0) * delta * delta / 6.0) * w;
                }
                return acc;
            }
            let (s1, c1) = a.sin_cos();
            let (mut s, mut c) = (s1, c1);
            let mut acc = 0.0;
            for k in 0..=m {
                let kk = k as f64;
                let w = (-0.5 * t * kk * (kk + 2.0)).exp();
                if w == 0.0 {
                    break;
                }
                acc += (kk + 1.0) * w * s;
                let sn = s * c1 + c * s1;
                c = c * c1 - s * s1;
                s = sn;
            }
            acc / sa
        }
    }
}

/// Villain density by the method of images (Poisson summation of the character sum).
pub(crate) fn villain_image_sum(group: Group, t: f64, a: f64) -> f64 {
    let a = a.abs();
    match group {
        Group::U1 => {
            let mut acc = 0.0;
            for k in -3..=3 {
                let x = a + 2.0 * PI * k as f64;
                acc += (-x * x / (2.0 * t)).exp();
            }
            (2.0 * PI / t).sqrt() * acc
        }
        Group::SU2 => {
            let pref = (0.5 * t).exp() * (2.0 * PI).sqrt() / (2.0 * t * t.sqrt());
            let g = |x: f64| x * (-x * x / (2.0 * t)).exp();
            let dg = |x: f64| (1.0 - x * x / t) * (-x * x / (2.0 * t)).exp();
            let s = a.sin();
            let mut acc = 0.0;
            if s < 1e-6 {
                // limit of the odd image sum over sin a at the endpoints
                let (base, sign) = if a < 1.0 { (0.0, 1.0) } else { (PI, -1.0) };
                for k in -3..=3 {
                    acc += dg(base + 2.0 * PI * k as f64);
                }
                return pref * sign * acc;
            }
            for k in -3..=3 {
                acc += g(a + 2.0 * PI * k as f64);
            }
            pref * acc / s
        }
    }
}

/// Relative deviation of the Manton U(1) Fourier coefficient from the heat kernel,
/// computed from the mass outside `(−π, π]` without cancellation.
fn manton_u1_deviation(t: f64, n: u64) -> Result<f64> {
    let (j0, jn, scale) = manton_u1_parts(t, n)?;
    let nf = n as f64;
    Ok(scale * (j0 - (0.5 * nf * nf * t).exp() * jn))
}

/// `(J_0, J_n, s)` with the Manton U(1) coefficient equal to `h + s·(J_0·h − J_n)`, `h` the heat coefficient.
fn manton_u1_parts(t: f64, n: u64) -> Result<(f64, f64, f64)> {
    let lead = -PI * PI / (2.0 * t);
    if lead < -745.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let nf = n as f64;
    let u_max = -PI + (PI * PI + 160.0 * t).sqrt();
    let mut breaks = vec![0.0];
    let mut x = t / PI / 4.0;
    while x < u_max {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.push(u_max);
    let tail = |k: f64| {
        quad::integrate_with_breaks(
            |u| (k * (PI + u)).cos() * (-(PI * u + 0.5 * u * u) / t).exp(),
            &breaks,
            1e-18 * t,
            1e-13,
        )
    };
    let j0 = tail(0.0)?;
    let jn = tail(nf)?;
    let full = (2.0 * PI * t).sqrt();
    let t0 = full * erfc(PI / (2.0 * t).sqrt());
    Ok((j0, jn, 2.0 * lead.exp() / (full - t0)))
}

/// Draws one group element from four uniforms.
#[derive(Debug, Clone)]
pub enum FaceSampler {
    WrappedGaussian { sd: f64 },
    Table { group: Group, table: Arc<ClassTable> },
}

impl FaceSampler {
    #[inline]
    pub fn sample_uniforms(&self, u: [f64; 4]) -> GroupElement {
        match self {
            FaceSampler::WrappedGaussian { sd } => {
                let z = (-2.0 * u[0].ln()).sqrt() * (2.0 * PI * u[1]).cos();
                GroupElement::from_angle(sd * z)
            }
            FaceSampler::Table { group, table } => {
                let a = table.invert(u[0]);
                match group {
                    Group::U1 => GroupElement::from_angle(if u[1] < 0.5 { a } else { -a }),
                    Group::SU2 => {
                        let z = 2.0 * u[1] - 1.0;
                        let rho = (1.0 - z * z).max(0.0).sqrt();
                        let (sp, cp) = (2.0 * PI * u[2]).sin_cos();
                        let (sa, ca) = a.sin_cos();
                        GroupElement::from_quaternion([ca, sa * rho * cp, sa * rho * sp, sa * z])
                    }
                }
            }
        }
    }
}

/// Haar element from four uniforms (same word budget as a face draw).
pub fn haar_from_uniforms(group: Group, u: [f64; 4]) -> GroupElement {
    match group {
        Group::U1 => GroupElement::from_angle(PI - 2.0 * PI * u[0]),
        Group::SU2 => {
            let r1 = (-2.0 * u[0].ln()).sqrt();
            let r2 = (-2.0 * u[2].ln()).sqrt();
            let (s1, c1) = (2.0 * PI * u[1]).sin_cos();
            let (s2, c2) = (2.0 * PI * u[3]).sin_cos();
            GroupElement::from_quaternion([r1 * c1, r1 * s1, r2 * c2, r2 * s2])
        }
    }
}
