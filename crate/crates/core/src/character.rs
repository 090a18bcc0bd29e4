//! Character expansions: convolved spectra, Segal amplitudes, C^k bounds and the
//! local-limit diagnostics for equal-area ladders.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::action::{ActionFamily, ActionKind};
use crate::error::{Error, Result};
use crate::group::{irreps_up_to, Group, GroupElement, Irrep};
use crate::stats::pairwise_sum;

/// Points in the class-angle grid used for sup norms.
pub const SUP_GRID_POINTS: usize = 4096;
/// Tail level above which a spectrum is flagged as under-truncated.
pub const SPECTRUM_TAIL_TOL: f64 = 1e-9;
const TAIL_NOISE_FLOOR: f64 = 1e-14;
/// Tail level above which a Segal amplitude is flagged.
pub const AMPLITUDE_TAIL_TOL: f64 = 1e-12;
const SPHERE_MAX_C2: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub irrep: Irrep,
    pub coef: f64,
    /// Relative deviation from `d·e^{−T·c2}` when the spectrum carries a heat reference.
    pub heat_rel: Option<f64>,
}

/// Fourier data `f = Σ coef(λ) χ_λ` of a class function, truncated at `c2max`.
#[derive(Debug, Clone, Serialize)]
pub struct ClassFunctionSpectrum {
    pub group: Group,
    pub label: String,
    pub c2max: f64,
    pub entries: Vec<SpectrumEntry>,
    /// Total time of the heat kernel the coefficients are referenced to.
    pub heat_time: Option<f64>,
    /// Estimate of `Σ_{c2 > c2max} |coef|·d`.
    pub tail: f64,
    pub under_truncated: bool,
}

/// Distinct areas with multiplicities, in a fixed order.
fn area_groups(areas: &[f64]) -> Vec<(f64, usize)> {
    let mut m: BTreeMap<u64, usize> = BTreeMap::new();
    for a in areas {
        *m.entry(a.to_bits()).or_default() += 1;
    }
    m.into_iter().map(|(b, c)| (f64::from_bits(b), c)).collect()
}

fn check_areas(areas: &[f64]) -> Result<()> {
    if let Some(a) = areas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::NonPositiveTime(*a));
    }
    Ok(())
}

/// `ln|Π μ̂/d|`, sign and heat deviation of a product over grouped areas.
struct Product {
    log_abs: f64,
    sign: f64,
    heat_rel: Option<f64>,
}

fn product_over(fam: &ActionFamily, groups: &[(f64, usize)], areas: &[f64], l: &Irrep) -> Result<Product> {
    let d = l.dim() as f64;
    if fam.kind == ActionKind::Villain {
        return Ok(Product { log_abs: -l.casimir() * pairwise_sum(areas), sign: 1.0, heat_rel: Some(0.0) });
    }
    let mut log_abs = 0.0;
    let mut sign = 1.0;
    let mut log1p_sum = Some(0.0);
    for &(s, count) in groups {
        let (c, eps) = fam.coeff_and_deviation(s, l)?;
        let r = c / d;
        if r == 0.0 {
            log_abs = f64::NEG_INFINITY;
        } else {
            log_abs += count as f64 * r.abs().ln();
            if r < 0.0 && count % 2 == 1 {
                sign = -sign;
            }
        }
        log1p_sum = match (log1p_sum, eps) {
            (Some(acc), Some(e)) if e > -1.0 => Some(acc + count as f64 * e.ln_1p()),
            _ => None,
        };
    }
    let heat_rel = log1p_sum.map(f64::exp_m1).filter(|r| r.is_finite());
    Ok(Product { log_abs, sign, heat_rel })
}

/// Sum of `mag(λ)` over `c2max < c2 ≤ 4·c2max + 50` plus a geometric remainder
/// extrapolated from the last two Casimir levels.
fn band_tail<F: FnMut(&Irrep) -> Result<f64>>(group: Group, c2max: f64, mut mag: F) -> Result<f64> {
    let top = 4.0 * c2max + 50.0;
    let band: Vec<Irrep> = irreps_up_to(group, top).into_iter().filter(|l| l.casimir() > c2max).collect();
    let mut levels: Vec<f64> = Vec::new();
    let mut last_c2 = f64::NAN;
    let mut total = 0.0;
    for l in &band {
        let v = mag(l)?.abs();
        total += v;
        if l.casimir() != last_c2 {
            levels.push(v);
            last_c2 = l.casimir();
        } else {
            *levels.last_mut().unwrap() += v;
        }
    }
    // geometric extrapolation on the running-max envelope of the second half of the band;
    // below the floor the terms are at quadrature precision and carry no trend
    for i in (0..levels.len().saturating_sub(1)).rev() {
        levels[i] = levels[i].max(levels[i + 1]);
    }
    if levels.len() >= 2 {
        let (i0, last) = (levels.len() / 2, levels.len() - 1);
        let (a, b) = (levels[i0.min(last - 1)], levels[last]);
        if !b.is_finite() {
            return Ok(f64::INFINITY);
        }
        if b > TAIL_NOISE_FLOOR {
            let r = (b / a).powf(1.0 / (last - i0.min(last - 1)) as f64);
            if !(r < 1.0) {
                return Ok(f64::INFINITY);
            }
            total += b * r / (1.0 - r);
        }
    }
    Ok(total)
}

impl ClassFunctionSpectrum {
    pub fn zero(group: Group, c2max: f64) -> Self {
        let entries = irreps_up_to(group, c2max)
            .into_iter()
            .map(|irrep| SpectrumEntry { irrep, coef: 0.0, heat_rel: None })
            .collect();
        ClassFunctionSpectrum { group, label: "custom".into(), c2max, entries, heat_time: None, tail: 0.0, under_truncated: false }
    }

    /// Custom spectrum from explicit coefficients; irreps above `c2max` are dropped.
    pub fn custom(group: Group, c2max: f64, coefs: &[(Irrep, f64)]) -> Result<Self> {
        let mut s = Self::zero(group, c2max);
        for (l, c) in coefs {
            if l.group != group {
                return Err(Error::GroupMismatch(group, l.group));
            }
            if let Some(e) = s.entries.iter_mut().find(|e| e.irrep == *l) {
                e.coef = *c;
            }
        }
        Ok(s)
    }

    /// Heat kernel at time `t`.
    pub fn heat_kernel(group: Group, t: f64, c2max: f64) -> Result<Self> {
        convolve_spectrum(&[t], &ActionFamily::villain(group), c2max)
    }

    /// Class function value at class angle `a` (real part for U(1)).
    pub fn value_at(&self, a: f64) -> f64 {
        let vals: Vec<f64> = self.entries.iter().map(|e| e.coef * e.irrep.character_at_angle(a).re).collect();
        pairwise_sum(&vals)
    }

    pub fn value(&self, g: &GroupElement) -> f64 {
        let vals: Vec<f64> = self.entries.iter().map(|e| e.coef * e.irrep.character_re(g)).collect();
        pairwise_sum(&vals)
    }

    pub fn coefficient(&self, l: &Irrep) -> Option<f64> {
        self.entries.iter().find(|e| e.irrep == *l).map(|e| e.coef)
    }

    /// `Σ (1 + c2)^{k/2} |coef|·d`, a bound on the C^k norm.
    pub fn ck_norm(&self, k: u32) -> f64 {
        let vals: Vec<f64> = self
            .entries
            .iter()
            .map(|e| (1.0 + e.irrep.casimir()).powf(k as f64 / 2.0) * e.coef.abs() * e.irrep.dim() as f64)
            .collect();
        pairwise_sum(&vals)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.group != other.group {
            return Err(Error::GroupMismatch(self.group, other.group));
        }
        if self.entries.len() != other.entries.len() {
            return Err(Error::InvalidArgument("spectra have different truncations".into()));
        }
        Ok(())
    }

    /// Coefficient-wise difference. When both spectra are referenced to the same heat
    /// time the difference is formed from the deviations, which keeps it accurate far
    /// below the coefficients themselves.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let same_time = match (self.heat_time, other.heat_time) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(b.abs()),
            _ => false,
        };
        let (t1, t2) = (self.heat_time.unwrap_or(0.0), other.heat_time.unwrap_or(0.0));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                let coef = match (same_time, a.heat_rel, b.heat_rel) {
                    (true, Some(r1), Some(r2)) => {
                        let c2 = a.irrep.casimir();
                        let d = a.irrep.dim() as f64;
                        d * (-t2 * c2).exp() * ((-(t1 - t2) * c2).exp_m1() * (1.0 + r1) + (r1 - r2))
                    }
                    _ => a.coef - b.coef,
                };
                SpectrumEntry { irrep: a.irrep, coef, heat_rel: None }
            })
            .collect();
        Ok(ClassFunctionSpectrum {
            group: self.group,
            label: format!("{} - {}", self.label, other.label),
            c2max: self.c2max,
            entries,
            heat_time: None,
            tail: self.tail + other.tail,
            under_truncated: self.under_truncated || other.under_truncated,
        })
    }

    /// Maximum of `|f|` over the class grid.
    pub fn sup_norm(&self) -> f64 {
        sup_grid().iter().map(|&a| self.value_at(a).abs()).fold(0.0, f64::max)
    }
}

/// Class angles `π(1 − cos(π(k + ½)/K))/2`, clustered at both ends of `[0, π]`.
pub fn sup_grid() -> Vec<f64> {
    (0..SUP_GRID_POINTS)
        .map(|k| 0.5 * PI * (1.0 - (PI * (k as f64 + 0.5) / SUP_GRID_POINTS as f64).cos()))
        .collect()
}

/// Truncated sup over the class grid of `|f1 − f2|`.
pub fn sup_norm_diff(s1: &ClassFunctionSpectrum, s2: &ClassFunctionSpectrum) -> Result<f64> {
    Ok(s1.difference(s2)?.sup_norm())
}

/// Fourier data of `ρ_{s_1} ⋆ ⋯ ⋆ ρ_{s_k}`: `coef(λ) = d·Π(μ̂_{s_i}(λ)/d)`.
pub fn convolve_spectrum(areas: &[f64], fam: &ActionFamily, c2max: f64) -> Result<ClassFunctionSpectrum> {
    if areas.is_empty() {
        return Err(Error::InvalidArgument("no areas".into()));
    }
    check_areas(areas)?;
    let groups = area_groups(areas);
    let mut entries = Vec::new();
    let mut all_ref = true;
    for irrep in irreps_up_to(fam.group, c2max) {
        let p = product_over(fam, &groups, areas, &irrep)?;
        let d = irrep.dim() as f64;
        all_ref &= p.heat_rel.is_some();
        entries.push(SpectrumEntry { irrep, coef: p.sign * d * p.log_abs.exp(), heat_rel: p.heat_rel });
    }
    let total = pairwise_sum(areas);
    let tail = band_tail(fam.group, c2max, |l| {
        let p = product_over(fam, &groups, areas, l)?;
        Ok(p.log_abs.exp() * (l.dim() * l.dim()) as f64)
    })?;
    if !all_ref {
        for e in entries.iter_mut() {
            e.heat_rel = None;
        }
    }
    Ok(ClassFunctionSpectrum {
        group: fam.group,
        label: format!("{:?}", fam.kind).to_lowercase(),
        c2max,
        entries,
        heat_time: all_ref.then_some(total),
        tail,
        under_truncated: !(tail < SPECTRUM_TAIL_TOL),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegalResult {
    pub value: f64,
    pub tail: f64,
    pub c2max: f64,
    pub under_truncated: bool,
}

/// `Σ_λ (Π_F μ̂_{σ(F)}(λ)/d) · χ_λ(g_1)⋯χ_λ(g_k) / d^{2g−2+k}` truncated at `c2max`.
///
/// The closed sphere is re-truncated until its tail is below tolerance; other
/// surfaces return the truncated value with `under_truncated` set when the tail
/// bound is too large.
pub fn segal_amplitude(
    genus: u32,
    boundary: &[GroupElement],
    areas: &[f64],
    fam: &ActionFamily,
    c2max: f64,
) -> Result<SegalResult> {
    if areas.is_empty() {
        return Err(Error::InvalidArgument("no faces".into()));
    }
    check_areas(areas)?;
    if let Some(g) = boundary.iter().find(|g| g.group() != fam.group) {
        return Err(Error::GroupMismatch(fam.group, g.group()));
    }
    let groups = area_groups(areas);
    let power = 2 * genus as i64 - 2 + boundary.len() as i64;
    let sphere = genus == 0 && boundary.is_empty();
    let mut cut = c2max;
    loop {
        let mut terms = Vec::new();
        for l in irreps_up_to(fam.group, cut) {
            let p = product_over(fam, &groups, areas, &l)?;
            if p.log_abs == f64::NEG_INFINITY {
                continue;
            }
            let chi: Complex64 = boundary.iter().map(|g| l.character(g)).product();
            let w = p.sign * (p.log_abs - power as f64 * (l.dim() as f64).ln()).exp();
            terms.push(w * chi.re);
        }
        let value = pairwise_sum(&terms);
        let tail = band_tail(fam.group, cut, |l| {
            let p = product_over(fam, &groups, areas, l)?;
            Ok((p.log_abs + (2 - 2 * genus as i64) as f64 * (l.dim() as f64).ln()).exp())
        })?;
        let ok = tail < AMPLITUDE_TAIL_TOL;
        if ok || !sphere {
            return Ok(SegalResult { value, tail, c2max: cut, under_truncated: !ok });
        }
        if cut >= SPHERE_MAX_C2 {
            return Err(Error::DivergentSphereSum { tail });
        }
        cut = (2.0 * cut).max(8.0);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LltRow {
    pub n: usize,
    /// Sup over the class grid of `|ρ_{1/n}^{⋆n} − p_1|`.
    pub sup_distance: f64,
    /// C^k bound of the convolved density.
    pub ck_bound: f64,
    /// C^k bound of the difference to the heat kernel.
    pub ck_distance: f64,
    /// Smallest `−ln|μ̂/d|/(t c2)` over irreps with `√(t c2) ≤ 0.5`.
    pub small_delta: f64,
    /// Largest `|μ̂/d|` over irreps with `0.5 < √(t c2) < 2`, and its n-th power.
    pub intermediate_delta: f64,
    pub intermediate_contraction: f64,
    /// C^k-weighted mass of irreps with `√(t c2) ≥ 2`, including the tail estimate.
    pub large_regime_sum: f64,
    pub tail: f64,
    pub under_truncated: bool,
}

/// Local-limit table for the equal-area ladder `ρ_{1/n}^{⋆n}` against the heat kernel at time 1.
pub fn llt_report(fam: &ActionFamily, ladder: &[usize], k: u32, c2max: f64) -> Result<Vec<LltRow>> {
    let heat = ClassFunctionSpectrum::heat_kernel(fam.group, 1.0, c2max)?;
    let mut rows = Vec::with_capacity(ladder.len());
    for &n in ladder {
        if n == 0 {
            return Err(Error::InvalidArgument("ladder entries must be positive".into()));
        }
        let t = 1.0 / n as f64;
        let areas = vec![t; n];
        let spec = convolve_spectrum(&areas, fam, c2max)?;
        let diff = spec.difference(&heat)?;
        let weight = |l: &Irrep| (1.0 + l.casimir()).powf(k as f64 / 2.0) * l.dim() as f64;

        let mut small_delta = f64::INFINITY;
        let mut inter = 0.0f64;
        let mut large = 0.0;
        let mut visit = |l: &Irrep, r: f64, coef: f64| {
            let x = (t * l.casimir()).sqrt();
            if l.is_trivial() {
                return;
            }
            if x <= 0.5 {
                small_delta = small_delta.min(-r.abs().ln() / (t * l.casimir()));
            } else if x < 2.0 {
                inter = inter.max(r.abs());
            } else {
                large += weight(l) * coef.abs();
            }
        };
        for e in &spec.entries {
            let r = fam.fourier_coeff(t, &e.irrep)? / e.irrep.dim() as f64;
            visit(&e.irrep, r, e.coef);
        }
        // irreps beyond the truncation, up to the band used by the tail estimate
        let top = 4.0 * c2max + 50.0;
        for l in irreps_up_to(fam.group, top).into_iter().filter(|l| l.casimir() > c2max) {
            if (t * l.casimir()).sqrt() >= 2.0 {
                break;
            }
            let r = fam.fourier_coeff(t, &l)? / l.dim() as f64;
            visit(&l, r, 0.0);
        }
        let groups = [(t, n)];
        large += band_tail(fam.group, c2max, |l| {
            let p = product_over(fam, &groups, &areas, l)?;
            Ok(p.log_abs.exp() * weight(l))
        })?;
        rows.push(LltRow {
            n,
            sup_distance: diff.sup_norm(),
            ck_bound: spec.ck_norm(k),
            ck_distance: diff.ck_norm(k),
            small_delta,
            intermediate_delta: inter,
            intermediate_contraction: inter.powi(n as i32),
            large_regime_sum: large,
            tail: spec.tail,
            under_truncated: spec.under_truncated,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_partition_function_matches_theta_series() {
        let fam = ActionFamily::villain(Group::U1);
        let z = segal_amplitude(0, &[], &[1.0], &fam, 20.0).unwrap();
        let direct: f64 = (-200i64..=200).map(|n| (-(n * n) as f64 / 2.0).exp()).sum();
        assert!((z.value - direct).abs() < 1e-12, "{} vs {direct}", z.value);
        assert!(!z.under_truncated);
    }

    #[test]
    fn disc_amplitude_is_the_density() {
        for g in [Group::U1, Group::SU2] {
            let fam = ActionFamily::villain(g);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..20 {
                let h = GroupElement::haar_sample(g, &mut rng);
                let sigma = rng.gen_range(0.2..1.5);
                let z = segal_amplitude(0, &[h], &[sigma], &fam, 400.0).unwrap();
                let d = fam.density(sigma, &h).unwrap();
                assert!((z.value - d).abs() < 1e-10 * d.max(1.0), "{g}: {} vs {d}", z.value);
            }
        }
    }

    #[test]
    fn villain_face_splitting_is_invisible() {
        let fam = ActionFamily::villain(Group::SU2);
        let h = GroupElement::from_class_angle(Group::SU2, 1.1);
        let z1 = segal_amplitude(1, &[h], &[0.3, 0.6], &fam, 200.0).unwrap();
        let z2 = segal_amplitude(1, &[h], &[0.1, 0.2, 0.6], &fam, 200.0).unwrap();
        assert!((z1.value - z2.value).abs() < 1e-12);
    }

    #[test]
    fn spectra_semigroup_and_norms() {
        let fam = ActionFamily::villain(Group::SU2);
        let a = convolve_spectrum(&[0.25, 0.5, 0.25], &fam, 60.0).unwrap();
        let b = ClassFunctionSpectrum::heat_kernel(Group::SU2, 1.0, 60.0).unwrap();
        assert_eq!(sup_norm_diff(&a, &b).unwrap(), 0.0);
        assert_eq!(ClassFunctionSpectrum::zero(Group::U1, 10.0).ck_norm(3), 0.0);
        for s in [&a, &b] {
            assert!(s.sup_norm() <= s.ck_norm(0));
            assert_eq!(s.coefficient(&Irrep::trivial(Group::SU2)), Some(1.0));
        }
    }

    #[test]
    fn grid_is_clustered_at_the_ends() {
        let g = sup_grid();
        assert_eq!(g.len(), SUP_GRID_POINTS);
        assert!(g[0] > 0.0 && g[0] < 1e-6 && g[SUP_GRID_POINTS - 1] < PI);
        assert!(g[1] - g[0] < g[2049] - g[2048]);
    }

    #[test]
    fn difference_through_heat_reference() {
        let fam = ActionFamily::manton(Group::U1);
        let heat = ClassFunctionSpectrum::heat_kernel(Group::U1, 1.0, 60.0).unwrap();
        let s = convolve_spectrum(&vec![1.0 / 8.0; 8], &fam, 60.0).unwrap();
        let direct: Vec<f64> = s.entries.iter().zip(&heat.entries).map(|(a, b)| a.coef - b.coef).collect();
        let via = s.difference(&heat).unwrap();
        for (d, e) in direct.iter().zip(&via.entries) {
            assert!((d - e.coef).abs() < 1e-15, "{d} vs {}", e.coef);
        }
    }

    #[test]
    fn sphere_sum_rejects_slow_decay() {
        // d² growth against a tiny total area needs a truncation beyond the cap
        let fam = ActionFamily::villain(Group::SU2);
        let r = segal_amplitude(0, &[], &[1e-7], &fam, 10.0);
        assert!(matches!(r, Err(Error::DivergentSphereSum { .. })), "{r:?}");
    }
}
