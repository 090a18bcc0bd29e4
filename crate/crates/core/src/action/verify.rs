//! Numerical checks of the heat-like hypotheses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{class_breaks, ActionFamily};
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::quad;
use crate::stats::{linear_fit, mean_se};

const MOMENT_EXPONENTS: [f64; 3] = [1.0, 1.5, 2.0];
const TAIL_RADIUS_EXPONENT: f64 = 0.4;
const CUT_LOCUS_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct HPoint {
    pub t: f64,
    /// `∫⟨v, log g⟩² dμ_t / t` for a unit vector `v`.
    pub second_moment_ratio: f64,
    /// `μ_t(dist > t^0.4)`.
    pub tail_mass: f64,
    /// `∫ |log g|^{2β} dμ_t / t^β` for β = 1, 1.5, 2.
    pub moment_ratios: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct HReport {
    pub points: Vec<HPoint>,
    /// Slope of the second-moment ratio against `t`; the intercept should be 1.
    pub second_moment_slope: f64,
    pub second_moment_intercept: f64,
    /// Log-log slope of the tail mass over the grid.
    pub tail_slope: f64,
    /// Fitted constants `C_β = max_t ∫|log|^{2β} dμ_t / t^β`.
    pub moment_constants: [f64; 3],
    pub symmetry_residual: f64,
    pub ad_residual: f64,
    pub second_moment_ok: bool,
    pub tail_ok: bool,
    pub moments_ok: bool,
    pub symmetry_ok: bool,
}

impl HReport {
    pub fn passed(&self) -> bool {
        self.second_moment_ok && self.tail_ok && self.moments_ok && self.symmetry_ok
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
    pub rejected: usize,
}

impl ActionFamily {
    /// `∫ f(a) dμ_t` over the class angle.
    pub fn class_expectation<F: Fn(f64) -> f64>(&self, t: f64, f: F) -> Result<f64> {
        let g = self.group;
        let mut breaks = class_breaks(t);
        if self.kind == super::ActionKind::Villain && t > 0.5 {
            breaks = (0..=32).map(|k| k as f64 * std::f64::consts::PI / 32.0).collect();
        }
        let dens = |a: f64| self.density_at_angle(t, a).unwrap_or(f64::NAN);
        let v = quad::integrate_with_breaks(|a| f(a) * dens(a) * g.class_haar_density(a), &breaks, 1e-300, 1e-12)?;
        if !v.is_finite() {
            return Err(Error::QuadratureFailure(format!("non-finite class expectation at t = {t}")));
        }
        Ok(v)
    }

    pub fn verify_h(&self, t_grid: &[f64], seed: u64) -> Result<HReport> {
        if t_grid.is_empty() {
            return Err(Error::InvalidArgument("empty time grid".into()));
        }
        let dim = self.group.dim() as f64;
        let mut points = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidArgument(format!("time {t} outside (0, 1]")));
            }
            let m2 = self.class_expectation(t, |a| a * a)?;
            let r = t.powf(TAIL_RADIUS_EXPONENT);
            let tail = if r >= std::f64::consts::PI {
                0.0
            } else {
                self.class_expectation(t, |a| if a > r { 1.0 } else { 0.0 })?
            };
            let mut moment_ratios = [0.0; 3];
            for (k, b) in MOMENT_EXPONENTS.iter().enumerate() {
                moment_ratios[k] = self.class_expectation(t, |a| a.powf(2.0 * b))? / t.powf(*b);
            }
            points.push(HPoint { t, second_moment_ratio: m2 / (dim * t), tail_mass: tail, moment_ratios });
        }
        let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
        let ratios: Vec<f64> = points.iter().map(|p| p.second_moment_ratio).collect();
        let (slope, intercept) = if ts.len() >= 2 {
            let f = linear_fit(&ts, &ratios);
            (f.slope, f.intercept)
        } else {
            (f64::NAN, ratios[0])
        };
        let positive: Vec<&HPoint> = points.iter().filter(|p| p.tail_mass > 0.0).collect();
        let tail_slope = if positive.len() >= 2 {
            let x: Vec<f64> = positive.iter().map(|p| p.t.ln()).collect();
            let y: Vec<f64> = positive.iter().map(|p| p.tail_mass.ln()).collect();
            linear_fit(&x, &y).slope
        } else {
            f64::INFINITY
        };
        let mut moment_constants = [0.0f64; 3];
        for p in &points {
            for k in 0..3 {
                moment_constants[k] = moment_constants[k].max(p.moment_ratios[k]);
            }
        }
        let (sym, ad) = self.symmetry_residuals(ts[0], seed)?;
        let smallest = points.iter().min_by(|a, b| a.t.total_cmp(&b.t)).unwrap();
        Ok(HReport {
            second_moment_ok: (smallest.second_moment_ratio - 1.0).abs() < 0.01,
            tail_ok: tail_slope > 0.0,
            moments_ok: moment_constants.iter().all(|c| c.is_finite() && *c > 0.0),
            symmetry_ok: sym < 1e-12 && ad < 1e-12,
            points,
            second_moment_slope: slope,
            second_moment_intercept: intercept,
            tail_slope,
            moment_constants,
            symmetry_residual: sym,
            ad_residual: ad,
        })
    }

    /// Maximum relative change of the density under inversion and under conjugation.
    fn symmetry_residuals(&self, t: f64, seed: u64) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut sym, mut ad) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let g = self.sample(t, &mut rng)?;
            let h = GroupElement::haar_sample(self.group, &mut rng);
            let d = self.density(t, &g)?;
            if d == 0.0 {
                continue;
            }
            sym = sym.max((self.density(t, &g.inverse())? - d).abs() / d);
            ad = ad.max((self.density(t, &g.conjugate_by(&h))? - d).abs() / d);
        }
        Ok((sym, ad))
    }

    /// Monte Carlo `E|log x|^{2β}` for a product of independent draws at the given areas.
    pub fn convolved_moment(&self, areas: &[f64], two_beta: f64, samples: usize, seed: u64) -> Result<MomentEstimate> {
        if areas.is_empty() {
            return Err(Error::InvalidArgument("no areas".into()));
        }
        if let Some(s) = areas.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(Error::InvalidArgument(format!("area {s} outside (0, 1]")));
        }
        let samplers: Vec<_> = areas.iter().map(|&s| self.sampler(s)).collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vals = Vec::with_capacity(samples);
        let mut rejected = 0usize;
        for _ in 0..samples {
            let mut x = GroupElement::identity(self.group);
            for s in &samplers {
                x = x * s.sample_uniforms(crate::stream::uniforms_from(&mut rng));
            }
            let a = x.dist_to_identity();
            if a > std::f64::consts::PI - CUT_LOCUS_BAND {
                rejected += 1;
                continue;
            }
            vals.push(a.powf(two_beta));
        }
        if rejected * 1000 > samples {
            return Err(Error::CutLocusFractionExceeded { rejected, total: samples });
        }
        let (mean, se) = mean_se(&vals);
        Ok(MomentEstimate { mean, se, samples, rejected })
    }
}
