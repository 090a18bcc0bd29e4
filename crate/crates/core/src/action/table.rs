//! Inverse-CDF tables on the class angle.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::{ActionFamily, ActionKind};
use crate::error::{Error, Result};
use crate::group::Group;
use crate::quad::gl8;

const CDF_TOL: f64 = 1e-10;
// slopes this far below zero are rounding, not a fold in the CDF
const MONOTONE_SLACK: f64 = 1e-9;
const MAX_NODES: usize = 65536;
const CACHE_CAPACITY: usize = 4096;
const QUANTILES_PER_NODE: usize = 4;

/// Piecewise cubic Hermite CDF of the class angle on uniform nodes over `[0, span]`.
#[derive(Debug, Clone)]
pub struct ClassTable {
    span: f64,
    step: f64,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    guide: Vec<u32>,
    quantiles: Vec<f64>,
}

fn interval_mass<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<f64> {
    let (x, w) = gl8();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        acc += wi * f(c + h * xi)?;
    }
    Ok(acc * h)
}

#[inline]
fn hermite(f0: f64, f1: f64, d0: f64, d1: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * d1;
    let dv = (6.0 * s2 - 6.0 * s) * f0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (-6.0 * s2 + 6.0 * s) * f1 + (3.0 * s2 - 2.0 * s) * d1;
    (v, dv)
}

/// Minimum over `[0, 1]` of the derivative of the cubic Hermite segment with rise `df`
/// and end slopes `d0`, `d1` (all in unit-interval scaling).
fn min_slope(df: f64, d0: f64, d1: f64) -> f64 {
    let a = 3.0 * (d0 + d1) - 6.0 * df;
    let b = 6.0 * df - 4.0 * d0 - 2.0 * d1;
    let mut m = d0.min(d1);
    if a > 0.0 {
        let s = -b / (2.0 * a);
        if s > 0.0 && s < 1.0 {
            m = m.min(d0 + s * (b + a * s));
        }
    }
    m
}

impl ClassTable {
    /// Builds a table for a density `f` on `[0, span]`, doubling the node count until
    /// the midpoint CDF check and the monotonicity check pass.
    pub fn build<F: Fn(f64) -> Result<f64>>(f: F, span: f64, nodes: usize) -> Result<Self> {
        let mut n = nodes.max(16);
        loop {
            match Self::try_build(&f, span, n)? {
                Some(t) => return Ok(t),
                None if n * 2 <= MAX_NODES => n *= 2,
                None => {
                    return Err(Error::TableUnderResolved(format!(
                        "class table failed CDF or monotonicity check at {n} nodes"
                    )))
                }
            }
        }
    }

    fn try_build<F: Fn(f64) -> Result<f64>>(f: &F, span: f64, n: usize) -> Result<Option<Self>> {
        let step = span / n as f64;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        let pdf_raw: Vec<f64> = xs.iter().map(|&x| f(x)).collect::<Result<_>>()?;
        let mut masses = Vec::with_capacity(n);
        let mut half = Vec::with_capacity(n);
        for i in 0..n {
            let m = 0.5 * (xs[i] + xs[i + 1]);
            let left = interval_mass(f, xs[i], m)?;
            let right = interval_mass(f, m, xs[i + 1])?;
            masses.push(left + right);
            half.push(left);
        }
        let total: f64 = crate::stats::pairwise_sum(&masses);
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::TableUnderResolved(format!("class density has mass {total}")));
        }
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cdf.push(acc / total);
        }
        cdf[n] = 1.0;
        let pdf: Vec<f64> = pdf_raw.iter().map(|p| p / total).collect();

        for i in 0..n {
            let df = cdf[i + 1] - cdf[i];
            let (d0, d1) = (pdf[i] * step, pdf[i + 1] * step);
            if df > 1e-300 {
                if min_slope(df, d0, d1) < -MONOTONE_SLACK * df {
                    return Ok(None);
                }
            } else if d0.max(d1) > 1e-14 {
                return Ok(None);
            }
            let (mid, _) = hermite(cdf[i], cdf[i + 1], d0, d1, 0.5);
            if (mid - (cdf[i] + half[i] / total)).abs() > CDF_TOL {
                return Ok(None);
            }
        }

        let mut guide = Vec::with_capacity(n);
        let mut j = 0usize;
        for g in 0..n {
            let u = g as f64 / n as f64;
            while j < n - 1 && cdf[j + 1] <= u {
                j += 1;
            }
            guide.push(j as u32);
        }
        let mut table = ClassTable { span, step, cdf, pdf, guide, quantiles: Vec::new() };
        let k = QUANTILES_PER_NODE * n;
        let quantiles: Vec<f64> = (0..=k)
            .map(|j| match j {
                0 => 0.0,
                j if j == k => span,
                j => table.invert_from_cell(j as f64 / k as f64, None),
            })
            .collect();
        table.quantiles = quantiles;
        Ok(Some(table))
    }

    pub fn nodes(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    /// Table CDF at class angle `a`.
    pub fn cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        if a >= self.span {
            return 1.0;
        }
        let i = ((a / self.step) as usize).min(self.nodes() - 1);
        let s = (a - i as f64 * self.step) / self.step;
        hermite(self.cdf[i], self.cdf[i + 1], self.pdf[i] * self.step, self.pdf[i + 1] * self.step, s).0
    }

    /// Class angle with table CDF equal to `u ∈ (0, 1)`.
    #[inline]
    pub fn invert(&self, u: f64) -> f64 {
        let k = self.quantiles.len() - 1;
        let x = u * k as f64;
        let j = (x as usize).min(k - 1);
        let w = x - j as f64;
        let guess = self.quantiles[j] + (self.quantiles[j + 1] - self.quantiles[j]) * w;
        self.invert_from_cell(u, Some(guess))
    }

    /// Newton solve inside the cell holding `u`, started from `guess` when given and
    /// from the secant point otherwise.
    fn invert_from_cell(&self, u: f64, guess: Option<f64>) -> f64 {
        let n = self.nodes();
        let mut i = match guess {
            Some(a) => ((a / self.step) as usize).min(n - 1),
            None => self.guide[((u * n as f64) as usize).min(n - 1)] as usize,
        };
        while i > 0 && self.cdf[i] > u {
            i -= 1;
        }
        while i < n - 1 && self.cdf[i + 1] < u {
            i += 1;
        }
        let (f0, f1) = (self.cdf[i], self.cdf[i + 1]);
        let (d0, d1) = (self.pdf[i] * self.step, self.pdf[i + 1] * self.step);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut s = match guess {
            Some(a) => (a / self.step - i as f64).clamp(0.0, 1.0),
            None if f1 > f0 => ((u - f0) / (f1 - f0)).clamp(0.0, 1.0),
            None => 0.5,
        };
        for _ in 0..60 {
            let (v, dv) = hermite(f0, f1, d0, d1, s);
            let r = v - u;
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            if r.abs() <= 2.0 * f64::EPSILON * u {
                break;
            }
            let mut next = if dv > 0.0 { s - r / dv } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() < 1e-15 {
                s = next;
                break;
            }
            s = next;
        }
        (i as f64 + s) * self.step
    }
}

type TableKey = (ActionKind, Group, i64, u64, usize);

struct Lru {
    map: HashMap<TableKey, (u64, Arc<ClassTable>)>,
    clock: u64,
}

fn cache() -> &'static Mutex<Lru> {
    static C: OnceLock<Mutex<Lru>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(Lru { map: HashMap::new(), clock: 0 }))
}

pub(crate) fn cached_table(fam: &ActionFamily, t: f64) -> Result<Arc<ClassTable>> {
    let key: TableKey = (
        fam.kind,
        fam.group,
        (t * 1e12).round() as i64,
        fam.c2max.map_or(0, f64::to_bits),
        fam.table_nodes,
    );
    {
        let mut c = cache().lock().unwrap();
        c.clock += 1;
        let now = c.clock;
        if let Some(e) = c.map.get_mut(&key) {
            e.0 = now;
            return Ok(e.1.clone());
        }
    }
    let table = Arc::new(ClassTable::build(|a| fam.class_angle_weight(t, a), fam.table_span(t), fam.table_nodes)?);
    let mut c = cache().lock().unwrap();
    c.clock += 1;
    let now = c.clock;
    if c.map.len() >= CACHE_CAPACITY {
        if let Some(old) = c.map.iter().min_by_key(|(_, v)| v.0).map(|(k, _)| *k) {
            c.map.remove(&old);
        }
    }
    c.map.insert(key, (now, table.clone()));
    Ok(table)
}
