//! Compact groups U(1) and SU(2): elements, Lie algebra, characters and Haar sampling.
//!
//! SU(2) elements are stored as unit quaternions `(w, x, y, z)` standing for the
//! matrix `w·1 + i(xσ₁ + yσ₂ + zσ₃)`. The algebra element `i(v·σ)` is stored as `v`
//! and the inner product is `⟨X, Y⟩ = −½ Tr(XY) = v·w`, so `exp` maps the ball of
//! radius π onto the group and the class angle equals the geodesic distance to 1.
//! With this metric the heat-kernel Fourier coefficients are `d·exp(−t·c2)` with
//! `c2(m) = m(m+2)/2` on SU(2) and `c2(n) = n²/2` on U(1).

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_DRIFT: f64 = 1e-12;
const CUT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    U1,
    SU2,
}

impl Group {
    pub fn dim(self) -> usize {
        match self {
            Group::U1 => 1,
            Group::SU2 => 3,
        }
    }

    /// Density of the class angle `a ∈ [0, π]` under Haar measure.
    pub fn class_haar_density(self, a: f64) -> f64 {
        match self {
            Group::U1 => 1.0 / PI,
            Group::SU2 => 2.0 / PI * a.sin().powi(2),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::U1 => write!(f, "U1"),
            Group::SU2 => write!(f, "SU2"),
        }
    }
}

/// Maps an angle to the principal range (−π, π].
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta - 2.0 * PI * (theta / (2.0 * PI)).round();
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Repr {
    U1(f64),
    Su2([f64; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement(Repr);

impl GroupElement {
    pub fn identity(group: Group) -> Self {
        match group {
            Group::U1 => GroupElement(Repr::U1(0.0)),
            Group::SU2 => GroupElement(Repr::Su2([1.0, 0.0, 0.0, 0.0])),
        }
    }

    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        GroupElement(Repr::U1(wrap_angle(theta)))
    }

    /// Builds an SU(2) element from a quaternion, normalizing it.
    #[inline]
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        GroupElement(Repr::Su2([q[0] / n, q[1] / n, q[2] / n, q[3] / n]))
    }

    /// Representative of the conjugacy class with class angle `a`.
    pub fn from_class_angle(group: Group, a: f64) -> Self {
        match group {
            Group::U1 => Self::from_angle(a),
            Group::SU2 => GroupElement(Repr::Su2([a.cos(), a.sin(), 0.0, 0.0])),
        }
    }

    pub fn group(&self) -> Group {
        match self.0 {
            Repr::U1(_) => Group::U1,
            Repr::Su2(_) => Group::SU2,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match self.0 {
            Repr::U1(a) => Some(a),
            Repr::Su2(_) => None,
        }
    }

    pub fn quaternion(&self) -> Option<[f64; 4]> {
        match self.0 {
            Repr::U1(_) => None,
            Repr::Su2(q) => Some(q),
        }
    }

    /// Matrix form; U(1) elements are returned as `diag(e^{iθ}, 1)`.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        match self.0 {
            Repr::U1(a) => [
                [Complex64::from_polar(1.0, a), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            ],
            Repr::Su2([w, x, y, z]) => [
                [Complex64::new(w, z), Complex64::new(y, x)],
                [Complex64::new(-y, x), Complex64::new(w, -z)],
            ],
        }
    }

    #[inline]
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        match (self.0, other.0) {
            (Repr::U1(a), Repr::U1(b)) => Ok(Self::from_angle(a + b)),
            (Repr::Su2(p), Repr::Su2(q)) => Ok(GroupElement(Repr::Su2(renormalize(qmul(p, q))))),
            _ => Err(Error::GroupMismatch(self.group(), other.group())),
        }
    }

    pub fn inverse(&self) -> Self {
        match self.0 {
            Repr::U1(a) => Self::from_angle(-a),
            Repr::Su2([w, x, y, z]) => GroupElement(Repr::Su2([w, -x, -y, -z])),
        }
    }

    /// Class angle in `[0, π]`; equals the geodesic distance to the identity.
    pub fn class_angle(&self) -> f64 {
        match self.0 {
            Repr::U1(a) => a.abs(),
            Repr::Su2([w, x, y, z]) => (x * x + y * y + z * z).sqrt().atan2(w),
        }
    }

    pub fn dist_to_identity(&self) -> f64 {
        self.class_angle()
    }

    /// Real part of the normalized trace, `cos` of the class angle.
    pub fn re_normalized_trace(&self) -> f64 {
        match self.0 {
            Repr::U1(a) => a.cos(),
            Repr::Su2(q) => q[0],
        }
    }

    pub fn is_near_cut_locus(&self) -> bool {
        match self.0 {
            Repr::U1(a) => a.abs() >= PI - CUT_TOL,
            Repr::Su2(q) => 2.0 * q[0] <= -2.0 + CUT_TOL,
        }
    }

    /// Principal logarithm.
    pub fn log_map(&self) -> Result<AlgebraElement> {
        if self.is_near_cut_locus() {
            return Err(Error::CutLocus(self.class_angle()));
        }
        Ok(match self.0 {
            Repr::U1(a) => AlgebraElement::u1(a),
            Repr::Su2([w, x, y, z]) => {
                let s = (x * x + y * y + z * z).sqrt();
                if s == 0.0 {
                    AlgebraElement::su2([0.0; 3])
                } else {
                    let f = s.atan2(w) / s;
                    AlgebraElement::su2([f * x, f * y, f * z])
                }
            }
        })
    }

    /// `h g h⁻¹`.
    pub fn conjugate_by(&self, h: &Self) -> Self {
        *h * *self * h.inverse()
    }

    pub fn haar_sample<R: Rng + ?Sized>(group: Group, rng: &mut R) -> Self {
        match group {
            Group::U1 => Self::from_angle(PI - 2.0 * PI * rng.gen::<f64>()),
            Group::SU2 => loop {
                let q: [f64; 4] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let n2 = q.iter().map(|v| v * v).sum::<f64>();
                if n2 > 1e-20 {
                    break Self::from_quaternion(q);
                }
            },
        }
    }

    #[cfg(test)]
    pub(crate) fn unitarity_defect(&self) -> f64 {
        match self.0 {
            Repr::U1(_) => 0.0,
            Repr::Su2(q) => (q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs(),
        }
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;

    /// Panics on mismatched groups; use [`GroupElement::multiply`] for a checked product.
    #[inline]
    fn mul(self, rhs: GroupElement) -> GroupElement {
        match self.multiply(&rhs) {
            Ok(g) => g,
            Err(e) => panic!("{e}"),
        }
    }
}

#[inline]
fn qmul(p: [f64; 4], q: [f64; 4]) -> [f64; 4] {
    // (w1 + i v1·σ)(w2 + i v2·σ) = (w1 w2 − v1·v2) + i(w1 v2 + w2 v1 − v1 × v2)·σ
    let [a, b, c, d] = p;
    let [e, f, g, h] = q;
    [
        a * e - b * f - c * g - d * h,
        a * f + e * b - (c * h - d * g),
        a * g + e * c - (d * f - b * h),
        a * h + e * d - (b * g - c * f),
    ]
}

#[inline]
fn renormalize(q: [f64; 4]) -> [f64; 4] {
    let n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (n2 - 1.0).abs() > UNIT_DRIFT {
        let n = n2.sqrt();
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    } else {
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AlgRepr {
    U1(f64),
    Su2([f64; 3]),
}

/// Element of u(1) (a real number) or su(2) (the vector `v` of `i(v·σ)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraElement(AlgRepr);

impl AlgebraElement {
    pub fn zero(group: Group) -> Self {
        match group {
            Group::U1 => Self::u1(0.0),
            Group::SU2 => Self::su2([0.0; 3]),
        }
    }

    pub fn u1(x: f64) -> Self {
        AlgebraElement(AlgRepr::U1(x))
    }

    pub fn su2(v: [f64; 3]) -> Self {
        AlgebraElement(AlgRepr::Su2(v))
    }

    /// Builds an element from coordinates in the orthonormal basis (length must match `dim`).
    pub fn from_coords(group: Group, c: &[f64]) -> Self {
        match group {
            Group::U1 => Self::u1(c[0]),
            Group::SU2 => Self::su2([c[0], c[1], c[2]]),
        }
    }

    pub fn group(&self) -> Group {
        match self.0 {
            AlgRepr::U1(_) => Group::U1,
            AlgRepr::Su2(_) => Group::SU2,
        }
    }

    /// Coordinates in an orthonormal basis for the inner product.
    pub fn coords(&self) -> [f64; 3] {
        match self.0 {
            AlgRepr::U1(x) => [x, 0.0, 0.0],
            AlgRepr::Su2(v) => v,
        }
    }

    /// Anti-Hermitian matrix form; u(1) is embedded as `diag(ix, 0)`.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let z = Complex64::new(0.0, 0.0);
        match self.0 {
            AlgRepr::U1(x) => [[Complex64::new(0.0, x), z], [z, z]],
            AlgRepr::Su2([x, y, w]) => [
                [Complex64::new(0.0, w), Complex64::new(y, x)],
                [Complex64::new(-y, x), Complex64::new(0.0, -w)],
            ],
        }
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        match (self.0, other.0) {
            (AlgRepr::U1(a), AlgRepr::U1(b)) => Ok(a * b),
            (AlgRepr::Su2(a), AlgRepr::Su2(b)) => Ok(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]),
            _ => Err(Error::GroupMismatch(self.group(), other.group())),
        }
    }

    pub fn norm(&self) -> f64 {
        let c = self.coords();
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }

    pub fn exp_map(&self) -> GroupElement {
        match self.0 {
            AlgRepr::U1(x) => GroupElement::from_angle(x),
            AlgRepr::Su2([x, y, z]) => {
                let a = (x * x + y * y + z * z).sqrt();
                let sinc = if a < 1e-8 { 1.0 - a * a / 6.0 } else { a.sin() / a };
                GroupElement(Repr::Su2(renormalize([a.cos(), sinc * x, sinc * y, sinc * z])))
            }
        }
    }

    /// `Ad_h X = h X h⁻¹`.
    pub fn adjoint(&self, h: &GroupElement) -> Result<Self> {
        match (self.0, h.0) {
            (AlgRepr::U1(_), Repr::U1(_)) => Ok(*self),
            (AlgRepr::Su2(v), Repr::Su2(q)) => {
                let hv = qmul(qmul(q, [0.0, v[0], v[1], v[2]]), [q[0], -q[1], -q[2], -q[3]]);
                Ok(Self::su2([hv[1], hv[2], hv[3]]))
            }
            _ => Err(Error::GroupMismatch(self.group(), h.group())),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        match self.0 {
            AlgRepr::U1(x) => Self::u1(s * x),
            AlgRepr::Su2(v) => Self::su2([s * v[0], s * v[1], s * v[2]]),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self.0, other.0) {
            (AlgRepr::U1(a), AlgRepr::U1(b)) => Self::u1(a + b),
            (AlgRepr::Su2(a), AlgRepr::Su2(b)) => Self::su2([a[0] + b[0], a[1] + b[1], a[2] + b[2]]),
            _ => panic!("algebra elements from different groups"),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|v| v.is_finite())
    }
}

/// Irreducible representation class: `n ∈ ℤ` for U(1), `m = 2j ≥ 0` for SU(2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Irrep {
    pub group: Group,
    pub index: i64,
}

impl Irrep {
    pub fn new(group: Group, index: i64) -> Result<Self> {
        if group == Group::SU2 && index < 0 {
            return Err(Error::InvalidArgument(format!("SU2 irrep index must be ≥ 0, got {index}")));
        }
        Ok(Irrep { group, index })
    }

    pub fn trivial(group: Group) -> Self {
        Irrep { group, index: 0 }
    }

    pub fn dim(&self) -> usize {
        match self.group {
            Group::U1 => 1,
            Group::SU2 => self.index as usize + 1,
        }
    }

    pub fn casimir(&self) -> f64 {
        let n = self.index as f64;
        match self.group {
            Group::U1 => 0.5 * n * n,
            Group::SU2 => 0.5 * n * (n + 2.0),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.index == 0
    }

    /// Character at the class with angle `a` (for U(1), `a` is the signed angle).
    pub fn character_at_angle(&self, a: f64) -> Complex64 {
        match self.group {
            Group::U1 => Complex64::from_polar(1.0, self.index as f64 * a),
            Group::SU2 => Complex64::new(su2_character(self.index as usize, a.cos(), a), 0.0),
        }
    }

    pub fn character(&self, g: &GroupElement) -> Complex64 {
        match g.0 {
            Repr::U1(a) => Complex64::from_polar(1.0, self.index as f64 * a),
            Repr::Su2(q) => {
                let a = g.class_angle();
                Complex64::new(su2_character(self.index as usize, q[0], a), 0.0)
            }
        }
    }

    /// Real part of the character; exact value for SU(2), `cos(nθ)` for U(1).
    pub fn character_re(&self, g: &GroupElement) -> f64 {
        self.character(g).re
    }
}

/// `sin((m+1)a)/sin(a)` with `x = cos a`; the three-term recurrence is used near `a ∈ {0, π}`.
pub fn su2_character(m: usize, x: f64, a: f64) -> f64 {
    let s = a.sin();
    if s.abs() > 1e-4 {
        return ((m as f64 + 1.0) * a).sin() / s;
    }
    chebyshev_u(m, x)
}

pub(crate) fn chebyshev_u(m: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for _ in 1..m {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// All irreps with `c2 ≤ c2max`, sorted by Casimir (ties: `n` before `−n`).
pub fn irreps_up_to(group: Group, c2max: f64) -> Vec<Irrep> {
    let mut out = Vec::new();
    if c2max < 0.0 {
        return out;
    }
    match group {
        Group::U1 => {
            out.push(Irrep { group, index: 0 });
            let mut n = 1i64;
            while 0.5 * (n * n) as f64 <= c2max {
                out.push(Irrep { group, index: n });
                out.push(Irrep { group, index: -n });
                n += 1;
            }
        }
        Group::SU2 => {
            let mut m = 0i64;
            while 0.5 * (m * (m + 2)) as f64 <= c2max {
                out.push(Irrep { group, index: m });
                m += 1;
            }
        }
    }
    out
}
