use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ym2_core::action::ActionFamily;
use ym2_core::group::{AlgebraElement, Group};
use ym2_core::lattice::{AreaSpec, MorseLattice};
use ym2_core::norms::{
    aniso_quadrature, discrete_aniso_seminorm, gagliardo_1d, norm_support_level, weighted_norm, LineGrid, NormParams,
    Window,
};
use ym2_core::sampler::GaugeSampler;

fn random_grid(levels: usize, cols: usize, dim: usize, seed: u64) -> LineGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..levels * cols)
        .map(|_| {
            let mut v = [0.0; 3];
            for x in v.iter_mut().take(dim) {
                *x = rng.gen_range(-1.0..1.0);
            }
            v
        })
        .collect();
    LineGrid::from_values(levels, cols, dim, vals).unwrap()
}

fn naive_seminorm(g: &LineGrid, w: &Window, alpha: f64, p: f64) -> f64 {
    let arc = |level: usize, k: i64, l: i64| {
        let mut acc = [0.0; 3];
        for i in k..l {
            let v = g.get(level, i);
            for d in 0..3 {
                acc[d] += v[d];
            }
        }
        acc
    };
    let mut total = 0.0;
    for n in w.level0..=w.level1 {
        for m in n + 1..=w.level1 {
            for k in w.col0..=w.col1 {
                for l in k + 1..=w.col1 {
                    let (a, b) = (arc(m, k, l), arc(n, k, l));
                    let sq: f64 = (0..3).map(|d| (a[d] - b[d]).powi(2)).sum();
                    total += sq.powf(p / 2.0) / (((l - k) as f64).powf(1.0 + p * alpha) * ((m - n) as f64).powf(1.0 + p * alpha));
                }
            }
        }
    }
    total
}

#[test]
fn seminorm_matches_naive_quadruple_loop() {
    for (seed, dim) in [(1u64, 1usize), (2, 3)] {
        let g = random_grid(8, 10, dim, seed);
        for &(alpha, p) in &[(0.3, 2.0), (0.45, 3.0), (0.4, 8.0)] {
            for w in [
                Window { level0: 0, level1: 4, col0: 0, col1: 4 },
                Window { level0: 3, level1: 7, col0: 7, col1: 11 },
                Window { level0: 1, level1: 3, col0: -2, col1: 2 },
            ] {
                let fast = discrete_aniso_seminorm(&g, &w, alpha, p).unwrap();
                let slow = naive_seminorm(&g, &w, alpha, p);
                assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{fast} vs {slow}");
            }
        }
    }
}

#[test]
fn seminorm_of_a_zero_field_and_empty_windows() {
    let g = LineGrid::from_values(4, 4, 3, vec![[0.0; 3]; 16]).unwrap();
    let w = Window { level0: 0, level1: 3, col0: 0, col1: 4 };
    assert_eq!(discrete_aniso_seminorm(&g, &w, 0.3, 2.0).unwrap(), 0.0);
    assert!(discrete_aniso_seminorm(&g, &Window { level0: 2, level1: 2, col0: 0, col1: 4 }, 0.3, 2.0).is_err());
    assert!(discrete_aniso_seminorm(&g, &Window { level0: 0, level1: 3, col0: 1, col1: 1 }, 0.3, 2.0).is_err());
}

#[test]
fn gagliardo_single_cell_against_closed_form() {
    // f(t) = t on [0, 1]: ∬ |t − s|^{q} = 2/((q+1)(q+2)) with q = p − 1 − pα
    let (alpha, p) = (0.4, 2.0);
    let q = p - 1.0 - p * alpha;
    let exact = 2.0 / ((q + 1.0) * (q + 2.0));
    let g = gagliardo_1d(&[AlgebraElement::u1(0.0), AlgebraElement::u1(1.0)], alpha, p).unwrap();
    assert!((g.quadrature - exact).abs() < 1e-12, "{} vs {exact}", g.quadrature);
    assert!((g.discrete_bound - 144.0).abs() < 1e-12);
    assert!(g.holds());
}

#[test]
fn gagliardo_two_cells_against_nested_quadrature() {
    // kink at 1/2; reference by adaptive quadrature of the inner integral with breakpoints
    let (alpha, p) = (0.3, 4.0);
    let vals = [0.0, 1.0, -0.5];
    let f = |t: f64| if t < 0.5 { 2.0 * t } else { 1.0 - 3.0 * (t - 0.5) };
    let expo = 1.0 + p * alpha;
    let inner = |x: f64| {
        let k = |y: f64| if y == x { 0.0 } else { (f(x) - f(y)).abs().powf(p) / (x - y).abs().powf(expo) };
        ym2_core::quad::integrate_with_breaks(k, &[0.0, x.min(0.5), x.max(0.5), 1.0], 1e-13, 1e-11).unwrap()
    };
    let reference = ym2_core::quad::integrate_with_breaks(inner, &[0.0, 0.5, 1.0], 1e-12, 1e-9).unwrap();
    let g = gagliardo_1d(&vals.map(AlgebraElement::u1), alpha, p).unwrap();
    assert!((g.quadrature - reference).abs() < 1e-7 * reference, "{} vs {reference}", g.quadrature);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gagliardo_bound_holds(vals in prop::collection::vec(-2.0f64..2.0, 2..20), alpha in 0.05f64..0.49, p in 2u32..6) {
        let v: Vec<AlgebraElement> = vals.iter().map(|&x| AlgebraElement::u1(x)).collect();
        let g = gagliardo_1d(&v, alpha, p as f64).unwrap();
        prop_assert!(g.holds(), "{:?}", g);
    }
}

#[test]
fn quadrature_seminorm_is_below_the_scaled_discrete_one() {
    let lat = MorseLattice::build(1, 4, AreaSpec::MorseSingular, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::SU2);
    let s = GaugeSampler::new(&lat, &fam, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..20 {
        let cfg = s.sample(i);
        let lines = LineGrid::from_config(&cfg).unwrap();
        let mr = rng.gen_range(1..=4usize);
        let mt = rng.gen_range(1..=4i64);
        let level0 = rng.gen_range(0..lat.rows - mr);
        let col0 = rng.gen_range(0..lat.cols as i64);
        let w = Window { level0, level1: level0 + mr, col0, col1: col0 + mt };
        let (alpha, p) = if i % 2 == 0 { (0.4, 2.0) } else { (0.3, 4.0) };
        let quad = aniso_quadrature(&lines, &w, alpha, p).unwrap();
        let disc = discrete_aniso_seminorm(&lines, &w, alpha, p).unwrap();
        let scale = 12f64.powf(2.0 * p) / ((mr as f64) * (mt as f64)).powf(1.0 - p * alpha);
        assert!(quad <= scale * disc, "window {w:?}: {quad} vs {}", scale * disc);
    }
}

#[test]
fn weighted_norm_grows_with_the_corona_exponent() {
    let lat = MorseLattice::build(1, 5, AreaSpec::MorseSingular, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::U1);
    let s = GaugeSampler::new(&lat, &fam, 9).unwrap();
    let top = norm_support_level(&lat);
    let cols: Vec<usize> = (0..lat.cols).collect();
    for i in 0..5 {
        let lines = LineGrid::from_config(&s.sample_partial(i, &cols, top)).unwrap();
        let mut prev = 0.0;
        for sv in [0.0, 0.1, 0.2, 0.3, 0.4] {
            let v = weighted_norm(&lines, &lat, &NormParams { alpha: 0.4, p: 4.0, s: sv }).unwrap().total();
            assert!(v >= prev, "s = {sv}: {v} < {prev}");
            prev = v;
        }
        let base = weighted_norm(&lines, &lat, &NormParams { alpha: 0.4, p: 4.0, s: 0.3 }).unwrap().total();
        let doubled = weighted_norm(&lines.scaled(2.0), &lat, &NormParams { alpha: 0.4, p: 4.0, s: 0.3 }).unwrap().total();
        assert!((doubled - 16.0 * base).abs() <= 1e-12 * doubled);
    }
}
