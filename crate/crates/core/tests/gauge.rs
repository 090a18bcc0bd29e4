use ym2_core::action::ActionFamily;
use ym2_core::group::{Group, GroupElement, Irrep};
use ym2_core::lattice::{AreaSpec, MorseLattice};
use ym2_core::sampler::{condition_close, increment_moment_check, map_samples, GaugeSampler, Observable};
use ym2_core::stats::mean_se;

#[test]
fn stable_elements_are_haar() {
    let lat = MorseLattice::build(2, 1, AreaSpec::Uniform, 1.0).unwrap();
    for group in [Group::U1, Group::SU2] {
        let fam = ActionFamily::villain(group);
        let s = GaugeSampler::new(&lat, &fam, 3).unwrap();
        let us = map_samples(20_000, 1, |i| s.sample(i).u);
        for b in 0..4 {
            for idx in 1..=2 {
                let l = Irrep::new(group, idx).unwrap();
                let (m, se) = mean_se(&us.iter().map(|u| l.character_re(&u[b])).collect::<Vec<_>>());
                assert!(m.abs() <= 4.0 * se, "{group:?} U_{b} λ={idx}: {m} ± {se}");
            }
        }
    }
}

#[test]
fn same_seed_same_configuration() {
    let lat = MorseLattice::build(1, 3, AreaSpec::MorseSingular, 1.0).unwrap();
    let fam = ActionFamily::wilson(Group::SU2);
    let a = GaugeSampler::new(&lat, &fam, 99).unwrap().sample(7);
    let b = GaugeSampler::new(&lat, &fam, 99).unwrap().sample(7);
    let c = GaugeSampler::new(&lat, &fam, 100).unwrap().sample(7);
    for level in 0..=lat.rows {
        for col in 0..lat.cols {
            assert_eq!(a.m(level, col), b.m(level, col));
        }
    }
    assert_eq!(a.u, b.u);
    assert_ne!(a.m(lat.rows, 0), c.m(lat.rows, 0));
}

#[test]
fn single_column_second_moment_is_the_area() {
    // Villain U(1) increments are wrapped Gaussians with variance equal to the area;
    // with small areas the wrap is invisible and the column sum is Gaussian.
    let lat = MorseLattice::build(1, 3, AreaSpec::Uniform, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::U1);
    for (n, m) in [(0, 4), (3, 11), (10, 30)] {
        let r = increment_moment_check(&lat, &fam, 5, 6, n, m, 2.0, 40_000, 21).unwrap();
        let area: f64 = (n..m).map(|row| lat.areas()[row * lat.cols + 5]).sum();
        assert!((r.estimate - area).abs() <= 4.0 * r.se, "{} ± {} vs {area}", r.estimate, r.se);
        assert_eq!(r.rejected, 0);
    }
}

#[test]
fn increment_moments_respect_the_gaussian_constant() {
    // For Villain U(1) the window sum is Gaussian with variance (l−k)(m−n)·a, a = ε/8 on the
    // genus-1 cylinder of total area 1, so E|X|² ≤ shape/8 and E|X|⁴ ≤ 3·shape/64.
    let lat = MorseLattice::build(1, 4, AreaSpec::Uniform, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::U1);
    let windows = [(0, 2, 0, 3), (0, 4, 2, 9), (0, 8, 5, 6), (0, 16, 1, 20), (3, 5, 10, 14), (7, 15, 0, 32), (2, 3, 40, 60), (0, 32, 30, 34), (9, 13, 12, 13), (20, 28, 50, 58)];
    for (i, &(k, l, n, m)) in windows.iter().enumerate() {
        for (two_beta, c) in [(2.0, 1.0 / 8.0), (4.0, 3.0 / 64.0)] {
            let r = increment_moment_check(&lat, &fam, k, l, n, m, two_beta, 4000, 31 + i as u64).unwrap();
            assert!(r.estimate <= c * r.bound_shape + 4.0 * r.se, "window {i} 2β={two_beta}: {} vs {}", r.estimate, c * r.bound_shape);
        }
    }
}

#[test]
fn increment_moment_scales_linearly_in_width() {
    let lat = MorseLattice::build(1, 4, AreaSpec::Uniform, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::U1);
    let base = increment_moment_check(&lat, &fam, 0, 2, 4, 12, 2.0, 8000, 41).unwrap();
    let r0 = base.estimate / base.bound_shape;
    for l in [4, 8, 16] {
        let r = increment_moment_check(&lat, &fam, 0, l, 4, 12, 2.0, 8000, 41 + l as u64).unwrap();
        let ratio = r.estimate / r.bound_shape;
        let tol = 4.0 * ((base.se / base.bound_shape).powi(2) + (r.se / r.bound_shape).powi(2)).sqrt();
        assert!(ratio <= r0 + tol, "l={l}: {ratio} vs {r0}");
    }
}

/// Closed genus-1 mean of `Re χ_1` on a disc of area `s` in a surface of area `a`, heat kernel on SU(2).
fn closed_disc_mean(s: f64, a: f64) -> f64 {
    let c2 = |m: i64| (m * (m + 2)) as f64 / 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for m in 0..200i64 {
        let mut c = (m + 2) as f64 * (-s * c2(m + 1)).exp();
        if m > 0 {
            c += m as f64 * (-s * c2(m - 1)).exp();
        }
        num += (-(a - s) * c2(m)).exp() * c / (m + 1) as f64;
        den += (-a * c2(m)).exp();
    }
    num / den
}

#[test]
fn conditioning_closes_the_surface_on_a_disc_observable() {
    let lat = MorseLattice::build(1, 2, AreaSpec::Uniform, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::SU2);
    let disc_level = lat.saddle_level(1);
    let chi = Irrep::new(Group::SU2, 1).unwrap();
    let lat_ref = &lat;
    let obs = Observable::new(disc_level, move |cfg| chi.character_re(&cfg.level_holonomy(lat_ref, disc_level, false).unwrap()));
    let level = 5 * lat.rows / 8;
    let est = condition_close(&lat, &fam, &obs, level, 40_000, 5, 1).unwrap();
    let s = lat.area_below(disc_level);
    let oracle = closed_disc_mean(s, 1.0);
    let free = 2.0 * (-0.75 * s).exp();
    assert!((est.estimate - oracle).abs() <= 4.0 * est.se, "{} ± {} vs {oracle}", est.estimate, est.se);
    // the conditioning is visible at this sample size
    assert!((free - oracle).abs() > 8.0 * est.se);
    assert!(est.ess > 0.05 * est.samples as f64);
}

#[test]
fn conditioning_level_does_not_matter() {
    let lat = MorseLattice::build(1, 2, AreaSpec::Uniform, 1.0).unwrap();
    let fam = ActionFamily::villain(Group::SU2);
    let face = lat.face_index(1, 2).unwrap();
    let obs = Observable::face_character(&lat, face, Irrep::new(Group::SU2, 1).unwrap());
    let a = condition_close(&lat, &fam, &obs, lat.saddle_level(2) + 1, 30_000, 6, 1).unwrap();
    let b = condition_close(&lat, &fam, &obs, lat.rows - 1, 30_000, 7, 1).unwrap();
    assert!((a.estimate - b.estimate).abs() <= 4.0 * (a.se.powi(2) + b.se.powi(2)).sqrt());
}

#[test]
fn weights_only_see_the_level_holonomy() {
    // Changing a face increment below the level and compensating in the face above leaves
    // every bond from the level up untouched, so the conditioning weight cannot move.
    let lat = MorseLattice::build(1, 2, AreaSpec::Uniform, 1.0).unwrap();
    let fam = ActionFamily::wilson(Group::SU2);
    let s = GaugeSampler::new(&lat, &fam, 8).unwrap();
    let level = lat.rows - 2;
    let items = lat.level_circle(level, true).unwrap();
    let twist = GroupElement::from_quaternion([0.6, 0.0, 0.8, 0.0]);
    for i in 0..50 {
        let cfg = s.sample(i);
        let mut moved = cfg.clone();
        let (row, col) = (3, (i as usize * 5) % lat.cols);
        moved.set_m(row + 1, col, *cfg.m(row + 1, col) * twist);
        assert_ne!(moved.increment(row * lat.cols + col), cfg.increment(row * lat.cols + col));
        assert_eq!(moved.circle_holonomy(&items, level), cfg.circle_holonomy(&items, level));
    }
}
