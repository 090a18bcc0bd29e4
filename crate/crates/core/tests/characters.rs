use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ym2_core::action::ActionFamily;
use ym2_core::character::{convolve_spectrum, llt_report, segal_amplitude, sup_norm_diff};
use ym2_core::group::{Group, GroupElement, Irrep};
use ym2_core::stats::mean_se;

fn group_of(b: bool) -> Group {
    if b {
        Group::SU2
    } else {
        Group::U1
    }
}

fn refine(coarse: &[f64], splits: &[Vec<f64>]) -> Vec<f64> {
    coarse
        .iter()
        .zip(splits)
        .flat_map(|(&a, w)| {
            let s: f64 = w.iter().sum();
            w.iter().map(move |x| a * x / s).collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn villain_amplitude_ignores_refinement(
        su2 in any::<bool>(),
        genus in 0u32..3,
        k in 0usize..2,
        coarse in prop::collection::vec(0.1f64..0.8, 1..5),
        splits in prop::collection::vec(prop::collection::vec(0.2f64..1.0, 1..4), 5),
        angle in 0.0f64..3.1,
    ) {
        let group = group_of(su2);
        let fam = ActionFamily::villain(group);
        let fine = refine(&coarse, &splits[..coarse.len()]);
        let b: Vec<GroupElement> = (0..k).map(|_| GroupElement::from_class_angle(group, angle)).collect();
        let z1 = segal_amplitude(genus, &b, &coarse, &fam, 150.0).unwrap();
        let z2 = segal_amplitude(genus, &b, &fine, &fam, 150.0).unwrap();
        prop_assert!((z1.value - z2.value).abs() < 1e-11, "{} vs {}", z1.value, z2.value);
        if k == 0 {
            prop_assert!(z1.value > 0.0);
        }
    }

    #[test]
    fn villain_disc_amplitude_is_positive(su2 in any::<bool>(), genus in 0u32..3, area in 0.2f64..3.0, angle in 0.0f64..3.1) {
        let group = group_of(su2);
        let g = GroupElement::from_class_angle(group, angle);
        let z = segal_amplitude(genus, &[g], &[area], &ActionFamily::villain(group), 200.0).unwrap();
        prop_assert!(z.value > 0.0, "{}", z.value);
    }

    #[test]
    fn doubling_truncation_stays_within_tail(su2 in any::<bool>(), genus in 1u32..3, area in 0.3f64..1.5, angle in 0.0f64..3.1) {
        let group = group_of(su2);
        let fam = ActionFamily::villain(group);
        let g = GroupElement::from_class_angle(group, angle);
        let z1 = segal_amplitude(genus, &[g], &[area], &fam, 6.0).unwrap();
        let z2 = segal_amplitude(genus, &[g], &[area], &fam, 12.0).unwrap();
        prop_assert!((z1.value - z2.value).abs() <= z1.tail + 1e-14, "{} vs {} tail {}", z1.value, z2.value, z1.tail);
    }
}

#[test]
fn class_grid_sup_never_exceeds_the_c0_bound() {
    for fam in [
        ActionFamily::wilson(Group::U1),
        ActionFamily::wilson(Group::SU2),
        ActionFamily::manton(Group::U1),
        ActionFamily::manton(Group::SU2),
        ActionFamily::villain(Group::SU2),
    ] {
        for n in [1usize, 4, 16] {
            let s = convolve_spectrum(&vec![0.5 / n as f64; n], &fam, 80.0).unwrap();
            assert!(s.sup_norm() <= s.ck_norm(0) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn wilson_convolution_matches_monte_carlo_products() {
    let fam = ActionFamily::wilson(Group::U1);
    let spec = convolve_spectrum(&[0.125; 8], &fam, 40.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let prods: Vec<GroupElement> = (0..n)
        .map(|_| (0..8).fold(GroupElement::identity(Group::U1), |acc, _| acc * fam.sample(0.125, &mut rng).unwrap()))
        .collect();
    for idx in 0..4 {
        let l = Irrep::new(Group::U1, idx).unwrap();
        let coef = spec.coefficient(&l).unwrap();
        assert!(coef.abs() <= 1.0 + 1e-12);
        let (m, se) = mean_se(&prods.iter().map(|g| l.character_re(g)).collect::<Vec<_>>());
        assert!((m - coef).abs() <= 4.0 * se.max(1e-12), "n={idx}: {m} ± {se} vs {coef}");
    }
}

#[test]
fn wilson_segal_amplitudes_approach_the_villain_ones() {
    let group = Group::SU2;
    let villain = ActionFamily::villain(group);
    let wilson = ActionFamily::wilson(group);
    let grid: Vec<GroupElement> = (0..32).map(|i| GroupElement::from_class_angle(group, (i as f64 + 0.5) * std::f64::consts::PI / 32.0)).collect();
    let mut prev = f64::INFINITY;
    for n in [4usize, 16, 64] {
        let areas = vec![1.0 / n as f64; n];
        let mut err: f64 = 0.0;
        for g in &grid {
            let zw = segal_amplitude(1, &[*g], &areas, &wilson, 120.0).unwrap().value;
            let zv = segal_amplitude(1, &[*g], &[1.0], &villain, 120.0).unwrap().value;
            err = err.max((zw - zv).abs());
        }
        assert!(err < prev, "n={n}: {err} not below {prev}");
        prev = err;
    }
    assert!(prev < 0.05);
}

#[test]
fn villain_ladder_has_no_distance() {
    let rows = llt_report(&ActionFamily::villain(Group::SU2), &[1, 8, 64], 2, 60.0).unwrap();
    for r in rows {
        assert!(r.sup_distance < 1e-12 && r.ck_distance < 1e-10, "{r:?}");
    }
}

#[test]
fn manton_u1_ladder_distance_shrinks() {
    let fam = ActionFamily::manton(Group::U1);
    let heat = ym2_core::character::ClassFunctionSpectrum::heat_kernel(Group::U1, 1.0, 60.0).unwrap();
    let d16 = sup_norm_diff(&convolve_spectrum(&[1.0 / 16.0; 16], &fam, 60.0).unwrap(), &heat).unwrap();
    let d256 = sup_norm_diff(&convolve_spectrum(&vec![1.0 / 256.0; 256], &fam, 60.0).unwrap(), &heat).unwrap();
    assert!(d256 <= d16, "{d256} vs {d16}");
}
