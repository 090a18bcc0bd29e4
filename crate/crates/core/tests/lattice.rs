use ym2_core::lattice::{AreaSpec, CircleItem, MorseLattice};

#[test]
fn uniform_faces_split_into_four_children() {
    for genus in 1..=2 {
        for n in 2..=5 {
            let coarse = MorseLattice::build(genus, n, AreaSpec::Uniform, 1.3).unwrap();
            let fine = MorseLattice::build(genus, n + 1, AreaSpec::Uniform, 1.3).unwrap();
            assert_eq!(fine.rows, 2 * coarse.rows);
            assert_eq!(fine.cols, 2 * coarse.cols);
            for f in 0..coarse.faces() {
                let (row, col) = coarse.face_coords(f);
                let children: f64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|&(dr, dc)| fine.face_area(fine.face_index(2 * row + dr, 2 * col + dc).unwrap()).unwrap())
                    .sum();
                assert!((children - coarse.face_area(f).unwrap()).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn areas_sum_to_the_configured_total() {
    for spec in [AreaSpec::Uniform, AreaSpec::MorseSingular] {
        for genus in 1..=3 {
            let lat = MorseLattice::build(genus, 4, spec, 2.5).unwrap();
            let s: f64 = lat.areas().iter().sum();
            assert!((s - 2.5).abs() < 1e-6, "{spec:?} genus {genus}: {s}");
        }
    }
}

#[test]
fn uniform_strips_share_the_area_equally() {
    let lat = MorseLattice::build(2, 3, AreaSpec::Uniform, 1.0).unwrap();
    for c in 0..lat.cols {
        assert!((lat.strip_area(c).unwrap() - 1.0 / lat.cols as f64).abs() < 1e-15);
    }
    assert!(lat.strip_area(lat.cols).is_err());
    let max = lat.areas().iter().copied().fold(0.0, f64::max);
    let min = lat.areas().iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max / min < 1.0 + 1e-12);
}

#[test]
fn corona_indices_partition_faces_with_dyadic_counts() {
    for n in [6u32, 7] {
        let lat = MorseLattice::build(1, n, AreaSpec::MorseSingular, 1.0).unwrap();
        let mut counts = vec![0usize; n as usize + 1];
        for &j in lat.corona() {
            assert!(j as u32 <= n);
            counts[j as usize] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), lat.faces());
        // the outermost index collects all remaining faces, so only inner coronas are compared
        for j in 1..n as usize {
            let expect = 4f64.powi((n as usize - j) as i32);
            let c = counts[j] as f64;
            assert!(c >= expect / 4.0 && c <= 4.0 * expect, "N={n} j={j}: {c} vs {expect}");
        }
    }
}

#[test]
fn singular_areas_scale_with_corona_index() {
    let lat = MorseLattice::build(1, 8, AreaSpec::MorseSingular, 1.0).unwrap();
    let fit = lat.corona_regression().unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.15, "slope {}", fit.slope);
}

#[test]
fn faces_away_from_saddles_keep_the_uniform_area() {
    let lat = MorseLattice::build(1, 6, AreaSpec::MorseSingular, 1.0).unwrap();
    let far: Vec<f64> = (0..lat.faces()).filter(|&f| lat.saddle_distance(f) > 0.3).map(|f| lat.areas()[f]).collect();
    assert!(!far.is_empty());
    let max = far.iter().copied().fold(0.0, f64::max);
    let min = far.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max / min < 1.0 + 1e-9);
    let scaled = max * 4f64.powi(6);
    assert!(scaled > 0.01 && scaled < 1.0, "{scaled}");
}

#[test]
fn build_is_deterministic() {
    let a = MorseLattice::build(2, 5, AreaSpec::MorseSingular, 1.0).unwrap();
    let b = MorseLattice::build(2, 5, AreaSpec::MorseSingular, 1.0).unwrap();
    assert!(a.areas().iter().zip(b.areas()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.corona(), b.corona());
}

#[test]
fn loop_basis_and_level_circles() {
    for genus in 1..=3u32 {
        let lat = MorseLattice::build(genus, 2, AreaSpec::Uniform, 1.0).unwrap();
        let (faces, stable) = lat.loop_basis();
        assert_eq!(faces.len(), lat.faces());
        assert_eq!(stable.len(), 2 * genus as usize);

        let items = lat.level_circle(lat.rows, true).unwrap();
        let mut arcs: Vec<usize> = items
            .iter()
            .filter_map(|it| match it {
                CircleItem::Arc { col } => Some(*col),
                _ => None,
            })
            .collect();
        arcs.sort_unstable();
        assert_eq!(arcs, (0..lat.cols).collect::<Vec<_>>());
        assert!((arcs.len() as f64 * lat.step - lat.period()).abs() < 1e-12);

        let inserts: Vec<(usize, bool)> = items
            .iter()
            .filter_map(|it| match it {
                CircleItem::Insert { generator, inverse } => Some((*generator, *inverse)),
                _ => None,
            })
            .collect();
        let two_g = 2 * genus as usize;
        let expect: Vec<(usize, bool)> = (0..two_g).map(|i| (i, false)).chain((0..two_g).map(|i| (i, true))).collect();
        assert_eq!(inserts, expect);

        assert!(lat.level_circle(lat.saddle_level(two_g), true).is_err());
        assert!(lat.level_circle(1, false).unwrap().iter().all(|it| matches!(it, CircleItem::Arc { .. })));
    }
}

#[test]
fn resolution_guard_and_bad_genus() {
    assert!(MorseLattice::build(1, 15, AreaSpec::Uniform, 1.0).is_err());
    assert!(MorseLattice::build(0, 3, AreaSpec::Uniform, 1.0).is_err());
    assert!(MorseLattice::build(1, 0, AreaSpec::Uniform, 1.0).is_err());
}
