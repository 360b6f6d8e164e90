use proptest::prelude::*;
use sabre_core::spline::{design_matrix, SplineBasis};

/// Textbook recursion on the full knot vector, with the convention that the
/// last nonempty interval is closed on the right.
fn naive(knots: &[f64], j: usize, r: usize, z: f64) -> f64 {
    if r == 1 {
        let last = knots.iter().rposition(|&t| t < 1.0).unwrap();
        let (a, b) = (knots[j], knots[j + 1]);
        return if (a <= z && z < b) || (j == last && z == 1.0 && a < b) {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let d1 = knots[j + r - 1] - knots[j];
    if d1 > 0.0 {
        v += (z - knots[j]) / d1 * naive(knots, j, r - 1, z);
    }
    let d2 = knots[j + r] - knots[j + 1];
    if d2 > 0.0 {
        v += (knots[j + r] - z) / d2 * naive(knots, j + 1, r - 1, z);
    }
    v
}

fn interior() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..999, 0..8)
        .prop_map(|s| s.into_iter().map(|v| v as f64 / 1000.0).collect())
}

proptest! {
    #[test]
    fn matches_textbook_recursion(inner in interior(), r in 2usize..6, z in 0.0f64..=1.0) {
        let basis = SplineBasis::with_interior_knots(inner, r).unwrap();
        let values = basis.eval(z).unwrap();
        for (j, v) in values.iter().enumerate() {
            prop_assert!((v - naive(basis.knots(), j, r, z)).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_of_unity_and_local_support(inner in interior(), r in 2usize..6, z in 0.0f64..=1.0) {
        let basis = SplineBasis::with_interior_knots(inner, r).unwrap();
        let values = basis.eval(z).unwrap();
        prop_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(values.iter().all(|&v| v >= 0.0));
        prop_assert!(values.iter().filter(|&&v| v != 0.0).count() <= r);
    }

    /// Greville abscissae reproduce the identity: Σ ξ_j B_j(z) = z.
    #[test]
    fn marsden_identity(inner in interior(), r in 2usize..6, z in 0.0f64..=1.0) {
        let basis = SplineBasis::with_interior_knots(inner, r).unwrap();
        let t = basis.knots();
        let values = basis.eval(z).unwrap();
        let s: f64 = values
            .iter()
            .enumerate()
            .map(|(j, b)| b * t[j + 1..j + r].iter().sum::<f64>() / (r - 1) as f64)
            .sum();
        prop_assert!((s - z).abs() < 1e-12);
    }
}

#[test]
fn basis_size_is_interior_plus_order() {
    for r in 2..6 {
        for n in 0..6 {
            let inner: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
            let basis = SplineBasis::with_interior_knots(inner, r).unwrap();
            assert_eq!(basis.len(), n + r);
            assert_eq!(basis.knots().len(), n + 2 * r);
        }
    }
}

#[test]
fn bernstein_reduction() {
    let basis = SplineBasis::with_interior_knots(vec![], 4).unwrap();
    for i in 0..=100 {
        let z = i as f64 / 100.0;
        let v = basis.eval(z).unwrap();
        let w = 1.0 - z;
        let bern = [w * w * w, 3.0 * z * w * w, 3.0 * z * z * w, z * z * z];
        for (a, b) in v.iter().zip(bern) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn quantile_knots_sit_on_sample_points() {
    let z: Vec<f64> = (0..101).map(|i| (i as f64 / 100.0).powi(2)).collect();
    let basis = SplineBasis::from_quantiles(&z, 3, 4).unwrap();
    assert_eq!(basis.interior_knots().len(), 3);
    for t in basis.interior_knots() {
        assert!(z.contains(t));
    }
    let quartile = basis.interior_knots()[1];
    let below = z.iter().filter(|&&v| v <= quartile).count();
    assert!((50..=52).contains(&below));
}

#[test]
fn design_rows_match_pointwise_evaluation() {
    let basis = SplineBasis::with_interior_knots(vec![0.3, 0.6], 3).unwrap();
    let z = [0.0, 0.3, 0.45, 1.0];
    let x = nalgebra::DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let w = design_matrix(&basis, &x, &z).unwrap();
    assert_eq!(w.shape(), (4, 2 + basis.len()));
    for (i, &zi) in z.iter().enumerate() {
        assert_eq!(w[(i, 0)], x[(i, 0)]);
        let b = basis.eval(zi).unwrap();
        for (j, bj) in b.iter().enumerate() {
            assert_eq!(w[(i, 2 + j)], *bj);
        }
    }
}
