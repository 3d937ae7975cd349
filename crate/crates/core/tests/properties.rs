use approx::assert_relative_eq;
use proptest::prelude::*;

use horolab_core::exact::Dyadic;
use horolab_core::lattice::{lll_reduce, shortest_vector, NormKind, UnimodularBasis};

fn basis(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, n), n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Classical Gram-Schmidt: squared norms of the orthogonalised columns and
/// the projection coefficients.
fn gram_schmidt(cols: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = cols.len();
    let mut star: Vec<Vec<f64>> = Vec::new();
    let mut mu = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut v = cols[i].clone();
        for j in 0..i {
            mu[i][j] = dot(&cols[i], &star[j]) / dot(&star[j], &star[j]);
            for (vk, sk) in v.iter_mut().zip(&star[j]) {
                *vk -= mu[i][j] * sk;
            }
        }
        star.push(v);
    }
    (star.iter().map(|s| dot(s, s)).collect(), mu)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lll_output_is_reduced_and_equivalent(cols in (2usize..=4).prop_flat_map(basis)) {
        let b = UnimodularBasis::from_columns(&cols);
        prop_assume!(b.as_ref().is_ok_and(|b| b.det().abs() > 0.05));
        let b = b.unwrap();
        let (red, t) = lll_reduce(&b, 0.99).unwrap();
        let n = cols.len();
        prop_assert_eq!(t.det().magnitude().to_string(), "1");
        let tf = t.to_f64();
        for j in 0..n {
            for i in 0..n {
                let expect: f64 = (0..n).map(|k| cols[k][i] * tf[k * n + j]).sum();
                assert_relative_eq!(red.column(j)[i], expect, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
        assert_relative_eq!(red.det().abs(), b.det().abs(), max_relative = 1e-8);
        let (bn, mu) = gram_schmidt(&red.columns_vec());
        for i in 1..n {
            for j in 0..i {
                prop_assert!(mu[i][j].abs() <= 0.5 + 1e-9, "size reduction mu[{}][{}] = {}", i, j, mu[i][j]);
            }
            prop_assert!(bn[i] >= (0.99 - mu[i][i - 1].powi(2)) * bn[i - 1] * (1.0 - 1e-9));
        }
    }

    #[test]
    fn shortest_vector_beats_small_combinations(cols in (2usize..=3).prop_flat_map(basis)) {
        let b = UnimodularBasis::from_columns(&cols);
        prop_assume!(b.as_ref().is_ok_and(|b| b.det().abs() > 0.05));
        let b = b.unwrap();
        let n = cols.len();
        let sv = shortest_vector(&b, NormKind::Euclidean, None).unwrap().unwrap();
        prop_assert!(sv.coeffs.iter().any(|&c| c != 0));
        let rebuilt = b.apply(&sv.coeffs);
        for (x, y) in rebuilt.iter().zip(&sv.vector) {
            assert_relative_eq!(*x, *y, epsilon = 1e-9);
        }
        assert_relative_eq!(sv.length, dot(&sv.vector, &sv.vector).sqrt(), max_relative = 1e-12);
        let range = -3i64..=3;
        let mut best = f64::INFINITY;
        let mut c = vec![-3i64; n];
        loop {
            if c.iter().any(|&x| x != 0) {
                best = best.min(NormKind::Euclidean.of(&b.apply(&c)));
            }
            let Some(k) = c.iter().position(|&x| x < *range.end()) else { break };
            c[k] += 1;
            for x in &mut c[..k] {
                *x = *range.start();
            }
        }
        prop_assert!(sv.length <= best * (1.0 + 1e-9), "{} > {}", sv.length, best);
    }

    #[test]
    fn dyadic_arithmetic_is_exact(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000, ea in 0i32..30, eb in 0i32..30) {
        let x = a as f64 / 2f64.powi(ea);
        let y = b as f64 / 2f64.powi(eb);
        let (dx, dy) = (Dyadic::from_f64(x).unwrap(), Dyadic::from_f64(y).unwrap());
        prop_assert_eq!(dx.add(&dy).to_f64(), x + y);
        prop_assert_eq!(dx.sub(&dy).to_f64(), x - y);
        prop_assert_eq!(dx.mul(&dy).to_f64(), x * y);
        prop_assert!(dx.sub(&dx).is_zero());
    }
}
