use pan_core::linalg::{bce, masked_bce_mean};
use pan_core::scalar::sigmoid;
use pan_core::{Elementwise, Matrix, Tape};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; a.rows() * b.cols()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            for k in 0..a.cols() {
                out[i * b.cols() + j] += a.get(i, k) * b.get(k, j);
            }
        }
    }
    out
}

#[test]
fn matmul_four_by_three_matches_triple_loop() {
    let a = Matrix::new(4, 3, (0..12).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
    let b = Matrix::new(3, 2, (0..6).map(|v| (v as f64 * 1.3).cos()).collect()).unwrap();
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.shape(), (4, 2));
    for (x, y) in c.as_slice().iter().zip(naive_matmul(&a, &b)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn sigmoid_saturates_without_nan() {
    assert!((sigmoid(40.0f64) - 1.0).abs() < 1e-12);
    assert!(sigmoid(-40.0f64).abs() < 1e-12);
    assert!(!sigmoid(-1000.0f64).is_nan());
    assert!(!sigmoid(1000.0f64).is_nan());
}

#[test]
fn softmax_of_zero_and_ln3() {
    let m = Matrix::new(1, 2, vec![0.0, 3f64.ln()]).unwrap().row_softmax().unwrap();
    assert!((m.get(0, 0) - 0.25).abs() < 1e-15);
    assert!((m.get(0, 1) - 0.75).abs() < 1e-15);
}

#[test]
fn masked_mean_hand_expansion() {
    let v = masked_bce_mean(&[0.9, 0.1], &[1.0, 1.0], &[1.0, 0.0]).unwrap();
    assert_eq!(v, bce(0.9, 1.0));
}

proptest! {
    #[test]
    fn matmul_agrees_with_triple_loop(
        (a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(r, k, c)| (matrix(r, k), matrix(k, c)))
    ) {
        let c = a.matmul(&b).unwrap();
        for (x, y) in c.as_slice().iter().zip(naive_matmul(&a, &b)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(m in (1usize..5, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))) {
        let s = m.row_softmax().unwrap();
        for r in 0..s.rows() {
            let row = s.row(r);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_row_shifts(m in matrix(3, 4), shift in -50.0f64..50.0) {
        let shifted = m.map(|v| v + shift);
        let diff = m.row_softmax().unwrap().max_abs_diff(&shifted.row_softmax().unwrap()).unwrap();
        prop_assert!(diff < 1e-12);
    }

    #[test]
    fn sigmoid_is_point_symmetric(x in -60.0f64..60.0) {
        let s = sigmoid(x);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-x) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn masked_entries_do_not_matter(
        p in prop::collection::vec(0.01f64..0.99, 8),
        y in prop::collection::vec(0u8..2, 8),
        mask in prop::collection::vec(0u8..2, 8),
        junk_p in prop::collection::vec(0.01f64..0.99, 8),
        junk_y in prop::collection::vec(0u8..2, 8),
    ) {
        let f = |v: &[u8]| v.iter().map(|&b| f64::from(b)).collect::<Vec<_>>();
        let (y, mask) = (f(&y), f(&mask));
        let p2: Vec<f64> = (0..8).map(|k| if mask[k] == 1.0 { p[k] } else { junk_p[k] }).collect();
        let y2: Vec<f64> = (0..8).map(|k| if mask[k] == 1.0 { y[k] } else { f64::from(junk_y[k]) }).collect();
        prop_assert_eq!(masked_bce_mean(&p, &y, &mask).unwrap(), masked_bce_mean(&p2, &y2, &mask).unwrap());
    }

    #[test]
    fn tape_forward_matches_direct_evaluation(a in matrix(3, 4), w in matrix(4, 2), b in matrix(1, 2)) {
        let mut tape = Tape::new();
        let av = tape.constant(a.clone());
        let wv = tape.param("w", w.clone()).unwrap();
        let bv = tape.param("b", b.clone()).unwrap();
        let z = tape.matmul(av, wv).unwrap();
        let z = tape.add_row_broadcast(z, bv).unwrap();
        let s = tape.sigmoid(z).unwrap();
        let direct = a
            .matmul(&w)
            .unwrap()
            .add_row_broadcast(&b)
            .unwrap()
            .elementwise(Elementwise::Sigmoid, None)
            .unwrap();
        prop_assert_eq!(tape.value(s), &direct);
    }
}
