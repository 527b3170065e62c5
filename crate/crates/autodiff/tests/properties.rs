use hbf_autodiff::{Tape, Tensor};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

proptest! {
    #[test]
    fn matmul_matches_naive_triple_loop(
        (a, b) in (1usize..6, 1usize..6, 1usize..6)
            .prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n)))
    ) {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let tape = Tape::new();
        let c = tape.constant(a.clone()).matmul(tape.constant(b.clone())).unwrap().value();
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|t| a.data()[i * k + t] * b.data()[t * n + j]).sum();
                prop_assert!((c.data()[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_linear_sum_is_broadcast_count(a in matrix(3, 4), row in matrix(1, 4)) {
        // d/d(row) of sum(a + row) counts how often each entry is broadcast
        let tape = Tape::new();
        let r = tape.param(row);
        let loss = tape.constant(a).add(r).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        prop_assert_eq!(g.get(r).unwrap().data(), &[3.0; 4]);
    }

    #[test]
    fn sigmoid_stays_in_open_unit_interval(x in matrix(2, 8)) {
        let tape = Tape::new();
        let s = tape.constant(x.map(|v| v * 10.0)).sigmoid().value();
        prop_assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
