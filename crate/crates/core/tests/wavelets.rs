mod common;

use hyperwave_core::diffusion::DiffusionOperator;
use hyperwave_core::hypercore::Hypergraph;
use hyperwave_core::signal::SignalMatrix;
use hyperwave_core::wavelets::{dyadic_scales, wavelet_transform, ScaleSequence};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

use common::{arb_connected_hypergraph, arb_hypergraph, dense_operator, matrix_power, max_abs_diff};

fn arb_scales() -> impl Strategy<Value = ScaleSequence> {
    prop::collection::vec(0usize..4, 0..5).prop_map(|steps| {
        let mut s = vec![0, 1];
        for d in steps {
            let last = *s.last().unwrap();
            s.push(last + d);
        }
        ScaleSequence::new(s).unwrap()
    })
}

fn random_signal(n: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = common::rng(seed);
    Array2::from_shape_fn((n, cols), |_| rand::Rng::random_range(&mut rng, -2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blocks_match_dense_differences(g in arb_hypergraph(50, 40), j in 1usize..=5, seed in any::<u64>()) {
        let scales = dyadic_scales(j).unwrap();
        let x = random_signal(g.n(), 2, seed);
        let w = wavelet_transform(&DiffusionOperator::new(&g), &SignalMatrix::new(x.clone()).unwrap(), &scales).unwrap();
        let p = dense_operator(&g);
        let s = scales.as_slice();
        for i in 0..j {
            let want = (matrix_power(&p, s[i]) - matrix_power(&p, s[i + 1])).dot(&x);
            prop_assert!(max_abs_diff(&w.block(i).to_owned(), &want) < 1e-10);
        }
        let low = matrix_power(&p, s[j]).dot(&x);
        prop_assert!(max_abs_diff(&w.low_pass().to_owned(), &low) < 1e-10);
    }

    #[test]
    fn blocks_telescope(g in arb_hypergraph(60, 50), scales in arb_scales(), seed in any::<u64>()) {
        let x = random_signal(g.n(), 3, seed);
        let w = wavelet_transform(&DiffusionOperator::new(&g), &SignalMatrix::new(x.clone()).unwrap(), &scales).unwrap();
        let mut sum = w.low_pass().to_owned();
        for i in 0..scales.j() {
            sum += &w.block(i);
        }
        prop_assert!(max_abs_diff(&sum, &x) < 1e-10);
    }

    #[test]
    fn band_pass_blocks_are_localized(g in arb_hypergraph(40, 30), scales in arb_scales(), pick in any::<prop::sample::Index>()) {
        let src = pick.index(g.n());
        let dist = g.distances_from(src).unwrap();
        let w = wavelet_transform(&DiffusionOperator::new(&g), &SignalMatrix::basis(g.n(), src), &scales).unwrap();
        let s = scales.as_slice();
        for i in 0..scales.j() {
            let block = w.block(i);
            for v in 0..g.n() {
                if dist[v] > s[i + 1] {
                    prop_assert_eq!(block[[v, 0]], 0.0);
                }
            }
        }
    }

    #[test]
    fn weighted_energy_of_low_pass_is_monotone(g in arb_connected_hypergraph(30, 10), seed in any::<u64>()) {
        // For y = P^t x, ‖y‖² in the D_V⁻¹ inner product is non-increasing in t:
        // P is self-adjoint and a contraction there.
        let x = random_signal(g.n(), 1, seed);
        let inv_d: Array1<f64> = g.vertex_degrees().iter().map(|&d| 1.0 / d as f64).collect();
        let op = DiffusionOperator::new(&g);
        let mut prev = f64::INFINITY;
        for j in 1..=5 {
            let w = wavelet_transform(&op, &SignalMatrix::new(x.clone()).unwrap(), &dyadic_scales(j).unwrap()).unwrap();
            let y = w.low_pass().column(0).to_owned();
            let energy = (&y * &y * &inv_d).sum();
            prop_assert!(energy <= prev * (1.0 + 1e-12) + 1e-15);
            prev = energy;
        }
    }
}

#[test]
fn variance_of_low_pass_is_monotone_on_regular_hypergraphs() {
    // Cycle graph and a 3-uniform 3-regular "cyclic triple" hypergraph.
    let n = 24;
    let cycle = Hypergraph::new(n, (0..n).map(|i| vec![i, (i + 1) % n])).unwrap();
    let triples = Hypergraph::new(n, (0..n).map(|i| vec![i, (i + 1) % n, (i + 5) % n])).unwrap();
    for g in [cycle, triples] {
        for seed in 0..10 {
            let mut x = random_signal(n, 1, seed);
            let mean = x.mean().unwrap();
            x.mapv_inplace(|v| v - mean);
            let op = DiffusionOperator::new(&g);
            let mut prev = f64::INFINITY;
            for j in 1..=6 {
                let w = wavelet_transform(&op, &SignalMatrix::new(x.clone()).unwrap(), &dyadic_scales(j).unwrap()).unwrap();
                let var = w.low_pass().column(0).var(0.0);
                assert!(var <= prev * (1.0 + 1e-12), "variance rose at J={j}");
                prev = var;
            }
        }
    }
}

#[test]
fn linear_in_the_signal() {
    let mut rng = common::rng(3);
    let g = common::random_hypergraph(&mut rng, 30, 20, 4);
    let op = DiffusionOperator::new(&g);
    let scales = ScaleSequence::default();
    let a = random_signal(30, 2, 1);
    let b = random_signal(30, 2, 2);
    let wa = wavelet_transform(&op, &SignalMatrix::new(a.clone()).unwrap(), &scales).unwrap();
    let wb = wavelet_transform(&op, &SignalMatrix::new(b.clone()).unwrap(), &scales).unwrap();
    let wab = wavelet_transform(&op, &SignalMatrix::new(&a * 2.0 - &b).unwrap(), &scales).unwrap();
    let combined = wa.flattened().to_owned() * 2.0 - wb.flattened();
    assert!(max_abs_diff(&combined, &wab.flattened().to_owned()) < 1e-12);
}
