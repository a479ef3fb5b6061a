mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use zfpiter::bounds::{BoundParams, FloatFormat};
use zfpiter::iterops::*;

fn ftcs2d(n: usize, r: f64) -> StencilOperator {
    StencilOperator::new(
        vec![n, n],
        vec![
            (vec![0, 0], 1.0 - 4.0 * r),
            (vec![1, 0], r),
            (vec![-1, 0], r),
            (vec![0, 1], r),
            (vec![0, -1], r),
        ],
        Boundary::Fixed,
    )
}

fn lax_wendroff(n: usize, s: f64) -> StencilOperator {
    StencilOperator::new(
        vec![n],
        vec![(vec![-1], (s * s + s) / 2.0), (vec![0], 1.0 - s * s), (vec![1], (s * s - s) / 2.0)],
        Boundary::Periodic,
    )
}

fn poisson1d(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

#[test]
fn stencil_norms() {
    assert_eq!(inf_norm(&ftcs2d(10, 0.25)).unwrap(), 1.0);
    assert_eq!(inf_norm(&ftcs2d(10, 0.1)).unwrap(), 1.0);
    let lw = inf_norm(&lax_wendroff(100, 0.9)).unwrap();
    assert!((lw - 1.09).abs() < 1e-12, "{lw}");
    let id = StencilOperator::new(vec![7], vec![(vec![0], 1.0)], Boundary::Periodic);
    assert_eq!(inf_norm(&id).unwrap(), 1.0);
    let g = FnOperator::new(3, |x: &[f64], o: &mut [f64]| o.copy_from_slice(x), OperatorMeta::default());
    assert!(matches!(inf_norm(&g), Err(zfpiter::Error::Kind(_))));
}

#[test]
fn stencil_closed_form_matches_dense() {
    for op in [ftcs2d(6, 0.2), ftcs2d(9, 0.05)] {
        let a = op.to_dense().unwrap();
        assert!((matrix_inf_norm(&a) - inf_norm(&op).unwrap()).abs() < 1e-15);
        let x: Vec<f64> = (0..op.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; op.len()];
        op.apply(&x, &mut out);
        let dense = &a * DVector::from_vec(x.clone());
        for i in 0..op.len() {
            assert!((out[i] - dense[i]).abs() < 1e-15);
        }
    }
    let lw = lax_wendroff(12, 0.9);
    assert!((matrix_inf_norm(&lw.to_dense().unwrap()) - 1.09).abs() < 1e-12);
}

#[test]
fn kreiss_estimates() {
    let id = DenseOperator::new(DMatrix::identity(5, 5));
    let k = kreiss_constant_estimate(&id, 10).unwrap();
    assert!((k.value - 1.0).abs() < 1e-12);
    assert_eq!(k.source, KreissSource::Estimated);
    // Shift with weight 3: ||A||_2 = 3, A^2 = 0.
    let mut a = DMatrix::zeros(2, 2);
    a[(0, 1)] = 3.0;
    let k = kreiss_constant_estimate(&DenseOperator::new(a), 5).unwrap();
    assert!((k.value - 3.0).abs() < 1e-12);
    let mut lw = lax_wendroff(20, 0.9);
    lw.meta.kreiss = Some(2.0);
    assert_eq!(kreiss_constant_estimate(&lw, 1).unwrap(), KreissEstimate { value: 2.0, source: KreissSource::Analytic });
    let big = StencilOperator::new(vec![3000], vec![(vec![0], 1.0)], Boundary::Periodic);
    assert!(matches!(kreiss_constant_estimate(&big, 2), Err(zfpiter::Error::Size(..))));
    // Lax-Wendroff is a contraction in the 2-norm for this CFL number.
    let est = kreiss_constant_estimate(&lax_wendroff(40, 0.9), 50).unwrap().value;
    assert!(est <= 1.0 + 1e-12 && est > 0.99, "{est}");
}

#[test]
fn jacobi_split_tridiagonal() {
    let a = poisson1d(10);
    let s = jacobi_split(&a).unwrap();
    assert_eq!(&s.m - &s.n, a);
    assert_eq!(s.stats.sigma, 1.0);
    let rho = two_norm(&s.g);
    assert!((rho - (std::f64::consts::PI / 11.0).cos()).abs() < 1e-13);
    assert_eq!(s.minv_path, NormPath::Exact);
    assert_eq!(s.stats.minv_norm, 0.5);
    assert_eq!(s.stats.c_tilde, 10.0);
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
    assert_eq!(jacobi_split(&d).unwrap().stats.sigma, 0.0);
    let mut z = poisson1d(4);
    z[(2, 2)] = 0.0;
    assert!(matches!(jacobi_split(&z), Err(zfpiter::Error::SingularSplit(_))));
}

#[test]
fn gauss_seidel_split_reassembles() {
    let a = poisson1d(8);
    let s = gauss_seidel_split(&a).unwrap();
    assert_eq!(&s.m - &s.n, a);
    assert!(s.stats.sigma < 1.0);
    // G = M^-1 N reproduces one step.
    let y = DVector::from_fn(8, |i, _| i as f64);
    let b = DVector::from_element(8, 1.0);
    let step = s.step(&y, &b);
    let direct = &s.g * &y + s.solve_m(&b);
    assert!((step - direct).amax() < 1e-12);
}

#[test]
fn hager_matches_exact_on_small_matrices() {
    let mut r = common::rng(4);
    for _ in 0..20 {
        let a = DMatrix::from_fn(12, 12, |i, j| if i == j { 5.0 } else { r.gen_range(-0.5..0.5) });
        let exact = a.column_iter().map(|c| c.iter().map(|v: &f64| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let est = hager_one_norm(12, |x| &a * x, |x| a.transpose() * x);
        assert!(est <= exact * (1.0 + 1e-12) && est >= 0.5 * exact);
    }
}

#[test]
fn dominance_verdicts() {
    let bd = DMatrix::from_fn(8, 8, |i, j| if i / 4 == j / 4 { if i == j { 0.5 } else { 0.01 } } else { 0.0 });
    let p = dominance_profile(&bd, 4).unwrap();
    assert!(p.is_dominant());
    assert_eq!(p.nu, 0.0);
    // Block column 2 receives too much from block row 0.
    let mut bad = DMatrix::from_fn(12, 12, |i, j| if i == j { 0.5 } else { 0.0 });
    bad[(0, 9)] = 0.9;
    assert_eq!(dominance_profile(&bad, 4).unwrap().violation, Some(2));
    // Padding: a 6x6 operator becomes two blocks with identity ghosts.
    let p = dominance_profile(&DMatrix::from_fn(6, 6, |i, j| if i == j { 0.5 } else { 0.0 }), 4).unwrap();
    assert_eq!(p.alpha.len(), 2);
    assert_eq!(pad_to_blocks(&DMatrix::identity(6, 6), 4), DMatrix::identity(8, 8));
}

#[test]
fn identity_storage_matches_reference() {
    let op = ftcs2d(12, 0.2);
    let mut x0 = vec![0.0; 144];
    x0[6 * 12 + 6] = 1.0;
    let cfg = IterConfig { bound: BoundMode::Lipschitz(1.0), ..IterConfig::new(30, 64, Storage::Identity) };
    let run = iterate_simultaneous(&op, &x0, &cfg).unwrap();
    assert_eq!(run.compressed.final_state, run.reference.final_state);
    assert!(run.compressed.records.iter().all(|r| r.err_measured == 0.0 && r.bound == Some(0.0)));
}

#[test]
fn zero_state_stays_zero() {
    let op = ftcs2d(8, 0.25);
    let cfg = IterConfig::new(10, 8, Storage::Zfp { dims: vec![8, 8] });
    let run = iterate_simultaneous(&op, &[0.0; 64], &cfg).unwrap();
    assert!(run.compressed.final_state.iter().all(|&v| v == 0.0));
    assert!(run.compressed.records.iter().all(|r| r.norm == 0.0 && r.err_measured == 0.0));
}

#[test]
fn identity_operator_at_plane_cap() {
    let id = StencilOperator::new(vec![16], vec![(vec![0], 1.0)], Boundary::Periodic);
    let x0: Vec<f64> = (0..16).map(|i| (i as f64 + 0.3).ln() * 1e3).collect();
    let cap = 60;
    let cfg = IterConfig { bound: BoundMode::Lipschitz(1.0), ..IterConfig::new(3, cap, Storage::Zfp { dims: vec![16] }) };
    let run = iterate_simultaneous(&id, &x0, &cfg).unwrap();
    let k = BoundParams::new(1, FloatFormat::DOUBLE, cap).unwrap().k_beta();
    let mut sum = 0.0;
    for w in run.compressed.records.windows(2) {
        sum += k * w[0].norm;
        assert!(w[1].err_measured <= sum);
        assert!((w[1].bound.unwrap() - sum).abs() <= 1e-12 * sum);
    }
}

#[test]
fn divergence_guard_trips() {
    let grow = StencilOperator::new(vec![8], vec![(vec![0], 10.0)], Boundary::Periodic);
    let cfg = IterConfig { ceiling: 1e6, ..IterConfig::new(20, 30, Storage::Zfp { dims: vec![8] }) };
    match iterate_simultaneous(&grow, &[1.0; 8], &cfg) {
        Err(zfpiter::Error::Divergence { step, .. }) => assert_eq!(step, 7),
        other => panic!("{other:?}"),
    }
}

#[test]
fn snapshots_and_csv() {
    let op = lax_wendroff(32, 0.9);
    let x0: Vec<f64> = (0..32).map(|i| (i as f64 / 5.0).sin()).collect();
    let cfg = IterConfig {
        snapshot_stride: Some(5),
        bound: BoundMode::Kreiss(2.0),
        ..IterConfig::new(12, 20, Storage::Zfp { dims: vec![32] })
    };
    let run = iterate_simultaneous(&op, &x0, &cfg).unwrap();
    assert_eq!(run.compressed.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 5, 10]);
    for (t, s) in &run.compressed.snapshots {
        assert_eq!(run.compressed.records[*t].norm, inf(s));
    }
    let mut buf = Vec::new();
    run.compressed.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("step,norm,err_measured,bound,ratio,beta\n"));
    assert_eq!(text.lines().count(), 14);
    for r in &run.compressed.records {
        assert!(r.err_measured <= r.bound.unwrap());
    }
}

#[test]
fn both_step_orders_respect_bounds() {
    let op = ftcs2d(20, 0.2);
    let mut x0 = vec![0.0; 400];
    for (i, v) in x0.iter_mut().enumerate() {
        let (a, b) = (i / 20, i % 20);
        if a > 0 && a < 19 && b > 0 && b < 19 {
            *v = ((a * b) as f64 * 0.1).cos();
        }
    }
    for order in [StepOrder::AdvanceDecompressed, StepOrder::CompressAdvanced] {
        for beta in [6, 12, 24] {
            let cfg = IterConfig {
                order,
                bound: BoundMode::Lipschitz(1.0),
                ..IterConfig::new(40, beta, Storage::Zfp { dims: vec![20, 20] })
            };
            let run = iterate_simultaneous(&op, &x0, &cfg).unwrap();
            assert!(run.compressed.records.iter().all(|r| r.err_measured <= r.bound.unwrap()), "{order:?} {beta}");
            assert!(run.compressed.records.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
        }
    }
}

#[test]
fn successive_block_diagonal_equals_simultaneous() {
    let b = DMatrix::from_fn(16, 16, |i, j| if i / 4 == j / 4 { 0.2 / (1.0 + (i + j) as f64) } else { 0.0 });
    let x0: Vec<f64> = (0..16).map(|i| 1.0 + i as f64 * 0.25).collect();
    let cfg = IterConfig::new(15, 14, Storage::Zfp { dims: vec![16] });
    let s = iterate_successive(&b, None, &x0, &cfg, true).unwrap();
    let sim = iterate_simultaneous(&DenseOperator::new(b), &x0, &cfg).unwrap();
    assert_eq!(s.pair.compressed.final_state, sim.compressed.final_state);
    assert_eq!(s.profile.nu, 0.0);
}

#[test]
fn successive_one_sweep_by_hand() {
    let b = DMatrix::from_fn(8, 8, |i, j| ((i * 8 + j) % 5) as f64 * 0.05 - 0.1);
    let c = DVector::from_fn(8, |i, _| i as f64);
    let x0: Vec<f64> = (0..8).map(|i| (i as f64).sqrt()).collect();
    let run = iterate_successive(&b, Some(&c), &x0, &IterConfig::new(1, 64, Storage::Identity), false).unwrap();
    let mut want = x0.clone();
    for k in 0..4 {
        want[k] = (0..8).map(|j| b[(k, j)] * x0[j]).sum::<f64>() + c[k];
    }
    for k in 4..8 {
        want[k] = (0..8).map(|j| b[(k, j)] * if j < 4 { want[j] } else { x0[j] }).sum::<f64>() + c[k];
    }
    for k in 0..8 {
        assert!((run.pair.reference.final_state[k] - want[k]).abs() < 1e-14);
    }
    assert_eq!(run.pair.compressed.final_state, run.pair.reference.final_state);
}

#[test]
fn successive_rejects_non_dominant_with_bound() {
    let b = DMatrix::from_fn(8, 8, |_, _| 0.9);
    let cfg = IterConfig::new(2, 20, Storage::Zfp { dims: vec![8] });
    assert!(matches!(iterate_successive(&b, None, &[1.0; 8], &cfg, true), Err(zfpiter::Error::DominanceViolated(_))));
    assert!(iterate_successive(&b, None, &[1.0; 8], &cfg, false).is_ok());
}

#[test]
fn successive_pads_odd_sizes() {
    let b = DMatrix::from_fn(6, 6, |i, j| if i == j { 0.4 } else { 0.01 });
    let c = DVector::from_element(6, 1.0);
    let cfg = IterConfig::new(50, 30, Storage::Zfp { dims: vec![6] });
    let run = iterate_successive(&b, Some(&c), &[0.0; 6], &cfg, false).unwrap();
    assert_eq!(run.pair.compressed.final_state.len(), 6);
    assert!(inf_diff(&run.pair.compressed.final_state, &run.pair.reference.final_state) < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn lipschitz_bound_holds_for_contractions(seed in any::<u64>(), beta in 4u32..40, scale in 0.3f64..0.95) {
        let mut r = common::rng(seed);
        let n = 12;
        let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let a = &a * (scale / matrix_inf_norm(&a));
        let op = DenseOperator::new(a);
        let x0: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let cfg = IterConfig { bound: BoundMode::Lipschitz(scale), ..IterConfig::new(25, beta, Storage::Zfp { dims: vec![n] }) };
        let run = iterate_simultaneous(&op, &x0, &cfg).unwrap();
        for rec in &run.compressed.records {
            prop_assert!(rec.err_measured <= rec.bound.unwrap());
        }
    }
}
