use proptest::prelude::*;

use rotlab::eigenbasis::{accumulate_statistics, init_basis, refresh_basis, EstimationConfig, Geometry, Source};
use rotlab::harness::{random_spd, rotated_hessian_norm};
use rotlab::landscape::{from_polar, SpiralSpec};
use rotlab::linalg::{jacobi_eigen, kronecker, matmul, one_one_norm, orthonormality_error, qr_decompose, Matrix};
use rotlab::optim::{AdamHyper, Optimizer, OptimizerConfig};
use rotlab::pipemodel::{required_stages, PipelineConfig};
use rotlab::rng::SeededRng;
use rotlab::staleness::{layer_to_stage, StashBuffer};
use rotlab::verify::invariants::ALL_OPTIMIZERS;

fn rng(seed: u64) -> SeededRng {
    SeededRng::new(seed, 99)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qr_reconstructs(seed in any::<u64>(), n in 1usize..10, extra in 0usize..5) {
        let a = rng(seed).normal_matrix(n + extra, n, 1.0);
        let qr = qr_decompose(&a).unwrap();
        prop_assert!(orthonormality_error(&qr.q) < 1e-10);
        prop_assert!(matmul(&qr.q, &qr.r).unwrap().sub(&a).unwrap().frobenius_norm() < 1e-10 * a.frobenius_norm());
        prop_assert!(qr.r.diagonal().iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn jacobi_reconstructs(seed in any::<u64>(), n in 1usize..33) {
        let a = rng(seed).normal_matrix(n, n, 1.0).symmetrized();
        let e = jacobi_eigen(&a).unwrap();
        prop_assert!(e.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rotating_a_diagonal_never_lowers_its_norm(seed in any::<u64>(), n in 2usize..7) {
        let mut r = rng(seed);
        let lam = jacobi_eigen(&random_spd(&mut r, n)).unwrap().values;
        let d = Matrix::from_diag(&lam).unwrap();
        let v = r.orthogonal(n);
        let rotated = matmul(&matmul(&v, &d).unwrap(), &v.transpose()).unwrap();
        prop_assert!(one_one_norm(&rotated) >= one_one_norm(&d) - 1e-12);
    }

    #[test]
    fn kronecker_identities(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, c, d) = (r.normal_matrix(2, 3, 1.0), r.normal_matrix(3, 2, 1.0), r.normal_matrix(3, 2, 1.0), r.normal_matrix(2, 2, 1.0));
        let lhs = matmul(&kronecker(&a, &b), &kronecker(&c, &d)).unwrap();
        let rhs = kronecker(&matmul(&a, &c).unwrap(), &matmul(&b, &d).unwrap());
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12 * (1.0 + rhs.max_abs()));
        let t = kronecker(&a, &b).transpose().sub(&kronecker(&a.transpose(), &b.transpose())).unwrap();
        prop_assert_eq!(t.max_abs(), 0.0);
    }

    #[test]
    fn kronecker_norm_ordering(seed in any::<u64>(), n in 2usize..7, m in 2usize..7) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, n);
        let b = random_spd(&mut r, m);
        let (ea, eb) = (jacobi_eigen(&a).unwrap(), jacobi_eigen(&b).unwrap());
        let h = kronecker(&a, &b);
        let full = rotated_hessian_norm(&h, &eb.vectors, &ea.vectors).unwrap();
        let one = rotated_hessian_norm(&h, &eb.vectors, &Matrix::identity(n)).unwrap();
        let none = one_one_norm(&h);
        prop_assert!(full <= one * (1.0 + 1e-9));
        prop_assert!(one <= none * (1.0 + 1e-9));
        let closed: f64 = ea.values.iter().flat_map(|x| eb.values.iter().map(move |y| x * y)).sum();
        prop_assert!((full - closed).abs() <= 1e-9 * closed);
    }

    #[test]
    fn bases_stay_orthonormal(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, second in any::<bool>(), bilateral in any::<bool>()) {
        let cfg = EstimationConfig {
            beta2: 0.5,
            ..EstimationConfig::new(
                if second { Source::Second } else { Source::First },
                if bilateral { Geometry::Bilateral } else { Geometry::Unilateral },
            )
        };
        let mut r = rng(seed);
        let mut state = init_basis(m, n, &cfg);
        for _ in 0..5 {
            let g = r.normal_matrix(m, n, 1.0);
            accumulate_statistics(&mut state, &g, &cfg).unwrap();
            refresh_basis(&mut state, &g, &cfg).unwrap();
            prop_assert!(orthonormality_error(state.u()) < 1e-8);
            prop_assert!(orthonormality_error(state.v()) < 1e-8);
        }
    }

    #[test]
    fn second_moments_stay_nonnegative(seed in any::<u64>(), which in 0usize..6) {
        let kind = ALL_OPTIMIZERS[which];
        let est = Some(EstimationConfig { update_frequency: 2, ..EstimationConfig::new(Source::Second, Geometry::Bilateral) });
        let mut opt = Optimizer::new(OptimizerConfig::new(kind, AdamHyper::default()), est, &[(3, 2)]).unwrap();
        let mut r = rng(seed);
        let mut w = vec![r.normal_matrix(3, 2, 1.0)];
        for _ in 0..10 {
            let g = r.normal_matrix(3, 2, 1.0);
            opt.step(&mut w, &[g], &[1]).unwrap();
            let s = opt.state();
            prop_assert!(s.vbar >= 0.0);
            prop_assert!(s.slots[0].v.as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn stash_never_exceeds_capacity(tau in 0u64..8, steps in 0usize..30) {
        let mut buf = StashBuffer::new(tau, vec![Matrix::zeros(1, 1)]);
        for k in 0..steps {
            buf.advance(vec![Matrix::identity(1).scale(k as f64)]);
            prop_assert!(buf.len() <= tau as usize + 1);
            prop_assert_eq!(buf.effective_delay(tau), (k as u64 + 1).min(tau));
        }
    }

    #[test]
    fn stash_serves_the_snapshot_from_delay_steps_ago(tau in 0u64..6, steps in 0usize..20, delay in 0u64..6) {
        let mut buf = StashBuffer::new(tau, vec![Matrix::zeros(1, 1)]);
        for k in 1..=steps {
            buf.advance(vec![Matrix::identity(1).scale(k as f64)]);
        }
        let d = delay.min(tau).min(steps as u64);
        prop_assert_eq!(buf.snapshot(delay)[0][(0, 0)], (steps as u64 - d) as f64);
    }

    #[test]
    fn layers_map_monotonically_onto_stages(layers in 1usize..40, p in 1usize..10) {
        let stages: Vec<usize> = (1..=layers).map(|i| layer_to_stage(i, layers, p)).collect();
        prop_assert!(stages.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(stages.iter().all(|&s| (1..=p).contains(&s)));
        prop_assert_eq!(*stages.last().unwrap(), p);
    }

    #[test]
    fn stage_count_laws(h in 1u64..8192, a in 1u64..64, s in 1u64..8192, w in 1u64..1_000_000_000, l in 1u64..200, m1 in 1u64..100_000_000_000, m2 in 1u64..100_000_000_000) {
        let cfg = |m| PipelineConfig { h, a, s, b: 1, w, l, m };
        let (lo, hi) = (m1.min(m2), m1.max(m2));
        let (small, big) = (required_stages(&cfg(lo)), required_stages(&cfg(hi)));
        prop_assert!(big.p <= small.p);
        for r in [small, big] {
            if r.n_max >= 1 {
                prop_assert!(r.p as u128 * r.n_max as u128 >= l as u128);
            } else {
                prop_assert_eq!(r.p, 2 * l);
                prop_assert!(r.lower_bound_only);
            }
        }
    }

    #[test]
    fn spiral_ray_is_bounded_by_amplitude(r in 0.01f64..100.0, theta in -3.0f64..3.0) {
        let spec = SpiralSpec::default();
        let excess = spec.loss_polar(r, theta) - r * r;
        prop_assert!(excess >= 0.0);
        prop_assert!(excess <= (spec.amplitude + spec.offset.abs()).powi(2));
        let (f, _) = spec.eval(from_polar(r, theta)).unwrap();
        prop_assert!((f - spec.loss_polar(r, theta)).abs() <= 1e-9 * f.max(1.0));
    }
}
