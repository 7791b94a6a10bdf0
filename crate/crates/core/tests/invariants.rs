use aci_cir::cir::{
    backward_length_approx, backward_length_exact, forward_length_approx, forward_length_exact, EpsGridPolicy,
};
use aci_cir::filter::default_initial_state;
use aci_cir::info::{gauss_relative_entropy, marginal};
use aci_cir::models::{equilibrium_stats, reduced_linear_model, ReducedLinearParams};
use aci_cir::sim::simulate;
use aci_cir::{run_filter, GaussianState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spd(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim * dim).prop_map(move |v| {
        let a = DMatrix::from_row_slice(dim, dim, &v);
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.3
    })
}

fn gaussian(dim: usize) -> impl Strategy<Value = GaussianState> {
    (prop::collection::vec(-2.0..2.0f64, dim), spd(dim)).prop_map(|(m, cov)| GaussianState {
        mean: DVector::from_vec(m),
        cov,
    })
}

fn pair() -> impl Strategy<Value = (GaussianState, GaussianState)> {
    (1usize..4).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

fn profile() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..2.0f64], 1..40)
}

proptest! {
    #[test]
    fn relative_entropy_nonnegative_and_additive((p, q) in pair()) {
        let kl = gauss_relative_entropy(&p, &q).unwrap();
        prop_assert!(kl.signal >= 0.0);
        prop_assert!(kl.dispersion >= -1e-12);
        prop_assert!((kl.total - kl.signal - kl.dispersion).abs() <= 1e-12 * kl.total.abs().max(1.0));
        let zero = gauss_relative_entropy(&p, &p).unwrap();
        prop_assert!(zero.total.abs() <= 1e-10);
    }

    #[test]
    fn relative_entropy_invariant_under_linear_maps(
        (p, q) in (2usize..4).prop_flat_map(|d| (gaussian(d), gaussian(d), spd(d))).prop_map(|(p, q, a)| ((p, q), a))
    ) {
        let ((p, q), a) = (p, q);
        let map = |s: &GaussianState| GaussianState {
            mean: &a * &s.mean,
            cov: &a * &s.cov * a.transpose(),
        };
        let before = gauss_relative_entropy(&p, &q).unwrap().total;
        let after = gauss_relative_entropy(&map(&p), &map(&q)).unwrap().total;
        prop_assert!((before - after).abs() <= 1e-8 * before.max(1.0));
    }

    #[test]
    fn relative_entropy_adds_over_independent_blocks(a in pair(), b in pair()) {
        let join = |x: &GaussianState, y: &GaussianState| {
            let (m, n) = (x.dim(), y.dim());
            let mut cov = DMatrix::zeros(m + n, m + n);
            cov.view_mut((0, 0), (m, m)).copy_from(&x.cov);
            cov.view_mut((m, m), (n, n)).copy_from(&y.cov);
            GaussianState {
                mean: DVector::from_iterator(m + n, x.mean.iter().chain(y.mean.iter()).copied()),
                cov,
            }
        };
        let (pa, qa) = a;
        let (pb, qb) = b;
        let joint = gauss_relative_entropy(&join(&pa, &pb), &join(&qa, &qb)).unwrap().total;
        let sum = gauss_relative_entropy(&pa, &qa).unwrap().total + gauss_relative_entropy(&pb, &qb).unwrap().total;
        prop_assert!((joint - sum).abs() <= 1e-8 * sum.max(1.0));
        let idx: Vec<usize> = (0..pa.dim()).collect();
        let back = marginal(&join(&pa, &pb), &idx).unwrap();
        prop_assert_eq!(back, pa);
    }

    #[test]
    fn forward_lengths_bounded(p in profile(), dt in 1e-3..0.5f64) {
        let a = forward_length_approx(&p, dt);
        let e = forward_length_exact(&p, dt, EpsGridPolicy::Staircase);
        let horizon = dt * p.len() as f64;
        prop_assert!(a.length >= 0.0 && a.length <= horizon + 1e-12);
        prop_assert!(e.length >= 0.0 && e.length <= horizon + 1e-12);
        prop_assert!(a.length <= e.length + 1e-9);
    }

    #[test]
    fn backward_lengths_bounded(mut g in profile(), dt in 1e-3..0.5f64) {
        g[0] = 0.0;
        let a = backward_length_approx(&g, dt);
        let e = backward_length_exact(&g, dt, EpsGridPolicy::Staircase);
        let horizon = dt * g.len() as f64;
        prop_assert!(a.length >= 0.0 && a.length <= horizon + 1e-12);
        prop_assert!(e.length >= 0.0 && e.length <= horizon + 1e-12);
        prop_assert!(a.length >= e.length - 1e-9);
    }

    #[test]
    fn monotone_profiles_close_the_gap(mut p in profile(), dt in 1e-3..0.5f64) {
        p.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let gap = forward_length_approx(&p, dt).length - forward_length_exact(&p, dt, EpsGridPolicy::Staircase).length;
        prop_assert!(gap.abs() < 1e-6);
        p.reverse();
        p[0] = 0.0;
        let gap = backward_length_approx(&p, dt).length - backward_length_exact(&p, dt, EpsGridPolicy::Staircase).length;
        prop_assert!(gap.abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn smoother_variance_below_filter_variance(
        lx in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64],
        ly in -3.0..-0.1f64,
        sx in 0.1..3.0f64,
        sy in 0.1..3.0f64,
    ) {
        let s = equilibrium_stats(&ReducedLinearParams::unforced(lx, ly, sx, sy)).unwrap();
        prop_assert!(s.rs > 0.0);
        prop_assert!(s.rs <= s.rf);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn filter_covariance_stays_symmetric_psd(
        lx in 0.2..2.0f64,
        ly in -2.0..-0.2f64,
        sx in 0.3..2.0f64,
        sy in 0.1..2.0f64,
        seed in 0u64..1000,
    ) {
        let model = reduced_linear_model(&ReducedLinearParams::unforced(lx, ly, sx, sy)).unwrap();
        let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), 1e-3, 2_000, seed).unwrap();
        let init = default_initial_state(&model, 0.0, &traj.x_path[0], traj.dt);
        let f = run_filter(&model, &traj, init).unwrap();
        for s in &f.states {
            prop_assert!(s.cov[(0, 0)] >= 0.0 && s.cov[(0, 0)].is_finite());
        }
    }
}
