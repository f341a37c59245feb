use proptest::prelude::*;
use proptest::strategy::ValueTree;

use prinstrat::error::Error;
use prinstrat::psmodel::{marginalize, solve_joint, JointParams, MarginalParams, Sign};
use prinstrat::pir::{admissible_signs, eq4_residual, pir, sigma_y2_bounds, sweep, Assumption, ObservedMoments, PirRegion};

prop_compose! {
    fn marginal()(
        b in prop::array::uniform4(-3.0..3.0f64),
        lambda in prop::array::uniform2(-2.0..2.0f64),
        sigma_y2 in 0.05..4.0f64,
        phi in prop::array::uniform2(-2.0..2.0f64),
        sigma_s in prop::array::uniform2(0.2..3.0f64),
        rho in -0.95..0.95f64,
    ) -> MarginalParams {
        let j = JointParams {
            beta: [[b[0], b[1]], [b[2], b[3]]],
            lambda,
            gamma: vec![],
            alpha: vec![],
            sigma_y2,
            phi,
            sigma_s,
            rho,
        };
        marginalize(&j, None)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn marg_close(a: &MarginalParams, b: &MarginalParams, tol: f64) -> bool {
    let pairs = [(a.mu_y, b.mu_y), (a.phi, b.phi), (a.zeta, b.zeta), (a.psi, b.psi), (a.sigma_s, b.sigma_s)];
    pairs.iter().all(|(x, y)| (0..2).all(|t| close(x[t], y[t], tol)))
}

/// `Ok(None)` when the assumption is refuted by the moments.
fn region_pair(m: &ObservedMoments, rho: f64, a: Assumption) -> Option<(PirRegion, PirRegion)> {
    match pir(m, rho, a) {
        Ok(p) => Some((p.beta01, p.beta10)),
        Err(Error::AssumptionRefuted(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(100) })]

    #[test]
    fn sweep_points_lie_on_the_observational_manifold(marg in marginal(), rho in -0.95..0.95f64) {
        let m = ObservedMoments::from_marginal(&marg);
        for a in Assumption::ALL {
            let Ok(points) = sweep(&m, rho, a, 25) else { continue };
            for p in points {
                let signs = [Sign::of(p.beta01), Sign::of(p.beta10)];
                let j = solve_joint(&marg, rho, p.sigma_y2, signs).unwrap();
                prop_assert!(close(j.beta01(), p.beta01, 1e-9) && close(j.beta10(), p.beta10, 1e-9));
                prop_assert!(marg_close(&marginalize(&j, None), &marg, 1e-9));
                let scale = m.var_s[0].max(m.var_s[1]) * (p.beta01.powi(2) + p.beta10.powi(2)) + 1.0;
                prop_assert!(eq4_residual(p.beta01, p.beta10, &m, rho).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn regions_scale_with_rho(marg in marginal()) {
        let m = ObservedMoments::from_marginal(&marg);
        let rho = 3f64.sqrt() / 2.0;
        for a in Assumption::ALL {
            let (Some(base), Some(wide)) = (region_pair(&m, 0.0, a), region_pair(&m, rho, a)) else { continue };
            for (r0, r1) in [(&base.0, &wide.0), (&base.1, &wide.1)] {
                prop_assert!(close(2.0 * r0.outer(), r1.outer(), 1e-9));
                prop_assert!(close(2.0 * r0.inner(), r1.inner(), 1e-9));
            }
        }
    }

    #[test]
    fn assumptions_nest(marg in marginal(), rho in -0.95..0.95f64) {
        let m = ObservedMoments::from_marginal(&marg);
        let (n01, n10) = region_pair(&m, rho, Assumption::None).unwrap();
        for a in [Assumption::SameSign, Assumption::Dominant] {
            if let Some((r01, r10)) = region_pair(&m, rho, a) {
                prop_assert!(r01.is_subset_of(&n01, 1e-9), "{:?}: {:?} vs {:?}", a, r01, n01);
                prop_assert!(r10.is_subset_of(&n10, 1e-9), "{:?}: {:?} vs {:?}", a, r10, n10);
            }
        }
    }
}

/// Region endpoints against a dense brute-force scan of the outcome variance,
/// solving the joint model at every grid point.
#[test]
fn endpoints_match_brute_force_scan() {
    let mut cases = vec![(marginalize(&JointParams::table1_truth(), None), 0.75)];
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for rho in [-0.6, 0.0, 0.4, 0.9] {
        cases.push((marginal().new_tree(&mut runner).unwrap().current(), rho));
    }
    let n_grid = 1_000_000;
    for (marg, rho) in cases {
        let m = ObservedMoments::from_marginal(&marg);
        for a in Assumption::ALL {
            let Some((r01, r10)) = region_pair(&m, rho, a) else { continue };
            let b = sigma_y2_bounds(&m, a).unwrap();
            for (t, region) in [(0usize, &r01), (1usize, &r10)] {
                let (mut lo, mut hi, mut inner) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
                for signs in admissible_signs(&m, a) {
                    for k in 0..n_grid {
                        let s2 = b.lo + (b.hi - b.lo) * k as f64 / (n_grid - 1) as f64;
                        let j = solve_joint(&marg, rho, s2, signs).unwrap();
                        let v = if t == 0 { j.beta01() } else { j.beta10() };
                        lo = lo.min(v);
                        hi = hi.max(v);
                        inner = inner.min(v.abs());
                    }
                }
                let h = region.hull();
                assert!(close(h.lo, lo, 1e-6) && close(h.hi, hi, 1e-6), "{a:?} arm {t}: {h:?} vs [{lo}, {hi}]");
                assert!(close(region.inner(), inner, 1e-6), "{a:?} arm {t}: inner {} vs {inner}", region.inner());
            }
        }
    }
}
