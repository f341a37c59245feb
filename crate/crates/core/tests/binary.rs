use proptest::prelude::*;
use statrs::distribution::{Continuous, Normal};

use prinstrat::binary::{gibbs_binary, sign_separation_check, simulate_binary, BinaryParams, BinarySampler};
use prinstrat::gibbs::{ChainConfig, ConstraintSet, PriorSpec};
use prinstrat::probkit::RngStream;
use prinstrat::psmodel::Dataset;

prop_compose! {
    fn params()(
        b in prop::array::uniform4(-3.0..3.0f64),
        lambda in prop::array::uniform2(-2.0..2.0f64),
        sigma_y2 in 0.05..3.0f64,
        w in prop::array::uniform4(0.05..1.0f64),
    ) -> BinaryParams {
        let total: f64 = w.iter().sum();
        BinaryParams {
            beta: [[b[0], b[1]], [b[2], b[3]]],
            lambda,
            sigma_y2,
            p00: w[0] / total,
            p01: w[1] / total,
            p10: w[2] / total,
            p11: w[3] / total,
        }
    }
}

/// Simpson's rule on `[lo, hi]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|k| f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn arm_densities_integrate_to_one(p in params()) {
        for t in 0..2u8 {
            let total: f64 = (0..2u8).map(|s| simpson(|y| p.ln_pdf(y, s, t).exp(), -25.0, 25.0, 20_000)).sum();
            prop_assert!((total - 1.0).abs() < 1e-8, "arm {}: {}", t, total);
        }
    }
}

/// Imputation probabilities from the two joint densities of the missing stratum.
#[test]
fn imputation_matches_enumeration() {
    let truth = BinaryParams::sign_study_truth();
    let d = simulate_binary(&truth, 400, &mut RngStream::new(5, 0)).unwrap();
    let sampler = BinarySampler::new(&d, PriorSpec::default(), ConstraintSet::default(), ChainConfig::default()).unwrap();
    let normal = |mu: f64| Normal::new(mu, truth.sigma_y2.sqrt()).unwrap();
    for i in 0..d.n() {
        let (t, s) = (d.t[i] as usize, d.s[i] as u8);
        let joint = |m: u8| {
            let (s0, s1) = if t == 0 { (s, m) } else { (m, s) };
            truth.cell(s0, s1) * normal(truth.outcome_mean(t, s0 as f64, s1 as f64)).pdf(d.y[i])
        };
        let want = joint(1) / (joint(0) + joint(1));
        assert!((sampler.impute_prob(&truth, i) - want).abs() < 1e-12, "unit {i}");
    }
}

fn params_of_row(names: &[String], row: &[f64]) -> BinaryParams {
    let get = |n: &str| row[names.iter().position(|c| c == n).unwrap()];
    BinaryParams {
        beta: [[get("beta00"), get("beta01")], [get("beta10"), get("beta11")]],
        lambda: [get("lambda0"), get("lambda1")],
        sigma_y2: get("sigma_y2"),
        p00: get("p00"),
        p01: get("p01"),
        p10: get("p10"),
        p11: get("p11"),
    }
}

fn loglik(p: &BinaryParams, d: &Dataset) -> f64 {
    (0..d.n()).map(|i| p.ln_pdf(d.y[i], d.s[i] as u8, d.t[i])).sum()
}

fn chain(d: &Dataset, c: &ConstraintSet, seed: u64) -> prinstrat::gibbs::PosteriorDraws {
    let cfg = ChainConfig { n_iter: 4000, burn_in: 1000, thin: 5, seed, stream: 1, ..ChainConfig::default() };
    gibbs_binary(d, &PriorSpec::default(), c, &cfg).unwrap()
}

#[test]
fn margin_means_track_sample_frequencies() {
    let truth = BinaryParams::sign_study_truth();
    let d = simulate_binary(&truth, 5000, &mut RngStream::new(11, 0)).unwrap();
    let draws = chain(&d, &ConstraintSet::default(), 3);
    for t in 0..2u8 {
        let arm: Vec<usize> = d.arm_indices(t);
        let freq = arm.iter().filter(|&&i| d.s[i] == 1.0).count() as f64 / arm.len() as f64;
        let cross = if t == 0 { "p10" } else { "p01" };
        let margin = draws.mean(cross).unwrap() + draws.mean("p11").unwrap();
        assert!((margin - freq).abs() < 0.02, "arm {t}: {margin} vs {freq}");
    }
}

#[test]
fn draws_fit_the_data_about_as_well_as_the_truth() {
    let truth = BinaryParams::sign_study_truth();
    let d = simulate_binary(&truth, 5000, &mut RngStream::new(11, 0)).unwrap();
    let c = ConstraintSet { sign_positive: true, p11_fixed: Some(truth.p11), ..ConstraintSet::default() };
    let draws = chain(&d, &c, 3);
    let avg = (0..draws.n_draws())
        .map(|k| loglik(&params_of_row(&draws.columns, draws.row(k)), &d))
        .sum::<f64>()
        / draws.n_draws() as f64;
    let at_truth = loglik(&truth, &d);
    assert!(avg >= at_truth - 3.0, "average draw loglik {avg} vs {at_truth} at the truth");
}

#[test]
fn positive_sign_constraint_holds_in_every_draw() {
    let truth = BinaryParams::sign_study_truth();
    let d = simulate_binary(&truth, 1000, &mut RngStream::new(13, 0)).unwrap();
    let cfg = ChainConfig { n_iter: 2000, burn_in: 500, thin: 5, seed: 4, stream: 1, ..ChainConfig::default() };
    let c = ConstraintSet::from_tokens("sign_positive").unwrap();
    let draws = gibbs_binary(&d, &PriorSpec::default(), &c, &cfg).unwrap();
    for name in ["beta01", "beta10"] {
        assert!(draws.column(name).unwrap().iter().all(|&v| v > 0.0), "{name}");
    }
}

/// Per arm `t` with observed stratum `S_t` and missing `S_m`: re-solves the
/// observed coefficient and intercept so that `E(Y|T=t)`, `Cov(Y, S_t | T=t)`
/// and `Var(Y|T=t)` stay put after the cross coefficient is replaced.
fn rematch(p: &BinaryParams, cross: [f64; 2], sigma_y2: f64) -> BinaryParams {
    let [a, b] = p.margins();
    let means = [a, b];
    let vars = [a * (1.0 - a), b * (1.0 - b)];
    let cov = p.p11 - a * b;
    let mut q = *p;
    q.sigma_y2 = sigma_y2;
    for t in 0..2 {
        let m = 1 - t;
        let old = p.beta[t][m];
        q.beta[t][m] = cross[t];
        q.beta[t][t] = p.beta[t][t] + (old - cross[t]) * cov / vars[t];
        q.lambda[t] = p.lambda[t] + (p.beta[t][t] - q.beta[t][t]) * means[t] + (old - cross[t]) * means[m];
    }
    q
}

fn arm_moments(p: &BinaryParams, t: usize) -> [f64; 3] {
    let cells = [(0u8, 0u8), (0, 1), (1, 0), (1, 1)];
    let (mut ey, mut eys, mut ey2, mut es) = (0.0, 0.0, 0.0, 0.0);
    for (s0, s1) in cells {
        let w = p.cell(s0, s1);
        let mu = p.outcome_mean(t, s0 as f64, s1 as f64);
        let st = if t == 0 { s0 } else { s1 } as f64;
        ey += w * mu;
        eys += w * mu * st;
        ey2 += w * (mu * mu + p.sigma_y2);
        es += w * st;
    }
    [ey, eys - ey * es, ey2 - ey * ey]
}

#[test]
fn sign_flip_is_weakly_separated_and_variance_shift_is_not() {
    let truth = BinaryParams::sign_study_truth();
    let grid: Vec<f64> = (0..=2200).map(|k| -10.0 + k as f64 * 0.01).collect();
    let bulk: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();

    let flipped = rematch(&truth, [-truth.beta[0][1], -truth.beta[1][0]], truth.sigma_y2);
    for t in 0..2 {
        let (x, y) = (arm_moments(&truth, t), arm_moments(&flipped, t));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12), "arm {t}: {x:?} vs {y:?}");
    }
    // the mixtures differ only in shape, so the gap is modest where the data live
    // and grows in the tails
    let (flip_bulk, flip_gap) = (sign_separation_check(&truth, &flipped, &bulk), sign_separation_check(&truth, &flipped, &grid));
    eprintln!("sign-flip separation: {flip_bulk:.4} on [0, 5], {flip_gap:.4} on [-10, 12]");
    assert!(flip_bulk > 0.0 && flip_bulk < flip_gap && flip_gap.is_finite());

    // shrink each cross coefficient to absorb the extra outcome variance
    let s2 = 1.2 * truth.sigma_y2;
    let [a, b] = truth.margins();
    let (vars, cov) = ([a * (1.0 - a), b * (1.0 - b)], truth.p11 - a * b);
    let cross = [0, 1].map(|t| {
        let m = 1 - t;
        let resid = vars[m] - cov * cov / vars[t];
        let c2 = truth.beta[t][m].powi(2) - (s2 - truth.sigma_y2) / resid;
        assert!(c2 > 0.0);
        truth.beta[t][m].signum() * c2.sqrt()
    });
    let wider = rematch(&truth, cross, s2);
    for t in 0..2 {
        let (x, y) = (arm_moments(&truth, t), arm_moments(&wider, t));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12), "arm {t}: {x:?} vs {y:?}");
    }
    let shift_gap = sign_separation_check(&truth, &wider, &grid);
    eprintln!("variance-shift separation: {shift_gap:.4}");
    assert!(shift_gap > 1.0 && shift_gap > flip_gap);
}
