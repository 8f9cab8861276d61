//! Three-level check-population model, δ fit, per-cycle logical error and
//! readout-threshold optimization.

use std::cmp::Ordering;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid three-level parameters: {0}")]
    InvalidParams(String),
    #[error("steady state is not unique (no leakage and no seepage)")]
    NonUnique,
    #[error("seepage probability must be positive")]
    ZeroSeepage,
    #[error("need at least 3 post-burn-in cycles, got {0}")]
    TooFewCycles(usize),
    #[error("invalid discriminator: {0}")]
    InvalidDiscriminator(String),
}

/// Leakage `p_l`, seepage `p_s` and ground-state bias `delta` per cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeLevelParams {
    pub p_l: f64,
    pub p_s: f64,
    pub delta: f64,
}

impl ThreeLevelParams {
    pub fn new(p_l: f64, p_s: f64, delta: f64) -> Result<Self, AnalyticsError> {
        let p = Self { p_l, p_s, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.p_l) || !unit(self.p_s) {
            return Err(AnalyticsError::InvalidParams(format!("p_l = {}, p_s = {}", self.p_l, self.p_s)));
        }
        if !(self.delta >= 0.0 && self.delta < 0.5 && self.delta <= (1.0 - self.p_l) / 2.0) {
            return Err(AnalyticsError::InvalidParams(format!("delta = {} with p_l = {}", self.delta, self.p_l)));
        }
        Ok(())
    }
}

/// `m[row][col]`, acting on column vectors `(ground, excited, leaked)`.
pub type Matrix3 = [[f64; 3]; 3];

/// Column-stochastic cycle-to-cycle transition matrix.
pub fn transition_matrix(p: &ThreeLevelParams) -> Result<Matrix3, AnalyticsError> {
    p.validate()?;
    let ThreeLevelParams { p_l, p_s, delta } = *p;
    let g0 = 0.5 + delta;
    let e0 = 1.0 - g0;
    let g1 = (1.0 - p_l) / 2.0 + delta;
    let e1 = (1.0 - p_l) - g1;
    Ok([[g0, g1, 0.0], [e0, e1, p_s], [0.0, p_l, 1.0 - p_s]])
}

pub fn mat_vec(m: &Matrix3, v: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| (0..3).map(|j| m[i][j] * v[j]).sum())
}

/// Normalized fixed point of `P`, from the linear system `(P - I) v = 0`
/// with one equation replaced by `sum(v) = 1`.
pub fn steady_state(p: &Matrix3) -> Result<[f64; 3], AnalyticsError> {
    let mut a = [[0.0; 4]; 3];
    for i in 0..2 {
        for j in 0..3 {
            a[i][j] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[2] = [1.0, 1.0, 1.0, 1.0];
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() < 1e-14 {
            return Err(AnalyticsError::NonUnique);
        }
        a.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot = a[col];
                for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut v: [f64; 3] = std::array::from_fn(|i| (a[i][3] / a[i][i]).max(0.0));
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    Ok(v)
}

/// `½(1 + 2δ, 1 − 2δ, (1 − 2δ) p_l / p_s)`, valid for `p_l ≪ p_s`.
pub fn approx_steady_state_unnormalized(p: &ThreeLevelParams) -> Result<[f64; 3], AnalyticsError> {
    // the closed form only needs δ < ½, not the matrix bound
    if !(0.0..=1.0).contains(&p.p_l) || !(0.0..=1.0).contains(&p.p_s) || !(0.0..0.5).contains(&p.delta) {
        return Err(AnalyticsError::InvalidParams(format!("{p:?}")));
    }
    if p.p_s == 0.0 {
        return Err(AnalyticsError::ZeroSeepage);
    }
    if p.p_l > p.p_s / 10.0 {
        log::warn!("p_l = {} is not small against p_s = {}; approximation is loose", p.p_l, p.p_s);
    }
    let d = p.delta;
    Ok([0.5 * (1.0 + 2.0 * d), 0.5 * (1.0 - 2.0 * d), 0.5 * (1.0 - 2.0 * d) * p.p_l / p.p_s])
}

pub fn approx_steady_state(p: &ThreeLevelParams) -> Result<[f64; 3], AnalyticsError> {
    let mut v = approx_steady_state_unnormalized(p)?;
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    Ok(v)
}

/// δ from post-burn-in ground fractions: the least-squares constant (their
/// mean) matched to the normalized approximate ground component
/// `(1 + 2δ) / (2 + (1 − 2δ) r)` with `r = p_l / p_s`. Clipped to `[0, ½)`.
pub fn fit_delta(ground_fractions: &[f64], leak_ratio: f64) -> Result<f64, AnalyticsError> {
    if ground_fractions.len() < 3 {
        return Err(AnalyticsError::TooFewCycles(ground_fractions.len()));
    }
    let g = ground_fractions.iter().sum::<f64>() / ground_fractions.len() as f64;
    let r = leak_ratio;
    let delta = (2.0 * g + g * r - 1.0) / (2.0 * (1.0 + g * r));
    Ok(delta.clamp(0.0, 0.5 - f64::EPSILON))
}

/// `1 − (1 − p_N)^(1/N)`.
pub fn logical_error_per_cycle(p_n: f64, n: usize) -> f64 {
    assert!((0.0..=1.0).contains(&p_n) && n >= 1, "need 0 <= p_N <= 1 and N >= 1");
    if p_n == 1.0 {
        return 1.0;
    }
    -((-p_n).ln_1p() / n as f64).exp_m1()
}

/// `p0 · p(1|0) + (1 − p0) · p(0|1)`.
pub fn readout_objective(p0: f64, p10: f64, p01: f64) -> f64 {
    p0 * p10 + (1.0 - p0) * p01
}

/// Two Gaussian readout signal clusters with a shared width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianDiscriminator {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
}

impl GaussianDiscriminator {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.mu0.partial_cmp(&self.mu1) != Some(Ordering::Less) || self.sigma.partial_cmp(&0.0) != Some(Ordering::Greater) {
            return Err(AnalyticsError::InvalidDiscriminator(format!("{self:?}")));
        }
        Ok(())
    }

    /// `(p(1|0), p(0|1))` for threshold `t`.
    pub fn confusion(&self, t: f64) -> (f64, f64) {
        let n = Normal::new(0.0, 1.0).expect("standard normal");
        (n.sf((t - self.mu0) / self.sigma), n.sf((self.mu1 - t) / self.sigma))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub p10: f64,
    pub p01: f64,
    pub objective: f64,
}

/// Minimizes the readout objective over the threshold by golden-section
/// search to a tolerance of `1e-6 (μ1 − μ0)`.
pub fn optimize_threshold(p0: f64, disc: &GaussianDiscriminator) -> Result<ThresholdChoice, AnalyticsError> {
    disc.validate()?;
    if !(0.0..=1.0).contains(&p0) {
        return Err(AnalyticsError::InvalidDiscriminator(format!("p0 = {p0}")));
    }
    let gap = disc.mu1 - disc.mu0;
    let f = |t: f64| {
        let (p10, p01) = disc.confusion(t);
        readout_objective(p0, p10, p01)
    };
    let (mut lo, mut hi) = (disc.mu0 - 12.0 * disc.sigma, disc.mu1 + 12.0 * disc.sigma);
    let tol = 1e-6 * gap;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let threshold = 0.5 * (lo + hi);
    let (p10, p01) = disc.confusion(threshold);
    Ok(ThresholdChoice {
        threshold,
        p10,
        p01,
        objective: readout_objective(p0, p10, p01),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(p_l: f64, p_s: f64, d: f64) -> ThreeLevelParams {
        ThreeLevelParams::new(p_l, p_s, d).unwrap()
    }

    #[test]
    fn matrix_entries() {
        let m = transition_matrix(&params(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(m, [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]);
        let m = transition_matrix(&params(0.002, 0.2, 0.0)).unwrap();
        assert_eq!(m[2][1], 0.002);
        assert_eq!(m[1][2], 0.2);
        assert!(ThreeLevelParams::new(0.1, 0.2, 0.46).is_err());
    }

    #[test]
    fn steady_state_reference_point() {
        let m = transition_matrix(&params(0.002, 0.2, 0.0)).unwrap();
        let v = steady_state(&m).unwrap();
        // independent closed form: leaked = p_l e / p_s, ground = e + p_l e / 2 ... from the balance equations
        let e = 1.0 / (2.0 - 0.002 + 0.002 / 0.2);
        let expect = [e * (1.0 - 0.002), e, 0.002 * e / 0.2];
        let expect_sum: f64 = expect.iter().sum();
        for i in 0..3 {
            assert!((v[i] - expect[i] / expect_sum).abs() < 1e-12, "{v:?}");
        }
        assert!((v[0] - 0.49701).abs() < 1e-5 && (v[1] - 0.49801).abs() < 1e-5 && (v[2] - 0.00498).abs() < 1e-5);
        let pv = mat_vec(&m, &v);
        assert!((0..3).all(|i| (pv[i] - v[i]).abs() < 1e-12));
    }

    #[test]
    fn steady_state_cases() {
        let v = steady_state(&transition_matrix(&params(0.0, 0.3, 0.0)).unwrap()).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15 && v[2] == 0.0);
        assert_eq!(steady_state(&transition_matrix(&params(0.0, 0.0, 0.1)).unwrap()), Err(AnalyticsError::NonUnique));
        let v = steady_state(&transition_matrix(&params(0.002, 0.2, 0.43)).unwrap()).unwrap();
        assert!((v[0] - 0.93).abs() < 0.002, "{v:?}");
    }

    #[test]
    fn approximation() {
        let raw = approx_steady_state_unnormalized(&params(0.002, 0.2, 0.0)).unwrap();
        assert!((raw[2] - 0.005).abs() < 1e-15);
        let a = approx_steady_state(&params(0.002, 0.2, 0.0)).unwrap();
        let e = steady_state(&transition_matrix(&params(0.002, 0.2, 0.0)).unwrap()).unwrap();
        assert!((a[2] - e[2]).abs() / e[2] < 0.02);
        let lim = approx_steady_state(&ThreeLevelParams { p_l: 0.002, p_s: 0.2, delta: 0.5 - 1e-12 }).unwrap();
        assert!(lim[1] < 1e-11 && lim[2] < 1e-11);
        assert_eq!(approx_steady_state(&params(0.0, 0.0, 0.0)), Err(AnalyticsError::ZeroSeepage));
    }

    #[test]
    fn delta_fit() {
        assert!((fit_delta(&[0.93; 5], 0.0).unwrap() - 0.43).abs() < 1e-12);
        assert_eq!(fit_delta(&[0.5, 0.5, 0.5], 0.0).unwrap(), 0.0);
        assert_eq!(fit_delta(&[0.9, 0.9], 0.0), Err(AnalyticsError::TooFewCycles(2)));
    }

    #[test]
    fn per_cycle_formula() {
        assert_eq!(logical_error_per_cycle(0.0, 7), 0.0);
        assert!((logical_error_per_cycle(0.3, 1) - 0.3).abs() < 1e-15);
        assert!((logical_error_per_cycle(0.12, 12) - 0.010597).abs() < 1e-6);
        assert_eq!(logical_error_per_cycle(1.0, 3), 1.0);
    }

    #[test]
    fn objective_examples() {
        assert!((readout_objective(0.5, 0.02, 0.02) - 0.02).abs() < 1e-15);
        assert_eq!(readout_objective(1.0, 0.01, 0.3), 0.01);
        assert!((readout_objective(0.93, 0.015, 0.025) - 0.0157).abs() < 1e-12);
    }

    #[test]
    fn threshold_symmetric_and_shifted() {
        let d = GaussianDiscriminator { mu0: 0.0, mu1: 1.0, sigma: 0.25 };
        let sym = optimize_threshold(0.5, &d).unwrap();
        assert!((sym.threshold - 0.5).abs() < 1e-5);
        let biased = optimize_threshold(0.93, &d).unwrap();
        assert!(biased.threshold > 0.5);
        let (p10, p01) = d.confusion(0.5);
        assert!(biased.objective <= readout_objective(0.93, p10, p01));
        // stationary point of the Gaussian model
        let exact = 0.5 + 0.25f64.powi(2) * (0.93f64 / 0.07).ln();
        assert!((biased.threshold - exact).abs() < 1e-5);
        let nearly_one = optimize_threshold(1.0 - 1e-9, &d).unwrap();
        assert!(nearly_one.threshold > 1.5 && nearly_one.objective < 1e-8);
        assert!(optimize_threshold(0.5, &GaussianDiscriminator { mu0: 1.0, mu1: 0.0, sigma: 1.0 }).is_err());
    }

    proptest! {
        #[test]
        fn columns_sum_to_one(p_l in 0.0..0.2f64, p_s in 0.0..1.0f64, frac in 0.0..0.999f64) {
            let delta = frac * (1.0 - p_l) / 2.0;
            let m = transition_matrix(&params(p_l, p_s, delta)).unwrap();
            for c in 0..3 {
                let col = m.map(|row| row[c]);
                prop_assert_eq!(col[0] + col[1] + col[2], 1.0);
                prop_assert!(col.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn steady_state_is_fixed_point(p_l in 1e-4..0.2f64, p_s in 1e-3..1.0f64, frac in 0.0..0.99f64) {
            let delta = frac * (1.0 - p_l) / 2.0;
            let m = transition_matrix(&params(p_l, p_s, delta)).unwrap();
            let v = steady_state(&m).unwrap();
            let pv = mat_vec(&m, &v);
            prop_assert!((0..3).all(|i| (pv[i] - v[i]).abs() < 1e-12));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn approximation_tracks_exact(p_s in 0.05..1.0f64, ratio in 0.001..0.1f64, delta in 0.0..0.45f64) {
            let p = params(p_s * ratio, p_s, delta);
            let a = approx_steady_state(&p).unwrap();
            let e = steady_state(&transition_matrix(&p).unwrap()).unwrap();
            prop_assert!((a[2] - e[2]).abs() / e[2] <= 0.05, "approx {:?} exact {:?}", a, e);
        }

        #[test]
        fn delta_round_trip(delta in 0.0..0.45f64) {
            let p = params(0.002, 0.2, delta);
            let v = steady_state(&transition_matrix(&p).unwrap()).unwrap();
            let d = fit_delta(&[v[0]; 10], 0.002 / 0.2).unwrap();
            prop_assert!((d - delta).abs() < 0.01, "{} vs {}", d, delta);
        }

        #[test]
        fn threshold_beats_grid(p0 in 0.05..0.995f64, sigma in 0.1..0.6f64) {
            let d = GaussianDiscriminator { mu0: 0.0, mu1: 1.0, sigma };
            let best = optimize_threshold(p0, &d).unwrap();
            for i in 0..=2000 {
                let t = -2.0 + 5.0 * i as f64 / 2000.0;
                let (p10, p01) = d.confusion(t);
                prop_assert!(best.objective <= readout_objective(p0, p10, p01) + 1e-12);
            }
        }
    }
}
