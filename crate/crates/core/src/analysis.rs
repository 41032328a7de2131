//! Scalar estimators with counting-statistics error bars: normalized
//! correlations, the Cauchy–Schwarz ratio, heralded HBT autocorrelation,
//! fringe visibility, which-path concurrence and the CHSH S value.
//!
//! Error bars are first-order Poisson propagation unless stated otherwise.
//! Estimators never invent a value for a zero denominator; they return
//! [`Error::UndefinedEstimate`].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::qcore::ComplexMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl CorrelationEstimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

pub fn poisson_stderr(count: u64) -> f64 {
    (count as f64).sqrt()
}

fn undefined(msg: &str) -> Error {
    Error::UndefinedEstimate(msg.to_string())
}

/// Normalized cross-correlation `g = N·C / (S1·S2)` over `trials` gates.
pub fn cross_correlation(trials: u64, singles_1: u64, singles_2: u64, coincidences: u64) -> Result<CorrelationEstimate> {
    if singles_1 == 0 || singles_2 == 0 || trials == 0 {
        return Err(undefined("cross-correlation needs nonzero singles"));
    }
    let (n, s1, s2, c) = (trials as f64, singles_1 as f64, singles_2 as f64, coincidences as f64);
    let g = n * c / (s1 * s2);
    let var = (n / (s1 * s2)).powi(2) * c + (g / s1).powi(2) * s1 + (g / s2).powi(2) * s2;
    Ok(CorrelationEstimate::new(g, var.sqrt()))
}

/// `R = g12² / (g11·g22)`; `R > 1` rules out classical fields.
pub fn cauchy_schwarz_r(
    g12: CorrelationEstimate,
    g11: CorrelationEstimate,
    g22: CorrelationEstimate,
) -> Result<CorrelationEstimate> {
    if !(g11.value > 0.0) || !(g22.value > 0.0) {
        return Err(invalid("auto-correlations must be positive"));
    }
    let r = g12.value.powi(2) / (g11.value * g22.value);
    let var = (2.0 * g12.value / (g11.value * g22.value) * g12.stderr).powi(2)
        + (r / g11.value * g11.stderr).powi(2)
        + (r / g22.value * g22.stderr).powi(2);
    Ok(CorrelationEstimate::new(r, var.sqrt()))
}

/// Heralded autocorrelation `P2·P213 / (P21·P23)`.
///
/// Counts are taken as real numbers so expected (non-integer) tallies can be
/// fed in directly.
pub fn heralded_autocorrelation(p2: f64, p21: f64, p23: f64, p213: f64) -> Result<CorrelationEstimate> {
    if [p2, p21, p23, p213].iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(invalid("counts must be finite and non-negative"));
    }
    if p21 == 0.0 || p23 == 0.0 {
        return Err(undefined("heralded autocorrelation needs nonzero two-fold coincidences"));
    }
    let g = p2 * p213 / (p21 * p23);
    // absolute derivatives so that a zero three-fold count still propagates
    let var = (p213 / (p21 * p23)).powi(2) * p2
        + (p2 / (p21 * p23)).powi(2) * p213
        + (g / p21).powi(2) * p21
        + (g / p23).powi(2) * p23;
    Ok(CorrelationEstimate::new(g, var.sqrt()))
}

/// Least-squares fit of `a + b·cos(x - c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// `b / a`, i.e. `(max - min)/(max + min)` of the fitted curve.
    pub visibility: f64,
    pub visibility_stderr: f64,
    pub phase: f64,
    pub mean_level: f64,
    pub amplitude: f64,
    /// `sqrt(Σ (y - fit)²)`
    pub residual_norm: f64,
}

impl FringeFit {
    pub fn model(&self, x: f64) -> f64 {
        self.mean_level + self.amplitude * (x - self.phase).cos()
    }
}

/// Fits `a + b·cos(x - c)` with `a >= |b| >= 0` to `(phase, counts)` points.
///
/// Needs at least five points whose phases cover a full period (span plus
/// one mean sample spacing reaches 2π). The visibility error comes from the
/// least-squares sandwich covariance with Poisson variances `max(y, 1)`.
pub fn fit_fringe_visibility(points: &[(f64, f64)]) -> Result<FringeFit> {
    let n = points.len();
    if n < 5 {
        return Err(Error::FitFailure(format!("need at least 5 points, got {n}")));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::FitFailure("non-finite point".into()));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
    let span = hi - lo;
    if span + span / ((n - 1) as f64) < TAU * (1.0 - 1e-9) {
        return Err(Error::FitFailure(format!("points span {span:.4} rad, less than one period")));
    }

    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for &(x, y) in points {
        let row = Vector3::new(1.0, x.cos(), x.sin());
        xtx += row * row.transpose();
        xty += row * y;
    }
    let inv = xtx
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::FitFailure("degenerate design matrix".into()))?;
    let beta = inv * xty;
    let (a, bc, bs) = (beta[0], beta[1], beta[2]);
    if !(a > 0.0) {
        return Err(Error::FitFailure(format!("non-positive mean level {a}")));
    }
    let mut b = bc.hypot(bs);
    let phase = bs.atan2(bc);
    if b > a {
        b = a;
    }

    let mut meat = Matrix3::<f64>::zeros();
    let mut rss = 0.0;
    for &(x, y) in points {
        let row = Vector3::new(1.0, x.cos(), x.sin());
        meat += row * row.transpose() * y.max(1.0);
        let fit = a + b * (x - phase).cos();
        rss += (y - fit).powi(2);
    }
    let cov = inv * meat * inv;
    let visibility = b / a;
    let var = if b > 0.0 {
        let grad = Vector3::new(-b / (a * a), bc / (a * b), bs / (a * b));
        (grad.transpose() * cov * grad)[0]
    } else {
        (cov[(1, 1)] + cov[(2, 2)]) / (a * a)
    };
    Ok(FringeFit {
        visibility,
        visibility_stderr: var.max(0.0).sqrt(),
        phase,
        mean_level: a,
        amplitude: b,
        residual_norm: rss.sqrt(),
    })
}

/// Largest excess of a rounded table's sum over one that estimators accept.
pub const ROUNDING_SLACK: f64 = 1e-3;

/// Occupation probabilities `p_ij` of i excitations in L and j in R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbTable {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl ProbTable {
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let t = Self { p00, p01, p10, p11 };
        t.validate()?;
        Ok(t)
    }

    /// Frequencies from heralded trial counts.
    pub fn from_counts(n00: u64, n01: u64, n10: u64, n11: u64) -> Result<Self> {
        let total = (n00 + n01 + n10 + n11) as f64;
        if total == 0.0 {
            return Err(undefined("no heralded trials"));
        }
        Self::new(n00 as f64 / total, n01 as f64 / total, n10 as f64 / total, n11 as f64 / total)
    }

    /// Accepts tables whose entries were rounded for publication, so the sum
    /// may exceed one by up to [`ROUNDING_SLACK`]. Estimators renormalize by `P`.
    pub fn from_reported(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let t = Self { p00, p01, p10, p11 };
        t.validate_with(ROUNDING_SLACK)?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(1e-9)
    }

    fn validate_with(&self, slack: f64) -> Result<()> {
        let all = [self.p00, self.p01, self.p10, self.p11];
        if all.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(invalid("probabilities must be finite and non-negative"));
        }
        let sum = self.total();
        if sum > 1.0 + slack {
            return Err(invalid(format!("probabilities sum to {sum} > 1")));
        }
        if sum <= 0.0 {
            return Err(invalid("total probability P must be positive"));
        }
        Ok(())
    }

    /// `P = p00 + p01 + p10 + p11`
    pub fn total(&self) -> f64 {
        self.p00 + self.p01 + self.p10 + self.p11
    }
}

fn check_visibility(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("visibility {v} outside [0, 1]")))
    }
}

/// Coherence `d = V(p01 + p10)/2`, taken real and non-negative.
pub fn whichpath_coherence(p: &ProbTable, visibility: f64) -> f64 {
    visibility * (p.p01 + p.p10) / 2.0
}

/// `(1/P)·[[p00,0,0,0],[0,p10,d,0],[0,d*,p01,0],[0,0,0,p11]]`
pub fn build_whichpath_rho(p: &ProbTable, visibility: f64) -> Result<ComplexMatrix> {
    p.validate_with(ROUNDING_SLACK)?;
    check_visibility(visibility)?;
    let norm = p.total();
    let d = whichpath_coherence(p, visibility) / norm;
    let z = 0.0;
    ComplexMatrix::from_real_rows(&[
        &[p.p00 / norm, z, z, z],
        &[z, p.p10 / norm, d, z],
        &[z, d, p.p01 / norm, z],
        &[z, z, z, p.p11 / norm],
    ])
}

/// `Con = (1/P)·max(0, 2|d| - 2·sqrt(p00·p11))`
pub fn concurrence_whichpath(p: &ProbTable, visibility: f64) -> Result<f64> {
    p.validate_with(ROUNDING_SLACK)?;
    check_visibility(visibility)?;
    let d = whichpath_coherence(p, visibility);
    Ok((2.0 * d - 2.0 * (p.p00 * p.p11).sqrt()).max(0.0) / p.total())
}

/// Coincidence counts entering one correlation coefficient:
/// `C(θ1,θ2)`, `C(θ1+π/2,θ2+π/2)`, `C(θ1+π/2,θ2)`, `C(θ1,θ2+π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChshQuad {
    pub c_pp: u64,
    pub c_mm: u64,
    pub c_mp: u64,
    pub c_pm: u64,
}

/// The four analyzer-angle pairs whose counts form [`ChshQuad`], in field order.
pub fn quad_angles(theta1: f64, theta2: f64) -> [(f64, f64); 4] {
    [
        (theta1, theta2),
        (theta1 + FRAC_PI_2, theta2 + FRAC_PI_2),
        (theta1 + FRAC_PI_2, theta2),
        (theta1, theta2 + FRAC_PI_2),
    ]
}

/// Analyzer angles (θ1, θ2, θ1', θ2') = (0, π/8, π/4, 3π/8).
pub const CHSH_ANGLES: [f64; 4] = [0.0, FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8];

/// The four (θ1, θ2) pairs of the S combination, in the order
/// `E(θ1,θ2), E(θ1,θ2'), E(θ1',θ2), E(θ1',θ2')`.
pub fn chsh_pairs() -> [(f64, f64); 4] {
    let [a, b, a2, b2] = CHSH_ANGLES;
    [(a, b), (a, b2), (a2, b), (a2, b2)]
}

pub fn chsh_e(q: &ChshQuad) -> Result<CorrelationEstimate> {
    let plus = (q.c_pp + q.c_mm) as f64;
    let minus = (q.c_mp + q.c_pm) as f64;
    let total = plus + minus;
    if total == 0.0 {
        return Err(undefined("no coincidences for correlation coefficient"));
    }
    let e = (plus - minus) / total;
    let var = ((1.0 - e).powi(2) * plus + (1.0 + e).powi(2) * minus) / (total * total);
    Ok(CorrelationEstimate::new(e, var.sqrt()))
}

/// `S = |E(θ1,θ2) - E(θ1,θ2') + E(θ1',θ2) + E(θ1',θ2')|`, errors in quadrature.
pub fn chsh_s(e: [CorrelationEstimate; 4]) -> CorrelationEstimate {
    let s = (e[0].value - e[1].value + e[2].value + e[3].value).abs();
    let var: f64 = e.iter().map(|x| x.stderr * x.stderr).sum();
    CorrelationEstimate::new(s, var.sqrt())
}

/// Standard deviation of `estimator` over Poisson resamples of `counts`.
/// Replicas on which the estimator is undefined are skipped; fewer than two
/// usable replicas is an error.
pub fn bootstrap_stderr<R, F>(counts: &[u64], resamples: usize, rng: &mut R, mut estimator: F) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&[u64]) -> Result<f64>,
{
    let mut values = Vec::with_capacity(resamples);
    let mut replica = vec![0u64; counts.len()];
    for _ in 0..resamples {
        for (r, &c) in replica.iter_mut().zip(counts) {
            *r = if c == 0 {
                0
            } else {
                Poisson::new(c as f64).expect("positive mean").sample(rng) as u64
            };
        }
        if let Ok(v) = estimator(&replica) {
            values.push(v);
        }
    }
    if values.len() < 2 {
        return Err(undefined("bootstrap produced fewer than two usable replicas"));
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}

pub fn whichpath_rho_is_psd(rho: &ComplexMatrix) -> bool {
    rho.hermitian_eigenvalues()[0] >= crate::qcore::PSD_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{joint_click_probability, MeasurementSetting};
    use crate::qcore::{bell_phi_plus, c, cr, wootters_concurrence, werner_state, TwoQubitState, PolarizationVector};
    use crate::rng::StreamFactory;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn table_input() -> ProbTable {
        ProbTable::from_reported(0.9516, 2.61e-2, 2.29e-2, 2.6e-5).unwrap()
    }

    fn table_output() -> ProbTable {
        ProbTable::from_reported(0.9937, 3.33e-3, 2.98e-3, 1.0e-6).unwrap()
    }

    #[test]
    fn cauchy_schwarz_examples() {
        let one = CorrelationEstimate::exact(1.0);
        assert_eq!(cauchy_schwarz_r(one, one, one).unwrap().value, 1.0);
        let g12 = (43.2f64 * 1.64 * 1.80).sqrt();
        assert_abs_diff_eq!(g12, 11.29, epsilon = 5e-3);
        let r = cauchy_schwarz_r(
            CorrelationEstimate::exact(11.29),
            CorrelationEstimate::exact(1.64),
            CorrelationEstimate::exact(1.80),
        )
        .unwrap();
        assert!((r.value - 43.2).abs() / 43.2 < 5e-3, "{}", r.value);
        let r2 = cauchy_schwarz_r(
            CorrelationEstimate::exact(22.58),
            CorrelationEstimate::exact(1.64),
            CorrelationEstimate::exact(1.80),
        )
        .unwrap();
        assert_abs_diff_eq!(r2.value, 4.0 * r.value, epsilon = 1e-9);
        assert!(cauchy_schwarz_r(one, CorrelationEstimate::exact(0.0), one).is_err());
    }

    #[test]
    fn cauchy_schwarz_error_propagation() {
        let r = cauchy_schwarz_r(
            CorrelationEstimate::new(10.0, 1.0),
            CorrelationEstimate::new(2.0, 0.0),
            CorrelationEstimate::new(2.0, 0.0),
        )
        .unwrap();
        // dR/dg12 = 2·g12/(g11·g22) = 5
        assert_abs_diff_eq!(r.stderr, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn heralded_examples() {
        assert_eq!(heralded_autocorrelation(1000.0, 100.0, 100.0, 0.0).unwrap().value, 0.0);
        // Oracle for a two-photon input: routings aa, ab, ba, bb equally likely.
        // Per herald: P(D1) = 3/4, P(D3) = 3/4, P(both) = 2/4.
        let routes = [(2u32, 0u32), (1, 1), (1, 1), (0, 2)];
        let (mut p21, mut p23, mut p213) = (0.0, 0.0, 0.0);
        for (a, b) in routes {
            p21 += (a > 0) as u8 as f64 / 4.0;
            p23 += (b > 0) as u8 as f64 / 4.0;
            p213 += (a > 0 && b > 0) as u8 as f64 / 4.0;
        }
        let g = heralded_autocorrelation(1.0, p21, p23, p213).unwrap();
        assert_abs_diff_eq!(g.value, 0.5 / 0.5625, epsilon = 1e-12);
        let g = heralded_autocorrelation(1.0, 1.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(g.value, 0.5, epsilon = 1e-15);
        let g = heralded_autocorrelation(1e6, 1e3, 1e3, 0.1).unwrap();
        assert_abs_diff_eq!(g.value, 0.1, epsilon = 1e-12);
        assert!(matches!(
            heralded_autocorrelation(10.0, 0.0, 3.0, 0.0),
            Err(Error::UndefinedEstimate(_))
        ));
    }

    fn sample_fringe(a: f64, b: f64, c0: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let x = TAU * k as f64 / n as f64;
                (x, a + b * (x - c0).cos())
            })
            .collect()
    }

    #[test]
    fn fringe_examples() {
        let f = fit_fringe_visibility(&sample_fringe(100.0, 90.6, 0.3, 12)).unwrap();
        assert_abs_diff_eq!(f.visibility, 0.906, epsilon = 1e-12);
        assert_abs_diff_eq!(f.phase, 0.3, epsilon = 1e-12);
        assert!(f.residual_norm < 1e-9);
        let f = fit_fringe_visibility(&sample_fringe(50.0, 0.0, 0.0, 8)).unwrap();
        assert_abs_diff_eq!(f.visibility, 0.0, epsilon = 1e-12);
        let f = fit_fringe_visibility(&sample_fringe(50.0, 50.0, 1.0, 9)).unwrap();
        assert_abs_diff_eq!(f.visibility, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fringe_failures() {
        assert!(matches!(
            fit_fringe_visibility(&sample_fringe(1.0, 0.5, 0.0, 4)),
            Err(Error::FitFailure(_))
        ));
        let narrow: Vec<(f64, f64)> = (0..10).map(|k| (0.1 * k as f64, 5.0)).collect();
        assert!(matches!(fit_fringe_visibility(&narrow), Err(Error::FitFailure(_))));
        let zero = sample_fringe(0.0, 0.0, 0.0, 12);
        assert!(fit_fringe_visibility(&zero).is_err());
    }

    #[test]
    fn fringe_fit_recovers_visibility_from_counts() {
        // counts ~ Binomial(N, (1 + V cos x)/4)
        let f = StreamFactory::new(77);
        let v = 0.854;
        let n = 100_000u64;
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let x = TAU * k as f64 / 12.0;
                let p = 0.25 * (1.0 + v * x.cos());
                let mut rng = f.stream(k);
                let hits = (0..n).filter(|_| rng.random::<f64>() < p).count();
                (x, hits as f64)
            })
            .collect();
        let fit = fit_fringe_visibility(&pts).unwrap();
        assert!((fit.visibility - v).abs() < 2.0 * fit.visibility_stderr, "{fit:?}");
        assert!(fit.visibility_stderr > 0.0 && fit.visibility_stderr < 0.01);
    }

    #[test]
    fn whichpath_examples() {
        let d = whichpath_coherence(&table_output(), 0.854);
        assert_abs_diff_eq!(d, 2.694e-3, epsilon = 1e-6);
        let rho = build_whichpath_rho(&table_output(), 0.0).unwrap();
        assert_eq!(rho.get(1, 2), c(0.0, 0.0));
        let p = ProbTable::new(0.0, 0.5, 0.5, 0.0).unwrap();
        let rho = build_whichpath_rho(&p, 1.0).unwrap();
        let ev = rho.hermitian_eigenvalues();
        assert_abs_diff_eq!(ev[3], 1.0, epsilon = 1e-12);
        for e in &ev[..3] {
            assert_abs_diff_eq!(*e, 0.0, epsilon = 1e-12);
        }
        assert!(rho.is_hermitian(1e-15));
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-15);
        assert!(ProbTable::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ProbTable::new(0.9, 0.2, 0.0, 0.0).is_err());
        assert!(ProbTable::new(0.9937, 3.33e-3, 2.98e-3, 1.0e-6).is_err());
        assert!(ProbTable::from_reported(0.9, 0.2, 0.0, 0.0).is_err());
        assert!(build_whichpath_rho(&p, 1.5).is_err());
    }

    #[test]
    fn concurrence_table_rows() {
        let out = concurrence_whichpath(&table_output(), 0.854).unwrap();
        // 2·2.694e-3 − 2√(0.9937·1.0e-6) over P = 1.000011
        assert!((out - 3.39e-3).abs() / 3.39e-3 < 0.01, "{out}");
        assert_abs_diff_eq!(out, 3.3950e-3, epsilon = 1e-7);
        let inp = concurrence_whichpath(&table_input(), 0.906).unwrap();
        assert_abs_diff_eq!(inp, 0.034424, epsilon = 1e-6);
        let clamp = ProbTable::new(0.9, 0.01, 0.01, 0.08).unwrap();
        assert_eq!(concurrence_whichpath(&clamp, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn concurrence_routes_agree_on_table_rows() {
        for (p, v) in [(table_input(), 0.906), (table_output(), 0.854)] {
            let rho = build_whichpath_rho(&p, v).unwrap();
            assert!(whichpath_rho_is_psd(&rho));
            let w = wootters_concurrence(&rho).unwrap();
            let closed = concurrence_whichpath(&p, v).unwrap();
            assert!((w - closed).abs() < 1e-9, "{w} vs {closed}");
        }
    }

    // Brute force: sum the four projector probabilities directly.
    fn born_e(state: &TwoQubitState, t1: f64, t2: f64) -> f64 {
        let p = |a: f64, b: f64| {
            state.projection_probability(&PolarizationVector::linear(b), &PolarizationVector::linear(a))
        };
        let [pp, mm, mp, pm] = quad_angles(t1, t2).map(|(a, b)| p(a, b));
        (pp + mm - mp - pm) / (pp + mm + mp + pm)
    }

    fn expected_quad(state: &TwoQubitState, t1: f64, t2: f64, n: f64) -> ChshQuad {
        let [pp, mm, mp, pm] = quad_angles(t1, t2).map(|(a, b)| {
            (n * joint_click_probability(state, &MeasurementSetting::custom(a, b).unwrap())).round() as u64
        });
        ChshQuad {
            c_pp: pp,
            c_mm: mm,
            c_mp: mp,
            c_pm: pm,
        }
    }

    #[test]
    fn chsh_e_examples() {
        let phi = bell_phi_plus();
        let oracle = born_e(&phi, 0.0, FRAC_PI_8);
        assert_abs_diff_eq!(oracle, (FRAC_PI_4).cos(), epsilon = 1e-14);
        let e = chsh_e(&expected_quad(&phi, 0.0, FRAC_PI_8, 1e12)).unwrap();
        assert_abs_diff_eq!(e.value, oracle, epsilon = 1e-9);
        let e = chsh_e(&expected_quad(&phi, 0.0, 0.0, 1e6)).unwrap();
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-12);
        let w = werner_state(0.7).unwrap();
        for (a, b) in chsh_pairs() {
            assert_abs_diff_eq!(born_e(&w, a, b), 0.7 * born_e(&phi, a, b), epsilon = 1e-12);
        }
        let zero = ChshQuad {
            c_pp: 0,
            c_mm: 0,
            c_mp: 0,
            c_pm: 0,
        };
        assert!(matches!(chsh_e(&zero), Err(Error::UndefinedEstimate(_))));
    }

    fn s_of(state: &TwoQubitState) -> f64 {
        let e = chsh_pairs().map(|(a, b)| CorrelationEstimate::exact(born_e(state, a, b)));
        chsh_s(e).value
    }

    #[test]
    fn chsh_s_examples() {
        assert_abs_diff_eq!(s_of(&bell_phi_plus()), 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        let w = werner_state(0.810).unwrap();
        assert_abs_diff_eq!(s_of(&w), 2.0 * 2f64.sqrt() * 0.81, epsilon = 1e-12);
        assert!((s_of(&w) - 2.29).abs() < 0.005);
        let hh = TwoQubitState::from_pure(&[cr(1.0), cr(0.0), cr(0.0), cr(0.0)]).unwrap();
        assert_abs_diff_eq!(s_of(&hh), 2f64.sqrt(), epsilon = 1e-12);
        let s = chsh_s([CorrelationEstimate::new(0.5, 0.03); 4]);
        assert_abs_diff_eq!(s.stderr, 0.06, epsilon = 1e-12);
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_stderr(0), 0.0);
        assert_eq!(poisson_stderr(100), 10.0);
        assert_abs_diff_eq!(poisson_stderr(3300), 57.4, epsilon = 0.05);
    }

    #[test]
    fn bootstrap_matches_poisson_for_a_count() {
        let mut rng = StreamFactory::new(1).stream(0);
        let sd = bootstrap_stderr(&[10_000], 1000, &mut rng, |c| Ok(c[0] as f64)).unwrap();
        assert!((sd - 100.0).abs() < 10.0, "{sd}");
    }

    fn random_table(u: [f64; 5]) -> (ProbTable, f64) {
        let s: f64 = u[..4].iter().sum::<f64>() + 1e-12;
        let scale = 0.2 + 0.8 * u[4];
        let p = ProbTable::new(u[0] / s * scale, u[1] / s * scale, u[2] / s * scale, u[3] / s * scale).unwrap();
        (p, u[4])
    }

    #[test]
    fn psd_iff_coherence_bound_on_random_tables() {
        let mut rng = StreamFactory::new(31).stream(0);
        let mut checked = 0;
        for _ in 0..1000 {
            let u: [f64; 5] = std::array::from_fn(|_| rng.random());
            let (p, v) = random_table(u);
            let norm = p.total();
            let d = whichpath_coherence(&p, v) / norm;
            let bound = p.p01 * p.p10 / (norm * norm);
            if (d * d - bound).abs() < 1e-9 {
                continue;
            }
            let rho = build_whichpath_rho(&p, v).unwrap();
            assert_eq!(whichpath_rho_is_psd(&rho), d * d <= bound, "{p:?} V={v}");
            checked += 1;
        }
        assert!(checked > 900);
    }

    #[test]
    fn tsirelson_bound_on_random_states() {
        let f = StreamFactory::new(4242);
        let normal = rand_distr::StandardNormal;
        for k in 0..1000 {
            let mut rng = f.stream(k);
            let g: Vec<_> = (0..16)
                .map(|_| c(rng.sample::<f64, _>(normal), rng.sample::<f64, _>(normal)))
                .collect();
            let g = ComplexMatrix::from_row_major(4, 4, g).unwrap();
            let a = &g * &g.adjoint();
            let tr = a.trace();
            let st = TwoQubitState::from_density(a.scale(cr(1.0 / tr.re))).unwrap();
            assert!(s_of(&st) <= 2.0 * 2f64.sqrt() + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn concurrence_bounded_and_monotone(u in proptest::array::uniform5(0.0f64..1.0), v1 in 0.0f64..1.0, v2 in 0.0f64..1.0) {
            prop_assume!(u[..4].iter().sum::<f64>() > 1e-3);
            let (p, _) = random_table(u);
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            let c_lo = concurrence_whichpath(&p, lo).unwrap();
            let c_hi = concurrence_whichpath(&p, hi).unwrap();
            prop_assert!((0.0..=1.0).contains(&c_lo) && (0.0..=1.0).contains(&c_hi));
            prop_assert!(c_lo <= c_hi + 1e-15);
        }

        #[test]
        fn chsh_e_in_unit_interval(a in 0u64..1000, b in 0u64..1000, c2 in 0u64..1000, d in 0u64..1000) {
            prop_assume!(a + b + c2 + d > 0);
            let e = chsh_e(&ChshQuad { c_pp: a, c_mm: b, c_mp: c2, c_pm: d }).unwrap();
            prop_assert!((-1.0..=1.0).contains(&e.value));
        }

        #[test]
        fn separable_diagonal_states_respect_local_bound(u in proptest::array::uniform4(0.0f64..1.0)) {
            let s: f64 = u.iter().sum();
            prop_assume!(s > 1e-3);
            let rho = ComplexMatrix::diagonal(&u.map(|x| cr(x / s)));
            let st = TwoQubitState::from_density(rho).unwrap();
            prop_assert!(s_of(&st) <= 2.0 + 1e-12);
        }
    }
}
