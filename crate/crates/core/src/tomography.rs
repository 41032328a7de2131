//! Two-qubit polarization tomography: the 16 standard projective settings,
//! linear inversion and a maximum-likelihood reconstruction that is positive
//! semidefinite by construction (`ρ = T†T / Tr`, `T` lower triangular).

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::detection::DetectorParams;
use crate::error::{invalid, Error, Result};
use crate::qcore::{
    c, cr, pauli_x, pauli_y, pauli_z, phi_plus_vector, state_fidelity, ComplexMatrix, PolarizationVector,
    TwoQubitState, C64,
};
use crate::rng::StreamFactory;

type M4 = Matrix4<C64>;

/// One product projector. `projector_1` acts on qubit 0 (the first letter of
/// the label), `projector_2` on qubit 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TomoSetting {
    pub projector_1: PolarizationVector,
    pub projector_2: PolarizationVector,
    pub label: String,
}

impl TomoSetting {
    fn joint_projector(&self) -> M4 {
        to_m4(&self.projector_1.projector().kron(&self.projector_2.projector()))
    }
}

fn letter(ch: char) -> PolarizationVector {
    match ch {
        'H' => PolarizationVector::h(),
        'V' => PolarizationVector::v(),
        'D' => PolarizationVector::d(),
        'A' => PolarizationVector::a(),
        'R' => PolarizationVector::r(),
        'L' => PolarizationVector::l(),
        _ => unreachable!("unknown polarization letter {ch}"),
    }
}

const LABELS: [&str; 16] = [
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH", "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
];

/// The 16 settings of the standard overcomplete-free two-qubit scheme.
pub fn tomo_settings_16() -> Vec<TomoSetting> {
    LABELS
        .iter()
        .map(|l| {
            let mut ch = l.chars();
            TomoSetting {
                projector_1: letter(ch.next().unwrap()),
                projector_2: letter(ch.next().unwrap()),
                label: l.to_string(),
            }
        })
        .collect()
}

fn to_m4(m: &ComplexMatrix) -> M4 {
    M4::from_fn(|i, j| m.get(i, j))
}

fn from_m4(m: &M4) -> ComplexMatrix {
    ComplexMatrix::from_dmatrix(DMatrix::from_fn(4, 4, |i, j| m[(i, j)]))
}

fn pauli_basis() -> Vec<ComplexMatrix> {
    let singles = [ComplexMatrix::identity(2), pauli_x(), pauli_y(), pauli_z()];
    let mut out = Vec::with_capacity(16);
    for a in &singles {
        for b in &singles {
            out.push(a.kron(b));
        }
    }
    out
}

/// Real matrix `B` with `p_i = Σ_k B_ik r_k` for `ρ = Σ_k r_k σ_k / 4`
/// over the 16 two-qubit Pauli products (`σ_0 = I⊗I`, so `r_0 = Tr ρ`).
pub fn design_matrix(settings: &[TomoSetting]) -> DMatrix<f64> {
    let basis = pauli_basis();
    DMatrix::from_fn(settings.len(), 16, |i, k| {
        let p = settings[i].projector_1.projector().kron(&settings[i].projector_2.projector());
        (&basis[k] * &p).trace().re / 4.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomoCounts {
    pub settings: Vec<TomoSetting>,
    pub counts: Vec<u64>,
    /// Trials (heralds) spent on each setting.
    pub total_per_basis: u64,
}

impl TomoCounts {
    pub fn new(settings: Vec<TomoSetting>, counts: Vec<u64>, total_per_basis: u64) -> Result<Self> {
        if settings.len() != counts.len() {
            return Err(invalid("one count per setting required"));
        }
        if counts.iter().any(|&n| n > total_per_basis) {
            return Err(Error::DataIntegrity("count exceeds trials per setting".into()));
        }
        Ok(Self {
            settings,
            counts,
            total_per_basis,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Coincidence probability for one product setting with two threshold
/// detectors of efficiency `η` and dark probability `d`. With ideal detectors
/// this is just the Born probability.
pub fn setting_click_probability(state: &TwoQubitState, setting: &TomoSetting, det: &DetectorParams) -> f64 {
    let (a, b) = (&setting.projector_1, &setting.projector_2);
    let q_ab = state.projection_probability(a, b);
    let q_a = q_ab + state.projection_probability(a, &b.orthogonal());
    let q_b = q_ab + state.projection_probability(&a.orthogonal(), b);
    let (eta, d) = (det.efficiency, det.dark_prob);
    let nd = 1.0 - d;
    let none_a = nd * (1.0 - eta * q_a);
    let none_b = nd * (1.0 - eta * q_b);
    let none_both = nd * nd * (1.0 - eta * q_a - eta * q_b + eta * eta * q_ab);
    (1.0 - none_a - none_b + none_both).clamp(0.0, 1.0)
}

/// Binomial coincidence counts for `shots` trials per setting.
pub fn simulate_tomo_counts<R: Rng + ?Sized>(
    state: &TwoQubitState,
    shots: u64,
    det: &DetectorParams,
    rng: &mut R,
) -> Result<TomoCounts> {
    det.validate()?;
    let settings = tomo_settings_16();
    let mut counts = Vec::with_capacity(settings.len());
    for s in &settings {
        let p = setting_click_probability(state, s, det);
        let dist = Binomial::new(shots, p).map_err(|e| invalid(e.to_string()))?;
        counts.push(dist.sample(rng));
    }
    TomoCounts::new(settings, counts, shots)
}

#[derive(Debug, Clone)]
pub struct LinearInversion {
    /// Unit-trace Hermitian estimate; may have negative eigenvalues.
    pub rho: ComplexMatrix,
    pub is_psd: bool,
}

/// Solves the Born equations exactly (16 settings) or in the least-squares
/// sense (more settings) using relative frequencies.
pub fn linear_inversion(counts: &TomoCounts) -> Result<LinearInversion> {
    if counts.settings.len() < 16 {
        return Err(Error::ReconstructionFailure("need at least 16 settings".into()));
    }
    if counts.total() == 0 {
        return Err(Error::ReconstructionFailure("no counts".into()));
    }
    let b = design_matrix(&counts.settings);
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::ReconstructionFailure("settings are not informationally complete".into()));
    }
    let n = counts.total_per_basis.max(1) as f64;
    let p = DVector::from_iterator(counts.counts.len(), counts.counts.iter().map(|&k| k as f64 / n));
    let r = svd
        .solve(&p, 1e-12)
        .map_err(|e| Error::ReconstructionFailure(e.to_string()))?;
    if !(r[0] > 0.0) {
        return Err(Error::ReconstructionFailure("non-positive trace".into()));
    }
    let basis = pauli_basis();
    let mut rho = ComplexMatrix::zeros(4, 4);
    for (k, sigma) in basis.iter().enumerate() {
        rho = &rho + &sigma.scale(cr(r[k] / (4.0 * r[0])));
    }
    let rho = hermitize(&rho);
    let is_psd = rho.hermitian_eigenvalues()[0] >= crate::qcore::PSD_TOL;
    Ok(LinearInversion { rho, is_psd })
}

fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + &m.adjoint()).scale(cr(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iters: usize,
    /// Stop when the gradient norm of the per-shot log-likelihood drops below this.
    pub tolerance: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleResult {
    pub state: TwoQubitState,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Per-shot log-likelihood at the returned state.
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted step, starting at the initial point.
    pub history: Vec<f64>,
}

// T from 16 reals: 4 real diagonal entries, then (re, im) of the six
// strictly-lower entries in row-major order.
const LOWER: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn t_from_params(x: &[f64]) -> M4 {
    let mut t = M4::zeros();
    for i in 0..4 {
        t[(i, i)] = cr(x[i]);
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        t[(i, j)] = c(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

fn params_from_t(t: &M4) -> Vec<f64> {
    let mut x = vec![0.0; 16];
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        x[4 + 2 * k] = t[(i, j)].re;
        x[5 + 2 * k] = t[(i, j)].im;
    }
    x
}

struct Likelihood {
    projectors: Vec<M4>,
    freqs: Vec<f64>,
    sum: M4,
}

impl Likelihood {
    fn new(counts: &TomoCounts) -> Self {
        let projectors: Vec<M4> = counts.settings.iter().map(|s| s.joint_projector()).collect();
        let total = counts.total() as f64;
        let freqs = counts.counts.iter().map(|&n| n as f64 / total).collect();
        let sum = projectors.iter().fold(M4::zeros(), |acc, p| acc + p);
        Self { projectors, freqs, sum }
    }

    /// `Σ f_i log Tr(A P_i) - log Tr(A S)`, which is scale invariant in `A`.
    fn value(&self, a: &M4) -> f64 {
        let mut l = -(a * self.sum).trace().re.ln();
        for (p, &f) in self.projectors.iter().zip(&self.freqs) {
            if f > 0.0 {
                let q = (a * p).trace().re;
                if q <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                l += f * q.ln();
            }
        }
        l
    }

    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = t_from_params(x);
        let a = t.adjoint() * t;
        let value = self.value(&a);
        if !value.is_finite() {
            return (value, vec![0.0; 16]);
        }
        let mut g = -self.sum / cr((a * self.sum).trace().re);
        for (p, &f) in self.projectors.iter().zip(&self.freqs) {
            if f > 0.0 {
                g += p * cr(f / (a * p).trace().re);
            }
        }
        // dL = 2 Re Tr(G T† dT)
        let m = g * t.adjoint();
        let mut grad = vec![0.0; 16];
        for i in 0..4 {
            grad[i] = 2.0 * m[(i, i)].re;
        }
        for (k, &(i, j)) in LOWER.iter().enumerate() {
            grad[4 + 2 * k] = 2.0 * m[(j, i)].re;
            grad[5 + 2 * k] = -2.0 * m[(j, i)].im;
        }
        (value, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular `T` with `T†T = ρ` for positive definite `ρ`.
fn lower_factor(rho: &ComplexMatrix) -> Result<M4> {
    // reverse the index order, take the ordinary Cholesky factor L (ρ' = L L†),
    // and reverse back: J L† J is lower triangular with (J L† J)†(J L† J) = ρ.
    let r = to_m4(rho);
    let rev = M4::from_fn(|i, j| r[(3 - i, 3 - j)]);
    let chol = rev
        .cholesky()
        .ok_or_else(|| Error::ReconstructionFailure("initial state not positive definite".into()))?;
    let l = chol.l();
    let lt = l.adjoint();
    Ok(M4::from_fn(|i, j| lt[(3 - i, 3 - j)]))
}

fn initial_point(counts: &TomoCounts) -> Result<Vec<f64>> {
    let lin = linear_inversion(counts)?;
    let eig = nalgebra::SymmetricEigen::new(to_m4(&lin.rho));
    let floor = 1e-9;
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(floor)).collect();
    let s: f64 = vals.iter().sum();
    let mut rho = M4::zeros();
    for (k, v) in vals.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        rho += col * col.adjoint() * cr(v / s);
    }
    rho = (rho + rho.adjoint()) * cr(0.5);
    let t = lower_factor(&from_m4(&rho))?;
    Ok(params_from_t(&t))
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Maximum-likelihood state from the 16 coincidence counts.
///
/// L-BFGS ascent on the Cholesky parametrization with a backtracking line
/// search that only accepts likelihood increases. Running out of iterations
/// is reported through `converged`, not as an error.
pub fn mle_reconstruct(counts: &TomoCounts, options: MleOptions) -> Result<MleResult> {
    if options.max_iters == 0 || !(options.tolerance > 0.0) {
        return Err(invalid("max_iters and tolerance must be positive"));
    }
    let lik = Likelihood::new(counts);
    let mut x = initial_point(counts)?;
    normalize(&mut x);
    let (mut f, mut g) = lik.value_and_grad(&x);
    if !f.is_finite() {
        return Err(Error::ReconstructionFailure("initial likelihood not finite".into()));
    }
    let mut history = vec![f];
    let mem = 8;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = norm(&g) < options.tolerance;

    while !converged && iterations < options.max_iters {
        iterations += 1;
        // two-loop recursion on the minimization problem -f
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), a) in s_hist.iter().zip(&y_hist).zip(alphas.iter().rev()) {
            let rho = 1.0 / dot(y, s);
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &g);
        if !(slope > 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = g.clone();
            slope = dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (fnew, gnew) = lik.value_and_grad(&xn);
            if fnew.is_finite() && fnew >= f + 1e-4 * step * slope && fnew > f {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((mut xn, fnew, gnew)) = accepted else {
            if s_hist.is_empty() {
                // no ascent possible along the gradient: stationary to precision
                converged = norm(&g) < options.tolerance.sqrt();
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        // rescaling T leaves the likelihood unchanged and scales the gradient by 1/c
        let c0 = norm(&xn);
        normalize(&mut xn);
        let gnew: Vec<f64> = gnew.iter().map(|v| v * c0).collect();
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > mem {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let gain = fnew - f;
        x = xn;
        f = fnew;
        g = gnew;
        history.push(f);
        converged = norm(&g) < options.tolerance || gain.abs() < 1e-16 * f.abs().max(1.0);
    }

    let t = t_from_params(&x);
    let a = t.adjoint() * t;
    let a = (a + a.adjoint()) * cr(0.5);
    let tr = a.trace().re;
    let state = TwoQubitState::from_density(from_m4(&(a / cr(tr))))?;
    Ok(MleResult {
        state,
        converged,
        iterations,
        grad_norm: norm(&g),
        log_likelihood: f,
        history,
    })
}

/// `<Φ+|ρ|Φ+>`
pub fn fidelity_to_bell(state: &TwoQubitState) -> Result<f64> {
    state_fidelity(state, &phi_plus_vector())
}

/// Standard deviation of the Bell fidelity over Poisson resamples of the
/// counts, each reconstructed by MLE. Resample `k` draws from `streams.stream(k)`.
pub fn bootstrap_fidelity(
    counts: &TomoCounts,
    resamples: usize,
    streams: &StreamFactory,
    options: MleOptions,
) -> Result<f64> {
    let mut k = 0u64;
    let mut rng = streams.stream(0);
    crate::analysis::bootstrap_stderr(&counts.counts, resamples, &mut rng, |replica| {
        k += 1;
        let c = TomoCounts {
            settings: counts.settings.clone(),
            counts: replica.to_vec(),
            total_per_basis: counts.total_per_basis.max(replica.iter().copied().max().unwrap_or(0)),
        };
        fidelity_to_bell(&mle_reconstruct(&c, options)?.state)
    })
}
