//! Impulse controls for `y' = Ay` on `(T₁, T₃)` with a single jump
//! `y(T₂) = y(T₂₋) + 1_ω f`.
//!
//! Everything is solved in the modal basis `span{ξ_1, …, ξ_d}` (`d = n` is the
//! full discrete model). With `L = T₃ − T₁`, `s = T₃ − T₂` and
//! `M = [⟨ξ_i, ξ_j⟩_ω]`, the control-to-terminal Gram operator is
//! `G = e^{sA} χ_ω e^{sA} = D_s M D_s` with `D_t = diag(e^{−λ_j t})`.
//!
//! * The minimal-norm control is `f* = 1_ω^* e^{sA} w` where `w` solves
//!   `G w + e^{LA} z + ε‖z‖ w/‖w‖ = 0`. Writing `μ = ε‖z‖/‖w‖` turns this into
//!   the shifted system `(G + μ) w = −e^{LA} z` and the scalar equation
//!   `μ ‖w(μ)‖ = ε‖z‖`, whose left side is increasing in `μ`.
//! * The penalized control is `f = −k 1_ω^* e^{sA} w` with
//!   `(k G + ℏ) w = e^{LA} z`, so that `y(T₃) = ℏ w`.

use nalgebra::{DMatrix, DVector};

use crate::error::{config, domain, Error, Result};
use crate::optimize::{maximize_on_sphere, AscentSettings};
use crate::spectral::{dot, SpectralDecomposition, StateVector, SubdomainMask, SubdomainVector};

/// Knife-edge slack when deciding between the free and the controlled regime.
const ZERO_CONTROL_SLACK: f64 = 1e-12;
/// Relative tolerance on `μ‖w(μ)‖ = ε‖z‖`.
type Solver = dyn Fn(&DVector<f64>) -> Option<DVector<f64>>;

const SECULAR_TOL: f64 = 1e-10;
const REFINE_STEPS: usize = 3;

/// Impulse times `0 ≤ T₁ < T₂ < T₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseTimes {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl ImpulseTimes {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) || t1 < 0.0 || t1 >= t2 || t2 >= t3 {
            return config(format!(
                "impulse times must satisfy 0 ≤ T1 < T2 < T3, got ({t1}, {t2}, {t3})"
            ));
        }
        Ok(Self { t1, t2, t3 })
    }

    /// `T₃ − T₁`
    pub fn free_horizon(&self) -> f64 {
        self.t3 - self.t1
    }

    /// `T₃ − T₂`
    pub fn control_horizon(&self) -> f64 {
        self.t3 - self.t2
    }
}

/// One instance `(T₁, T₂, T₃, ω, z, ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseProblem {
    pub times: ImpulseTimes,
    pub mask: SubdomainMask,
    pub z: StateVector,
    pub eps: f64,
}

impl ImpulseProblem {
    pub fn new(times: ImpulseTimes, mask: SubdomainMask, z: StateVector, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if z.len() != mask.grid().n() {
            return config("initial state and mask live on different grids");
        }
        Ok(Self { times, mask, z, eps })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return domain(format!("ε must be positive, got {eps}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    /// The free trajectory already lands in the target ball; `f* = 0`.
    ZeroControl,
    Active,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::ZeroControl => "zero_control",
            ControlMode::Active => "active",
        }
    }
}

/// A minimal-norm impulse control together with its certificates.
#[derive(Debug, Clone)]
pub struct ControlResult {
    pub f: SubdomainVector,
    /// Dual minimizer `w`.
    pub w: StateVector,
    /// `y(T₃)` by forward simulation with the computed control.
    pub terminal: StateVector,
    pub f_norm: f64,
    pub terminal_norm: f64,
    /// `‖G w + e^{LA} z + ε‖z‖ w/‖w‖‖` (zero in the free regime).
    pub el_residual: f64,
    /// `‖e^{LA} z‖`, the natural scale of the residual.
    pub free_terminal_norm: f64,
    pub mode: ControlMode,
    /// Shift `μ = ε‖z‖/‖w‖` at the solution, `None` in the free regime.
    pub mu: Option<f64>,
    pub z_norm: f64,
    pub eps: f64,
    pub times: ImpulseTimes,
    pub modes: usize,
    pub mask_interval: (f64, f64),
}

/// Solution of the penalized problem with weights `(ℏ, k)`.
#[derive(Debug, Clone)]
pub struct PenalizedResult {
    pub f: SubdomainVector,
    pub w: StateVector,
    pub terminal: StateVector,
    pub f_norm: f64,
    pub terminal_norm: f64,
    pub hbar: f64,
    pub k: f64,
    /// `(1/k)‖f‖² + (1/ℏ)‖y(T₃)‖²`
    pub energy: f64,
}

/// Linear combination `Σ b_j f_j` of per-mode controls.
#[derive(Debug, Clone)]
pub struct Superposition {
    pub f: SubdomainVector,
    pub terminal: StateVector,
    pub f_norm: f64,
    pub terminal_norm: f64,
    /// `ε √K ‖b‖`
    pub bound: f64,
}

struct DualSolution {
    w: Vec<f64>,
    /// `√h`-scaled control values on the mask.
    phi: DVector<f64>,
    mu: Option<f64>,
    free_terminal: Vec<f64>,
}

/// The impulse-controlled system on a fixed window and time triple, with the
/// control-to-terminal map assembled once so that many instances can be solved.
#[derive(Debug, Clone)]
pub struct ImpulseSystem<'a> {
    decomp: &'a SpectralDecomposition,
    mask: SubdomainMask,
    times: ImpulseTimes,
    modes: usize,
    free_decay: Vec<f64>,
    control_decay: Vec<f64>,
    gram: DMatrix<f64>,
    /// `Bᵀ = e^{sA} 1_ω` from `√h`-scaled mask values to modal coordinates (`d × m`).
    control_map: DMatrix<f64>,
    /// `tr G`, an upper bound for its largest eigenvalue.
    gram_trace: f64,
}

impl<'a> ImpulseSystem<'a> {
    pub fn new(
        decomp: &'a SpectralDecomposition,
        mask: &SubdomainMask,
        times: ImpulseTimes,
        modes: usize,
    ) -> Result<Self> {
        if modes == 0 || modes > decomp.len() {
            return config(format!("modal dimension must be in 1..={}, got {modes}", decomp.len()));
        }
        if mask.grid() != decomp.grid() {
            return config("mask and decomposition live on different grids");
        }
        let free_decay = decomp.decay_factors(times.free_horizon(), modes);
        let control_decay = decomp.decay_factors(times.control_horizon(), modes);
        let mut gram = decomp.masked_gram(mask, modes);
        for i in 0..modes {
            for j in 0..modes {
                gram[(i, j)] *= control_decay[i] * control_decay[j];
            }
        }
        let root_h = decomp.grid().h().sqrt();
        let rows = decomp.mode_matrix().select_rows(mask.indices());
        let mut control_map = rows.columns(0, modes).transpose() * root_h;
        for (j, d) in control_decay.iter().enumerate() {
            control_map.row_mut(j).scale_mut(*d);
        }
        Ok(Self {
            decomp,
            mask: mask.clone(),
            times,
            modes,
            control_map,
            free_decay,
            control_decay,
            gram_trace: gram.trace().max(0.0),
            gram,
        })
    }

    /// Full discrete model, `d = n`.
    pub fn full(decomp: &'a SpectralDecomposition, mask: &SubdomainMask, times: ImpulseTimes) -> Result<Self> {
        Self::new(decomp, mask, times, decomp.len())
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        self.decomp
    }

    pub fn mask(&self) -> &SubdomainMask {
        &self.mask
    }

    pub fn times(&self) -> ImpulseTimes {
        self.times
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// `G` in modal coordinates.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Modal coordinates of `e^{LA} z`.
    pub fn free_terminal_coeffs(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.free_decay).map(|(a, d)| a * d).collect()
    }

    /// Leading `d` modal coordinates of a state.
    pub fn coefficients(&self, u: &StateVector) -> Vec<f64> {
        let mut c = self.decomp.coefficients(u);
        c.truncate(self.modes);
        c
    }

    /// Projection of a state onto the modal space.
    pub fn project(&self, u: &StateVector) -> StateVector {
        self.decomp.synthesize(&self.coefficients(u))
    }

    /// `1_ω^* e^{sA} Σ w_j ξ_j`
    pub fn observe_dual(&self, w: &[f64]) -> SubdomainVector {
        let c: Vec<f64> = w.iter().zip(&self.control_decay).map(|(a, d)| a * d).collect();
        self.mask
            .restrict(&self.decomp.synthesize(&c))
            .expect("synthesized state lives on the mask grid")
    }

    /// Forward simulation `y(T₃) = P_d (e^{LA} z + e^{sA} 1_ω f)` in physical
    /// space, by propagating across the jump.
    pub fn simulate(&self, z: &StateVector, f: &SubdomainVector) -> Result<StateVector> {
        let before_jump = self.decomp.propagate(z, self.times.t2 - self.times.t1)?;
        let after_jump = &before_jump + &self.mask.extend(f)?;
        let terminal = self.decomp.propagate(&after_jump, self.times.control_horizon())?;
        Ok(if self.modes == self.decomp.len() {
            terminal
        } else {
            self.project(&terminal)
        })
    }

    /// `(a G + c) x = rhs`. The matrix is positive definite for `c > 0`
    /// up to roundoff in `G`; LU takes over when Cholesky rejects it. A few
    /// rounds of refinement keep the residual, which is the terminal defect,
    /// small when `c` is tiny.
    fn shifted_solve(&self, a: f64, c: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut m = &self.gram * a;
        for i in 0..self.modes {
            m[(i, i)] += c;
        }
        let rhs = DVector::from_column_slice(rhs);
        let solve: Box<Solver> = match m.clone().cholesky() {
            Some(ch) => Box::new(move |r| Some(ch.solve(r))),
            None => {
                let lu = m.clone().lu();
                Box::new(move |r| lu.solve(r))
            }
        };
        let singular = || Error::Numerical(format!("shifted control Gram is singular at shift {c:e}"));
        let mut x = solve(&rhs).ok_or_else(singular)?;
        for _ in 0..REFINE_STEPS {
            let r = &rhs - &m * &x;
            x += solve(&r).ok_or_else(singular)?;
        }
        Ok(x.iter().copied().collect())
    }

    /// Regularized least squares `min_φ ‖b + Bᵀφ‖² + μ‖φ‖²` by Householder QR
    /// of `[Bᵀ; √μ I]`. Returns `φ` and the residual `y = b + Bᵀφ`, which is the
    /// modal terminal state. Equivalent to `(G + μ) w = −b` with `y = −μ w` and
    /// `φ = B w`, but never squares the condition number of `B`.
    fn tikhonov(&self, b: &[f64], mu: f64) -> Result<(DVector<f64>, Vec<f64>)> {
        let (d, m) = self.control_map.shape();
        let mut a = DMatrix::zeros(d + m, m);
        a.rows_mut(0, d).copy_from(&self.control_map);
        let root = mu.sqrt();
        for i in 0..m {
            a[(d + i, i)] = root;
        }
        let mut rhs = DVector::zeros(d + m);
        for (r, bj) in rhs.iter_mut().zip(b) {
            *r = -bj;
        }
        let qr = a.qr();
        qr.q_tr_mul(&mut rhs);
        let phi = qr
            .r()
            .solve_upper_triangular(&rhs.rows(0, m).into_owned())
            .ok_or_else(|| Error::Numerical(format!("regularized control system is singular at shift {mu:e}")))?;
        let bt_phi = &self.control_map * &phi;
        let y = b.iter().zip(bt_phi.iter()).map(|(bj, c)| bj + c).collect();
        Ok((phi, y))
    }

    /// `g(μ) = ‖y(μ)‖ = μ ‖(G + μ)^{-1} b‖`, increasing in `μ`.
    fn secular(&self, b: &[f64], mu: f64) -> Result<f64> {
        let (_, y) = self.tikhonov(b, mu)?;
        Ok(dot(&y, &y).sqrt())
    }

    fn dual_solution(&self, z: &[f64], eps: f64) -> Result<DualSolution> {
        let z_norm = dot(z, z).sqrt();
        let free_terminal = self.free_terminal_coeffs(z);
        let target = eps * z_norm;
        let free_norm = dot(&free_terminal, &free_terminal).sqrt();
        if z_norm == 0.0 || free_norm <= target * (1.0 + ZERO_CONTROL_SLACK) {
            return Ok(DualSolution {
                w: vec![0.0; z.len()],
                phi: DVector::zeros(self.mask.len()),
                mu: None,
                free_terminal,
            });
        }

        let b = &free_terminal;
        let mut hi = self.gram_trace.max(1e-30);
        let mut guard = 0;
        while self.secular(b, hi)? <= target {
            hi *= 4.0;
            guard += 1;
            if guard > 2000 || !hi.is_finite() {
                return Err(Error::Numerical(format!(
                    "upper bracket not found: g({hi:e}) = {:e} ≤ ε‖z‖ = {target:e}",
                    self.secular(b, hi)?
                )));
            }
        }
        let mut lo = hi;
        while self.secular(b, lo)? >= target {
            lo *= 0.25;
            if lo < 1e-300 {
                return Err(Error::Numerical(format!(
                    "lower bracket not found: g({lo:e}) = {:e}, g({hi:e}) = {:e}, target ε‖z‖ = {target:e}",
                    self.secular(b, lo)?,
                    self.secular(b, hi)?
                )));
            }
        }

        // keep the last feasible shift so the terminal never overshoots ε‖z‖
        let mut best = lo;
        for _ in 0..400 {
            let mu = lo.sqrt() * hi.sqrt();
            let g = self.secular(b, mu)?;
            if g <= target {
                lo = mu;
                best = mu;
            } else {
                hi = mu;
            }
            if (g - target).abs() <= 0.1 * SECULAR_TOL * target || hi / lo - 1.0 < 4.0 * f64::EPSILON {
                break;
            }
        }
        let (phi, y) = self.tikhonov(b, best)?;
        let w = y.iter().map(|v| -v / best).collect();
        Ok(DualSolution {
            w,
            phi,
            mu: Some(best),
            free_terminal,
        })
    }

    /// Minimal control norm `N_z` for modal coordinates `z`, together with the
    /// dual minimizer `w` (zero in the free regime).
    pub fn min_norm_value(&self, z: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
        let dual = self.dual_solution(z, eps)?;
        Ok((dual.phi.norm(), dual.w))
    }

    /// Minimal-norm control for the state `z` (projected onto the modal space).
    pub fn solve_min_norm(&self, z: &StateVector, eps: f64) -> Result<ControlResult> {
        self.solve_min_norm_coeffs(&self.coefficients(z), eps)
    }

    /// Minimal-norm control for the modal coordinates `z`.
    pub fn solve_min_norm_coeffs(&self, z: &[f64], eps: f64) -> Result<ControlResult> {
        check_eps(eps)?;
        if z.len() != self.modes {
            return config(format!("expected {} modal coordinates, got {}", self.modes, z.len()));
        }
        let dual = self.dual_solution(z, eps)?;
        let z_norm = dot(z, z).sqrt();
        let z_state = self.decomp.synthesize(z);
        let free_terminal_norm = dot(&dual.free_terminal, &dual.free_terminal).sqrt();

        let (f, mode, el_residual) = match dual.mu {
            None => (SubdomainVector::zeros(&self.mask), ControlMode::ZeroControl, 0.0),
            Some(_) => {
                let w_norm = dot(&dual.w, &dual.w).sqrt();
                // G w + b + τ w/‖w‖ = Bᵀ(B w − φ) + (τ/‖w‖ − μ) w, using y = b + Bᵀφ = −μ w;
                // the direct form cancels two O(‖b‖) terms
                let mu = dual.mu.unwrap_or(0.0);
                let w = DVector::from_column_slice(&dual.w);
                let gap = self.control_map.tr_mul(&w) - &dual.phi;
                let shift = eps * z_norm / w_norm - mu;
                let residual = (&self.control_map * gap + w * shift).norm();
                let h_root = self.decomp.grid().h().sqrt();
                let f = SubdomainVector::new(self.decomp.grid().h(), dual.phi.iter().map(|p| p / h_root).collect());
                (f, ControlMode::Active, residual)
            }
        };
        let terminal = self.simulate(&z_state, &f)?;
        Ok(ControlResult {
            f_norm: f.norm(),
            terminal_norm: terminal.norm(),
            w: self.decomp.synthesize(&dual.w),
            f,
            terminal,
            el_residual,
            free_terminal_norm,
            mode,
            mu: dual.mu,
            z_norm,
            eps,
            times: self.times,
            modes: self.modes,
            mask_interval: self.mask.interval(),
        })
    }

    /// Minimal-norm control steering `ξ_{j+1}` (0-based `j`) into the ε-ball.
    pub fn eigencontrol(&self, j: usize, eps: f64) -> Result<ControlResult> {
        if j >= self.modes {
            return config(format!(
                "mode index {j} outside the {}-dimensional modal space",
                self.modes
            ));
        }
        let mut z = vec![0.0; self.modes];
        z[j] = 1.0;
        self.solve_min_norm_coeffs(&z, eps)
    }

    /// Penalized control with weights `(ℏ, k)`: `(kG + ℏ) w = e^{LA} z`,
    /// `f = −k 1_ω^* e^{sA} w`.
    pub fn solve_penalized(&self, z: &StateVector, hbar: f64, k: f64) -> Result<PenalizedResult> {
        if !(hbar.is_finite() && hbar > 0.0 && k.is_finite() && k > 0.0) {
            return domain(format!("penalty weights must be positive, got ℏ = {hbar}, k = {k}"));
        }
        let zc = self.coefficients(z);
        let w = self.shifted_solve(k, hbar, &self.free_terminal_coeffs(&zc))?;
        let f = self.observe_dual(&w).scaled(-k);
        let terminal = self.simulate(&self.decomp.synthesize(&zc), &f)?;
        let f_norm = f.norm();
        let terminal_norm = terminal.norm();
        Ok(PenalizedResult {
            energy: f_norm * f_norm / k + terminal_norm * terminal_norm / hbar,
            w: self.decomp.synthesize(&w),
            f,
            terminal,
            f_norm,
            terminal_norm,
            hbar,
            k,
        })
    }

    /// Best `k` in `‖e^{LA}Φ‖² ≤ k ‖1_ω^* e^{sA}Φ‖² + ε²‖Φ‖²` over the modal
    /// space: the least `k` with `kG ⪰ e^{2LA} − ε²`.
    ///
    /// After the congruence `Φ = D_s^{-1}ψ` this reads `kM + Q ⪰ 0` with
    /// `Q = diag(ε²e^{2λs} − e^{−2λ(L−s)})`, which avoids the grading of `G`.
    /// Bisection on `k` with a Cholesky test; the returned `k` is on the
    /// definite side.
    pub fn squared_observability_constant(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        let (l, s) = (self.times.free_horizon(), self.times.control_horizon());
        let q: Vec<f64> = self.decomp.lambdas()[..self.modes]
            .iter()
            .map(|lam| ((eps * eps) * (2.0 * lam * s).exp() - (-2.0 * lam * (l - s)).exp()).min(1e300))
            .collect();
        if q.iter().all(|v| *v > 0.0) {
            return Ok(0.0);
        }
        let masked = self.decomp.masked_gram(&self.mask, self.modes);
        let definite = |k: f64| {
            let mut m = &masked * k;
            for (i, v) in q.iter().enumerate() {
                m[(i, i)] += v;
            }
            m.cholesky().is_some()
        };
        let mut hi = 1.0;
        let mut guard = 0;
        while !definite(hi) {
            hi *= 4.0;
            guard += 1;
            if guard > 600 {
                return Err(Error::Numerical(
                    "no finite observability constant on this modal space; use a smaller truncation".into(),
                ));
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if definite(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Default penalty weights `ℏ = ε²` and `k` the squared-form observability
    /// constant, under which the penalized control reaches the ε-ball.
    pub fn default_penalty(&self, eps: f64) -> Result<(f64, f64)> {
        let k = self.squared_observability_constant(eps)?;
        Ok((eps * eps, k.max(1e-12)))
    }
}

/// Minimal-norm control for one problem instance on the full discrete model.
pub fn solve_min_norm(decomp: &SpectralDecomposition, problem: &ImpulseProblem) -> Result<ControlResult> {
    ImpulseSystem::full(decomp, &problem.mask, problem.times)?.solve_min_norm(&problem.z, problem.eps)
}

pub fn solve_penalized(
    decomp: &SpectralDecomposition,
    problem: &ImpulseProblem,
    hbar: f64,
    k: f64,
) -> Result<PenalizedResult> {
    ImpulseSystem::full(decomp, &problem.mask, problem.times)?.solve_penalized(&problem.z, hbar, k)
}

/// Minimal-norm control bringing `y(T₁) = ξ_{j+1}` into the ε-ball.
pub fn eigencontrol(
    decomp: &SpectralDecomposition,
    mask: &SubdomainMask,
    j: usize,
    eps: f64,
    times: ImpulseTimes,
) -> Result<ControlResult> {
    ImpulseSystem::full(decomp, mask, times)?.eigencontrol(j, eps)
}

/// `f̃ = Σ b_j f_j` with terminal state by linearity.
pub fn superpose_controls(b: &[f64], controls: &[ControlResult]) -> Result<Superposition> {
    if b.len() != controls.len() {
        return config(format!("{} coefficients for {} controls", b.len(), controls.len()));
    }
    let Some(first) = controls.first() else {
        return config("no controls to superpose");
    };
    for c in controls {
        if c.times != first.times
            || c.eps != first.eps
            || c.modes != first.modes
            || c.mask_interval != first.mask_interval
            || c.f.len() != first.f.len()
        {
            return config("controls were computed for different problem parameters");
        }
    }
    let mut f = first.f.scaled(0.0);
    let mut terminal = first.terminal.scaled(0.0);
    for (bj, c) in b.iter().zip(controls) {
        f.axpy(*bj, &c.f);
        terminal.axpy(*bj, &c.terminal);
    }
    let b_norm = dot(b, b).sqrt();
    Ok(Superposition {
        f_norm: f.norm(),
        terminal_norm: terminal.norm(),
        f,
        terminal,
        bound: first.eps * (b.len() as f64).sqrt() * b_norm,
    })
}

/// Result of maximising `N_z` over unit initial data.
#[derive(Debug, Clone)]
pub struct ValueReport {
    pub value: f64,
    /// Modal coordinates of the maximizer.
    pub maximizer: Vec<f64>,
    pub stagnated: bool,
}

/// `N = sup_{‖z‖ ≤ 1} N_z` over the leading `dim_trunc` modes.
///
/// Uses the envelope identity `N_z² = −2 min J` which gives
/// `∇_z N_z² = −2 (e^{LA} w + ε‖w‖ z/‖z‖)`.
pub fn value_n(system: &ImpulseSystem<'_>, eps: f64, settings: &AscentSettings) -> Result<ValueReport> {
    check_eps(eps)?;
    let d = system.modes();
    let objective = |z: &[f64]| -> (f64, Vec<f64>) {
        match system.min_norm_value(z, eps) {
            Ok((n, w)) => {
                let z_norm = dot(z, z).sqrt();
                let w_norm = dot(&w, &w).sqrt();
                let bw = system.free_terminal_coeffs(&w);
                let grad = bw
                    .iter()
                    .zip(z)
                    .map(|(b, zi)| -2.0 * (b + eps * w_norm * zi / z_norm))
                    .collect();
                (n * n, grad)
            }
            Err(_) => (f64::NAN, vec![0.0; z.len()]),
        }
    };
    let starts: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();
    let out = maximize_on_sphere(d, objective, &starts, settings);
    if !out.value.is_finite() {
        return Err(Error::Numerical("no start produced a finite control norm".into()));
    }
    Ok(ValueReport {
        value: out.value.max(0.0).sqrt(),
        maximizer: out.argmax,
        stagnated: out.stagnated,
    })
}

/// One sampled initial state checked against `(Q_C)`.
#[derive(Debug, Clone)]
pub struct QcRow {
    pub z_norm: f64,
    pub f_norm: f64,
    pub terminal_norm: f64,
    /// `max{‖f‖/C, ‖y(T₃)‖/ε}`
    pub lhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct QcReport {
    pub c: f64,
    pub rows: Vec<QcRow>,
    /// `(Q_C)` held on every sample.
    pub qc_holds: bool,
    /// `N ≤ C` with the supplied value of `N`.
    pub n_le_c: bool,
    /// The ε-observation inequality holds with `C` (measured best constant ≤ C).
    pub inequality_holds: bool,
}

impl QcReport {
    /// The three equivalent statements agree.
    pub fn consistent(&self) -> bool {
        self.qc_holds == self.n_le_c && self.n_le_c == self.inequality_holds
    }
}

/// Check `max{‖f*‖/C, ‖y(T₃)‖/ε} ≤ ‖z‖` on each sample (modal coordinates)
/// and compare with `N ≤ C` and with the measured ε-observation constant.
pub fn verify_qc(
    system: &ImpulseSystem<'_>,
    eps: f64,
    c: f64,
    samples: &[Vec<f64>],
    value_n: f64,
    observation_constant: f64,
) -> Result<QcReport> {
    if !(c.is_finite() && c > 0.0) {
        return domain(format!("C must be positive, got {c}"));
    }
    let rows = samples
        .iter()
        .map(|z| {
            let r = system.solve_min_norm_coeffs(z, eps)?;
            let lhs = (r.f_norm / c).max(r.terminal_norm / eps);
            Ok(QcRow {
                z_norm: r.z_norm,
                f_norm: r.f_norm,
                terminal_norm: r.terminal_norm,
                lhs,
                pass: lhs <= r.z_norm * (1.0 + 1e-8),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QcReport {
        c,
        qc_holds: rows.iter().all(|r| r.pass),
        rows,
        n_le_c: value_n <= c,
        inequality_holds: observation_constant <= c,
    })
}

/// `C_ε(t, s) = e^{4s‖V‖} e^{c(1 + 1/t + t‖V‖ + ‖V‖^{2/3})} exp(√((c/t) ln⁺(1/ε)))`.
/// Reporting only: `c` is an input, not a verified constant.
pub fn cost_bound(t: f64, s: f64, eps: f64, c: f64, v_norm: f64) -> f64 {
    let ln_plus = (1.0 / eps).ln().max(0.0);
    (4.0 * s * v_norm).exp()
        * (c * (1.0 + 1.0 / t + t * v_norm + v_norm.powf(2.0 / 3.0))).exp()
        * ((c / t) * ln_plus).sqrt().exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Grid1D, PotentialField};
    use std::f64::consts::PI;

    fn setup(n: usize) -> SpectralDecomposition {
        let grid = Grid1D::new(n, PI).unwrap();
        SpectralDecomposition::new(&grid, &PotentialField::zero(&grid)).unwrap()
    }

    fn times() -> ImpulseTimes {
        ImpulseTimes::new(0.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn time_validation() {
        assert!(ImpulseTimes::new(0.0, 0.5, 0.5).is_err());
        assert!(ImpulseTimes::new(-0.1, 0.5, 1.0).is_err());
        assert!(ImpulseTimes::new(0.6, 0.5, 1.0).is_err());
    }

    #[test]
    fn second_mode_decays_freely() {
        let dec = setup(200);
        let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
        let r = eigencontrol(&dec, &mask, 1, 0.1, times()).unwrap();
        assert_eq!(r.mode, ControlMode::ZeroControl);
        assert_eq!(r.f_norm, 0.0);
        assert!((r.terminal_norm - (-4.0_f64).exp()).abs() < 1e-3 * (-4.0_f64).exp() * 4.0);
    }

    #[test]
    fn zero_state_gives_zero_control() {
        let dec = setup(60);
        let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
        let z = StateVector::zeros(dec.grid());
        let p = ImpulseProblem::new(times(), mask, z, 0.05).unwrap();
        let r = solve_min_norm(&dec, &p).unwrap();
        assert_eq!(r.mode, ControlMode::ZeroControl);
        assert_eq!(r.f_norm, 0.0);
        assert_eq!(r.terminal_norm, 0.0);
        let pen = solve_penalized(&dec, &p, 1e-4, 10.0).unwrap();
        assert_eq!(pen.f_norm, 0.0);
        assert_eq!(pen.w.norm(), 0.0);
    }

    #[test]
    fn active_first_mode_hits_sphere() {
        let dec = setup(120);
        let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
        let sys = ImpulseSystem::full(&dec, &mask, times()).unwrap();
        let r = sys.eigencontrol(0, 0.05).unwrap();
        assert_eq!(r.mode, ControlMode::Active);
        assert!((r.terminal_norm - 0.05).abs() <= 1e-8 * 0.05, "{}", r.terminal_norm);
        assert!(r.el_residual <= 1e-8 * r.free_terminal_norm);
    }

    #[test]
    fn superposition_of_one_hot_is_identity() {
        let dec = setup(80);
        let mask = SubdomainMask::new(dec.grid(), 1.8, 2.4).unwrap();
        let sys = ImpulseSystem::full(&dec, &mask, times()).unwrap();
        let controls: Vec<_> = (0..3).map(|j| sys.eigencontrol(j, 0.02).unwrap()).collect();
        let s = superpose_controls(&[1.0, 0.0, 0.0], &controls).unwrap();
        assert_eq!(s.f, controls[0].f);
        let zero = superpose_controls(&[0.0; 3], &controls).unwrap();
        assert_eq!(zero.f_norm, 0.0);
        assert_eq!(zero.terminal_norm, 0.0);
        assert!(superpose_controls(&[1.0, 2.0], &controls).is_err());

        let other = ImpulseSystem::full(&dec, &mask, ImpulseTimes::new(0.0, 0.25, 1.0).unwrap()).unwrap();
        let mixed = vec![controls[0].clone(), other.eigencontrol(1, 0.02).unwrap()];
        assert!(matches!(superpose_controls(&[1.0, 1.0], &mixed), Err(Error::Config(_))));
    }

    #[test]
    fn cost_bound_formula() {
        // V = 0, ε ≥ 1: C = e^{c(1 + 1/t)}
        assert!((cost_bound(0.5, 0.5, 2.0, 1.0, 0.0) - 3.0_f64.exp()).abs() < 1e-12);
        let v = cost_bound(1.0, 0.25, (-4.0_f64).exp(), 1.0, 1.0);
        let expect = (1.0_f64).exp() * (4.0_f64).exp() * (2.0_f64).exp();
        assert!((v - expect).abs() < 1e-9 * expect);
    }
}
