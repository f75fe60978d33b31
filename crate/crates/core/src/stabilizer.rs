//! Output feedback by periodic impulses.
//!
//! `K = #{λ_j < γ + ln 2/T}` modes are estimated from the snapshot
//! `1_{ω₁}^* y((n+½)T)` and cancelled by a jump on `ω₂` at `(n+1)T`:
//!
//! `F(p) = −Σ_{j≤K} e^{λ_j T/2} ⟨g_j, p⟩_{ω₁} f_j`
//!
//! where `g_j` steers `ξ_j` over `(T/4, T/2, 3T/4)` on `ω₁` and `f_j` steers
//! `ξ_j` over `(T/4, T, 5T/4)` on `ω₂`, both into the ε-ball.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{config, domain, Result};
use crate::impulse::{ImpulseSystem, ImpulseTimes};
use crate::spectral::{SpectralDecomposition, StateVector, SubdomainMask, SubdomainVector};

/// Multiplicative slack on every decay-type comparison.
pub const DECAY_TOL: f64 = 1e-6;

fn check_rate_and_period(gamma: f64, period: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0 && period.is_finite() && period > 0.0) {
        return domain(format!("γ and T must be positive, got γ = {gamma}, T = {period}"));
    }
    Ok(())
}

/// Number of modes with `λ_j < γ + ln 2/T`.
pub fn compute_k(decomp: &SpectralDecomposition, gamma: f64, period: f64) -> usize {
    let threshold = gamma + LN_2 / period;
    decomp.lambdas().iter().filter(|l| **l < threshold).count()
}

/// `ε = e^{−γT} e^{−‖V‖T} e^{−λ_K T/2} / (6(1+K))`; `None` when `K = 0`.
pub fn compute_eps(k: usize, lambda_k: f64, gamma: f64, period: f64, v_norm: f64) -> Option<f64> {
    (k > 0).then(|| (-gamma * period - v_norm * period - 0.5 * lambda_k * period).exp() / (6.0 * (1.0 + k as f64)))
}

/// Rank-K feedback from `L²(ω₁)` to `L²(ω₂)`.
#[derive(Debug, Clone)]
pub struct FeedbackOperator {
    pub k: usize,
    pub eps: Option<f64>,
    pub gamma: f64,
    pub period: f64,
    pub v_norm: f64,
    /// `λ_1..λ_{K+1}` (the last one only when it exists).
    pub lambdas: Vec<f64>,
    pub sensors: Vec<SubdomainVector>,
    pub actuators: Vec<SubdomainVector>,
    /// `‖y_j(3T/4)‖` for the sensor problems.
    pub sensor_terminals: Vec<f64>,
    /// `‖y_j(5T/4)‖` for the actuator problems.
    pub actuator_terminals: Vec<f64>,
    pub op_norm: f64,
    mask_w1: SubdomainMask,
    mask_w2: SubdomainMask,
}

impl FeedbackOperator {
    pub fn mask_w1(&self) -> &SubdomainMask {
        &self.mask_w1
    }

    pub fn mask_w2(&self) -> &SubdomainMask {
        &self.mask_w2
    }

    /// `e^{λ_j T/2}`, j ≤ K.
    pub fn gains(&self) -> Vec<f64> {
        self.lambdas[..self.k]
            .iter()
            .map(|l| (0.5 * l * self.period).exp())
            .collect()
    }

    /// `b_j = −e^{λ_j T/2} ⟨g_j, p⟩_{ω₁}`
    pub fn coefficients(&self, p: &SubdomainVector) -> Result<Vec<f64>> {
        if p.len() != self.mask_w1.len() {
            return config(format!(
                "observation has {} entries, ω₁ has {}",
                p.len(),
                self.mask_w1.len()
            ));
        }
        Ok(self
            .sensors
            .iter()
            .zip(self.gains())
            .map(|(g, c)| -c * g.inner(p))
            .collect())
    }

    /// `F(p) = Σ b_j f_j`
    pub fn apply(&self, p: &SubdomainVector) -> Result<SubdomainVector> {
        let b = self.coefficients(p)?;
        let mut out = SubdomainVector::zeros(&self.mask_w2);
        for (bj, f) in b.iter().zip(&self.actuators) {
            out.axpy(*bj, f);
        }
        Ok(out)
    }

    /// `e^{λ_K T/2} √(Σ‖g_j‖²) √(Σ‖f_j‖²)`
    pub fn product_bound(&self) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        let sg: f64 = self.sensors.iter().map(|g| g.norm().powi(2)).sum();
        let sf: f64 = self.actuators.iter().map(|f| f.norm().powi(2)).sum();
        (0.5 * self.lambdas[self.k - 1] * self.period).exp() * sg.sqrt() * sf.sqrt()
    }

    /// `e^{λ_K T/2} K max‖g_j‖ max‖f_j‖`
    pub fn max_bound(&self) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        let mg = self.sensors.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let mf = self.actuators.iter().map(|f| f.norm()).fold(0.0, f64::max);
        (0.5 * self.lambdas[self.k - 1] * self.period).exp() * self.k as f64 * mg * mf
    }
}

fn gram_of(v: &[SubdomainVector]) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), v.len(), |i, j| v[i].inner(&v[j]))
}

/// Exact norm of `p ↦ Σ c_j ⟨g_j, p⟩ f_j`: with `Φ_g = R Rᵀ` it is
/// `√λ_max(Rᵀ C Φ_f C R)`.
fn rank_k_norm(sensors: &[SubdomainVector], actuators: &[SubdomainVector], gains: &[f64]) -> f64 {
    if sensors.is_empty() {
        return 0.0;
    }
    let eig = SymmetricEigen::new(gram_of(sensors));
    let k = sensors.len();
    let r = DMatrix::from_fn(k, k, |i, j| {
        eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
    });
    let c = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(gains));
    let inner = r.transpose() * &c * gram_of(actuators) * &c * &r;
    let inner = (&inner + inner.transpose()) * 0.5;
    SymmetricEigen::new(inner).eigenvalues.max().max(0.0).sqrt()
}

/// Build `F` with K and ε from the spectrum, running `2K` eigencontrols.
pub fn build_feedback(
    decomp: &SpectralDecomposition,
    mask_w1: &SubdomainMask,
    mask_w2: &SubdomainMask,
    gamma: f64,
    period: f64,
) -> Result<FeedbackOperator> {
    check_rate_and_period(gamma, period)?;
    if mask_w1.grid() != decomp.grid() || mask_w2.grid() != decomp.grid() {
        return config("masks and decomposition live on different grids");
    }
    let k = compute_k(decomp, gamma, period);
    let v_norm = decomp.potential_sup();
    let lambdas = decomp.lambdas()[..(k + 1).min(decomp.len())].to_vec();
    let eps = compute_eps(k, if k > 0 { lambdas[k - 1] } else { 0.0 }, gamma, period, v_norm);

    let (mut sensors, mut actuators) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let (mut sensor_terminals, mut actuator_terminals) = (Vec::with_capacity(k), Vec::with_capacity(k));
    if let Some(eps) = eps {
        let q = 0.25 * period;
        let sensor_sys = ImpulseSystem::full(decomp, mask_w1, ImpulseTimes::new(q, 2.0 * q, 3.0 * q)?)?;
        let actuator_sys = ImpulseSystem::full(decomp, mask_w2, ImpulseTimes::new(q, 4.0 * q, 5.0 * q)?)?;
        for j in 0..k {
            let g = sensor_sys
                .eigencontrol(j, eps)
                .map_err(|e| e.context(format!("sensor for mode {}", j + 1)))?;
            let f = actuator_sys
                .eigencontrol(j, eps)
                .map_err(|e| e.context(format!("actuator for mode {}", j + 1)))?;
            sensor_terminals.push(g.terminal_norm);
            actuator_terminals.push(f.terminal_norm);
            sensors.push(g.f);
            actuators.push(f.f);
        }
    }
    let gains: Vec<f64> = lambdas[..k].iter().map(|l| (0.5 * l * period).exp()).collect();
    let op_norm = rank_k_norm(&sensors, &actuators, &gains);
    Ok(FeedbackOperator {
        k,
        eps,
        gamma,
        period,
        v_norm,
        lambdas,
        sensors,
        actuators,
        sensor_terminals,
        actuator_terminals,
        op_norm,
        mask_w1: mask_w1.clone(),
        mask_w2: mask_w2.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct ClosedLoopConfig {
    pub gamma: f64,
    pub period: f64,
    pub mask_w1: SubdomainMask,
    pub mask_w2: SubdomainMask,
    pub y0: StateVector,
    pub n_periods: usize,
    /// Extra equispaced samples per period for the envelope check.
    pub dense_per_period: usize,
}

impl ClosedLoopConfig {
    pub fn new(
        gamma: f64,
        period: f64,
        mask_w1: SubdomainMask,
        mask_w2: SubdomainMask,
        y0: StateVector,
        n_periods: usize,
    ) -> Result<Self> {
        check_rate_and_period(gamma, period)?;
        if n_periods == 0 {
            return config("at least one period is required");
        }
        if y0.grid() != mask_w1.grid() || y0.grid() != mask_w2.grid() {
            return config("initial state and masks live on different grids");
        }
        Ok(Self {
            gamma,
            period,
            mask_w1,
            mask_w2,
            y0,
            n_periods,
            dense_per_period: 20,
        })
    }

    pub fn with_dense(mut self, dense_per_period: usize) -> Self {
        self.dense_per_period = dense_per_period;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Initial,
    /// `L_n = nT + T/4`
    Checkpoint,
    /// `(n+½)T`
    Observation,
    /// `(n+1)T₋`
    PreJump,
    /// `(n+1)T`
    PostJump,
    Dense,
}

impl SampleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleKind::Initial => "initial",
            SampleKind::Checkpoint => "checkpoint",
            SampleKind::Observation => "observation",
            SampleKind::PreJump => "pre_jump",
            SampleKind::PostJump => "jump",
            SampleKind::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub kind: SampleKind,
    /// Period index `n` of the window `[L_n, L_{n+1})` (0 before `L_0`).
    pub period: usize,
    pub state: StateVector,
}

#[derive(Debug, Clone)]
pub struct ControlEvent {
    /// Jump at `time = jump·T`.
    pub jump: usize,
    pub time: f64,
    pub observation: SubdomainVector,
    pub coefficients: Vec<f64>,
    pub control: SubdomainVector,
    pub control_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub period: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<ControlEvent>,
    /// `y(L_n)`, n = 0..=N.
    pub checkpoints: Vec<StateVector>,
    /// `y((n+½)T)`, n = 0..N.
    pub observed: Vec<StateVector>,
    /// `‖y(L_{n+1})‖ / ‖y(L_n)‖` (0 when `y(L_n) = 0`).
    pub ratios: Vec<f64>,
}

impl Trajectory {
    pub fn y0(&self) -> &StateVector {
        &self.samples[0].state
    }
}

/// Jump at `(n+1)T`: only the restriction of `observed` to ω₁ enters.
pub fn impulse_jump(
    feedback: &FeedbackOperator,
    pre_jump: &StateVector,
    observed: &StateVector,
) -> Result<(StateVector, Vec<f64>, SubdomainVector, SubdomainVector)> {
    let snapshot = feedback.mask_w1().restrict(observed)?;
    let b = feedback.coefficients(&snapshot)?;
    let control = feedback.apply(&snapshot)?;
    let post = pre_jump + &feedback.mask_w2().extend(&control)?;
    Ok((post, b, snapshot, control))
}

/// Simulate the closed loop over `n_periods` windows `[L_n, L_{n+1}]`.
pub fn simulate_closed_loop(
    decomp: &SpectralDecomposition,
    feedback: &FeedbackOperator,
    cfg: &ClosedLoopConfig,
) -> Result<Trajectory> {
    if feedback.mask_w1() != &cfg.mask_w1 || feedback.mask_w2() != &cfg.mask_w2 {
        return config("feedback operator was built for different masks");
    }
    if (feedback.period - cfg.period).abs() > 1e-15 * cfg.period {
        return config("feedback operator was built for a different period");
    }
    let t = cfg.period;
    let q = 0.25 * t;
    let mut samples = vec![Sample {
        t: 0.0,
        kind: SampleKind::Initial,
        period: 0,
        state: cfg.y0.clone(),
    }];
    let mut y_l = decomp.propagate(&cfg.y0, q)?;
    samples.push(Sample {
        t: q,
        kind: SampleKind::Checkpoint,
        period: 0,
        state: y_l.clone(),
    });
    let mut checkpoints = vec![y_l.clone()];
    let mut observed = Vec::with_capacity(cfg.n_periods);
    let mut events = Vec::with_capacity(cfg.n_periods);
    let mut ratios = Vec::with_capacity(cfg.n_periods);

    for n in 0..cfg.n_periods {
        let l_n = n as f64 * t + q;
        let jump_t = (n + 1) as f64 * t;
        let y_obs = decomp.propagate(&y_l, q)?;
        let y_pre = decomp.propagate(&y_obs, 2.0 * q)?;
        let (y_post, coefficients, snapshot, control) = impulse_jump(feedback, &y_pre, &y_obs)?;
        let y_next = decomp.propagate(&y_post, q)?;

        let mut period_samples = vec![
            (l_n + q, SampleKind::Observation, y_obs.clone()),
            (jump_t, SampleKind::PreJump, y_pre),
            (jump_t, SampleKind::PostJump, y_post.clone()),
            (jump_t + q, SampleKind::Checkpoint, y_next.clone()),
        ];
        for i in 1..=cfg.dense_per_period {
            let s = l_n + t * i as f64 / (cfg.dense_per_period + 1) as f64;
            let state = if s < l_n + q {
                decomp.propagate(&y_l, s - l_n)?
            } else if s < jump_t {
                decomp.propagate(&y_obs, s - l_n - q)?
            } else {
                decomp.propagate(&y_post, s - jump_t)?
            };
            period_samples.push((s, SampleKind::Dense, state));
        }
        period_samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        samples.extend(period_samples.into_iter().map(|(t, kind, state)| Sample {
            t,
            kind,
            period: n,
            state,
        }));

        let prev = y_l.norm();
        ratios.push(if prev > 0.0 { y_next.norm() / prev } else { 0.0 });
        events.push(ControlEvent {
            jump: n + 1,
            time: jump_t,
            observation: snapshot,
            coefficients,
            control_norm: control.norm(),
            control,
        });
        observed.push(y_obs);
        checkpoints.push(y_next.clone());
        y_l = y_next;
    }
    Ok(Trajectory {
        period: t,
        samples,
        events,
        checkpoints,
        observed,
        ratios,
    })
}

/// Per-period contraction and the three-part split of `y(L_{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodCheck {
    pub n: usize,
    pub ratio: f64,
    pub ratio_pass: bool,
    pub tilde_norm: f64,
    pub tilde_bound: f64,
    pub hat_norm: f64,
    pub hat_bound: f64,
    pub bar_norm: f64,
    pub bar_bound: f64,
    /// `‖ỹ + ŷ + ȳ − y(L_{n+1})‖ / ‖y(L_n)‖`
    pub split_defect: f64,
    pub split_pass: bool,
}

impl PeriodCheck {
    pub fn pass(&self) -> bool {
        self.ratio_pass && self.split_pass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosingIdentities {
    /// `e^{−λ_{K+1}T}` (0 when every mode is below the threshold).
    pub tail: f64,
    /// `½ e^{−γT}`
    pub half_rate: f64,
    pub tail_pass: bool,
    /// `3 e^{‖V‖T} e^{λ_K T/2} (1+K) ε`, `None` for K = 0.
    pub balance: Option<f64>,
    pub balance_rel_err: f64,
    pub balance_pass: bool,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub rate_bound: f64,
    pub periods: Vec<PeriodCheck>,
    /// `e^{T(γ+‖V‖)} (1 + ‖F‖)`
    pub envelope_constant: f64,
    /// `max_t ‖y(t)‖ / (C e^{−γt} ‖y0‖)`
    pub envelope_max_ratio: f64,
    pub envelope_pass: bool,
    pub closing: ClosingIdentities,
}

impl DecayReport {
    pub fn contraction_pass(&self) -> bool {
        self.periods.iter().all(|p| p.ratio_pass)
    }

    pub fn ledger_pass(&self) -> bool {
        self.periods.iter().all(|p| p.split_pass) && self.closing.tail_pass && self.closing.balance_pass
    }

    pub fn all_pass(&self) -> bool {
        self.contraction_pass() && self.ledger_pass() && self.envelope_pass
    }
}

/// Closing identities of the choice of K and ε, as formula evaluations.
pub fn closing_identities(feedback: &FeedbackOperator) -> ClosingIdentities {
    let t = feedback.period;
    let half_rate = 0.5 * (-feedback.gamma * t).exp();
    let tail = feedback.lambdas.get(feedback.k).map_or(0.0, |l| (-l * t).exp());
    let balance = feedback.eps.map(|eps| {
        3.0 * (feedback.v_norm * t).exp()
            * (0.5 * feedback.lambdas[feedback.k - 1] * t).exp()
            * (1.0 + feedback.k as f64)
            * eps
    });
    let balance_rel_err = balance.map_or(0.0, |b| (b - half_rate).abs() / half_rate);
    ClosingIdentities {
        tail,
        half_rate,
        tail_pass: tail <= half_rate,
        balance,
        balance_rel_err,
        balance_pass: balance_rel_err <= 1e-12,
    }
}

/// Check a simulated trajectory against the contraction rate, the global
/// envelope and the per-period three-part estimates.
pub fn decay_report(
    decomp: &SpectralDecomposition,
    feedback: &FeedbackOperator,
    traj: &Trajectory,
) -> Result<DecayReport> {
    let t = feedback.period;
    let gamma = feedback.gamma;
    let v = feedback.v_norm;
    let k = feedback.k;
    let rate_bound = (-gamma * t).exp();
    let eps = feedback.eps.unwrap_or(0.0);
    let sqrt_k = (k as f64).sqrt();
    let gain_k = if k > 0 {
        (0.5 * feedback.lambdas[k - 1] * t).exp()
    } else {
        0.0
    };
    let tail = feedback.lambdas.get(k).map_or(0.0, |l| (-l * t).exp());
    let slack = 1.0 + DECAY_TOL;

    let mut periods = Vec::with_capacity(traj.ratios.len());
    for (n, event) in traj.events.iter().enumerate() {
        let y_l = &traj.checkpoints[n];
        let y_next = &traj.checkpoints[n + 1];
        let y_norm = y_l.norm();
        let a = decomp.coefficients(y_l);
        let b = &event.coefficients;

        let mut low_b = vec![0.0; decomp.len()];
        let mut low_ab = vec![0.0; decomp.len()];
        for j in 0..k {
            low_b[j] = b[j];
            low_ab[j] = a[j] - b[j];
        }
        let tilde_pre = decomp.propagate(&decomp.synthesize(&low_b), 0.75 * t)?;
        let tilde = decomp.propagate(&(&tilde_pre + &feedback.mask_w2().extend(&event.control)?), 0.25 * t)?;
        let hat = decomp.propagate(&decomp.synthesize(&low_ab), t)?;
        let bar = decomp.propagate(&decomp.project_high(y_l, k)?, t)?;
        let sum = &(&tilde + &hat) + &bar;
        let split_defect = if y_norm > 0.0 {
            (&sum - y_next).norm() / y_norm
        } else {
            0.0
        };

        let tilde_bound = eps * sqrt_k * (sqrt_k * gain_k * eps + 1.0) * y_norm;
        let hat_bound = (v * t).exp() * sqrt_k * gain_k * eps * y_norm;
        let bar_bound = tail * y_norm;
        let abs = 1e-14 * y_norm;
        let ratio = traj.ratios[n];
        periods.push(PeriodCheck {
            n,
            ratio,
            ratio_pass: ratio <= rate_bound * slack,
            split_pass: tilde.norm() <= tilde_bound * slack + abs
                && hat.norm() <= hat_bound * slack + abs
                && bar.norm() <= bar_bound * slack + abs
                && split_defect <= 1e-10,
            tilde_norm: tilde.norm(),
            tilde_bound,
            hat_norm: hat.norm(),
            hat_bound,
            bar_norm: bar.norm(),
            bar_bound,
            split_defect,
        });
    }

    let envelope_constant = (t * (gamma + v)).exp() * (1.0 + feedback.op_norm);
    let y0 = traj.y0().norm();
    let envelope_max_ratio = traj
        .samples
        .iter()
        .map(|s| {
            let cap = envelope_constant * (-gamma * s.t).exp() * y0;
            if cap > 0.0 {
                s.state.norm() / cap
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(DecayReport {
        rate_bound,
        periods,
        envelope_constant,
        envelope_max_ratio,
        envelope_pass: envelope_max_ratio <= slack,
        closing: closing_identities(feedback),
    })
}
