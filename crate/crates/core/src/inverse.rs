//! Approximate recovery of the leading spectral coefficients of `φ(T₁)` from
//! one restricted snapshot `1_{ω₁}^* φ(T₁ + T₃ − T₂)`.
//!
//! With `g_j` the minimal-norm control steering `ξ_j` into the ε-ball,
//! `â_j = −e^{(T₃−T₁)λ_j} ⟨g_j, snapshot⟩` and
//! `|a_j − â_j| ≤ e^{(T₃−T₁)λ_j} ε ‖φ(T₁)‖`.

use crate::error::{config, Result};
use crate::impulse::{ControlResult, ImpulseSystem, ImpulseTimes};
use crate::spectral::{SpectralDecomposition, StateVector, SubdomainMask, SubdomainVector};

/// Relative slack on the per-mode error bound.
const BOUND_SLACK: f64 = 1e-8;

/// Precomputed sensors `g_1..g_K` for a fixed window, time triple and ε.
#[derive(Debug, Clone)]
pub struct Reconstructor<'a> {
    decomp: &'a SpectralDecomposition,
    mask: SubdomainMask,
    times: ImpulseTimes,
    eps: f64,
    controls: Vec<ControlResult>,
}

impl<'a> Reconstructor<'a> {
    pub fn new(
        decomp: &'a SpectralDecomposition,
        mask_w1: &SubdomainMask,
        times: ImpulseTimes,
        eps: f64,
        k: usize,
    ) -> Result<Self> {
        if k == 0 || k > decomp.len() {
            return config(format!("K must be in 1..={} for this grid, got {k}", decomp.len()));
        }
        let system = ImpulseSystem::full(decomp, mask_w1, times)?;
        let controls = (0..k)
            .map(|j| system.eigencontrol(j, eps))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            decomp,
            mask: mask_w1.clone(),
            times,
            eps,
            controls,
        })
    }

    pub fn k(&self) -> usize {
        self.controls.len()
    }

    pub fn sensors(&self) -> impl Iterator<Item = &SubdomainVector> {
        self.controls.iter().map(|c| &c.f)
    }

    pub fn controls(&self) -> &[ControlResult] {
        &self.controls
    }

    /// The single observation time `T₁ + T₃ − T₂`.
    pub fn observation_time(&self) -> f64 {
        self.times.t1 + self.times.control_horizon()
    }

    /// `1_{ω₁}^* φ(T₁ + T₃ − T₂)` for the free evolution started from `φ(T₁)`.
    pub fn observe(&self, phi_t1: &StateVector) -> Result<SubdomainVector> {
        self.mask
            .restrict(&self.decomp.propagate(phi_t1, self.times.control_horizon())?)
    }

    /// `e^{(T₃−T₁)λ_j}` for the reconstructed modes.
    pub fn amplification(&self) -> Vec<f64> {
        let l = self.times.free_horizon();
        (0..self.k()).map(|j| (l * self.decomp.lambda(j)).exp()).collect()
    }

    /// Coefficient estimates from a restricted snapshot alone.
    pub fn estimate(&self, snapshot: &SubdomainVector) -> Result<Vec<f64>> {
        if snapshot.len() != self.mask.len() {
            return config(format!(
                "snapshot has {} entries, the observation window has {}",
                snapshot.len(),
                self.mask.len()
            ));
        }
        Ok(self
            .controls
            .iter()
            .zip(self.amplification())
            .map(|(c, amp)| -amp * c.f.inner(snapshot))
            .collect())
    }

    /// Full report against a known `φ(T₁)`.
    pub fn report(&self, phi_t1: &StateVector) -> Result<ReconstructionReport> {
        let snapshot = self.observe(phi_t1)?;
        let estimates = self.estimate(&snapshot)?;
        let phi_norm = phi_t1.norm();
        let phi_t3 = self.decomp.propagate(phi_t1, self.times.free_horizon())?;
        let coeffs = self.decomp.coefficients(phi_t1);
        let amp = self.amplification();

        let mut modes = Vec::with_capacity(self.k());
        for (j, c) in self.controls.iter().enumerate() {
            let bound = amp[j] * self.eps * phi_norm;
            let error = (coeffs[j] - estimates[j]).abs();
            let lhs = c.terminal.inner(phi_t1);
            let free = self.decomp.mode(j).inner(&phi_t3);
            let observed = c.f.inner(&snapshot);
            // Cauchy–Schwarz magnitudes of the three pairings
            let scale = phi_norm * c.terminal.norm() + phi_t3.norm() + c.f.norm() * snapshot.norm();
            let defect = lhs - free - observed;
            modes.push(ModeEstimate {
                j: j + 1,
                lambda: self.decomp.lambda(j),
                true_coeff: coeffs[j],
                estimate: estimates[j],
                error,
                bound,
                pass: error <= bound * (1.0 + BOUND_SLACK),
                informative: bound <= phi_norm,
                duality_defect: if scale > 0.0 { defect.abs() / scale } else { 0.0 },
            });
        }
        Ok(ReconstructionReport {
            k: self.k(),
            eps: self.eps,
            observation_time: self.observation_time(),
            modes,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeEstimate {
    /// 1-based mode index.
    pub j: usize,
    pub lambda: f64,
    pub true_coeff: f64,
    pub estimate: f64,
    pub error: f64,
    /// `e^{(T₃−T₁)λ_j} ε ‖φ(T₁)‖`
    pub bound: f64,
    pub pass: bool,
    /// `false` when the bound exceeds `‖φ(T₁)‖` and says nothing.
    pub informative: bool,
    /// Defect of `⟨y_j(T₃), φ(T₁)⟩ = ⟨ξ_j, φ(T₃)⟩ + ⟨g_j, snapshot⟩` relative
    /// to `‖y_j(T₃)‖‖φ(T₁)‖ + ‖φ(T₃)‖ + ‖g_j‖‖snapshot‖`.
    pub duality_defect: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub k: usize,
    pub eps: f64,
    pub observation_time: f64,
    pub modes: Vec<ModeEstimate>,
}

impl ReconstructionReport {
    pub fn all_pass(&self) -> bool {
        self.modes.iter().all(|m| m.pass)
    }

    pub fn max_duality_defect(&self) -> f64 {
        self.modes.iter().map(|m| m.duality_defect).fold(0.0, f64::max)
    }
}

/// Build the sensors and reconstruct the first `k` coefficients of `φ(T₁)`.
pub fn reconstruct(
    decomp: &SpectralDecomposition,
    mask_w1: &SubdomainMask,
    phi_t1: &StateVector,
    times: ImpulseTimes,
    eps: f64,
    k: usize,
) -> Result<ReconstructionReport> {
    Reconstructor::new(decomp, mask_w1, times, eps, k)?.report(phi_t1)
}
