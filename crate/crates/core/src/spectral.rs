//! Finite-difference discretisation of `A = Δ − V` on `(0, ℓ)` with Dirichlet
//! conditions, its eigenpairs, the semigroup `e^{tA}`, and the subdomain
//! restriction/extension operators.
//!
//! All inner products are h-weighted, `⟨u, v⟩ = h Σ u_i v_i`, so that discrete
//! norms approximate `L²` norms and constants are comparable across meshes.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{config, domain, Error, Result};

/// Uniform grid of `n` interior nodes `x_i = (i + 1) h`, `h = ℓ / (n + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    length: f64,
    h: f64,
}

impl Grid1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 2 {
            return config(format!("grid needs at least 2 interior nodes, got {n}"));
        }
        if !(length.is_finite() && length > 0.0) {
            return config(format!("domain length must be positive, got {length}"));
        }
        Ok(Self {
            n,
            length,
            h: length / (n as f64 + 1.0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of interior node `i` (0-based).
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.h
    }
}

/// Potential `V` sampled at the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    values: Vec<f64>,
    sup_norm: f64,
}

impl PotentialField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return config("potential values must be finite");
        }
        let sup_norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self { values, sup_norm })
    }

    pub fn zero(grid: &Grid1D) -> Self {
        Self {
            values: vec![0.0; grid.n()],
            sup_norm: 0.0,
        }
    }

    pub fn constant(grid: &Grid1D, value: f64) -> Result<Self> {
        Self::new(vec![value; grid.n()])
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..grid.n()).map(|i| f(grid.node(i))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `‖V‖_∞` over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// The symmetric tridiagonal matrix of `−A = −Δ_h + V`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    grid: Grid1D,
    diag: Vec<f64>,
    off: Vec<f64>,
    potential_sup: f64,
}

impl TridiagonalOperator {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Sub/super diagonal, length `n − 1`.
    pub fn off_diag(&self) -> &[f64] {
        &self.off
    }

    pub fn potential_sup(&self) -> f64 {
        self.potential_sup
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
        }
        m
    }
}

/// Three-point stencil for `−A`: diagonal `2/h² + V_i`, off-diagonal `−1/h²`.
pub fn assemble_operator(grid: &Grid1D, potential: &PotentialField) -> Result<TridiagonalOperator> {
    if potential.values().len() != grid.n() {
        return config(format!(
            "potential has {} values but the grid has {} interior nodes",
            potential.values().len(),
            grid.n()
        ));
    }
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    Ok(TridiagonalOperator {
        grid: *grid,
        diag: potential.values().iter().map(|v| 2.0 * inv_h2 + v).collect(),
        off: vec![-inv_h2; grid.n() - 1],
        potential_sup: potential.sup_norm(),
    })
}

/// A grid function in `L²(Ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    grid: Grid1D,
    values: Vec<f64>,
}

impl StateVector {
    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.n()],
        }
    }

    pub fn from_values(grid: &Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return config(format!(
                "state has {} values but the grid has {} interior nodes",
                values.len(),
                grid.n()
            ));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: *grid,
            values: (0..grid.n()).map(|i| f(grid.node(i))).collect(),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inner(&self, other: &StateVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.grid.h() * dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> StateVector {
        StateVector {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &StateVector) {
        debug_assert_eq!(self.len(), x.len());
        for (s, xi) in self.values.iter_mut().zip(&x.values) {
            *s += alpha * xi;
        }
    }
}

impl Add for &StateVector {
    type Output = StateVector;

    fn add(self, rhs: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &StateVector {
    type Output = StateVector;

    fn sub(self, rhs: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &StateVector {
    type Output = StateVector;

    fn mul(self, rhs: f64) -> StateVector {
        self.scaled(rhs)
    }
}

/// A grid function on the nodes of a subdomain, element of `L²(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainVector {
    h: f64,
    values: Vec<f64>,
}

impl SubdomainVector {
    pub fn new(h: f64, values: Vec<f64>) -> Self {
        Self { h, values }
    }

    pub fn zeros(mask: &SubdomainMask) -> Self {
        Self {
            h: mask.grid.h(),
            values: vec![0.0; mask.len()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `⟨u, v⟩_ω`
    pub fn inner(&self, other: &SubdomainVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.h * dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> SubdomainVector {
        SubdomainVector {
            h: self.h,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, x: &SubdomainVector) {
        debug_assert_eq!(self.len(), x.len());
        for (s, xi) in self.values.iter_mut().zip(&x.values) {
            *s += alpha * xi;
        }
    }
}

/// An observation/control window `ω = (a, b)` and the interior nodes inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMask {
    grid: Grid1D,
    a: f64,
    b: f64,
    indices: Vec<usize>,
}

impl SubdomainMask {
    pub fn new(grid: &Grid1D, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || b > grid.length() || a >= b {
            return config(format!(
                "interval ({a}, {b}) is not a non-empty subinterval of (0, {})",
                grid.length()
            ));
        }
        let indices: Vec<usize> = (0..grid.n())
            .filter(|&i| {
                let x = grid.node(i);
                x > a && x < b
            })
            .collect();
        if indices.is_empty() {
            return config(format!(
                "interval ({a}, {b}) contains no interior node at h = {}",
                grid.h()
            ));
        }
        Ok(Self {
            grid: *grid,
            a,
            b,
            indices,
        })
    }

    /// `ω = Ω`.
    pub fn full(grid: &Grid1D) -> Self {
        Self {
            grid: *grid,
            a: 0.0,
            b: grid.length(),
            indices: (0..grid.n()).collect(),
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `1_ω^*`: read the entries on the window.
    pub fn restrict(&self, u: &StateVector) -> Result<SubdomainVector> {
        if u.len() != self.grid.n() {
            return config(format!(
                "cannot restrict a state of length {} with a mask on {} nodes",
                u.len(),
                self.grid.n()
            ));
        }
        Ok(SubdomainVector {
            h: self.grid.h(),
            values: self.indices.iter().map(|&i| u.values[i]).collect(),
        })
    }

    /// `1_ω`: zero extension to the whole domain.
    pub fn extend(&self, f: &SubdomainVector) -> Result<StateVector> {
        if f.len() != self.len() {
            return config(format!(
                "subdomain array has length {} but the mask covers {} nodes",
                f.len(),
                self.len()
            ));
        }
        let mut out = StateVector::zeros(&self.grid);
        for (&i, v) in self.indices.iter().zip(&f.values) {
            out.values[i] = *v;
        }
        Ok(out)
    }

    /// Multiplication by the indicator `χ_ω`.
    pub fn apply_indicator(&self, u: &StateVector) -> Result<StateVector> {
        self.extend(&self.restrict(u)?)
    }
}

/// Eigenpairs `(λ_j, ξ_j)` of `−A`, ascending, with `ξ_j` orthonormal in the
/// h-weighted product and the first significant entry of each mode positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: Grid1D,
    lambdas: Vec<f64>,
    /// Column `j` holds the nodal values of `ξ_j`.
    modes: DMatrix<f64>,
    m_nonpos: usize,
    potential_sup: f64,
}

pub fn eigendecompose(op: &TridiagonalOperator) -> Result<SpectralDecomposition> {
    let n = op.diag().len();
    let max_iter = 1000 * n;
    let eig = SymmetricEigen::try_new(op.to_dense(), f64::EPSILON, max_iter).ok_or_else(|| {
        Error::Numerical(format!(
            "symmetric eigensolver did not converge within {max_iter} iterations (n = {n})"
        ))
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let scale = 1.0 / op.grid().h().sqrt();
    let mut modes = DMatrix::zeros(n, n);
    let mut lambdas = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        lambdas.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let peak = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let sign = col.iter().find(|v| v.abs() > 1e-8 * peak).map_or(1.0, |v| v.signum());
        for i in 0..n {
            modes[(i, dst)] = sign * scale * col[i];
        }
    }
    let m_nonpos = lambdas.iter().filter(|&&l| l <= 0.0).count();
    Ok(SpectralDecomposition {
        grid: *op.grid(),
        lambdas,
        modes,
        m_nonpos,
        potential_sup: op.potential_sup(),
    })
}

impl SpectralDecomposition {
    /// Convenience: assemble and diagonalise in one step.
    pub fn new(grid: &Grid1D, potential: &PotentialField) -> Result<Self> {
        eigendecompose(&assemble_operator(grid, potential)?)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `λ_{j+1}` (0-based index).
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambdas[j]
    }

    /// `card{j : λ_j ≤ 0}`
    pub fn m_nonpos(&self) -> usize {
        self.m_nonpos
    }

    /// `‖V‖_∞` of the potential the operator was built from.
    pub fn potential_sup(&self) -> f64 {
        self.potential_sup
    }

    pub fn mode_matrix(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// `ξ_{j+1}` as a state (0-based index).
    pub fn mode(&self, j: usize) -> StateVector {
        StateVector {
            grid: self.grid,
            values: self.modes.column(j).iter().copied().collect(),
        }
    }

    /// `(⟨u, ξ_j⟩)_j` for all modes.
    pub fn coefficients(&self, u: &StateVector) -> Vec<f64> {
        let v = DVector::from_column_slice(u.values());
        let c = self.modes.tr_mul(&v) * self.grid.h();
        c.iter().copied().collect()
    }

    /// `Σ_j c_j ξ_j` over the leading `c.len()` modes.
    pub fn synthesize(&self, coeffs: &[f64]) -> StateVector {
        let m = coeffs.len();
        let c = DVector::from_column_slice(coeffs);
        let v = self.modes.columns(0, m) * c;
        StateVector {
            grid: self.grid,
            values: v.iter().copied().collect(),
        }
    }

    /// `e^{−λ_j t}` for the leading `modes` eigenvalues.
    pub fn decay_factors(&self, t: f64, modes: usize) -> Vec<f64> {
        self.lambdas[..modes].iter().map(|l| (-l * t).exp()).collect()
    }

    /// `e^{tA} z = Σ e^{−λ_j t} ⟨z, ξ_j⟩ ξ_j`, valid for growing modes too.
    pub fn propagate(&self, z: &StateVector, t: f64) -> Result<StateVector> {
        if !(t >= 0.0 && t.is_finite()) {
            return domain(format!("propagation time must be non-negative, got {t}"));
        }
        if t == 0.0 {
            return Ok(z.clone());
        }
        let mut c = self.coefficients(z);
        for (cj, l) in c.iter_mut().zip(&self.lambdas) {
            *cj *= (-l * t).exp();
        }
        Ok(self.synthesize(&c))
    }

    /// Projection onto `span{ξ_{K+1}, …}`.
    pub fn project_high(&self, u: &StateVector, k: usize) -> Result<StateVector> {
        if k > self.len() {
            return domain(format!("projection index {k} exceeds the {} modes", self.len()));
        }
        let mut c = self.coefficients(u);
        c[..k].iter_mut().for_each(|v| *v = 0.0);
        Ok(self.synthesize(&c))
    }

    /// `[⟨ξ_i, ξ_j⟩_ω]` for `i, j < modes`.
    pub fn masked_gram(&self, mask: &SubdomainMask, modes: usize) -> DMatrix<f64> {
        let rows = self.modes.select_rows(mask.indices());
        let block = rows.columns(0, modes);
        block.tr_mul(&block) * self.grid.h()
    }

    /// `[⟨ξ_i, ξ_j⟩]` for `i, j < modes`; the identity up to roundoff.
    pub fn gram(&self, modes: usize) -> DMatrix<f64> {
        let block = self.modes.columns(0, modes);
        block.tr_mul(&block) * self.grid.h()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
