use std::f64::consts::PI;

use impulse_core::impulse::{
    eigencontrol, solve_min_norm, superpose_controls, value_n, verify_qc, ControlMode, ImpulseProblem, ImpulseSystem,
    ImpulseTimes,
};
use impulse_core::observation::eps_constant_in;
use impulse_core::optimize::{random_unit, rng_for, AscentSettings};
use impulse_core::{Grid1D, PotentialField, SpectralDecomposition, StateVector, SubdomainMask};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn decomp(n: usize, v: f64) -> SpectralDecomposition {
    let grid = Grid1D::new(n, PI).unwrap();
    SpectralDecomposition::new(&grid, &PotentialField::constant(&grid, v).unwrap()).unwrap()
}

fn times() -> ImpulseTimes {
    ImpulseTimes::new(0.0, 0.5, 1.0).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `G` assembled from restricted modes, independently of the solver.
fn oracle_gram(dec: &SpectralDecomposition, mask: &SubdomainMask, s: f64, d: usize) -> DMatrix<f64> {
    let r: Vec<_> = (0..d).map(|j| mask.restrict(&dec.mode(j)).unwrap()).collect();
    DMatrix::from_fn(d, d, |i, j| {
        (-(dec.lambda(i) + dec.lambda(j)) * s).exp() * r[i].inner(&r[j])
    })
}

struct Sweep {
    gram: DMatrix<f64>,
    b: DVector<f64>,
    target: f64,
}

impl Sweep {
    /// `(feasible, ‖f‖)` at shift μ by a dense LU solve.
    fn at(&self, mu: f64) -> (bool, f64) {
        let d = self.b.len();
        let m = &self.gram + DMatrix::identity(d, d) * mu;
        let w = -m.lu().solve(&self.b).unwrap();
        let gw = &self.gram * &w;
        let y = &self.b + &gw;
        (y.norm() <= self.target, w.dot(&gw).max(0.0).sqrt())
    }

    /// Minimal feasible norm over 10⁴ log-spaced shifts, then bisection on
    /// feasibility between the last feasible and first infeasible shift.
    fn min_norm(&self) -> f64 {
        let (lo_exp, hi_exp) = (-16.0, 4.0);
        let count = 10_000;
        let mus: Vec<f64> = (0..count)
            .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (count - 1) as f64))
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, mu) in mus.iter().enumerate() {
            let (ok, f) = self.at(*mu);
            if ok && best.is_none_or(|(_, b)| f < b) {
                best = Some((i, f));
            }
        }
        let (i, mut f) = best.expect("some shift is feasible");
        if i + 1 < count {
            let (mut lo, mut hi) = (mus[i], mus[i + 1]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (ok, fm) = self.at(mid);
                if ok {
                    lo = mid;
                    f = f.min(fm);
                } else {
                    hi = mid;
                }
            }
        }
        f
    }
}

#[test]
fn dim2_matches_mu_sweep_oracle() {
    let dec = decomp(80, 0.0);
    let mut rng = rng_for(11, 0);
    let mut checked = 0;
    while checked < 10 {
        let a = rng.random_range(0.3..1.2);
        let mask = SubdomainMask::new(dec.grid(), a, a + rng.random_range(0.3..0.8)).unwrap();
        let t2 = rng.random_range(0.2..0.8);
        let times = ImpulseTimes::new(0.0, t2, 1.0).unwrap();
        let z = random_unit(&mut rng, 2);
        let b: Vec<f64> = z.iter().zip(dec.decay_factors(1.0, 2)).map(|(zi, d)| zi * d).collect();
        let eps = rng.random_range(0.1..0.9) * norm(&b);
        let sys = ImpulseSystem::new(&dec, &mask, times, 2).unwrap();
        let r = sys.solve_min_norm_coeffs(&z, eps).unwrap();
        assert_eq!(r.mode, ControlMode::Active);
        let oracle = Sweep {
            gram: oracle_gram(&dec, &mask, times.control_horizon(), 2),
            b: DVector::from_vec(b),
            target: eps * norm(&z),
        }
        .min_norm();
        let gap = (r.f_norm - oracle).abs() / oracle;
        assert!(
            gap <= 1e-6,
            "instance {checked}: {} vs oracle {oracle} (gap {gap:e})",
            r.f_norm
        );
        checked += 1;
    }
}

fn random_active(sys: &ImpulseSystem<'_>, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<f64>, f64) {
    let z: Vec<f64> = random_unit(rng, sys.modes())
        .into_iter()
        .map(|x| x * rng.random_range(0.5..3.0))
        .collect();
    let b = sys.free_terminal_coeffs(&z);
    let eps = rng.random_range(0.2..0.8) * norm(&b) / norm(&z);
    (z, eps)
}

#[test]
fn dim6_min_norm_certificates() {
    let dec = decomp(100, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
    let sys = ImpulseSystem::new(&dec, &mask, times(), 6).unwrap();
    let mut rng = rng_for(4, 0);
    let mut admissible = 0;
    for _ in 0..20 {
        let (z, eps) = random_active(&sys, &mut rng);
        let r = sys.solve_min_norm_coeffs(&z, eps).unwrap();
        assert_eq!(r.mode, ControlMode::Active);
        assert!(
            r.el_residual <= 1e-8 * r.free_terminal_norm,
            "EL residual {:e}",
            r.el_residual
        );
        let target = eps * norm(&z);
        assert!((r.terminal_norm - target).abs() <= 1e-8 * target);
        let cos = -r.terminal.inner(&r.w) / (r.terminal_norm * r.w.norm());
        assert!(cos.clamp(-1.0, 1.0).acos() <= 1e-6, "angle {}", cos.acos());

        let (hbar, k) = sys.default_penalty(eps).unwrap();
        let pen = sys.solve_penalized(&dec.synthesize(&z), hbar, k).unwrap();
        if pen.terminal_norm <= target {
            admissible += 1;
            assert!(r.f_norm <= pen.f_norm * (1.0 + 1e-10), "{} > {}", r.f_norm, pen.f_norm);
        }
    }
    // the default penalty guarantees admissibility
    assert_eq!(admissible, 20);
}

#[test]
fn penalized_identities() {
    let dec = decomp(80, 0.0);
    let mut rng = rng_for(8, 0);
    for i in 0..20 {
        let a = rng.random_range(0.2..2.0);
        let mask = SubdomainMask::new(dec.grid(), a, a + 0.6).unwrap();
        let z = StateVector::from_values(dec.grid(), random_unit(&mut rng, 80)).unwrap();
        let eps = rng.random_range(0.01..0.3);
        // truncated: default weights; full model: arbitrary weights
        let (sys, hbar, k) = if i % 2 == 0 {
            let sys = ImpulseSystem::new(&dec, &mask, times(), 6).unwrap();
            let (h, k) = sys.default_penalty(eps).unwrap();
            (sys, h, k)
        } else {
            let sys = ImpulseSystem::full(&dec, &mask, times()).unwrap();
            (sys, rng.random_range(1e-4..1e-1), rng.random_range(1.0..1e3))
        };
        let pen = sys.solve_penalized(&z, hbar, k).unwrap();
        let defect = (&pen.terminal - &pen.w.scaled(hbar)).norm();
        assert!(defect <= 1e-10 * pen.terminal_norm, "instance {i}: y − ℏw = {defect:e}");
        if i % 2 == 0 {
            let z_norm = sys.project(&z).norm();
            assert!(
                pen.energy <= z_norm * z_norm * (1.0 + 1e-10),
                "energy {} > {}",
                pen.energy,
                z_norm * z_norm
            );
        }
    }
}

#[test]
fn homogeneity_and_eps_monotonicity() {
    let dec = decomp(80, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
    for sys in [
        ImpulseSystem::new(&dec, &mask, times(), 6).unwrap(),
        ImpulseSystem::full(&dec, &mask, times()).unwrap(),
    ] {
        let mut rng = rng_for(21, sys.modes() as u64);
        let z = random_unit(&mut rng, sys.modes());
        let eps = 0.05;
        let base = sys.solve_min_norm_coeffs(&z, eps).unwrap();
        assert_eq!(base.mode, ControlMode::Active);
        for alpha in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = z.iter().map(|x| alpha * x).collect();
            let r = sys.solve_min_norm_coeffs(&scaled, eps).unwrap();
            assert!((r.f_norm - alpha * base.f_norm).abs() <= 1e-8 * alpha * base.f_norm);
        }
        let mut prev = f64::INFINITY;
        for eps in [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5] {
            let r = sys.solve_min_norm_coeffs(&z, eps).unwrap();
            assert!(r.f_norm <= prev * (1.0 + 1e-10), "ε = {eps}: {} > {prev}", r.f_norm);
            prev = r.f_norm;
        }
        assert_eq!(prev, 0.0);
    }
}

#[test]
fn independent_bisection_agrees() {
    let dec = decomp(80, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
    let sys = ImpulseSystem::new(&dec, &mask, times(), 6).unwrap();
    let mut rng = rng_for(5, 0);
    for _ in 0..5 {
        let (z, eps) = random_active(&sys, &mut rng);
        let r = sys.solve_min_norm_coeffs(&z, eps).unwrap();
        let gram = oracle_gram(&dec, &mask, 0.5, 6);
        let b = DVector::from_vec(sys.free_terminal_coeffs(&z));
        let target = eps * norm(&z);
        let w_of = |mu: f64| -(&gram + DMatrix::identity(6, 6) * mu).lu().solve(&b).unwrap();
        // bracket unrelated to the library's
        let (mut lo, mut hi) = (1e-15_f64, 1e5_f64);
        for _ in 0..300 {
            let mid = (lo * hi).sqrt();
            if mid * w_of(mid).norm() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = w_of(lo);
        let f = sys.observe_dual(w.as_slice());
        let diff: Vec<f64> = f.values().iter().zip(r.f.values()).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) * dec.grid().h().sqrt() / r.f_norm;
        assert!(rel <= 1e-8, "controls differ by {rel:e}");
    }
}

#[test]
fn forward_consistency_full_model() {
    let dec = decomp(60, -1.0);
    let mask = SubdomainMask::new(dec.grid(), 1.8, 2.4).unwrap();
    let times = ImpulseTimes::new(0.1, 0.4, 0.9).unwrap();
    let z = StateVector::from_fn(dec.grid(), |x| x.sin() + 0.5 * (2.0 * x).sin() - 0.2 * (5.0 * x).sin());
    let p = ImpulseProblem::new(times, mask.clone(), z.clone(), 0.02).unwrap();
    let r = solve_min_norm(&dec, &p).unwrap();
    assert_eq!(r.mode, ControlMode::Active);
    // e^{LA} z + e^{sA} 1_ω f, mode by mode
    let zc = dec.coefficients(&z);
    let fc = dec.coefficients(&mask.extend(&r.f).unwrap());
    let expect: Vec<f64> = (0..dec.len())
        .map(|j| {
            (-dec.lambda(j) * times.free_horizon()).exp() * zc[j]
                + (-dec.lambda(j) * times.control_horizon()).exp() * fc[j]
        })
        .collect();
    let expect = dec.synthesize(&expect);
    let scale = expect.norm() + dec.propagate(&z, times.free_horizon()).unwrap().norm();
    assert!((&expect - &r.terminal).norm() <= 1e-10 * scale);
    assert!((r.terminal_norm - 0.02 * z.norm()).abs() <= 1e-8 * 0.02 * z.norm());
}

#[test]
fn eigencontrol_regimes_and_determinism() {
    let dec = decomp(100, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
    for j in 0..4 {
        let free = (-dec.lambda(j)).exp();
        let r = eigencontrol(&dec, &mask, j, free * 1.01, times()).unwrap();
        assert_eq!(r.mode, ControlMode::ZeroControl);
        assert_eq!(r.f_norm, 0.0);
        let r = eigencontrol(&dec, &mask, j, free * 0.5, times()).unwrap();
        assert_eq!(r.mode, ControlMode::Active);
        assert!((r.terminal_norm - free * 0.5).abs() <= 1e-8 * free * 0.5);
    }
    let a = eigencontrol(&dec, &mask, 1, 1e-3, times()).unwrap();
    let b = eigencontrol(&dec, &mask, 1, 1e-3, times()).unwrap();
    assert_eq!(a.f, b.f);
    assert!(eigencontrol(&dec, &mask, 100, 1e-3, times()).is_err());
}

#[test]
fn superposition_bound_by_simulation() {
    let dec = decomp(100, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 1.8, 2.4).unwrap();
    let sys = ImpulseSystem::full(&dec, &mask, times()).unwrap();
    let eps = 0.01;
    let controls: Vec<_> = (0..3).map(|j| sys.eigencontrol(j, eps).unwrap()).collect();
    let mut rng = rng_for(3, 0);
    for _ in 0..10 {
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = superpose_controls(&b, &controls).unwrap();
        let y = sys.simulate(&dec.synthesize(&b), &s.f).unwrap();
        assert!((&y - &s.terminal).norm() <= 1e-10 * (1.0 + y.norm()));
        assert!(y.norm() <= eps * 3f64.sqrt() * norm(&b) * (1.0 + 1e-10));
        assert!(s.terminal_norm <= s.bound * (1.0 + 1e-10));
    }
}

#[test]
fn value_n_basic_cases() {
    let dec = decomp(60, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
    let sys = ImpulseSystem::new(&dec, &mask, times(), 3).unwrap();
    let settings = AscentSettings::with_seed(2);
    let zero = value_n(&sys, 0.5, &settings).unwrap();
    assert_eq!(zero.value, 0.0);
    let eps = 0.05;
    let n = value_n(&sys, eps, &settings).unwrap();
    let first = sys.eigencontrol(0, eps).unwrap();
    assert!(n.value >= first.f_norm * (1.0 - 1e-12));
}

#[test]
fn duality_and_qc_equivalence_dim3() {
    let dec = decomp(80, 0.0);
    let mask = SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap();
    let sys = ImpulseSystem::new(&dec, &mask, times(), 3).unwrap();
    let settings = AscentSettings::with_seed(6);
    let eps = 0.05;
    let n = value_n(&sys, eps, &settings).unwrap();
    let c = eps_constant_in(&dec, &mask, 1.0, 0.5, eps, 3, &settings).unwrap();
    assert!(
        (n.value - c.measured_constant).abs() <= 1e-3 * n.value.max(1.0),
        "N = {} vs eps constant {}",
        n.value,
        c.measured_constant
    );

    let mut rng = rng_for(7, 0);
    let mut samples: Vec<Vec<f64>> = (0..50).map(|_| random_unit(&mut rng, 3)).collect();
    samples.push(vec![0.0; 3]);
    let generous = verify_qc(
        &sys,
        eps,
        n.value * (1.0 + 1e-3),
        &samples,
        n.value,
        c.measured_constant,
    )
    .unwrap();
    assert!(generous.qc_holds && generous.n_le_c && generous.inequality_holds);
    assert!(generous.consistent());

    let strict = verify_qc(
        &sys,
        eps,
        n.value / 2.0,
        std::slice::from_ref(&n.maximizer),
        n.value,
        c.measured_constant,
    )
    .unwrap();
    assert!(!strict.qc_holds && !strict.n_le_c && !strict.inequality_holds);
    assert!(strict.consistent());
}
