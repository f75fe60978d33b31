use std::f64::consts::PI;

use impulse_core::optimize::rng_for;
use impulse_core::stabilizer::{
    build_feedback, closing_identities, decay_report, impulse_jump, simulate_closed_loop, ClosedLoopConfig, SampleKind,
};
use impulse_core::{Grid1D, PotentialField, SpectralDecomposition, StateVector, SubdomainMask, SubdomainVector};
use nalgebra::DMatrix;
use rand::Rng;

fn decomp(n: usize, v: f64) -> SpectralDecomposition {
    let grid = Grid1D::new(n, PI).unwrap();
    SpectralDecomposition::new(&grid, &PotentialField::constant(&grid, v).unwrap()).unwrap()
}

fn masks(dec: &SpectralDecomposition) -> (SubdomainMask, SubdomainMask) {
    (
        SubdomainMask::new(dec.grid(), 0.9, 1.5).unwrap(),
        SubdomainMask::new(dec.grid(), 1.8, 2.4).unwrap(),
    )
}

fn random_state(dec: &SpectralDecomposition, seed: u64) -> StateVector {
    let mut rng = rng_for(seed, 0);
    StateVector::from_values(
        dec.grid(),
        (0..dec.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// `e^{tA}u` from scratch: modal coefficients by h-weighted sums.
fn hand_propagate(dec: &SpectralDecomposition, u: &StateVector, t: f64) -> StateVector {
    let h = dec.grid().h();
    let mut out = vec![0.0; u.len()];
    for j in 0..dec.len() {
        let m = dec.mode(j);
        let c: f64 = m.values().iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>() * h;
        let c = c * (-dec.lambda(j) * t).exp();
        for (o, v) in out.iter_mut().zip(m.values()) {
            *o += c * v;
        }
    }
    StateVector::from_values(dec.grid(), out).unwrap()
}

#[test]
fn one_period_matches_hand_rolled_step() {
    let dec = decomp(80, 0.0);
    let (w1, w2) = masks(&dec);
    let (gamma, t) = (2.0, 1.0);
    let fb = build_feedback(&dec, &w1, &w2, gamma, t).unwrap();
    assert!(fb.k >= 1);
    let y0 = dec.synthesize(&[0.8, -0.6]);
    let cfg = ClosedLoopConfig::new(gamma, t, w1.clone(), w2.clone(), y0, 1).unwrap();
    let traj = simulate_closed_loop(&dec, &fb, &cfg).unwrap();

    let y_l0 = &traj.checkpoints[0];
    let obs = w1.restrict(&hand_propagate(&dec, y_l0, t / 4.0)).unwrap();
    let mut control = SubdomainVector::zeros(&w2);
    for j in 0..fb.k {
        let gain = -(dec.lambda(j) * t / 2.0).exp() * fb.sensors[j].inner(&obs);
        control.axpy(gain, &fb.actuators[j]);
    }
    let post = &hand_propagate(&dec, y_l0, 3.0 * t / 4.0) + &w2.extend(&control).unwrap();
    let expect = hand_propagate(&dec, &post, t / 4.0);
    let got = &traj.checkpoints[1];
    let scale = y_l0.norm() * (1.0 + fb.op_norm);
    assert!(
        (&expect - got).norm() <= 1e-10 * scale,
        "defect {:e}",
        (&expect - got).norm()
    );
}

#[test]
fn feedback_reads_only_the_sensor_window() {
    let dec = decomp(80, 0.0);
    let (w1, w2) = masks(&dec);
    let fb = build_feedback(&dec, &w1, &w2, 2.0, 1.0).unwrap();
    let y_obs = random_state(&dec, 1);
    let y_pre = random_state(&dec, 2);
    let mut tampered = y_obs.clone();
    let inside: Vec<usize> = w1.indices().to_vec();
    let mut rng = rng_for(3, 0);
    for (i, v) in tampered.values_mut().iter_mut().enumerate() {
        if !inside.contains(&i) {
            *v = rng.random_range(-100.0..100.0);
        }
    }
    let a = impulse_jump(&fb, &y_pre, &y_obs).unwrap();
    let b = impulse_jump(&fb, &y_pre, &tampered).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.3, b.3);
}

#[test]
fn operator_norm_is_exact_and_bounded() {
    for v in [0.0, -2.0] {
        let dec = decomp(80, v);
        let (w1, w2) = masks(&dec);
        let fb = build_feedback(&dec, &w1, &w2, 2.0, 1.0).unwrap();
        let h = dec.grid().h();
        // dense matrix of F between √h-scaled coordinates
        let mut a = DMatrix::zeros(w2.len(), w1.len());
        for i in 0..w1.len() {
            let mut e = vec![0.0; w1.len()];
            e[i] = 1.0 / h.sqrt();
            let col = fb.apply(&SubdomainVector::new(h, e)).unwrap();
            for (r, x) in col.values().iter().enumerate() {
                a[(r, i)] = x * h.sqrt();
            }
        }
        let sigma = a.singular_values().max();
        assert!((fb.op_norm - sigma).abs() <= 1e-8 * sigma, "{} vs {sigma}", fb.op_norm);
        assert!(fb.op_norm <= fb.product_bound() * (1.0 + 1e-12));
        assert!(fb.op_norm <= fb.max_bound() * (1.0 + 1e-12));
    }
}

#[test]
fn feedback_is_linear() {
    let dec = decomp(60, 0.0);
    let (w1, w2) = masks(&dec);
    let fb = build_feedback(&dec, &w1, &w2, 3.0, 1.0).unwrap();
    let h = dec.grid().h();
    let mut rng = rng_for(5, 0);
    let mut draw = || SubdomainVector::new(h, (0..w1.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
    let (p, q) = (draw(), draw());
    let alpha = 1.7;
    let mut mix = q.clone();
    mix.axpy(alpha, &p);
    let mut expect = fb.apply(&q).unwrap();
    expect.axpy(alpha, &fb.apply(&p).unwrap());
    let got = fb.apply(&mix).unwrap();
    let diff: f64 = got
        .values()
        .iter()
        .zip(expect.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = expect.values().iter().map(|x| x * x).sum::<f64>().sqrt() + 1.0;
    assert!(diff <= 1e-12 * scale * fb.op_norm.max(1.0));
    assert_eq!(fb.apply(&SubdomainVector::zeros(&w1)).unwrap().norm(), 0.0);
}

#[test]
fn zero_rank_feedback_decays_freely() {
    let dec = decomp(60, 0.0);
    let (w1, w2) = masks(&dec);
    let (gamma, t) = (0.1, 1.0);
    let fb = build_feedback(&dec, &w1, &w2, gamma, t).unwrap();
    assert_eq!(fb.k, 0);
    let y0 = random_state(&dec, 9);
    let cfg = ClosedLoopConfig::new(gamma, t, w1, w2, y0.clone(), 4).unwrap();
    let traj = simulate_closed_loop(&dec, &fb, &cfg).unwrap();
    for s in &traj.samples {
        let free = dec.propagate(&y0, s.t).unwrap();
        assert!((&free - &s.state).norm() <= 1e-12 * y0.norm());
    }
    assert!(traj.events.iter().all(|e| e.control_norm == 0.0));
    for r in &traj.ratios {
        assert!(*r <= (-dec.lambda(0) * t * (1.0 - 1e-6)).exp());
        assert!(*r <= (-gamma * t).exp());
    }
    assert!(decay_report(&dec, &fb, &traj).unwrap().all_pass());
}

#[test]
fn short_closed_loop_runs_pass_every_check() {
    for v in [0.0, -2.0] {
        let dec = decomp(100, v);
        let (w1, w2) = masks(&dec);
        let (gamma, t) = (2.0, 1.0);
        let fb = build_feedback(&dec, &w1, &w2, gamma, t).unwrap();
        let closing = closing_identities(&fb);
        assert!(closing.tail_pass && closing.balance_pass);
        let cfg = ClosedLoopConfig::new(gamma, t, w1, w2, random_state(&dec, 10), 3).unwrap();
        let traj = simulate_closed_loop(&dec, &fb, &cfg).unwrap();
        assert_eq!(traj.samples.len(), 2 + 3 * (4 + 20));
        // jump identity at every nT
        for (n, e) in traj.events.iter().enumerate() {
            let pre = traj
                .samples
                .iter()
                .find(|s| s.kind == SampleKind::PreJump && s.period == n)
                .unwrap();
            let post = traj
                .samples
                .iter()
                .find(|s| s.kind == SampleKind::PostJump && s.period == n)
                .unwrap();
            let jump = &(&pre.state + &fb.mask_w2().extend(&e.control).unwrap()) - &post.state;
            assert!(jump.norm() <= 1e-12 * (1.0 + post.state.norm()));
        }
        let rep = decay_report(&dec, &fb, &traj).unwrap();
        assert!(rep.all_pass(), "V = {v}: {:?}", rep.periods);
        for p in &rep.periods {
            assert!(p.bar_norm <= p.bar_bound * (1.0 + 1e-6) + 1e-14);
        }
    }
}

#[test]
fn closed_loop_rejects_mismatched_feedback() {
    let dec = decomp(40, 0.0);
    let (w1, w2) = masks(&dec);
    let fb = build_feedback(&dec, &w1, &w2, 2.0, 1.0).unwrap();
    let cfg = ClosedLoopConfig::new(2.0, 0.5, w1.clone(), w2.clone(), dec.mode(0), 1).unwrap();
    assert!(simulate_closed_loop(&dec, &fb, &cfg).is_err());
    let cfg = ClosedLoopConfig::new(2.0, 1.0, w2, w1, dec.mode(0), 1).unwrap();
    assert!(simulate_closed_loop(&dec, &fb, &cfg).is_err());
    assert!(ClosedLoopConfig::new(2.0, 1.0, fb.mask_w1().clone(), fb.mask_w2().clone(), dec.mode(0), 0).is_err());
}
