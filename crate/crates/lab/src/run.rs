//! Task dispatch and CSV emission. Every number is written with 17
//! significant digits and every file ends lines with LF, so a fixed config
//! and seed reproduce the outputs byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use impulse_core::impulse::{value_n, verify_qc, ControlMode, ImpulseSystem, QcReport};
use impulse_core::inverse::Reconstructor;
use impulse_core::observation::{
    eps_constant_in, spectral_constant, spectral_ratio, verify_implication_chain, ChainParams,
};
use impulse_core::optimize::{random_unit, rng_for, AscentSettings};
use impulse_core::stabilizer::{build_feedback, decay_report, simulate_closed_loop, ClosedLoopConfig, SampleKind};
use impulse_core::{SpectralDecomposition, StateVector, SubdomainMask};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ConfigError, Scenario, Task};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] impulse_core::Error),
    #[error("writing {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("creating {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Outcome of one scenario. `error` is set when the scenario could not finish;
/// its checks up to that point are lost.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub task: Task,
    pub passed: usize,
    pub failed: usize,
    pub wall: Duration,
    pub artifacts: Vec<PathBuf>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failed == 0 && self.error.is_none()
    }

    pub fn total(&self) -> usize {
        self.passed + self.failed
    }
}

#[derive(Default)]
struct Tally {
    passed: usize,
    failed: usize,
    artifacts: Vec<PathBuf>,
}

impl Tally {
    fn check(&mut self, ok: bool) -> bool {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        ok
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn flag(b: bool) -> String {
    b.to_string()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, RunError> {
    let wrap = |source| RunError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))?;
    Ok(path.to_path_buf())
}

struct Ctx<'a> {
    s: &'a Scenario,
    dec: SpectralDecomposition,
    out: &'a Path,
    tally: Tally,
}

impl Ctx<'_> {
    fn mask(&self, w: [f64; 2]) -> Result<SubdomainMask, RunError> {
        Ok(SubdomainMask::new(self.dec.grid(), w[0], w[1])?)
    }

    fn emit(&mut self, suffix: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        let path = self.out.join(format!("{}_{suffix}.csv", self.s.name));
        let p = write_csv(&path, header, rows)?;
        self.tally.artifacts.push(p);
        Ok(())
    }

    fn settings(&self) -> AscentSettings {
        AscentSettings::with_seed(self.s.seed)
    }
}

/// Run one scenario, writing its CSVs into `out`.
pub fn run_scenario(s: &Scenario, out: &Path) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport {
        name: s.name.clone(),
        task: s.task,
        passed: 0,
        failed: 0,
        wall: Duration::ZERO,
        artifacts: Vec::new(),
        error: None,
    };
    match execute(s, out) {
        Ok(t) => {
            report.passed = t.passed;
            report.failed = t.failed;
            report.artifacts = t.artifacts;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.wall = start.elapsed();
    report
}

fn execute(s: &Scenario, out: &Path) -> Result<Tally, RunError> {
    s.validate()?;
    let grid = s.grid()?;
    let potential = s.potential.build(&grid)?;
    let mut ctx = Ctx {
        s,
        dec: SpectralDecomposition::new(&grid, &potential)?,
        out,
        tally: Tally::default(),
    };
    match s.task {
        Task::Stabilize => stabilize(&mut ctx)?,
        Task::MinNorm => min_norm(&mut ctx)?,
        Task::Duality => duality(&mut ctx)?,
        Task::ObservationChain => observation_chain(&mut ctx)?,
        Task::InverseSource => inverse_source(&mut ctx)?,
    }
    Ok(ctx.tally)
}

fn stabilize(ctx: &mut Ctx<'_>) -> Result<(), RunError> {
    let s = ctx.s;
    let (gamma, period) = (s.gamma()?, s.period()?);
    let n_periods = s.n_periods.unwrap_or(1);
    let w1 = ctx.mask(s.w1)?;
    let w2 = ctx.mask(s.w2()?)?;
    let fb = build_feedback(&ctx.dec, &w1, &w2, gamma, period)?;
    let n = ctx.dec.len();

    let mut traj_rows = Vec::new();
    let mut decay_rows = Vec::new();
    let mut closing = None;
    for i in 0..s.initial_states.unwrap_or(1) {
        let mut rng = rng_for(s.seed, i as u64);
        let y0 = StateVector::from_values(ctx.dec.grid(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let cfg = ClosedLoopConfig::new(gamma, period, w1.clone(), w2.clone(), y0, n_periods)?
            .with_dense(s.dense_per_period.unwrap_or(20));
        let traj = simulate_closed_loop(&ctx.dec, &fb, &cfg)?;
        let rep = decay_report(&ctx.dec, &fb, &traj)?;

        let mut events = traj.events.iter();
        let mut pre_jump: Option<&StateVector> = None;
        for sample in &traj.samples {
            let (event_flag, control_norm) = match sample.kind {
                SampleKind::PostJump => {
                    let e = events.next().expect("one event per jump sample");
                    if let Some(pre) = pre_jump.take() {
                        let jump = &(pre + &w2.extend(&e.control)?) - &sample.state;
                        ctx.tally.check(jump.norm() <= 1e-12 * (1.0 + sample.state.norm()));
                    }
                    (true, e.control_norm)
                }
                SampleKind::PreJump => {
                    pre_jump = Some(&sample.state);
                    (false, 0.0)
                }
                _ => (false, 0.0),
            };
            traj_rows.push(vec![
                i.to_string(),
                num(sample.t),
                sample.kind.as_str().to_string(),
                num(sample.state.norm()),
                flag(event_flag),
                num(control_norm),
            ]);
        }
        for p in &rep.periods {
            ctx.tally.check(p.ratio_pass);
            ctx.tally.check(p.split_pass);
            decay_rows.push(vec![
                i.to_string(),
                p.n.to_string(),
                num(p.ratio),
                num(rep.rate_bound),
                num(p.tilde_norm),
                num(p.tilde_bound),
                num(p.hat_norm),
                num(p.hat_bound),
                num(p.bar_norm),
                num(p.bar_bound),
                num(p.split_defect),
                flag(p.pass()),
            ]);
        }
        ctx.tally.check(rep.envelope_pass);
        decay_rows.push(vec![
            i.to_string(),
            "envelope".into(),
            num(rep.envelope_max_ratio),
            num(1.0),
            num(rep.envelope_constant),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            flag(rep.envelope_pass),
        ]);
        closing = Some(rep.closing);
    }
    ctx.emit(
        "trajectory",
        &["y0", "t", "kind", "norm", "event_flag", "control_norm"],
        &traj_rows,
    )?;
    ctx.emit(
        "decay",
        &[
            "y0",
            "n",
            "ratio",
            "bound",
            "tilde_norm",
            "tilde_bound",
            "hat_norm",
            "hat_bound",
            "bar_norm",
            "bar_bound",
            "split_defect",
            "pass",
        ],
        &decay_rows,
    )?;

    let product_ok = ctx.tally.check(fb.op_norm <= fb.product_bound() * (1.0 + 1e-12));
    let max_ok = ctx.tally.check(fb.op_norm <= fb.max_bound() * (1.0 + 1e-12));
    let mut rows = vec![
        vec!["k".into(), fb.k.to_string(), String::new(), flag(true)],
        vec![
            "eps".into(),
            fb.eps.map_or(String::new(), num),
            String::new(),
            flag(true),
        ],
        vec![
            "op_norm_vs_product".into(),
            num(fb.op_norm),
            num(fb.product_bound()),
            flag(product_ok),
        ],
        vec![
            "op_norm_vs_max".into(),
            num(fb.op_norm),
            num(fb.max_bound()),
            flag(max_ok),
        ],
    ];
    if let Some(c) = closing {
        let tail = ctx.tally.check(c.tail_pass);
        let balance = ctx.tally.check(c.balance_pass);
        rows.push(vec!["closing_tail".into(), num(c.tail), num(c.half_rate), flag(tail)]);
        rows.push(vec![
            "closing_balance".into(),
            c.balance.map_or(String::new(), num),
            num(c.half_rate),
            flag(balance),
        ]);
    }
    ctx.emit("feedback", &["quantity", "value", "reference", "pass"], &rows)
}

fn min_norm(ctx: &mut Ctx<'_>) -> Result<(), RunError> {
    let s = ctx.s;
    let eps = s.eps()?;
    let times = s.times()?;
    let mask = ctx.mask(s.w1)?;
    let d = s.dim_trunc.unwrap_or(6.min(ctx.dec.len()));
    let sys = ImpulseSystem::new(&ctx.dec, &mask, times, d)?;
    let (hbar, k) = sys.default_penalty(eps)?;
    let mut rng = rng_for(s.seed, 0);
    let mut rows = Vec::new();
    for i in 0..s.instances.unwrap_or(20) {
        let scale = rng.random_range(0.5..3.0);
        let z: Vec<f64> = random_unit(&mut rng, d).into_iter().map(|x| x * scale).collect();
        let r = sys.solve_min_norm_coeffs(&z, eps)?;
        let target = eps * r.z_norm;
        let (terminal_ok, el_ok, angle) = match r.mode {
            ControlMode::Active => {
                let cos = -r.terminal.inner(&r.w) / (r.terminal_norm * r.w.norm());
                let angle = cos.clamp(-1.0, 1.0).acos();
                (
                    (r.terminal_norm - target).abs() <= 1e-8 * target,
                    r.el_residual <= 1e-8 * r.free_terminal_norm,
                    angle,
                )
            }
            ControlMode::ZeroControl => (r.terminal_norm <= target * (1.0 + 1e-12), true, 0.0),
        };
        ctx.tally.check(terminal_ok);
        ctx.tally.check(el_ok);
        ctx.tally.check(angle <= 1e-6);

        let pen = sys.solve_penalized(&ctx.dec.synthesize(&z), hbar, k)?;
        let identity = (&pen.terminal - &pen.w.scaled(hbar)).norm();
        ctx.tally
            .check(identity <= 1e-10 * pen.terminal_norm.max(f64::MIN_POSITIVE));
        ctx.tally.check(pen.energy <= r.z_norm * r.z_norm * (1.0 + 1e-10));
        let admissible = pen.terminal_norm <= target;
        if admissible {
            ctx.tally.check(r.f_norm <= pen.f_norm * (1.0 + 1e-10));
        }
        rows.push(vec![
            i.to_string(),
            r.mode.as_str().to_string(),
            num(r.z_norm),
            num(eps),
            num(r.f_norm),
            num(r.terminal_norm),
            num(r.el_residual),
            num(r.free_terminal_norm),
            num(angle),
            num(pen.f_norm),
            num(pen.terminal_norm),
            num(identity),
            flag(admissible),
            flag(terminal_ok && el_ok && angle <= 1e-6),
        ]);
    }
    ctx.emit(
        "min_norm",
        &[
            "instance",
            "mode",
            "z_norm",
            "eps",
            "f_norm",
            "terminal_norm",
            "el_residual",
            "free_terminal_norm",
            "angle",
            "penalized_f_norm",
            "penalized_terminal_norm",
            "penalized_identity_defect",
            "penalized_admissible",
            "pass",
        ],
        &rows,
    )
}

fn qc_rows(label: &str, rep: &QcReport, rows: &mut Vec<Vec<String>>) {
    for (i, r) in rep.rows.iter().enumerate() {
        rows.push(vec![
            label.to_string(),
            num(rep.c),
            i.to_string(),
            num(r.z_norm),
            num(r.f_norm),
            num(r.terminal_norm),
            num(r.lhs),
            flag(r.pass),
        ]);
    }
}

fn duality(ctx: &mut Ctx<'_>) -> Result<(), RunError> {
    let s = ctx.s;
    let eps = s.eps()?;
    let times = s.times()?;
    let mask = ctx.mask(s.w1)?;
    let d = s.dim_trunc.unwrap_or(3.min(ctx.dec.len()));
    let settings = ctx.settings();
    let sys = ImpulseSystem::new(&ctx.dec, &mask, times, d)?;
    let n = value_n(&sys, eps, &settings)?;
    let c = eps_constant_in(
        &ctx.dec,
        &mask,
        times.free_horizon(),
        times.control_horizon(),
        eps,
        d,
        &settings,
    )?;
    let gap_tol = 1e-3 * n.value.max(1.0);
    let gap_ok = ctx.tally.check((n.value - c.measured_constant).abs() <= gap_tol);

    let mut rng = rng_for(s.seed, 1);
    let mut samples: Vec<Vec<f64>> = (0..s.instances.unwrap_or(50))
        .map(|_| random_unit(&mut rng, d))
        .collect();
    samples.push(vec![0.0; d]);
    let mut summary = vec![vec![
        "value_n".into(),
        num(n.value),
        num(c.measured_constant),
        num(gap_tol),
        flag(gap_ok),
    ]];
    let mut rows = Vec::new();
    if n.value > 0.0 {
        let generous = verify_qc(
            &sys,
            eps,
            n.value * (1.0 + 1e-3),
            &samples,
            n.value,
            c.measured_constant,
        )?;
        let ok = ctx.tally.check(generous.qc_holds && generous.consistent());
        summary.push(vec![
            "qc_above_n".into(),
            num(generous.c),
            num(n.value),
            String::new(),
            flag(ok),
        ]);
        qc_rows("above", &generous, &mut rows);
        let strict = verify_qc(
            &sys,
            eps,
            n.value / 2.0,
            std::slice::from_ref(&n.maximizer),
            n.value,
            c.measured_constant,
        )?;
        let ok = ctx.tally.check(!strict.qc_holds && strict.consistent());
        summary.push(vec![
            "qc_below_n".into(),
            num(strict.c),
            num(n.value),
            String::new(),
            flag(ok),
        ]);
        qc_rows("below", &strict, &mut rows);
    }
    ctx.emit(
        "duality",
        &["check", "measured", "reference", "tolerance", "pass"],
        &summary,
    )?;
    ctx.emit(
        "qc",
        &[
            "side",
            "c",
            "sample",
            "z_norm",
            "f_norm",
            "terminal_norm",
            "lhs",
            "pass",
        ],
        &rows,
    )
}

fn observation_chain(ctx: &mut Ctx<'_>) -> Result<(), RunError> {
    let s = ctx.s;
    let mask = ctx.mask(s.w1)?;
    let params = ChainParams {
        t: s.t.unwrap_or(0.5),
        theta: s.theta.unwrap_or(0.5),
        beta: s.beta.unwrap_or(0.5),
        eps: s.eps()?,
        lambda_cut: s.lambda_cut.unwrap_or(10.0),
        settings: ctx.settings(),
    };
    let spectral = spectral_constant(&ctx.dec, &mask, params.lambda_cut)?;
    let again = spectral_ratio(&ctx.dec, &mask, &spectral.attaining_coeffs)?;
    let exact = ctx
        .tally
        .check((again - spectral.measured_constant).abs() <= 1e-10 * spectral.measured_constant);
    let chain = verify_implication_chain(&ctx.dec, &mask, &params)?;
    let mut rows = vec![vec![
        "ii".into(),
        format!("lambda_cut={}", num(params.lambda_cut)),
        num(spectral.measured_constant),
        num(again),
        flag(exact),
    ]];
    let base = format!(
        "t={};theta={};beta={};eps={};window={}",
        num(params.t),
        num(params.theta),
        num(params.beta),
        num(params.eps),
        chain.window
    );
    for a in &chain.arrows {
        ctx.tally.check(a.pass);
        rows.push(vec![
            a.arrow.to_string(),
            base.clone(),
            num(a.measured),
            num(a.propagated),
            flag(a.pass),
        ]);
    }
    let c_ok = ctx.tally.check(chain.ledger.c == 4.0 * chain.ledger.c3);
    rows.push(vec![
        "c=4c3".into(),
        base,
        num(chain.ledger.c),
        num(4.0 * chain.ledger.c3),
        flag(c_ok),
    ]);
    ctx.emit(
        "observation",
        &[
            "inequality_id",
            "params",
            "measured_constant",
            "propagated_bound",
            "pass",
        ],
        &rows,
    )
}

fn inverse_source(ctx: &mut Ctx<'_>) -> Result<(), RunError> {
    let s = ctx.s;
    let mask = ctx.mask(s.w1)?;
    let k = s.k.unwrap_or(3);
    let rec = Reconstructor::new(&ctx.dec, &mask, s.times()?, s.eps()?, k)?;
    let span = s.source_modes.unwrap_or(k);
    let mut rng = rng_for(s.seed, 0);
    let mut rows = Vec::new();
    for i in 0..s.instances.unwrap_or(10) {
        let a: Vec<f64> = (0..span).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rec.report(&ctx.dec.synthesize(&a))?;
        for m in &r.modes {
            let ok = ctx.tally.check(m.pass && m.duality_defect <= 1e-10);
            rows.push(vec![
                i.to_string(),
                m.j.to_string(),
                num(m.lambda),
                num(m.true_coeff),
                num(m.estimate),
                num(m.error),
                num(m.bound),
                flag(m.informative),
                num(m.duality_defect),
                flag(ok),
            ]);
        }
    }
    ctx.emit(
        "inverse",
        &[
            "instance",
            "j",
            "lambda",
            "a",
            "a_hat",
            "error",
            "bound",
            "informative",
            "duality_defect",
            "pass",
        ],
        &rows,
    )
}

/// Run every scenario on a pool of `workers` threads (0 picks the default)
/// and return the reports in input order. One scenario failing never stops
/// the others.
pub fn run(scenarios: &[Scenario], out: &Path, workers: usize) -> Result<Vec<RunReport>, RunError> {
    std::fs::create_dir_all(out).map_err(|source| RunError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(|| scenarios.par_iter().map(|s| run_scenario(s, out)).collect()))
}

/// `summary.csv` after the join. Wall time is left out so that reruns stay
/// byte-identical; artifacts are listed by file name only.
pub fn write_summary(reports: &[RunReport], out: &Path) -> Result<PathBuf, RunError> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let files: Vec<String> = r
                .artifacts
                .iter()
                .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
                .collect();
            vec![
                r.name.clone(),
                r.task.as_str().to_string(),
                if r.ok() {
                    "pass"
                } else if r.error.is_some() {
                    "error"
                } else {
                    "fail"
                }
                .to_string(),
                r.passed.to_string(),
                r.failed.to_string(),
                files.join(";"),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &out.join("summary.csv"),
        &["scenario", "task", "status", "passed", "failed", "artifacts", "error"],
        &rows,
    )
}
