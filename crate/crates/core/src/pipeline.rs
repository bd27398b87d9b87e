//! Orchestrates the full run: diagnose, simulate, variance, spectral, CLT.
//! Every report lands in the output directory as JSON (with the config
//! hash and master seed embedded) plus flat CSV tables; the whole run is a
//! pure function of (config, seed).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::config::{BuiltModel, Config};
use crate::diagnostics::{self, MomentReport};
use crate::error::{Error, Result};
use crate::harness::{self, CltReport, LocalCltReport};
use crate::model::{StatePoint, SystemModel};
use crate::rng;
use crate::simulate::{self, DecayReport, DriftEstimate, EmpiricalMeasure, InitDist};
use crate::spectral::{self, ExpansionReport, OperatorGrid, PeripheralScan};
use crate::variance::{self, DegeneracyReport, PoissonOpts, VarianceEstimate};

/// Which part of the pipeline a CLI subcommand asks for. Earlier stages a
/// later one depends on always run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Diagnose,
    Simulate,
    Variance,
    Spectral,
    Clt,
    Full,
}

impl Stage {
    fn wants_simulate(&self) -> bool {
        !matches!(self, Stage::Diagnose)
    }

    fn wants_variance(&self) -> bool {
        matches!(self, Stage::Variance | Stage::Clt | Stage::Full)
    }

    fn wants_spectral(&self) -> bool {
        matches!(self, Stage::Spectral | Stage::Full)
    }

    fn wants_clt(&self) -> bool {
        matches!(self, Stage::Clt | Stage::Full)
    }
}

/// Seed substream ids per stage; fixed so reports are reproducible
/// whatever subset of stages runs.
mod streams {
    pub const DRIFT: u64 = 1;
    pub const CESARO: u64 = 2;
    pub const DECAY: u64 = 3;
    pub const INVARIANCE: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const POISSON: u64 = 6;
    pub const DEGENERACY: u64 = 7;
    pub const CLT: u64 = 8;
    pub const LOCAL_CLT: u64 = 9;
    pub const VALIDATE: u64 = 10;
    pub const SAMPLE_PATH: u64 = 11;
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub stages_run: Vec<String>,
    pub hard_failures: Vec<String>,
    pub notes: Vec<String>,
    pub drift: Option<DriftEstimate>,
    pub sigma2_batch: Option<f64>,
    pub sigma2_poisson: Option<f64>,
    pub sigma2_spectral: Option<f64>,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    report: &'a T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, hash: &str, seed: u64, body: &T) -> Result<()> {
    let path = dir.join(name);
    let envelope = Envelope { config_hash: hash, seed, report: body };
    let mut file = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, &envelope)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    fs::write(dir.join(name), out)?;
    Ok(())
}

/// Map an error to the CLI exit code contract: 2 config, 3 hypothesis
/// failure, 4 numerical inconsistency.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::Spec(_)
        | Error::Parameter(_)
        | Error::Unsupported(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::HypothesisFailure(_) => 3,
        Error::NumericalInconsistency(_)
        | Error::NonConvergence { .. }
        | Error::AmbiguousDominance { .. }
        | Error::NonDecayingSeries { .. }
        | Error::StepSize(_)
        | Error::DegenerateMatrix
        | Error::BoundaryPoint
        | Error::RejectedInput(_)
        | Error::Evaluation { .. }
        | Error::MissingDependency(_) => 4,
    }
}

struct StageOutputs {
    diagnostics: Option<MomentReport>,
    nu_hat: Option<EmpiricalMeasure>,
    decay: Option<DecayReport>,
    batch: Option<VarianceEstimate>,
    poisson: Option<VarianceEstimate>,
    degeneracy: Option<DegeneracyReport>,
    expansion: Option<ExpansionReport>,
    scan: Option<PeripheralScan>,
    clt: Option<CltReport>,
    local: Option<LocalCltReport>,
}

/// Run the pipeline up to `stage`, writing reports under `out_dir`.
/// Returns the summary; hard failures surface as the error after all
/// reports (including the summary) are on disk.
pub fn run_experiment(config: &Config, out_dir: &Path, stage: Stage) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let hash = config.hash();
    let seed = config.seed;

    let mut stages_run = Vec::new();
    let mut hard_failures = Vec::new();
    let mut notes = Vec::new();
    let mut out = Outputs {
        inner: StageOutputs {
            diagnostics: None,
            nu_hat: None,
            decay: None,
            batch: None,
            poisson: None,
            degeneracy: None,
            expansion: None,
            scan: None,
            clt: None,
            local: None,
        },
        drift_cache: None,
    };

    let run = run_stages(config, out_dir, stage, &hash, &mut stages_run, &mut hard_failures, &mut notes, &mut out);

    let summary = RunSummary {
        config_hash: hash.clone(),
        seed,
        stages_run,
        hard_failures: hard_failures.clone(),
        notes,
        drift: out.drift_cache,
        sigma2_batch: out.inner.batch.as_ref().map(|v| v.sigma2),
        sigma2_poisson: out.inner.poisson.as_ref().map(|v| v.sigma2),
        sigma2_spectral: out.inner.expansion.as_ref().map(|e| e.sigma2_hat),
        exit_code: match &run {
            Ok(()) => 0,
            Err(e) => exit_code_for(e),
        },
    };
    write_json(out_dir, "summary.json", &hash, seed, &summary)?;
    run.map(|()| summary)
}

/// Extended outputs wrapper so the summary can read cached values.
struct Outputs {
    inner: StageOutputs,
    drift_cache: Option<DriftEstimate>,
}

impl std::ops::Deref for Outputs {
    type Target = StageOutputs;
    fn deref(&self) -> &StageOutputs {
        &self.inner
    }
}

impl std::ops::DerefMut for Outputs {
    fn deref_mut(&mut self) -> &mut StageOutputs {
        &mut self.inner
    }
}

#[allow(clippy::too_many_arguments)]
fn run_stages(
    config: &Config,
    out_dir: &Path,
    stage: Stage,
    hash: &str,
    stages_run: &mut Vec<String>,
    hard_failures: &mut Vec<String>,
    notes: &mut Vec<String>,
    out: &mut Outputs,
) -> Result<()> {
    let seed = config.seed;
    let built: BuiltModel = config.build_model()?;
    let mut model = built.model.clone();

    // model spot-check
    let validation =
        crate::model::validate_model(&model, 256, rng::substream_seed(seed, streams::VALIDATE))?;
    if !validation.ok {
        notes.push(format!(
            "model invariant spot-check found violations: {validation:?}"
        ));
    }

    // ---- diagnose ----------------------------------------------------
    stages_run.push("diagnose".into());
    let report = diagnostics::check_h(
        &model,
        config.diagnostics.gamma0,
        config.diagnostics.n0max,
        config.diagnostics.nsamples,
        seed,
    )?;
    let lambda0 = if report.holds() {
        let n0 = match report.verdict {
            diagnostics::HVerdict::Holds { n0 } => n0,
            _ => 1,
        };
        Some(diagnostics::find_lambda0(
            &model,
            config.diagnostics.gamma0,
            n0,
            config.diagnostics.nsamples,
            seed ^ 0xa11a,
        )?)
    } else {
        None
    };
    // which limit-theorem thresholds the chosen gamma0 clears, given the
    // envelope exponents (r, s) of the observable
    let (env_r, env_s) = (
        model.observable.envelope.r,
        model.observable.envelope.s,
    );
    let g0 = config.diagnostics.gamma0;
    #[derive(Serialize)]
    struct TheoremThresholds {
        r: f64,
        s: f64,
        clt: bool,
        berry_esseen: bool,
        variance_formula: bool,
    }
    let thresholds = TheoremThresholds {
        r: env_r,
        s: env_s,
        clt: g0 > env_r + env_r.max(env_s + 1.0),
        berry_esseen: g0 > 3.0 * env_r + env_r.max(env_s + 1.0),
        variance_formula: g0 > 2.0 * env_r + env_s + 1.0,
    };

    #[derive(Serialize)]
    struct DiagnosticsOut<'a> {
        hypothesis: &'a MomentReport,
        lambda0: &'a Option<diagnostics::Lambda0Result>,
        matrix_info: &'a Option<crate::config::MatrixInfo>,
        validation: &'a crate::model::ValidationReport,
        gamma0_clears: TheoremThresholds,
    }
    write_json(
        out_dir,
        "diagnostics.json",
        hash,
        seed,
        &DiagnosticsOut {
            hypothesis: &report,
            lambda0: &lambda0,
            matrix_info: &built.matrix_info,
            validation: &validation,
            gamma0_clears: thresholds,
        },
    )?;
    let kappa0 = report.kappa0;
    let holds = report.holds();
    out.diagnostics = Some(report);
    if !holds {
        hard_failures.push("hypothesis check failed".into());
        return Err(Error::HypothesisFailure(format!(
            "H(gamma0 = {}) does not hold for this model; see diagnostics.json",
            config.diagnostics.gamma0
        )));
    }
    if !stage.wants_simulate() {
        return Ok(());
    }

    // burn-in from the geometric-ergodicity rate
    let burn_in = config.simulation.burn_in.unwrap_or_else(|| {
        kappa0
            .map(|k| (10.0 / -(k.ln().min(-1e-6))).ceil() as usize)
            .unwrap_or(64)
            .clamp(8, 100_000)
    });

    // centering: matrix models were centered at construction
    if built.matrix_info.is_none() {
        let drift = simulate::estimate_drift(
            &model,
            config.simulation.drift_n,
            config.simulation.drift_paths,
            burn_in,
            rng::substream_seed(seed, streams::DRIFT),
        )?;
        model = model.with_centering(drift.m_hat);
        out.drift_cache = Some(drift);
    } else {
        out.drift_cache = Some(DriftEstimate {
            m_hat: built.matrix_info.as_ref().unwrap().gamma1,
            se: 0.0,
            steps_used: 0,
        });
    }

    // ---- simulate -----------------------------------------------------
    stages_run.push("simulate".into());
    let nu_hat = simulate::cesaro_measure(
        &model,
        config.simulation.cesaro_n,
        rng::substream_seed(seed, streams::CESARO),
        config.simulation.cesaro_reps,
    )?;
    let invariance = simulate::invariance_check(
        &model,
        &nu_hat.subsample(4096, rng::substream_seed(seed, streams::INVARIANCE)),
        10,
        8,
        rng::substream_seed(seed, streams::INVARIANCE) ^ 1,
    )?;
    let decay_start = match &config.simulation.decay_start {
        Some(coords) => InitDist::Point(StatePoint::new(coords.clone())),
        None => InitDist::X0,
    };
    let decay = simulate::ergodicity_decay(
        &model,
        &decay_start,
        &nu_hat,
        config.simulation.horizon,
        config.simulation.decay_paths,
        rng::substream_seed(seed, streams::DECAY),
        kappa0,
    )?;
    let sample_path = simulate::run_chain(
        &model,
        &model.x0.clone(),
        config.simulation.sample_path_n,
        rng::substream_seed(seed, streams::SAMPLE_PATH),
    )?;

    #[derive(Serialize)]
    struct SimulateOut<'a> {
        drift: &'a Option<DriftEstimate>,
        burn_in: usize,
        measure_points: usize,
        measure_mean: Vec<f64>,
        measure_var: Vec<f64>,
        invariance: &'a simulate::InvarianceReport,
        decay: &'a DecayReport,
    }
    let dim = model.dim;
    write_json(
        out_dir,
        "simulate.json",
        hash,
        seed,
        &SimulateOut {
            drift: &out.drift_cache,
            burn_in,
            measure_points: nu_hat.len(),
            measure_mean: (0..dim).map(|i| nu_hat.mean_coord(i)).collect(),
            measure_var: (0..dim).map(|i| nu_hat.var_coord(i)).collect(),
            invariance: &invariance,
            decay: &decay,
        },
    )?;

    // CSV tables: measure support, decay curve, one sample path
    let coord_header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    write_csv(
        out_dir,
        "measure.csv",
        &format!("{},weight", coord_header.join(",")),
        &nu_hat
            .points
            .iter()
            .zip(&nu_hat.weights)
            .map(|(p, w)| {
                let coords: Vec<String> = p.coords.iter().map(|c| format!("{c}")).collect();
                format!("{},{w}", coords.join(","))
            })
            .collect::<Vec<_>>(),
    )?;
    write_csv(
        out_dir,
        "decay.csv",
        "n,w1",
        &decay.entries.iter().map(|(n, w)| format!("{n},{w}")).collect::<Vec<_>>(),
    )?;
    write_csv(
        out_dir,
        "path.csv",
        &format!("step,{},sum", coord_header.join(",")),
        &sample_path
            .states
            .iter()
            .zip(&sample_path.sums)
            .enumerate()
            .map(|(k, (p, s))| {
                let coords: Vec<String> = p.coords.iter().map(|c| format!("{c}")).collect();
                format!("{k},{},{s}", coords.join(","))
            })
            .collect::<Vec<_>>(),
    )?;
    out.nu_hat = Some(nu_hat);
    out.decay = Some(decay);

    // ---- variance -----------------------------------------------------
    if stage.wants_variance() {
        stages_run.push("variance".into());
        let nu_hat = out.nu_hat.as_ref().unwrap();
        let batch = variance::sigma2_batch(
            &model,
            &InitDist::X0,
            &config.variance.n_grid,
            config.variance.batch_paths,
            rng::substream_seed(seed, streams::BATCH),
        )?;
        let opts = PoissonOpts {
            paths: config.variance.poisson_paths,
            theta_samples: config.variance.theta_samples,
            n_cap: config.variance.neumann_cap,
            tail_rel: 1e-4,
        };
        let poisson = variance::sigma2_poisson(
            &model,
            nu_hat,
            config.variance.poisson_pairs,
            &opts,
            rng::substream_seed(seed, streams::POISSON),
        )?;
        let degeneracy = variance::degeneracy_test(
            &model,
            &batch,
            &poisson,
            built.observable.as_ref(),
            nu_hat,
            rng::substream_seed(seed, streams::DEGENERACY),
        )?;

        let gap = (batch.sigma2 - poisson.sigma2).abs();
        let allowance = 3.0 * (batch.se + poisson.se + poisson.tail_bound) + 1e-9;
        let consistent = gap <= allowance;
        #[derive(Serialize)]
        struct VarianceOut<'a> {
            batch: &'a VarianceEstimate,
            poisson: &'a VarianceEstimate,
            degeneracy: &'a DegeneracyReport,
            cross_gap: f64,
            cross_allowance: f64,
            consistent: bool,
        }
        write_json(
            out_dir,
            "variance.json",
            hash,
            seed,
            &VarianceOut {
                batch: &batch,
                poisson: &poisson,
                degeneracy: &degeneracy,
                cross_gap: gap,
                cross_allowance: allowance,
                consistent,
            },
        )?;
        out.batch = Some(batch);
        out.poisson = Some(poisson);
        out.degeneracy = Some(degeneracy);
        if !consistent {
            hard_failures.push(format!(
                "variance routes disagree: |{} - {}| > {allowance}",
                out.batch.as_ref().unwrap().sigma2,
                out.poisson.as_ref().unwrap().sigma2
            ));
            return Err(Error::NumericalInconsistency(
                "batch and Poisson variance estimates disagree beyond noise".into(),
            ));
        }
    }

    // ---- spectral -----------------------------------------------------
    if stage.wants_spectral() {
        if model.pi.is_finite_support() {
            stages_run.push("spectral".into());
            run_spectral(config, out_dir, hash, seed, &model, out, hard_failures)?;
        } else {
            let note = "spectral stage skipped: generative map distribution \
                        has no finite-support discretization";
            notes.push(note.into());
            if stage == Stage::Spectral {
                return Err(Error::Unsupported(note.into()));
            }
        }
    }

    // ---- clt ----------------------------------------------------------
    if stage.wants_clt() {
        stages_run.push("clt".into());
        let sigma2 = out
            .batch
            .as_ref()
            .map(|v| v.sigma2)
            .ok_or_else(|| Error::MissingDependency("variance stage did not run".into()))?;
        let clt = harness::clt_test(
            &model,
            sigma2,
            "batch",
            &InitDist::X0,
            &config.harness.clt_n_grid,
            config.harness.clt_paths,
            rng::substream_seed(seed, streams::CLT),
        )?;
        let local = harness::local_clt_test(
            &model,
            sigma2,
            config.harness.local_h,
            &InitDist::X0,
            &config.harness.local_n_grid,
            config.harness.local_paths,
            rng::substream_seed(seed, streams::LOCAL_CLT),
            out.scan.as_ref().map(|s| &s.verdict),
            config.harness.arithmetic_override,
        );
        let local = match local {
            Ok(r) => Some(r),
            Err(Error::HypothesisFailure(msg)) => {
                notes.push(format!("local CLT refused: {msg}"));
                None
            }
            Err(e) => return Err(e),
        };
        #[derive(Serialize)]
        struct CltOut<'a> {
            clt: &'a CltReport,
            local: &'a Option<LocalCltReport>,
        }
        write_json(out_dir, "clt.json", hash, seed, &CltOut { clt: &clt, local: &local })?;
        write_csv(
            out_dir,
            "clt.csv",
            "n,ks,ks_sqrt_n,paths",
            &clt.entries
                .iter()
                .map(|e| format!("{},{},{},{}", e.n, e.ks, e.ks_sqrt_n, e.paths))
                .collect::<Vec<_>>(),
        )?;
        out.clt = Some(clt);
        out.local = local;
    }

    Ok(())
}

fn run_spectral(
    config: &Config,
    out_dir: &Path,
    hash: &str,
    seed: u64,
    model: &SystemModel,
    out: &mut Outputs,
    hard_failures: &mut Vec<String>,
) -> Result<()> {
    let nu_hat = out.nu_hat.as_ref().expect("simulate stage ran");
    let grid = OperatorGrid::from_measure(model, nu_hat, config.spectral.nodes)?;
    let nu_w = grid.project_measure(nu_hat);

    // stochasticity and the trivial eigenpair at t = 0
    let p0 = spectral::build_operator(model, &grid, 0.0)?;
    let n = grid.len();
    let mut max_row_gap = 0.0f64;
    for j in 0..n {
        let sum: num_complex::Complex64 = (0..n).map(|k| p0.mat.get(j, k)).sum();
        max_row_gap = max_row_gap.max((sum.re - 1.0).abs().max(sum.im.abs()));
    }
    if max_row_gap > 1e-10 {
        hard_failures.push(format!("P(0) row sums deviate by {max_row_gap}"));
    }
    let pair0 = spectral::leading_eigen(&p0, &nu_w)?;
    if (pair0.lambda - num_complex::Complex64::new(1.0, 0.0)).norm() > 1e-8 {
        hard_failures.push(format!("lambda(0) = {} is not 1", pair0.lambda));
    }

    // eigenvalue table over [-t_max, t_max]
    let t_points = config.spectral.t_points.max(3);
    let ts: Vec<f64> = (0..t_points)
        .map(|i| -config.spectral.t_max + 2.0 * config.spectral.t_max * i as f64 / (t_points - 1) as f64)
        .collect();
    let mut table = Vec::with_capacity(ts.len());
    let mut max_modulus: f64 = 0.0;
    let mut max_conj_gap: f64 = 0.0;
    for &t in &ts {
        let fm = spectral::build_operator(model, &grid, t)?;
        let pair = spectral::leading_eigen(&fm, &nu_w)?;
        max_modulus = max_modulus.max(pair.lambda.norm());
        table.push((t, pair.lambda, pair.gap));
    }
    // conjugate symmetry over the symmetric grid
    for (i, &(t, lam, _)) in table.iter().enumerate() {
        if t > 0.0 {
            if let Some(&(_, lam_neg, _)) = table.get(ts.len() - 1 - i) {
                max_conj_gap = max_conj_gap.max((lam_neg - lam.conj()).norm());
            }
        }
    }
    if max_modulus > 1.0 + 1e-8 {
        hard_failures.push(format!("|lambda(t)| = {max_modulus} exceeds 1"));
    }
    if max_conj_gap > 1e-10 {
        hard_failures.push(format!("lambda(-t) vs conj lambda(t) gap {max_conj_gap}"));
    }

    let expansion = spectral::lambda_expansion(
        model,
        &grid,
        &nu_w,
        &ts,
        config.spectral.fd_step,
        out.batch.as_ref().map(|v| v.sigma2),
    )?;
    let taylor = spectral::taylor_residuals(
        model,
        &grid,
        &config.spectral.taylor_orders,
        &config.spectral.taylor_ladder,
    )?;
    let scan = spectral::peripheral_scan(
        model,
        &grid,
        &nu_w,
        &config.spectral.scan_ts,
        config.spectral.scan_margin,
    )?;

    // three-way consistency with the Monte Carlo variance routes
    if let (Some(batch), Some(poisson)) = (&out.inner.batch, &out.inner.poisson) {
        let tol = 3.0 * (batch.se + poisson.se + poisson.tail_bound)
            + 0.03 * expansion.sigma2_hat.abs()
            + 1e-9;
        for (label, mc) in [("batch", batch.sigma2), ("poisson", poisson.sigma2)] {
            if (expansion.sigma2_hat - mc).abs() > tol {
                hard_failures.push(format!(
                    "spectral sigma2 {} vs {label} {mc} beyond tolerance {tol}",
                    expansion.sigma2_hat
                ));
            }
        }
    }

    #[derive(Serialize)]
    struct SpectralOut<'a> {
        nodes: usize,
        window: (f64, f64),
        leak_mass: f64,
        max_row_gap: f64,
        lambda0: num_complex::Complex64,
        gap_at_0: f64,
        second_modulus_at_0: f64,
        max_modulus: f64,
        max_conjugate_gap: f64,
        expansion: &'a ExpansionReport,
        taylor: &'a [spectral::TaylorResidualRow],
        scan: &'a PeripheralScan,
    }
    write_json(
        out_dir,
        "spectral.json",
        hash,
        seed,
        &SpectralOut {
            nodes: grid.len(),
            window: (grid.nodes[0], *grid.nodes.last().unwrap()),
            leak_mass: p0.leak_mass,
            max_row_gap,
            lambda0: pair0.lambda,
            gap_at_0: pair0.gap,
            second_modulus_at_0: pair0.second_modulus,
            max_modulus,
            max_conjugate_gap: max_conj_gap,
            expansion: &expansion,
            taylor: &taylor,
            scan: &scan,
        },
    )?;
    if config.spectral.export_operator {
        let rows: Vec<String> = (0..n)
            .map(|j| {
                let mut cells = Vec::with_capacity(n);
                for k in 0..n {
                    let z = p0.mat.get(j, k);
                    cells.push(format!("{}", z.re));
                }
                cells.join(",")
            })
            .collect();
        write_csv(out_dir, "operator_p0.csv", &format!("# {n} x {n} row-major P(0)"), &rows)?;
    }
    write_csv(
        out_dir,
        "spectral_table.csv",
        "t,re_lambda,im_lambda,modulus,gap",
        &table
            .iter()
            .map(|(t, lam, gap)| format!("{t},{},{},{},{gap}", lam.re, lam.im, lam.norm()))
            .collect::<Vec<_>>(),
    )?;
    out.expansion = Some(expansion);
    out.scan = Some(scan);

    if !hard_failures.is_empty() {
        return Err(Error::NumericalInconsistency(hard_failures.join("; ")));
    }
    Ok(())
}

/// Convenience wrapper: parse a config file and run.
pub fn run_from_file(path: &Path, out_dir: &Path, stage: Stage, seed_override: Option<u64>) -> Result<RunSummary> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config { path: path.display().to_string(), detail: e.to_string() })?;
    let mut config = Config::from_json(&text)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    run_experiment(&config, out_dir, stage)
}

/// Output directory helper used by the CLI: <out>/<stage name>.
pub fn default_out_dir(base: &Path, stage: Stage) -> PathBuf {
    let name = match stage {
        Stage::Diagnose => "diagnose",
        Stage::Simulate => "simulate",
        Stage::Variance => "variance",
        Stage::Spectral => "spectral",
        Stage::Clt => "clt",
        Stage::Full => "run",
    };
    base.join(name)
}

/// Initial-distribution helper shared with the CLI for ad-hoc decay runs.
pub fn init_from_coords(coords: Option<Vec<f64>>) -> InitDist {
    match coords {
        Some(c) => InitDist::Point(StatePoint::new(c)),
        None => InitDist::X0,
    }
}

/// Arc-wrapped empirical measure for initial distributions.
pub fn init_from_measure(m: EmpiricalMeasure) -> InitDist {
    InitDist::Empirical(Arc::new(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Config, ModelConfig};

    fn quick_config() -> Config {
        let mut cfg = Config::example();
        // small sizes so the pipeline test stays fast
        cfg.diagnostics.nsamples = 2000;
        cfg.simulation.cesaro_n = 512;
        cfg.simulation.cesaro_reps = 4;
        cfg.simulation.drift_n = 8192;
        cfg.simulation.drift_paths = 8;
        cfg.simulation.decay_paths = 512;
        cfg.simulation.sample_path_n = 64;
        cfg.variance.n_grid = vec![128, 512, 2048];
        cfg.variance.batch_paths = 2048;
        cfg.variance.poisson_pairs = 1024;
        cfg.variance.poisson_paths = 48;
        cfg.spectral.nodes = 129;
        cfg.spectral.t_points = 5;
        cfg.spectral.taylor_ladder = vec![0.2, 0.1];
        cfg.spectral.scan_ts = vec![0.8, 1.6];
        cfg.harness.clt_n_grid = vec![64, 256, 1024];
        cfg.harness.clt_paths = 2048;
        cfg.harness.local_n_grid = vec![256, 1024];
        cfg.harness.local_paths = 4096;
        cfg
    }

    #[test]
    fn full_pipeline_doubling() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config();
        let summary = run_experiment(&cfg, dir.path(), Stage::Full).unwrap();
        assert_eq!(summary.exit_code, 0);
        for name in [
            "diagnostics.json",
            "simulate.json",
            "variance.json",
            "spectral.json",
            "clt.json",
            "summary.json",
            "measure.csv",
            "decay.csv",
            "path.csv",
            "spectral_table.csv",
            "clt.csv",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        let sb = summary.sigma2_batch.unwrap();
        let sp = summary.sigma2_poisson.unwrap();
        let ss = summary.sigma2_spectral.unwrap();
        assert!((sb - 0.25).abs() < 0.05, "batch {sb}");
        assert!((sp - 0.25).abs() < 0.05, "poisson {sp}");
        assert!((ss - 0.25).abs() < 0.01, "spectral {ss}");
    }

    #[test]
    fn identity_model_stops_with_hypothesis_failure() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config();
        cfg.model = ModelConfig::AffineAtoms {
            dim: 1,
            alpha: 1.0,
            atoms: vec![crate::config::AffineAtomConfig {
                a: vec![1.0],
                b: vec![0.0],
                tag: 0.0,
            }],
            weights: vec![1.0],
        };
        let err = run_experiment(&cfg, dir.path(), Stage::Full).unwrap_err();
        assert!(matches!(err, Error::HypothesisFailure(_)));
        assert_eq!(exit_code_for(&err), 3);
        // diagnostics and summary were still written
        assert!(dir.path().join("diagnostics.json").exists());
        assert!(dir.path().join("summary.json").exists());
        assert!(!dir.path().join("variance.json").exists());
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let cfg = quick_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir_a.path(), Stage::Full).unwrap();
        run_experiment(&cfg, dir_b.path(), Stage::Full).unwrap();
        for name in [
            "diagnostics.json",
            "simulate.json",
            "variance.json",
            "spectral.json",
            "clt.json",
            "summary.json",
            "measure.csv",
            "decay.csv",
            "path.csv",
            "spectral_table.csv",
            "clt.csv",
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn generative_model_skips_spectral_in_full_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config();
        cfg.model = ModelConfig::Ar1Gaussian { a: 0.5 };
        cfg.diagnostics.nsamples = 20_000;
        cfg.variance.poisson_pairs = 2048;
        let summary = run_experiment(&cfg, dir.path(), Stage::Full).unwrap();
        assert!(summary.notes.iter().any(|n| n.contains("spectral stage skipped")));
        assert!(!dir.path().join("spectral.json").exists());
        assert!(dir.path().join("clt.json").exists());
    }
}
