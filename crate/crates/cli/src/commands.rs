//! Subcommand bodies. Each takes the loaded manifest plus its own
//! flags, does the work, writes any artifacts under the output
//! directory, and prints a short human-readable account to stdout.
//!
//! CSV reports accumulate across runs (append-safe, schema-checked);
//! `manifest.json` always reflects the most recent run that wrote it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flore_core::em::{cm_start, em_refine, EmProblem};
use flore_core::linsys::SketchOperator;
use flore_core::model::{load_checkpoint, save_checkpoint};
use flore_core::sketch::{CountMin, FloreDataPlane, PlaneConfig};
use flore_core::stream::save_trace;

use crate::ablate::{self, AblationVariant};
use crate::config::{EstimatorKind, ExperimentConfig, TraceConfig};
use crate::experiment::{self, trace_summary};
use crate::pipeline::{self, GenerativeOptions, GRID_ROWS};
use crate::report::{self, RunManifest, TraceSummary};
use crate::robustness::{self, Scenario};
use crate::{CliError, CliResult};

/// Manifest plus resolved output directory, shared by every subcommand.
pub struct Context {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
}

impl Context {
    fn ensure_out(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            CliError::runtime(format!("cannot create {}: {e}", self.out_dir.display()))
        })
    }

    fn budget_label(budget_bytes: usize) -> String {
        format!("{}kb", budget_bytes / 1024)
    }

    fn plane_path(&self, budget_bytes: usize) -> PathBuf {
        self.out_dir
            .join(format!("plane_{}.bin", Self::budget_label(budget_bytes)))
    }

    fn checkpoint_path(&self, budget_bytes: usize) -> PathBuf {
        self.out_dir
            .join(format!("checkpoint_{}.bin", Self::budget_label(budget_bytes)))
    }
}

fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(out, "{b:02x}").expect("string write");
    }
    out
}

/// `generate`: materialize the synthetic workload and save it as a
/// trace file other runs (or other tools) can replay.
pub fn cmd_generate(ctx: &Context) -> CliResult<()> {
    if !matches!(ctx.config.trace, TraceConfig::Synthetic(_)) {
        return Err(CliError::config(
            "generate needs a [trace.synthetic] section; the manifest points at a file",
        ));
    }
    let bundle = pipeline::build_trace(&ctx.config)?;
    ctx.ensure_out()?;
    let path = ctx.out_dir.join("trace.csv");
    save_trace(&bundle.trace, &path).map_err(CliError::from)?;
    println!(
        "wrote {} items over {} keys (total value {}) to {}",
        bundle.items(),
        bundle.keys(),
        bundle.trace.total_value(),
        path.display()
    );
    Ok(())
}

/// `summarize`: replay the stream into a data plane at each budget and
/// persist the plane snapshots.
pub fn cmd_summarize(ctx: &Context) -> CliResult<()> {
    let bundle = pipeline::build_trace(&ctx.config)?;
    ctx.ensure_out()?;
    for budget in ctx.config.budgets_bytes() {
        let plane_config = PlaneConfig::from_budget(
            budget,
            bundle.keys().max(1),
            ctx.config.key_len(),
            ctx.config.seeds.sketch,
        )
        .map_err(CliError::from)?;
        let mut plane = FloreDataPlane::new(plane_config).map_err(CliError::from)?;
        plane.insert_trace(&bundle.trace).map_err(CliError::from)?;
        let path = ctx.plane_path(budget);
        std::fs::write(&path, plane.to_snapshot())?;
        let stats = plane.stats();
        println!(
            "{}: tracked {} keys, filter installs {}, evictions {}, grid mass {} -> {}",
            Context::budget_label(budget),
            plane.tracked().len(),
            stats.installs,
            stats.evictions,
            stats.light_mass,
            path.display()
        );
    }
    Ok(())
}

/// `refine`: sharpen plain count-min point queries with multiplicative
/// residual-redistribution steps and record the residual trajectory.
pub fn cmd_refine(ctx: &Context, steps: Option<usize>, no_accept: bool) -> CliResult<()> {
    let bundle = pipeline::build_trace(&ctx.config)?;
    ctx.ensure_out()?;
    let mut em = ctx.config.em_config();
    if let Some(steps) = steps {
        if steps == 0 {
            return Err(CliError::config("--steps must be at least 1"));
        }
        em.steps = steps;
    }
    if no_accept {
        em.accept_only_improvements = false;
    }
    let index = &bundle.truth.index;
    for budget in ctx.config.budgets_bytes() {
        let width = budget / (GRID_ROWS * 4);
        if width == 0 {
            return Err(CliError::runtime(format!(
                "budget of {budget} bytes leaves no room for counters"
            )));
        }
        let mut cm = CountMin::new(GRID_ROWS, width, ctx.config.seeds.sketch)
            .map_err(CliError::from)?;
        for (key, value) in bundle.trace.iter() {
            let value = u64::try_from(value)
                .map_err(|_| CliError::runtime(format!("negative item value {value}")))?;
            cm.update(key, value).map_err(CliError::from)?;
        }
        let b = cm.flatten();
        let op = SketchOperator::for_count_min(&cm, index).map_err(CliError::from)?;
        let problem = EmProblem::new(&op, &b).map_err(CliError::from)?;
        let f0 = cm_start(&cm, index);
        let outcome = em_refine(&problem, &f0, &em).map_err(CliError::from)?;

        let label = Context::budget_label(budget);
        let est_path = ctx.out_dir.join(format!("refined_{label}.csv"));
        let rows: Vec<Vec<String>> = index
            .iter()
            .enumerate()
            .map(|(i, key)| {
                vec![
                    crate::config::SCHEMA_VERSION.to_string(),
                    to_hex(key),
                    report::num(f0[i]),
                    report::num(outcome.solution[i]),
                ]
            })
            .collect();
        report::append_csv(&est_path, &["schema", "key", "start", "refined"], &rows)?;

        let res_path = ctx.out_dir.join(format!("residuals_{label}.csv"));
        let rows: Vec<Vec<String>> = outcome
            .residuals
            .iter()
            .enumerate()
            .map(|(step, r)| {
                vec![
                    crate::config::SCHEMA_VERSION.to_string(),
                    step.to_string(),
                    report::num(*r),
                ]
            })
            .collect();
        report::append_csv(&res_path, &["schema", "step", "residual"], &rows)?;

        println!(
            "{label}: {} of {} steps accepted, residual {} -> {}, wrote {} and {}",
            outcome.accepted_steps,
            em.steps,
            report::num(outcome.residuals[0]),
            report::num(*outcome.residuals.last().expect("non-empty residuals")),
            est_path.display(),
            res_path.display()
        );
    }
    Ok(())
}

/// `train`: run the generative pipeline at each budget and persist the
/// model checkpoint plus the plane it was trained against.
pub fn cmd_train(ctx: &Context) -> CliResult<()> {
    let bundle = pipeline::build_trace(&ctx.config)?;
    ctx.ensure_out()?;
    let opts = GenerativeOptions::standard(&ctx.config);
    for budget in ctx.config.budgets_bytes() {
        let run = pipeline::prepare_generative(&ctx.config, &bundle, budget, &opts)?;
        let ckpt = ctx.checkpoint_path(budget);
        save_checkpoint(&run.model, &ckpt).map_err(CliError::from)?;
        let plane_path = ctx.plane_path(budget);
        std::fs::write(&plane_path, run.plane.to_snapshot())?;
        let label = Context::budget_label(budget);
        match (&run.trained, &run.note) {
            (Some(report_), _) => {
                report::append_training_curve(
                    &ctx.out_dir,
                    EstimatorKind::Flore.name(),
                    budget,
                    report_,
                )?;
                let last = report_.history.last().expect("non-empty history");
                println!(
                    "{label}: trained {} epochs (final loss {}), wrote {} and {}",
                    report_.epochs_run,
                    report::num(last.total),
                    ckpt.display(),
                    plane_path.display()
                );
            }
            (None, note) => println!(
                "{label}: {} — wrote {} and {}",
                note.as_deref().unwrap_or("training skipped"),
                ckpt.display(),
                plane_path.display()
            ),
        }
    }
    Ok(())
}

/// `recover`: load persisted plane + checkpoint pairs and emit per-key
/// frequency estimates.
pub fn cmd_recover(ctx: &Context) -> CliResult<()> {
    for budget in ctx.config.budgets_bytes() {
        let label = Context::budget_label(budget);
        let plane_path = ctx.plane_path(budget);
        let ckpt_path = ctx.checkpoint_path(budget);
        for p in [&plane_path, &ckpt_path] {
            if !p.exists() {
                return Err(CliError::runtime(format!(
                    "{} is missing; run the train subcommand first",
                    p.display()
                )));
            }
        }
        let bytes = std::fs::read(&plane_path)?;
        let plane = FloreDataPlane::from_snapshot(&bytes).map_err(CliError::from)?;
        let model = load_checkpoint(&ckpt_path).map_err(CliError::from)?;
        let (estimates, sketch_empty) = pipeline::recover_estimates(
            &plane,
            &model,
            plane.tracked(),
            plane.tracked(),
            ctx.config.seeds.recovery,
        )?;
        let est_path = ctx.out_dir.join(format!("estimates_{label}.csv"));
        let rows: Vec<Vec<String>> = plane
            .tracked()
            .iter()
            .zip(&estimates)
            .map(|(key, est)| {
                vec![
                    crate::config::SCHEMA_VERSION.to_string(),
                    to_hex(key),
                    report::num(*est),
                ]
            })
            .collect();
        report::append_csv(&est_path, &["schema", "key", "estimate"], &rows)?;
        println!(
            "{label}: recovered {} keys{} -> {}",
            estimates.len(),
            if sketch_empty {
                " (grid empty; filter contents returned exactly)"
            } else {
                ""
            },
            est_path.display()
        );
    }
    Ok(())
}

/// `evaluate`: the full estimator × budget sweep with reports.
pub fn cmd_evaluate(ctx: &Context) -> CliResult<()> {
    let bundle = pipeline::build_trace(&ctx.config)?;
    let outcome = experiment::run_experiment(&ctx.config, &bundle);
    experiment::write_reports(&ctx.out_dir, &ctx.config, &outcome)?;
    for cell in &outcome.cells {
        let label = Context::budget_label(cell.budget_bytes);
        match &cell.outcome {
            Ok(m) => println!(
                "{} @ {label}: aae={:.4} are={:.4} wmre={:.4} hh_f1={:.3}{}",
                cell.estimator,
                m.metrics.aae,
                m.metrics.are,
                m.metrics.wmre,
                m.metrics.hh_f1,
                m.note
                    .as_deref()
                    .map(|n| format!(" ({n})"))
                    .unwrap_or_default()
            ),
            Err(e) => println!("{} @ {label}: FAILED ({e})", cell.estimator),
        }
    }
    println!("reports in {}", ctx.out_dir.display());
    if outcome.has_failures() {
        let failed = outcome.cells.iter().filter(|c| c.outcome.is_err()).count();
        return Err(CliError::runtime(format!(
            "{failed} of {} cells failed; partial reports were written",
            outcome.cells.len()
        )));
    }
    Ok(())
}

/// `rip-bench`: restricted-isometry distances across the operator zoo.
pub fn cmd_rip_bench(ctx: &Context) -> CliResult<()> {
    let rows = crate::ripbench::run(&ctx.config.rip)?;
    report::write_rip(&ctx.out_dir, &rows)?;
    let manifest = RunManifest {
        schema: crate::config::SCHEMA_VERSION,
        command: "rip-bench",
        config: &ctx.config,
        trace: TraceSummary {
            items: 0,
            distinct_keys: 0,
            total_value: 0,
        },
        cells: Vec::new(),
        rip: rows.clone(),
        ablation: Vec::new(),
        robustness: Vec::new(),
    };
    report::write_manifest(&ctx.out_dir, &manifest)?;
    for row in &rows {
        println!(
            "{:<12} m={} n={} s={} trials={}: distance {}",
            row.kind,
            row.m,
            row.n,
            row.s,
            row.trials,
            report::num(row.distance)
        );
    }
    Ok(())
}

/// `ablate`: retrain with objective terms removed and compare.
pub fn cmd_ablate(ctx: &Context, variant: Option<&str>) -> CliResult<()> {
    let variants: Vec<AblationVariant> = match variant {
        Some(name) => vec![AblationVariant::parse(name)?],
        None => AblationVariant::ALL.to_vec(),
    };
    let bundle = pipeline::build_trace(&ctx.config)?;
    let outcomes = ablate::run_ablation(&ctx.config, &bundle, &variants)?;
    let summaries: Vec<_> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let cdf: Vec<_> = outcomes.iter().flat_map(|o| o.cdf.iter().cloned()).collect();
    report::write_ablation(&ctx.out_dir, &summaries, &cdf, &ctx.config.seeds)?;
    let manifest = RunManifest {
        schema: crate::config::SCHEMA_VERSION,
        command: "ablate",
        config: &ctx.config,
        trace: trace_summary(&bundle),
        cells: Vec::new(),
        rip: Vec::new(),
        ablation: summaries.clone(),
        robustness: Vec::new(),
    };
    report::write_manifest(&ctx.out_dir, &manifest)?;
    for s in &summaries {
        println!(
            "{:<7} aae={:.4} are={:.4} wmre={:.4} weights con/rec/inv/ort/sp = {:?}",
            s.variant, s.aae, s.are, s.wmre, s.weights
        );
    }
    Ok(())
}

/// `robustness`: degradation under one workload-drift scenario.
pub fn cmd_robustness(ctx: &Context, scenario: &str, factor: f64) -> CliResult<()> {
    let scenario = Scenario::parse(scenario)?;
    let bundle = pipeline::build_trace(&ctx.config)?;
    let row = robustness::run_scenario(&ctx.config, &bundle, scenario, factor)?;
    report::write_robustness(&ctx.out_dir, std::slice::from_ref(&row), &ctx.config.seeds)?;
    let manifest = RunManifest {
        schema: crate::config::SCHEMA_VERSION,
        command: "robustness",
        config: &ctx.config,
        trace: trace_summary(&bundle),
        cells: Vec::new(),
        rip: Vec::new(),
        ablation: Vec::new(),
        robustness: vec![row.clone()],
    };
    report::write_manifest(&ctx.out_dir, &manifest)?;
    println!(
        "{} @ factor {}: base ARE {} -> shifted ARE {} ({}{:.2}% degradation)",
        row.scenario,
        row.factor,
        report::num(row.base_are),
        report::num(row.shifted_are),
        if row.degradation_pct >= 0.0 { "+" } else { "" },
        row.degradation_pct
    );
    Ok(())
}

/// Shared by tests: the manifest echo written next to reports names the
/// directory everything else lands in.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(report::MANIFEST_FILE)
}
