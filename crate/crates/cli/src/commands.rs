use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use synergy::analysis::{
    build_comparison_report, grasp_force_closure, ComparisonOptions, ForceClosureReport,
    MarginOptions,
};
use synergy::fixtures::OPEN_POSE_WEIGHT;
use synergy::forceopt::{force_optimize_with, OptimizationReport, ParameterGrid, SearchOptions};
use synergy::grasp::{GraspSample, GraspSetDocument};
use synergy::hand::HandKinematics;
use synergy::kinopt::{kinematic_optimize_with, KinematicOptions};

use crate::config::{Cli, Command, RunConfig};
use crate::exit::{Classify, Code, Failure, Internal, Outcome};

pub const SCHEMA_VERSION: u32 = 1;

pub const FORCE_REPORT: &str = "force_report.json";
pub const KIN_REPORT: &str = "kin_report.json";

/// Common wrapper of every JSON file the tool writes. Only `timing` varies
/// between runs on identical inputs.
#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    command: &'a str,
    config: &'a RunConfig,
    timing: Timing,
    report: &'a T,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    combos_per_second: Option<f64>,
    threads: usize,
}

#[derive(Deserialize)]
struct Stored<T> {
    schema_version: u32,
    report: T,
}

#[derive(Serialize)]
struct ValidationReport {
    all_closure: bool,
    grasps: Vec<ForceClosureReport>,
}

pub fn run(cli: &Cli) -> Outcome<()> {
    let cfg = &cli.config;
    match &cli.command {
        Command::Validate => validate(cfg),
        Command::ForceOpt { skip_validate } => {
            if !skip_validate {
                validate(cfg)?;
            }
            force_opt(cfg).map(drop)
        }
        Command::KinOpt => kin_opt(cfg).map(drop),
        Command::Analyze { whole_hand_pca } => analyze(cfg, *whole_hand_pca),
        Command::All { whole_hand_pca } => {
            validate(cfg)?;
            force_opt(cfg)?;
            kin_opt(cfg)?;
            analyze(cfg, *whole_hand_pca)
        }
    }
}

fn validate(cfg: &RunConfig) -> Outcome<()> {
    let start = Instant::now();
    let hand = load_hand(cfg)?;
    let grasps = load_grasps(cfg, &hand)?;
    for path in [&cfg.force_grid, &cfg.kin_grid] {
        load_grid(path)?;
    }
    let options = MarginOptions {
        threads: cfg.threads,
        ..MarginOptions::default()
    };
    let mut reports = Vec::new();
    for grasp in grasps.iter().filter(|g| !g.contacts.is_empty()) {
        let r = grasp_force_closure(&hand, grasp, &options)
            .classified(|| format!("grasp `{}`", grasp.name))?;
        println!(
            "{:<16} margin {:>12} {}",
            r.grasp,
            format!("{:.6}", r.margin),
            if r.is_closure {
                "closure"
            } else {
                "NOT closure"
            }
        );
        reports.push(r);
    }
    let failing: Vec<&str> = reports
        .iter()
        .filter(|r| !r.is_closure)
        .map(|r| r.grasp.as_str())
        .collect();
    let report = ValidationReport {
        all_closure: failing.is_empty(),
        grasps: reports.clone(),
    };
    write_envelope(cfg, "validation.json", "validate", &report, start, None)?;
    if !failing.is_empty() {
        return Err(Failure::new(
            Code::Closure,
            anyhow::anyhow!("grasps without force closure: {}", failing.join(", ")),
        ));
    }
    println!("{} grasps checked, all force closure", reports.len());
    Ok(())
}

fn force_opt(cfg: &RunConfig) -> Outcome<OptimizationReport> {
    let hand = load_hand(cfg)?;
    let grasps = load_grasps(cfg, &hand)?;
    let grid = load_grid(&cfg.force_grid)?;
    let start = Instant::now();
    let report = force_optimize_with(&hand, &grasps, &grid, &search_options(cfg))
        .classified(|| "force optimization".into())?;
    finish_phase(
        cfg,
        "force-opt",
        FORCE_REPORT,
        "force_trace.csv",
        &report,
        start,
    )?;
    Ok(report)
}

fn kin_opt(cfg: &RunConfig) -> Outcome<OptimizationReport> {
    let hand = load_hand(cfg)?;
    let poses = with_open_pose(load_grasps(cfg, &hand)?, &hand, cfg.open_pose_weight);
    let grid = load_grid(&cfg.kin_grid)?;
    let r_star = match cfg.r_star_m() {
        Some(r) => expand_mirrors(&hand, r)?,
        None => {
            let force: OptimizationReport = read_report(
                &cfg.out.join(FORCE_REPORT),
                "run force-opt first or pass --r-star-mm",
            )?;
            force.best_params.moment_arm
        }
    };
    let options = KinematicOptions {
        search: search_options(cfg),
        ..KinematicOptions::default()
    };
    let start = Instant::now();
    let report = kinematic_optimize_with(&hand, &poses, &grid, &r_star, &options)
        .classified(|| "kinematic optimization".into())?;
    finish_phase(cfg, "kin-opt", KIN_REPORT, "kin_trace.csv", &report, start)?;
    Ok(report)
}

fn analyze(cfg: &RunConfig, whole_hand_pca: bool) -> Outcome<()> {
    let start = Instant::now();
    let hand = load_hand(cfg)?;
    let poses = load_grasps(cfg, &hand)?;
    let force: OptimizationReport =
        read_report(&cfg.out.join(FORCE_REPORT), "run force-opt first")?;
    let kin: OptimizationReport = read_report(&cfg.out.join(KIN_REPORT), "run kin-opt first")?;
    let options = ComparisonOptions { whole_hand_pca };
    let report =
        build_comparison_report(&hand, &kin.best_params, &poses, &[&force, &kin], &options)
            .classified(|| "comparison".into())?;

    let csv =
        |name: &str| fs::File::create(cfg.out.join(name)).internal(|| format!("creating {name}"));
    report
        .write_mrm_vs_pca_csv(csv("mrm_vs_pca.csv")?)
        .internal(|| "writing mrm_vs_pca.csv".into())?;
    report
        .write_distances_csv(csv("distances.csv")?)
        .internal(|| "writing distances.csv".into())?;
    write_envelope(cfg, "comparison.json", "analyze", &report, start, None)?;

    for f in &report.fingers {
        match (f.manifold_error.as_deref(), f.alignment) {
            (Some(e), _) => println!("{:<8} manifold unavailable: {e}", f.finger),
            (None, Some(a)) => {
                println!("{:<8} |cos(manifold, first component)| = {a:.4}", f.finger)
            }
            (None, None) => println!("{:<8} no principal component", f.finger),
        }
    }
    for p in &report.phases {
        if let Some(pct) = p.reduction_percent {
            println!(
                "{:?}: Q {:.6} -> {:.6} ({pct:.1}% reduction)",
                p.phase, p.baseline_q, p.optimized_q
            );
        }
    }
    Ok(())
}

fn search_options(cfg: &RunConfig) -> SearchOptions {
    let mut options = SearchOptions {
        threads: cfg.threads,
        trace: cfg.trace,
        ..SearchOptions::default()
    };
    options.qp.tol = cfg.qp_tol;
    options
}

fn finish_phase(
    cfg: &RunConfig,
    command: &str,
    file: &str,
    trace_file: &str,
    report: &OptimizationReport,
    start: Instant,
) -> Outcome<()> {
    let secs = start.elapsed().as_secs_f64();
    let rate = report.combos_evaluated as f64 / secs.max(1e-9);
    write_envelope(cfg, file, command, report, start, Some(rate))?;
    if cfg.trace {
        let out = fs::File::create(cfg.out.join(trace_file))
            .internal(|| format!("creating {trace_file}"))?;
        report
            .write_trace_csv(out)
            .internal(|| format!("writing {trace_file}"))?;
    }
    let best: Vec<String> = report
        .parameters
        .iter()
        .zip(&report.best_combo)
        .map(|(p, &i)| format!("{}={} {}", p.name, p.values[i], p.kind.si_unit()))
        .collect();
    println!("{command}: best {}", best.join(" "));
    println!(
        "{command}: Q {:.6} (baseline {:.6}), {} combos in {secs:.1} s ({rate:.0}/s)",
        report.best_q, report.baseline_q, report.combos_evaluated
    );
    Ok(())
}

fn write_envelope<T: Serialize>(
    cfg: &RunConfig,
    file: &str,
    command: &str,
    report: &T,
    start: Instant,
    combos_per_second: Option<f64>,
) -> Outcome<()> {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config: cfg,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            combos_per_second,
            threads: cfg.threads,
        },
        report,
    };
    fs::create_dir_all(&cfg.out).internal(|| format!("creating {}", cfg.out.display()))?;
    let text =
        serde_json::to_string_pretty(&envelope).internal(|| format!("serializing {file}"))?;
    let path = cfg.out.join(file);
    fs::write(&path, text + "\n").internal(|| format!("writing {}", path.display()))
}

fn read_input(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::new(
            Code::Parse,
            anyhow::Error::new(e).context(format!("reading {}", path.display())),
        )
    })
}

fn load_hand(cfg: &RunConfig) -> Outcome<HandKinematics> {
    HandKinematics::from_json(&read_input(&cfg.hand)?).classified(|| cfg.hand.display().to_string())
}

fn load_grasps(cfg: &RunConfig, hand: &HandKinematics) -> Outcome<Vec<GraspSample>> {
    let text = read_input(&cfg.grasps)?;
    let doc: GraspSetDocument = serde_json::from_str(&text)
        .map_err(synergy::Error::from)
        .classified(|| cfg.grasps.display().to_string())?;
    doc.into_samples(hand, Some(cfg.edges as usize))
        .classified(|| cfg.grasps.display().to_string())
}

fn load_grid(path: &Path) -> Outcome<ParameterGrid> {
    ParameterGrid::from_json(&read_input(path)?).classified(|| path.display().to_string())
}

fn read_report<T: DeserializeOwned>(path: &Path, hint: &str) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(
            Code::MissingDependency,
            anyhow::Error::new(e).context(format!("reading {} ({hint})", path.display())),
        )
    })?;
    let stored: Stored<T> = serde_json::from_str(&text).map_err(|e| {
        Failure::new(
            Code::Parse,
            anyhow::Error::new(e).context(path.display().to_string()),
        )
    })?;
    if stored.schema_version != SCHEMA_VERSION {
        return Err(Failure::new(
            Code::Parse,
            anyhow::anyhow!(
                "{}: schema_version {} is not supported",
                path.display(),
                stored.schema_version
            ),
        ));
    }
    Ok(stored.report)
}

/// Copies each inline moment arm to the joints that must share it.
fn expand_mirrors(
    hand: &HandKinematics,
    given: BTreeMap<String, f64>,
) -> Outcome<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (id, v) in given {
        let j = hand.joint_index(&id).ok_or_else(|| {
            Failure::new(
                Code::Parse,
                anyhow::anyhow!("--r-star-mm: unknown joint `{id}`"),
            )
        })?;
        for m in hand.mirror_group_of(j) {
            out.insert(hand.joints[m].id.clone(), v);
        }
    }
    Ok(out)
}

/// Applies the open-pose weight override, adding an all-zero open pose if the
/// set has none.
fn with_open_pose(
    mut poses: Vec<GraspSample>,
    hand: &HandKinematics,
    weight: Option<f64>,
) -> Vec<GraspSample> {
    if !poses.iter().any(GraspSample::is_open) {
        let mut open = GraspSample::pose("open", vec![0.0; hand.n_joints()]);
        open.open = true;
        open.weight = OPEN_POSE_WEIGHT;
        poses.push(open);
    }
    if let Some(w) = weight {
        for p in poses.iter_mut().filter(|p| p.is_open()) {
            p.weight = w;
        }
    }
    poses
}
