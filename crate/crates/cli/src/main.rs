//! `ponqkd`: command-line front end for the GPON/QKD coexistence simulator.
//!
//! Exit codes: 0 success, 1 domain error (invalid plant, infeasible
//! scenario, failed fit), 2 I/O or usage error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ponqkd::calibrate::{fit, CalibrationContext, CalibrationParams, FitOptions, FitReport, Observations};
use ponqkd::optics::{path_budget, path_loss_db};
use ponqkd::simrun::{run_scenario, sweep, write_sweep_csv, write_time_series_csv, Scenario, Summary, SweepRow};
use ponqkd::topology::validate_plan;
use ponqkd::ScenarioDocument;

#[derive(Parser)]
#[command(name = "ponqkd", version, about = "Simulate a QKD link sharing a GPON access plant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario document; violations go to stderr, one per line.
    Validate(DocArgs),
    /// Element-by-element loss between two nodes.
    Budget(BudgetArgs),
    /// Analytic steady state: noise breakdown and key-rate report.
    Report(ReportArgs),
    /// Seeded time series for one scenario.
    Simulate(SimulateArgs),
    /// One seeded run per ONT count, as a load table.
    Sweep(SweepArgs),
    /// Fit the free physical parameters to measured load rows.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct DocArgs {
    /// Scenario document (JSON).
    document: PathBuf,
    /// Override a document field by dotted path, e.g. `qkd.mu=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "PONQKD_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Args)]
struct BudgetArgs {
    #[command(flatten)]
    doc: DocArgs,
    /// Start node (default: Alice).
    #[arg(long)]
    from: Option<String>,
    /// End node (default: Bob).
    #[arg(long)]
    to: Option<String>,
    #[arg(long, default_value_t = 1310.0)]
    wavelength: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct Selection {
    /// Light the first N ONTs in document order (overrides the document).
    #[arg(long, conflicts_with = "active")]
    onts: Option<usize>,
    /// Comma-separated ONT ids to light (overrides the document).
    #[arg(long, value_delimiter = ',')]
    active: Option<Vec<String>>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    doc: DocArgs,
    #[command(flatten)]
    selection: Selection,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Run length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Block length in seconds.
    #[arg(long)]
    block: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    doc: DocArgs,
    #[command(flatten)]
    selection: Selection,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    doc: DocArgs,
    /// ONT counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    onts: Vec<usize>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    doc: DocArgs,
    /// CSV with header `n_onts,qber,skr_bps,back_refl_dbm`.
    #[arg(long)]
    observations: PathBuf,
    /// Random starts besides the document's own parameters.
    #[arg(long, default_value_t = FitOptions::default().restarts)]
    restarts: usize,
    /// Seed for the random starts.
    #[arg(long, default_value_t = FitOptions::default().seed)]
    seed: u64,
    /// Objective evaluations per start.
    #[arg(long, default_value_t = FitOptions::default().max_evals)]
    max_evals: usize,
    #[command(flatten)]
    out: OutArgs,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<ponqkd::Error> for Failure {
    fn from(e: ponqkd::Error) -> Self {
        let code = if matches!(e, ponqkd::Error::Io(_)) { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Budget(a) => cmd_budget(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn load(a: &DocArgs) -> Result<ScenarioDocument, Failure> {
    Ok(ScenarioDocument::parse_with_overrides(
        &read(&a.document)?,
        &a.overrides,
    )?)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_failure(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("outputs always serialize");
    s.push(b'\n');
    s
}

fn cmd_validate(a: &DocArgs) -> CmdResult {
    let text = read(&a.document)?;
    let doc = if a.overrides.is_empty() {
        ScenarioDocument::parse_unchecked(&text)?
    } else {
        // Overrides are applied through the strict parser, so structural
        // problems surface as a single joined message here.
        ScenarioDocument::parse_with_overrides(&text, &a.overrides)?
    };
    let mut violations = doc.topology.validate();
    violations.extend(validate_plan(&doc.topology, &doc.channels));
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(Failure {
            code: 1,
            message: format!("{} violation(s)", violations.len()),
        });
    }
    doc.check()?;
    println!(
        "ok: {} nodes, {} ONTs, {} channels",
        doc.topology.nodes().len(),
        doc.topology.terminals().onts.len(),
        doc.channels.channels.len()
    );
    Ok(())
}

fn cmd_budget(a: &BudgetArgs) -> CmdResult {
    let doc = load(&a.doc)?;
    let terminals = doc.topology.terminals();
    let from = a.from.as_deref().unwrap_or(&terminals.alice);
    let to = a.to.as_deref().unwrap_or(&terminals.bob);
    let lines = path_budget(&doc.topology, &doc.physics, from, to, a.wavelength)?;
    let total = path_loss_db(&doc.topology, &doc.physics, from, to, a.wavelength)?;
    match a.format {
        Format::Table => {
            let mut s = format!("{from} -> {to} at {} nm\n", a.wavelength);
            let _ = writeln!(
                s,
                "{:<16} {:<12} {:<5} {:>10} {:>10} {:>10}",
                "node", "kind", "dir", "element", "connectors", "total"
            );
            for l in &lines {
                let _ = writeln!(
                    s,
                    "{:<16} {:<12} {:<5} {:>10.3} {:>10.3} {:>10.3}",
                    l.node,
                    l.kind,
                    l.traversal,
                    l.element_db,
                    l.connectors_db,
                    l.total_db()
                );
            }
            let _ = writeln!(s, "total {total:.3} dB");
            print!("{s}");
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let record = |w: &mut csv::Writer<_>, r: [String; 6]| w.write_record(r).map_err(csv_failure);
            record(
                &mut w,
                ["node", "kind", "traversal", "element_db", "connectors_db", "total_db"].map(String::from),
            )?;
            for l in &lines {
                record(
                    &mut w,
                    [
                        l.node.clone(),
                        l.kind.to_string(),
                        l.traversal.to_string(),
                        l.element_db.to_string(),
                        l.connectors_db.to_string(),
                        l.total_db().to_string(),
                    ],
                )?;
            }
            record(
                &mut w,
                [
                    "total".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    total.to_string(),
                ],
            )?;
            w.flush().map_err(|e| Failure {
                code: 2,
                message: e.to_string(),
            })?;
        }
        Format::Json => {
            let rows: Vec<_> = lines
                .iter()
                .map(|l| {
                    serde_json::json!({
                        "node": l.node,
                        "kind": l.kind,
                        "traversal": l.traversal,
                        "element_db": l.element_db,
                        "connectors_db": l.connectors_db,
                        "total_db": l.total_db(),
                    })
                })
                .collect();
            let v = serde_json::json!({
                "from": from,
                "to": to,
                "wavelength_nm": a.wavelength,
                "elements": rows,
                "total_db": total,
            });
            print!("{}", String::from_utf8(to_json(&v)).expect("JSON is UTF-8"));
        }
    }
    Ok(())
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn scenario(doc: &ScenarioDocument, selection: Option<&Selection>, run: Option<&RunArgs>) -> Result<Scenario, Failure> {
    let mut s = Scenario::from_document(doc)?;
    if let Some(sel) = selection {
        if let Some(n) = sel.onts {
            s.active = s.model.first(n)?;
        }
        if let Some(ids) = &sel.active {
            s.active = s.model.select(ids)?;
        }
    }
    if let Some(r) = run {
        s.duration_s = r.duration.unwrap_or(s.duration_s);
        s.block_s = r.block.unwrap_or(s.block_s);
        s.seed = r.seed.unwrap_or(s.seed);
    }
    s.validate()?;
    Ok(s)
}

fn cmd_report(a: &ReportArgs) -> CmdResult {
    let doc = load(&a.doc)?;
    let s = scenario(&doc, Some(&a.selection), None)?;
    let e = s.evaluate()?;
    match a.format {
        Format::Json => print!("{}", String::from_utf8(to_json(&e)).expect("JSON is UTF-8")),
        Format::Table | Format::Csv => {
            let r = &e.report;
            let n = &e.noise;
            let mut out = String::new();
            let mut row = |k: &str, v: String| {
                let _ = if a.format == Format::Csv {
                    writeln!(out, "{k},{v}")
                } else {
                    writeln!(out, "{k:<28} {v}")
                };
            };
            if a.format == Format::Csv {
                row("quantity", "value".into());
            }
            row("active_onts", e.active_onts.join(" "));
            row("eta", format!("{:e}", e.channel.eta));
            row("raman_forward_per_gate", format!("{:e}", n.raman_forward));
            row("raman_backward_per_gate", format!("{:e}", n.raman_backward));
            row("reflection_per_gate", format!("{:e}", n.reflection_leakage));
            row("dark_per_gate", format!("{:e}", n.dark));
            row("y0", format!("{:e}", n.y0_background));
            row(
                "back_refl_dbm",
                e.back_reflection_dbm.map_or(String::new(), |v| format!("{v:.3}")),
            );
            row("q_mu", format!("{:e}", r.q_mu));
            row("y1_lower", format!("{:e}", r.y1_lower));
            row("e1_upper", format!("{:.6}", r.e1_upper));
            row("qber_percent", format!("{:.4}", r.qber_percent));
            row("skr_bps", format!("{:.3}", r.skr_bps));
            if let Some(why) = r.no_key {
                row("no_key", format!("{why:?}"));
            }
            print!("{out}");
        }
    }
    Ok(())
}

fn summary_table(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "active ONTs      {}", s.active_onts.len());
    let _ = writeln!(out, "blocks           {} x {} s (seed {})", s.blocks, s.block_s, s.seed);
    let _ = writeln!(
        out,
        "mean SKR         {:.1} bps (std {:.1}, analytic {:.1})",
        s.mean_skr_bps, s.std_skr_bps, s.analytic.skr_bps
    );
    let _ = writeln!(
        out,
        "mean QBER        {:.3} % (analytic {:.3})",
        s.mean_qber_percent, s.analytic.qber_percent
    );
    if let Some(r) = s.analytic.back_reflection_dbm {
        let _ = writeln!(out, "back-reflection  {r:.2} dBm");
    }
    out
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let doc = load(&a.doc)?;
    let s = scenario(&doc, Some(&a.selection), Some(&a.run))?;
    let (ts, summary) = run_scenario(&s)?;
    let mut csv = Vec::new();
    write_time_series_csv(&ts, &mut csv)?;
    write(&a.out.out, "timeseries.csv", &csv)?;
    write(&a.out.out, "summary.json", &to_json(&summary))?;
    print!("{}", summary_table(&summary));
    Ok(())
}

fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>6} {:>10} {:>12} {:>14}\n",
        "n_onts", "qber_%", "skr_bps", "back_refl_dbm"
    );
    for r in rows {
        let refl = r.back_refl_dbm.map_or("-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            out,
            "{:>6} {:>10.3} {:>12.1} {:>14}",
            r.n_onts, r.qber_percent, r.skr_bps, refl
        );
    }
    out
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let doc = load(&a.doc)?;
    let base = scenario(&doc, None, Some(&a.run))?;
    let rows = sweep(&base, &a.onts)?;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    write(&a.out.out, "sweep.csv", &csv)?;
    write(&a.out.out, "sweep.json", &to_json(&rows))?;
    print!("{}", sweep_table(&rows));
    Ok(())
}

fn fit_table(r: &FitReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "objective {:.4} (start {:.4}), {} evaluations, best start {}{}",
        r.objective,
        r.initial_objective,
        r.evaluations,
        r.best_start,
        if r.converged { "" } else { ", budget exhausted" }
    );
    let values = r.params.to_array();
    let _ = writeln!(out, "{:<28} {:>14} {:>14}", "parameter", "value", "sensitivity");
    for (s, v) in r.sensitivity.iter().zip(values) {
        let _ = writeln!(out, "{:<28} {:>14.6e} {:>14.3e}", s.name, v, s.delta_objective);
    }
    let _ = writeln!(
        out,
        "{:>6} {:>10} {:>12} {:>14}",
        "n_onts", "qber_%", "skr_bps", "back_refl_dbm"
    );
    for row in &r.residuals {
        let refl = row.back_reflection_dbm.map_or("-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            out,
            "{:>6} {:>10.3} {:>12.1} {:>14}",
            row.n_onts, row.qber_percent, row.skr_bps, refl
        );
    }
    out
}

fn cmd_calibrate(a: &CalibrateArgs) -> CmdResult {
    let mut doc = load(&a.doc)?;
    let file = fs::File::open(&a.observations).map_err(|e| io_failure(&a.observations, e))?;
    let obs = Observations::from_csv(file)?;
    let ctx = CalibrationContext::new(&doc)?;
    let p0 = CalibrationParams::from_document(&doc)?;
    let opts = FitOptions {
        max_evals: a.max_evals,
        restarts: a.restarts,
        seed: a.seed,
    };
    let report = fit(&p0, &obs, &ctx, &opts)?;
    report.params.apply_to_physics(&mut doc.physics);
    write(&a.out.out, "fit_report.json", &to_json(&report))?;
    write(&a.out.out, "calibrated.json", doc.to_json().as_bytes())?;
    print!("{}", fit_table(&report));
    Ok(())
}
