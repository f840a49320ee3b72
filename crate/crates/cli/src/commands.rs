use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gspn_core::numerics::{curves_to_csv, format_sig, reliability_curve_ctmc};
use gspn_core::zoo::{build_model, Activation, ModelKind};
use gspn_core::{
    analyze_availability, bind, build_ctmc, classify_states, explore, parse_metric, simulate_availability,
    simulate_reliability, BoundMetric, ExploreOptions, MetricExpr, Net, SimOptions, SolverOptions,
};

use crate::modelfile::{parse_model_file_with, serialize};

#[derive(Debug, Parser)]
#[command(
    name = "gspn",
    version,
    about = "Availability and reliability analysis of GSPN models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelArgs {
    /// Built-in model (onoff, baseline, host-red, vm-red, combined) or a model file.
    #[arg(long)]
    pub model: String,
    /// Metric name from the model, or an inline `P{...}` expression.
    #[arg(long)]
    pub metric: Option<String>,
    /// Parameter override, repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state availability, nines and yearly downtime.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Reliability curve R(t) as CSV. `--model all` writes one column per architecture.
    Reliability {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate with a 95% confidence interval.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        warmup: f64,
        /// Estimate R(t) at the horizon instead of availability.
        #[arg(long)]
        reliability: bool,
        /// Fixed activation delays for the redundant built-ins.
        #[arg(long)]
        deterministic_activation: bool,
    },
    /// Reachability graph as DOT, or the net as a model file.
    Export {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        what: ExportKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Kv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Dot,
    Modelfile,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("invalid number in '{s}'"))?;
    Ok((k.trim().to_string(), v))
}

/// A net with its named metrics, ready for analysis.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub title: String,
    pub net: Net,
    pub metrics: Vec<(String, MetricExpr)>,
    pub params: BTreeMap<String, f64>,
}

impl Resolved {
    /// The requested metric, or the first one declared.
    pub fn metric(&self, wanted: Option<&str>) -> Result<(String, BoundMetric)> {
        let (name, expr) = match wanted {
            Some(w) if w.trim_start().starts_with(['P', 'p']) && w.contains('{') => {
                (w.to_string(), parse_metric(w).with_context(|| format!("metric {w}"))?)
            }
            Some(w) => self
                .metrics
                .iter()
                .find(|(n, _)| n == w)
                .cloned()
                .ok_or_else(|| anyhow!("unknown metric {w} for model {}", self.name))?,
            None => self
                .metrics
                .first()
                .cloned()
                .ok_or_else(|| anyhow!("model {} declares no metric; pass --metric", self.name))?,
        };
        let bound = bind(&expr, &self.net).with_context(|| format!("metric {name}"))?;
        Ok((name, bound))
    }
}

/// Looks `reference` up among the built-ins, then as a file path.
pub fn resolve_model(reference: &str, set: &[(String, f64)], activation: Activation) -> Result<Resolved> {
    let overrides: BTreeMap<String, f64> = set.iter().cloned().collect();
    if let Ok(kind) = reference.parse::<ModelKind>() {
        let model = build_model(kind, &overrides, activation)?;
        return Ok(Resolved {
            name: kind.name().to_string(),
            title: kind.title().to_string(),
            net: model.net,
            metrics: vec![("availability".to_string(), model.metric)],
            params: model.params,
        });
    }
    let path = Path::new(reference);
    if !path.is_file() {
        bail!("unknown model {reference} (expected onoff, baseline, host-red, vm-red, combined or a model file)");
    }
    if activation == Activation::Deterministic {
        bail!("--deterministic-activation applies to built-in models only");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_model_file_with(&text, &overrides).with_context(|| format!("parsing {}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| reference.to_string());
    Ok(Resolved {
        title: name.clone(),
        name,
        net: file.net,
        metrics: file.metrics,
        params: file.params,
    })
}

fn resolve_many(args: &ModelArgs, activation: Activation) -> Result<Vec<Resolved>> {
    if args.model == "all" {
        ModelKind::ARCHITECTURES
            .iter()
            .map(|k| resolve_model(k.name(), &args.set, activation))
            .collect()
    } else {
        Ok(vec![resolve_model(&args.model, &args.set, activation)?])
    }
}

fn write_output(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Analyze { model, format } => analyze(model, *format, out),
        Command::Reliability {
            model,
            horizon,
            step,
            out: path,
        } => reliability(model, *horizon, *step, path.as_deref(), out),
        Command::Simulate {
            model,
            horizon,
            reps,
            seed,
            warmup,
            reliability,
            deterministic_activation,
        } => {
            let activation = if *deterministic_activation {
                Activation::Deterministic
            } else {
                Activation::Exponential
            };
            let opts = SimOptions {
                warmup: *warmup,
                ..SimOptions::new(*horizon, *reps, *seed)
            };
            simulate(model, activation, &opts, *reliability, out)
        }
        Command::Export { model, what, out: path } => export(model, *what, path.as_deref(), out),
    }
}

fn analyze(args: &ModelArgs, format: Format, out: &mut dyn Write) -> Result<()> {
    let models = resolve_many(args, Activation::Exponential)?;
    let mut rows = Vec::new();
    for m in &models {
        let (metric_name, metric) = m.metric(args.metric.as_deref())?;
        let a = analyze_availability(&m.net, &metric, &SolverOptions::default())
            .with_context(|| format!("analyzing {}", m.name))?;
        rows.push((m, metric_name, a));
    }
    match format {
        Format::Table => {
            let width = rows.iter().map(|(m, _, _)| m.title.len()).max().unwrap_or(0).max(5);
            writeln!(
                out,
                "{:<width$}  {:>16}  {:>6}  {:>12}  {:>6}",
                "Model", "Availability (%)", "9's", "Downtime (h)", "States"
            )?;
            for (m, _, a) in &rows {
                let r = &a.report;
                writeln!(
                    out,
                    "{:<width$}  {:>16.4}  {:>6.2}  {:>12.2}  {:>6}",
                    m.title,
                    r.availability * 100.0,
                    r.nines,
                    r.downtime_hours_per_year,
                    a.ctmc.len()
                )?;
            }
        }
        Format::Csv => {
            writeln!(
                out,
                "model,metric,availability,nines,downtime_hours_per_year,tangible_states"
            )?;
            for (m, metric, a) in &rows {
                let r = &a.report;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    m.name,
                    csv_field(metric),
                    format_sig(r.availability, 12),
                    format_sig(r.nines, 12),
                    format_sig(r.downtime_hours_per_year, 12),
                    a.ctmc.len()
                )?;
            }
        }
        Format::Kv => {
            for (i, (m, metric, a)) in rows.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                let r = &a.report;
                writeln!(out, "model = {}", m.name)?;
                writeln!(out, "metric = {metric}")?;
                writeln!(out, "availability = {}", format_sig(r.availability, 12))?;
                writeln!(out, "nines = {}", format_sig(r.nines, 12))?;
                writeln!(
                    out,
                    "downtime_hours_per_year = {}",
                    format_sig(r.downtime_hours_per_year, 12)
                )?;
                writeln!(out, "tangible_states = {}", a.ctmc.len())?;
                writeln!(out, "residual = {:e}", a.steady.residual)?;
            }
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn reliability(args: &ModelArgs, horizon: f64, step: f64, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let models = resolve_many(args, Activation::Exponential)?;
    let mut curves = Vec::new();
    for m in &models {
        let (_, metric) = m.metric(args.metric.as_deref())?;
        let ctmc = build_ctmc(&m.net, &ExploreOptions::default())?;
        let part = classify_states(&ctmc, &metric);
        let curve = reliability_curve_ctmc(&ctmc, &part, horizon, step, &SolverOptions::default())
            .with_context(|| format!("reliability of {}", m.name))?;
        if let Some(w) = &curve.warning {
            eprintln!("warning: {}: {w}", m.name);
        }
        curves.push((m.name.as_str(), curve));
    }
    let text = if args.model == "all" {
        let named: Vec<_> = curves.iter().map(|(n, c)| (*n, c)).collect();
        curves_to_csv(&named)
    } else {
        curves[0].1.to_csv()
    };
    write_output(out, path, &text)
}

fn simulate(
    args: &ModelArgs,
    activation: Activation,
    opts: &SimOptions,
    reliability: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let m = resolve_model(&args.model, &args.set, activation)?;
    let (metric_name, metric) = m.metric(args.metric.as_deref())?;
    let est = if reliability {
        simulate_reliability(&m.net, &metric, opts.horizon, opts)?
    } else {
        simulate_availability(&m.net, &metric, opts)?
    };
    writeln!(out, "model = {}", m.name)?;
    writeln!(out, "metric = {metric_name}")?;
    writeln!(
        out,
        "measure = {}",
        if reliability { "reliability" } else { "availability" }
    )?;
    writeln!(out, "estimate = {}", format_sig(est.mean, 12))?;
    writeln!(out, "ci95_halfwidth = {}", format_sig(est.ci95_halfwidth, 12))?;
    writeln!(
        out,
        "ci95 = [{}, {}]",
        format_sig(est.mean - est.ci95_halfwidth, 12),
        format_sig(est.mean + est.ci95_halfwidth, 12)
    )?;
    writeln!(out, "replications = {}", est.replications)?;
    writeln!(out, "seed = {}", opts.seed)?;
    Ok(())
}

fn export(args: &ModelArgs, what: ExportKind, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let m = resolve_model(&args.model, &args.set, Activation::Exponential)?;
    let text = match what {
        ExportKind::Dot => explore(&m.net, ExploreOptions::default().max_states)?.to_dot(&m.net),
        ExportKind::Modelfile => serialize(&m.net, &m.params, &m.metrics),
    };
    write_output(out, path, &text)
}
