//! Experiment runner behind the `capeig` binary.
//!
//! A run reads one JSON config, validates it completely, computes, and only
//! then writes its files into the output directory. Exit codes: 0 success,
//! 2 invalid input (nothing written), 3 solver non-convergence (files written
//! as far as they could be produced).

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::energy::EnergyContext;
use crate::error::Error;
use crate::gamma::{blocked_limit_sequence, lsc_check_with, psi_lsc_check_with, usc_check_with, CheckOptions};
use crate::grid::GridSpec;
use crate::measure::CapacitaryMeasure;
use crate::optimize::{optimize_potential, optimize_set, ConstraintSpec, HistoryEntry, OptimizeOptions, SetOptions};
use crate::spectrum::{eigen_minimax_with, EigenStatus, SpectralResult};
use crate::torsion::torsion;

use config::{mask_from, RunConfig};
use output::{dump_cells, dump_field, num, write_json, write_table, DumpFormat, RunManifest, StageTiming};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Version stamped into every output file.
pub const OUTPUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Torsion,
    GammaDiag,
    OptimizePotential,
    OptimizeSet,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Torsion => "torsion",
            Command::GammaDiag => "gamma-diag",
            Command::OptimizePotential => "optimize-potential",
            Command::OptimizeSet => "optimize-set",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "solve" => Command::Solve,
            "torsion" => Command::Torsion,
            "gamma-diag" => Command::GammaDiag,
            "optimize-potential" => Command::OptimizePotential,
            "optimize-set" => Command::OptimizeSet,
            other => return Err(format!("unknown subcommand {other:?}")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

/// A file to be written once the computation is done.
enum Artifact {
    Table(Vec<&'static str>, Vec<Vec<String>>),
    Field(crate::grid::Field, DumpFormat),
    Cells(Vec<f64>, DumpFormat),
}

struct Outcome {
    results: Value,
    files: Vec<(String, Artifact)>,
    converged: bool,
}

struct Timer {
    start: Instant,
    stages: Vec<StageTiming>,
    quiet: bool,
}

impl Timer {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        if !self.quiet {
            eprintln!("capeig: {name}");
        }
        let t = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            stage: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

fn is_convergence_failure(e: &Error) -> bool {
    matches!(e, Error::NotConverged(_) | Error::LinearAlgebra(_))
}

/// Runs one subcommand and returns the process exit code.
pub fn run(args: &RunArgs) -> i32 {
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("capeig: cannot read {}: {e}", args.config.display());
            return EXIT_INVALID;
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("capeig: {e}");
            return EXIT_INVALID;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Err(e) = validate(&cfg, args.command) {
        eprintln!("capeig: {e}");
        return EXIT_INVALID;
    }

    let mut timer = Timer {
        start: Instant::now(),
        stages: Vec::new(),
        quiet: args.quiet,
    };
    let outcome = match args.command {
        Command::Solve => run_solve(&cfg, &mut timer),
        Command::Torsion => run_torsion(&cfg, &mut timer),
        Command::GammaDiag => run_gamma(&cfg, &mut timer),
        Command::OptimizePotential => run_potential(&cfg, &mut timer),
        Command::OptimizeSet => run_set(&cfg, &mut timer),
    };
    let (outcome, code) = match outcome {
        Ok(o) => {
            let code = if o.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
            (o, code)
        }
        Err(e) if is_convergence_failure(&e) => {
            eprintln!("capeig: {e}");
            let o = Outcome {
                results: json!({ "error": e.to_string() }),
                files: Vec::new(),
                converged: false,
            };
            (o, EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("capeig: {e}");
            return EXIT_INVALID;
        }
    };
    if code == EXIT_NOT_CONVERGED {
        eprintln!("capeig: solver did not converge; partial results written");
    }
    match write_outputs(&cfg, args, outcome, code, timer) {
        Ok(()) => code,
        Err(e) => {
            eprintln!("capeig: cannot write to {}: {e}", args.out.display());
            EXIT_INVALID
        }
    }
}

/// Everything that can be rejected without solving.
fn validate(cfg: &RunConfig, command: Command) -> crate::error::Result<()> {
    let mu = cfg.measure()?;
    let weights = cfg.weights()?;
    cfg.spectrum_options()?;
    let g = cfg.grid;
    let missing = |s: &str| Error::InvalidArgument(format!("config has no \"{s}\" section"));
    match command {
        Command::Solve => {
            let m = cfg.solve.clone().unwrap_or_default().m_max;
            if m == 0 || m > crate::spectrum::MAX_M {
                return Err(Error::InvalidArgument(format!("solve.m_max must be in 1..={}", crate::spectrum::MAX_M)));
            }
            EnergyContext::new(mu, weights)?;
        }
        Command::Torsion => {
            EnergyContext::new(mu, weights)?;
        }
        Command::GammaDiag => {
            let gd = cfg.gamma_diag.as_ref().ok_or_else(|| missing("gamma_diag"))?;
            let mask = mask_from(&g, &gd.mask, "gamma_diag.mask")?;
            blocked_limit_sequence(g, &mask, &gd.s_values)?;
            if gd.m == 0 || gd.m > crate::spectrum::MAX_M || gd.tail == 0 || !(gd.slack >= 0.0) {
                return Err(Error::InvalidArgument("gamma_diag: m, tail or slack out of range".into()));
            }
            if let Some(psi) = &gd.psi {
                psi.validate()?;
            }
        }
        Command::OptimizePotential => {
            let po = cfg.optimize_potential.as_ref().ok_or_else(|| missing("optimize_potential"))?;
            po.objective.validate()?;
            ConstraintSpec::PsiBudget { c: po.c, psi: po.psi }.validate(&g)?;
        }
        Command::OptimizeSet => {
            let so = cfg.optimize_set.as_ref().ok_or_else(|| missing("optimize_set"))?;
            so.objective.validate()?;
            ConstraintSpec::Volume { c: so.c }.validate(&g)?;
            if so.seeds.as_ref().is_some_and(|s| s.is_empty()) {
                return Err(Error::InvalidArgument("optimize_set.seeds is empty".into()));
            }
        }
    }
    Ok(())
}

fn extended(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(num(v))
    }
}

fn extended_vec(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| extended(*x)).collect())
}

fn status_name(s: EigenStatus) -> &'static str {
    match s {
        EigenStatus::Finite => "finite",
        EigenStatus::Infeasible => "infeasible",
        EigenStatus::Unresolved => "unresolved",
    }
}

fn spectrum_json(s: &SpectralResult) -> Value {
    serde_json::to_value(s).expect("spectrum serializes")
}

fn spectrum_table(s: &SpectralResult) -> Artifact {
    let rows = (0..s.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                num(s.lambdas[i]),
                s.residuals.get(i).map_or_else(String::new, |r| num(*r)),
                status_name(s.status[i]).to_string(),
                s.upper_bounds.get(i).map_or_else(String::new, |u| num(*u)),
            ]
        })
        .collect();
    Artifact::Table(vec!["m", "lambda", "residual", "status", "upper_bound"], rows)
}

fn history_table(h: &[HistoryEntry]) -> Artifact {
    let rows = h
        .iter()
        .map(|e| vec![e.iteration.to_string(), num(e.objective), num(e.constraint)])
        .collect();
    Artifact::Table(vec!["iteration", "objective", "constraint"], rows)
}

fn field_files(files: &mut Vec<(String, Artifact)>, stem: &str, field: crate::grid::Field) {
    if field.grid().dim() == 2 {
        files.push((format!("{stem}.pgm"), Artifact::Field(field.clone(), DumpFormat::Pgm)));
    }
    files.push((format!("{stem}.csv"), Artifact::Field(field, DumpFormat::Csv)));
}

fn cell_files(files: &mut Vec<(String, Artifact)>, grid: &GridSpec, stem: &str, values: Vec<f64>) {
    if grid.dim() == 2 {
        files.push((format!("{stem}.pgm"), Artifact::Cells(values.clone(), DumpFormat::Pgm)));
    }
    files.push((format!("{stem}.csv"), Artifact::Cells(values, DumpFormat::Csv)));
}

fn run_solve(cfg: &RunConfig, timer: &mut Timer) -> crate::error::Result<Outcome> {
    let m = cfg.solve.clone().unwrap_or_default().m_max;
    let opts = cfg.spectrum_options()?;
    let ctx = EnergyContext::new(cfg.measure()?, cfg.weights()?)?;
    let s = timer.stage("spectrum", || eigen_minimax_with(&ctx, m, &opts, None))?;
    let converged = s.all_finite_certified();
    let mut files = vec![("spectrum.csv".to_string(), spectrum_table(&s))];
    for (i, f) in s.eigenfields.iter().enumerate() {
        field_files(&mut files, &format!("eigenfield_{}", i + 1), f.clone());
    }
    Ok(Outcome {
        results: json!({ "spectrum": spectrum_json(&s) }),
        files,
        converged,
    })
}

fn run_torsion(cfg: &RunConfig, timer: &mut Timer) -> crate::error::Result<Outcome> {
    let mu = cfg.measure()?;
    let (w, report) = timer.stage("torsion", || torsion(&mu))?;
    let g = cfg.grid;
    let integral = g.integrate(&g.cell_average(&w.values));
    let mut files = Vec::new();
    field_files(&mut files, "torsion", w.clone());
    Ok(Outcome {
        results: json!({
            "max": w.max_value(),
            "integral": integral,
            "solver": report,
        }),
        files,
        converged: report.converged,
    })
}

fn run_gamma(cfg: &RunConfig, timer: &mut Timer) -> crate::error::Result<Outcome> {
    let gd = cfg.gamma_diag.clone().expect("validated");
    let g = cfg.grid;
    let weights = cfg.weights()?;
    let mask = mask_from(&g, &gd.mask, "gamma_diag.mask")?;
    let seq = blocked_limit_sequence(g, &mask, &gd.s_values)?;
    let opts = CheckOptions {
        tail: gd.tail,
        slack: gd.slack,
        spectrum: cfg.spectrum_options()?,
    };
    let lsc = timer.stage("lsc", || lsc_check_with(&seq, &weights, gd.m, &opts))?;
    let usc = if weights.nu2_is_zero() {
        Some(timer.stage("usc", || usc_check_with(&seq, &weights, gd.m, &opts))?)
    } else {
        None
    };
    let psi = match &gd.psi {
        Some(psi) => Some(timer.stage("psi", || psi_lsc_check_with(&seq, psi, &opts))?),
        None => None,
    };
    let rows = gd
        .s_values
        .iter()
        .enumerate()
        .map(|(i, s)| vec![num(*s), num(lsc.distances[i]), num(lsc.values[i])])
        .collect();
    let converged = !lsc.inconclusive && usc.as_ref().is_none_or(|u| !u.inconclusive);
    Ok(Outcome {
        results: json!({
            "s_values": extended_vec(&gd.s_values),
            "lsc": lsc,
            "usc": usc,
            "psi": psi,
        }),
        files: vec![("sequence.csv".to_string(), Artifact::Table(vec!["s", "distance", "lambda"], rows))],
        converged,
    })
}

fn run_potential(cfg: &RunConfig, timer: &mut Timer) -> crate::error::Result<Outcome> {
    let po = cfg.optimize_potential.clone().expect("validated");
    let g = cfg.grid;
    let weights = cfg.weights()?;
    let opts = OptimizeOptions {
        max_iter: po.max_iter,
        patience: po.patience,
        spectrum: cfg.spectrum_options()?,
    };
    let constraint = ConstraintSpec::PsiBudget { c: po.c, psi: po.psi };
    let out = timer.stage("optimize", || optimize_potential(&g, &weights, &po.objective, &constraint, &opts))?;
    let psi_volume = CapacitaryMeasure::from_potential(g, &out.potential)?.psi_volume(&po.psi)?;
    let mut files = vec![
        ("spectrum.csv".to_string(), spectrum_table(&out.spectrum)),
        ("history.csv".to_string(), history_table(&out.history)),
    ];
    cell_files(&mut files, &g, "potential", out.potential.clone());
    Ok(Outcome {
        results: json!({
            "objective": extended(out.objective),
            "baseline_objective": extended(out.baseline_objective),
            "psi_volume": psi_volume,
            "iterations": out.history.last().map_or(0, |h| h.iteration),
            "stagnated": out.converged,
            "spectrum": spectrum_json(&out.spectrum),
        }),
        files,
        converged: out.spectrum.all_finite_certified(),
    })
}

fn run_set(cfg: &RunConfig, timer: &mut Timer) -> crate::error::Result<Outcome> {
    let so = cfg.optimize_set.clone().expect("validated");
    let g = cfg.grid;
    let weights = cfg.weights()?;
    let opts = SetOptions {
        optimize: OptimizeOptions {
            max_iter: so.max_iter,
            patience: so.patience,
            spectrum: cfg.spectrum_options()?,
        },
        seeds: so.seeds.clone().unwrap_or_else(|| vec![cfg.seed]),
        s_schedule: so.s_schedule.clone(),
    };
    let constraint = ConstraintSpec::Volume { c: so.c };
    let out = timer.stage("optimize", || optimize_set(&g, &weights, &so.objective, &constraint, &opts))?;
    let cells = out.mask.iter().filter(|m| **m).count();
    let mut files = vec![
        ("spectrum.csv".to_string(), spectrum_table(&out.spectrum)),
        ("history.csv".to_string(), history_table(&out.history)),
    ];
    let mask: Vec<f64> = out.mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
    cell_files(&mut files, &g, "mask", mask);
    Ok(Outcome {
        results: json!({
            "objective": extended(out.objective),
            "cells": cells,
            "volume": cells as f64 * g.cell_volume(),
            "seed": out.seed,
            "seed_objectives": extended_vec(&out.seed_objectives),
            "stagnated": out.converged,
            "spectrum": spectrum_json(&out.spectrum),
        }),
        files,
        converged: out.spectrum.all_finite_certified(),
    })
}

#[derive(Serialize)]
struct ResultsFile<'a> {
    version: u32,
    command: &'a str,
    seed: u64,
    config_hash: String,
    converged: bool,
    results: Value,
}

fn write_outputs(cfg: &RunConfig, args: &RunArgs, outcome: Outcome, code: i32, timer: Timer) -> std::io::Result<()> {
    let out: &Path = &args.out;
    fs::create_dir_all(out)?;
    let mut names = vec!["results.json".to_string()];
    write_json(
        &out.join("results.json"),
        &ResultsFile {
            version: OUTPUT_VERSION,
            command: args.command.name(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            converged: outcome.converged,
            results: outcome.results,
        },
    )?;
    for (name, art) in outcome.files {
        let path = out.join(&name);
        match art {
            Artifact::Table(header, rows) => write_table(&path, &header, &rows)?,
            Artifact::Field(f, fmt) => dump_field(&f, fmt, &path)?,
            Artifact::Cells(v, fmt) => dump_cells(&cfg.grid, &v, fmt, &path)?,
        }
        names.push(name);
    }
    names.push("manifest.json".to_string());
    let manifest = RunManifest {
        version: OUTPUT_VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: args.command.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        exit_code: code,
        wall_time_seconds: timer.start.elapsed().as_secs_f64(),
        stages: timer.stages,
        files: names,
    };
    write_json(&out.join("manifest.json"), &manifest)
}
