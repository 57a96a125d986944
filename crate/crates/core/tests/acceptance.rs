//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use capeig::cli::{run, Command, RunArgs};
use capeig::energy::{EnergyContext, Weight};
use capeig::grid::{Field, GridSpec};
use capeig::measure::{CapacitaryMeasure, Density, WeightPair};
use capeig::spectrum::{eigen_minimax, EigenStatus};
use capeig::torsion::{prox, prox_penalty};

use common::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// One CLI run: exit code, parsed results, wall time, output dir.
struct CliRun {
    code: i32,
    results: Value,
    seconds: f64,
    dir: PathBuf,
}

struct Suite {
    root: tempfile::TempDir,
    runs: usize,
    /// relative residuals of every reported finite eigenpair, by criterion
    residuals: BTreeMap<usize, Vec<f64>>,
    /// (criterion, first output dir, repeat output dir) for CLI runs
    repeats: Vec<(usize, PathBuf, PathBuf)>,
    /// (criterion, first digest, repeat digest) for library runs
    digests: Vec<(usize, String, String)>,
}

impl Suite {
    fn cli(&mut self, criterion: usize, command: Command, config: Value) -> CliRun {
        let first = self.cli_once(command, &config);
        let again = self.cli_once(command, &config);
        self.repeats.push((criterion, first.dir.clone(), again.dir));
        if let Some(r) = spectrum_residuals(&first.results["results"]) {
            self.residuals.entry(criterion).or_default().extend(r);
        }
        first
    }

    fn cli_once(&mut self, command: Command, config: &Value) -> CliRun {
        self.runs += 1;
        let dir = self.root.path().join(format!("run{:03}", self.runs));
        fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("config.json");
        fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).unwrap();
        let out = dir.join("out");
        let t = Instant::now();
        let code = run(&RunArgs {
            command,
            config: cfg,
            out: out.clone(),
            seed: None,
            quiet: true,
        });
        let seconds = t.elapsed().as_secs_f64();
        let results = fs::read_to_string(out.join("results.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or(Value::Null);
        CliRun {
            code,
            results,
            seconds,
            dir: out,
        }
    }

    fn record_residuals(&mut self, criterion: usize, r: &[f64]) {
        self.residuals.entry(criterion).or_default().extend_from_slice(r);
    }
}

fn spectrum_residuals(results: &Value) -> Option<Vec<f64>> {
    let r = results.get("spectrum")?.get("residuals")?.as_array()?;
    Some(r.iter().filter_map(Value::as_f64).collect())
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::INFINITY)).collect())
        .unwrap_or_default()
}

fn lambdas(r: &CliRun) -> Vec<f64> {
    floats(&r.results["results"]["spectrum"]["lambdas"])
}

fn statuses(r: &CliRun) -> Vec<String> {
    r.results["results"]["spectrum"]["status"]
        .as_array()
        .map(|a| a.iter().map(|s| s.as_str().unwrap_or("").to_string()).collect())
        .unwrap_or_default()
}

fn grid_json(dim: usize, n: usize, len: f64, p: f64) -> Value {
    json!({ "dim": dim, "n": n, "lengths": vec![len; dim], "p": p })
}

fn fmt_sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

fn criterion_1(s: &mut Suite) -> Verdict {
    let n = 512;
    let r = s.cli(1, Command::Solve, json!({ "grid": grid_json(1, n, 1.0, 2.0), "solve": { "m_max": 4 } }));
    let l = lambdas(&r);
    let oracle = dense_dirichlet(1, n, &[1.0], &vec![0.0; n]);
    let analytic: Vec<f64> = (1..=4).map(|m| (m * m) as f64 * PI * PI).collect();
    let worst = (0..4).map(|i| rel_err(l[i], analytic[i])).fold(0.0, f64::max);
    let vs_oracle = (0..4).map(|i| rel_err(l[i], oracle[i])).fold(0.0, f64::max);
    verdict(
        r.code == 0 && l.len() == 4 && worst <= 0.01 && vs_oracle <= 1e-8 && r.seconds < 10.0,
        format!(
            "lambda = {}, max rel err vs m^2 pi^2 = {worst:.2e}, vs dense pencil = {vs_oracle:.1e}, {:.2}s",
            fmt_list(&l),
            r.seconds
        ),
    )
}

fn criterion_2(s: &mut Suite) -> Verdict {
    let r = s.cli(2, Command::Solve, json!({ "grid": grid_json(2, 64, 1.0, 2.0), "solve": { "m_max": 4 } }));
    let l = lambdas(&r);
    if l.len() != 4 {
        return verdict(false, format!("exit {}, no spectrum", r.code));
    }
    let exact = [2.0, 5.0, 5.0, 8.0].map(|k| k * PI * PI);
    let worst = (0..4).map(|i| rel_err(l[i], exact[i])).fold(0.0, f64::max);
    let pair = (l[1] - l[2]).abs() / l[1];
    verdict(
        r.code == 0 && worst <= 0.02 && pair <= 0.02 && r.seconds < 60.0,
        format!(
            "lambda = {}, max rel err = {worst:.2e}, |l2 - l3|/l2 = {pair:.1e}, {:.2}s",
            fmt_list(&l),
            r.seconds
        ),
    )
}

fn criterion_3(s: &mut Suite) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [1.5, 3.0] {
        let r = s.cli(3, Command::Solve, json!({ "grid": grid_json(1, 256, 1.0, p), "solve": { "m_max": 1 } }));
        let l = lambdas(&r).first().copied().unwrap_or(f64::NAN);
        let exact = (p - 1.0) * pi_p(p).powf(p);
        let shot = shooting_first_eigenvalue(p, 1.0);
        let e = rel_err(l, exact);
        ok &= r.code == 0 && e <= 0.02 && rel_err(shot, exact) <= 1e-3 && r.seconds < 30.0;
        parts.push(format!(
            "p={p}: lambda_1 = {l:.6} vs {exact:.6} (shooting {shot:.6}), rel err {e:.2e}, {:.2}s",
            r.seconds
        ));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_4(s: &mut Suite) -> Verdict {
    // (-1, 1) shifted to (0, 2); the atom sits on the middle node
    let n = 64;
    let r = s.cli(
        4,
        Command::Solve,
        json!({
            "grid": grid_json(1, n, 2.0, 3.0),
            "weights": { "w1": 0.0, "w1_atoms": [[n / 2 - 1, 1.0]] },
            "solve": { "m_max": 2 },
        }),
    );
    let l = lambdas(&r);
    let st = statuses(&r);
    let l1 = l.first().copied().unwrap_or(f64::NAN);
    let e = rel_err(l1, 2.0);
    verdict(
        r.code == 0 && e <= 0.02 && st.get(1).map(String::as_str) == Some("infeasible") && l.get(1) == Some(&f64::INFINITY),
        format!("lambda_1 = {l1:.9} (rel err {e:.1e}), status = {st:?}"),
    )
}

fn criterion_5(s: &mut Suite) -> Verdict {
    let mut errs = Vec::new();
    let mut maxes = Vec::new();
    for n in [16, 32, 64] {
        let r = s.cli(5, Command::Torsion, json!({ "grid": grid_json(1, n, 1.0, 2.0) }));
        let g = GridSpec::line(n, 1.0, 2.0).unwrap();
        let w = capeig::cli::output::read_field_csv(g, &r.dir.join("torsion.csv")).unwrap();
        maxes.push(w.max_value());
        // sup over a fine sampling of |w - I_h w_h|, w = x (1 - x) / 2
        let h = 1.0 / n as f64;
        let mut nodal = vec![0.0];
        nodal.extend_from_slice(&w.values);
        nodal.push(0.0);
        let mut e: f64 = 0.0;
        for i in 0..n {
            for k in 0..=16 {
                let t = k as f64 / 16.0;
                let x = (i as f64 + t) * h;
                let interp = (1.0 - t) * nodal[i] + t * nodal[i + 1];
                e = e.max((x * (1.0 - x) / 2.0 - interp).abs());
            }
        }
        errs.push(e);
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let max_ok = maxes.iter().zip([16.0f64, 32.0, 64.0]).all(|(m, n)| (m - 0.125).abs() <= 1.0 / (n * n));
    verdict(
        orders.iter().all(|o| *o >= 1.8) && max_ok,
        format!("max w = {}, sup errors = {}, observed orders = {}", fmt_list(&maxes), fmt_sci(&errs), fmt_list(&orders)),
    )
}

fn random_density(rng: &mut ChaCha8Rng, cells: usize, blocked: f64) -> Vec<f64> {
    (0..cells)
        .map(|_| {
            if rng.gen::<f64>() < blocked {
                f64::INFINITY
            } else if rng.gen::<f64>() < 0.5 {
                0.0
            } else {
                rng.gen_range(0.0..50.0)
            }
        })
        .collect()
}

fn dominate(rng: &mut ChaCha8Rng, v: &[f64], blocked: f64) -> Vec<f64> {
    v.iter()
        .map(|x| {
            if rng.gen::<f64>() < blocked {
                f64::INFINITY
            } else {
                x + if rng.gen::<f64>() < 0.5 { rng.gen_range(0.0..30.0) } else { 0.0 }
            }
        })
        .collect()
}

struct Monotonicity {
    pass: bool,
    worst: f64,
    unresolved: usize,
    residuals: Vec<f64>,
    digest: String,
}

fn monotonicity_run(p: f64, pairs: usize, seed: u64) -> Monotonicity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut unresolved = 0;
    let mut digest = String::new();
    let mut ok = true;
    let mut residuals = Vec::new();
    for k in 0..pairs {
        let g = if p == 2.0 && k % 2 == 1 {
            GridSpec::rect(8, 1.0, 1.0, p).unwrap()
        } else {
            GridSpec::line(24, 1.0, p).unwrap()
        };
        let blocked = 0.08;
        let v1 = random_density(&mut rng, g.n_cells(), blocked);
        let v2 = dominate(&mut rng, &v1, blocked);
        let mu1 = CapacitaryMeasure::from_potential(g, &v1).unwrap();
        let mu2 = CapacitaryMeasure::from_potential(g, &v2).unwrap();
        assert!(mu1.leq(&mu2).unwrap());
        let w = WeightPair::lebesgue(g);
        let s1 = eigen_minimax(&EnergyContext::new(mu1, w.clone()).unwrap(), 3).unwrap();
        let s2 = eigen_minimax(&EnergyContext::new(mu2, w).unwrap(), 3).unwrap();
        residuals.extend_from_slice(&s1.residuals);
        residuals.extend_from_slice(&s2.residuals);
        if p == 2.0 {
            let o1 = dense_dirichlet(g.dim(), g.n(), g.lengths(), &v1);
            for (m, l) in s1.lambdas.iter().enumerate() {
                let o = o1.get(m).copied().unwrap_or(f64::INFINITY);
                ok &= (l.is_infinite() && o.is_infinite()) || rel_err(*l, o) <= 1e-9;
            }
        }
        for m in 0..3 {
            let (a, b) = (s1.lambdas[m], s2.lambdas[m]);
            if s1.status[m] == EigenStatus::Unresolved || s2.status[m] == EigenStatus::Unresolved {
                unresolved += 1;
            }
            let slack = if p == 2.0 { 1e-9 } else { 1e-4 * b.abs() };
            if b.is_finite() {
                worst = worst.max(a - b);
                ok &= a <= b + slack;
            }
            digest.push_str(&format!("{a:e},{b:e};"));
        }
    }
    Monotonicity {
        pass: ok && unresolved == 0,
        worst,
        unresolved,
        residuals,
        digest,
    }
}

fn criterion_6(s: &mut Suite) -> Verdict {
    let a = monotonicity_run(2.0, 100, 6);
    let b = monotonicity_run(3.0, 20, 7);
    s.record_residuals(6, &a.residuals);
    s.record_residuals(6, &b.residuals);
    let again = monotonicity_run(2.0, 100, 6).digest + &monotonicity_run(3.0, 20, 7).digest;
    s.digests.push((6, a.digest.clone() + &b.digest, again));
    verdict(
        a.pass && b.pass,
        format!(
            "p=2: 100 pairs, max lambda(mu1) - lambda(mu2) = {:.2e}, unresolved {}; p=3: 20 pairs, max = {:.2e}, unresolved {}",
            a.worst, a.unresolved, b.worst, b.unresolved
        ),
    )
}

fn half_interval_config(n: usize) -> Value {
    let mask: Vec<u8> = (0..n).map(|c| u8::from(c < n / 2)).collect();
    json!({
        "grid": grid_json(1, n, 1.0, 2.0),
        "gamma_diag": {
            "mask": mask,
            "s_values": [10.0, 1e3, 1e6],
            "m": 1,
            "psi": { "kind": "exp", "beta": 1.0 },
        },
    })
}

fn criteria_7_8(s: &mut Suite) -> (Verdict, Verdict) {
    let r = s.cli(7, Command::GammaDiag, half_interval_config(64));
    let res = &r.results["results"];
    let lsc = &res["lsc"];
    let usc = &res["usc"];
    let d = floats(&lsc["distances"]);
    let l = floats(&lsc["values"]);
    let limit = lsc["limit_value"].as_f64().unwrap_or(f64::NAN);
    let gap = (limit - l.last().copied().unwrap_or(f64::NAN)) / limit;
    let dec = d.windows(2).all(|w| w[1] < w[0]);
    let inc = l.windows(2).all(|w| w[1] > w[0]);
    let pass = |v: &Value| v["pass"].as_bool() == Some(true) && v["inconclusive"].as_bool() == Some(false);
    let v7 = verdict(
        r.code == 0 && dec && inc && (-1e-9..=1e-3).contains(&gap) && pass(lsc) && pass(usc),
        format!(
            "distances = {}, lambda_1 = {}, limit = {limit:.6}, relative gap = {gap:.2e}, lsc margin = {:.3e}, usc margin = {:.3e}",
            fmt_sci(&d),
            fmt_list(&l),
            lsc["margin"].as_f64().unwrap_or(f64::NAN),
            usc["margin"].as_f64().unwrap_or(f64::NAN)
        ),
    );
    let psi = &res["psi"];
    let v8 = verdict(
        psi["pass"].as_bool() == Some(true),
        format!(
            "Psi-volumes = {}, limit = {:.6}, margin = {:.3e}",
            fmt_list(&floats(&psi["values"])),
            psi["limit_value"].as_f64().unwrap_or(f64::NAN),
            psi["margin"].as_f64().unwrap_or(f64::NAN)
        ),
    );
    (v7, v8)
}

/// Returns (all bounds hold, all monotone, worst bound slack, digest).
fn prox_suite(seed: u64) -> (bool, bool, f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound_ok = true;
    let mut mono_ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut digest = String::new();
    for t in 0..50 {
        let p = [2.0, 3.0][t % 2];
        let g = if t % 3 == 2 {
            GridSpec::rect(8, 1.0, 1.0, p).unwrap()
        } else {
            GridSpec::line(32, 1.0, p).unwrap()
        };
        let v = random_density(&mut rng, g.n_cells(), 0.1);
        let mu = CapacitaryMeasure::from_potential(g, &v).unwrap();
        let ctx = EnergyContext::new(mu.clone(), WeightPair::lebesgue(g)).unwrap();
        let mut z: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ctx.project(&mut z);
        let z = Field::new(g, z).unwrap();
        let fz = ctx.f_energy(&z);
        assert!(fz.is_finite());
        let b = vec![1.0; g.n_cells()];
        let mut prev = f64::INFINITY;
        for k in [0.5, 2.0, 8.0, 32.0] {
            let (u, _) = prox(&z, k, &mu, None).unwrap();
            let lhs = prox_penalty(&g, &z, &u, k, &b) + ctx.f_energy(&u);
            worst = worst.max(lhs - fz);
            bound_ok &= lhs <= fz + 1e-10;
            let diff: Vec<f64> = u.values.iter().zip(&z.values).map(|(a, b)| a - b).collect();
            let dist = g.lp_norm(&diff, p);
            mono_ok &= dist < prev;
            prev = dist;
            digest.push_str(&format!("{dist:e};"));
        }
    }
    (bound_ok, mono_ok, worst, digest)
}

fn criterion_9(s: &mut Suite) -> Verdict {
    let (bound, mono, worst, d) = prox_suite(9);
    let (_, _, _, again) = prox_suite(9);
    s.digests.push((9, d, again));
    verdict(
        bound && mono,
        format!("50 triples x 4 values of k: max (penalty + f(prox)) - f(z) = {worst:.2e}, distance decreasing in k: {mono}"),
    )
}

fn criterion_10(s: &mut Suite) -> Verdict {
    let c = 0.5;
    let r = s.cli(
        10,
        Command::OptimizePotential,
        json!({
            "grid": grid_json(1, 64, 1.0, 2.0),
            "optimize_potential": {
                "objective": { "kind": "single", "k": 1 },
                "c": c,
                "psi": { "kind": "exp", "beta": 1.0 },
            },
        }),
    );
    let res = &r.results["results"];
    let vol = res["psi_volume"].as_f64().unwrap_or(f64::NAN);
    let obj = res["objective"].as_f64().unwrap_or(f64::NAN);
    let base = res["baseline_objective"].as_f64().unwrap_or(f64::NAN);
    let margin = base - obj;
    verdict(
        r.code == 0 && (vol - c).abs() <= 1e-6 * c && margin > 1e-6 * base,
        format!(
            "Psi-volume = {vol:.12} (|err|/c = {:.1e}), lambda_1 = {obj:.6} vs uniform {base:.6}, margin = {margin:.4e}",
            (vol - c).abs() / c
        ),
    )
}

fn criterion_11(s: &mut Suite) -> Verdict {
    let c = 0.5;
    let n = 64;
    let r = s.cli(
        11,
        Command::OptimizeSet,
        json!({
            "grid": grid_json(2, n, 1.0, 2.0),
            "optimize_set": {
                "objective": { "kind": "single", "k": 1 },
                "c": c,
                "seeds": [0, 1, 2, 3, 4],
            },
        }),
    );
    let res = &r.results["results"];
    let j = bessel_j0_first_zero();
    let target = PI * j * j / c;
    let obj = res["objective"].as_f64().unwrap_or(f64::NAN);
    let cells = res["cells"].as_u64().unwrap_or(0);
    let exact_cells = (c * (n * n) as f64).round() as u64;
    let e = rel_err(obj, target);
    verdict(
        r.code == 0 && e <= 0.05 && cells == exact_cells && r.seconds < 600.0,
        format!(
            "best lambda_1 = {obj:.4} vs pi j01^2 / c = {target:.4} (rel err {e:.2e}), seeds {}, |A| = {cells} cells = {}, {:.1}s",
            fmt_list(&floats(&res["seed_objectives"])),
            cells as f64 / (n * n) as f64,
            r.seconds
        ),
    )
}

fn criterion_12(s: &Suite) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut per = Vec::new();
    for (c, r) in &s.residuals {
        let w = r.iter().copied().fold(0.0, f64::max);
        per.push(format!("c{c}: {} pairs, max {w:.1e}", r.len()));
        worst = worst.max(w);
        count += r.len();
    }
    verdict(
        worst <= 1e-6 && count > 0,
        format!("{count} finite eigenpairs, max relative residual {worst:.2e} ({})", per.join(", ")),
    )
}

type Scalar<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// Worst relative gradient error and a digest of all errors.
fn gradient_suite(seed: u64) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut digest = String::new();
    for p in [1.5, 2.0, 3.0] {
        for t in 0..20 {
            let g = if t % 2 == 0 {
                GridSpec::line(12, 1.0, p).unwrap()
            } else {
                GridSpec::rect(6, 1.0, 1.0, p).unwrap()
            };
            let dens: Vec<Density> = (0..g.n_cells()).map(|_| Density::Finite(rng.gen_range(0.0..5.0))).collect();
            let mu = CapacitaryMeasure::from_densities(g, dens, &[]).unwrap();
            let w1: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(0.5..2.0)).collect();
            let w2: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(0.0..0.4)).collect();
            let ctx = EnergyContext::new(mu, WeightPair::new(g, w1, &[], w2).unwrap()).unwrap();
            let u: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let field = Field::new(g, u.clone()).unwrap();
            let as_field = |x: &[f64]| Field::new(g, x.to_vec()).unwrap();
            let checks: [(Field, Scalar); 3] = [
                (ctx.energy_gradient(&field), Box::new(|x: &[f64]| ctx.f_energy(&as_field(x)))),
                (ctx.g_gradient(&field, Weight::Nu1), Box::new(|x: &[f64]| ctx.g_energy(&as_field(x), Weight::Nu1))),
                (ctx.g_gradient(&field, Weight::Nu2), Box::new(|x: &[f64]| ctx.g_energy(&as_field(x), Weight::Nu2))),
            ];
            for (grad, f) in &checks {
                let fd = central_gradient(f, &u, 1e-5);
                let num: f64 = grad.values.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = grad.values.iter().map(|a| a * a).sum::<f64>().sqrt();
                worst = worst.max(num / den);
                digest.push_str(&format!("{:e};", num / den));
            }
        }
    }
    (worst, digest)
}

fn criterion_13(s: &mut Suite) -> Verdict {
    let (worst, digest) = gradient_suite(13);
    s.digests.push((13, digest, gradient_suite(13).1));
    verdict(worst <= 1e-5, format!("60 fields x 3 functionals, max relative gradient error {worst:.2e}"))
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<String> = fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    for n in &names {
        let x = fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(n)).map_err(|_| format!("{n} missing in repeat"))?;
        if x != y {
            return Err(format!("{n} differs"));
        }
    }
    Ok(names.len())
}

fn criterion_14(s: &Suite) -> Verdict {
    let mut files = 0;
    let mut bad = Vec::new();
    for (c, a, b) in &s.repeats {
        match same_files(a, b) {
            Ok(k) => files += k,
            Err(e) => bad.push(format!("c{c}: {e}")),
        }
    }
    for (c, a, b) in &s.digests {
        if a != b {
            bad.push(format!("c{c}: library results differ"));
        }
    }
    verdict(
        bad.is_empty() && files > 0,
        if bad.is_empty() {
            format!("{} CLI runs repeated, {files} result files byte-identical; {} library suites repeated", s.repeats.len(), s.digests.len())
        } else {
            bad.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let mut s = Suite {
        root: tempfile::tempdir().unwrap(),
        runs: 0,
        residuals: BTreeMap::new(),
        repeats: Vec::new(),
        digests: Vec::new(),
    };
    let mut out: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |id: usize, v: Verdict| {
        println!("criterion {id:2}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        out.push((id, v));
    };
    report(1, criterion_1(&mut s));
    report(2, criterion_2(&mut s));
    report(3, criterion_3(&mut s));
    report(4, criterion_4(&mut s));
    report(5, criterion_5(&mut s));
    report(6, criterion_6(&mut s));
    let (v7, v8) = criteria_7_8(&mut s);
    report(7, v7);
    report(8, v8);
    report(9, criterion_9(&mut s));
    report(10, criterion_10(&mut s));
    report(11, criterion_11(&mut s));
    report(12, criterion_12(&s));
    report(13, criterion_13(&mut s));
    report(14, criterion_14(&s));
    let failed: Vec<usize> = out.iter().filter(|(_, v)| !v.pass).map(|(i, _)| *i).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", out.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
