use std::path::Path;

use serde::Serialize;

use roa_core::model::{self, stage_seed, FeasibilityReport, StabilityReport, Verdict};
use roa_core::oracle::{self, SimSettings, ViSettings};
use roa_core::roa::{self, RoaConfig};
use roa_core::soscomp;
use roa_core::{GridField, RoaCertificate, SystemModel};

use crate::error::{CliError, EXIT_FAILURE};
use crate::manifest::Run;
use crate::{CertifyArgs, CheckArgs, OracleArgs, PlotArgs, SolveArgs};

fn load_model(run: &mut Run, path: &Path) -> Result<SystemModel, CliError> {
    let text = run.read_input(path)?;
    let mut m = model::load_model(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if m.name.is_empty() {
        m.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(m)
}

fn load_cert(run: &mut Run, path: &Path, model: &SystemModel) -> Result<RoaCertificate, CliError> {
    let text = run.read_input(path)?;
    let cert = RoaCertificate::from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if cert.model_hash != model.source_hash {
        return Err(CliError::usage(format!(
            "{} was computed for a different model file (hash {} vs {})",
            path.display(),
            short(&cert.model_hash),
            short(&model.source_hash)
        )));
    }
    Ok(cert)
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Parses `name=value`, where `name` is a state name or a 1-based index.
fn parse_slice(model: &SystemModel, s: &str) -> Result<(usize, f64), CliError> {
    let bad = || CliError::usage(format!("bad slice `{s}`: expected NAME=VALUE, e.g. {}=0", model.state_names[0]));
    let (name, value) = s.split_once('=').ok_or_else(bad)?;
    let name = name.trim();
    let axis = model
        .state_names
        .iter()
        .position(|n| n == name)
        .or_else(|| name.parse::<usize>().ok().filter(|&i| (1..=model.n).contains(&i)).map(|i| i - 1))
        .ok_or_else(|| CliError::usage(format!("unknown state `{name}` in slice `{s}`")))?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    Ok((axis, value))
}

fn slice_label(model: &SystemModel, fixed: &[(usize, f64)]) -> String {
    fixed
        .iter()
        .map(|&(i, v)| format!("_{}_{v}", model.state_names[i]))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct CheckRow {
    check: String,
    /// `pass`, `fail` or `warn`.
    result: &'static str,
    detail: String,
}

#[derive(Debug, Serialize)]
struct CheckReport {
    rows: Vec<CheckRow>,
    stability: StabilityReport,
    reach: FeasibilityReport,
    seed: FeasibilityReport,
    archimedean_radius: Option<f64>,
}

impl CheckReport {
    fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.result == "fail")
    }
}

fn margin_rows(group: &str, report: &FeasibilityReport, rows: &mut Vec<CheckRow>) {
    for p in &report.parts {
        let result = match p.verdict {
            Verdict::Feasible => "pass",
            Verdict::Infeasible => "fail",
            Verdict::Unknown => "warn",
        };
        rows.push(CheckRow {
            check: format!("{group}/{}", p.name),
            result,
            detail: format!(
                "margin {:.3e} (need >= {:.0e}), solver {}, residual {:.1e}",
                p.margin, p.threshold, p.status, p.residual
            ),
        });
    }
}

fn run_checks(run: &mut Run, m: &SystemModel, d_samples: usize) -> CheckReport {
    let settings = m.solver_settings();
    let stability = run.timed("stability", || model::check_exponential_stability(m, d_samples));
    let reach = run.timed("reach", || model::check_reach_bound(m, &settings));
    let seed = run.timed("seed", || model::check_seed_lyapunov(m, &settings));
    let archimedean_radius = model::check_archimedean_d(m);

    let mut rows = vec![CheckRow {
        check: "stability".into(),
        result: if stability.pass { "pass" } else { "fail" },
        detail: format!(
            "max spectral radius {:.4} over {} disturbance samples",
            stability.max_radius,
            stability.samples.len()
        ),
    }];
    margin_rows("reach", &reach, &mut rows);
    margin_rows("seed", &seed, &mut rows);
    rows.push(match archimedean_radius {
        Some(rd) => CheckRow {
            check: "archimedean-d".into(),
            result: "pass",
            detail: format!("|d|^2 <= {rd} present"),
        },
        None => CheckRow {
            check: "archimedean-d".into(),
            result: "warn",
            detail: format!(
                "no ball constraint on d; add `|d|^2 - R_D <= 0` with R_D = {:.6}",
                model::suggested_archimedean_radius(m)
            ),
        },
    });
    CheckReport {
        rows,
        stability,
        reach,
        seed,
        archimedean_radius,
    }
}

fn print_rows(rows: &[CheckRow]) {
    let w = rows.iter().map(|r| r.check.len()).max().unwrap_or(0);
    for r in rows {
        println!("{:<w$}  {:<4}  {}", r.check, r.result, r.detail);
    }
}

pub fn check(run: &mut Run, args: &CheckArgs) -> Result<i32, CliError> {
    let m = load_model(run, &args.model)?;
    let d_samples = args.d_samples.unwrap_or(m.settings.d_grid);
    run.config("d_samples", d_samples);
    run.config("solver", m.solver_settings());
    let report = run_checks(run, &m, d_samples);
    print_rows(&report.rows);
    for r in report.rows.iter().filter(|r| r.result == "warn") {
        eprintln!("warning: {}: {}", r.check, r.detail);
    }
    run.write("check.json", &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(if report.failed() { EXIT_FAILURE } else { 0 })
}

pub fn solve(run: &mut Run, args: &SolveArgs) -> Result<i32, CliError> {
    let backend = soscomp::default_backend()?;
    let m = load_model(run, &args.model)?;
    let k = args.degree.unwrap_or(m.settings.degree);
    let mut cfg = RoaConfig::for_model(&m, k);
    if args.mult_degree.is_some() {
        cfg.mult_degree = args.mult_degree;
    }
    if let Some(it) = args.max_iterations {
        cfg.solver.max_iterations = it;
    }
    cfg.seed = stage_seed(run.manifest.seeds["run"], "certify");
    cfg.validate()?;
    run.seed("certify", cfg.seed);
    run.config("roa", &cfg);
    run.config("backend", backend.name());
    run.config("force", args.force);

    if !args.force {
        let report = run_checks(run, &m, m.settings.d_grid);
        if report.failed() {
            print_rows(&report.rows);
            eprintln!("error: assumption checks failed; rerun with --force to solve anyway");
            return Ok(EXIT_FAILURE);
        }
    }

    if args.emit_sdp {
        let sdp = run.timed("emit-sdp", || -> Result<_, CliError> {
            let mut prog = roa::build_program(&m, &cfg)?;
            soscomp::prune_gram_bases(&mut prog)?;
            let sdp = soscomp::compile(&prog)?;
            Ok((sdp.dump_sparse(), soscomp::sdp_manifest(&prog, &sdp)))
        })?;
        run.write("sdp.txt", &sdp.0)?;
        run.write("sdp.json", &serde_json::to_string_pretty(&sdp.1).expect("json"))?;
    }

    let cert = roa::compute_roa(&m, &cfg)?;
    for (stage, t) in [
        ("build", cert.timings.build),
        ("compile", cert.timings.compile),
        ("solve", cert.timings.solve),
        ("extract", cert.timings.extract),
    ] {
        run.record_time(stage, t);
    }
    let path = run.write(&args.out, &cert.to_json())?;

    println!("model       {} (n = {}, k = {})", m.name, m.n, k);
    println!(
        "sdp         {} rows, blocks {:?}",
        cert.sdp_rows,
        cert.sdp_blocks.iter().filter(|&&b| b > 0).collect::<Vec<_>>()
    );
    println!("status      {} after {} iterations", cert.status, cert.solver.iterations);
    match cert.objective {
        Some(p) => println!("objective   p* = {p:.6}"),
        None => println!("objective   -"),
    }
    for r in &cert.residuals {
        println!("residual    {:<24} {:.2e}", r.identity, r.max_abs);
    }
    let t = &cert.timings;
    println!(
        "timings     build {:.2} s, compile {:.2} s, solve {:.2} s, extract {:.2} s",
        t.build, t.compile, t.solve, t.extract
    );
    println!("certificate {}", path.display());
    Ok(if cert.is_solved() { 0 } else { EXIT_FAILURE })
}

pub fn certify(run: &mut Run, args: &CertifyArgs) -> Result<i32, CliError> {
    let m = load_model(run, &args.model)?;
    let cert = load_cert(run, &args.cert, &m)?;
    let mut cfg = cert.config.clone();
    cfg.samples = args.samples.unwrap_or(cfg.samples);
    cfg.policies = args.policies.unwrap_or(cfg.policies);
    cfg.horizon = args.horizon.unwrap_or(cfg.horizon);
    cfg.seed = stage_seed(run.manifest.seeds["run"], "certify");
    run.seed("certify", cfg.seed);
    run.config("roa", &cfg);
    if !cert.is_solved() {
        eprintln!("error: certificate status is {}; nothing to certify", cert.status);
        return Ok(EXIT_FAILURE);
    }
    let report = run.timed("certify", || roa::certify(&cert, &m, &cfg));
    run.write("certify.json", &serde_json::to_string_pretty(&report).expect("report serializes"))?;

    for f in &report.families {
        println!(
            "family      {:<20} {:>8} samples, {} violations, min slack {:.2e}",
            f.family, f.samples, f.violations, f.worst
        );
    }
    println!(
        "states      {} of {} requested ({} draws)",
        report.states_tested, report.states_requested, report.draws
    );
    println!(
        "trajectories {} ({} per state, horizon {}): {} stayed in X, {} left, {} reached the seed set",
        report.trajectories, report.policies_per_state, report.horizon, report.stayed_in_x, report.left_x, report.hit_seed
    );
    println!("verdict     {}", if report.pass { "pass" } else { "FAIL" });
    Ok(if report.pass { 0 } else { EXIT_FAILURE })
}

#[derive(Debug, Serialize)]
struct ViSummary {
    iterations: usize,
    converged: bool,
    delta: f64,
    max_decrease: f64,
    bellman_residual: f64,
    bellman_residual_at: Vec<f64>,
    v_at_origin_node: Option<f64>,
}

pub fn oracle(run: &mut Run, args: &OracleArgs) -> Result<i32, CliError> {
    let m = load_model(run, &args.model)?;
    let slices = args
        .slice
        .iter()
        .map(|s| parse_slice(&m, s))
        .collect::<Result<Vec<_>, _>>()?;
    if args.points.is_some_and(|p| p < 2) || args.d_points == 0 || args.threshold <= 0.0 {
        return Err(CliError::usage("grid sizes and threshold must be positive (points >= 2)"));
    }
    let vi = ViSettings {
        points: args.points,
        d_points: args.d_points,
        max_iterations: args.max_iterations,
        threshold: args.threshold,
    };
    run.config("vi", &vi);

    let result = run.timed("value-iteration", || oracle::value_iteration(&m, &vi));
    let residual = run.timed("bellman-residual", || oracle::bellman_residual(&m, &result.field, vi.d_points));
    let origin = vec![0.0; m.n];
    let origin_node = (0..result.field.len()).find(|&i| result.field.coords(i) == origin);
    let summary = ViSummary {
        iterations: result.iterations,
        converged: result.converged,
        delta: result.delta,
        max_decrease: result.max_decrease,
        bellman_residual: residual.max_abs,
        bellman_residual_at: residual.at.clone(),
        v_at_origin_node: origin_node.map(|i| result.field.values[i]),
    };
    println!(
        "value iteration  {} sweeps, sup-norm change {:.2e} ({}), Bellman residual {:.2e}",
        result.iterations,
        result.delta,
        if result.converged { "converged" } else { "NOT converged" },
        residual.max_abs
    );
    run.write("v.csv", &result.field.to_csv())?;
    run.write("vi_log.csv", &result.log_csv())?;
    run.write("vi.json", &serde_json::to_string_pretty(&summary).expect("json"))?;

    if args.sim {
        let seed = stage_seed(run.manifest.seeds["run"], "oracle");
        run.seed("oracle", seed);
        let slices = if slices.is_empty() { vec![Vec::new()] } else { slices.into_iter().map(|s| vec![s]).collect() };
        for fixed in slices {
            let sim = SimSettings {
                points: args.points,
                d_points: args.d_points,
                horizon: args.horizon,
                random_policies: args.random_policies,
                seed,
                fixed: fixed.clone(),
            };
            let label = slice_label(&m, &fixed);
            run.config(&format!("sim{label}"), &sim);
            let mask = run.timed(&format!("simulation{label}"), || oracle::grid_max_roa(&m, Some(&result.field), &sim));
            println!("simulation{label}  {} of {} nodes in the estimated region", mask.count(), mask.len());
            run.write(format!("sim_mask{label}.csv"), &mask.to_csv())?;
        }
    }
    Ok(0)
}

/// Long-form CSV of several masks on one grid: coordinates, then one 0/1 column each.
fn overlay_csv(columns: &[(String, GridField<bool>)]) -> String {
    let grid = &columns[0].1;
    let mut out: Vec<String> = grid.axes.iter().map(|a| a.name.clone()).collect();
    out.extend(columns.iter().map(|c| c.0.clone()));
    let mut s = out.join(",") + "\n";
    for i in 0..grid.len() {
        let mut row: Vec<String> = grid.coords(i).iter().map(|c| c.to_string()).collect();
        row.extend(columns.iter().map(|c| if c.1.values[i] { "1" } else { "0" }.to_string()));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn plot_data(run: &mut Run, args: &PlotArgs) -> Result<i32, CliError> {
    if args.resolution < 2 || args.overlay_points < 2 {
        return Err(CliError::usage("--resolution and --overlay-points must be at least 2"));
    }
    let m = load_model(run, &args.model)?;
    let mut certs = Vec::new();
    for path in std::iter::once(&args.cert).chain(&args.compare) {
        let cert = load_cert(run, path, &m)?;
        let mut label = format!("k{}", cert.config.k);
        if certs.iter().any(|(l, _): &(String, RoaCertificate)| *l == label) {
            label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(label);
        }
        certs.push((label, cert));
    }
    let slices: Vec<Vec<(usize, f64)>> = if args.full || (m.n <= 2 && args.slice.is_empty()) {
        vec![Vec::new()]
    } else if args.slice.is_empty() {
        (0..m.n).map(|i| vec![(i, 0.0)]).collect()
    } else {
        args.slice
            .iter()
            .map(|s| parse_slice(&m, s).map(|p| vec![p]))
            .collect::<Result<_, _>>()?
    };
    run.config("resolution", args.resolution);
    run.config("slices", &slices);

    let mut unsolved = 0;
    for (label, cert) in &certs {
        if !cert.is_solved() {
            eprintln!("warning: {label} has status {}; its mask is empty", cert.status);
            unsolved += 1;
        }
        for fixed in &slices {
            let sl = slice_label(&m, fixed);
            let grid = run.timed(&format!("sign-grid-{label}{sl}"), || cert.sign_grid(args.resolution, fixed));
            println!("{label}{sl}  {} of {} nodes inside", grid.count(), grid.len());
            run.write(format!("sign_{label}{sl}.csv"), &grid.to_csv())?;
        }
    }

    if args.overlay {
        let vi = ViSettings::default();
        let seed = stage_seed(run.manifest.seeds["run"], "oracle");
        run.seed("oracle", seed);
        run.config("overlay_vi", &vi);
        let v = run.timed("value-iteration", || oracle::value_iteration(&m, &vi));
        for fixed in &slices {
            let sl = slice_label(&m, fixed);
            let sim = SimSettings {
                points: Some(args.overlay_points),
                seed,
                fixed: fixed.clone(),
                ..SimSettings::default()
            };
            let mask = run.timed(&format!("simulation{sl}"), || oracle::grid_max_roa(&m, Some(&v.field), &sim));
            let mut columns: Vec<(String, GridField<bool>)> = certs
                .iter()
                .map(|(label, c)| (label.clone(), c.sign_grid(args.overlay_points, fixed)))
                .collect();
            columns.push(("oracle".to_string(), mask));
            run.write(format!("overlay{sl}.csv"), &overlay_csv(&columns))?;
        }
    }
    Ok(if unsolved > 0 { EXIT_FAILURE } else { 0 })
}
