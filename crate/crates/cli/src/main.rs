use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use ncgeom::algebra::{full_matrix_algebra, AlgebraJson, State};
use ncgeom::distance::{distance_matrix, Constraint, DistanceProblem, DistanceResult, Status, DEFAULT_TOL};
use ncgeom::gauge::GaugeCategory;
use ncgeom::matrix::{self, random, ComplexMatrix, MatrixJson};
use ncgeom::moyal::{self, MoyalTruncation};
use ncgeom::report::{ValidationReport, SCHEMA_VERSION};
use ncgeom::triple::{check_axioms, TripleJson};
use ncgeom::Error;

#[derive(Parser, Debug)]
#[command(name = "ncgeom", version, about = "Finite spectral triples, distances and Moyal truncations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Solver tolerance.
    #[arg(long, global = true, env = "NCGEOM_TOL", default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the axioms of a triple.
    Check {
        #[arg(long)]
        triple: PathBuf,
    },
    /// Spectral distance between two states, or the matrix for more.
    Distance {
        #[arg(long)]
        triple: PathBuf,
        #[arg(long = "state", required = true, num_args = 1)]
        states: Vec<PathBuf>,
        /// Use the single constraint of an even triple.
        #[arg(long)]
        even: bool,
    },
    #[command(subcommand)]
    Gauge(GaugeCommand),
    #[command(subcommand)]
    Moyal(MoyalCommand),
    /// Reproduction tables.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long = "N")]
        big_n: Option<usize>,
        #[arg(long = "r-list", value_delimiter = ',', default_values_t = [0.25, 0.5])]
        r_list: Vec<f64>,
        #[arg(long = "N-list", value_delimiter = ',', default_values_t = [16, 32, 64])]
        n_list: Vec<usize>,
        #[arg(long = "theta-list", value_delimiter = ',', default_values_t = [1.0, 0.5, 0.25, 0.125])]
        theta_list: Vec<f64>,
        #[arg(long = "M", default_value_t = 50)]
        points: usize,
        /// Random objects per size in the category suite.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

#[derive(Subcommand, Debug)]
enum GaugeCommand {
    /// The morphism D → D′, if any.
    Mor(GaugePair),
    /// Whether D is an initial object.
    Initial {
        #[arg(long = "D")]
        d: PathBuf,
        #[arg(long)]
        algebra: PathBuf,
        /// Restrict objects to operators odd for this grading.
        #[arg(long)]
        grading: Option<PathBuf>,
    },
    /// Whether the morphism D → D′ is invertible.
    Iso(GaugePair),
}

#[derive(Args, Debug)]
struct GaugePair {
    #[arg(long = "D")]
    d: PathBuf,
    #[arg(long = "Dprime")]
    dprime: PathBuf,
    #[arg(long)]
    algebra: PathBuf,
}

#[derive(Subcommand, Debug)]
enum MoyalCommand {
    Spectrum(MoyalBase),
    #[command(name = "eig-dist")]
    EigDist {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        base: MoyalBase,
        /// Use the full constraint instead of the even reduction.
        #[arg(long)]
        full: bool,
    },
    Coherent {
        /// `re` or `re,im`.
        #[arg(long, value_delimiter = ',', num_args = 1..=2, allow_hyphen_values = true)]
        z: Vec<f64>,
        #[command(flatten)]
        base: MoyalBase,
        #[arg(long)]
        full: bool,
    },
    Gh {
        #[arg(long = "theta-list", value_delimiter = ',', default_values_t = [1.0, 0.5, 0.25, 0.125])]
        theta_list: Vec<f64>,
        #[arg(long = "M", default_value_t = 50)]
        points: usize,
    },
    Zeta {
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long = "N", default_value_t = 256)]
        big_n: usize,
    },
    Correspondence {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        base: MoyalBase,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct MoyalBase {
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long = "N", default_value_t = 24)]
    big_n: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Experiment {
    Eigdist,
    Coherent,
    Gh,
    Zeta,
    Category,
}

/// A failed run: exit code and message (or serialized report).
struct Failure {
    code: u8,
    body: String,
}

impl Failure {
    fn parse(msg: impl Into<String>) -> Self {
        Failure { code: 1, body: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Parse(_)) { 1 } else { 2 };
        Failure { code, body: envelope("error", json!({ "error": e.to_string() })).to_string() }
    }
}

type Table = (Vec<String>, Vec<Vec<String>>);

struct Outcome {
    report: Value,
    table: Option<Table>,
    code: u8,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, table: None, code: 0 }
    }

    fn with_table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }

    fn failing_if(mut self, failed: bool, code: u8) -> Self {
        if failed {
            self.code = code;
        }
        self
    }
}

fn envelope(command: &str, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    map.insert("command".into(), json!(command));
    if let Value::Object(inner) = body {
        map.extend(inner);
    }
    Value::Object(map)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<ComplexMatrix, Failure> {
    Ok(read_json::<MatrixJson>(path)?.to_matrix()?)
}

fn read_state(path: &Path) -> Result<State, Failure> {
    let s: State = read_json(path)?;
    Ok(State::new(s.rho)?)
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.12e}")
    }
}

fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(num(x))
    }
}

fn distance_json(r: &DistanceResult) -> Value {
    json!({
        "lower": jnum(r.lower),
        "upper": jnum(r.upper),
        "gap": jnum(r.gap()),
        "status": r.status,
        "iterations": r.iterations,
    })
}

fn sweep_table(rows: Vec<[String; 5]>) -> Table {
    let header = ["parameter", "lower", "upper", "formula", "residual", "schema_version"];
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().chain([SCHEMA_VERSION.to_string()]).collect())
        .collect();
    (header.iter().map(|s| s.to_string()).collect(), rows)
}

fn report_table(rep: &ValidationReport) -> Table {
    let header = vec!["check".into(), "pass".into(), "residual".into(), "schema_version".into()];
    let rows = rep
        .checks
        .iter()
        .map(|c| vec![c.check.clone(), c.pass.to_string(), num(c.residual), SCHEMA_VERSION.into()])
        .collect();
    (header, rows)
}

/// Single-row table from the scalar fields of a report.
fn flat_table(report: &Value) -> Table {
    let mut header = Vec::new();
    let mut row = Vec::new();
    if let Value::Object(map) = report {
        for (k, v) in map {
            let cell = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => continue,
            };
            header.push(k.clone());
            row.push(cell);
        }
    }
    (header, vec![row])
}

fn any_budget(results: &[&DistanceResult]) -> bool {
    results.iter().any(|r| r.status == Status::BudgetExhausted)
}

fn check_tol(tol: f64) -> Result<(), Failure> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Failure::parse(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    let g = cli.global.clone();
    check_tol(g.tol)?;
    match cli.command {
        Command::Check { triple } => {
            let t = read_json::<TripleJson>(&triple)?.to_triple()?;
            let rep = check_axioms(&t);
            let pass = rep.all_pass();
            let out = Outcome::ok(envelope("check", json!({ "pass": pass, "checks": rep })));
            Ok(out.with_table(report_table(&rep)).failing_if(!pass, 2))
        }
        Command::Distance { triple, states, even } => {
            let t = read_json::<TripleJson>(&triple)?.to_triple()?;
            let loaded = states.iter().map(|p| read_state(p)).collect::<Result<Vec<_>, _>>()?;
            if loaded.len() < 2 {
                return Err(Failure::parse("distance needs at least two --state files"));
            }
            let constraint = if even { Constraint::Even } else { Constraint::Full };
            let problem = DistanceProblem::new(&t, constraint)?;
            if loaded.len() == 2 {
                let r = problem.solve(&loaded[0], &loaded[1], g.tol)?;
                let budget = any_budget(&[&r]);
                let out = Outcome::ok(envelope("distance", distance_json(&r)));
                let table = flat_table(&out.report);
                return Ok(out.with_table(table).failing_if(budget, 3));
            }
            let dm = distance_matrix(&problem, &loaded, g.tol)?;
            let labels: Vec<String> = states
                .iter()
                .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
                .collect();
            let k = loaded.len();
            let mut all = Vec::new();
            let mut rows = Vec::new();
            let mut entries = Vec::new();
            for i in 0..k {
                let mut row = vec![labels[i].clone()];
                let mut jrow = Vec::new();
                for j in 0..k {
                    match dm.get(i, j) {
                        Some(r) => {
                            row.push(num(r.value()));
                            jrow.push(distance_json(r));
                            all.push(r);
                        }
                        None => {
                            row.push(num(0.0));
                            jrow.push(json!({ "lower": 0.0, "upper": 0.0, "gap": 0.0, "status": "certified", "iterations": 0 }));
                        }
                    }
                }
                rows.push(row);
                entries.push(jrow);
            }
            let header = std::iter::once("state".to_string()).chain(labels.iter().cloned()).collect();
            let budget = any_budget(&all);
            let out = Outcome::ok(envelope("distance", json!({ "labels": labels, "entries": entries })));
            Ok(out.with_table((header, rows)).failing_if(budget, 3))
        }
        Command::Gauge(cmd) => gauge(cmd),
        Command::Moyal(cmd) => moyal_command(cmd, &g),
        Command::Experiment { name, theta, big_n, r_list, n_list, theta_list, points, count } => match name {
            Experiment::Eigdist => eigdist(theta, big_n.unwrap_or(12), g.tol),
            Experiment::Coherent => coherent_sweep(theta, &r_list, &n_list, g.tol),
            Experiment::Gh => gh_sweep(&theta_list, points),
            Experiment::Zeta => zeta(theta, big_n.unwrap_or(256)),
            Experiment::Category => category(g.seed, count),
        },
    }
}

fn gauge(cmd: GaugeCommand) -> Result<Outcome, Failure> {
    let load = |d: &Path, a: &Path| -> Result<(ComplexMatrix, GaugeCategory), Failure> {
        let algebra = read_json::<AlgebraJson>(a)?.to_algebra()?;
        Ok((read_matrix(d)?, GaugeCategory::new(algebra)))
    };
    match cmd {
        GaugeCommand::Mor(p) => {
            let (d, cat) = load(&p.d, &p.algebra)?;
            let dp = read_matrix(&p.dprime)?;
            let body = match cat.mor(&d, &dp)? {
                Some(m) => json!({ "exists": true, "omega": MatrixJson::from_matrix(&m.omega) }),
                None => json!({ "exists": false }),
            };
            let out = Outcome::ok(envelope("gauge mor", body));
            let table = flat_table(&out.report);
            Ok(out.with_table(table))
        }
        GaugeCommand::Initial { d, algebra, grading } => {
            let (d, mut cat) = load(&d, &algebra)?;
            if let Some(gp) = grading {
                cat = GaugeCategory::graded(cat.algebra, read_matrix(&gp)?);
            }
            let om = cat.omega1(&d)?;
            let initial = cat.is_initial(&d)?;
            let body = json!({ "initial": initial, "omega1_rank": om.rank(), "graded": cat.graded });
            let out = Outcome::ok(envelope("gauge initial", body));
            let table = flat_table(&out.report);
            Ok(out.with_table(table))
        }
        GaugeCommand::Iso(p) => {
            let (d, cat) = load(&p.d, &p.algebra)?;
            let dp = read_matrix(&p.dprime)?;
            let body = match cat.mor(&d, &dp)? {
                Some(m) => json!({ "exists": true, "isomorphism": cat.is_isomorphism(&m)? }),
                None => json!({ "exists": false, "isomorphism": false }),
            };
            let out = Outcome::ok(envelope("gauge iso", body));
            let table = flat_table(&out.report);
            Ok(out.with_table(table))
        }
    }
}

fn solve_pair(m: &MoyalTruncation, phi: &State, phi2: &State, full: bool, tol: f64) -> Result<DistanceResult, Failure> {
    let constraint = if full { Constraint::Full } else { Constraint::Even };
    Ok(DistanceProblem::new(&m.triple, constraint)?.solve(phi, phi2, tol)?)
}

fn moyal_command(cmd: MoyalCommand, g: &Global) -> Result<Outcome, Failure> {
    match cmd {
        MoyalCommand::Spectrum(b) => {
            let m = moyal::truncation(b.big_n, b.theta)?;
            let d2 = &m.triple.dirac * &m.triple.dirac;
            let eig = matrix::herm_eigenvalues(&d2)?;
            // Interior levels 2k/θ, each twice, for 1 ≤ k ≤ N − 1.
            let mut expected: Vec<f64> = (1..m.n).flat_map(|k| [2.0 * k as f64 / b.theta; 2]).collect();
            expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let nonzero: Vec<f64> = eig.iter().cloned().filter(|x| *x > 1e-9).collect();
            let residual = nonzero.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let rows = eig.iter().enumerate().map(|(i, v)| [i.to_string(), num(*v), num(*v), String::new(), String::new()]).collect();
            let body = json!({
                "theta": b.theta, "N": b.big_n,
                "dirac_squared": eig, "abs_dirac": m.abs_spectrum(),
                "residual": residual,
            });
            Ok(Outcome::ok(envelope("moyal spectrum", body)).with_table(sweep_table(rows)))
        }
        MoyalCommand::EigDist { m: i, n: j, base, full } => {
            let m = moyal::truncation(base.big_n, base.theta)?;
            let r = solve_pair(&m, &m.eigenstate(i)?, &m.eigenstate(j)?, full, g.tol)?;
            let formula = moyal::eigenstate_distance_formula(i, j, base.theta);
            let residual = (r.value() - formula).abs();
            let mut body = distance_json(&r);
            body["formula"] = json!(formula);
            body["residual"] = json!(residual);
            body["theta"] = json!(base.theta);
            body["N"] = json!(base.big_n);
            let budget = any_budget(&[&r]);
            let out = Outcome::ok(envelope("moyal eig-dist", body));
            let table = flat_table(&out.report);
            Ok(out.with_table(table).failing_if(budget, 3))
        }
        MoyalCommand::Coherent { z, base, full } => {
            let zc = Complex64::new(z.first().copied().unwrap_or(0.0), z.get(1).copied().unwrap_or(0.0));
            let m = moyal::truncation(base.big_n, base.theta)?;
            let (v0, vz) = (m.coherent_vector(Complex64::new(0.0, 0.0))?, m.coherent_vector(zc)?);
            let r = solve_pair(&m, &m.vector_state(&v0)?, &m.vector_state(&vz)?, full, g.tol)?;
            let e = m.an_element(4)?;
            let (rigorous, scaled) = m.an_lower_bounds(&e, &vz, &v0);
            let mut body = distance_json(&r);
            body["z"] = json!([zc.re, zc.im]);
            body["formula"] = json!(zc.norm());
            body["residual"] = json!((r.value() - zc.norm()).abs());
            body["an_lower_bound"] = json!(rigorous);
            body["bn_scaled_bound"] = json!(scaled);
            let budget = any_budget(&[&r]);
            let out = Outcome::ok(envelope("moyal coherent", body));
            let table = flat_table(&out.report);
            Ok(out.with_table(table).failing_if(budget, 3))
        }
        MoyalCommand::Gh { theta_list, points } => gh_sweep(&theta_list, points),
        MoyalCommand::Zeta { theta, big_n } => zeta(theta, big_n),
        MoyalCommand::Correspondence { n, base } => {
            let m = moyal::truncation(base.big_n, base.theta)?;
            let rep = moyal::correspondence_experiment(n, &m)?;
            let pass = rep.passed();
            let body = serde_json::to_value(&rep).map_err(|e| Failure::parse(e.to_string()))?;
            let mut combined = ValidationReport::new();
            combined.push("forward_intertwining", rep.forward_intertwining <= 1e-9, rep.forward_intertwining);
            combined.push("reverse_intertwining", rep.reverse_intertwining <= 1e-9, rep.reverse_intertwining);
            combined.extend("forward.", rep.forward_checks.clone());
            combined.extend("reverse.", rep.reverse_checks.clone());
            combined.extend("round_trip.", rep.round_trip.clone());
            let mut body = envelope("moyal correspondence", body);
            body["pass"] = json!(pass);
            Ok(Outcome::ok(body).with_table(report_table(&combined)).failing_if(!pass, 2))
        }
    }
}

fn eigdist(theta: f64, big_n: usize, tol: f64) -> Result<Outcome, Failure> {
    let m = moyal::truncation(big_n, theta)?;
    if big_n < 7 {
        return Err(Failure::parse("eigdist needs N >= 7"));
    }
    let problem = DistanceProblem::new(&m.triple, Constraint::Even)?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut results = Vec::new();
    for j in 1..=6 {
        for i in 0..j {
            let r = problem.solve(&m.eigenstate(i)?, &m.eigenstate(j)?, tol)?;
            let formula = moyal::eigenstate_distance_formula(i, j, theta);
            let residual = (r.value() - formula).abs();
            rows.push([format!("{i}-{j}"), num(r.lower), num(r.upper), num(formula), num(residual)]);
            let mut e = distance_json(&r);
            e["m"] = json!(i);
            e["n"] = json!(j);
            e["formula"] = json!(formula);
            e["residual"] = json!(residual);
            entries.push(e);
            results.push(r);
        }
    }
    let budget = any_budget(&results.iter().collect::<Vec<_>>());
    let body = json!({ "theta": theta, "N": big_n, "rows": entries });
    Ok(Outcome::ok(envelope("experiment eigdist", body)).with_table(sweep_table(rows)).failing_if(budget, 3))
}

fn coherent_sweep(theta: f64, r_list: &[f64], n_list: &[usize], tol: f64) -> Result<Outcome, Failure> {
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut results = Vec::new();
    for &big_n in n_list {
        let m = moyal::truncation(big_n, theta)?;
        let problem = DistanceProblem::new(&m.triple, Constraint::Even)?;
        let e = m.an_element(4)?;
        let v0 = m.coherent_vector(Complex64::new(0.0, 0.0))?;
        for &r in r_list {
            let vz = m.coherent_vector(Complex64::new(r, 0.0))?;
            let res = problem.solve(&m.vector_state(&v0)?, &m.vector_state(&vz)?, tol)?;
            let (bound, _) = m.an_lower_bounds(&e, &vz, &v0);
            let residual = (res.value() - r).abs();
            rows.push([format!("r={r},N={big_n}"), num(res.lower), num(res.upper), num(r), num(residual)]);
            let mut j = distance_json(&res);
            j["r"] = json!(r);
            j["N"] = json!(big_n);
            j["formula"] = json!(r);
            j["residual"] = json!(residual);
            j["an_lower_bound"] = json!(bound);
            entries.push(j);
            results.push(res);
        }
    }
    let budget = any_budget(&results.iter().collect::<Vec<_>>());
    let body = json!({ "theta": theta, "rows": entries });
    Ok(Outcome::ok(envelope("experiment coherent", body)).with_table(sweep_table(rows)).failing_if(budget, 3))
}

fn gh_sweep(thetas: &[f64], points: usize) -> Result<Outcome, Failure> {
    let reports = thetas.iter().map(|&t| moyal::gh_experiment(t, points)).collect::<Result<Vec<_>, _>>()?;
    let rows = reports
        .iter()
        .map(|r| [num(r.theta), num(r.hausdorff_distance), num(r.hausdorff_distance), num(r.formula), num(r.residual)])
        .collect();
    let decreasing = reports.windows(2).all(|w| w[1].hausdorff_distance < w[0].hausdorff_distance);
    let body = json!({ "rows": reports, "strictly_decreasing": decreasing });
    Ok(Outcome::ok(envelope("experiment gh", body)).with_table(sweep_table(rows)))
}

fn zeta(theta: f64, big_n: usize) -> Result<Outcome, Failure> {
    let m = moyal::truncation(big_n, theta)?;
    let z = moyal::zeta_estimates(&m)?;
    let rows = vec![
        [
            "volume".into(),
            num(z.volume_estimate - z.volume_error),
            num(z.volume_estimate + z.volume_error),
            num(z.volume_expected),
            num((z.volume_estimate - z.volume_expected).abs()),
        ],
        [
            "dimension".into(),
            num(z.dimension_estimate - z.dimension_error),
            num(z.dimension_estimate + z.dimension_error),
            num(2.0),
            num((z.dimension_estimate - 2.0).abs()),
        ],
    ];
    let body = serde_json::to_value(&z).map_err(|e| Failure::parse(e.to_string()))?;
    Ok(Outcome::ok(envelope("experiment zeta", body)).with_table(sweep_table(rows)))
}

/// Gauge-category checks: the two-point morphisms, initiality of random
/// objects over `M_n`, and the no-final-object witness.
fn category(seed: u64, count: usize) -> Result<Outcome, Failure> {
    let mut rep = ValidationReport::new();
    let m2 = GaugeCategory::new(full_matrix_algebra(2)?);
    let sx = matrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let zero = matrix::zeros(2, 2);
    match m2.mor(&sx, &zero)? {
        Some(f) => rep.push_tol("mor(D,0) has omega = -D", matrix::hs_norm(&(&f.omega + &sx)), 1e-12),
        None => rep.push("mor(D,0) has omega = -D", false, f64::INFINITY),
    }
    rep.push("mor(0,D) is empty", m2.mor(&zero, &sx)?.is_none(), 0.0);
    let mut rng = random::rng(seed);
    for n in 1..=4 {
        let cat = GaugeCategory::new(full_matrix_algebra(n)?);
        let mut initial = 0;
        let mut tried = 0;
        for _ in 0..count {
            let d = random::hermitian(n, &mut rng);
            // Non-trivial objects: D not a multiple of the identity.
            let scalar = matrix::trace(&d) / Complex64::new(n as f64, 0.0);
            if matrix::hs_norm(&(&d - matrix::identity(n) * scalar)) < 1e-9 {
                continue;
            }
            tried += 1;
            if cat.is_initial(&d)? {
                initial += 1;
            }
        }
        rep.push(&format!("n={n}: {initial}/{tried} random objects initial"), initial == tried, (tried - initial) as f64);
        let ok = cat.no_final_object_witness().is_ok();
        rep.push(&format!("n={n}: no final object witness"), ok, 0.0);
    }
    let pass = rep.all_pass();
    let out = Outcome::ok(envelope("experiment category", json!({ "pass": pass, "seed": seed, "checks": rep })));
    Ok(out.with_table(report_table(&rep)).failing_if(!pass, 2))
}

fn render(outcome: &Outcome, format: Format) -> Result<String, Failure> {
    match format {
        Format::Json => serde_json::to_string_pretty(&outcome.report).map_err(|e| Failure::parse(e.to_string())),
        Format::Csv => {
            let (header, rows) = match &outcome.table {
                Some(t) => t.clone(),
                None => flat_table(&outcome.report),
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).map_err(|e| Failure::parse(e.to_string()))?;
            for r in rows {
                w.write_record(&r).map_err(|e| Failure::parse(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Failure::parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Failure::parse(e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (format, output) = (cli.global.format, cli.global.output.clone());
    let result = run(cli).and_then(|o| render(&o, format).map(|text| (o.code, text)));
    match result {
        Ok((code, text)) => {
            let written = match &output {
                Some(path) => fs::write(path, text.as_bytes() as &[u8]).map_err(|e| e.to_string()),
                None => {
                    println!("{}", text.trim_end());
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("cannot write report: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}
