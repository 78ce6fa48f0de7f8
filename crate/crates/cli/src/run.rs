//! Dispatching a config to the library and collecting the results.

use crate::config::{CommandName, ConfigError, RampSpec, RunConfig};
use crate::validate::validate;
use membrane_core::limits::{
    alpha_sweep, blowup_sweep, exterior_compact, exterior_convergence, minimal_large_solution, RampMode, EXTERIOR_MARGIN,
};
use membrane_core::spectral::{find_lambda_infinity, find_lambda_star, lambda_alpha, lambda_star_eigenpair, richardson, EigenResult};
use membrane_core::steady::{certificate, cold_solve, continuation, PointStatus};
use membrane_core::{Discretization, Execution, FieldPair};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt;
use std::time::Instant;

/// Ramp used by `large_solution` when the config gives none.
pub const DEFAULT_RAMP: [f64; 4] = [10.0, 100.0, 1000.0, 1e4];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(usize),
    Text(String),
    Bool(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug is the shortest round-tripping form and switches to exponents at the extremes
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Table {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    /// Header cell index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    /// Float column by name; non-float cells are skipped.
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let Some(c) = self.column(name) else { return Vec::new() };
        self.rows
            .iter()
            .filter_map(|r| match r[c] {
                Cell::Float(v) => Some(v),
                _ => None,
            })
            .collect()
    }
}

/// A requested item that did not succeed.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub item: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub config: RunConfig,
    pub hash: String,
    pub results: Value,
    pub tables: Vec<Table>,
    pub timings: Vec<(&'static str, f64)>,
    pub mesh_convergence: Value,
    pub failures: Vec<Failure>,
}

impl Envelope {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Value {
        let mut results = self.results.clone();
        if let Value::Object(map) = &mut results {
            map.insert(
                "failures".into(),
                self.failures.iter().map(|f| json!({"item": f.item, "error": f.error})).collect(),
            );
            map.insert("tables".into(), self.tables.iter().map(|t| t.name).collect());
        }
        json!({
            "config": self.config,
            "hash": self.hash,
            "results": results,
            "timings": self.timings.iter().map(|(k, v)| ((*k).to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
            "mesh_convergence": self.mesh_convergence,
        })
    }
}

/// Content hash of the canonical config echo, framed like a git blob.
pub fn config_hash(cfg: &RunConfig) -> String {
    let text = cfg.to_toml();
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

struct Run<'a> {
    cfg: &'a RunConfig,
    disc: &'a Discretization,
    tables: Vec<Table>,
    failures: Vec<Failure>,
}

impl Run<'_> {
    fn fail(&mut self, item: impl Into<String>, error: impl fmt::Display) {
        self.failures.push(Failure {
            item: item.into(),
            error: error.to_string(),
        });
    }

    fn tol(&self) -> f64 {
        self.cfg.solver.tol
    }

    /// Default sweep toward the ceiling: `λ∞ (1 - 0.1·2^-j)`, `j = 0..6`.
    fn lambda_list(&mut self) -> Option<Vec<f64>> {
        if let Some(l) = &self.cfg.command.lambda_list {
            return Some(l.clone());
        }
        match self.disc.existence_ceiling() {
            Ok(c) => Some((0..7).map(|j| c * (1.0 - 0.1 * 0.5f64.powi(j))).collect()),
            Err(e) => {
                self.fail("lambda_infinity", e);
                None
            }
        }
    }
}

fn field_table(name: &'static str, disc: &Discretization, u: &FieldPair) -> Table {
    let two_d = disc.mesh.dimension() == 2;
    let header: &[&str] = if two_d {
        &["subdomain", "x", "y", "value"]
    } else {
        &["subdomain", "x", "value"]
    };
    let mut t = Table::new(name, header);
    for (c, part) in disc.mesh.parts.iter().enumerate() {
        let values = if c == 0 { &u.u1 } else { &u.u2 };
        for (p, v) in part.nodes.iter().zip(values) {
            let mut row = vec![Cell::Int(c + 1), Cell::Float(p[0])];
            if two_d {
                row.push(Cell::Float(p[1]));
            }
            row.push(Cell::Float(*v));
            t.rows.push(row);
        }
    }
    t
}

fn eigen_json(e: &EigenResult) -> Value {
    json!({
        "eigenvalue": e.eigenvalue,
        "iterations": e.iterations,
        "residual": e.residual,
        "strictly_positive": e.positivity.strictly_positive(),
        "min_interior": e.positivity.min_interior,
        "zero_component": e.positivity.zero_component,
        "component_norms": e.component_norms,
    })
}

fn run_eigen(r: &mut Run) -> Value {
    let alpha = r.cfg.command.alpha;
    let out = match alpha {
        Some(a) => lambda_alpha(r.disc, a, r.tol()),
        None => lambda_star_eigenpair(r.disc, r.tol()),
    };
    match out {
        Ok(e) => {
            r.tables.push(field_table("eigenfunction", r.disc, &e.eigenfunction));
            json!({"alpha": alpha, "eigen": eigen_json(&e)})
        }
        Err(e) => {
            r.fail("eigen", e);
            json!({"alpha": alpha})
        }
    }
}

fn run_lambda_star(r: &mut Run) -> Value {
    let spec = r.disc.spec.clone();
    let n = r.cfg.mesh.n_per_side;
    let coarse = Discretization::with_mass(&spec, n / 2, r.cfg.ny() / 2, r.cfg.mass_kind())
        .and_then(|d| find_lambda_star(&d, r.tol()));
    match (find_lambda_star(r.disc, r.tol()), coarse) {
        (Ok(fine), Ok(coarse)) => {
            let rich = richardson(coarse, fine);
            json!({
                "lambda_star": fine,
                "lambda_star_coarse": coarse,
                "richardson": rich,
                "richardson_error": (fine - rich).abs(),
            })
        }
        (Err(e), _) | (_, Err(e)) => {
            r.fail("lambda_star", e);
            json!({})
        }
    }
}

fn run_lambda_infinity(r: &mut Run) -> Value {
    match (find_lambda_infinity(r.disc, r.tol()), r.disc.existence_ceiling()) {
        (Ok(li), Ok(ceiling)) => json!({
            "lambda_infinity": li.lambda_inf,
            "per_refuge": li.per_refuge,
            "case": format!("{:?}", li.case),
            "existence_ceiling": ceiling,
        }),
        (Err(e), _) | (_, Err(e)) => {
            r.fail("lambda_infinity", e);
            json!({})
        }
    }
}

fn run_solve(r: &mut Run) -> Value {
    let lambda = r.cfg.command.lambda.expect("validated");
    let point = match cold_solve(r.disc, lambda, r.tol()) {
        Ok(p) => p,
        Err(e) => {
            r.fail(format!("solve lambda={lambda}"), e);
            return json!({"lambda": lambda});
        }
    };
    r.tables.push(field_table("solution", r.disc, &point.solution));
    let cert = match certificate(r.disc, lambda, &point.solution) {
        Ok(c) => json!({"sigma_frozen": c.sigma_frozen, "sigma_linearized": c.sigma_linearized}),
        Err(e) => {
            r.fail("certificate", e);
            Value::Null
        }
    };
    json!({
        "lambda": lambda,
        "sup_norm": point.sup_norm,
        "mass_norm": point.mass_norm,
        "newton_iters": point.newton_iters,
        "residual": point.residual,
        "certificate": cert,
    })
}

fn run_branch(r: &mut Run) -> Value {
    let grid = r.cfg.command.lambda_grid.clone().expect("validated");
    let diagram = match continuation(r.disc, &grid, r.tol()) {
        Ok(d) => d,
        Err(e) => {
            r.fail("branch", e);
            return json!({});
        }
    };
    let mut t = Table::new("branch", &["lambda", "sup_norm", "mass_norm", "newton_iters", "residual"]);
    let mut statuses = Vec::new();
    for entry in &diagram.entries {
        let status = match entry {
            PointStatus::Solved(b) | PointStatus::Trivial(b) => {
                t.rows.push(vec![
                    Cell::Float(b.lambda),
                    Cell::Float(b.sup_norm),
                    Cell::Float(b.mass_norm),
                    Cell::Int(b.newton_iters),
                    Cell::Float(b.residual),
                ]);
                if matches!(entry, PointStatus::Solved(_)) {
                    "solved"
                } else {
                    "trivial"
                }
            }
            PointStatus::Skipped { .. } => "skipped",
            PointStatus::Failed { lambda, error } => {
                r.fail(format!("branch lambda={lambda}"), error);
                "failed"
            }
        };
        statuses.push(json!({"lambda": entry.lambda(), "status": status}));
    }
    r.tables.push(t);
    json!({
        "lambda_star": diagram.lambda_star,
        "lambda_infinity": diagram.lambda_infinity,
        "monotone": diagram.is_monotone(),
        "points": statuses,
    })
}

fn run_alpha_sweep(r: &mut Run) -> Value {
    let alphas = r.cfg.command.alpha_list.clone().expect("validated");
    let records = match alpha_sweep(r.disc, &alphas, r.tol(), Execution::default()) {
        Ok(v) => v,
        Err(e) => {
            r.fail("alpha_sweep", e);
            return json!({});
        }
    };
    let mut t = Table::new(
        "alpha_sweep",
        &["alpha", "lambda_alpha", "slack_hnorm", "slack_interface", "slack_potential", "refuge_mass_fraction"],
    );
    for rec in &records {
        t.rows.push(vec![
            Cell::Float(rec.alpha),
            Cell::Float(rec.lambda_alpha),
            Cell::Float(rec.slacks[0]),
            Cell::Float(rec.slacks[1]),
            Cell::Float(rec.slacks[2]),
            Cell::Float(rec.refuge_mass_fraction),
        ]);
    }
    r.tables.push(t);
    let li = r.disc.lambda_infinity().map(|l| l.lambda_inf).ok();
    json!({
        "lambda_infinity": li,
        "component_refuge_fraction": records.iter().map(|x| x.component_refuge_fraction).collect::<Vec<_>>(),
        "component_norms": records.iter().map(|x| x.component_norms).collect::<Vec<_>>(),
    })
}

fn run_blowup(r: &mut Run) -> Value {
    let Some(lambdas) = r.lambda_list() else { return json!({}) };
    let entries = match blowup_sweep(r.disc, &lambdas, r.tol()) {
        Ok(v) => v,
        Err(e) => {
            r.fail("blowup", e);
            return json!({});
        }
    };
    let mut t = Table::new("blowup", &["lambda", "max_on_k1", "max_on_k2", "sup_norm"]);
    for entry in entries {
        match entry.outcome {
            Ok(rec) => t.rows.push(vec![
                Cell::Float(rec.lambda),
                Cell::Float(rec.max_on_k[0]),
                Cell::Float(rec.max_on_k[1]),
                Cell::Float(rec.sup_norm),
            ]),
            Err(e) => r.fail(format!("blowup lambda={}", entry.lambda), e),
        }
    }
    r.tables.push(t);
    let li = r.disc.lambda_infinity().ok();
    json!({
        "lambda_infinity": li.map(|l| l.lambda_inf),
        "case": li.map(|l| format!("{:?}", l.case)),
        "lambdas": lambdas,
    })
}

fn ramp_mode(spec: Option<RampSpec>) -> RampMode {
    match spec.unwrap_or(RampSpec::All) {
        RampSpec::All => RampMode::AllRefuges,
        RampSpec::Winners => RampMode::WinnersOnly,
        RampSpec::WinnersLoserFree => RampMode::WinnersOnlyLoserFree,
    }
}

fn run_large_solution(r: &mut Run) -> Value {
    let cmd = &r.cfg.command;
    let ramp = cmd.ramp.clone().unwrap_or_else(|| DEFAULT_RAMP.to_vec());
    let mode = ramp_mode(cmd.ramp_mode);
    let stagnation = cmd.stagnation_tol;
    let Some(lambdas) = r.lambda_list() else { return json!({}) };
    let ceiling = match r.disc.existence_ceiling() {
        Ok(c) => c,
        Err(e) => {
            r.fail("lambda_infinity", e);
            return json!({});
        }
    };
    let compact = exterior_compact(r.disc, EXTERIOR_MARGIN);
    let large = match minimal_large_solution(r.disc, ceiling, &ramp, mode, &compact, r.tol(), f64::INFINITY) {
        Ok(l) => l,
        Err(e) => {
            r.fail("large_solution", e);
            return json!({"ramp": ramp});
        }
    };
    let mut t = Table::new("large_solution", &["ramp", "diff_on_compact", "newton_iters"]);
    for (j, m) in ramp.iter().enumerate() {
        let diff = if j == 0 { f64::NAN } else { large.differences[j - 1] };
        t.rows.push(vec![Cell::Float(*m), Cell::Float(diff), Cell::Int(large.newton_iters[j])]);
    }
    r.tables.push(t);
    let last = large.differences.last().copied();
    if let (Some(tol), Some(d)) = (stagnation, last) {
        if d > tol {
            r.fail("large_solution stagnation", membrane_core::Error::NotStagnating { difference: d, tolerance: tol });
        }
    }
    let mut ext = Table::new("exterior", &["lambda", "sup_difference"]);
    match exterior_convergence(r.disc, &lambdas, &large, r.tol()) {
        Ok(v) => {
            for (l, d) in v {
                ext.rows.push(vec![Cell::Float(l), Cell::Float(d)]);
            }
        }
        Err(e) => r.fail("exterior_convergence", e),
    }
    r.tables.push(ext);
    json!({
        "lambda": ceiling,
        "mode": format!("{mode:?}"),
        "ramp": ramp,
        "monotone": large.is_monotone(1e-9),
        "compact_nodes": compact.len(),
        "last_difference": last,
        "stagnation_tol": stagnation,
    })
}

fn run_validate(r: &mut Run) -> Value {
    let rows = validate(
        &r.disc.spec,
        r.disc.mesh.dimension() == 2,
        r.cfg.mass_kind(),
        r.tol(),
        r.cfg.solver.max_iters,
        Execution::default(),
    );
    let mut t = Table::new("validate", &["invariant", "module", "n", "passed", "value", "threshold"]);
    for row in &rows {
        if !row.passed {
            let why = match &row.note {
                Some(note) => note.clone(),
                None => format!("value {:e}, threshold {:e}", row.value, row.threshold),
            };
            r.fail(format!("validate {} n={}", row.invariant, row.n), why);
        }
        t.rows.push(vec![
            Cell::Text(row.invariant.to_string()),
            Cell::Text(row.module.to_string()),
            Cell::Int(row.n),
            Cell::Bool(row.passed),
            Cell::Float(row.value),
            Cell::Float(row.threshold),
        ]);
    }
    r.tables.push(t);
    json!({
        "rows": rows.len(),
        "passed": rows.iter().filter(|x| x.passed).count(),
    })
}

/// λ* (and λ∞ with refuges) at `n/2` and `n` with their Richardson estimates.
fn mesh_convergence(cfg: &RunConfig, fine: &Discretization) -> Value {
    let n = cfg.mesh.n_per_side;
    let coarse = match Discretization::with_mass(&fine.spec, n / 2, cfg.ny() / 2, cfg.mass_kind()) {
        Ok(d) => d,
        Err(e) => return json!({"error": e.to_string()}),
    };
    let block = |c: membrane_core::Result<f64>, f: membrane_core::Result<f64>| match (c, f) {
        (Ok(c), Ok(f)) => json!({"coarse": c, "fine": f, "richardson": richardson(c, f)}),
        (Err(e), _) | (_, Err(e)) => json!({"error": e.to_string()}),
    };
    let mut out = json!({
        "n_coarse": n / 2,
        "n_fine": n,
        "lambda_star": block(coarse.lambda_star(), fine.lambda_star()),
    });
    if fine.mesh.is_degenerate() {
        out["lambda_infinity"] = block(
            coarse.lambda_infinity().map(|l| l.lambda_inf),
            fine.lambda_infinity().map(|l| l.lambda_inf),
        );
    }
    out
}

/// Validates the config, runs its command and collects every table.
/// Library failures are recorded per item; only config problems are errors.
pub fn run(cfg: &RunConfig) -> Result<Envelope, ConfigError> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = cfg.spec()?;
    let disc = Discretization::with_mass(&spec, cfg.mesh.n_per_side, cfg.ny(), cfg.mass_kind())?;
    let assembled = started.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut r = Run {
        cfg,
        disc: &disc,
        tables: Vec::new(),
        failures: Vec::new(),
    };
    let results = match cfg.command.name {
        CommandName::Eigen => run_eigen(&mut r),
        CommandName::LambdaStar => run_lambda_star(&mut r),
        CommandName::LambdaInfinity => run_lambda_infinity(&mut r),
        CommandName::Solve => run_solve(&mut r),
        CommandName::Branch => run_branch(&mut r),
        CommandName::AlphaSweep => run_alpha_sweep(&mut r),
        CommandName::Blowup => run_blowup(&mut r),
        CommandName::LargeSolution => run_large_solution(&mut r),
        CommandName::Validate => run_validate(&mut r),
    };
    let command = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mesh_convergence = mesh_convergence(cfg, &disc);
    let convergence = t1.elapsed().as_secs_f64();

    let Run { tables, failures, .. } = r;
    Ok(Envelope {
        config: cfg.clone(),
        hash: config_hash(cfg),
        results,
        tables,
        timings: vec![
            ("assembly_s", assembled),
            ("command_s", command),
            ("mesh_convergence_s", convergence),
            ("total_s", started.elapsed().as_secs_f64()),
        ],
        mesh_convergence,
        failures,
    })
}
