//! Command-line front end.
//!
//! Every command produces an [`Artifact`]: a flat list of named measures and
//! optionally a probability grid. CSV output writes measures as
//! `name,value,ci_halfwidth` and grids as `k,l,prob`; JSON carries both in one
//! object. Floats are printed in shortest round-trip form in both, so the two
//! formats hold the same numbers.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::compensation::{self, CompensationConfig};
use crate::error::Error;
use crate::grid::ProbabilityGrid;
use crate::measures::{self, MeasureReport};
use crate::model::{self, ModelParams};
use crate::oracle;
use crate::psa::{self, PsaConfig, PsaSolution};
use crate::simulator::{self, SimConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_VAR: &str = "JSRQ_OUT_DIR";

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_STABILITY: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "jsrq",
    version,
    about = "Equilibrium analysis of a two-relay random-access network with join-the-shortest-queue routing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, stability margin and verdict.
    Stability,
    /// Equilibrium distribution and measures by one method.
    Solve,
    /// Compensation, power series and truncated chain side by side.
    Compare,
    /// Sojourn time and correlation over the standard load grid at a = 1/2.
    Table1,
    /// Geometric decay ratios near the truncation edge.
    Decay,
    /// Two relays against a single relay over a grid of transmission probabilities.
    VsSingleServer {
        /// Number of equally spaced values of a in (0, 1).
        #[arg(long, default_value_t = 19)]
        points: usize,
    },
    /// Monte Carlo estimates with confidence intervals.
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ca,
    Psa,
    Oracle,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Arrival probability per slot.
    #[arg(long, global = true, conflicts_with = "rho")]
    pub lambda: Option<f64>,
    /// Load; converted to lambda given a.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    /// Transmission probability of a busy relay.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, global = true, value_enum, default_value_t = Method::Ca)]
    pub method: Method,
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub epsilon: f64,
    /// Acceleration parameter of the power series.
    #[arg(long = "G", global = true, default_value_t = 1.0)]
    pub g: f64,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 10_000)]
    pub warmup: u64,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub slots: u64,
    #[arg(long, global = true, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file. Without it, output goes to `$JSRQ_OUT_DIR/<command>.<ext>`
    /// if that variable is set, and to stdout otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure {
    pub name: String,
    pub value: f64,
    pub ci_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Artifact {
    pub command: String,
    pub measures: Vec<Measure>,
    pub grid: Option<Vec<GridRow>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub k: usize,
    pub l: usize,
    pub prob: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Model(e) if e.is_usage() => EXIT_USAGE,
            CliError::Model(e) if e.is_stability() => EXIT_STABILITY,
            CliError::Model(_) => EXIT_NUMERICAL,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl Artifact {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Self::default()
        }
    }

    fn push(&mut self, name: impl Into<String>, value: f64) {
        self.measures.push(Measure {
            name: name.into(),
            value,
            ci_halfwidth: None,
        });
    }

    fn push_ci(&mut self, name: impl Into<String>, value: f64, ci: f64) {
        self.measures.push(Measure {
            name: name.into(),
            value,
            ci_halfwidth: Some(ci),
        });
    }

    fn push_report(&mut self, prefix: &str, r: &MeasureReport) {
        self.push(format!("{prefix}mean_total"), r.mean_total);
        self.push(format!("{prefix}E_S"), r.sojourn);
        if let Some(c) = r.correlation {
            self.push(format!("{prefix}R"), c);
        }
        // Ratios of underflowed tails come out NaN; leave them out.
        if let Some(d) = r.decay_ratio.filter(|d| d.is_finite()) {
            self.push(format!("{prefix}decay_ratio"), d);
        }
        if let Some(d) = r.marginal_min_decay.filter(|d| d.is_finite()) {
            self.push(format!("{prefix}marginal_min_decay"), d);
        }
    }

    fn set_grid(&mut self, grid: &ProbabilityGrid) {
        self.grid = Some(
            grid.iter()
                .map(|(k, l, prob)| GridRow { k, l, prob })
                .collect(),
        );
    }

    pub fn measure(&self, name: &str) -> Option<f64> {
        self.measures.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn measures_csv(&self) -> String {
        let mut s = String::from("name,value,ci_halfwidth\n");
        for m in &self.measures {
            let ci = m.ci_halfwidth.map(|c| format!("{c:?}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:?},{}", m.name, m.value, ci);
        }
        s
    }

    pub fn grid_csv(&self) -> Option<String> {
        let grid = self.grid.as_ref()?;
        let mut s = String::from("k,l,prob\n");
        for r in grid {
            let _ = writeln!(s, "{},{},{:?}", r.k, r.l, r.prob);
        }
        Some(s)
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }
}

impl Common {
    pub fn params(&self) -> CliResult<ModelParams> {
        let p = match (self.lambda, self.rho) {
            (Some(l), None) => ModelParams::new(l, self.a)?,
            (None, Some(r)) => ModelParams::from_rho(r, self.a)?,
            (None, None) => return Err(CliError::Usage("give one of --lambda or --rho".into())),
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("--lambda and --rho are exclusive".into()))
            }
        };
        Ok(p)
    }

    fn check_epsilon(&self) -> CliResult<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Usage(format!(
                "--epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    fn ca_config(&self) -> CompensationConfig {
        CompensationConfig::with_epsilon(self.epsilon)
    }

    fn psa_config(&self) -> PsaConfig {
        PsaConfig {
            g: self.g,
            epsilon: self.epsilon,
            ..PsaConfig::default()
        }
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            warmup_slots: self.warmup,
            measure_slots: self.slots,
            replications: self.reps,
            ..SimConfig::default()
        }
    }
}

fn require_stable(p: &ModelParams) -> CliResult<()> {
    if model::is_stable(p).stable {
        Ok(())
    } else {
        Err(Error::Unstable {
            lambda: p.lambda(),
            a: p.a(),
            rho: p.rho(),
        }
        .into())
    }
}

fn require_half(p: &ModelParams) -> CliResult<()> {
    if p.a() != 0.5 {
        return Err(CliError::Usage(format!(
            "method psa needs --a 0.5, got {}",
            p.a()
        )));
    }
    Ok(())
}

/// PSA result that may have diverged; the iterate is kept either way.
fn psa_outcome(p: &ModelParams, c: &PsaConfig) -> CliResult<(PsaSolution, bool)> {
    match psa::solve(p, c) {
        Ok(s) => Ok((s, false)),
        Err(Error::Diverged { last, .. }) => Ok((*last, true)),
        Err(e) => Err(e.into()),
    }
}

fn params_measures(art: &mut Artifact, p: &ModelParams) {
    art.push("lambda", p.lambda());
    art.push("a", p.a());
    art.push("rho", p.rho());
}

fn stability(c: &Common) -> CliResult<Artifact> {
    let p = c.params()?;
    let s = model::is_stable(&p);
    let mut art = Artifact::new("stability");
    params_measures(&mut art, &p);
    art.push("load", model::load(&p));
    art.push("margin", s.margin);
    art.push("stable", if s.stable { 1.0 } else { 0.0 });
    Ok(art)
}

fn solve(c: &Common) -> CliResult<Artifact> {
    let p = c.params()?;
    c.check_epsilon()?;
    if c.method == Method::Psa {
        require_half(&p)?;
    }
    require_stable(&p)?;
    let mut art = Artifact::new("solve");
    params_measures(&mut art, &p);
    match c.method {
        Method::Ca => {
            let s = compensation::solve(&p, &c.ca_config())?;
            art.push("truncation", s.truncation as f64);
            art.push("iterations", s.iterations as f64);
            art.push_report("", &measures::moments_from_transformed(&s.grid, &p)?);
            art.set_grid(&s.grid);
        }
        Method::Psa => {
            let s = psa::solve(&p, &c.psa_config())?;
            art.push("truncation", s.truncation as f64);
            art.push("iterations", s.iterations as f64);
            art.push("precision_limited", if s.precision_limited { 1.0 } else { 0.0 });
            art.push_report("", &measures::moments_from_transformed(&s.grid, &p)?);
            art.set_grid(&s.grid);
        }
        Method::Oracle => {
            let g = oracle::solve(&p, c.epsilon)?;
            art.push("truncation", g.truncation() as f64);
            art.push_report("", &measures::moments_from_transformed(&g, &p)?);
            art.set_grid(&g);
        }
        Method::Sim => {
            let r = simulator::simulate(&p, &c.sim_config())?;
            art.push_ci("mean_total", r.mean_total.mean, r.mean_total.half_width);
            art.push_ci("E_S", r.sojourn.mean, r.sojourn.half_width);
            if let Some(e) = r.correlation {
                art.push_ci("R", e.mean, e.half_width);
            }
            art.push("overflow", r.overflow);
            art.set_grid(&r.pi.to_transformed());
        }
    }
    Ok(art)
}

fn compare(c: &Common) -> CliResult<Artifact> {
    let p = c.params()?;
    c.check_epsilon()?;
    require_stable(&p)?;
    let with_psa = p.a() == 0.5;
    if !with_psa {
        eprintln!("note: a = {} so the power series is skipped", p.a());
    }
    let (ca, (orc, ps)) = std::thread::scope(|s| {
        let ca = s.spawn(|| compensation::solve(&p, &c.ca_config()));
        let orc = s.spawn(|| oracle::solve(&p, c.epsilon.max(1e-13)));
        let ps = with_psa.then(|| psa_outcome(&p, &c.psa_config()));
        (
            ca.join().expect("compensation thread"),
            (orc.join().expect("oracle thread"), ps),
        )
    });
    let ca = ca?;
    let orc = orc?;
    let mut art = Artifact::new("compare");
    params_measures(&mut art, &p);
    let ca_m = measures::moments_from_transformed(&ca.grid, &p)?;
    let orc_m = measures::moments_from_transformed(&orc, &p)?;
    art.push("max_norm_ca_oracle", ca.grid.max_abs_diff(&orc));
    art.push_report("ca.", &ca_m);
    art.push_report("oracle.", &orc_m);
    if let Some(ps) = ps {
        let (ps, diverged) = ps?;
        let ps_m = measures::moments_from_transformed(&ps.grid, &p)?;
        art.push("psa.diverged", if diverged { 1.0 } else { 0.0 });
        art.push("max_norm_psa_oracle", ps.grid.max_abs_diff(&orc));
        art.push("max_norm_ca_psa", ca.grid.max_abs_diff(&ps.grid));
        art.push("delta_E_S_ca_psa", (ca_m.sojourn - ps_m.sojourn).abs());
        if let (Some(x), Some(y)) = (ca_m.correlation, ps_m.correlation) {
            art.push("delta_R_ca_psa", (x - y).abs());
        }
        art.push_report("psa.", &ps_m);
    }
    Ok(art)
}

/// Loads of the standard table.
pub const TABLE1_RHOS: [f64; 5] = [0.1, 0.4, 0.7, 0.9, 0.95];

fn table1(c: &Common) -> CliResult<Artifact> {
    c.check_epsilon()?;
    let mut art = Artifact::new("table1");
    for rho in TABLE1_RHOS {
        let p = ModelParams::from_rho(rho, 0.5)?;
        let ca = compensation::solve(&p, &c.ca_config())?;
        let ca_m = measures::moments_from_transformed(&ca.grid, &p)?;
        let (ps, diverged) = psa_outcome(&p, &c.psa_config())?;
        let tag = format!("rho={rho}/");
        art.push(format!("{tag}ca/E_S"), ca_m.sojourn);
        if let Some(r) = ca_m.correlation {
            art.push(format!("{tag}ca/R"), r);
        }
        art.push(format!("{tag}psa/diverged"), if diverged { 1.0 } else { 0.0 });
        // A diverged iterate can be too broken to have moments at all.
        let ps_m = match measures::moments_from_transformed(&ps.grid, &p) {
            Ok(m) if m.sojourn.is_finite() => m,
            Ok(_) | Err(_) if diverged => continue,
            Ok(m) => m,
            Err(e) => return Err(e.into()),
        };
        art.push(format!("{tag}psa/E_S"), ps_m.sojourn);
        if let Some(r) = ps_m.correlation {
            art.push(format!("{tag}psa/R"), r);
        }
        art.push(format!("{tag}abs_diff/E_S"), (ca_m.sojourn - ps_m.sojourn).abs());
    }
    Ok(art)
}

fn decay(c: &Common) -> CliResult<Artifact> {
    let p = c.params()?;
    c.check_epsilon()?;
    require_stable(&p)?;
    let config = CompensationConfig {
        min_truncation: 40,
        ..c.ca_config()
    };
    let s = compensation::solve(&p, &config)?;
    let d = measures::decay_diagnostics(&s.grid, &p)?;
    let mut art = Artifact::new("decay");
    params_measures(&mut art, &p);
    art.push("target", d.target);
    art.push("edge", d.edge as f64);
    for l in 0..=3 {
        art.push(format!("fixed_l{l}"), d.fixed_l_at_edge(l));
    }
    art.push("marginal_min", d.marginal_at_edge());
    Ok(art)
}

fn vs_single_server(c: &Common, points: usize) -> CliResult<Artifact> {
    let lambda = match (c.lambda, c.rho) {
        (Some(l), None) => l,
        _ => return Err(CliError::Usage("vs-single-server takes --lambda".into())),
    };
    if points == 0 {
        return Err(CliError::Usage("--points must be positive".into()));
    }
    let grid: Vec<f64> = (1..=points)
        .map(|i| i as f64 / (points + 1) as f64)
        .collect();
    let cmp = measures::single_server_comparison(lambda, &grid)?;
    let mut art = Artifact::new("vs-single-server");
    art.push("lambda", lambda);
    art.push("a_minus", cmp.interval.0);
    art.push("a_plus", cmp.interval.1);
    for row in &cmp.rows {
        if let Some(v) = row.single_mean {
            art.push(format!("a={}/single", row.a), v);
        }
        if let Some(v) = row.jsrq_mean {
            art.push(format!("a={}/jsrq", row.a), v);
        }
    }
    Ok(art)
}

fn simulate(c: &Common) -> CliResult<Artifact> {
    let sim = Common {
        method: Method::Sim,
        ..c.clone()
    };
    let mut art = solve(&sim)?;
    art.command = "simulate".into();
    Ok(art)
}

pub fn run(cli: &Cli) -> CliResult<Artifact> {
    let c = &cli.common;
    match &cli.command {
        Command::Stability => stability(c),
        Command::Solve => solve(c),
        Command::Compare => compare(c),
        Command::Table1 => table1(c),
        Command::Decay => decay(c),
        Command::VsSingleServer { points } => vs_single_server(c, *points),
        Command::Simulate => simulate(c),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `out.csv` becomes `out.grid.csv`.
pub fn grid_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.grid.csv"))
}

/// Writes the artifact. In CSV mode a grid goes to a sibling `.grid.csv`
/// file, or after a blank line on stdout.
pub fn emit(art: &Artifact, common: &Common) -> CliResult<()> {
    let ext = match common.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let target = common.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_VAR).map(|d| PathBuf::from(d).join(format!("{}.{ext}", art.command)))
    });
    match (common.format, target) {
        (Format::Json, Some(path)) => write_file(&path, &art.json()),
        (Format::Csv, Some(path)) => {
            write_file(&path, &art.measures_csv())?;
            match art.grid_csv() {
                Some(g) => write_file(&grid_path(&path), &g),
                None => Ok(()),
            }
        }
        (format, None) => {
            let mut text = match format {
                Format::Json => art.json(),
                Format::Csv => art.measures_csv(),
            };
            if format == Format::Csv {
                if let Some(g) = art.grid_csv() {
                    text.push('\n');
                    text.push_str(&g);
                }
            }
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "stdout".into(),
                    source,
                })
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli).and_then(|art| emit(&art, &cli.common)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
