mod config;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::{ConfigFile, Settings};
use sharedbook::checks::{run_checks, Check, CheckSettings};
use sharedbook::figures::{
    quote_profiles, sweep_common_gamma, sweep_gamma0, sweep_quotes, sweep_values, value_profiles, Figure, RegimeSet,
    ValueScale,
};
use sharedbook::pde::{exchange_value, solve, write_csv};
use sharedbook::sim::{certainty_equivalent, exchange_utility, mm_utility, simulate, McEstimate, PathRecord, SimConfig};
use sharedbook::{InventoryPair, Regime, Side, SolveConfig, SolveResult};

/// Two exchanges sharing a limit order book: equilibrium quotes, incentive
/// contracts and their Monte Carlo validation.
#[derive(Debug, Parser)]
#[command(name = "sharedbook", version)]
struct Cli {
    /// Flat `key = value` configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Incentive regime: none, one or both.
    #[arg(long, global = true)]
    regime: Option<Regime>,
    /// Solver time step (days).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulation time step (days).
    #[arg(long = "sim-dt", global = true)]
    sim_dt: Option<f64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Figure to produce (repeatable); all figures when omitted.
    #[arg(long, global = true, value_enum)]
    figure: Vec<FigureId>,
    /// Report certainty equivalents instead of utilities.
    #[arg(long, global = true)]
    ce: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the backward equations and export the solution grid.
    Solve {
        /// Solve every regime instead of the selected one.
        #[arg(long)]
        all: bool,
    },
    /// Simulate the market under a regime and compare with the solver.
    Simulate,
    /// Write figure data (CSV) and charts (SVG).
    Figures,
    /// Run the consistency checks; exits non-zero if any fails.
    Check {
        /// Restrict to these checks (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Random draws for the fixed-point check.
        #[arg(long)]
        draws: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureId {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig2d,
    Fig3a,
    Fig3b,
    Fig4a,
    Fig4b,
}

impl FigureId {
    const ALL: [FigureId; 8] = [
        FigureId::Fig2a,
        FigureId::Fig2b,
        FigureId::Fig2c,
        FigureId::Fig2d,
        FigureId::Fig3a,
        FigureId::Fig3b,
        FigureId::Fig4a,
        FigureId::Fig4b,
    ];

    fn needs_base(self) -> bool {
        matches!(
            self,
            FigureId::Fig2a | FigureId::Fig2b | FigureId::Fig2c | FigureId::Fig4a | FigureId::Fig4b
        )
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(r) = cli.regime {
        file.regime = Some(r.to_string());
    }
    file.dt = cli.dt.or(file.dt);
    file.sim_dt = cli.sim_dt.or(file.sim_dt);
    file.paths = cli.paths.or(file.paths);
    file.seed = cli.seed.or(file.seed);
    file.out = cli.out.clone().or(file.out);
    Settings::resolve(file)
}

/// Writes through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

fn warn_halvings(res: &SolveResult, requested: f64) {
    if res.halvings > 0 {
        eprintln!(
            "warning: {} regime: dt {requested:e} was halved {} time(s) to {:e} for stability",
            res.regime, res.halvings, res.dt
        );
    }
}

fn solve_logged(s: &Settings, regime: Regime) -> Result<SolveResult> {
    let res = solve(&s.params, regime, &SolveConfig::with_dt(s.dt))?;
    warn_halvings(&res, s.dt);
    Ok(res)
}

fn cmd_solve(s: &Settings, all: bool) -> Result<()> {
    fs::create_dir_all(&s.out)?;
    let regimes: Vec<Regime> = if all { Regime::ALL.to_vec() } else { vec![s.regime] };
    for regime in regimes {
        let res = solve_logged(s, regime)?;
        let mut buf = Vec::new();
        write_csv(&res, &mut buf)?;
        let path = s.out.join(format!("solution_{regime}.csv"));
        write_atomic(&path, &buf)?;
        let labels = regime.value_labels();
        println!(
            "{regime}: dt {:e}, {} steps, {}(0, q0) = {:.10}, {}(0, q0) = {:.10} -> {}",
            res.dt,
            res.steps(),
            labels[0],
            res.value(0, 0.0, s.q0),
            labels[1],
            res.value(1, 0.0, s.q0),
            path.display()
        );
    }
    Ok(())
}

fn paths_csv(records: &[PathRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["path", "seed", "q0", "q1", "price", "pl0", "pl1", "y0", "y1", "fees0", "fees1"]
        .map(String::from)
        .to_vec();
    for side in Side::ALL {
        for i in 0..2 {
            for j in 0..2 {
                header.push(format!("fills_{}_{i}_{j}", &side.name()[..1]));
            }
        }
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.index.to_string(),
            r.seed.to_string(),
            r.q.get(0).to_string(),
            r.q.get(1).to_string(),
            format!("{:.12e}", r.price),
        ];
        for v in [r.pl, r.y, r.fees] {
            row.extend(v.iter().map(|x| format!("{x:.12e}")));
        }
        row.extend(r.counts.iter().flatten().flatten().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

struct Comparison {
    label: String,
    estimate: McEstimate,
    target: f64,
    /// Risk aversion used for the certainty-equivalent scale.
    aversion: f64,
}

fn cmd_simulate(s: &Settings, ce: bool) -> Result<()> {
    fs::create_dir_all(&s.out)?;
    let res = solve_logged(s, s.regime)?;
    let p = &res.params;
    let cfg = SimConfig {
        sim_dt: s.sim_dt,
        paths: s.paths,
        seed: s.seed,
        q0: s.q0,
        ..SimConfig::default()
    };
    let records = simulate(&res, &cfg)?;
    let mut rows = Vec::new();
    for i in 0..2 {
        let contracted = s.regime.contracts(i);
        // A contracted maker is held at its reservation level, which is -1 once Y0 is factored out.
        let target = if contracted {
            -1.0
        } else {
            -(-p.gamma[i] * res.value(i, 0.0, s.q0)).exp()
        };
        rows.push(Comparison {
            label: format!("maker{i}"),
            estimate: mm_utility(p, &records, i, contracted)?,
            target,
            aversion: p.gamma[i],
        });
    }
    for m in 0..2 {
        rows.push(Comparison {
            label: format!("exchange{m}"),
            estimate: exchange_utility(p, s.regime, &records, m)?,
            target: exchange_value(&res, m)?.at(s.q0),
            aversion: p.eta[m],
        });
    }
    let mut summary = String::from("quantity,scale,mc,std_err,pde,z_score\n");
    println!("{} regime, {} paths, seed {}, sim_dt {:e}", s.regime, s.paths, s.seed, s.sim_dt);
    for c in &rows {
        let z = c.estimate.z_score(c.target);
        let (scale, mc, se, pde) = if ce {
            let e = certainty_equivalent(&c.estimate, c.aversion)?;
            ("ce", e.value, e.std_err, -(-c.target).ln() / c.aversion)
        } else {
            ("utility", c.estimate.mean, c.estimate.std_err, c.target)
        };
        println!(
            "  {:<10} MC {mc:.8} +- {se:.2e}   PDE {pde:.8}   ({z:.2} SE)",
            c.label
        );
        summary.push_str(&format!("{},{scale},{mc:.12e},{se:.6e},{pde:.12e},{z:.4}\n", c.label));
    }
    let regime = s.regime;
    write_atomic(&s.out.join(format!("simulate_{regime}_summary.csv")), summary.as_bytes())?;
    write_atomic(&s.out.join(format!("simulate_{regime}_paths.csv")), &paths_csv(&records)?)?;
    Ok(())
}

fn figure_files(out: &Path, fig: &Figure) -> Result<()> {
    let mut buf = Vec::new();
    fig.write_csv(&mut buf)?;
    write_atomic(&out.join(format!("{}.csv", fig.id)), &buf)?;
    write_atomic(&out.join(format!("{}.svg", fig.id)), svg::render(fig).as_bytes())?;
    for f in &fig.failures {
        eprintln!("warning: {}: {f}", fig.id);
    }
    println!("{}: {} series -> {}", fig.id, fig.series.len(), out.join(format!("{}.{{csv,svg}}", fig.id)).display());
    Ok(())
}

fn cmd_figures(s: &Settings, ids: &[FigureId], ce: bool) -> Result<()> {
    fs::create_dir_all(&s.out)?;
    let ids: Vec<FigureId> = if ids.is_empty() { FigureId::ALL.to_vec() } else { ids.to_vec() };
    let scale = if ce { ValueScale::CertaintyEquivalent } else { ValueScale::Utility };
    let cfg = SolveConfig::with_dt(s.dt);
    let origin = InventoryPair::new(0, 0);
    let mut figs: Vec<Figure> = Vec::new();
    if ids.iter().any(|f| f.needs_base()) {
        let set = RegimeSet::solve(&s.params, &cfg)?;
        for regime in Regime::ALL {
            warn_halvings(set.get(regime), s.dt);
        }
        figs.extend(value_profiles(&set, scale)?);
        figs.extend(quote_profiles(&set)?);
    }
    if ids.iter().any(|f| matches!(f, FigureId::Fig2d | FigureId::Fig3b)) {
        let sweep = sweep_common_gamma(&s.params, &s.gamma_sweep, &cfg);
        figs.push(sweep_values(&s.params, &sweep, origin, "common maker risk aversion", scale));
        figs.push(sweep_quotes(
            "fig3b",
            "Bid quotes against common maker risk aversion",
            &s.params,
            &sweep,
            origin,
            "common maker risk aversion",
        ));
    }
    if ids.contains(&FigureId::Fig3a) {
        let sweep = sweep_gamma0(&s.params, &s.gamma_sweep, &cfg);
        figs.push(sweep_quotes(
            "fig3a",
            "Bid quotes against maker 0 risk aversion",
            &s.params,
            &sweep,
            origin,
            "maker 0 risk aversion",
        ));
    }
    for id in ids {
        let name = id.to_possible_value().expect("no skipped variants").get_name().to_string();
        let fig = figs.iter().find(|f| f.id == name).context("figure was not built")?;
        figure_files(&s.out, fig)?;
    }
    Ok(())
}

fn cmd_check(s: &Settings, only: &[String], draws: Option<usize>) -> Result<bool> {
    let selected: Vec<Check> = if only.is_empty() {
        Check::ALL.to_vec()
    } else {
        only.iter().map(|n| n.parse()).collect::<sharedbook::Result<_>>()?
    };
    let defaults = CheckSettings::default();
    let cs = CheckSettings {
        dt: s.dt,
        sim_dt: s.sim_dt,
        paths: s.paths,
        seed: s.seed,
        draws: draws.unwrap_or(defaults.draws),
        gamma_sweep: s.gamma_sweep.clone(),
        ..defaults
    };
    let outcomes = run_checks(&s.params, &cs, &selected, |o| {
        println!("{} {} {}", o.check, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    })?;
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    if !cli.figure.is_empty() && !matches!(cli.command, Command::Figures) {
        bail!("--figure only applies to the figures command");
    }
    let s = settings(&cli)?;
    match &cli.command {
        Command::Solve { all } => cmd_solve(&s, *all)?,
        Command::Simulate => cmd_simulate(&s, cli.ce)?,
        Command::Figures => cmd_figures(&s, &cli.figure, cli.ce)?,
        Command::Check { only, draws } => return cmd_check(&s, only, *draws),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
