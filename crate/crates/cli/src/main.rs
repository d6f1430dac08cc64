//! `cim`: solve, simulate and verify the collective invitation contest.

mod config;

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cim_core::contest::{mn_baseline, population_dynamics, simulate_batch};
use cim_core::deviation::{verify_all, verify_best_response, VerifyOptions};
use cim_core::equilibrium::{solve_equilibrium, solve_equilibrium_typed};
use cim_core::graph::{derive_invitation_graph, load_edge_list};
use cim_core::tree::{build_order_tree, canonical_types};
use cim_core::{CimError, InvitationProfile, OrderTree, SocialGraph, SolveTrace, ThresholdProfile, VerifyMode};
use clap::{Args, Parser, Subcommand};

use config::{PartialConfig, RunConfig};

#[derive(Parser)]
#[command(name = "cim", version, about = "Collective invitation contest engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute equilibrium thresholds and the order tree.
    Solve(Flags),
    /// Simulate a batch of contests under the equilibrium.
    Simulate(Flags),
    /// Simulate the no-invitation baseline among the requester's neighbours.
    Baseline(Flags),
    /// Check that inviting every neighbour is a best response.
    Verify(Flags),
    /// Mean best quality as agents join, against the expected maximum.
    Dynamics(Flags),
}

#[derive(Args, Clone, Debug, Default)]
struct Flags {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Whitespace-separated edge list.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Requester node id (default: first node in the edge list).
    #[arg(long)]
    requester: Option<u64>,
    #[arg(long)]
    prize: Option<f64>,
    #[arg(long)]
    cost: Option<f64>,
    /// exp[:rate] or uniform[:l:u].
    #[arg(long)]
    dist: Option<String>,
    /// Tasks to simulate, or repetitions for `dynamics`.
    #[arg(long)]
    tasks: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Typed solver for `solve`/`simulate`; one agent per type for `verify`.
    #[arg(long)]
    typed: bool,
    /// Ability grid size for deviation checks.
    #[arg(long)]
    grid: Option<usize>,
    /// Largest degree whose invitation subsets are enumerated in full.
    #[arg(long)]
    degree_cap: Option<usize>,
    /// Baseline contest size (default: requester degree).
    #[arg(long)]
    degree: Option<usize>,
    /// Verify a single agent instead of the whole graph.
    #[arg(long)]
    agent: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Invitation profile JSON `{"node": [invited...]}`; default all-invite.
    #[arg(long)]
    profile: Option<PathBuf>,
}

impl Flags {
    fn resolve(self, command: &'static str) -> anyhow::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => PartialConfig::load(path)?,
            None => PartialConfig::default(),
        };
        let over = PartialConfig {
            graph: self.graph,
            requester: self.requester,
            prize: self.prize,
            cost: self.cost,
            dist: self.dist,
            tasks: self.tasks,
            seed: self.seed,
            typed: self.typed.then_some(true),
            grid: self.grid,
            degree_cap: self.degree_cap,
            degree: self.degree,
            agent: self.agent,
            threads: self.threads,
            out: self.out,
            profile: self.profile,
        };
        RunConfig::resolve(command, base.overlay(over))
    }
}

/// Files are only written once every one of them has been computed.
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, String)>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            dir: cfg.out.clone(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &'static str, body: String) {
        self.files.push((name, body));
    }

    fn json(&mut self, name: &'static str, cfg: &RunConfig, body: serde_json::Value) {
        let doc = serde_json::json!({ "meta": cfg.meta(), "data": body });
        self.add(name, serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n");
    }

    fn write(self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        for (name, body) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

struct Instance {
    graph: SocialGraph,
    tree: OrderTree,
}

fn load(cfg: &RunConfig) -> anyhow::Result<Instance> {
    let file = fs::File::open(&cfg.graph).with_context(|| format!("opening {}", cfg.graph.display()))?;
    let mut graph = load_edge_list(BufReader::new(file)).with_context(|| format!("loading {}", cfg.graph.display()))?;
    if let Some(r) = cfg.requester {
        graph = graph.with_requester(r).context("requester")?;
    }
    let profile = match &cfg.profile {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            InvitationProfile::from_json(&graph, &text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => InvitationProfile::all_invite(&graph),
    };
    let h = derive_invitation_graph(&graph, &profile);
    let tree = build_order_tree(&h)?;
    Ok(Instance { graph, tree })
}

fn solve(cfg: &RunConfig, tree: &OrderTree) -> anyhow::Result<(ThresholdProfile, SolveTrace)> {
    let params = cfg.params();
    let out = if cfg.typed {
        solve_equilibrium_typed(tree, &params, &cfg.dist)?
    } else {
        solve_equilibrium(tree, &params, &cfg.dist)?
    };
    Ok(out)
}

fn cmd_solve(cfg: &RunConfig) -> anyhow::Result<u8> {
    let inst = load(cfg)?;
    let (prof, trace) = solve(cfg, &inst.tree)?;
    let mut out = Outputs::new(cfg);
    let types = canonical_types(&inst.tree);
    out.add("thresholds.csv", prof.to_csv(&inst.tree, &types, &cfg.prelude()));
    out.json("order_tree.json", cfg, inst.tree.to_json());
    let mut dot = cfg.prelude().iter().map(|l| format!("// {l}\n")).collect::<String>();
    dot.push_str(&inst.tree.to_dot());
    out.add("order_tree.dot", dot);
    out.json("solve_trace.json", cfg, trace.to_json(&inst.tree));
    out.write()?;
    let unc = prof
        .unconditional()
        .map(|s| inst.tree.original_id(s).to_string())
        .unwrap_or_else(|| "none".into());
    println!(
        "solve: |U|={} agents, {} batches, {} root solves, thresholds in [{:.6}, {:.6}], unconditional {}",
        inst.tree.agent_count(),
        trace.batches.len(),
        trace.total_root_solves(),
        prof.min_threshold(),
        prof.max_threshold(),
        unc
    );
    Ok(0)
}

fn cmd_simulate(cfg: &RunConfig) -> anyhow::Result<u8> {
    let inst = load(cfg)?;
    let (prof, _) = solve(cfg, &inst.tree)?;
    let stats = simulate_batch(&inst.tree, &prof, &cfg.params(), &cfg.dist, cfg.tasks, cfg.seed);
    let mut out = Outputs::new(cfg);
    out.add("tasks.csv", stats.to_csv(&cfg.prelude()));
    out.json("summary.json", cfg, stats.summary_json());
    out.write()?;
    println!(
        "simulate: {} tasks on |U|={}, winners {:?}, no contributor {}, mean payout {:.6}",
        stats.n_tasks(),
        inst.tree.agent_count(),
        stats.winner_histogram,
        stats.no_contributor_count,
        stats.mean_payout
    );
    Ok(0)
}

fn cmd_baseline(cfg: &RunConfig) -> anyhow::Result<u8> {
    let d = match cfg.degree {
        Some(d) => d,
        None => {
            let inst = load(cfg)?;
            inst.graph.degree(inst.graph.requester())
        }
    };
    let stats = mn_baseline(d, &cfg.params(), &cfg.dist, cfg.tasks, cfg.seed)?;
    let mut out = Outputs::new(cfg);
    out.add("baseline_tasks.csv", stats.to_csv(&cfg.prelude()));
    let mut summary = stats.summary_json();
    summary["degree"] = d.into();
    out.json("baseline_summary.json", cfg, summary);
    out.write()?;
    println!(
        "baseline: d={d}, {} tasks, no contributor {}, median best {:?}",
        stats.n_tasks(),
        stats.no_contributor_count,
        stats.median_best(cfg.dist_lower())
    );
    Ok(0)
}

fn cmd_verify(cfg: &RunConfig) -> anyhow::Result<u8> {
    let inst = load(cfg)?;
    if cfg.profile.is_some() {
        anyhow::bail!("verify checks the all-invite profile; drop --profile");
    }
    let opts = VerifyOptions {
        grid: cfg.grid,
        degree_cap: cfg.degree_cap,
        seed: cfg.seed,
    };
    let params = cfg.params();
    let mut out = Outputs::new(cfg);
    let clean = if let Some(agent) = cfg.agent {
        let node = inst.graph.node(agent)?;
        let report = verify_best_response(node, &inst.graph, &params, &cfg.dist, &opts)?;
        println!(
            "verify: agent {agent}, {} deviation trees{}, {}",
            report.deviations.len() - 1,
            if report.partial { " (sampled)" } else { "" },
            if report.no_profitable_deviation { "no profitable deviation" } else { "PROFITABLE DEVIATION" }
        );
        let clean = report.no_profitable_deviation;
        out.json("verify.json", cfg, serde_json::to_value(&report)?);
        clean
    } else {
        let mode = if cfg.typed { VerifyMode::Typed } else { VerifyMode::Exhaustive };
        let summary = verify_all(&inst.graph, &params, &cfg.dist, mode, &opts)?;
        println!(
            "verify: {} of {} agents checked ({:?}), {} verified, {} violated, {} sampled",
            summary.agents_checked,
            summary.agents_total,
            summary.mode,
            summary.verified,
            summary.violated,
            summary.partial_agents
        );
        let clean = summary.all_verified();
        out.json("verify.json", cfg, serde_json::to_value(&summary)?);
        clean
    };
    out.write()?;
    Ok(if clean { 0 } else { 1 })
}

fn cmd_dynamics(cfg: &RunConfig) -> anyhow::Result<u8> {
    let inst = load(cfg)?;
    let (prof, _) = solve(cfg, &inst.tree)?;
    let curve = population_dynamics(&inst.tree, &prof, &cfg.dist, cfg.tasks, cfg.seed)?;
    let mut out = Outputs::new(cfg);
    out.add("dynamics.csv", curve.to_csv(&cfg.prelude()));
    out.json(
        "dynamics_summary.json",
        cfg,
        serde_json::json!({
            "agents": inst.tree.agent_count(),
            "endpoint": curve.endpoint(),
            "reference": curve.reference,
            "repetitions": curve.repetitions,
            "endpoints_below_reference": curve.endpoints_below_reference,
        }),
    );
    out.write()?;
    let share = if curve.repetitions == 0 {
        f64::NAN
    } else {
        curve.endpoints_below_reference as f64 / curve.repetitions as f64
    };
    println!(
        "dynamics: |U|={}, endpoint {:.6} vs reference {:.6}, {:.1}% of repetitions below reference",
        inst.tree.agent_count(),
        curve.endpoint(),
        curve.reference,
        100.0 * share
    );
    Ok(0)
}

impl RunConfig {
    fn dist_lower(&self) -> f64 {
        use cim_core::AbilityDistribution;
        self.dist.lower()
    }
}

/// 3 for broken internal invariants, 2 for everything the user can fix.
fn exit_code(err: &anyhow::Error) -> u8 {
    fn internal(e: &CimError) -> bool {
        match e {
            CimError::InternalConsistency(_) | CimError::Precondition(_) | CimError::NonConvergence { .. } => true,
            CimError::Deviation { source, .. } => internal(source),
            _ => false,
        }
    }
    let hit = err.chain().any(|c| c.downcast_ref::<CimError>().is_some_and(internal));
    if hit {
        3
    } else {
        2
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    let (name, flags, f): (_, _, fn(&RunConfig) -> anyhow::Result<u8>) = match command {
        Command::Solve(fl) => ("solve", fl, cmd_solve),
        Command::Simulate(fl) => ("simulate", fl, cmd_simulate),
        Command::Baseline(fl) => ("baseline", fl, cmd_baseline),
        Command::Verify(fl) => ("verify", fl, cmd_verify),
        Command::Dynamics(fl) => ("dynamics", fl, cmd_dynamics),
    };
    let cfg = flags.resolve(name)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    f(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn internal_errors_map_to_3() {
        let e = anyhow::Error::from(CimError::InternalConsistency("x".into())).context("outer");
        assert_eq!(exit_code(&e), 3);
        let nested = anyhow::Error::from(CimError::Deviation {
            fingerprint: "f".into(),
            source: Box::new(CimError::NonConvergence { rounds: 1, residual: 1.0 }),
        });
        assert_eq!(exit_code(&nested), 3);
        assert_eq!(exit_code(&anyhow::Error::from(CimError::EmptyInput)), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), 2);
    }
}
