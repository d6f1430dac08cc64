//! Run configuration: an optional JSON file with flag overrides on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cim_core::{ContestParams, Distribution};
use serde::{Deserialize, Serialize};

/// Every field is optional so a config file may set any subset of them.
/// Paths in a config file are relative to the file's directory.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub graph: Option<PathBuf>,
    pub requester: Option<u64>,
    pub prize: Option<f64>,
    pub cost: Option<f64>,
    pub dist: Option<String>,
    pub tasks: Option<u64>,
    pub seed: Option<u64>,
    pub typed: Option<bool>,
    pub grid: Option<usize>,
    pub degree_cap: Option<usize>,
    pub degree: Option<usize>,
    pub agent: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub profile: Option<PathBuf>,
}

impl PartialConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.graph, &mut cfg.profile, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: PartialConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(graph, requester, prize, cost, dist, tasks, seed, typed, grid, degree_cap, degree, agent, threads, out, profile)
    }
}

/// Validated configuration, echoed into every output file.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub graph: PathBuf,
    /// `None` means the first node of the edge list.
    pub requester: Option<u64>,
    pub prize: f64,
    pub cost: f64,
    pub dist: Distribution,
    pub tasks: u64,
    pub seed: u64,
    pub typed: bool,
    pub grid: usize,
    pub degree_cap: usize,
    pub degree: Option<usize>,
    pub agent: Option<u64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub profile: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(command: &'static str, p: PartialConfig) -> anyhow::Result<Self> {
        let Some(graph) = p.graph else {
            bail!("no graph given (use --graph or a config file)");
        };
        let prize = p.prize.unwrap_or(1.0);
        let cost = p.cost.unwrap_or(0.1);
        ContestParams::new(prize, cost)?;
        let dist = parse_dist(p.dist.as_deref().unwrap_or("exp:1"))?;
        let grid = p.grid.unwrap_or(cim_core::deviation::DEFAULT_GRID);
        if grid == 0 {
            bail!("--grid must be positive");
        }
        if p.threads == Some(0) {
            bail!("--threads must be positive");
        }
        Ok(Self {
            command,
            graph,
            requester: p.requester,
            prize,
            cost,
            dist,
            tasks: p.tasks.unwrap_or(10_000),
            seed: p.seed.unwrap_or(0),
            typed: p.typed.unwrap_or(false),
            grid,
            degree_cap: p.degree_cap.unwrap_or(cim_core::deviation::DEFAULT_DEGREE_CAP),
            degree: p.degree,
            agent: p.agent,
            threads: p.threads,
            out: p.out.unwrap_or_else(|| PathBuf::from(".")),
            profile: p.profile,
        })
    }

    pub fn params(&self) -> ContestParams {
        ContestParams {
            prize: self.prize,
            cost: self.cost,
        }
    }

    /// Comment lines heading every CSV; JSON outputs carry [`Self::meta`].
    pub fn prelude(&self) -> Vec<String> {
        vec![
            format!("config {}", serde_json::to_string(self).expect("config serializes")),
            format!("seed {}", self.seed),
            format!("rng {}", cim_core::rng::RNG_ALGORITHM),
            format!("version cim {}", cim_core::VERSION),
        ]
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self,
            "seed": self.seed,
            "rng": cim_core::rng::RNG_ALGORITHM,
            "version": cim_core::VERSION,
        })
    }
}

/// `exp`, `exp:<rate>`, `uniform` or `uniform:<l>:<u>`.
pub fn parse_dist(s: &str) -> anyhow::Result<Distribution> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?} in --dist {s:?}"));
    let d = match parts.as_slice() {
        ["exp" | "exponential"] => Distribution::exponential(1.0)?,
        ["exp" | "exponential", rate] => Distribution::exponential(num(rate)?)?,
        ["uniform"] => Distribution::uniform(0.0, 1.0)?,
        ["uniform", l, u] => Distribution::uniform(num(l)?, num(u)?)?,
        _ => bail!("unknown distribution {s:?}; expected exp[:rate] or uniform[:l:u]"),
    };
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_strings() {
        assert_eq!(parse_dist("exp").unwrap(), Distribution::Exponential { lambda: 1.0 });
        assert_eq!(parse_dist("uniform:0:2").unwrap(), Distribution::Uniform { l: 0.0, u: 2.0 });
        assert!(parse_dist("exp:-1").is_err());
        assert!(parse_dist("normal").is_err());
    }

    #[test]
    fn flags_win() {
        let file = PartialConfig {
            cost: Some(0.2),
            seed: Some(1),
            ..Default::default()
        };
        let flags = PartialConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.cost, Some(0.2));
        assert_eq!(merged.seed, Some(9));
    }
}
