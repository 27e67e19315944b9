//! Run configuration: command-line flags layered over an optional TOML file.
//!
//! The file schema (all keys optional unless a command needs them):
//!
//! ```toml
//! n = 1
//! seed = 7
//! threads = 4
//! tolerance_scale = 1.0
//! k = 2                 # bumps (solve)
//! eps = 0.25            # V(k, eps) radius (solve)
//! lambda = 2.0          # ansatz concentration (solve, with regions)
//! thetas = [1.0, 1.0]   # ansatz amplitude factors
//! tau_schedule = [0.1, 0.05, 0.02, 0.01, 0.0]
//!
//! [[regions]]           # one box per bump, coordinates (x.., y.., t)
//! lo = [-2.0, -2.0, -2.0]
//! hi = [2.0, 2.0, 2.0]
//!
//! [[start]]             # explicit start bumps (used when no regions)
//! alpha = 1.0
//! center = [0.0, 0.0, 0.0]
//! scale = 1.0
//!
//! [rspec]
//! kind = "periodic_sum" # constant | flatness | periodic_sum | ramp | perturbation
//! level = 1.0
//! period = [10.0, 0.0, 0.0]
//! height = 1.0
//! beta = 2.0
//! a = [1.0]
//! b = [1.0]
//! c = 1.0
//!
//! [flow]
//! step_size = 1.0
//! max_steps = 400
//! gradient_tolerance = 1e-4
//! projection = "parameter_manifold"  # or "full_grid"
//! rule = [48, 32, 32]
//!
//! [verify]
//! c0 = 2.0              # override of the bubble constant
//! points = 1000         # random points for the group checks
//! mc_samples = 400000
//!
//! [sweep]
//! param = "beta"        # or "xi0"
//! values = [2.5, 3.0, 3.5]
//! ```
//!
//! For `param = "xi0"` the sweep takes `points = [[x, y, t], ..]` or
//! `grid = { lo = [..], hi = [..], m = 5 }`, and the flatness data from
//! `[rspec]` (kind `flatness`) or the built-in signed family at the origin
//! (a = 1, b = 2, c = -1.5, beta = Q - 1).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use crnirenberg::group::HPoint;
use crnirenberg::multibump::{
    build_perturbation, default_psi, Flatness, FlatnessFamily, PeriodicSum, PerturbationOptions, Projection, Ramp,
    Region, RSpec,
};
use crnirenberg::{BumpParams64, FlowConfig64, HPoint64, RSpec64};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub tolerance_scale: Option<f64>,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub thetas: Option<Vec<f64>>,
    pub tau_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub regions: Vec<RegionCfg>,
    #[serde(default)]
    pub start: Vec<BumpCfg>,
    pub rspec: Option<RSpecCfg>,
    #[serde(default)]
    pub flow: FlowCfg,
    #[serde(default)]
    pub verify: VerifyCfg,
    pub sweep: Option<SweepCfg>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionCfg {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpCfg {
    pub alpha: f64,
    pub center: Vec<f64>,
    pub scale: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RSpecCfg {
    Constant {
        value: f64,
    },
    Flatness {
        base: Option<Vec<f64>>,
        r0: f64,
        beta: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        c: f64,
        #[serde(default)]
        family: FamilyCfg,
    },
    PeriodicSum {
        level: f64,
        period: Vec<f64>,
        height: f64,
        beta: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        c: f64,
    },
    Ramp {
        level: f64,
        amp: f64,
        width: f64,
        #[serde(default)]
        axis: usize,
    },
    Perturbation {
        base: Box<RSpecCfg>,
        #[serde(default = "one")]
        psi_inf: f64,
        #[serde(default = "one")]
        psi_h: f64,
        eps: f64,
        k: usize,
        m: usize,
        l: f64,
        spacing: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyCfg {
    #[default]
    Even,
    Signed,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCfg {
    pub step_size: Option<f64>,
    pub max_steps: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub projection: Option<ProjectionCfg>,
    pub rule: Option<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionCfg {
    ParameterManifold,
    FullGrid,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCfg {
    pub c0: Option<f64>,
    pub points: Option<usize>,
    pub mc_samples: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "param", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepCfg {
    Beta {
        #[serde(default)]
        values: Vec<f64>,
        rule: Option<[usize; 3]>,
    },
    Xi0 {
        #[serde(default)]
        points: Vec<Vec<f64>>,
        grid: Option<GridCfg>,
        rule: Option<[usize; 3]>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub m: usize,
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub tolerance_scale: Option<f64>,
}

/// The resolved configuration a command runs with.
#[derive(Debug)]
pub struct RunConfig {
    pub n: usize,
    pub seed: u64,
    pub threads: usize,
    pub tolerance_scale: f64,
    pub out: PathBuf,
    pub file: FileConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, out: PathBuf, flags: &Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str::<FileConfig>(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let n = flags.n.or(file.n).unwrap_or(1);
        if n == 0 {
            bail!("n must be at least 1");
        }
        let tolerance_scale = flags.tolerance_scale.or(file.tolerance_scale).unwrap_or(1.0);
        if !(tolerance_scale > 0.0 && tolerance_scale.is_finite()) {
            bail!("tolerance scale must be positive");
        }
        let threads = flags.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            bail!("threads must be at least 1");
        }
        Ok(RunConfig { n, seed: flags.seed.or(file.seed).unwrap_or(7), threads, tolerance_scale, out, file })
    }

    pub fn point(&self, c: &[f64]) -> Result<HPoint64> {
        if c.len() != 2 * self.n + 1 {
            bail!("point {:?} needs {} coordinates", c, 2 * self.n + 1);
        }
        Ok(HPoint::from_coords(c))
    }

    pub fn rspec(&self) -> Result<RSpec64> {
        match &self.file.rspec {
            Some(r) => build_rspec(r, self.n),
            None => Ok(RSpec::constant(self.n, 1.0)),
        }
    }

    pub fn regions(&self) -> Result<Vec<Region<f64>>> {
        self.file
            .regions
            .iter()
            .map(|r| {
                if r.lo.len() != 2 * self.n + 1 {
                    bail!("region bounds need {} coordinates", 2 * self.n + 1);
                }
                Region::new(r.lo.clone(), r.hi.clone()).map_err(|e| anyhow!(e))
            })
            .collect()
    }

    pub fn start_bumps(&self) -> Result<Vec<BumpParams64>> {
        self.file
            .start
            .iter()
            .map(|b| BumpParams64::new(b.alpha, self.point(&b.center)?, b.scale).map_err(|e| anyhow!(e)))
            .collect()
    }

    pub fn flow(&self) -> Result<FlowConfig64> {
        let f = &self.file.flow;
        let mut cfg = FlowConfig64::default();
        cfg = FlowConfig64::new(
            f.step_size.unwrap_or(cfg.step_size),
            f.max_steps.unwrap_or(cfg.max_steps),
            f.gradient_tolerance.unwrap_or(cfg.gradient_tolerance),
        )?;
        if let Some(s) = &self.file.tau_schedule {
            cfg.tau_schedule = s.clone();
        }
        if let Some(p) = f.projection {
            cfg.projection = match p {
                ProjectionCfg::ParameterManifold => Projection::ParameterManifold,
                ProjectionCfg::FullGrid => Projection::FullGrid,
            };
        }
        cfg.rule = f.rule.map(|[a, b, c]| (a, b, c));
        cfg.regions = self.regions()?;
        Ok(cfg)
    }
}

fn dims(n: usize, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != n || b.len() != n {
        bail!("coefficient lists a and b need {n} entries");
    }
    Ok(())
}

pub fn build_rspec(cfg: &RSpecCfg, n: usize) -> Result<RSpec64> {
    let pt = |c: &[f64]| -> Result<HPoint64> {
        if c.len() != 2 * n + 1 {
            bail!("point {:?} needs {} coordinates", c, 2 * n + 1);
        }
        Ok(HPoint::from_coords(c))
    };
    Ok(match cfg {
        RSpecCfg::Constant { value } => RSpec::constant(n, *value),
        RSpecCfg::Flatness { base, r0, beta, a, b, c, family } => {
            dims(n, a, b)?;
            let base = match base {
                Some(c) => pt(c)?,
                None => HPoint::origin(n),
            };
            let fam = match family {
                FamilyCfg::Even => FlatnessFamily::Even,
                FamilyCfg::Signed => FlatnessFamily::Signed,
            };
            RSpec::Flatness(Flatness::new(base, *r0, *beta, a.clone(), b.clone(), *c, fam)?)
        }
        RSpecCfg::PeriodicSum { level, period, height, beta, a, b, c } => {
            dims(n, a, b)?;
            RSpec::PeriodicSum(PeriodicSum::new(*level, pt(period)?, *height, *beta, a.clone(), b.clone(), *c)?)
        }
        RSpecCfg::Ramp { level, amp, width, axis } => {
            if *axis >= 2 * n + 1 {
                bail!("ramp axis {axis} out of range");
            }
            if !(*width > 0.0) {
                bail!("ramp width must be positive");
            }
            RSpec::Ramp(Ramp { n, level: *level, amp: *amp, width: *width, axis: *axis })
        }
        RSpecCfg::Perturbation { base, psi_inf, psi_h, eps, k, m, l, spacing } => {
            let base = build_rspec(base, n)?;
            let mut opts = PerturbationOptions::default();
            if let Some(s) = spacing {
                opts.spacing = *s;
            }
            build_perturbation(&base, default_psi(n, *psi_inf, *psi_h), *psi_inf, *eps, *k, *m, *l, &opts)?
        }
    })
}
