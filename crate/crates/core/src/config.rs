//! Run configuration as `key = value` text, the same grammar the run
//! summaries use.
//!
//! ```text
//! network = town.net
//! schedule = town.sched        # optional, empty schedule when absent
//! output = out/
//! grid.nx = 12                 # or grid.spacing = 50
//! grid.ny = 10
//! grid.pad = 3
//! grid.ghost = 1
//! mode = non-strict            # strict | non-strict
//! scheme = split               # split | unsplit | both
//! cfl.adv = 0.5
//! cfl.mix = 0.57               # used in strict mode and by the unsplit scheme
//! cfl.io = 1.0
//! dt.cap = 60
//! output.interval = 900
//! horizon = 21600
//! gamma = 0.333333
//! mu = 0.02
//! eps = 1e-8
//! on_violation = fail          # fail | clamp
//! parallel = true
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fd::DEFAULT_GAMMA;
use crate::gridding::{GridSpec, DEFAULT_GHOST, DEFAULT_MU, DEFAULT_PAD};
use crate::news_params::DEFAULT_EPS;
use crate::solver::{BoundaryMode, SolverOptions, ViolationPolicy};
use crate::timestep::{CflConfig, Scheme, DEFAULT_C_MIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    One(Scheme),
    Both,
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::One(s) => vec![s],
            SchemeChoice::Both => vec![Scheme::Split, Scheme::Unsplit],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: PathBuf,
    pub schedule: Option<PathBuf>,
    pub output: PathBuf,
    pub grid: GridSpec,
    pub pad: usize,
    pub ghost: usize,
    pub strict: bool,
    pub scheme: SchemeChoice,
    pub c_adv: f64,
    pub c_mix: f64,
    pub c_io: f64,
    pub dt_cap: f64,
    pub output_interval: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub mu: f64,
    pub eps: f64,
    pub on_violation: ViolationPolicy,
    pub parallel: bool,
    /// Not settable from files; tests switch it to study the ghost layer.
    pub boundary: BoundaryMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cfl = CflConfig::default();
        RunConfig {
            network: PathBuf::new(),
            schedule: None,
            output: PathBuf::from("out"),
            grid: GridSpec::Cells { nx: 12, ny: 10 },
            pad: DEFAULT_PAD,
            ghost: DEFAULT_GHOST,
            strict: false,
            scheme: SchemeChoice::One(Scheme::Split),
            c_adv: cfl.c_adv,
            c_mix: DEFAULT_C_MIX,
            c_io: cfl.c_io,
            dt_cap: cfl.dt_cap,
            output_interval: cfl.output_interval,
            horizon: 6.0 * 3600.0,
            gamma: DEFAULT_GAMMA,
            mu: DEFAULT_MU,
            eps: DEFAULT_EPS,
            on_violation: ViolationPolicy::Fail,
            parallel: cfg!(feature = "parallel"),
            boundary: BoundaryMode::Absorbing,
        }
    }
}

/// Split `key = value` lines, dropping comments and blank lines.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, n + 1, "expected `key = value`"))?;
        out.push((n + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        for (line, k, v) in parse_pairs(&text, path)? {
            cfg.set(&k, &v, base)
                .map_err(|e| Error::Config(format!("{}:{line}: {e}", path.display())))?;
        }
        Ok(cfg)
    }

    /// Apply one `key = value` setting. Relative paths are joined to `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "network" => self.network = path(value),
            "schedule" => {
                self.schedule = if value.is_empty() {
                    None
                } else {
                    Some(path(value))
                }
            }
            "output" => self.output = path(value),
            "grid.nx" | "grid.ny" => {
                let n: usize = number(key, value)?;
                let (nx, ny) = match self.grid {
                    GridSpec::Cells { nx, ny } => (nx, ny),
                    GridSpec::Spacing(_) => (n, n),
                };
                self.grid = if key == "grid.nx" {
                    GridSpec::Cells { nx: n, ny }
                } else {
                    GridSpec::Cells { nx, ny: n }
                };
            }
            "grid.spacing" => self.grid = GridSpec::Spacing(number(key, value)?),
            "grid.pad" => self.pad = number(key, value)?,
            "grid.ghost" => self.ghost = number(key, value)?,
            "mode" => {
                self.strict = match value {
                    "strict" => true,
                    "non-strict" | "nonstrict" => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "mode must be strict or non-strict, got `{value}`"
                        )))
                    }
                }
            }
            "scheme" => {
                self.scheme = match value {
                    "split" => SchemeChoice::One(Scheme::Split),
                    "unsplit" => SchemeChoice::One(Scheme::Unsplit),
                    "both" => SchemeChoice::Both,
                    _ => {
                        return Err(Error::Config(format!(
                            "scheme must be split, unsplit or both, got `{value}`"
                        )))
                    }
                }
            }
            "cfl.adv" => self.c_adv = number(key, value)?,
            "cfl.mix" => self.c_mix = number(key, value)?,
            "cfl.io" => self.c_io = number(key, value)?,
            "dt.cap" => self.dt_cap = number(key, value)?,
            "output.interval" => self.output_interval = number(key, value)?,
            "horizon" => self.horizon = number(key, value)?,
            "gamma" => self.gamma = number(key, value)?,
            "mu" => self.mu = number(key, value)?,
            "eps" => self.eps = number(key, value)?,
            "on_violation" => {
                self.on_violation = match value {
                    "fail" => ViolationPolicy::Fail,
                    "clamp" => ViolationPolicy::Clamp,
                    _ => {
                        return Err(Error::Config(format!(
                            "on_violation must be fail or clamp, got `{value}`"
                        )))
                    }
                }
            }
            "parallel" => self.parallel = number(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn cfl(&self) -> CflConfig {
        CflConfig {
            c_adv: self.c_adv,
            c_mix: self.strict.then_some(self.c_mix),
            c_io: self.c_io,
            dt_cap: self.dt_cap,
            output_interval: self.output_interval,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            boundary: self.boundary,
            on_violation: self.on_violation,
            parallel: self.parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfl().validate()?;
        if !(self.c_mix > 0.0 && self.c_mix <= 1.0) {
            return Err(Error::Config("cfl.mix must lie in (0, 1]".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma = {} must lie in (0, 1)",
                self.gamma
            )));
        }
        if !(self.mu > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("mu and eps must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let outputs = self.horizon / self.output_interval;
        if (outputs - outputs.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "horizon {} s is not a multiple of the output interval {} s",
                self.horizon, self.output_interval
            )));
        }
        if self.network.as_os_str().is_empty() {
            return Err(Error::Config("no network file given".into()));
        }
        for p in std::iter::once(&self.network).chain(self.schedule.as_ref()) {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn output_count(&self) -> usize {
        (self.horizon / self.output_interval).round() as usize
    }

    /// The settings as `key = value` lines, loadable again with [`RunConfig::load`].
    pub fn to_text(&self) -> String {
        let mut lines = vec![format!("network = {}", self.network.display())];
        if let Some(s) = &self.schedule {
            lines.push(format!("schedule = {}", s.display()));
        }
        lines.push(format!("output = {}", self.output.display()));
        match self.grid {
            GridSpec::Cells { nx, ny } => {
                lines.push(format!("grid.nx = {nx}"));
                lines.push(format!("grid.ny = {ny}"));
            }
            GridSpec::Spacing(d) => lines.push(format!("grid.spacing = {d}")),
        }
        lines.push(format!("grid.pad = {}", self.pad));
        lines.push(format!("grid.ghost = {}", self.ghost));
        lines.push(format!(
            "mode = {}",
            if self.strict { "strict" } else { "non-strict" }
        ));
        lines.push(format!(
            "scheme = {}",
            match self.scheme {
                SchemeChoice::One(s) => s.name(),
                SchemeChoice::Both => "both",
            }
        ));
        lines.push(format!("cfl.adv = {}", self.c_adv));
        lines.push(format!("cfl.mix = {}", self.c_mix));
        lines.push(format!("cfl.io = {}", self.c_io));
        lines.push(format!("dt.cap = {}", self.dt_cap));
        lines.push(format!("output.interval = {}", self.output_interval));
        lines.push(format!("horizon = {}", self.horizon));
        lines.push(format!("gamma = {}", self.gamma));
        lines.push(format!("mu = {}", self.mu));
        lines.push(format!("eps = {}", self.eps));
        lines.push(format!(
            "on_violation = {}",
            match self.on_violation {
                ViolationPolicy::Fail => "fail",
                ViolationPolicy::Clamp => "clamp",
            }
        ));
        lines.push(format!("parallel = {}", self.parallel));
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.net"), "").unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(
            &cfg_path,
            "network = a.net\nmode = strict  # comment\nscheme = both\ngrid.nx = 24\ngrid.ny = 20\nhorizon = 3600\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.network, dir.path().join("a.net"));
        assert!(cfg.strict);
        assert_eq!(cfg.cfl().c_mix, Some(DEFAULT_C_MIX));
        assert_eq!(cfg.scheme, SchemeChoice::Both);
        assert_eq!(cfg.grid, GridSpec::Cells { nx: 24, ny: 20 });
        cfg.validate().unwrap();
        assert_eq!(cfg.output_count(), 4);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut cfg = RunConfig::default();
        let base = Path::new(".");
        assert!(cfg.set("colour", "blue", base).is_err());
        assert!(cfg.set("mode", "lenient", base).is_err());
        assert!(cfg.set("cfl.adv", "half", base).is_err());
        cfg.set("horizon", "1000", base).unwrap();
        cfg.network = PathBuf::from("/nonexistent/net");
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            network: dir.path().join("x.net"),
            output: dir.path().join("out"),
            ..RunConfig::default()
        };
        cfg.set("grid.spacing", "37.5", dir.path()).unwrap();
        cfg.set("on_violation", "clamp", dir.path()).unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, cfg.to_text()).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    }
}
