//! End-to-end runs: load inputs, compile and rasterize parameters, plan the
//! time steps, advance from an empty network and write frames and summaries.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::config::{RunConfig, SchemeChoice};
use crate::error::{Error, Result};
use crate::gridding::{rasterize_parameters, rasterize_point_sources, Grid, GridFields, IoField};
use crate::network::StreetNetwork;
use crate::news_params::{compile, NewsParams};
use crate::output::{compare_dirs, write_frames, CompareReport};
use crate::schedule::DemandSchedule;
use crate::solver::{Budget, DensityState, Simulation, StepStats};
use crate::timestep::{plan_steps, Scheme, TimestepReport};

/// Compiled inputs shared by every scheme of a run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: StreetNetwork,
    pub schedule: DemandSchedule,
    pub params: Vec<NewsParams>,
    pub fields: GridFields,
    pub io: IoField,
}

impl Scenario {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let network = StreetNetwork::load(&cfg.network)?;
        let schedule = match &cfg.schedule {
            Some(p) => DemandSchedule::load(p, &network)?,
            None => DemandSchedule::empty(),
        };
        Self::build(network, schedule, cfg)
    }

    pub fn build(
        network: StreetNetwork,
        schedule: DemandSchedule,
        cfg: &RunConfig,
    ) -> Result<Self> {
        schedule.validate(&network)?;
        let params = compile(&network, cfg.gamma, cfg.eps);
        let grid = Grid::for_network(&network, cfg.grid, cfg.pad, cfg.ghost)?;
        let fields = rasterize_parameters(&network, &params, grid, cfg.mu, cfg.gamma);
        let projected = schedule.project(&network, cfg.gamma)?;
        let io = rasterize_point_sources(&network, &projected, schedule.minutes, &grid)?;
        Ok(Scenario {
            network,
            schedule,
            params,
            fields,
            io,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.fields.grid
    }

    pub fn plan(&self, cfg: &RunConfig, scheme: Scheme) -> Result<TimestepReport> {
        plan_steps(&self.fields, &self.io, &cfg.cfl(), scheme, cfg.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSample {
    pub t: f64,
    pub vehicles: f64,
    pub budget: Budget,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scheme: Scheme,
    pub timestep: TimestepReport,
    pub stats: StepStats,
    pub budget: Budget,
    /// One sample per output time, starting at `t = 0`.
    pub samples: Vec<VehicleSample>,
    pub final_state: DensityState,
    pub wall_time: Duration,
    /// Set when the run stopped early.
    pub failure: Option<String>,
}

/// Advance one scheme over the horizon. Frames, `summary.txt` and
/// `vehicles.csv` go to `out` when given; they are flushed before a failure
/// is returned.
pub fn run_scheme(
    sc: &Scenario,
    cfg: &RunConfig,
    scheme: Scheme,
    out: Option<&Path>,
) -> Result<RunOutcome> {
    let timestep = sc.plan(cfg, scheme)?;
    let plan = timestep.plan;
    log::info!(
        "{}: dt = {} s ({} binding), {} io subcycles, {} steps per output",
        scheme.name(),
        plan.dt_general,
        timestep.binding,
        plan.subcycles,
        plan.steps_per_output
    );
    if let Some(o) = out {
        std::fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
    }
    let mut sim = Simulation::new(&sc.fields, &sc.io, plan, cfg.solver_options());
    let started = Instant::now();
    let mut samples = vec![VehicleSample {
        t: 0.0,
        vehicles: 0.0,
        budget: Budget::default(),
    }];
    if let Some(o) = out {
        write_frames(o, 0, sim.state())?;
    }
    let mut failure = None;
    for k in 1..=cfg.output_count() {
        if let Err(e) = sim.advance_output() {
            failure = Some(e);
            break;
        }
        // the clock is step * dt; pin output times to the exact multiple
        let t = k as f64 * plan.output_interval;
        samples.push(VehicleSample {
            t,
            vehicles: sim.state().total_vehicles(),
            budget: *sim.budget(),
        });
        if let Some(o) = out {
            write_frames(o, k, sim.state())?;
        }
    }
    let outcome = RunOutcome {
        scheme,
        timestep,
        stats: *sim.stats(),
        budget: *sim.budget(),
        samples,
        final_state: sim.state().clone(),
        wall_time: started.elapsed(),
        failure: failure.as_ref().map(|e| e.to_string()),
    };
    if let Some(o) = out {
        write_summary(o, sc, cfg, &outcome)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

pub fn summary_text(sc: &Scenario, cfg: &RunConfig, r: &RunOutcome) -> String {
    let g = sc.grid();
    let ts = &r.timestep;
    let p = &ts.plan;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("scheme", r.scheme.name().into());
    kv(
        "mode",
        if p.strict { "strict" } else { "non-strict" }.into(),
    );
    kv("network", cfg.network.display().to_string());
    kv("intersections", sc.network.intersections.len().to_string());
    kv("streets", sc.network.streets.len().to_string());
    kv("grid.nx", g.nx.to_string());
    kv("grid.ny", g.ny.to_string());
    kv("grid.dx", g.dx.to_string());
    kv("grid.dy", g.dy.to_string());
    kv("grid.pad", g.pad.to_string());
    kv("grid.ghost", g.ghost.to_string());
    kv("cfl.adv", cfg.c_adv.to_string());
    kv(
        "cfl.mix",
        if p.strict || r.scheme == Scheme::Unsplit {
            cfg.c_mix.to_string()
        } else {
            "none".into()
        },
    );
    kv("cfl.io", cfg.c_io.to_string());
    kv("dt.candidate.advection", ts.dt_advection.to_string());
    kv(
        "dt.candidate.mixing",
        ts.dt_mixing.map_or("none".into(), |v| v.to_string()),
    );
    kv("dt.candidate.io", ts.dt_io.to_string());
    kv("dt.binding", ts.binding.into());
    kv("dt.general", p.dt_general.to_string());
    kv("dt.io", p.dt_io.to_string());
    kv("subcycles", p.subcycles.to_string());
    kv("steps_per_output", p.steps_per_output.to_string());
    kv("output.interval", p.output_interval.to_string());
    kv("horizon", cfg.horizon.to_string());
    kv("steps", r.stats.steps.to_string());
    kv("rhs_evaluations", r.stats.rhs_evaluations().to_string());
    kv("io_sweeps", r.stats.io_sweeps.to_string());
    kv("clamp_events", r.stats.clamp_events.to_string());
    kv(
        "audit",
        r.failure
            .clone()
            .map_or("passed".into(), |e| format!("failed: {e}")),
    );
    kv("wall_time_s", format!("{:.3}", r.wall_time.as_secs_f64()));
    kv("vehicles.final", r.final_state.total_vehicles().to_string());
    kv("vehicles.injected", r.budget.injected.to_string());
    kv("vehicles.sunk", r.budget.sunk.to_string());
    kv(
        "vehicles.boundary_outflow",
        r.budget.boundary_outflow.to_string(),
    );
    kv("vehicles.clamped", r.budget.clamped.to_string());
    s
}

pub fn write_summary(dir: &Path, sc: &Scenario, cfg: &RunConfig, r: &RunOutcome) -> Result<()> {
    let p = dir.join("summary.txt");
    std::fs::write(&p, summary_text(sc, cfg, r)).map_err(|e| Error::io(&p, e))?;
    let mut csv = String::from("t,vehicles,injected,sunk,boundary_outflow\n");
    for v in &r.samples {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            v.t, v.vehicles, v.budget.injected, v.budget.sunk, v.budget.boundary_outflow
        );
    }
    let p = dir.join("vehicles.csv");
    std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))
}

#[derive(Debug)]
pub struct RunSet {
    pub outcomes: Vec<RunOutcome>,
    pub comparison: Option<CompareReport>,
}

/// Run every configured scheme. With `scheme = both`, each scheme writes to
/// its own subdirectory and a difference report goes to `compare/`.
pub fn run_config(cfg: &RunConfig) -> Result<RunSet> {
    cfg.validate()?;
    let sc = Scenario::load(cfg)?;
    let mut outcomes = Vec::new();
    match cfg.scheme {
        SchemeChoice::One(s) => outcomes.push(run_scheme(&sc, cfg, s, Some(&cfg.output))?),
        SchemeChoice::Both => {
            for s in [Scheme::Split, Scheme::Unsplit] {
                outcomes.push(run_scheme(&sc, cfg, s, Some(&cfg.output.join(s.name())))?);
            }
        }
    }
    let comparison = match cfg.scheme {
        SchemeChoice::Both => Some(compare_dirs(
            &cfg.output.join("split"),
            &cfg.output.join("unsplit"),
            Some(&cfg.output.join("compare")),
        )?),
        SchemeChoice::One(_) => None,
    };
    Ok(RunSet {
        outcomes,
        comparison,
    })
}
