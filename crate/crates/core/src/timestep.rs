//! A-priori time-step restrictions for advection, mixing and inflow/outflow,
//! and fitting of the general and io steps to the output schedule.

use crate::error::{Error, Result};
use crate::gridding::{GridFields, IoField};

pub const DEFAULT_C_ADV: f64 = 0.5;
pub const DEFAULT_C_MIX: f64 = 0.57;
pub const DEFAULT_C_IO: f64 = 1.0;
pub const DEFAULT_DT_CAP: f64 = 60.0;
pub const DEFAULT_OUTPUT_INTERVAL: f64 = 900.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflConfig {
    pub c_adv: f64,
    /// Present only when every partial density must stay nonnegative.
    pub c_mix: Option<f64>,
    pub c_io: f64,
    pub dt_cap: f64,
    pub output_interval: f64,
}

impl Default for CflConfig {
    fn default() -> Self {
        CflConfig {
            c_adv: DEFAULT_C_ADV,
            c_mix: None,
            c_io: DEFAULT_C_IO,
            dt_cap: DEFAULT_DT_CAP,
            output_interval: DEFAULT_OUTPUT_INTERVAL,
        }
    }
}

impl CflConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |c: f64| c > 0.0 && c <= 1.0;
        if !in_unit(self.c_adv) || !in_unit(self.c_io) || self.c_mix.is_some_and(|c| !in_unit(c)) {
            return Err(Error::Config("CFL numbers must lie in (0, 1]".into()));
        }
        if !(self.dt_cap > 0.0) || !(self.output_interval > 0.0) {
            return Err(Error::Config(
                "time-step cap and output interval must be positive".into(),
            ));
        }
        if self.output_interval.fract() != 0.0 {
            return Err(Error::Config(
                "output interval must be a whole number of seconds".into(),
            ));
        }
        Ok(())
    }

    pub fn is_strict(&self) -> bool {
        self.c_mix.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Advection and mixing with the general step, io subcycled.
    Split,
    /// All three operators in one forward-Euler step.
    Unsplit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Split => "split",
            Scheme::Unsplit => "unsplit",
        }
    }
}

/// Advective restriction from the largest maximal speed on the grid.
pub fn dt_advection(fields: &GridFields, c_adv: f64) -> Result<f64> {
    let g = &fields.grid;
    let v = g
        .interior()
        .map(|(i, j)| fields.cell(i, j).v_max.iter().copied().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if !(v > 0.0) {
        return Err(Error::Config(
            "maximal speed vanishes on the whole grid".into(),
        ));
    }
    Ok(c_adv * g.dx.min(g.dy) / v)
}

fn min_length(fields: &GridFields) -> f64 {
    fields
        .grid
        .interior()
        .map(|(i, j)| fields.cell(i, j).length)
        .fold(f64::INFINITY, f64::min)
}

fn min_inv_speed(fields: &GridFields) -> f64 {
    fields
        .grid
        .interior()
        .flat_map(|(i, j)| fields.cell(i, j).v_max)
        .map(|v| 1.0 / v)
        .fold(f64::INFINITY, f64::min)
}

/// Mixing restriction: smallest length scale times smallest inverse speed.
pub fn dt_mixing(fields: &GridFields, c_mix: f64) -> f64 {
    c_mix * min_length(fields) * min_inv_speed(fields)
}

/// Inflow/outflow restriction. Demand and supply ratios are minimized over
/// cells, directions and all scheduled minutes; unbounded sinks count as the
/// cell capacity.
pub fn dt_io(fields: &GridFields, io: &IoField, c_io: f64, eps: f64) -> f64 {
    let gamma = fields.gamma;
    let generic = min_inv_speed(fields);
    let stability = 2.0 * generic * 1f64.min((1.0 - gamma) / gamma);
    let mut demand_term = f64::INFINITY;
    let mut supply_term = f64::INFINITY;
    for (i, j) in fields.grid.interior() {
        let c = fields.cell(i, j);
        for x in 0..4 {
            demand_term = demand_term.min(c.rho_max[x] / eps);
            supply_term = supply_term.min(c.rho_max[x] / eps);
        }
    }
    for cell in &io.cells {
        let c = &fields.cells[cell.index];
        for m in &cell.minutes {
            for x in 0..4 {
                let sink = if m.sink[x].is_finite() {
                    m.sink[x]
                } else {
                    c.phi_max(x)
                };
                demand_term = demand_term.min(c.rho_max[x] / (m.source[x] + eps));
                supply_term = supply_term.min(c.rho_max[x] / (sink + eps));
            }
        }
    }
    c_io * min_length(fields) * stability.min(demand_term).min(supply_term).min(generic)
}

/// Largest step not above `min(candidate, cap)` that divides the output
/// interval into equal steps.
pub fn fit_to_output(candidate: f64, output_interval: f64, cap: f64) -> (f64, usize) {
    let target = candidate.min(cap);
    let steps = (output_interval / target).ceil().max(1.0) as usize;
    (output_interval / steps as f64, steps)
}

/// Split the general step into `K` equal io substeps not above the io
/// candidate.
pub fn fit_subcycles(dt_general: f64, dt_io_candidate: f64) -> (f64, usize) {
    let k = (dt_general / dt_io_candidate).ceil().max(1.0) as usize;
    (dt_general / k as f64, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub dt_general: f64,
    pub dt_io: f64,
    pub subcycles: usize,
    pub steps_per_output: usize,
    pub output_interval: f64,
    pub strict: bool,
    pub scheme: Scheme,
}

impl StepPlan {
    /// Plan with fixed steps, bypassing the restrictions; used by tests and
    /// benchmarks that need exact control.
    pub fn fixed(
        dt_general: f64,
        subcycles: usize,
        steps_per_output: usize,
        strict: bool,
        scheme: Scheme,
    ) -> Self {
        StepPlan {
            dt_general,
            dt_io: dt_general / subcycles as f64,
            subcycles,
            steps_per_output,
            output_interval: dt_general * steps_per_output as f64,
            strict,
            scheme,
        }
    }
}

/// Candidate steps and the resulting plan, as reported in run summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepReport {
    pub dt_advection: f64,
    pub dt_mixing: Option<f64>,
    pub dt_io: f64,
    pub binding: &'static str,
    pub plan: StepPlan,
}

/// Combine the restrictions. The split scheme uses advection (plus mixing in
/// strict mode) for the general step and subcycles io; the unsplit scheme
/// enforces all three, with the default mixing CFL number when none is set.
pub fn plan_steps(
    fields: &GridFields,
    io: &IoField,
    cfl: &CflConfig,
    scheme: Scheme,
    eps: f64,
) -> Result<TimestepReport> {
    cfl.validate()?;
    let adv = dt_advection(fields, cfl.c_adv)?;
    let io_dt = dt_io(fields, io, cfl.c_io, eps);
    let mix = match (scheme, cfl.c_mix) {
        (_, Some(c)) => Some(dt_mixing(fields, c)),
        (Scheme::Unsplit, None) => Some(dt_mixing(fields, DEFAULT_C_MIX)),
        (Scheme::Split, None) => None,
    };
    let mut candidates: Vec<(&'static str, f64)> = vec![("advection", adv)];
    if let Some(m) = mix {
        candidates.push(("mixing", m));
    }
    if scheme == Scheme::Unsplit {
        candidates.push(("io", io_dt));
    }
    candidates.push(("cap", cfl.dt_cap));
    let (binding, candidate) =
        candidates
            .iter()
            .copied()
            .fold(
                ("cap", f64::INFINITY),
                |best, c| if c.1 < best.1 { c } else { best },
            );
    let (dt_general, steps_per_output) = fit_to_output(candidate, cfl.output_interval, cfl.dt_cap);
    let (dt_io_fit, subcycles) = match scheme {
        Scheme::Split => fit_subcycles(dt_general, io_dt),
        Scheme::Unsplit => (dt_general, 1),
    };
    Ok(TimestepReport {
        dt_advection: adv,
        dt_mixing: mix,
        dt_io: io_dt,
        binding,
        plan: StepPlan {
            dt_general,
            dt_io: dt_io_fit,
            subcycles,
            steps_per_output,
            output_interval: cfl.output_interval,
            strict: cfl.is_strict(),
            scheme,
        },
    })
}
