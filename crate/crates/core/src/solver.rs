//! Finite-volume update of the four partial 2d densities.
//!
//! One step computes cell demand and supply from the old state, Godunov face
//! fluxes projected with the face-averaged trig terms (donor-cell upwind),
//! the mixing between directions and the point sources/sinks, and writes the
//! new state into a second buffer. The split scheme applies advection and
//! mixing with the general step and then advances the io cells in `K`
//! substeps, recomputing demand and supply from the evolving substate.
//!
//! Rows are processed in parallel when the `parallel` feature is enabled and
//! requested at runtime. Every reduction first sums within rows and then adds
//! the row sums in order, so results do not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::direction::{Dir, PerDir};
use crate::error::{BoundTarget, Error, Result};
use crate::fd::{demand, supply};
use crate::gridding::{CellParams, Grid, GridFields, IoField, IoValues};
use crate::schedule::minute_of;
use crate::timestep::{Scheme, StepPlan};

/// Cell-centered partial densities on the full grid, ghosts included.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub grid: Grid,
    pub rho: Vec<PerDir<f64>>,
    pub t: f64,
}

impl DensityState {
    pub fn zeros(grid: Grid) -> Self {
        DensityState {
            grid,
            rho: vec![[0.0; 4]; grid.len()],
            t: 0.0,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &PerDir<f64> {
        &self.rho[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut PerDir<f64> {
        let k = self.grid.idx(i, j);
        &mut self.rho[k]
    }

    /// Summed density per full-grid cell.
    pub fn sum_field(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn partial_field(&self, d: Dir) -> Vec<f64> {
        self.rho.iter().map(|r| r[d.index()]).collect()
    }

    /// Total vehicle count, `sum(rho) * dx * dy` over interior cells.
    pub fn total_vehicles(&self) -> f64 {
        let g = &self.grid;
        let w = g.width();
        let rows: Vec<f64> = (g.ghost..g.ghost + g.ny)
            .map(|j| {
                self.rho[j * w + g.ghost..j * w + g.ghost + g.nx]
                    .iter()
                    .map(|r| r[0] + r[1] + r[2] + r[3])
                    .sum::<f64>()
            })
            .collect();
        rows.iter().sum::<f64>() * g.cell_area()
    }

    pub fn ghosts_are_zero(&self) -> bool {
        let g = &self.grid;
        (0..g.height())
            .flat_map(|j| (0..g.width()).map(move |i| (i, j)))
            .filter(|&(i, j)| !g.is_interior(i, j))
            .all(|(i, j)| self.at(i, j) == &[0.0; 4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Ghost densities pinned to zero, so traffic leaves through the edge.
    Absorbing,
    /// No flux across the outer faces. Only meant for tests.
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationPolicy {
    Fail,
    /// Clamp to the admissible range and log a warning.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    pub boundary: BoundaryMode,
    pub on_violation: ViolationPolicy,
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            boundary: BoundaryMode::Absorbing,
            on_violation: ViolationPolicy::Fail,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

/// Cumulative vehicle flows since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub injected: f64,
    pub sunk: f64,
    /// Net flow through the outer faces of the interior domain.
    pub boundary_outflow: f64,
    /// Vehicles added by clamping; zero unless clamping is enabled.
    pub clamped: f64,
}

impl Budget {
    /// Vehicle count the flows predict for a run that started empty.
    pub fn expected_total(&self) -> f64 {
        self.injected - self.sunk - self.boundary_outflow + self.clamped
    }
}

/// Operator evaluation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub steps: u64,
    pub advection_sweeps: u64,
    pub mixing_sweeps: u64,
    pub io_sweeps: u64,
    pub clamp_events: u64,
}

impl StepStats {
    /// Right-hand-side evaluations: one per operator application.
    pub fn rhs_evaluations(&self) -> u64 {
        self.advection_sweeps + self.mixing_sweeps + self.io_sweeps
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DemandSupply {
    pub demand: PerDir<f64>,
    pub supply: PerDir<f64>,
}

#[inline]
pub fn cell_demand_supply(rho: &PerDir<f64>, p: &CellParams) -> DemandSupply {
    let mut out = DemandSupply::default();
    for x in 0..4 {
        out.demand[x] = demand(rho[x], p.v_max[x], p.rho_crit[x]);
        out.supply[x] = supply(rho[x], p.v_max[x], p.rho_crit[x], p.rho_max[x]);
    }
    out
}

/// Rightgoing and leftgoing Godunov fluxes across the face between a cell
/// and its neighbour in the positive coordinate direction.
#[inline]
pub fn face_fluxes(lower: &DemandSupply, upper: &DemandSupply) -> (PerDir<f64>, PerDir<f64>) {
    let mut right = [0.0; 4];
    let mut left = [0.0; 4];
    for x in 0..4 {
        right[x] = lower.demand[x].min(upper.supply[x]);
        left[x] = upper.demand[x].min(lower.supply[x]);
    }
    (right, left)
}

/// Upwinded face flux `q+ * right + q- * left` per direction.
#[inline]
pub fn upwind(trig: &PerDir<f64>, right: &PerDir<f64>, left: &PerDir<f64>) -> PerDir<f64> {
    std::array::from_fn(|x| trig[x].max(0.0) * right[x] + trig[x].min(0.0) * left[x])
}

/// Mixing source per direction: `(in - out) / L` with turning fluxes
/// `min(alpha_XY D_X, beta_XY S_Y)`.
#[inline]
pub fn mixing_update(ds: &DemandSupply, p: &CellParams) -> PerDir<f64> {
    let mut inflow = [0.0; 4];
    let mut outflow = [0.0; 4];
    for x in 0..4 {
        for y in 0..4 {
            let phi = (p.alpha[x][y] * ds.demand[x]).min(p.beta[x][y] * ds.supply[y]);
            outflow[x] += phi;
            inflow[y] += phi;
        }
    }
    std::array::from_fn(|x| (inflow[x] - outflow[x]) / p.length)
}

/// Source and sink fluxes of one cell, before division by `L`.
#[inline]
pub fn io_fluxes(ds: &DemandSupply, io: &IoValues) -> (PerDir<f64>, PerDir<f64>) {
    let src = std::array::from_fn(|x| io.source[x].min(ds.supply[x]));
    let sink = std::array::from_fn(|x| ds.demand[x].min(io.sink[x]));
    (src, sink)
}

const NO_IO: u32 = u32::MAX;

fn for_each_row<T: Send>(
    data: &mut [T],
    width: usize,
    parallel: bool,
    f: impl Fn(usize, &mut [T]) + Sync + Send,
) {
    #[cfg(feature = "parallel")]
    if parallel {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(j, row)| f(j, row));
        return;
    }
    let _ = parallel;
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(j, row)| f(j, row));
}

fn map_rows<R: Send>(
    rows: std::ops::Range<usize>,
    parallel: bool,
    f: impl Fn(usize) -> R + Sync + Send,
) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if parallel {
        return rows.into_par_iter().map(f).collect();
    }
    let _ = parallel;
    rows.map(f).collect()
}

/// A running simulation: fields, schedule, plan and the double-buffered
/// state with its scratch arrays.
pub struct Simulation<'a> {
    fields: &'a GridFields,
    io: &'a IoField,
    plan: StepPlan,
    opts: SolverOptions,
    state: DensityState,
    next: Vec<PerDir<f64>>,
    ds: Vec<DemandSupply>,
    /// Upwinded fluxes at vertical faces, `(width - 1) x height`.
    ax: Vec<PerDir<f64>>,
    /// Upwinded fluxes at horizontal faces, `width x (height - 1)`.
    ay: Vec<PerDir<f64>>,
    io_slot: Vec<u32>,
    step: u64,
    budget: Budget,
    stats: StepStats,
}

impl<'a> Simulation<'a> {
    pub fn new(
        fields: &'a GridFields,
        io: &'a IoField,
        plan: StepPlan,
        opts: SolverOptions,
    ) -> Self {
        let g = fields.grid;
        let mut io_slot = vec![NO_IO; g.len()];
        for (n, c) in io.cells.iter().enumerate() {
            io_slot[c.index] = n as u32;
        }
        Simulation {
            fields,
            io,
            plan,
            opts,
            state: DensityState::zeros(g),
            next: vec![[0.0; 4]; g.len()],
            ds: vec![DemandSupply::default(); g.len()],
            ax: vec![[0.0; 4]; (g.width() - 1) * g.height()],
            ay: vec![[0.0; 4]; g.width() * (g.height() - 1)],
            io_slot,
            step: 0,
            budget: Budget::default(),
            stats: StepStats::default(),
        }
    }

    /// Replace the state, e.g. with initial data. Ghost values are reset to
    /// zero and the step counter restarts at the state's time.
    pub fn with_state(mut self, mut state: DensityState) -> Self {
        assert_eq!(
            state.grid, self.fields.grid,
            "state and fields must share the grid"
        );
        let g = state.grid;
        for j in 0..g.height() {
            for i in 0..g.width() {
                if !g.is_interior(i, j) {
                    *state.at_mut(i, j) = [0.0; 4];
                }
            }
        }
        self.step = (state.t / self.plan.dt_general).round() as u64;
        self.state = state;
        self
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }

    pub fn plan(&self) -> &StepPlan {
        &self.plan
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    pub fn stats(&self) -> &StepStats {
        &self.stats
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// Advance by one general step with the configured scheme.
    pub fn step(&mut self) -> Result<()> {
        match self.plan.scheme {
            Scheme::Unsplit => self.step_unsplit(),
            Scheme::Split => self.step_split(),
        }
    }

    /// Advance by one output interval.
    pub fn advance_output(&mut self) -> Result<()> {
        for _ in 0..self.plan.steps_per_output {
            self.step()?;
        }
        Ok(())
    }

    /// All three operators in one forward-Euler step from the old state.
    pub fn step_unsplit(&mut self) -> Result<()> {
        let minute = minute_of(self.state.t, self.io.minutes);
        self.compute_demand_supply();
        self.compute_face_fluxes();
        self.apply_update(self.plan.dt_general, Some(minute));
        self.stats.advection_sweeps += 1;
        self.stats.mixing_sweeps += 1;
        self.stats.io_sweeps += 1;
        self.finish_step()
    }

    /// Advection and mixing with the general step, then `K` io substeps
    /// starting from the intermediate state.
    pub fn step_split(&mut self) -> Result<()> {
        self.compute_demand_supply();
        self.compute_face_fluxes();
        self.apply_update(self.plan.dt_general, None);
        self.stats.advection_sweeps += 1;
        self.stats.mixing_sweeps += 1;
        let t_old = self.state.t;
        self.finish_step()?;
        let dt_io = self.plan.dt_io;
        for k in 0..self.plan.subcycles {
            let minute = minute_of(t_old + k as f64 * dt_io, self.io.minutes);
            self.io_substep(dt_io, minute);
            self.stats.io_sweeps += 1;
            self.audit()?;
        }
        Ok(())
    }

    /// Swap buffers, advance the clock and audit the new state.
    fn finish_step(&mut self) -> Result<()> {
        std::mem::swap(&mut self.state.rho, &mut self.next);
        self.step += 1;
        self.stats.steps += 1;
        self.state.t = self.step as f64 * self.plan.dt_general;
        self.audit()
    }

    fn compute_demand_supply(&mut self) {
        let w = self.fields.grid.width();
        let rho = &self.state.rho;
        let cells = &self.fields.cells;
        for_each_row(&mut self.ds, w, self.opts.parallel, |j, row| {
            for (i, out) in row.iter_mut().enumerate() {
                let k = j * w + i;
                *out = cell_demand_supply(&rho[k], &cells[k]);
            }
        });
    }

    fn compute_face_fluxes(&mut self) {
        let g = self.fields.grid;
        let (w, h) = (g.width(), g.height());
        let closed = self.opts.boundary == BoundaryMode::Closed;
        let ds = &self.ds;
        let f = self.fields;
        for_each_row(&mut self.ax, w - 1, self.opts.parallel, |j, row| {
            for (i, a) in row.iter_mut().enumerate() {
                let (r, l) = face_fluxes(&ds[j * w + i], &ds[j * w + i + 1]);
                *a = upwind(f.cos_at(i, j), &r, &l);
                if closed && !(g.is_interior(i, j) && g.is_interior(i + 1, j)) {
                    *a = [0.0; 4];
                }
            }
        });
        for_each_row(&mut self.ay, w, self.opts.parallel, |j, row| {
            debug_assert!(j + 1 < h);
            for (i, a) in row.iter_mut().enumerate() {
                let (r, l) = face_fluxes(&ds[j * w + i], &ds[(j + 1) * w + i]);
                *a = upwind(f.sin_at(i, j), &r, &l);
                if closed && !(g.is_interior(i, j) && g.is_interior(i, j + 1)) {
                    *a = [0.0; 4];
                }
            }
        });
    }

    /// Write `rho + dt * (adv + mix [+ io])` into the second buffer and
    /// accumulate the budget terms. Io is included when `minute` is given.
    fn apply_update(&mut self, dt: f64, minute: Option<usize>) {
        let g = self.fields.grid;
        let w = g.width();
        let (dx, dy) = (g.dx, g.dy);
        let (ax, ay, ds, rho) = (&self.ax, &self.ay, &self.ds, &self.state.rho);
        let (f, io, io_slot) = (self.fields, self.io, &self.io_slot);
        for_each_row(&mut self.next, w, self.opts.parallel, |j, row| {
            if j < g.ghost || j >= g.ghost + g.ny {
                row.fill([0.0; 4]);
                return;
            }
            for (i, out) in row.iter_mut().enumerate() {
                if i < g.ghost || i >= g.ghost + g.nx {
                    *out = [0.0; 4];
                    continue;
                }
                let k = j * w + i;
                let p = &f.cells[k];
                let (east, west) = (&ax[j * (w - 1) + i], &ax[j * (w - 1) + i - 1]);
                let (north, south) = (&ay[j * w + i], &ay[(j - 1) * w + i]);
                let mix = mixing_update(&ds[k], p);
                let mut src = [0.0; 4];
                if let (Some(m), true) = (minute, io_slot[k] != NO_IO) {
                    let (s, sink) = io_fluxes(&ds[k], &io.cells[io_slot[k] as usize].minutes[m]);
                    src = std::array::from_fn(|x| (s[x] - sink[x]) / p.length);
                }
                for x in 0..4 {
                    let adv = -(east[x] - west[x]) / dx - (north[x] - south[x]) / dy;
                    out[x] = rho[k][x] + dt * (adv + mix[x] + src[x]);
                }
            }
        });

        let area = g.cell_area();
        let boundary = {
            let lo = g.ghost;
            let (hi_i, hi_j) = (g.ghost + g.nx, g.ghost + g.ny);
            let mut total = 0.0;
            for j in lo..hi_j {
                let (right, left) = (&ax[j * (w - 1) + hi_i - 1], &ax[j * (w - 1) + lo - 1]);
                total += (right.iter().sum::<f64>() - left.iter().sum::<f64>()) * dy;
            }
            for i in lo..hi_i {
                let (top, bottom) = (&ay[(hi_j - 1) * w + i], &ay[(lo - 1) * w + i]);
                total += (top.iter().sum::<f64>() - bottom.iter().sum::<f64>()) * dx;
            }
            total
        };
        self.budget.boundary_outflow += dt * boundary;
        if let Some(m) = minute {
            for c in &io.cells {
                let (s, sink) = io_fluxes(&ds[c.index], &c.minutes[m]);
                let l = f.cells[c.index].length;
                self.budget.injected += dt * area * s.iter().sum::<f64>() / l;
                self.budget.sunk += dt * area * sink.iter().sum::<f64>() / l;
            }
        }
    }

    /// One io substep on the current state, touching only io cells.
    fn io_substep(&mut self, dt: f64, minute: usize) {
        let area = self.fields.grid.cell_area();
        for c in &self.io.cells {
            let p = &self.fields.cells[c.index];
            let rho = &mut self.state.rho[c.index];
            let ds = cell_demand_supply(rho, p);
            let (s, sink) = io_fluxes(&ds, &c.minutes[minute]);
            for x in 0..4 {
                rho[x] += dt * (s[x] - sink[x]) / p.length;
            }
            self.budget.injected += dt * area * s.iter().sum::<f64>() / p.length;
            self.budget.sunk += dt * area * sink.iter().sum::<f64>() / p.length;
        }
    }

    /// Check bounds on interior cells: every partial nonnegative in strict
    /// mode, and the summed density within `[0, sum of maximal densities]`.
    fn audit(&mut self) -> Result<()> {
        let g = self.fields.grid;
        let w = g.width();
        let strict = self.plan.strict;
        let (rho, cells) = (&self.state.rho, &self.fields.cells);
        let found = map_rows(g.ghost..g.ghost + g.ny, self.opts.parallel, |j| {
            (g.ghost..g.ghost + g.nx).find_map(|i| {
                let k = j * w + i;
                violation(&rho[k], &cells[k], strict)
                    .map(|(what, value, upper)| (i, j, what, value, upper))
            })
        });
        let Some((i, j, what, value, upper)) = found.into_iter().flatten().next() else {
            return Ok(());
        };
        match self.opts.on_violation {
            ViolationPolicy::Fail => Err(Error::BoundViolation {
                t: self.state.t,
                i,
                j,
                what,
                value,
                upper,
            }),
            ViolationPolicy::Clamp => {
                log::warn!(
                    "clamping {what} = {value:e} at cell ({i}, {j}), t = {} s",
                    self.state.t
                );
                self.clamp_all();
                Ok(())
            }
        }
    }

    fn clamp_all(&mut self) {
        let g = self.fields.grid;
        let area = g.cell_area();
        for (i, j) in g.interior() {
            let k = g.idx(i, j);
            let p = &self.fields.cells[k];
            let r = &mut self.state.rho[k];
            let before: f64 = r.iter().sum();
            for x in 0..4 {
                r[x] = r[x].clamp(0.0, p.rho_max[x]);
            }
            let after: f64 = r.iter().sum();
            if after != before {
                self.stats.clamp_events += 1;
                self.budget.clamped += (after - before) * area;
            }
        }
    }
}

fn violation(rho: &PerDir<f64>, p: &CellParams, strict: bool) -> Option<(BoundTarget, f64, f64)> {
    if strict {
        for d in Dir::ALL {
            let v = rho[d.index()];
            if v < 0.0 || v.is_nan() {
                return Some((BoundTarget::Partial(d), v, p.rho_max[d.index()]));
            }
        }
    }
    let sum: f64 = rho.iter().sum();
    let upper: f64 = p.rho_max.iter().sum();
    if !(0.0..=upper).contains(&sum) {
        return Some((BoundTarget::Sum, sum, upper));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::DEFAULT_GAMMA;
    use crate::gridding::IoCell;

    const RM: f64 = 1.0 / 6.0;

    fn grid(nx: usize, ny: usize) -> Grid {
        Grid::new(nx, ny, 20.0, 20.0, 0.0, 0.0, 1, 0).unwrap()
    }

    fn plan(dt: f64, k: usize, scheme: Scheme) -> StepPlan {
        StepPlan::fixed(dt, k, 10, false, scheme)
    }

    fn seq() -> SolverOptions {
        SolverOptions {
            parallel: false,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn demand_supply_examples() {
        let p = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 100.0);
        let phi = p.phi_max(0);
        let empty = cell_demand_supply(&[0.0; 4], &p);
        assert_eq!(empty.demand, [0.0; 4]);
        assert_eq!(empty.supply, [phi; 4]);
        let jam = cell_demand_supply(&[RM; 4], &p);
        assert_eq!(jam.demand, [phi; 4]);
        assert_eq!(jam.supply, [0.0; 4]);
        let half = cell_demand_supply(&[p.rho_crit[0] / 2.0; 4], &p);
        assert!((half.demand[0] - phi / 2.0).abs() < 1e-15);
        assert_eq!(half.supply[0], phi);
    }

    #[test]
    fn face_flux_examples() {
        let p = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 100.0);
        let phi = p.phi_max(0);
        let empty = cell_demand_supply(&[0.0; 4], &p);
        let crit = cell_demand_supply(&[p.rho_crit[0]; 4], &p);
        let jam = cell_demand_supply(&[RM; 4], &p);
        assert_eq!(face_fluxes(&empty, &empty), ([0.0; 4], [0.0; 4]));
        assert_eq!(face_fluxes(&crit, &empty).0, [phi; 4]);
        let (r, l) = face_fluxes(&empty, &jam);
        assert_eq!(r, [0.0; 4]);
        assert_eq!(l, [phi; 4]);
    }

    #[test]
    fn mixing_examples() {
        let mut p = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 100.0);
        for x in 0..4 {
            p.alpha[x][x] = 1.0;
            p.beta[x][x] = 1.0;
        }
        let ds = cell_demand_supply(&[0.01, 0.02, 0.03, 0.04], &p);
        assert_eq!(mixing_update(&ds, &p), [0.0; 4]);

        let mut p = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 100.0);
        let (e, n) = (Dir::E.index(), Dir::N.index());
        p.alpha[e][n] = 1.0;
        p.beta[e][n] = 0.5;
        let mut rho = [0.0; 4];
        rho[e] = p.rho_crit[e];
        let ds = cell_demand_supply(&rho, &p);
        let m = mixing_update(&ds, &p);
        let phi = p.phi_max(e).min(0.5 * p.phi_max(n));
        assert!((m[n] - phi / 100.0).abs() < 1e-15);
        assert!((m[e] + phi / 100.0).abs() < 1e-15);
        assert_eq!(m.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn io_examples() {
        let p = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 100.0);
        let io = IoValues {
            source: [0.1; 4],
            sink: [f64::INFINITY; 4],
        };
        let (s, k) = io_fluxes(&cell_demand_supply(&[0.0; 4], &p), &io);
        assert_eq!((s, k), ([0.1; 4], [0.0; 4]));
        let (s, k) = io_fluxes(&cell_demand_supply(&[RM; 4], &p), &io);
        assert_eq!(s, [0.0; 4]);
        assert_eq!(k, [p.phi_max(0); 4]);
    }

    fn uniform_fields(g: Grid, cos_e: f64) -> GridFields {
        let mut c = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 100.0);
        c.cos_bar = [0.0, cos_e, -cos_e, 0.0];
        c.sin_bar = [cos_e, 0.0, 0.0, -cos_e];
        GridFields::uniform(g, c, DEFAULT_GAMMA)
    }

    #[test]
    fn zero_state_stays_zero() {
        let f = uniform_fields(grid(6, 5), 1.0);
        let io = IoField::empty();
        for scheme in [Scheme::Split, Scheme::Unsplit] {
            let mut sim = Simulation::new(&f, &io, plan(0.5, 2, scheme), seq());
            for _ in 0..5 {
                sim.step().unwrap();
            }
            assert!(sim.state().rho.iter().all(|r| r == &[0.0; 4]));
            assert_eq!(sim.time(), 2.5);
        }
    }

    #[test]
    fn uniform_interior_has_no_advective_change() {
        let g = grid(8, 8);
        let f = uniform_fields(g, 0.6);
        let io = IoField::empty();
        let mut state = DensityState::zeros(g);
        for (i, j) in g.interior() {
            *state.at_mut(i, j) = [0.01; 4];
        }
        let mut sim =
            Simulation::new(&f, &io, plan(0.5, 1, Scheme::Unsplit), seq()).with_state(state);
        sim.step().unwrap();
        // cells two away from the edge see identical neighbours
        for j in 3..7 {
            for i in 3..7 {
                assert_eq!(sim.state().at(i, j), &[0.01; 4]);
            }
        }
        assert!(sim.state().ghosts_are_zero());
    }

    fn io_field(g: &Grid, i: usize, j: usize, v: IoValues) -> IoField {
        IoField {
            minutes: 1,
            cells: vec![IoCell {
                index: g.idx(i, j),
                i,
                j,
                minutes: vec![v],
            }],
        }
    }

    #[test]
    fn single_cell_injection() {
        let g = grid(3, 3);
        let f = uniform_fields(g, 0.0);
        let io = io_field(
            &g,
            2,
            2,
            IoValues {
                source: [1e-3, 0.0, 0.0, 0.0],
                sink: [0.0; 4],
            },
        );
        let mut sim = Simulation::new(&f, &io, plan(2.0, 1, Scheme::Unsplit), seq());
        sim.step().unwrap();
        assert!((sim.state().at(2, 2)[0] - 2.0 * 1e-3 / 100.0).abs() < 1e-18);
        assert_eq!(sim.state().at(2, 2)[1], 0.0);
        let b = sim.budget();
        assert!((b.injected - 2.0 * 400.0 * 1e-3 / 100.0).abs() < 1e-15);
        assert!((sim.state().total_vehicles() - b.expected_total()).abs() < 1e-15);
    }

    #[test]
    fn split_with_one_subcycle_and_no_transport_matches_unsplit() {
        let g = grid(3, 3);
        let f = uniform_fields(g, 0.0);
        let io = io_field(
            &g,
            2,
            2,
            IoValues {
                source: [1e-3, 2e-3, 0.0, 0.0],
                sink: [0.0, 0.0, 1.0, 0.0],
            },
        );
        let mut a = Simulation::new(&f, &io, plan(2.0, 1, Scheme::Unsplit), seq());
        let mut b = Simulation::new(&f, &io, plan(2.0, 1, Scheme::Split), seq());
        for _ in 0..20 {
            a.step().unwrap();
            b.step().unwrap();
        }
        assert_eq!(a.state().rho, b.state().rho);
    }

    #[test]
    fn split_equals_unsplit_without_io() {
        let g = grid(10, 6);
        let f = uniform_fields(g, 0.8);
        let io = IoField::empty();
        let mut state = DensityState::zeros(g);
        *state.at_mut(4, 3) = [0.02, 0.03, 0.01, 0.0];
        let mut a = Simulation::new(&f, &io, plan(0.5, 3, Scheme::Unsplit), seq())
            .with_state(state.clone());
        let mut b = Simulation::new(&f, &io, plan(0.5, 3, Scheme::Split), seq()).with_state(state);
        for _ in 0..30 {
            a.step().unwrap();
            b.step().unwrap();
        }
        assert_eq!(a.state().rho, b.state().rho);
        assert_eq!(a.stats().rhs_evaluations(), 30 * 3);
        assert_eq!(b.stats().rhs_evaluations(), 30 * (2 + 3));
    }

    #[test]
    fn budget_closes_with_boundary_outflow() {
        let g = grid(6, 4);
        let f = uniform_fields(g, 1.0);
        let io = io_field(
            &g,
            5,
            2,
            IoValues {
                source: [0.0, 5e-3, 0.0, 0.0],
                sink: [0.0; 4],
            },
        );
        let mut sim = Simulation::new(&f, &io, plan(1.0, 2, Scheme::Split), seq());
        for _ in 0..200 {
            sim.step().unwrap();
        }
        let b = *sim.budget();
        assert!(b.boundary_outflow > 0.0);
        let total = sim.state().total_vehicles();
        assert!((total - b.expected_total()).abs() <= 1e-12 * b.injected);
    }

    #[test]
    fn closed_boundary_keeps_everything() {
        let g = grid(6, 4);
        let f = uniform_fields(g, 1.0);
        let io = io_field(
            &g,
            5,
            2,
            IoValues {
                source: [0.0, 5e-3, 0.0, 0.0],
                sink: [0.0; 4],
            },
        );
        let opts = SolverOptions {
            boundary: BoundaryMode::Closed,
            ..seq()
        };
        let mut sim = Simulation::new(&f, &io, plan(1.0, 1, Scheme::Unsplit), opts);
        for _ in 0..200 {
            sim.step().unwrap();
        }
        assert_eq!(sim.budget().boundary_outflow, 0.0);
        let total = sim.state().total_vehicles();
        assert!((total - sim.budget().injected).abs() <= 1e-12 * total);
    }

    #[test]
    fn violation_reports_cell_and_direction() {
        let g = grid(4, 4);
        let f = uniform_fields(g, 1.0);
        let io = IoField::empty();
        let mut state = DensityState::zeros(g);
        *state.at_mut(2, 2) = [0.0, 0.1, 0.0, 0.0];
        // far beyond the advective restriction
        let strict = StepPlan::fixed(10.0, 1, 1, true, Scheme::Unsplit);
        let mut sim = Simulation::new(&f, &io, strict, seq()).with_state(state.clone());
        match sim.step() {
            Err(Error::BoundViolation { i, j, what, t, .. }) => {
                assert_eq!((i, j), (2, 2));
                assert_eq!(what, BoundTarget::Partial(Dir::E));
                assert_eq!(t, 10.0);
            }
            other => panic!("expected a violation, got {other:?}"),
        }
        let opts = SolverOptions {
            on_violation: ViolationPolicy::Clamp,
            ..seq()
        };
        let mut sim = Simulation::new(&f, &io, strict, opts).with_state(state);
        sim.step().unwrap();
        assert!(sim.state().rho.iter().flatten().all(|&v| v >= 0.0));
        assert!(sim.stats().clamp_events > 0);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let g = grid(17, 13);
        let mut c = CellParams::uniform(10.0, RM, DEFAULT_GAMMA, 80.0);
        c.cos_bar = [0.1, 0.9, -0.8, -0.2];
        c.sin_bar = [0.9, 0.2, 0.1, -0.9];
        c.alpha = [
            [0.6, 0.2, 0.2, 0.0],
            [0.2, 0.6, 0.0, 0.2],
            [0.2, 0.0, 0.6, 0.2],
            [0.0, 0.2, 0.2, 0.6],
        ];
        c.beta = c.alpha;
        let f = GridFields::uniform(g, c, DEFAULT_GAMMA);
        let io = io_field(
            &g,
            9,
            7,
            IoValues {
                source: [1e-3; 4],
                sink: [0.0; 4],
            },
        );
        let mut a = Simulation::new(&f, &io, plan(0.5, 2, Scheme::Split), seq());
        let par = SolverOptions {
            parallel: true,
            ..seq()
        };
        let mut b = Simulation::new(&f, &io, plan(0.5, 2, Scheme::Split), par);
        for _ in 0..100 {
            a.step().unwrap();
            b.step().unwrap();
        }
        assert_eq!(a.state().rho, b.state().rho);
        assert_eq!(a.budget(), b.budget());
    }
}
