//! Bilinear (triangular) fundamental diagram with its demand/supply split.
//!
//! All relations are linear in the density, so the same functions serve 1d
//! densities (veh/m) and the solver's 2d densities.

/// Default ratio `rho_crit / rho_max`.
pub const DEFAULT_GAMMA: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdParams {
    pub v_max: f64,
    pub rho_max: f64,
    pub gamma: f64,
}

impl FdParams {
    pub fn new(v_max: f64, rho_max: f64, gamma: f64) -> Self {
        debug_assert!(gamma > 0.0 && gamma < 1.0);
        debug_assert!(v_max > 0.0 && rho_max > 0.0);
        FdParams {
            v_max,
            rho_max,
            gamma,
        }
    }

    #[inline]
    pub fn rho_crit(&self) -> f64 {
        self.gamma * self.rho_max
    }

    /// Magnitude of the congested-branch slope.
    #[inline]
    pub fn wave_speed(&self) -> f64 {
        // v_max * gamma / (1 - gamma), written so gamma = 1/3 gives v_max / 2 exactly
        self.v_max / (1.0 / self.gamma - 1.0)
    }

    #[inline]
    pub fn phi_max(&self) -> f64 {
        self.v_max * self.rho_crit()
    }

    #[inline]
    pub fn flux(&self, rho: f64) -> f64 {
        flux(rho, self.v_max, self.rho_crit(), self.rho_max)
    }

    #[inline]
    pub fn demand(&self, rho: f64) -> f64 {
        demand(rho, self.v_max, self.rho_crit())
    }

    #[inline]
    pub fn supply(&self, rho: f64) -> f64 {
        supply(rho, self.v_max, self.rho_crit(), self.rho_max)
    }

    #[inline]
    pub fn demand_deriv(&self, rho: f64) -> f64 {
        demand_deriv(rho, self.v_max, self.rho_crit())
    }

    #[inline]
    pub fn supply_deriv(&self, rho: f64) -> f64 {
        supply_deriv(rho, self.v_max, self.rho_crit(), self.rho_max)
    }
}

// The free functions take rho_crit explicitly so rasterized fields with their
// own critical density can call them without building an `FdParams`.

#[inline]
pub fn flux(rho: f64, v_max: f64, rho_crit: f64, rho_max: f64) -> f64 {
    if rho <= rho_crit {
        v_max * rho
    } else {
        v_max * rho_crit * (rho_max - rho) / (rho_max - rho_crit)
    }
}

#[inline]
pub fn demand(rho: f64, v_max: f64, rho_crit: f64) -> f64 {
    if rho < 0.0 {
        0.0
    } else if rho <= rho_crit {
        v_max * rho
    } else {
        v_max * rho_crit
    }
}

#[inline]
pub fn supply(rho: f64, v_max: f64, rho_crit: f64, rho_max: f64) -> f64 {
    if (0.0..=rho_crit).contains(&rho) {
        v_max * rho_crit
    } else if rho > rho_crit && rho <= rho_max {
        v_max * rho_crit * (rho_max - rho) / (rho_max - rho_crit)
    } else {
        0.0
    }
}

#[inline]
pub fn demand_deriv(rho: f64, v_max: f64, rho_crit: f64) -> f64 {
    if (0.0..=rho_crit).contains(&rho) {
        v_max
    } else {
        0.0
    }
}

#[inline]
pub fn supply_deriv(rho: f64, v_max: f64, rho_crit: f64, rho_max: f64) -> f64 {
    if rho > rho_crit && rho <= rho_max {
        -v_max * rho_crit / (rho_max - rho_crit)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> FdParams {
        FdParams::new(12.0, 1.0 / 6.0, DEFAULT_GAMMA)
    }

    #[test]
    fn flux_examples() {
        let p = p();
        assert_eq!(p.flux(0.0), 0.0);
        assert!((p.flux(p.rho_crit()) - 2.0 / 3.0).abs() < 1e-15);
        assert!(p.flux(p.rho_max).abs() < 1e-15);
    }

    #[test]
    fn demand_supply_examples() {
        let p = p();
        let phi_max = p.phi_max();
        assert_eq!(p.demand(0.0), 0.0);
        assert_eq!(p.supply(0.0), phi_max);
        assert_eq!(p.demand(p.rho_max), phi_max);
        assert_eq!(p.supply(p.rho_max), 0.0);
        let half = p.rho_crit() / 2.0;
        assert!((p.demand(half) - phi_max / 2.0).abs() < 1e-15);
        assert_eq!(p.supply(half), phi_max);
        assert_eq!(p.supply(-1e-9), 0.0);
        assert_eq!(p.supply(p.rho_max * 1.01), 0.0);
        assert_eq!(p.demand(-1.0), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let p = p();
        let r = p.rho_crit() / 2.0;
        assert_eq!((p.demand_deriv(r), p.supply_deriv(r)), (p.v_max, 0.0));
        let r = (p.rho_crit() + p.rho_max) / 2.0;
        assert_eq!(p.demand_deriv(r), 0.0);
        assert!((p.supply_deriv(r) + p.wave_speed()).abs() < 1e-12);
        assert_eq!((p.demand_deriv(-1.0), p.supply_deriv(-1.0)), (0.0, 0.0));
        // left branch at the breakpoint
        assert_eq!(p.demand_deriv(p.rho_crit()), p.v_max);
        assert_eq!(p.supply_deriv(p.rho_crit()), 0.0);
    }

    #[test]
    fn continuity_and_wave_speed() {
        for &gamma in &[0.1, 0.25, DEFAULT_GAMMA, 0.5, 0.9] {
            let p = FdParams::new(15.0, 0.5, gamma);
            let lhs = p.v_max * p.rho_crit();
            let rhs = p.wave_speed() * (p.rho_max - p.rho_crit());
            assert!((lhs - rhs).abs() < 1e-9);
        }
        let p = p();
        assert_eq!(p.wave_speed(), p.v_max / 2.0);
    }
}
