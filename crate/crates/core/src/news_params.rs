//! Per-intersection parameters of the four-direction (N, E, W, S) model:
//! averaged trig terms, densities, speeds, the length scale and the cardinal
//! turning/supply ratios.

use log::debug;

use crate::direction::{Dir, DirMatrix, PerDir};
use crate::error::{Error, Result};
use crate::network::{projection_coeffs, street_trig, StreetNetwork};

/// Guard for denominators of projected capacity sums.
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NewsParams {
    pub cos_bar: PerDir<f64>,
    pub sin_bar: PerDir<f64>,
    pub v_max: PerDir<f64>,
    pub rho_max: PerDir<f64>,
    pub rho_crit: PerDir<f64>,
    /// Length scale of the mixing and io terms, meters.
    pub length: f64,
    /// `alpha[from][to]`, demand-side turning ratios.
    pub alpha: DirMatrix,
    /// `beta[from][to]`, supply-side ratios.
    pub beta: DirMatrix,
}

/// Network-wide fallbacks used where an intersection has no street projecting
/// onto a direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkMeans {
    pub v_max: f64,
    pub rho_max: f64,
    pub rho_crit: f64,
    pub length: f64,
}

impl NetworkMeans {
    pub fn of(net: &StreetNetwork, gamma: f64) -> Self {
        let n = net.streets.len().max(1) as f64;
        let v_max = net.streets.iter().map(|s| s.v_max).sum::<f64>() / n;
        let rho_max = net.streets.iter().map(|s| s.rho_max()).sum::<f64>() / n;
        let rho_crit = net.streets.iter().map(|s| s.rho_crit(gamma)).sum::<f64>() / n;
        let weight: f64 = net.streets.iter().map(|s| s.rho_max()).sum();
        let length = if weight > 0.0 {
            net.streets
                .iter()
                .map(|s| s.rho_max() * s.length)
                .sum::<f64>()
                / weight
        } else {
            1.0
        };
        if net.streets.is_empty() {
            // single-intersection networks: keep the aggregates finite and inert
            return NetworkMeans {
                v_max: 1.0,
                rho_max: 1.0 / crate::network::JAM_SPACING_M,
                rho_crit: gamma / crate::network::JAM_SPACING_M,
                length,
            };
        }
        NetworkMeans {
            v_max,
            rho_max,
            rho_crit,
            length,
        }
    }
}

fn proj(net: &StreetNetwork, street: usize) -> PerDir<f64> {
    // directions are validated nonzero at construction
    projection_coeffs(net.streets[street].direction).expect("validated street direction")
}

/// Supply ratios `beta[a][b]` for incoming street `a` and outgoing street
/// `b` at intersection `k` (indices into the node's incoming/outgoing lists).
/// Columns without any feeder stay zero.
pub fn supply_ratios(net: &StreetNetwork, k: usize, gamma: f64) -> Vec<Vec<f64>> {
    let t = &net.turning.nodes[k];
    let cap_in: Vec<f64> = t
        .incoming
        .iter()
        .map(|&i| net.streets[i].phi_max(gamma))
        .collect();
    let mut beta = vec![vec![0.0; t.outgoing.len()]; t.incoming.len()];
    for b in 0..t.outgoing.len() {
        let total: f64 = (0..t.incoming.len())
            .map(|a| t.alpha[a][b] * cap_in[a])
            .sum();
        if total <= 0.0 {
            continue;
        }
        for a in 0..t.incoming.len() {
            beta[a][b] = t.alpha[a][b] * cap_in[a] / total;
        }
    }
    beta
}

/// Aggregate street-level ratios onto cardinal pairs. Rows (for `alpha`) or
/// columns (for `beta`) whose projected capacity falls below `eps` are zero.
pub fn cardinal_turning(
    net: &StreetNetwork,
    k: usize,
    beta_streets: &[Vec<f64>],
    gamma: f64,
    eps: f64,
) -> (DirMatrix, DirMatrix) {
    let t = &net.turning.nodes[k];
    let p_in: Vec<PerDir<f64>> = t.incoming.iter().map(|&i| proj(net, i)).collect();
    let p_out: Vec<PerDir<f64>> = t.outgoing.iter().map(|&j| proj(net, j)).collect();
    let cap_in: Vec<f64> = t
        .incoming
        .iter()
        .map(|&i| net.streets[i].phi_max(gamma))
        .collect();
    let cap_out: Vec<f64> = t
        .outgoing
        .iter()
        .map(|&j| net.streets[j].phi_max(gamma))
        .collect();

    let mut alpha = [[0.0; 4]; 4];
    let mut beta = [[0.0; 4]; 4];
    for x in Dir::ALL {
        let xi = x.index();
        let den_in: f64 = (0..t.incoming.len()).map(|a| p_in[a][xi] * cap_in[a]).sum();
        for y in Dir::ALL {
            let yi = y.index();
            if den_in >= eps {
                let num: f64 = (0..t.outgoing.len())
                    .map(|b| {
                        p_out[b][yi]
                            * (0..t.incoming.len())
                                .map(|a| t.alpha[a][b] * p_in[a][xi] * cap_in[a])
                                .sum::<f64>()
                    })
                    .sum();
                alpha[xi][yi] = num / den_in;
            }
            let den_out: f64 = (0..t.outgoing.len())
                .map(|b| p_out[b][yi] * cap_out[b])
                .sum();
            if den_out >= eps {
                let num: f64 = (0..t.incoming.len())
                    .map(|a| {
                        p_in[a][xi]
                            * (0..t.outgoing.len())
                                .map(|b| beta_streets[a][b] * p_out[b][yi] * cap_out[b])
                                .sum::<f64>()
                    })
                    .sum();
                beta[xi][yi] = num / den_out;
            }
        }
    }
    (alpha, beta)
}

/// Trig, density, speed and length aggregates at intersection `k`.
pub fn cardinal_aggregates(
    net: &StreetNetwork,
    k: usize,
    gamma: f64,
    eps: f64,
    means: &NetworkMeans,
) -> (
    PerDir<f64>,
    PerDir<f64>,
    PerDir<f64>,
    PerDir<f64>,
    PerDir<f64>,
    f64,
) {
    let t = &net.turning.nodes[k];
    let mut cos_bar = [0.0; 4];
    let mut sin_bar = [0.0; 4];
    let mut v_max = [means.v_max; 4];
    let mut rho_max = [means.rho_max; 4];
    let mut rho_crit = [means.rho_crit; 4];

    for x in Dir::ALL {
        let xi = x.index();
        let (mut num_c, mut num_s, mut den) = (0.0, 0.0, 0.0);
        for &j in &t.outgoing {
            let s = &net.streets[j];
            let (c, sn) = street_trig(s.direction).expect("validated street direction");
            let w = proj(net, j)[xi] * s.phi_max(gamma);
            num_c += w * c;
            num_s += w * sn;
            den += w;
        }
        if den >= eps {
            cos_bar[xi] = num_c / den;
            sin_bar[xi] = num_s / den;
        }

        let (mut rm, mut rc, mut flow) = (0.0, 0.0, 0.0);
        for &s in t.incoming.iter().chain(t.outgoing.iter()) {
            let st = &net.streets[s];
            let p = proj(net, s)[xi];
            rm += p * st.rho_max();
            rc += p * st.rho_crit(gamma);
            flow += p * st.v_max * st.rho_crit(gamma);
        }
        if rm >= eps {
            rho_max[xi] = rm;
        }
        if rc >= eps {
            rho_crit[xi] = rc;
            v_max[xi] = flow / rc;
        } else {
            debug!(
                "intersection {}: no street projects onto {x}, using network means",
                net.intersections[k].id
            );
        }
    }

    let (num, den) = t.outgoing.iter().fold((0.0, 0.0), |(n, d), &j| {
        let s = &net.streets[j];
        (n + s.rho_max() * s.length, d + s.rho_max())
    });
    let length = if den >= eps { num / den } else { means.length };

    (cos_bar, sin_bar, v_max, rho_max, rho_crit, length)
}

/// Project per-street source demand and sink supply (veh/s) at intersection
/// `k` onto the cardinal directions. Sources count only at entry
/// intersections and sinks only at exits. Infinite sink values mark an
/// unbounded outside world and stay infinite on every direction they touch.
pub fn project_io_demand(
    net: &StreetNetwork,
    k: usize,
    source: &[(usize, f64)],
    sink: &[(usize, f64)],
) -> Result<(PerDir<f64>, PerDir<f64>)> {
    let node = &net.intersections[k];
    let touches = |s: usize| net.streets[s].from == k || net.streets[s].to == k;
    let mut d = [0.0; 4];
    let mut sup = [0.0; 4];
    for (list, out, active) in [
        (source, &mut d, node.is_entry),
        (sink, &mut sup, node.is_exit),
    ] {
        if !active {
            continue;
        }
        for &(s, value) in list {
            if !touches(s) {
                return Err(Error::Validation(format!(
                    "street {} is not attached to intersection {}",
                    net.streets[s].id, node.id
                )));
            }
            let p = proj(net, s);
            for x in 0..4 {
                if p[x] > 0.0 {
                    out[x] += p[x] * value;
                }
            }
        }
    }
    Ok((d, sup))
}

/// Compile parameters for every intersection.
pub fn compile(net: &StreetNetwork, gamma: f64, eps: f64) -> Vec<NewsParams> {
    let means = NetworkMeans::of(net, gamma);
    (0..net.intersections.len())
        .map(|k| {
            let beta_streets = supply_ratios(net, k, gamma);
            let (alpha, beta) = cardinal_turning(net, k, &beta_streets, gamma, eps);
            let (cos_bar, sin_bar, v_max, rho_max, rho_crit, length) =
                cardinal_aggregates(net, k, gamma, eps, &means);
            NewsParams {
                cos_bar,
                sin_bar,
                v_max,
                rho_max,
                rho_crit,
                length,
                alpha,
                beta,
            }
        })
        .collect()
}

/// Tab-separated per-intersection dump, one row per intersection.
pub fn dump_table(net: &StreetNetwork, params: &[NewsParams]) -> String {
    use std::fmt::Write;
    let mut out = String::from("id\tx\ty\tL");
    for kind in ["cos", "sin", "vmax", "rhomax", "rhocrit"] {
        for d in Dir::ALL {
            let _ = write!(out, "\t{kind}_{d}");
        }
    }
    for kind in ["alpha", "beta"] {
        for a in Dir::ALL {
            for b in Dir::ALL {
                let _ = write!(out, "\t{kind}_{a}{b}");
            }
        }
    }
    out.push('\n');
    for (node, p) in net.intersections.iter().zip(params) {
        let _ = write!(out, "{}\t{}\t{}\t{}", node.id, node.x, node.y, p.length);
        for arr in [&p.cos_bar, &p.sin_bar, &p.v_max, &p.rho_max, &p.rho_crit] {
            for v in arr {
                let _ = write!(out, "\t{v}");
            }
        }
        for m in [&p.alpha, &p.beta] {
            for row in m {
                for v in row {
                    let _ = write!(out, "\t{v}");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::fd::DEFAULT_GAMMA;

    const G: f64 = DEFAULT_GAMMA;

    fn parse(text: &str) -> StreetNetwork {
        StreetNetwork::parse(text, Path::new("t.net")).unwrap()
    }

    fn cross(turning: &str) -> StreetNetwork {
        parse(&format!(
            "[intersections]
C 0 0 0 0
n 0 100 1 1
e 100 0 1 1
w -100 0 1 1
s 0 -100 1 1
[streets]
Cn C n 100 1 10
nC n C 100 1 10
Ce C e 100 1 10
eC e C 100 1 10
Cw C w 100 1 10
wC w C 100 1 10
Cs C s 100 1 10
sC s C 100 1 10
{turning}"
        ))
    }

    #[test]
    fn beta_single_feeder() {
        let net = parse("[intersections]\na 0 0 0 0\nb 1 0 0 0\nc 2 0 0 0\n[streets]\nab a b 1 1 10\nbc b c 1 1 10\n");
        let beta = supply_ratios(&net, 1, G);
        assert_eq!(beta, vec![vec![1.0]]);
    }

    fn merge(phi2: &str) -> StreetNetwork {
        parse(&format!(
            "[intersections]\na 0 1 0 0\nb 0 -1 0 0\nm 1 0 0 0\nz 2 0 0 0\n[streets]\nam a m 1 1 10 {}\nbm b m 1 1 10 {}\nmz m z 1 1 10\n",
            "1.0", phi2
        ))
    }

    #[test]
    fn beta_two_feeders() {
        let net = merge("1.0");
        let m = net.intersection_index("m").unwrap();
        let beta = supply_ratios(&net, m, G);
        assert_eq!(beta, vec![vec![0.5], vec![0.5]]);

        // capacity ratio 2:1 with alpha 1 each: here both feeders turn fully,
        // giving beta = phi_i / sum phi
        let net = merge("0.5");
        let beta = supply_ratios(&net, m, G);
        assert!((beta[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((beta[1][0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn beta_with_split_alpha() {
        // a and b each send half to z and half to y; capacity 2:1
        let net = parse(
            "[intersections]\na 0 1 0 0\nb 0 -1 0 0\nm 1 0 0 0\nz 2 0 0 0\ny 1 2 0 0\n[streets]\nam a m 1 1 10 2.0\nbm b m 1 1 10 1.0\nmz m z 1 1 10\nmy m y 1 1 10\n[turning m]\nam mz 0.5\nam my 0.5\nbm mz 0.5\nbm my 0.5\n",
        );
        let m = net.intersection_index("m").unwrap();
        let beta = supply_ratios(&net, m, G);
        for b in 0..2 {
            assert!((beta[0][b] - 2.0 / 3.0).abs() < 1e-15);
            assert!((beta[1][b] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_through_traffic() {
        let net = cross("[turning C]\nnC Cs 1\nsC Cn 1\neC Cw 1\nwC Ce 1\n");
        let c = net.intersection_index("C").unwrap();
        let bs = supply_ratios(&net, c, G);
        let (alpha, _) = cardinal_turning(&net, c, &bs, G, DEFAULT_EPS);
        let (e, n) = (Dir::E.index(), Dir::N.index());
        assert_eq!(alpha[e][e], 1.0);
        assert_eq!(alpha[e][n], 0.0);
    }

    #[test]
    fn cross_uniform_thirds() {
        let net = cross("");
        let c = net.intersection_index("C").unwrap();
        let bs = supply_ratios(&net, c, G);
        let (alpha, beta) = cardinal_turning(&net, c, &bs, G, DEFAULT_EPS);
        let (e, n) = (Dir::E.index(), Dir::N.index());
        assert!((alpha[e][n] - 1.0 / 3.0).abs() < 1e-15);
        // U-turn pair never used
        assert_eq!(alpha[e][Dir::W.index()], 0.0);
        for x in 0..4 {
            let row: f64 = alpha[x].iter().sum();
            assert!((row - 1.0).abs() < 1e-12);
            let col: f64 = (0..4).map(|y| beta[y][x]).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eastbound_only_has_empty_north_row() {
        let net = parse("[intersections]\na 0 0 0 0\nb 1 0 0 0\nc 2 0 0 0\n[streets]\nab a b 1 1 10\nbc b c 1 1 10\n");
        let bs = supply_ratios(&net, 1, G);
        let (alpha, _) = cardinal_turning(&net, 1, &bs, G, DEFAULT_EPS);
        assert_eq!(alpha[Dir::N.index()], [0.0; 4]);
        assert_eq!(alpha[Dir::E.index()][Dir::E.index()], 1.0);
    }

    #[test]
    fn aggregates_single_north_street() {
        let net = parse("[intersections]\na 0 0 0 0\nb 0 100 0 0\n[streets]\nab a b 100 1 10\n");
        let means = NetworkMeans::of(&net, G);
        let (c, s, v, rm, rc, l) = cardinal_aggregates(&net, 0, G, DEFAULT_EPS, &means);
        let n = Dir::N.index();
        assert_eq!((c[n], s[n]), (0.0, 1.0));
        assert!((l - 100.0).abs() < 1e-12);
        assert!((v[n] - 10.0).abs() < 1e-12);
        assert!((rm[n] - 1.0 / 6.0).abs() < 1e-15);
        assert!((rc[n] - G / 6.0).abs() < 1e-15);
        // nothing projects east: network means
        assert_eq!(c[Dir::E.index()], 0.0);
        assert_eq!(v[Dir::E.index()], means.v_max);
    }

    #[test]
    fn aggregates_symmetric_diagonals() {
        let net = parse("[intersections]\na 0 0 0 0\nb 1 1 0 0\nc -1 1 0 0\n[streets]\nab a b 1.5 1 10\nac a c 1.5 1 10\n");
        let means = NetworkMeans::of(&net, G);
        let (c, s, ..) = cardinal_aggregates(&net, 0, G, DEFAULT_EPS, &means);
        let n = Dir::N.index();
        assert!(c[n].abs() < 1e-15);
        assert!((s[n] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn length_scale_weighted_by_lanes() {
        let net = parse("[intersections]\na 0 0 0 0\nb 100 0 0 0\nc 0 200 0 0\n[streets]\nab a b 100 1 10\nac a c 200 2 10\n");
        let means = NetworkMeans::of(&net, G);
        let (.., l) = cardinal_aggregates(&net, 0, G, DEFAULT_EPS, &means);
        assert!((l - 500.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn io_projection() {
        let net = parse("[intersections]\na 0 0 1 1\nb 0 1 0 0\nc 1 1 0 0\nd 5 5 0 0\n[streets]\nab a b 1 1 10\nac a c 1.5 1 10\nda d a 7 1 10\nbc b c 1 1 10\n");
        let (d, _) = project_io_demand(&net, 0, &[(0, 600.0)], &[]).unwrap();
        assert_eq!(d, [600.0, 0.0, 0.0, 0.0]);
        let (d, _) = project_io_demand(&net, 0, &[(1, 1.0)], &[]).unwrap();
        assert_eq!(d, [0.5, 0.5, 0.0, 0.0]);
        let (_, s) = project_io_demand(&net, 0, &[], &[(2, f64::INFINITY)]).unwrap();
        assert_eq!(s, [0.0, 0.0, f64::INFINITY, f64::INFINITY]);
        // b is neither entry nor exit
        let (d, s) = project_io_demand(&net, 1, &[(0, 3.0)], &[(0, 3.0)]).unwrap();
        assert_eq!((d, s), ([0.0; 4], [0.0; 4]));
        assert!(project_io_demand(&net, 0, &[(2, 1.0), (0, 1.0)], &[]).is_ok());
        assert!(project_io_demand(&net, 0, &[(3, 1.0)], &[]).is_err());
    }
}
