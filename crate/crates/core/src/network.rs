//! Street network description: intersections, directed streets and
//! per-intersection turning ratios, plus the text format they are read from.
//!
//! ```text
//! # comment
//! [intersections]
//! # id   x      y     entry exit
//! A      0.0    0.0   1     0
//! B      100.0  0.0   0     1
//! [streets]
//! # id   from to  length lanes vmax [phimax]
//! ab     A    B   100    1     13.9
//! [turning B]
//! # in   out  alpha
//! ab     ba   1.0
//! ```
//!
//! Streets are directed; a two-way road is two records. Intersections without
//! a `[turning k]` section get uniform ratios over the non-U-turn exits (the
//! U-turn is used only when it is the sole option).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::direction::PerDir;
use crate::error::{Error, Result};

/// Space one vehicle occupies in a jam, per lane.
pub const JAM_SPACING_M: f64 = 6.0;

/// Tolerance on turning-ratio row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub is_entry: bool,
    pub is_exit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Street {
    pub id: String,
    /// Index into [`StreetNetwork::intersections`].
    pub from: usize,
    pub to: usize,
    /// Meters.
    pub length: f64,
    pub lanes: u32,
    /// Meters per second.
    pub v_max: f64,
    /// Capacity override in veh/s; `None` derives `v_max * rho_crit`.
    pub phi_max_override: Option<f64>,
    /// `to.position - from.position`.
    pub direction: (f64, f64),
}

impl Street {
    /// Jam density in veh/m.
    pub fn rho_max(&self) -> f64 {
        self.lanes as f64 / JAM_SPACING_M
    }

    pub fn rho_crit(&self, gamma: f64) -> f64 {
        gamma * self.rho_max()
    }

    /// Capacity in veh/s.
    pub fn phi_max(&self, gamma: f64) -> f64 {
        self.phi_max_override
            .unwrap_or_else(|| self.v_max * self.rho_crit(gamma))
    }
}

/// Turning ratios at one intersection. `alpha[a][b]` is the share of traffic
/// arriving on `incoming[a]` that leaves on `outgoing[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTurning {
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub alpha: Vec<Vec<f64>>,
    /// Whether the ratios came from the file rather than the uniform default.
    pub explicit: bool,
}

impl NodeTurning {
    pub fn alpha_for(&self, in_street: usize, out_street: usize) -> f64 {
        let a = self.incoming.iter().position(|&s| s == in_street);
        let b = self.outgoing.iter().position(|&s| s == out_street);
        match (a, b) {
            (Some(a), Some(b)) => self.alpha[a][b],
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurningTable {
    /// One entry per intersection, same order as the intersections.
    pub nodes: Vec<NodeTurning>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreetNetwork {
    pub intersections: Vec<Intersection>,
    pub streets: Vec<Street>,
    pub turning: TurningTable,
    pub bounding_box: BoundingBox,
}

/// `(cos θ, sin θ)` of a street direction, θ measured from east.
pub fn street_trig(direction: (f64, f64)) -> Result<(f64, f64)> {
    let (xi, eta) = direction;
    let norm = xi.hypot(eta);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Validation(format!(
            "direction ({xi}, {eta}) has no usable norm"
        )));
    }
    Ok((xi / norm, eta / norm))
}

/// Weights distributing a street direction onto the four cardinal directions,
/// in `Dir` order. West and south are returned as magnitudes so the four
/// weights are nonnegative and sum to one.
pub fn projection_coeffs(direction: (f64, f64)) -> Result<PerDir<f64>> {
    let (xi, eta) = direction;
    let l1 = xi.abs() + eta.abs();
    if !(l1 > 0.0) || !l1.is_finite() {
        return Err(Error::Validation(format!(
            "direction ({xi}, {eta}) has no usable norm"
        )));
    }
    Ok([
        eta.max(0.0) / l1,
        xi.max(0.0) / l1,
        -xi.min(0.0) / l1,
        -eta.min(0.0) / l1,
    ])
}

impl StreetNetwork {
    /// Assemble and validate a network. `turning` holds explicit rows
    /// `(intersection, in street, out street, alpha)` by index; intersections
    /// that never appear get the uniform default.
    pub fn new(
        intersections: Vec<Intersection>,
        mut streets: Vec<Street>,
        explicit_turning: &[(usize, usize, usize, f64)],
    ) -> Result<Self> {
        if intersections.is_empty() {
            return Err(Error::Validation("network has no intersections".into()));
        }
        let mut seen = HashMap::new();
        for (k, node) in intersections.iter().enumerate() {
            if !node.x.is_finite() || !node.y.is_finite() {
                return Err(Error::Validation(format!(
                    "intersection {} has a non-finite position",
                    node.id
                )));
            }
            if seen.insert(node.id.as_str(), k).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate intersection id {}",
                    node.id
                )));
            }
        }
        let mut street_ids = HashMap::new();
        for s in streets.iter_mut() {
            if street_ids.insert(s.id.clone(), ()).is_some() {
                return Err(Error::Validation(format!("duplicate street id {}", s.id)));
            }
            if s.from >= intersections.len() || s.to >= intersections.len() {
                return Err(Error::Validation(format!(
                    "street {} references a missing intersection",
                    s.id
                )));
            }
            if !(s.length > 0.0) || !s.length.is_finite() {
                return Err(Error::Validation(format!(
                    "street {} has non-positive length {}",
                    s.id, s.length
                )));
            }
            if s.lanes < 1 {
                return Err(Error::Validation(format!("street {} has no lanes", s.id)));
            }
            if !(s.v_max > 0.0) || !s.v_max.is_finite() {
                return Err(Error::Validation(format!(
                    "street {} has non-positive speed {}",
                    s.id, s.v_max
                )));
            }
            if let Some(phi) = s.phi_max_override {
                if !(phi > 0.0) || !phi.is_finite() {
                    return Err(Error::Validation(format!(
                        "street {} has non-positive capacity override {phi}",
                        s.id
                    )));
                }
            }
            let a = &intersections[s.from];
            let b = &intersections[s.to];
            s.direction = (b.x - a.x, b.y - a.y);
            if s.direction == (0.0, 0.0) {
                return Err(Error::Validation(format!(
                    "street {} joins coincident intersections",
                    s.id
                )));
            }
        }

        let mut nodes: Vec<NodeTurning> = (0..intersections.len())
            .map(|k| {
                let incoming: Vec<usize> =
                    (0..streets.len()).filter(|&s| streets[s].to == k).collect();
                let outgoing: Vec<usize> = (0..streets.len())
                    .filter(|&s| streets[s].from == k)
                    .collect();
                let alpha = vec![vec![0.0; outgoing.len()]; incoming.len()];
                NodeTurning {
                    incoming,
                    outgoing,
                    alpha,
                    explicit: false,
                }
            })
            .collect();

        for &(k, i, j, a) in explicit_turning {
            let node_id = &intersections[k].id;
            let t = &mut nodes[k];
            let ai = t.incoming.iter().position(|&s| s == i).ok_or_else(|| {
                Error::Validation(format!(
                    "turning at {node_id}: street {} does not end here",
                    streets[i].id
                ))
            })?;
            let bj = t.outgoing.iter().position(|&s| s == j).ok_or_else(|| {
                Error::Validation(format!(
                    "turning at {node_id}: street {} does not start here",
                    streets[j].id
                ))
            })?;
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Validation(format!(
                    "turning at {node_id}: ratio {a} for {} -> {} outside [0, 1]",
                    streets[i].id, streets[j].id
                )));
            }
            t.alpha[ai][bj] = a;
            t.explicit = true;
        }

        for (k, t) in nodes.iter_mut().enumerate() {
            if t.outgoing.is_empty() {
                continue;
            }
            if t.explicit {
                for (a, &i) in t.incoming.iter().enumerate() {
                    let sum: f64 = t.alpha[a].iter().sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(Error::Validation(format!(
                            "turning at {}: ratios for incoming street {} sum to {sum}, expected 1",
                            intersections[k].id, streets[i].id
                        )));
                    }
                }
            } else {
                for (a, &i) in t.incoming.iter().enumerate() {
                    let reverse = |j: usize| streets[j].to == streets[i].from;
                    let options: Vec<usize> = (0..t.outgoing.len())
                        .filter(|&b| !reverse(t.outgoing[b]))
                        .collect();
                    let options = if options.is_empty() {
                        (0..t.outgoing.len()).collect()
                    } else {
                        options
                    };
                    let share = 1.0 / options.len() as f64;
                    for b in options {
                        t.alpha[a][b] = share;
                    }
                }
            }
        }

        for node in intersections.iter() {
            let k = seen[node.id.as_str()];
            if node.is_entry && nodes[k].outgoing.is_empty() {
                return Err(Error::Validation(format!(
                    "entry intersection {} has no outgoing street",
                    node.id
                )));
            }
            if node.is_exit && nodes[k].incoming.is_empty() {
                return Err(Error::Validation(format!(
                    "exit intersection {} has no incoming street",
                    node.id
                )));
            }
        }

        let bounding_box = intersections.iter().fold(
            BoundingBox {
                min_x: f64::INFINITY,
                min_y: f64::INFINITY,
                max_x: f64::NEG_INFINITY,
                max_y: f64::NEG_INFINITY,
            },
            |b, n| BoundingBox {
                min_x: b.min_x.min(n.x),
                min_y: b.min_y.min(n.y),
                max_x: b.max_x.max(n.x),
                max_y: b.max_y.max(n.y),
            },
        );

        Ok(StreetNetwork {
            intersections,
            streets,
            turning: TurningTable { nodes },
            bounding_box,
        })
    }

    pub fn intersection_index(&self, id: &str) -> Option<usize> {
        self.intersections.iter().position(|n| n.id == id)
    }

    pub fn street_index(&self, id: &str) -> Option<usize> {
        self.streets.iter().position(|s| s.id == id)
    }

    pub fn incoming(&self, k: usize) -> &[usize] {
        &self.turning.nodes[k].incoming
    }

    pub fn outgoing(&self, k: usize) -> &[usize] {
        &self.turning.nodes[k].outgoing
    }

    /// Parse the text format described in the module docs.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Intersections,
            Streets,
            Turning(String),
        }
        let mut section = Section::None;
        let mut intersections = Vec::new();
        let mut raw_streets: Vec<(usize, Vec<String>)> = Vec::new();
        let mut raw_turning: Vec<(usize, String, String, String, f64)> = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(origin, lineno, "unterminated section header"))?
                    .trim();
                let mut parts = header.split_whitespace();
                section = match (parts.next(), parts.next(), parts.next()) {
                    (Some("intersections"), None, _) => Section::Intersections,
                    (Some("streets"), None, _) => Section::Streets,
                    (Some("turning"), Some(k), None) => Section::Turning(k.to_string()),
                    _ => {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            format!("unknown section [{header}]"),
                        ))
                    }
                };
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match &section {
                Section::None => {
                    return Err(Error::parse(origin, lineno, "data outside of any section"))
                }
                Section::Intersections => {
                    if fields.len() != 5 {
                        return Err(Error::parse(origin, lineno, "expected `id x y entry exit`"));
                    }
                    intersections.push(Intersection {
                        id: fields[0].to_string(),
                        x: parse_f64(fields[1], origin, lineno)?,
                        y: parse_f64(fields[2], origin, lineno)?,
                        is_entry: parse_flag(fields[3], origin, lineno)?,
                        is_exit: parse_flag(fields[4], origin, lineno)?,
                    });
                }
                Section::Streets => {
                    if fields.len() != 6 && fields.len() != 7 {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            "expected `id from to length lanes vmax [phimax]`",
                        ));
                    }
                    raw_streets.push((lineno, fields.iter().map(|s| s.to_string()).collect()));
                }
                Section::Turning(k) => {
                    if fields.len() != 3 {
                        return Err(Error::parse(origin, lineno, "expected `in out alpha`"));
                    }
                    raw_turning.push((
                        lineno,
                        k.clone(),
                        fields[0].to_string(),
                        fields[1].to_string(),
                        parse_f64(fields[2], origin, lineno)?,
                    ));
                }
            }
        }

        let node_index: HashMap<&str, usize> = intersections
            .iter()
            .enumerate()
            .map(|(k, n)| (n.id.as_str(), k))
            .collect();
        let mut streets = Vec::with_capacity(raw_streets.len());
        for (lineno, f) in &raw_streets {
            let lookup = |id: &str| {
                node_index.get(id).copied().ok_or_else(|| {
                    Error::Validation(format!(
                        "street {} references unknown intersection {id}",
                        f[0]
                    ))
                })
            };
            let lanes: u32 = f[4]
                .parse()
                .map_err(|_| Error::parse(origin, *lineno, format!("bad lane count `{}`", f[4])))?;
            streets.push(Street {
                id: f[0].clone(),
                from: lookup(&f[1])?,
                to: lookup(&f[2])?,
                length: parse_f64(&f[3], origin, *lineno)?,
                lanes,
                v_max: parse_f64(&f[5], origin, *lineno)?,
                phi_max_override: f
                    .get(6)
                    .map(|v| parse_f64(v, origin, *lineno))
                    .transpose()?,
                direction: (0.0, 0.0),
            });
        }
        let street_index: HashMap<&str, usize> = streets
            .iter()
            .enumerate()
            .map(|(s, st)| (st.id.as_str(), s))
            .collect();
        let mut turning = Vec::with_capacity(raw_turning.len());
        for (lineno, k, i, j, a) in &raw_turning {
            let k = *node_index.get(k.as_str()).ok_or_else(|| {
                Error::parse(origin, *lineno, format!("unknown intersection `{k}`"))
            })?;
            let i = *street_index
                .get(i.as_str())
                .ok_or_else(|| Error::parse(origin, *lineno, format!("unknown street `{i}`")))?;
            let j = *street_index
                .get(j.as_str())
                .ok_or_else(|| Error::parse(origin, *lineno, format!("unknown street `{j}`")))?;
            turning.push((k, i, j, *a));
        }
        StreetNetwork::new(intersections, streets, &turning)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Render back to the text format. Explicit turning sections are written
    /// only for intersections that had them.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[intersections]\n");
        for n in &self.intersections {
            let _ = writeln!(
                out,
                "{} {:?} {:?} {} {}",
                n.id, n.x, n.y, n.is_entry as u8, n.is_exit as u8
            );
        }
        out.push_str("[streets]\n");
        for s in &self.streets {
            let _ = write!(
                out,
                "{} {} {} {:?} {} {:?}",
                s.id,
                self.intersections[s.from].id,
                self.intersections[s.to].id,
                s.length,
                s.lanes,
                s.v_max
            );
            if let Some(phi) = s.phi_max_override {
                let _ = write!(out, " {phi:?}");
            }
            out.push('\n');
        }
        for (k, t) in self.turning.nodes.iter().enumerate() {
            if !t.explicit {
                continue;
            }
            let _ = writeln!(out, "[turning {}]", self.intersections[k].id);
            for (a, &i) in t.incoming.iter().enumerate() {
                for (b, &j) in t.outgoing.iter().enumerate() {
                    if t.alpha[a][b] != 0.0 {
                        let _ = writeln!(
                            out,
                            "{} {} {:?}",
                            self.streets[i].id, self.streets[j].id, t.alpha[a][b]
                        );
                    }
                }
            }
        }
        out
    }
}

fn parse_f64(s: &str, origin: &Path, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(origin, line, format!("bad number `{s}`")))
}

fn parse_flag(s: &str, origin: &Path, line: usize) -> Result<bool> {
    match s {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::parse(origin, line, format!("bad flag `{s}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<StreetNetwork> {
        StreetNetwork::parse(text, Path::new("test.net"))
    }

    const CROSS: &str = "
[intersections]
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
";

    #[test]
    fn single_edge() {
        let net =
            parse("[intersections]\na 0 0 1 0\nb 3 4 0 1\n[streets]\nab a b 5 1 10\n").unwrap();
        assert_eq!(net.streets.len(), 1);
        assert_eq!(net.streets[0].direction, (3.0, 4.0));
        assert_eq!(net.turning.nodes[1].incoming, vec![0]);
        assert!(net.turning.nodes[1].outgoing.is_empty());
    }

    #[test]
    fn row_sum_violation_names_location() {
        let text = "[intersections]\na 0 0 0 0\nb 1 0 0 0\nc 2 0 0 0\n[streets]\nab a b 1 1 10\nbc b c 1 1 10\n[turning b]\nab bc 0.9\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("turning at b"), "{err}");
        assert!(err.contains("ab"), "{err}");
    }

    #[test]
    fn cross_has_eight_streets_with_unit_rows() {
        let net = parse(CROSS).unwrap();
        assert_eq!(net.streets.len(), 8);
        let c = net.intersection_index("C").unwrap();
        let t = &net.turning.nodes[c];
        assert_eq!(t.incoming.len(), 4);
        for row in &t.alpha {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            // three non-U-turn exits
            assert_eq!(row.iter().filter(|&&a| a > 0.0).count(), 3);
        }
        // dead-end arms only offer the U-turn
        let n = net.intersection_index("n").unwrap();
        assert_eq!(net.turning.nodes[n].alpha, vec![vec![1.0]]);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(parse("[intersections]\na 0 0 0 0\n[streets]\nab a zz 1 1 10\n").is_err());
        assert!(
            parse("[intersections]\na 0 0 0 0\nb 1 0 0 0\n[streets]\nab a b 0 1 10\n").is_err()
        );
        assert!(
            parse("[intersections]\na 0 0 0 0\nb 1 0 0 0\n[streets]\nab a b 1 1 -3\n").is_err()
        );
        assert!(parse("[intersections]\na 0 0 0 0\nb 1 0 0 0\n[streets]\nab a b 1 0 3\n").is_err());
        assert!(parse("[intersections]\na 0 0 0 0\na 1 0 0 0\n").is_err());
        assert!(parse("[intersections]\na 0 0 1 0\n").is_err());
        assert!(parse("a 0 0 1 0\n").is_err());
        assert!(parse("[roads]\n").is_err());
    }

    #[test]
    fn trig_examples() {
        assert_eq!(street_trig((1.0, 0.0)).unwrap(), (1.0, 0.0));
        assert_eq!(street_trig((0.0, -3.0)).unwrap(), (0.0, -1.0));
        let (c, s) = street_trig((1.0, 1.0)).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(street_trig((0.0, 0.0)).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(projection_coeffs((1.0, 0.0)).unwrap(), [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(projection_coeffs((1.0, 1.0)).unwrap(), [0.5, 0.5, 0.0, 0.0]);
        assert_eq!(
            projection_coeffs((-2.0, -2.0)).unwrap(),
            [0.0, 0.0, 0.5, 0.5]
        );
        assert!(projection_coeffs((0.0, 0.0)).is_err());
    }

    #[test]
    fn capacity_defaults_and_override() {
        let net = parse(
            "[intersections]\na 0 0 0 0\nb 1 0 0 0\n[streets]\nab a b 1 3 12\nba b a 1 1 12 0.25\n",
        )
        .unwrap();
        assert!((net.streets[0].rho_max() - 0.5).abs() < 1e-15);
        assert!((net.streets[0].phi_max(1.0 / 3.0) - 2.0).abs() < 1e-12);
        assert_eq!(net.streets[1].phi_max(1.0 / 3.0), 0.25);
    }
}
