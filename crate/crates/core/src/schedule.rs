//! Per-minute inflow demand and outflow supply at boundary intersections.
//!
//! File grammar, one record per line, `#` starts a comment:
//!
//! ```text
//! unit veh/h                      # optional, default veh/s
//! <intersection> [<street>] in  <minute> <value>
//! <intersection> [<street>] out <minute> <value|inf>
//! ```
//!
//! `in` rows attach to entry intersections (and, when a street is named, to
//! one of its outgoing streets); `out` rows attach to exit intersections and
//! their incoming streets. Minutes not listed are zero.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gridding::IoValues;
use crate::network::StreetNetwork;
use crate::news_params::project_io_demand;

pub const SECONDS_PER_MINUTE: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoKind {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSeries {
    pub intersection: usize,
    pub street: Option<usize>,
    pub kind: IoKind,
    /// veh/s per minute; `f64::INFINITY` marks an unbounded sink.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandSchedule {
    /// Number of minutes covered, at least one.
    pub minutes: usize,
    pub series: Vec<ScheduleSeries>,
}

/// Cardinal io values of one intersection per minute, in veh/s.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionIo {
    pub intersection: usize,
    pub minutes: Vec<IoValues>,
}

/// Minute index for simulated time `t`, clamped to the last scheduled minute.
pub fn minute_of(t: f64, minutes: usize) -> usize {
    let m = (t.max(0.0) / SECONDS_PER_MINUTE).floor() as usize;
    m.min(minutes.saturating_sub(1))
}

impl DemandSchedule {
    pub fn empty() -> Self {
        DemandSchedule {
            minutes: 1,
            series: Vec::new(),
        }
    }

    /// Constant-rate series helper, mostly for tests and generated scenarios.
    pub fn push_constant(
        &mut self,
        intersection: usize,
        street: Option<usize>,
        kind: IoKind,
        rate: f64,
        minutes: usize,
    ) {
        self.minutes = self.minutes.max(minutes);
        self.series.push(ScheduleSeries {
            intersection,
            street,
            kind,
            values: vec![rate; minutes],
        });
    }

    pub fn parse(text: &str, net: &StreetNetwork, origin: &Path) -> Result<Self> {
        let mut scale = 1.0;
        let mut series: Vec<ScheduleSeries> = Vec::new();
        let mut max_minute = 0usize;
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "unit" {
                scale = match f.get(1).copied() {
                    Some("veh/s") if f.len() == 2 => 1.0,
                    Some("veh/h") if f.len() == 2 => 1.0 / 3600.0,
                    _ => {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            "expected `unit veh/s` or `unit veh/h`",
                        ))
                    }
                };
                continue;
            }
            let (node_id, street_id, rest) = match f.len() {
                4 => (f[0], None, &f[1..]),
                5 => (f[0], Some(f[1]), &f[2..]),
                _ => {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        "expected `intersection [street] in|out minute value`",
                    ))
                }
            };
            let k = net.intersection_index(node_id).ok_or_else(|| {
                Error::Validation(format!(
                    "schedule line {lineno}: unknown intersection {node_id}"
                ))
            })?;
            let street = street_id
                .map(|s| {
                    net.street_index(s).ok_or_else(|| {
                        Error::Validation(format!("schedule line {lineno}: unknown street {s}"))
                    })
                })
                .transpose()?;
            let kind = match rest[0] {
                "in" => IoKind::In,
                "out" => IoKind::Out,
                other => {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("unknown kind `{other}`"),
                    ))
                }
            };
            let minute: usize = rest[1]
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad minute `{}`", rest[1])))?;
            let value = match rest[2] {
                "inf" | "unbounded" if kind == IoKind::Out => f64::INFINITY,
                v => v
                    .parse::<f64>()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad value `{v}`")))?,
            };
            if value.is_nan() || value < 0.0 || (kind == IoKind::In && !value.is_finite()) {
                return Err(Error::Validation(format!(
                    "schedule line {lineno}: value {value} must be finite and nonnegative"
                )));
            }
            let pos = match series
                .iter()
                .position(|s| s.intersection == k && s.street == street && s.kind == kind)
            {
                Some(p) => p,
                None => {
                    series.push(ScheduleSeries {
                        intersection: k,
                        street,
                        kind,
                        values: Vec::new(),
                    });
                    series.len() - 1
                }
            };
            let values = &mut series[pos].values;
            if values.len() <= minute {
                values.resize(minute + 1, 0.0);
            }
            if values[minute] != 0.0 {
                return Err(Error::Validation(format!(
                    "schedule line {lineno}: minute {minute} given twice for {node_id}"
                )));
            }
            values[minute] = value * scale;
            max_minute = max_minute.max(minute + 1);
        }
        let minutes = max_minute.max(1);
        for s in &mut series {
            s.values.resize(minutes, 0.0);
        }
        let schedule = DemandSchedule { minutes, series };
        schedule.validate(net)?;
        Ok(schedule)
    }

    pub fn load(path: impl AsRef<Path>, net: &StreetNetwork) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, net, path)
    }

    pub fn validate(&self, net: &StreetNetwork) -> Result<()> {
        for s in &self.series {
            let node = net.intersections.get(s.intersection).ok_or_else(|| {
                Error::Validation(format!(
                    "schedule references intersection #{}",
                    s.intersection
                ))
            })?;
            let (allowed, role) = match s.kind {
                IoKind::In => (node.is_entry, "entry"),
                IoKind::Out => (node.is_exit, "exit"),
            };
            if !allowed {
                return Err(Error::Validation(format!(
                    "schedule uses {} but it is not an {role}",
                    node.id
                )));
            }
            if let Some(st) = s.street {
                let ok = match s.kind {
                    IoKind::In => net.outgoing(s.intersection).contains(&st),
                    IoKind::Out => net.incoming(s.intersection).contains(&st),
                };
                if !ok {
                    return Err(Error::Validation(format!(
                        "schedule street {} does not {} at {}",
                        net.streets[st].id,
                        if s.kind == IoKind::In {
                            "leave"
                        } else {
                            "arrive"
                        },
                        node.id
                    )));
                }
            }
            if s.values.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(Error::Validation(format!(
                    "negative rate scheduled at {}",
                    node.id
                )));
            }
        }
        Ok(())
    }

    /// Total scheduled inflow over all minutes, in vehicles.
    pub fn total_inflow(&self) -> f64 {
        self.series
            .iter()
            .filter(|s| s.kind == IoKind::In)
            .flat_map(|s| s.values.iter())
            .map(|v| v * SECONDS_PER_MINUTE)
            .sum()
    }

    /// Project every series onto cardinal directions, one record per
    /// intersection that has any io. Series without a street are spread over
    /// the outgoing (in) or incoming (out) streets in proportion to capacity.
    pub fn project(&self, net: &StreetNetwork, gamma: f64) -> Result<Vec<IntersectionIo>> {
        let mut out: Vec<IntersectionIo> = Vec::new();
        for s in &self.series {
            let streets: Vec<(usize, f64)> = match s.street {
                Some(st) => vec![(st, 1.0)],
                None => {
                    let list = match s.kind {
                        IoKind::In => net.outgoing(s.intersection),
                        IoKind::Out => net.incoming(s.intersection),
                    };
                    let total: f64 = list.iter().map(|&j| net.streets[j].phi_max(gamma)).sum();
                    list.iter()
                        .map(|&j| (j, net.streets[j].phi_max(gamma) / total))
                        .collect()
                }
            };
            let pos = match out.iter().position(|r| r.intersection == s.intersection) {
                Some(p) => p,
                None => {
                    out.push(IntersectionIo {
                        intersection: s.intersection,
                        minutes: vec![IoValues::default(); self.minutes],
                    });
                    out.len() - 1
                }
            };
            for (m, &v) in s.values.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let per_street: Vec<(usize, f64)> =
                    streets.iter().map(|&(j, share)| (j, share * v)).collect();
                let (d, sup) = match s.kind {
                    IoKind::In => project_io_demand(net, s.intersection, &per_street, &[])?,
                    IoKind::Out => project_io_demand(net, s.intersection, &[], &per_street)?,
                };
                let slot = &mut out[pos].minutes[m];
                for x in 0..4 {
                    slot.source[x] += d[x];
                    slot.sink[x] += sup[x];
                }
            }
        }
        out.sort_by_key(|r| r.intersection);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> StreetNetwork {
        StreetNetwork::parse(
            "[intersections]\na 0 0 1 0\nb 100 0 0 1\nc 0 100 0 0\n[streets]\nab a b 100 1 10\nac a c 100 2 10\ncb c b 141 1 10\n",
            Path::new("t.net"),
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<DemandSchedule> {
        DemandSchedule::parse(text, &net(), Path::new("t.sched"))
    }

    #[test]
    fn empty_file_is_zero() {
        let s = parse("# nothing\n").unwrap();
        assert_eq!(s.minutes, 1);
        assert!(s.series.is_empty());
        assert_eq!(s.total_inflow(), 0.0);
    }

    #[test]
    fn constant_series() {
        let text: String = (0..60).map(|m| format!("a in {m} 0.2\n")).collect();
        let s = parse(&text).unwrap();
        assert_eq!(s.minutes, 60);
        assert_eq!(s.series[0].values, vec![0.2; 60]);
        assert!((s.total_inflow() - 0.2 * 3600.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse("a in 0 -1\n").is_err());
        assert!(parse("zz in 0 1\n").is_err());
        assert!(parse("b in 0 1\n").is_err()); // not an entry
        assert!(parse("a cb in 0 1\n").is_err()); // not leaving a
        assert!(parse("a in 0 1\na in 0 2\n").is_err());
        assert!(parse("a sideways 0 1\n").is_err());
        assert!(parse("a in 0 inf\n").is_err());
    }

    #[test]
    fn units_and_unbounded_sinks() {
        let s = parse("unit veh/h\na ab in 0 600\nb out 2 inf\n").unwrap();
        assert_eq!(s.minutes, 3);
        assert!((s.series[0].values[0] - 600.0 / 3600.0).abs() < 1e-15);
        assert_eq!(s.series[1].values, vec![0.0, 0.0, f64::INFINITY]);
    }

    #[test]
    fn minute_lookup() {
        assert_eq!(minute_of(0.0, 30), 0);
        assert_eq!(minute_of(59.9, 30), 0);
        assert_eq!(minute_of(60.0, 30), 1);
        assert_eq!(minute_of(3600.0, 30), 29);
        assert_eq!(minute_of(10.0, 0), 0);
    }

    #[test]
    fn intersection_level_rows_split_by_capacity() {
        let n = net();
        let s = parse("a in 0 3\n").unwrap();
        let io = s.project(&n, 1.0 / 3.0).unwrap();
        // ab (east, 1 lane) gets 1/3, ac (north, 2 lanes) 2/3
        let v = io[0].minutes[0].source;
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
        let total: f64 = v.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }
}
