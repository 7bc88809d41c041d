//! Bound curves: containers, CSV/JSON emission, and the three-curve
//! comparison on the parallel-BSC pair.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::antisym::make_parallel_bsc;
use crate::channel::{channel_digest, solve_caid, ChannelFile};
use crate::converse::{converse_with_law, increment_law, normal_approx_feedback, ConverseQuery, LambdaRule};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::rcu::rcu_max_log_m;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Converse,
    Rcu,
    FlfSim,
    VlfConverse,
    VlfSim,
    NormalApprox,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Converse => "converse",
            CurveKind::Rcu => "rcu",
            CurveKind::FlfSim => "flf-sim",
            CurveKind::VlfConverse => "vlf-converse",
            CurveKind::VlfSim => "vlf-sim",
            CurveKind::NormalApprox => "normal-approx",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "converse" => CurveKind::Converse,
            "rcu" => CurveKind::Rcu,
            "flf-sim" => CurveKind::FlfSim,
            "vlf-converse" => CurveKind::VlfConverse,
            "vlf-sim" => CurveKind::VlfSim,
            "normal-approx" => CurveKind::NormalApprox,
            other => return Err(Error::Parse(format!("unknown curve kind {other:?}"))),
        })
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Blocklength, or average blocklength for variable-length kinds.
    pub n: f64,
    pub log_m_nats: f64,
    pub kind: CurveKind,
}

impl CurvePoint {
    pub fn rate_bits(&self) -> f64 {
        if self.n > 0.0 {
            self.log_m_nats / (self.n * LN2)
        } else {
            f64::NAN
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metadata {
    pub tool_version: String,
    pub method_flags: BTreeMap<String, String>,
    pub ci_levels: BTreeMap<String, f64>,
}

impl Metadata {
    pub fn new() -> Self {
        Self { tool_version: TOOL_VERSION.to_string(), ..Default::default() }
    }

    pub fn flag(mut self, key: &str, value: impl ToString) -> Self {
        self.method_flags.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub points: Vec<CurvePoint>,
    pub channel_digest: String,
    pub seed: u64,
    pub epsilon: f64,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl BoundCurve {
    pub fn new(points: Vec<CurvePoint>, channel_digest: String, seed: u64, epsilon: f64, metadata: Metadata) -> Result<Self> {
        let mut c = Self { points, channel_digest, seed, epsilon, metadata };
        c.points.sort_by(|a, b| a.n.total_cmp(&b.n));
        c.check()?;
        Ok(c)
    }

    /// Points sorted by blocklength and of a single kind.
    pub fn check(&self) -> Result<()> {
        if self.points.windows(2).any(|w| w[0].n > w[1].n) {
            return Err(Error::OutOfRange("curve points must be sorted by blocklength".into()));
        }
        if let Some(first) = self.points.first() {
            if self.points.iter().any(|p| p.kind != first.kind) {
                return Err(Error::OutOfRange("mixed curve kinds in one file".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> Option<CurveKind> {
        self.points.first().map(|p| p.kind)
    }

    /// CSV text; with `bits` the size column is in bits and renamed.
    pub fn to_csv(&self, bits: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", if bits { "logM_bits" } else { "logM_nats" }, "rate_bits_per_use", "kind"])?;
        for p in &self.points {
            let size = if bits { p.log_m_nats / LN2 } else { p.log_m_nats };
            w.write_record([p.n.to_string(), size.to_string(), p.rate_bits().to_string(), p.kind.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Pretty JSON with all metadata; sizes are always stored in nats.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    pub fn emit(&self, format: Format, path: &Path, bits: bool) -> Result<()> {
        let text = match format {
            Format::Csv => self.to_csv(bits)?,
            Format::Json => self.to_json()? + "\n",
        };
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Parses CSV written by [`BoundCurve::to_csv`] back into points (nats).
pub fn parse_csv_points(text: &str) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let bits = match headers.get(1) {
        Some("logM_nats") => false,
        Some("logM_bits") => true,
        other => return Err(Error::Parse(format!("unexpected size column {other:?}"))),
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).ok_or_else(|| Error::Parse("short CSV row".into()))?.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))
        };
        let size = num(1)?;
        out.push(CurvePoint {
            n: num(0)?,
            log_m_nats: if bits { size * LN2 } else { size },
            kind: CurveKind::parse(rec.get(3).unwrap_or(""))?,
        });
    }
    Ok(out)
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let bad = |s: &str| Error::Parse(format!("bad grid {s:?}: expected start:stop:step or a comma list"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(spec));
        }
        let v: Vec<u64> = parts.iter().map(|p| p.trim().parse::<u64>().map_err(|_| bad(spec))).collect::<Result<_>>()?;
        if v[2] == 0 {
            return Err(bad(spec));
        }
        Ok((v[0]..=v[1]).step_by(v[2] as usize).collect())
    } else {
        spec.split(',').map(|p| p.trim().parse::<u64>().map_err(|_| bad(spec))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4 {
    pub converse: BoundCurve,
    pub rcu: BoundCurve,
    pub normal: BoundCurve,
}

/// Converse, RCU and normal-approximation curves for the parallel-BSC pair.
/// Fails with `OrderingViolation` unless `rcu <= normal <= converse` at
/// every blocklength.
pub fn run_fig4(q1: f64, q2: f64, epsilon: f64, n_grid: &[u64], exec: Execution) -> Result<Fig4> {
    let pair = make_parallel_bsc(q1, q2)?;
    // digest of the bytes `fbx channel make` would write for this pair
    let digest = channel_digest((ChannelFile::from_pair(&pair).to_json() + "\n").as_bytes());
    let analysis = solve_caid(&pair, 1e-9)?;
    let law = increment_law(&analysis, &pair)?;
    let mut grid: Vec<u64> = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let rows = map_slice(exec, &grid, |&n| -> Result<(u64, f64, f64, f64)> {
        let q = ConverseQuery::new(n, epsilon, LambdaRule::LogN)?;
        let conv = converse_with_law(&law, &q, Execution::Sequential)?.log_m.or_infinity();
        let rcu = rcu_max_log_m(n, epsilon, q1, q2)?.log_m;
        let normal = normal_approx_feedback(&analysis, n, epsilon)?;
        Ok((n, conv, rcu, normal))
    });
    let rows: Vec<_> = rows.into_iter().collect::<Result<_>>()?;
    for &(n, conv, rcu, normal) in &rows {
        if !(rcu <= normal && normal <= conv) {
            return Err(Error::OrderingViolation(format!(
                "n = {n}: rcu = {rcu:.6}, normal-approx = {normal:.6}, converse = {conv:.6} nats"
            )));
        }
    }
    let meta = |method: &str| {
        Metadata::new()
            .flag("method", method)
            .flag("q1", q1)
            .flag("q2", q2)
            .flag("family", "parallel-bsc")
    };
    let curve = |kind: CurveKind, pick: fn(&(u64, f64, f64, f64)) -> f64, m: Metadata| {
        let pts = rows.iter().map(|r| CurvePoint { n: r.0 as f64, log_m_nats: pick(r), kind }).collect();
        BoundCurve::new(pts, digest.clone(), 0, epsilon, m)
    };
    Ok(Fig4 {
        converse: curve(CurveKind::Converse, |r| r.1, meta("exact lattice CDF, lambda = log n"))?,
        rcu: curve(CurveKind::Rcu, |r| r.2, meta("coupled error-count DP, min-distance RCU"))?,
        normal: curve(CurveKind::NormalApprox, |r| r.3, meta("nC - sqrt(nV) Qinv(eps)"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BoundCurve {
        let pts = vec![
            CurvePoint { n: 200.0, log_m_nats: 70.123456789, kind: CurveKind::Rcu },
            CurvePoint { n: 100.0, log_m_nats: 30.5, kind: CurveKind::Rcu },
        ];
        BoundCurve::new(pts, "abc".into(), 7, 1e-3, Metadata::new()).unwrap()
    }

    #[test]
    fn sorted_on_construction() {
        let c = sample();
        assert_eq!(c.points[0].n, 100.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = sample();
        let back = parse_csv_points(&c.to_csv(false).unwrap()).unwrap();
        assert_eq!(back, c.points);
        let header = c.to_csv(false).unwrap();
        assert!(header.starts_with("n,logM_nats,rate_bits_per_use,kind\n"));
    }

    #[test]
    fn bits_header_and_scale() {
        let c = sample();
        let text = c.to_csv(true).unwrap();
        assert!(text.starts_with("n,logM_bits,rate_bits_per_use,kind\n"));
        let back = parse_csv_points(&text).unwrap();
        for (a, b) in back.iter().zip(&c.points) {
            assert!((a.log_m_nats - b.log_m_nats).abs() < 1e-12 * b.log_m_nats);
            assert_eq!(a.rate_bits().to_bits(), b.rate_bits().to_bits());
        }
    }

    #[test]
    fn json_round_trip() {
        let c = sample();
        assert_eq!(BoundCurve::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let pts = vec![
            CurvePoint { n: 1.0, log_m_nats: 0.0, kind: CurveKind::Rcu },
            CurvePoint { n: 2.0, log_m_nats: 0.0, kind: CurveKind::Converse },
        ];
        assert!(BoundCurve::new(pts, String::new(), 0, 0.1, Metadata::new()).is_err());
    }

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("100:500:200").unwrap(), vec![100, 300, 500]);
        assert_eq!(parse_grid("5, 7").unwrap(), vec![5, 7]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn empty_grid_gives_empty_curves() {
        let f = run_fig4(0.05, 0.1, 1e-3, &[], Execution::Sequential).unwrap();
        assert!(f.converse.points.is_empty() && f.rcu.points.is_empty() && f.normal.points.is_empty());
    }

    #[test]
    fn small_grid_is_ordered() {
        let f = run_fig4(0.05, 0.1, 1e-3, &[200, 400], Execution::Parallel).unwrap();
        assert_eq!(f.converse.points.len(), 2);
        assert_eq!(f.rcu.channel_digest, f.converse.channel_digest);
    }
}
