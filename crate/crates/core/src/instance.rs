//! Dynamic facility location instances.
//!
//! An instance holds `T` client/facility metrics, per-time opening costs and
//! a single switching cost. Distances are stored densely, time-major and
//! facility-major within a time step.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack allowed on the bipartite triangle check, scaled by the
/// magnitude of the distances involved.
const METRIC_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Shape { field: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    facility_ids: Vec<String>,
    client_ids: Vec<String>,
    horizon: usize,
    switching_cost: f64,
    /// `open_cost[t * F + i]`
    open_cost: Vec<f64>,
    /// `dist[(t * F + i) * C + j]`
    dist: Vec<f64>,
}

impl Instance {
    /// Builds an instance from dense arrays. `open_cost` is indexed
    /// `[t][i]`, `dist` is indexed `[t][i][j]`.
    pub fn new(
        facility_ids: Vec<String>,
        client_ids: Vec<String>,
        horizon: usize,
        switching_cost: f64,
        open_cost: Vec<f64>,
        dist: Vec<f64>,
    ) -> Result<Self, InstanceError> {
        let nf = facility_ids.len();
        let nc = client_ids.len();
        if horizon == 0 {
            return Err(InstanceError::Dimensions("T must be at least 1".into()));
        }
        if nf == 0 || nc == 0 {
            return Err(InstanceError::Dimensions(
                "need at least one facility and one client".into(),
            ));
        }
        if open_cost.len() != horizon * nf {
            return Err(InstanceError::Shape {
                field: "open_cost".into(),
                message: format!(
                    "expected {} entries, found {}",
                    horizon * nf,
                    open_cost.len()
                ),
            });
        }
        if dist.len() != horizon * nf * nc {
            return Err(InstanceError::Shape {
                field: "dist".into(),
                message: format!(
                    "expected T×|F|×|C| = {} entries, found {}",
                    horizon * nf * nc,
                    dist.len()
                ),
            });
        }
        Ok(Self {
            facility_ids,
            client_ids,
            horizon,
            switching_cost,
            open_cost,
            dist,
        })
    }

    /// Convenience constructor with generated ids `f0..` and `c0..`.
    pub fn from_arrays(
        num_facilities: usize,
        num_clients: usize,
        horizon: usize,
        switching_cost: f64,
        open_cost: Vec<f64>,
        dist: Vec<f64>,
    ) -> Result<Self, InstanceError> {
        Self::new(
            (0..num_facilities).map(|i| format!("f{i}")).collect(),
            (0..num_clients).map(|j| format!("c{j}")).collect(),
            horizon,
            switching_cost,
            open_cost,
            dist,
        )
    }

    pub fn num_facilities(&self) -> usize {
        self.facility_ids.len()
    }

    pub fn num_clients(&self) -> usize {
        self.client_ids.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn switching_cost(&self) -> f64 {
        self.switching_cost
    }

    pub fn facility_ids(&self) -> &[String] {
        &self.facility_ids
    }

    pub fn client_ids(&self) -> &[String] {
        &self.client_ids
    }

    #[inline]
    pub fn open_cost(&self, facility: usize, t: usize) -> f64 {
        self.open_cost[t * self.num_facilities() + facility]
    }

    #[inline]
    pub fn dist(&self, t: usize, facility: usize, client: usize) -> f64 {
        let nf = self.num_facilities();
        let nc = self.num_clients();
        self.dist[(t * nf + facility) * nc + client]
    }

    /// Returns a copy with every cost (distances, opening costs, switching
    /// cost) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.switching_cost *= factor;
        out.open_cost.iter_mut().for_each(|v| *v *= factor);
        out.dist.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NegativeOrNonFinite {
        field: String,
        value: f64,
    },
    /// `d_t(facility, client) > d_t(facility, via_client) + d_t(via_facility, via_client)
    /// + d_t(via_facility, client)` by `excess`.
    Triangle {
        time: usize,
        facility: usize,
        client: usize,
        via_facility: usize,
        via_client: usize,
        excess: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeOrNonFinite { field, value } => {
                write!(f, "{field} = {value} is negative or not finite")
            }
            Violation::Triangle {
                time,
                facility,
                client,
                via_facility,
                via_client,
                excess,
            } => write!(
                f,
                "t={time}: d({facility},{client}) exceeds the path through \
                 ({facility},{via_client}),({via_facility},{via_client}),({via_facility},{client}) by {excess}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks signs, finiteness, and the bipartite triangle inequality
/// `d(i,j) <= d(i,j') + d(i',j') + d(i',j)` at every time step.
///
/// For each `(t, i, j)` at most one triangle violation is reported, the one
/// with the largest excess.
pub fn validate(instance: &Instance) -> ValidationReport {
    let mut violations = Vec::new();
    let nf = instance.num_facilities();
    let nc = instance.num_clients();

    let g = instance.switching_cost;
    if !(g.is_finite() && g >= 0.0) {
        violations.push(Violation::NegativeOrNonFinite {
            field: "g".into(),
            value: g,
        });
    }
    for t in 0..instance.horizon {
        for i in 0..nf {
            let f = instance.open_cost(i, t);
            if !(f.is_finite() && f >= 0.0) {
                violations.push(Violation::NegativeOrNonFinite {
                    field: format!("open_cost[{t}][{i}]"),
                    value: f,
                });
            }
            for j in 0..nc {
                let d = instance.dist(t, i, j);
                if !(d.is_finite() && d >= 0.0) {
                    violations.push(Violation::NegativeOrNonFinite {
                        field: format!("dist[{t}][{i}][{j}]"),
                        value: d,
                    });
                }
            }
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }

    // detour[j'][j] = min over i' of d(i',j') + d(i',j), with its argmin.
    let mut detour = vec![(f64::INFINITY, 0usize); nc * nc];
    for t in 0..instance.horizon {
        for a in 0..nc {
            for b in 0..nc {
                let mut best = (f64::INFINITY, 0);
                for ip in 0..nf {
                    let v = instance.dist(t, ip, a) + instance.dist(t, ip, b);
                    if v < best.0 {
                        best = (v, ip);
                    }
                }
                detour[a * nc + b] = best;
            }
        }
        for i in 0..nf {
            for j in 0..nc {
                let direct = instance.dist(t, i, j);
                let mut best = (f64::INFINITY, 0, 0);
                for jp in 0..nc {
                    let (via, ip) = detour[jp * nc + j];
                    let v = instance.dist(t, i, jp) + via;
                    if v < best.0 {
                        best = (v, ip, jp);
                    }
                }
                let excess = direct - best.0;
                if excess > METRIC_SLACK * (1.0 + direct) {
                    violations.push(Violation::Triangle {
                        time: t,
                        facility: i,
                        client: j,
                        via_facility: best.1,
                        via_client: best.2,
                        excess,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Places facilities and clients uniformly in the unit square; at every step
/// after the first each client moves by a uniformly random offset of length at
/// most `drift`. Distances are Euclidean. Opening costs are constant in time
/// and drawn from `[0.2, 1.0)`.
pub fn generate_drifting(
    num_facilities: usize,
    num_clients: usize,
    horizon: usize,
    drift: f64,
    switching_cost: f64,
    seed: u64,
) -> Result<Instance, InstanceError> {
    if num_facilities == 0 || num_clients == 0 || horizon == 0 {
        return Err(InstanceError::Dimensions(format!(
            "counts must be positive (n_f={num_facilities}, n_c={num_clients}, T={horizon})"
        )));
    }
    if !(drift.is_finite() && drift >= 0.0) {
        return Err(InstanceError::Dimensions(format!(
            "drift must be nonnegative, got {drift}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let facilities: Vec<(f64, f64)> = (0..num_facilities)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let mut clients: Vec<(f64, f64)> = (0..num_clients)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let base_cost: Vec<f64> = (0..num_facilities)
        .map(|_| rng.random_range(0.2..1.0))
        .collect();

    let mut open_cost = Vec::with_capacity(horizon * num_facilities);
    let mut dist = Vec::with_capacity(horizon * num_facilities * num_clients);
    for t in 0..horizon {
        if t > 0 && drift > 0.0 {
            for c in clients.iter_mut() {
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                let radius = rng.random::<f64>() * drift;
                c.0 += radius * angle.cos();
                c.1 += radius * angle.sin();
            }
        }
        open_cost.extend_from_slice(&base_cost);
        for f in &facilities {
            for c in &clients {
                dist.push((f.0 - c.0).hypot(f.1 - c.1));
            }
        }
    }
    Instance::from_arrays(
        num_facilities,
        num_clients,
        horizon,
        switching_cost,
        open_cost,
        dist,
    )
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum OpenCost {
    Constant(f64),
    PerStep(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct FacilityRecord {
    id: String,
    open_cost: OpenCost,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    facilities: Vec<FacilityRecord>,
    clients: Vec<String>,
    #[serde(rename = "T")]
    horizon: usize,
    g: f64,
    dist: Vec<Vec<Vec<f64>>>,
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file_repr().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = InstanceFile::deserialize(deserializer)?;
        Instance::from_file_repr(file).map_err(serde::de::Error::custom)
    }
}

impl Instance {
    fn to_file_repr(&self) -> InstanceFile {
        let nf = self.num_facilities();
        let nc = self.num_clients();
        let facilities = (0..nf)
            .map(|i| {
                let costs: Vec<f64> = (0..self.horizon).map(|t| self.open_cost(i, t)).collect();
                let open_cost = if costs.iter().all(|c| c.to_bits() == costs[0].to_bits()) {
                    OpenCost::Constant(costs[0])
                } else {
                    OpenCost::PerStep(costs)
                };
                FacilityRecord {
                    id: self.facility_ids[i].clone(),
                    open_cost,
                }
            })
            .collect();
        let dist = (0..self.horizon)
            .map(|t| {
                (0..nf)
                    .map(|i| (0..nc).map(|j| self.dist(t, i, j)).collect())
                    .collect()
            })
            .collect();
        InstanceFile {
            facilities,
            clients: self.client_ids.clone(),
            horizon: self.horizon,
            g: self.switching_cost,
            dist,
        }
    }

    fn from_file_repr(file: InstanceFile) -> Result<Self, InstanceError> {
        let horizon = file.horizon;
        let nf = file.facilities.len();
        let nc = file.clients.len();
        if horizon == 0 {
            return Err(InstanceError::Shape {
                field: "T".into(),
                message: "must be at least 1".into(),
            });
        }
        let mut open_cost = vec![0.0; horizon * nf];
        for (i, fac) in file.facilities.iter().enumerate() {
            match &fac.open_cost {
                OpenCost::Constant(c) => {
                    for t in 0..horizon {
                        open_cost[t * nf + i] = *c;
                    }
                }
                OpenCost::PerStep(v) => {
                    if v.len() != horizon {
                        return Err(InstanceError::Shape {
                            field: format!("facilities[{i}].open_cost"),
                            message: format!("expected {horizon} entries, found {}", v.len()),
                        });
                    }
                    for (t, c) in v.iter().enumerate() {
                        open_cost[t * nf + i] = *c;
                    }
                }
            }
        }
        if file.dist.len() != horizon {
            return Err(InstanceError::Shape {
                field: "dist".into(),
                message: format!("expected {horizon} time steps, found {}", file.dist.len()),
            });
        }
        let mut dist = Vec::with_capacity(horizon * nf * nc);
        for (t, step) in file.dist.iter().enumerate() {
            if step.len() != nf {
                return Err(InstanceError::Shape {
                    field: format!("dist[{t}]"),
                    message: format!("expected {nf} facility rows, found {}", step.len()),
                });
            }
            for (i, row) in step.iter().enumerate() {
                if row.len() != nc {
                    return Err(InstanceError::Shape {
                        field: format!("dist[{t}][{i}]"),
                        message: format!("expected {nc} client entries, found {}", row.len()),
                    });
                }
                dist.extend_from_slice(row);
            }
        }
        let facility_ids = file.facilities.into_iter().map(|f| f.id).collect();
        Instance::new(facility_ids, file.clients, horizon, file.g, open_cost, dist)
    }
}

/// Parses an instance from JSON text.
pub fn parse_instance(text: &str) -> Result<Instance, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Instance::from_file_repr(file)
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(instance).expect("instance serializes");
    fs::write(path, text).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two(d: [[f64; 2]; 2]) -> Instance {
        // facility-major: dist[i][j]
        Instance::from_arrays(2, 2, 1, 1.0, vec![1.0, 1.0], d.concat()).unwrap()
    }

    #[test]
    fn zero_metric_passes() {
        let inst = Instance::from_arrays(1, 1, 1, 0.0, vec![0.0], vec![0.0]).unwrap();
        assert!(validate(&inst).passed());
    }

    #[test]
    fn triangle_violation_reports_witness() {
        // i=0, i'=1, j=0, j'=1: d(i,j)=1, d(i,j')=1, d(i',j')=1, d(i',j)=10
        let inst = two_by_two([[1.0, 1.0], [10.0, 1.0]]);
        let report = validate(&inst);
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::Triangle {
                time,
                facility,
                client,
                via_facility,
                via_client,
                excess,
            } => {
                assert_eq!((*time, *facility, *client), (0, 1, 0));
                assert_eq!((*via_facility, *via_client), (0, 1));
                assert_eq!(*excess, 7.0);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn negative_distance_fails() {
        let inst = two_by_two([[1.0, -0.5], [1.0, 1.0]]);
        let report = validate(&inst);
        assert!(!report.passed());
        assert!(matches!(
            report.violations[0],
            Violation::NegativeOrNonFinite { .. }
        ));
    }

    #[test]
    fn zero_drift_gives_identical_metrics() {
        let inst = generate_drifting(3, 4, 5, 0.0, 1.0, 11).unwrap();
        for t in 1..5 {
            for i in 0..3 {
                for j in 0..4 {
                    assert_eq!(inst.dist(t, i, j), inst.dist(0, i, j));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_drifting(3, 5, 4, 0.1, 2.0, 7).unwrap();
        let b = generate_drifting(3, 5, 4, 0.1, 2.0, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_drifting(3, 5, 4, 0.1, 2.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_example_validates() {
        let inst = generate_drifting(3, 5, 4, 0.1, 1.0, 7).unwrap();
        assert!(validate(&inst).passed());
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(generate_drifting(0, 5, 4, 0.1, 1.0, 7).is_err());
        assert!(generate_drifting(2, 0, 4, 0.1, 1.0, 7).is_err());
        assert!(generate_drifting(2, 5, 0, 0.1, 1.0, 7).is_err());
    }

    #[test]
    fn missing_horizon_names_field() {
        let text =
            r#"{"facilities":[{"id":"a","open_cost":1}],"clients":["x"],"g":1,"dist":[[[0]]]}"#;
        let err = parse_instance(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`T`"), "{msg}");
        assert!(matches!(err, InstanceError::Parse { .. }));
    }

    #[test]
    fn wrong_dist_shape_is_rejected() {
        let text = r#"{"facilities":[{"id":"a","open_cost":1},{"id":"b","open_cost":2}],
            "clients":["x","y"],"T":1,"g":1,"dist":[[[0,1],[2]]]}"#;
        let err = parse_instance(text).unwrap_err();
        assert!(err.to_string().contains("dist[0][1]"), "{err}");

        let text = r#"{"facilities":[{"id":"a","open_cost":1}],
            "clients":["x"],"T":2,"g":1,"dist":[[[0]]]}"#;
        assert!(matches!(
            parse_instance(text).unwrap_err(),
            InstanceError::Shape { .. }
        ));
    }

    #[test]
    fn per_step_open_cost_is_read() {
        let text = r#"{"facilities":[{"id":"a","open_cost":[1,2.5]},{"id":"b","open_cost":3}],
            "clients":["x"],"T":2,"g":0.5,"dist":[[[0],[1]],[[2],[3]]]}"#;
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.open_cost(0, 1), 2.5);
        assert_eq!(inst.open_cost(1, 0), 3.0);
        assert_eq!(inst.dist(1, 1, 0), 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generated_instances_validate_and_round_trip(
            nf in 1usize..5, nc in 1usize..6, horizon in 1usize..5,
            drift in 0.0f64..0.5, seed in any::<u64>(),
        ) {
            let inst = generate_drifting(nf, nc, horizon, drift, 1.5, seed).unwrap();
            prop_assert!(validate(&inst).passed());
            let text = serde_json::to_string(&inst).unwrap();
            let back = parse_instance(&text).unwrap();
            prop_assert_eq!(back, inst);
        }
    }
}
