//! Five-axis telemetry: per-query records, an append-only JSONL store,
//! per-spec aggregation, Pareto frontiers, and the cost amortization
//! calculator.
//!
//! Records are keyed by spec content hash so measurements survive
//! re-versioning. Power is never stored: it is defined as energy over
//! latency and recomputed wherever it is displayed, so the identity cannot
//! drift.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from recording, loading, or analyzing telemetry.
#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("telemetry I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt telemetry store at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("invalid telemetry record: {0}")]
    InvalidRecord(String),
    #[error("no telemetry records for spec hash {spec_hash}")]
    NoRecords { spec_hash: String },
    #[error("point `{label}` has {got} objective values, expected {expected}")]
    DimensionMismatch {
        label: String,
        expected: usize,
        got: usize,
    },
    #[error("point `{label}` has a non-finite objective value")]
    NonFinitePoint { label: String },
    #[error("amortization requires a positive total query count")]
    ZeroQueries,
    #[error("invalid amortization input: {0}")]
    InvalidAmortization(String),
}

/// One query's measurements under one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub query_id: String,
    pub spec_hash: String,
    pub accuracy: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub cost_usd: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

impl TelemetryRecord {
    /// Validates and builds a record stamped with the current wall clock.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        query_id: impl Into<String>,
        spec_hash: impl Into<String>,
        accuracy: f64,
        energy_j: f64,
        latency_s: f64,
        cost_usd: f64,
        input_tokens: u64,
        output_tokens: u64,
    ) -> Result<TelemetryRecord, TelemetryError> {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        TelemetryRecord::with_timestamp(
            query_id,
            spec_hash,
            accuracy,
            energy_j,
            latency_s,
            cost_usd,
            input_tokens,
            output_tokens,
            timestamp_ms,
        )
    }

    /// Validates and builds a record with an explicit timestamp.
    #[allow(clippy::too_many_arguments)]
    pub fn with_timestamp(
        query_id: impl Into<String>,
        spec_hash: impl Into<String>,
        accuracy: f64,
        energy_j: f64,
        latency_s: f64,
        cost_usd: f64,
        input_tokens: u64,
        output_tokens: u64,
        timestamp_ms: u64,
    ) -> Result<TelemetryRecord, TelemetryError> {
        let invalid = |m: &str| TelemetryError::InvalidRecord(m.to_string());
        if !(0.0..=1.0).contains(&accuracy) || !accuracy.is_finite() {
            return Err(invalid("accuracy must be within [0, 1]"));
        }
        if !(latency_s.is_finite() && latency_s > 0.0) {
            return Err(invalid("latency must be positive"));
        }
        if !(energy_j.is_finite() && energy_j >= 0.0) {
            return Err(invalid("energy must be nonnegative"));
        }
        if !(cost_usd.is_finite() && cost_usd >= 0.0) {
            return Err(invalid("cost must be nonnegative"));
        }
        Ok(TelemetryRecord {
            query_id: query_id.into(),
            spec_hash: spec_hash.into(),
            accuracy,
            energy_j,
            latency_s,
            cost_usd,
            input_tokens,
            output_tokens,
            timestamp_ms,
        })
    }

    /// Watts, defined as energy over latency. Derived on demand, never
    /// stored, so the identity holds on every record by construction.
    pub fn power_w(&self) -> f64 {
        self.energy_j / self.latency_s
    }
}

/// Append-only JSONL store of telemetry records.
///
/// Each append serializes to one line and lands in a single appending write
/// under a lock, so concurrent appends from parallel gate executions
/// interleave whole records and readers see a consistent prefix.
pub struct TelemetryStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl TelemetryStore {
    /// Opens (creating if needed) a store at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<TelemetryStore, TelemetryError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(TelemetryStore {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record atomically.
    pub fn append(&self, record: &TelemetryRecord) -> Result<(), TelemetryError> {
        let mut line = serde_json::to_string(record)
            .map_err(|e| TelemetryError::InvalidRecord(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().expect("telemetry store lock poisoned");
        file.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Loads a snapshot of every record in append order.
    pub fn load(&self) -> Result<Vec<TelemetryRecord>, TelemetryError> {
        let text = std::fs::read_to_string(&self.path)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let record: TelemetryRecord =
                serde_json::from_str(line).map_err(|e| TelemetryError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        Ok(records)
    }
}

/// Validates and appends one record; the `record` verb of the module.
pub fn record(store: &TelemetryStore, record: &TelemetryRecord) -> Result<(), TelemetryError> {
    store.append(record)
}

/// Aggregate view of all records for one spec hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub spec_hash: String,
    pub n_queries: usize,
    pub mean_accuracy: f64,
    pub mean_energy_j: f64,
    pub total_energy_j: f64,
    pub mean_latency_s: f64,
    pub mean_power_w: f64,
    pub mean_cost_usd: f64,
    pub total_cost_usd: f64,
}

/// Arithmetic means and totals over the records matching `spec_hash`, in
/// store order.
pub fn aggregate(records: &[TelemetryRecord], spec_hash: &str) -> Result<SpecSummary, TelemetryError> {
    let matching: Vec<&TelemetryRecord> = records
        .iter()
        .filter(|r| r.spec_hash == spec_hash)
        .collect();
    if matching.is_empty() {
        return Err(TelemetryError::NoRecords {
            spec_hash: spec_hash.to_string(),
        });
    }
    let n = matching.len() as f64;
    let sum = |f: &dyn Fn(&TelemetryRecord) -> f64| -> f64 { matching.iter().map(|r| f(r)).sum() };
    let total_energy_j = sum(&|r| r.energy_j);
    let total_cost_usd = sum(&|r| r.cost_usd);
    Ok(SpecSummary {
        spec_hash: spec_hash.to_string(),
        n_queries: matching.len(),
        mean_accuracy: sum(&|r| r.accuracy) / n,
        mean_energy_j: total_energy_j / n,
        total_energy_j,
        mean_latency_s: sum(&|r| r.latency_s) / n,
        mean_power_w: sum(&|r| r.power_w()) / n,
        mean_cost_usd: total_cost_usd / n,
        total_cost_usd,
    })
}

/// Optimization direction of one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// A named objective axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub name: String,
    pub direction: Direction,
}

impl Objective {
    pub fn maximize(name: &str) -> Objective {
        Objective {
            name: name.to_string(),
            direction: Direction::Maximize,
        }
    }

    pub fn minimize(name: &str) -> Objective {
        Objective {
            name: name.to_string(),
            direction: Direction::Minimize,
        }
    }
}

/// A labeled point in objective space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub values: Vec<f64>,
}

/// True iff `p` dominates `q`: no worse on every objective and strictly
/// better on at least one. Ties on all axes dominate in neither direction.
pub fn dominates(p: &ParetoPoint, q: &ParetoPoint, objectives: &[Objective]) -> bool {
    let mut strictly_better = false;
    for (i, obj) in objectives.iter().enumerate() {
        let (a, b) = (p.values[i], q.values[i]);
        let (better, worse) = match obj.direction {
            Direction::Maximize => (a > b, a < b),
            Direction::Minimize => (a < b, a > b),
        };
        if worse {
            return false;
        }
        if better {
            strictly_better = true;
        }
    }
    strictly_better
}

fn check_points(points: &[ParetoPoint], objectives: &[Objective]) -> Result<(), TelemetryError> {
    for p in points {
        if p.values.len() != objectives.len() {
            return Err(TelemetryError::DimensionMismatch {
                label: p.label.clone(),
                expected: objectives.len(),
                got: p.values.len(),
            });
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(TelemetryError::NonFinitePoint {
                label: p.label.clone(),
            });
        }
    }
    Ok(())
}

/// Per-point frontier membership flags, in input order.
///
/// Runs an insert-and-prune pass over a running frontier: a point dominated
/// by any live member is dropped, otherwise it evicts the members it
/// dominates and joins. Dominance is transitive, so checking live members
/// only is sound.
pub fn pareto_flags(
    points: &[ParetoPoint],
    objectives: &[Objective],
) -> Result<Vec<bool>, TelemetryError> {
    check_points(points, objectives)?;
    let mut frontier: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if frontier.iter().any(|&j| dominates(&points[j], p, objectives)) {
            continue;
        }
        frontier.retain(|&j| !dominates(p, &points[j], objectives));
        frontier.push(i);
    }
    let mut flags = vec![false; points.len()];
    for j in frontier {
        flags[j] = true;
    }
    Ok(flags)
}

/// The non-dominated subset, preserving input order. Duplicate points
/// dominate neither direction, so all copies are retained.
pub fn pareto_frontier(
    points: &[ParetoPoint],
    objectives: &[Objective],
) -> Result<Vec<ParetoPoint>, TelemetryError> {
    let flags = pareto_flags(points, objectives)?;
    Ok(points
        .iter()
        .zip(flags)
        .filter(|(_, keep)| *keep)
        .map(|(p, _)| p.clone())
        .collect())
}

/// Whether the amortized local cost beats the cloud price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostDirection {
    Cheaper,
    MoreExpensive,
}

impl fmt::Display for CostDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostDirection::Cheaper => f.write_str("cheaper"),
            CostDirection::MoreExpensive => f.write_str("more expensive"),
        }
    }
}

/// Result of amortizing a one-time search cost over lifetime queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amortization {
    pub amortized_per_query: f64,
    /// Cost ratio against the cloud price, computed from the raw (unrounded)
    /// amortized value: amortized/cloud when more expensive, cloud/amortized
    /// when cheaper. Infinite when the denominator is 0.
    pub ratio: f64,
    pub direction: CostDirection,
}

impl fmt::Display for Amortization {
    /// Renders the table-row form, e.g. `0.0223 / 2.5× more expensive`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ratio = if self.ratio.is_infinite() {
            "∞".to_string()
        } else {
            format!("{:.1}", self.ratio)
        };
        write!(
            f,
            "{:.4} / {}× {}",
            self.amortized_per_query, ratio, self.direction
        )
    }
}

/// Spreads `search_cost` over `queries_per_day * days` queries and compares
/// against the per-query cloud price.
pub fn amortize(
    search_cost: f64,
    queries_per_day: u64,
    days: u64,
    cloud_cost_per_query: f64,
) -> Result<Amortization, TelemetryError> {
    if !(search_cost.is_finite() && search_cost >= 0.0) {
        return Err(TelemetryError::InvalidAmortization(
            "search cost must be nonnegative".to_string(),
        ));
    }
    if !(cloud_cost_per_query.is_finite() && cloud_cost_per_query >= 0.0) {
        return Err(TelemetryError::InvalidAmortization(
            "cloud cost must be nonnegative".to_string(),
        ));
    }
    let total_queries = queries_per_day.checked_mul(days).unwrap_or(0);
    if total_queries == 0 {
        return Err(TelemetryError::ZeroQueries);
    }
    let amortized = search_cost / total_queries as f64;
    let (ratio, direction) = if amortized > cloud_cost_per_query {
        (amortized / cloud_cost_per_query, CostDirection::MoreExpensive)
    } else if amortized == cloud_cost_per_query {
        (1.0, CostDirection::Cheaper)
    } else {
        (cloud_cost_per_query / amortized, CostDirection::Cheaper)
    };
    Ok(Amortization {
        amortized_per_query: amortized,
        ratio,
        direction,
    })
}
