//! Trial records, aggregates and their JSON / CSV forms.
//!
//! Maps are `BTreeMap`s and records are sorted by trial index, so equal
//! reports serialize to equal bytes. Non-finite reals are written as the
//! strings `"inf"`, `"-inf"` and `"nan"`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrialConfig;
use crate::error::{Error, Result};
use crate::numerics::rng::Seed;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a real: {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod map {
        use std::collections::BTreeMap;

        use super::*;

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
            let out: BTreeMap<&String, Repr> = m.iter().map(|(k, v)| (k, to_repr(*v))).collect();
            out.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
            let raw = BTreeMap::<String, Repr>::deserialize(d)?;
            raw.into_iter().map(|(k, v)| Ok((k, from_repr(v)?))).collect()
        }
    }
}

/// Realized quantities of one trial.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: Seed,
    #[serde(with = "real::map")]
    pub values: BTreeMap<String, f64>,
    /// Outcome of each certified check run in this trial.
    pub passes: BTreeMap<String, bool>,
    /// Message of the first error met by a check of this trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn new(trial: usize, seed: Seed) -> Self {
        TrialRecord {
            trial,
            seed,
            ..TrialRecord::default()
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.values.insert(key.into(), value);
    }

    pub fn check(&mut self, key: impl Into<String>, pass: bool) {
        self.passes.insert(key.into(), pass);
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    /// Records a check that could not be evaluated as failed.
    pub fn fail_with(&mut self, key: impl Into<String>, err: &Error) {
        self.passes.insert(key.into(), false);
        if self.error.is_none() {
            self.error = Some(err.to_string());
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passes.values().all(|&p| p)
    }
}

/// Mean, standard error and range of one recorded quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    #[serde(with = "real")]
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; zero below two samples
    /// and infinite when the mean is not finite.
    #[serde(with = "real")]
    pub std_error: f64,
    #[serde(with = "real")]
    pub min: f64,
    #[serde(with = "real")]
    pub max: f64,
}

impl Aggregate {
    /// Sums run in slice order.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let std_error = if !mean.is_finite() {
            f64::INFINITY
        } else if count < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        };
        Some(Aggregate {
            count,
            mean,
            std_error,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// `pass` iff `empirical <= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(with = "real")]
    pub empirical: f64,
    #[serde(with = "real")]
    pub threshold: f64,
    /// The bound is at least the largest value the quantity can take.
    pub vacuous: bool,
}

impl Verdict {
    pub fn at_most(empirical: f64, threshold: f64, vacuous: bool) -> Self {
        Verdict {
            pass: empirical <= threshold,
            empirical,
            threshold,
            vacuous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailingSeed {
    pub trial: usize,
    pub seed: Seed,
    pub check: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: TrialConfig,
    pub records: Vec<TrialRecord>,
    pub aggregates: BTreeMap<String, Aggregate>,
    #[serde(with = "real::map")]
    pub bounds: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub failing_seeds: Vec<FailingSeed>,
    pub tool_version: String,
}

impl AggregateReport {
    pub fn new(config: TrialConfig, mut records: Vec<TrialRecord>) -> Self {
        records.sort_by_key(|r| r.trial);
        AggregateReport {
            config,
            records,
            aggregates: BTreeMap::new(),
            bounds: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            failing_seeds: Vec::new(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    /// Column of `key` over the records that have it, in trial order.
    pub fn column(&self, key: &str) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.value(key)).collect()
    }

    /// Aggregates every recorded value key.
    pub fn aggregate_all(&mut self) {
        let keys: std::collections::BTreeSet<String> =
            self.records.iter().flat_map(|r| r.values.keys().cloned()).collect();
        for key in keys {
            if let Some(a) = Aggregate::from_values(&self.column(&key)) {
                self.aggregates.insert(key, a);
            }
        }
    }

    /// Lists every failed check of every record.
    pub fn collect_failures(&mut self) {
        self.failing_seeds = self
            .records
            .iter()
            .flat_map(|r| {
                r.passes.iter().filter(|(_, &p)| !p).map(move |(check, _)| FailingSeed {
                    trial: r.trial,
                    seed: r.seed,
                    check: check.clone(),
                })
            })
            .collect();
    }

    /// True when every verdict passes; a report without verdicts passes.
    pub fn pass(&self) -> bool {
        self.verdicts.values().all(|v| v.pass)
    }

    /// The JSON report without `tool_version`; equal configurations give
    /// byte-identical bodies.
    pub fn body_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| Error::Serialization(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("tool_version");
        }
        serde_json::to_string_pretty(&value).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// One row per record: `trial`, `seed`, every value key, then every
    /// check as `pass_<name>` in `0/1`. Missing cells are empty.
    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let value_keys: std::collections::BTreeSet<&String> =
            self.records.iter().flat_map(|r| r.values.keys()).collect();
        let pass_keys: std::collections::BTreeSet<&String> =
            self.records.iter().flat_map(|r| r.passes.keys()).collect();
        let mut w = csv::Writer::from_writer(out);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header = vec!["trial".to_string(), "seed".to_string()];
        header.extend(value_keys.iter().map(|k| k.to_string()));
        header.extend(pass_keys.iter().map(|k| format!("pass_{k}")));
        w.write_record(&header).map_err(ser)?;
        for r in &self.records {
            let mut row = vec![r.trial.to_string(), r.seed.0.to_string()];
            row.extend(value_keys.iter().map(|k| r.values.get(*k).map(|v| v.to_string()).unwrap_or_default()));
            row.extend(pass_keys.iter().map(|k| match r.passes.get(*k) {
                Some(true) => "1".to_string(),
                Some(false) => "0".to_string(),
                None => String::new(),
            }));
            w.write_record(&row).map_err(ser)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn emit_report(r: &AggregateReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Json => {
            out.write_all(r.to_json()?.as_bytes()).map_err(io_err(path))?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
        ReportFormat::Csv => r.to_csv(&mut out)?,
    }
    out.flush().map_err(io_err(path))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<AggregateReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    AggregateReport::from_json(&text)
}
