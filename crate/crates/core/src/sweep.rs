//! Seed by parameter sweeps.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use thiserror::Error;

use crate::config::{parse_vary, ScenarioConfig, ScenarioDoc};
use crate::error::ConfigError;
use crate::sim::kernel::{run_with_seed, RunResult, SimError};
use crate::sim::metrics::Metrics;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}{}: {source}", value.as_ref().map(|v| format!(", value {v}")).unwrap_or_default())]
    Run {
        seed: u64,
        value: Option<String>,
        #[source]
        source: SimError,
    },
}

/// Parses `a..b` (inclusive on both ends).
pub fn parse_seeds(spec: &str) -> Result<RangeInclusive<u64>, ConfigError> {
    let bad = || ConfigError::invalid("--seeds", format!("expected a..b, got {spec:?}"));
    let (a, b) = spec.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(ConfigError::invalid("--seeds", "range is empty"));
    }
    Ok(a..=b)
}

#[derive(Debug, Clone)]
pub struct Vary {
    pub key: String,
    pub values: Vec<String>,
}

impl Vary {
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let (key, values) = parse_vary(spec)?;
        Ok(Vary { key, values })
    }
}

pub struct SweepRow {
    pub seed: u64,
    pub value: Option<String>,
    pub result: RunResult,
}

impl SweepRow {
    pub fn metrics(&self) -> &Metrics {
        &self.result.metrics
    }
}

/// Every override is resolved before anything runs, so a bad value fails the
/// whole sweep up front.
fn plan(
    doc: &ScenarioDoc,
    seeds: &RangeInclusive<u64>,
    vary: Option<&Vary>,
) -> Result<Vec<(u64, Option<String>, ScenarioConfig)>, ConfigError> {
    let variants: Vec<(Option<String>, ScenarioConfig)> = match vary {
        None => vec![(None, doc.resolve()?)],
        Some(v) => v
            .values
            .iter()
            .map(|val| Ok((Some(val.clone()), doc.with(&v.key, val)?.resolve()?)))
            .collect::<Result<_, ConfigError>>()?,
    };
    Ok(variants
        .iter()
        .flat_map(|(val, cfg)| seeds.clone().map(move |s| (s, val.clone(), cfg.clone())))
        .collect())
}

pub fn sweep(doc: &ScenarioDoc, seeds: RangeInclusive<u64>, vary: Option<&Vary>) -> Result<Vec<SweepRow>, SweepError> {
    let jobs = plan(doc, &seeds, vary)?;
    let one = |(seed, value, cfg): (u64, Option<String>, ScenarioConfig)| {
        log::debug!("sweep seed {seed} value {value:?}");
        match run_with_seed(&cfg, seed) {
            Ok(result) => Ok(SweepRow { seed, value, result }),
            Err(source) => Err(SweepError::Run { seed, value, source }),
        }
    };
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        jobs.into_par_iter().map(one).collect::<Vec<_>>()
    };
    #[cfg(not(feature = "parallel"))]
    let rows = jobs.into_iter().map(one).collect::<Vec<_>>();
    rows.into_iter().collect()
}

/// One CSV row per run: seed, varied key and value, then every metric.
pub fn to_csv(rows: &[SweepRow], vary: Option<&Vary>) -> String {
    let key = vary.map_or("", |v| v.key.as_str());
    let mut out = String::from("seed,vary_key,vary_value");
    if let Some(first) = rows.first() {
        for (name, _) in first.metrics().rows() {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.seed, key, r.value.as_deref().unwrap_or(""));
        for (_, v) in r.metrics().rows() {
            out.push(',');
            out.push_str(&v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..20").unwrap(), 1..=20);
        assert_eq!(parse_seeds("3..3").unwrap(), 3..=3);
        assert_eq!(parse_seeds("1..=4").unwrap(), 1..=4);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn unknown_vary_key_is_a_config_error() {
        assert!(matches!(Vary::parse("th_tokn=1,2"), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn cross_product_row_count() {
        let doc = crate::fixtures::doc("clean").unwrap();
        let vary = Vary::parse("detection_enabled=true,false").unwrap();
        let rows = sweep(&doc, 1..=3, Some(&vary)).unwrap();
        assert_eq!(rows.len(), 6);
        let csv = to_csv(&rows, Some(&vary));
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,detection_enabled,true,"));
    }
}
