//! Per-(environment, variant) report tables: score curves, optimality gaps
//! and pairwise probability of improvement.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use super::stats::{
    bootstrap_ci, iqm, optimality_gap, poi_ci, BootstrapConfig, MetricSummary, CONFIDENCE,
    N_RESAMPLES,
};
use super::EvalError;
use crate::envs::EnvId;
use crate::tamer::{Checkpoint, Variant};

/// Label of the cross-environment gap rows.
pub const POOLED: &str = "pooled";

/// One training run's evaluation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub env: EnvId,
    pub variant: Variant,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunRecord {
    pub fn scores(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.score).collect()
    }

    pub fn grid(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|c| c.env_steps).collect()
    }

    pub fn optimality_gap(&self) -> Result<f64, EvalError> {
        optimality_gap(&self.scores())
    }

    /// Strictly increasing steps at a constant cadence.
    pub fn validate(&self) -> Result<(), EvalError> {
        let g = self.grid();
        if g.is_empty() {
            return Err(EvalError::Empty);
        }
        let bad = |why: &str| {
            EvalError::GridMismatch(format!(
                "{}/{} seed {}: {why}",
                self.env, self.variant, self.seed
            ))
        };
        if g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("env_steps not strictly increasing"));
        }
        if g.len() > 2 && g.windows(2).any(|w| w[1] - w[0] != g[1] - g[0]) {
            return Err(bad("uneven checkpoint cadence"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateConfig {
    pub n_resamples: usize,
    pub level: f64,
    /// Restricts the POI table to these ordered pairs; all pairs otherwise.
    pub compare: Option<Vec<(Variant, Variant)>>,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            n_resamples: N_RESAMPLES,
            level: CONFIDENCE,
            compare: None,
        }
    }
}

impl AggregateConfig {
    fn bootstrap(&self, key: &str) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.n_resamples,
            level: self.level,
            seed: key_seed(key),
        }
    }
}

/// Bootstrap seed derived from a table key, so a row's interval does not
/// depend on which other rows are present.
fn key_seed(key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub env: String,
    pub variant: String,
    pub env_steps: u64,
    pub iqm: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub env: String,
    pub variant: String,
    pub iqm_gap: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRow {
    pub env: String,
    pub variant_x: String,
    pub variant_y: String,
    pub poi: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub curves: Vec<CurveRow>,
    pub gaps: Vec<GapRow>,
    pub poi: Vec<PoiRow>,
}

impl Report {
    pub fn gap(&self, env: &str, variant: Variant) -> Option<&GapRow> {
        self.gaps
            .iter()
            .find(|g| g.env == env && g.variant == variant.name())
    }

    pub fn poi(&self, env: &str, x: Variant, y: Variant) -> Option<&PoiRow> {
        self.poi
            .iter()
            .find(|p| p.env == env && p.variant_x == x.name() && p.variant_y == y.name())
    }
}

fn summarize(values: &[f64], key: &str, config: &AggregateConfig) -> Result<MetricSummary, EvalError> {
    if values.len() == 1 {
        return Ok(MetricSummary::single(values[0]));
    }
    bootstrap_ci(values, iqm, &config.bootstrap(key))
}

/// Builds all report tables. Runs are grouped by (env, variant) and ordered
/// by seed, so the output does not depend on input order.
pub fn aggregate(records: &[RunRecord], config: &AggregateConfig) -> Result<Report, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: BTreeMap<EnvId, BTreeMap<Variant, Vec<&RunRecord>>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        groups
            .entry(r.env)
            .or_default()
            .entry(r.variant)
            .or_default()
            .push(r);
    }
    for variants in groups.values_mut() {
        let mut reference: Option<&RunRecord> = None;
        for runs in variants.values_mut() {
            runs.sort_by_key(|r| r.seed);
            if let Some(w) = runs.windows(2).find(|w| w[0].seed == w[1].seed) {
                return Err(EvalError::GridMismatch(format!(
                    "{}/{}: seed {} appears twice",
                    w[0].env, w[0].variant, w[0].seed
                )));
            }
            for r in runs.iter() {
                let base = *reference.get_or_insert(r);
                if r.grid() != base.grid() {
                    return Err(EvalError::GridMismatch(format!(
                        "{}/{} seed {} has {} checkpoints ending at {:?}; {}/{} seed {} has {} ending at {:?}",
                        r.env,
                        r.variant,
                        r.seed,
                        r.checkpoints.len(),
                        r.grid().last(),
                        base.env,
                        base.variant,
                        base.seed,
                        base.checkpoints.len(),
                        base.grid().last(),
                    )));
                }
            }
        }
    }

    let mut report = Report::default();
    let mut pooled: BTreeMap<Variant, Vec<f64>> = BTreeMap::new();
    for (env, variants) in &groups {
        let mut gaps_by_variant: Vec<(Variant, Vec<f64>)> = Vec::new();
        for (variant, runs) in variants {
            let grid = runs[0].grid();
            for (k, steps) in grid.iter().enumerate() {
                let column: Vec<f64> = runs.iter().map(|r| r.checkpoints[k].score).collect();
                let key = format!("curve/{env}/{variant}/{steps}");
                let s = summarize(&column, &key, config)?;
                report.curves.push(CurveRow {
                    env: env.name().into(),
                    variant: variant.name().into(),
                    env_steps: *steps,
                    iqm: s.point,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                    n: runs.len(),
                });
            }
            let gaps = runs
                .iter()
                .map(|r| r.optimality_gap())
                .collect::<Result<Vec<_>, _>>()?;
            let s = summarize(&gaps, &format!("gap/{env}/{variant}"), config)?;
            report.gaps.push(GapRow {
                env: env.name().into(),
                variant: variant.name().into(),
                iqm_gap: s.point,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                n: gaps.len(),
            });
            pooled.entry(*variant).or_default().extend(&gaps);
            gaps_by_variant.push((*variant, gaps));
        }
        push_poi(&mut report, env.name(), &gaps_by_variant, config)?;
    }
    if groups.len() > 1 {
        for (variant, gaps) in &pooled {
            let s = summarize(gaps, &format!("gap/{POOLED}/{variant}"), config)?;
            report.gaps.push(GapRow {
                env: POOLED.into(),
                variant: variant.name().into(),
                iqm_gap: s.point,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                n: gaps.len(),
            });
        }
    }
    Ok(report)
}

fn push_poi(
    report: &mut Report,
    env: &str,
    gaps: &[(Variant, Vec<f64>)],
    config: &AggregateConfig,
) -> Result<(), EvalError> {
    let pairs: Vec<(Variant, Variant)> = match &config.compare {
        Some(pairs) => pairs.clone(),
        None => gaps
            .iter()
            .flat_map(|(x, _)| gaps.iter().map(move |(y, _)| (*x, *y)))
            .collect(),
    };
    let lookup = |v: Variant| gaps.iter().find(|(w, _)| *w == v).map(|(_, g)| g);
    for (x, y) in pairs {
        let (Some(gx), Some(gy)) = (lookup(x), lookup(y)) else {
            continue;
        };
        let c = poi_ci(
            x.name(),
            gx,
            y.name(),
            gy,
            &config.bootstrap(&format!("poi/{env}/{x}/{y}")),
        )?;
        report.poi.push(PoiRow {
            env: env.into(),
            variant_x: c.variant_x,
            variant_y: c.variant_y,
            poi: c.poi,
            ci_low: c.ci_low,
            ci_high: c.ci_high,
        });
    }
    Ok(())
}
