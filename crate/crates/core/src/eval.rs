//! Step-validity metrics and dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::connectors::ConnectorFamily;
use crate::error::{Error, Result};
use crate::graph::ConnectivityGraph;
use crate::program::ValidityReport;

/// Which step count of a report to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Connectivity,
    Collision,
}

impl FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "connectivity" => Ok(StepMode::Connectivity),
            "collision" => Ok(StepMode::Collision),
            _ => Err(Error::DataFile {
                name: "mode".into(),
                message: format!("unknown step mode `{s}`"),
            }),
        }
    }
}

fn steps(r: &ValidityReport, mode: StepMode) -> usize {
    match mode {
        StepMode::Connectivity => r.connectivity_steps,
        StepMode::Collision => r.collision_steps,
    }
}

/// Mean number of valid steps before the first invalidating one.
pub fn mean_valid_steps(reports: &[ValidityReport], mode: StepMode) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Empty("reports"));
    }
    let total: usize = reports.iter().map(|r| steps(r, mode)).sum();
    Ok(total as f64 / reports.len() as f64)
}

/// Survival counts: `counts[k]` reports lasted at least `k` steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub total: usize,
    pub counts: Vec<usize>,
}

impl SurvivalCurve {
    pub fn proportion(&self, k: usize) -> f64 {
        self.counts.get(k).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    /// `(k, proportion)` for `k = 0..=max`.
    pub fn points(&self) -> Vec<(usize, f64)> {
        (0..self.counts.len()).map(|k| (k, self.proportion(k))).collect()
    }

    /// `Σ_{k≥1} proportion(k)`, summed over integer counts so that it
    /// equals [`mean_valid_steps`] bit for bit.
    pub fn area(&self) -> f64 {
        self.counts.iter().skip(1).sum::<usize>() as f64 / self.total as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,proportion\n");
        for (k, p) in self.points() {
            let _ = writeln!(s, "{k},{p}");
        }
        s
    }
}

pub fn survival_curve(reports: &[ValidityReport], mode: StepMode) -> Result<SurvivalCurve> {
    if reports.is_empty() {
        return Err(Error::Empty("reports"));
    }
    let max = reports.iter().map(|r| steps(r, mode)).max().unwrap_or(0);
    let mut at = vec![0usize; max + 1];
    for r in reports {
        at[steps(r, mode)] += 1;
    }
    // suffix sums
    let mut counts = vec![0usize; max + 1];
    let mut acc = 0;
    for k in (0..=max).rev() {
        acc += at[k];
        counts[k] = acc;
    }
    Ok(SurvivalCurve {
        total: reports.len(),
        counts,
    })
}

/// Pooled share of invalid placements.
pub fn p_invalid(outcomes: &[bool]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Empty("placements"));
    }
    Ok(outcomes.iter().filter(|&&ok| !ok).count() as f64 / outcomes.len() as f64)
}

/// [`p_invalid`] over the per-action outcomes of a batch of reports.
pub fn p_invalid_reports(reports: &[ValidityReport]) -> Result<f64> {
    let all: Vec<bool> = reports.iter().flat_map(|r| r.placements.iter().copied()).collect();
    p_invalid(&all)
}

/// Probability that `length` independent tokens all avoid an invalid mass
/// of `per_token_invalid_mass`.
pub fn sequence_validity_bound(per_token_invalid_mass: f64, length: u32) -> f64 {
    let m = per_token_invalid_mass.clamp(0.0, 1.0);
    (1.0 - m).powf(length as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartFrequency {
    /// Share of all part instances in the corpus.
    pub relative_frequency: f64,
    /// Share of samples containing the part at least once.
    pub sample_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    /// value → number of samples.
    pub parts_per_object: BTreeMap<usize, usize>,
    pub unique_parts_per_object: BTreeMap<usize, usize>,
    pub unique_colors_per_object: BTreeMap<usize, usize>,
    /// Share of samples containing at least one edge of each family.
    pub connection_type_sample_proportions: BTreeMap<ConnectorFamily, f64>,
    pub part_frequency: BTreeMap<String, PartFrequency>,
}

pub fn dataset_stats(corpus: &[ConnectivityGraph]) -> Result<DatasetStats> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let n = corpus.len() as f64;
    let mut parts = BTreeMap::new();
    let mut unique = BTreeMap::new();
    let mut colors = BTreeMap::new();
    let mut family_samples: BTreeMap<ConnectorFamily, usize> = ConnectorFamily::ALL.iter().map(|&f| (f, 0)).collect();
    let mut instance_count: BTreeMap<String, usize> = BTreeMap::new();
    let mut sample_count: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_instances = 0usize;
    for g in corpus {
        *parts.entry(g.nodes.len()).or_default() += 1;
        let ids: BTreeSet<&str> = g.nodes.values().map(|i| i.part_id.as_str()).collect();
        *unique.entry(ids.len()).or_default() += 1;
        let cs: BTreeSet<u32> = g.nodes.values().map(|i| i.color).collect();
        *colors.entry(cs.len()).or_default() += 1;
        let fams: BTreeSet<ConnectorFamily> = g.edges.iter().map(|e| e.family).collect();
        for f in fams {
            *family_samples.entry(f).or_default() += 1;
        }
        for inst in g.nodes.values() {
            *instance_count.entry(inst.part_id.clone()).or_default() += 1;
            total_instances += 1;
        }
        for id in ids {
            *sample_count.entry(id.to_string()).or_default() += 1;
        }
    }
    let part_frequency = instance_count
        .into_iter()
        .map(|(id, c)| {
            let s = sample_count[&id];
            (
                id,
                PartFrequency {
                    relative_frequency: c as f64 / total_instances as f64,
                    sample_proportion: s as f64 / n,
                },
            )
        })
        .collect();
    Ok(DatasetStats {
        samples: corpus.len(),
        parts_per_object: parts,
        unique_parts_per_object: unique,
        unique_colors_per_object: colors,
        connection_type_sample_proportions: family_samples.into_iter().map(|(f, c)| (f, c as f64 / n)).collect(),
        part_frequency,
    })
}
