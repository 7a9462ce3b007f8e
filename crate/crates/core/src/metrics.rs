//! Fairness and utility metrics.
//!
//! Classification and retrieval metrics are fractions; generation metrics are
//! percentages.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationOutcome {
    pub predicted: Vec<usize>,
    /// Binary sensitive attribute per sample.
    pub group: Vec<usize>,
    pub true_label: Option<Vec<usize>>,
}

impl ClassificationOutcome {
    pub fn new(predicted: Vec<usize>, group: Vec<usize>, true_label: Option<Vec<usize>>) -> Result<Self> {
        if predicted.len() != group.len() {
            return Err(Error::dims(predicted.len(), group.len()));
        }
        if let Some(t) = &true_label {
            if t.len() != predicted.len() {
                return Err(Error::dims(predicted.len(), t.len()));
            }
        }
        if let Some(&g) = group.iter().find(|&&g| g > 1) {
            return Err(Error::InvalidArgument(format!(
                "demographic parity needs a binary attribute; found group value {g}"
            )));
        }
        Ok(Self {
            predicted,
            group,
            true_label,
        })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    /// Fraction of correct predictions; `None` without ground truth.
    pub fn accuracy(&self) -> Option<f64> {
        let t = self.true_label.as_ref()?;
        if t.is_empty() {
            return None;
        }
        let hits = t.iter().zip(&self.predicted).filter(|(a, b)| a == b).count();
        Some(hits as f64 / t.len() as f64)
    }
}

/// Mean over classes of the absolute gap in prediction frequency between the
/// two groups.
pub fn delta_dp(outcome: &ClassificationOutcome, class_count: usize) -> Result<f64> {
    if class_count == 0 {
        return Err(Error::InvalidArgument("class set is empty".into()));
    }
    let mut counts = [vec![0usize; class_count], vec![0usize; class_count]];
    let mut sizes = [0usize; 2];
    for (&p, &g) in outcome.predicted.iter().zip(&outcome.group) {
        if p >= class_count {
            return Err(Error::InvalidArgument(format!("predicted class {p} outside 0..{class_count}")));
        }
        counts[g][p] += 1;
        sizes[g] += 1;
    }
    for (g, &n) in sizes.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyGroup(format!("group a={g}")));
        }
    }
    let gap: f64 = (0..class_count)
        .map(|c| (counts[1][c] as f64 / sizes[1] as f64 - counts[0][c] as f64 / sizes[0] as f64).abs())
        .sum();
    Ok(gap / class_count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalOutcome {
    /// Item ids per query, most similar first.
    pub rankings: Vec<Vec<usize>>,
    /// Attribute value of every item.
    pub item_attribute: Vec<usize>,
    /// Dataset proportion of every attribute value.
    pub proportions: Vec<f64>,
    pub ground_truth: Option<Vec<usize>>,
}

impl RetrievalOutcome {
    pub fn new(
        rankings: Vec<Vec<usize>>,
        item_attribute: Vec<usize>,
        proportions: Vec<f64>,
        ground_truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        let total: f64 = proportions.iter().sum();
        if proportions.is_empty() || (total - 1.0).abs() > 1e-9 || proportions.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(format!("attribute proportions must be non-negative and sum to 1, got {total}")));
        }
        if let Some(&a) = item_attribute.iter().find(|&&a| a >= proportions.len()) {
            return Err(Error::InvalidArgument(format!("item attribute {a} has no proportion")));
        }
        let n_items = item_attribute.len();
        for (q, ranking) in rankings.iter().enumerate() {
            let mut seen = vec![false; n_items];
            for &item in ranking {
                if item >= n_items {
                    return Err(Error::InvalidArgument(format!("query {q} ranks unknown item {item}")));
                }
                if std::mem::replace(&mut seen[item], true) {
                    return Err(Error::InvalidArgument(format!("query {q} ranks item {item} twice")));
                }
            }
        }
        if let Some(gt) = &ground_truth {
            if gt.len() != rankings.len() {
                return Err(Error::dims(rankings.len(), gt.len()));
            }
        }
        Ok(Self {
            rankings,
            item_attribute,
            proportions,
            ground_truth,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.rankings.len()
    }
}

fn check_k(k: usize, outcome: &RetrievalOutcome) -> Result<()> {
    let len = outcome.item_attribute.len();
    if k == 0 || k > len {
        return Err(Error::KOutOfRange { k, len });
    }
    Ok(())
}

/// Fraction of queries whose ground-truth item is among the first `k`.
pub fn recall_at_k(outcome: &RetrievalOutcome, k: usize) -> Result<f64> {
    check_k(k, outcome)?;
    let gt = outcome
        .ground_truth
        .as_ref()
        .ok_or(Error::EmptyInput("retrieval ground truth"))?;
    if gt.is_empty() {
        return Err(Error::EmptyInput("retrieval queries"));
    }
    let hits = outcome
        .rankings
        .iter()
        .zip(gt)
        .filter(|(ranking, g)| ranking.iter().take(k).any(|i| i == *g))
        .count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Per-query `max_a |log(p̂_a / p_a)|` over the top `k`, averaged over queries.
///
/// `p̂_a = (count_a + α) / (n + α·|A|)` where `n` is the number of retrieved
/// items considered. With `α = 0` a group missing from the top `k` makes the
/// log undefined and is reported as an error.
pub fn skew_at_k(outcome: &RetrievalOutcome, k: usize, alpha: f64) -> Result<f64> {
    check_k(k, outcome)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing alpha must be >= 0, got {alpha}")));
    }
    if outcome.rankings.is_empty() {
        return Err(Error::EmptyInput("retrieval queries"));
    }
    if let Some(a) = outcome.proportions.iter().position(|&p| p <= 0.0) {
        return Err(Error::InvalidArgument(format!("attribute value {a} has zero dataset proportion")));
    }
    let groups = outcome.proportions.len();
    let mut total = 0.0;
    for (q, ranking) in outcome.rankings.iter().enumerate() {
        let top = &ranking[..k.min(ranking.len())];
        if top.is_empty() {
            return Err(Error::EmptyRanking { query: q });
        }
        let mut counts = vec![0usize; groups];
        for &item in top {
            counts[outcome.item_attribute[item]] += 1;
        }
        let denom = top.len() as f64 + alpha * groups as f64;
        let mut worst = 0.0f64;
        for (a, &c) in counts.iter().enumerate() {
            let share = (c as f64 + alpha) / denom;
            if share == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "query {q}: attribute value {a} absent from the top {k}; use alpha > 0"
                )));
            }
            worst = worst.max((share / outcome.proportions[a]).ln().abs());
        }
        total += worst;
    }
    Ok(total / outcome.rankings.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RequestedGender {
    Male,
    Female,
    Neutral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectedGender {
    Male,
    Female,
}

impl std::str::FromStr for RequestedGender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(RequestedGender::Male),
            "female" => Ok(RequestedGender::Female),
            "neutral" => Ok(RequestedGender::Neutral),
            other => Err(Error::InvalidArgument(format!("unknown requested gender {other:?}"))),
        }
    }
}

impl std::str::FromStr for DetectedGender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(DetectedGender::Male),
            "female" => Ok(DetectedGender::Female),
            other => Err(Error::InvalidArgument(format!("unknown detected gender {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationRecord {
    pub profession: String,
    pub requested: RequestedGender,
    pub detected: DetectedGender,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationOutcome {
    pub records: Vec<GenerationRecord>,
    pub generations_per_prompt: usize,
}

impl GenerationOutcome {
    pub fn new(records: Vec<GenerationRecord>, generations_per_prompt: usize) -> Result<Self> {
        if generations_per_prompt == 0 {
            return Err(Error::InvalidArgument("generations per prompt must be >= 1".into()));
        }
        Ok(Self {
            records,
            generations_per_prompt,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MismatchRates {
    pub mr_m: f64,
    pub mr_f: f64,
    pub mr_o: f64,
    pub abs_diff: f64,
    pub mrc: f64,
}

pub fn mismatch_rates(outcome: &GenerationOutcome) -> Result<MismatchRates> {
    let (mut n_m, mut miss_m, mut n_f, mut miss_f) = (0usize, 0usize, 0usize, 0usize);
    for r in &outcome.records {
        match r.requested {
            RequestedGender::Male => {
                n_m += 1;
                miss_m += usize::from(r.detected == DetectedGender::Female);
            }
            RequestedGender::Female => {
                n_f += 1;
                miss_f += usize::from(r.detected == DetectedGender::Male);
            }
            RequestedGender::Neutral => {}
        }
    }
    if n_m == 0 {
        return Err(Error::EmptyGroup("male-requested generations".into()));
    }
    if n_f == 0 {
        return Err(Error::EmptyGroup("female-requested generations".into()));
    }
    let mr_m = 100.0 * miss_m as f64 / n_m as f64;
    let mr_f = 100.0 * miss_f as f64 / n_f as f64;
    let mr_o = 100.0 * (miss_m + miss_f) as f64 / (n_m + n_f) as f64;
    Ok(MismatchRates {
        mr_m,
        mr_f,
        mr_o,
        abs_diff: (mr_m - mr_f).abs(),
        mrc: mr_o.hypot(mr_f - mr_m),
    })
}

/// Mean over professions of the dominant gender's share among neutral-prompt
/// generations, in percent.
pub fn generation_skew(outcome: &GenerationOutcome) -> Result<f64> {
    let n = outcome.generations_per_prompt;
    let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in outcome.records.iter().filter(|r| r.requested == RequestedGender::Neutral) {
        let e = per.entry(r.profession.as_str()).or_default();
        match r.detected {
            DetectedGender::Male => e.0 += 1,
            DetectedGender::Female => e.1 += 1,
        }
    }
    if per.is_empty() {
        return Err(Error::EmptyGroup("neutral-prompt generations".into()));
    }
    let mut total = 0.0;
    for (p, &(m, f)) in &per {
        if m + f != n {
            return Err(Error::IncompleteProfession {
                profession: p.to_string(),
                expected: n,
                found: m + f,
            });
        }
        total += m.max(f) as f64 / n as f64;
    }
    Ok(100.0 * total / per.len() as f64)
}

/// `(baseline − method) / baseline × 100`.
pub fn improvement_percent(baseline: f64, method: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() || !method.is_finite() {
        return Err(Error::InvalidArgument(format!("improvement undefined for baseline {baseline}")));
    }
    Ok((baseline - method) / baseline * 100.0)
}

/// Outcomes that can be bootstrapped. A unit is whatever is drawn with
/// replacement: a sample, a query, or a prompt group.
pub trait Resample: Sized {
    fn units(&self) -> usize;
    fn resample(&self, picks: &[usize]) -> Self;
}

impl Resample for ClassificationOutcome {
    fn units(&self) -> usize {
        self.predicted.len()
    }

    fn resample(&self, picks: &[usize]) -> Self {
        Self {
            predicted: picks.iter().map(|&i| self.predicted[i]).collect(),
            group: picks.iter().map(|&i| self.group[i]).collect(),
            true_label: self.true_label.as_ref().map(|t| picks.iter().map(|&i| t[i]).collect()),
        }
    }
}

impl Resample for RetrievalOutcome {
    fn units(&self) -> usize {
        self.rankings.len()
    }

    fn resample(&self, picks: &[usize]) -> Self {
        Self {
            rankings: picks.iter().map(|&i| self.rankings[i].clone()).collect(),
            item_attribute: self.item_attribute.clone(),
            proportions: self.proportions.clone(),
            ground_truth: self.ground_truth.as_ref().map(|g| picks.iter().map(|&i| g[i]).collect()),
        }
    }
}

impl GenerationOutcome {
    fn prompt_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<(&str, RequestedGender), Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry((r.profession.as_str(), r.requested)).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

/// Resamples whole prompts, so each profession keeps its `n` generations.
/// A prompt drawn more than once gets a numbered copy of its profession name.
impl Resample for GenerationOutcome {
    fn units(&self) -> usize {
        self.prompt_groups().len()
    }

    fn resample(&self, picks: &[usize]) -> Self {
        let groups = self.prompt_groups();
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut records = Vec::new();
        for &g in picks {
            let copy = seen.entry(g).or_default();
            for &i in &groups[g] {
                let mut r = self.records[i].clone();
                if *copy > 0 {
                    r.profession = format!("{}#{}", r.profession, copy);
                }
                records.push(r);
            }
            *copy += 1;
        }
        Self {
            records,
            generations_per_prompt: self.generations_per_prompt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub point: f64,
    pub mean: f64,
    pub std: f64,
    pub n_boot: usize,
}

/// Mean and sample standard deviation of `metric` over `n_boot` resamples.
/// Replicate `b` draws from its own stream derived from `seed`.
pub fn bootstrap_report<T, F>(outcome: &T, metric: F, n_boot: usize, seed: u64) -> Result<BootstrapSummary>
where
    T: Resample + Sync,
    F: Fn(&T) -> Result<f64> + Sync,
{
    if n_boot < 2 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 2 replicates, got {n_boot}")));
    }
    let units = outcome.units();
    if units == 0 {
        return Err(Error::EmptyInput("bootstrap outcome"));
    }
    let point = metric(outcome)?;
    let values = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::seeded(rng::derive_seed(seed, b as u64));
            let picks: Vec<usize> = (0..units).map(|_| r.random_range(0..units)).collect();
            metric(&outcome.resample(&picks))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / n_boot as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_boot - 1) as f64;
    Ok(BootstrapSummary {
        point,
        mean,
        std: var.sqrt(),
        n_boot,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    /// Label of the configuration or method that produced the value.
    pub config: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FairnessReport {
    pub entries: Vec<MetricEntry>,
}

impl FairnessReport {
    pub fn push(&mut self, config: &str, name: &str, value: f64, n_samples: usize, std: Option<f64>) {
        self.entries.push(MetricEntry {
            name: name.to_string(),
            value,
            n_samples,
            std,
            config: config.to_string(),
        });
    }

    pub fn get(&self, config: &str, name: &str) -> Option<&MetricEntry> {
        self.entries.iter().find(|e| e.config == config && e.name == name)
    }
}
