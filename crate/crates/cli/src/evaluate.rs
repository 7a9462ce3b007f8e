//! Text input formats for `spd evaluate` and the metric tables built from them.
//!
//! Classification: `sample_index,predicted,group[,true_label]`.
//! Retrieval rankings: `query,ground_truth,ranking` with the ranking as
//! space-separated item ids, best first; items: `item,attribute`.
//! Generation: `profession,requested,detected` with genders spelled
//! `male`, `female` or (requested only) `neutral`.

use std::path::Path;

use spd_core::metrics::{
    bootstrap_report, delta_dp, generation_skew, improvement_percent, mismatch_rates, recall_at_k, skew_at_k,
    ClassificationOutcome, FairnessReport, GenerationOutcome, GenerationRecord, Resample, RetrievalOutcome,
};

use crate::error::CliError;

type Rows = Vec<(usize, csv::StringRecord)>;

fn read_table(path: &Path, expected: &[&str], optional: &[&str]) -> Result<Rows, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::schema(path, 1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let ok = names.len() >= expected.len()
        && names[..expected.len()] == *expected
        && names[expected.len()..].len() <= optional.len()
        && names[expected.len()..] == optional[..names.len() - expected.len()];
    if !ok {
        let mut want = expected.join(",");
        if !optional.is_empty() {
            want += &format!("[,{}]", optional.join(","));
        }
        return Err(CliError::schema(path, 1, format!("header must be {want}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::schema(path, line, e.to_string()))?;
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(CliError::schema(path, 1, "no data rows"));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, CliError> {
    rec[i]
        .parse()
        .map_err(|_| CliError::schema(path, line, format!("bad {what} {:?}", &rec[i])))
}

pub fn read_classification(path: &Path) -> Result<ClassificationOutcome, CliError> {
    let rows = read_table(path, &["sample_index", "predicted", "group"], &["true_label"])?;
    let has_truth = rows[0].1.len() == 4;
    let (mut pred, mut group, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for (k, (line, rec)) in rows.iter().enumerate() {
        let idx: usize = field(path, *line, rec, 0, "sample_index")?;
        if idx != k {
            return Err(CliError::schema(path, *line, format!("sample_index {idx}, expected {k}")));
        }
        pred.push(field(path, *line, rec, 1, "predicted class")?);
        let g: usize = field(path, *line, rec, 2, "group")?;
        if g > 1 {
            return Err(CliError::schema(path, *line, format!("group must be 0 or 1, got {g}")));
        }
        group.push(g);
        if has_truth {
            truth.push(field(path, *line, rec, 3, "true_label")?);
        }
    }
    Ok(ClassificationOutcome::new(pred, group, has_truth.then_some(truth))?)
}

pub fn read_retrieval(rankings: &Path, items: &Path) -> Result<RetrievalOutcome, CliError> {
    let item_rows = read_table(items, &["item", "attribute"], &[])?;
    let mut attrs = Vec::new();
    for (k, (line, rec)) in item_rows.iter().enumerate() {
        let id: usize = field(items, *line, rec, 0, "item")?;
        if id != k {
            return Err(CliError::schema(items, *line, format!("item {id}, expected {k}")));
        }
        attrs.push(field::<usize>(items, *line, rec, 1, "attribute")?);
    }
    let groups = attrs.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; groups];
    attrs.iter().for_each(|&a| counts[a] += 1);
    let proportions: Vec<f64> = counts.iter().map(|&c| c as f64 / attrs.len() as f64).collect();

    let rows = read_table(rankings, &["query", "ground_truth", "ranking"], &[])?;
    let (mut ranks, mut gt) = (Vec::new(), Vec::new());
    for (k, (line, rec)) in rows.iter().enumerate() {
        let q: usize = field(rankings, *line, rec, 0, "query")?;
        if q != k {
            return Err(CliError::schema(rankings, *line, format!("query {q}, expected {k}")));
        }
        gt.push(field(rankings, *line, rec, 1, "ground_truth")?);
        let list = rec[2]
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::schema(rankings, *line, "ranking must be space-separated item ids"))?;
        ranks.push(list);
    }
    Ok(RetrievalOutcome::new(ranks, attrs, proportions, Some(gt))?)
}

pub fn read_generation(path: &Path, n: usize) -> Result<GenerationOutcome, CliError> {
    let rows = read_table(path, &["profession", "requested", "detected"], &[])?;
    let mut records = Vec::new();
    for (line, rec) in &rows {
        records.push(GenerationRecord {
            profession: rec[0].to_string(),
            requested: field(path, *line, rec, 1, "requested gender")?,
            detected: field(path, *line, rec, 2, "detected gender")?,
        });
    }
    Ok(GenerationOutcome::new(records, n)?)
}

pub struct Settings {
    pub bootstrap: usize,
    pub seed: u64,
}

/// Adds one metric, with a bootstrap standard deviation when requested.
fn metric<T, F>(report: &mut FairnessReport, run: &str, name: &str, outcome: &T, f: F, s: &Settings) -> Result<f64, CliError>
where
    T: Resample + Sync,
    F: Fn(&T) -> spd_core::Result<f64> + Sync,
{
    let point = f(outcome)?;
    let std = if s.bootstrap >= 2 {
        Some(bootstrap_report(outcome, &f, s.bootstrap, s.seed)?.std)
    } else {
        None
    };
    report.push(run, name, point, outcome.units(), std);
    Ok(point)
}

fn improvement(report: &mut FairnessReport, run: &str, name: &str, base: Option<f64>, value: f64, n: usize) -> Result<(), CliError> {
    if let Some(b) = base {
        if b == 0.0 {
            log::warn!("{run}: baseline {name} is 0, improvement undefined");
            return Ok(());
        }
        report.push(run, &format!("improvement_{name}"), improvement_percent(b, value)?, n, None);
    }
    Ok(())
}

pub fn classification(runs: &[(String, ClassificationOutcome)], classes: Option<usize>, s: &Settings) -> Result<FairnessReport, CliError> {
    let classes = classes.unwrap_or_else(|| {
        runs.iter()
            .flat_map(|(_, o)| o.predicted.iter().chain(o.true_label.iter().flatten()))
            .max()
            .map_or(1, |m| m + 1)
    });
    let mut report = FairnessReport::default();
    let mut base = None;
    for (run, o) in runs {
        if o.true_label.is_some() {
            metric(&mut report, run, "accuracy", o, |o: &ClassificationOutcome| Ok(o.accuracy().unwrap_or(0.0)), s)?;
        }
        let v = metric(&mut report, run, "delta_dp", o, |o: &ClassificationOutcome| delta_dp(o, classes), s)?;
        improvement(&mut report, run, "delta_dp", base, v, o.len())?;
        base.get_or_insert(v);
    }
    Ok(report)
}

pub fn retrieval(runs: &[(String, RetrievalOutcome)], recall_ks: &[usize], skew_k: usize, alpha: f64, s: &Settings) -> Result<FairnessReport, CliError> {
    let mut report = FairnessReport::default();
    let mut base = None;
    for (run, o) in runs {
        for &k in recall_ks {
            metric(&mut report, run, &format!("recall@{k}"), o, |o: &RetrievalOutcome| recall_at_k(o, k), s)?;
        }
        let name = format!("skew@{skew_k}");
        let v = metric(&mut report, run, &name, o, |o: &RetrievalOutcome| skew_at_k(o, skew_k, alpha), s)?;
        improvement(&mut report, run, &name, base, v, o.n_queries())?;
        base.get_or_insert(v);
    }
    Ok(report)
}

pub fn generation(runs: &[(String, GenerationOutcome)], s: &Settings) -> Result<FairnessReport, CliError> {
    let mut report = FairnessReport::default();
    let (mut base_mrc, mut base_skew) = (None, None);
    for (run, o) in runs {
        use spd_core::metrics::RequestedGender as R;
        let has = |g: R| o.records.iter().any(|r| r.requested == g);
        let n = o.records.len();
        let mut mrc = None;
        if has(R::Male) || has(R::Female) {
            for (name, pick) in [("mr_m", 0usize), ("mr_f", 1), ("abs_diff", 2), ("mr_o", 3), ("mrc", 4)] {
                let f = move |o: &GenerationOutcome| {
                    let m = mismatch_rates(o)?;
                    Ok([m.mr_m, m.mr_f, m.abs_diff, m.mr_o, m.mrc][pick])
                };
                let v = metric(&mut report, run, name, o, f, s)?;
                if pick == 4 {
                    mrc = Some(v);
                }
            }
        }
        let skew = if has(R::Neutral) {
            Some(metric(&mut report, run, "skew", o, generation_skew, s)?)
        } else {
            None
        };
        if mrc.is_none() && skew.is_none() {
            return Err(spd_core::Error::EmptyInput("generation records").into());
        }
        if let Some(v) = mrc {
            improvement(&mut report, run, "mrc", base_mrc, v, n)?;
            base_mrc.get_or_insert(v);
        }
        if let Some(v) = skew {
            improvement(&mut report, run, "skew", base_skew, v, n)?;
            base_skew.get_or_insert(v);
        }
    }
    Ok(report)
}
