use serde::Serialize;

use crate::output::MetricRow;

/// Order statistics of one `experiment × method × σ² × N × metric` group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub sigma2: Option<f64>,
    pub n: Option<usize>,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile of sorted data with linear interpolation between order statistics
/// (position `q (n − 1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

type GroupKey = (String, String, Option<u64>, Option<usize>, String);

fn key(r: &MetricRow) -> GroupKey {
    (
        r.experiment.clone(),
        r.method.clone(),
        r.sigma2.map(f64::to_bits),
        r.n,
        r.metric.clone(),
    )
}

/// Groups rows in order of first appearance. Non-finite values are dropped; a group
/// left empty is omitted and reported in the returned warnings.
pub fn summarize(rows: &[MetricRow]) -> (Vec<SummaryRow>, Vec<String>) {
    let mut keys: Vec<GroupKey> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let k = key(r);
        let i = match keys.iter().position(|x| *x == k) {
            Some(i) => i,
            None => {
                keys.push(k);
                values.push(Vec::new());
                keys.len() - 1
            }
        };
        if r.value.is_finite() {
            values[i].push(r.value);
        }
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for ((experiment, method, sigma2, n, metric), mut v) in keys.into_iter().zip(values) {
        if v.is_empty() {
            warnings.push(format!("no finite values for {experiment}/{method}/{metric}, group omitted"));
            continue;
        }
        v.sort_by(f64::total_cmp);
        out.push(SummaryRow {
            experiment,
            method,
            sigma2: sigma2.map(f64::from_bits),
            n,
            metric,
            count: v.len(),
            median: quantile_sorted(&v, 0.5),
            q25: quantile_sorted(&v, 0.25),
            q75: quantile_sorted(&v, 0.75),
            min: v[0],
            max: v[v.len() - 1],
        });
    }
    (out, warnings)
}
