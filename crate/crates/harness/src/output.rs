use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const VERSION: &str = concat!("skh-", env!("CARGO_PKG_VERSION"));

/// One measured value. `sigma2`, `n` and `seed` are empty where they do not apply
/// (e.g. `sigma2` for an RMSE of a Monte Carlo filter, `n` and `seed` for a slope).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub experiment: String,
    pub method: String,
    pub sigma2: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub runtime_ms: f64,
    pub config_hash: String,
    pub version: String,
}

pub fn write_rows<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?)
}
