use std::io::Write;

use super::FilterTrace;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Writes one row per step: `t, method, N, seed, mean_0.., W, logZ, fw_error, effective_N`.
/// `fw_error` is empty for non-SKH samplers.
pub fn write_trace_csv<W: Write>(out: W, traces: &[FilterTrace]) -> Result<()> {
    let d = traces
        .first()
        .and_then(|t| t.steps.first())
        .map_or(0, |s| s.filtered_mean.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["t", "method", "N", "seed"].iter().map(|s| s.to_string()).collect();
    header.extend((0..d).map(|i| format!("mean_{i}")));
    header.extend(["W", "logZ", "fw_error", "effective_N"].iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for tr in traces {
        for s in &tr.steps {
            crate::error::ensure_dim(d, s.filtered_mean.len())?;
            let mut row = vec![s.t.to_string(), tr.method.clone(), tr.n.to_string(), tr.seed.to_string()];
            row.extend(s.filtered_mean.iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", s.w_hat()));
            row.push(format!("{:e}", s.log_z));
            row.push(s.fw_error.map_or(String::new(), |e| format!("{e:e}")));
            row.push(s.effective_n.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("write: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_lgss, simulate};
    use crate::pf::{run_filter, FilterConfig, SamplerKind};

    #[test]
    fn header_and_row_count() {
        let m = make_lgss(1, 2, 1).unwrap();
        let tr = simulate(&m, 4, 1).unwrap();
        let f = run_filter(&m, &tr.observations, &FilterConfig::new(10, SamplerKind::McMultinomial, 0)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[f.clone(), f]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,method,N,seed,mean_0,mean_1,W,logZ,fw_error,effective_N");
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("1,MC_MULTINOMIAL,10,0,"));
        assert!(lines[1].ends_with(",,10"));
    }
}
