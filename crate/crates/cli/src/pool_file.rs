//! Pool and contribution CSV files.
//!
//! A pool file has a header `prob,X1,...,Xn` and one row per atom.

use std::path::Path;

use riskshare::{ContributionMatrix, Pool};

use crate::error::{CliError, CliResult};
use crate::report::round12;

/// Allowed gap between the `prob` column sum and 1.
pub const PROB_SUM_TOL: f64 = 1e-9;

pub fn read_pool(path: &Path) -> CliResult<Pool> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pool(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_pool(text: &str) -> CliResult<Pool> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("line 1: {e}")))?
        .clone();
    if headers.get(0) != Some("prob") {
        return Err(CliError::Input("line 1, column 1: first column must be 'prob'".into()));
    }
    let n = headers.len() - 1;
    if n == 0 {
        return Err(CliError::Input("line 1: no loss columns after 'prob'".into()));
    }

    let mut weights = vec![];
    let mut losses = vec![vec![]; n];
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(p) => CliError::Input(format!("line {}: {e}", p.line())),
            None => CliError::Input(e.to_string()),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Input(format!("line {line}, column {}: '{cell}' is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(CliError::Input(format!("line {line}, column {}: value is not finite", col + 1)));
            }
            if col == 0 {
                if v <= 0.0 {
                    return Err(CliError::Input(format!("line {line}, column 1: prob {v} must be > 0")));
                }
                weights.push(v);
            } else {
                if v < 0.0 {
                    return Err(CliError::Input(format!("line {line}, column {}: loss {v} must be >= 0", col + 1)));
                }
                losses[col - 1].push(v);
            }
        }
    }
    if weights.is_empty() {
        return Err(CliError::Input("no data rows".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(CliError::Input(format!("prob column sums to {total}, expected 1 within {PROB_SUM_TOL:e}")));
    }
    let weights = weights.iter().map(|w| w / total).collect();
    Ok(Pool::from_parts(weights, losses)?)
}

/// CSV with columns `C1..Cn,S` and one row per atom, values at 12
/// significant digits.
pub fn contributions_csv(cm: &ContributionMatrix, s: &[f64]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    let mut header: Vec<String> = (1..=cm.participants()).map(|i| format!("C{i}")).collect();
    header.push("S".into());
    w.write_record(&header).map_err(|e| CliError::Input(e.to_string()))?;
    for (j, sj) in s.iter().enumerate() {
        let mut row: Vec<String> = (0..cm.participants()).map(|i| round12(cm.get(i, j)).to_string()).collect();
        row.push(round12(*sj).to_string());
        w.write_record(&row).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Input(e.to_string()))
}

/// Read back a contribution CSV as `(C rows by participant, S)`.
pub fn parse_contributions(text: &str) -> CliResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let n = reader.headers().map_err(|e| CliError::Input(e.to_string()))?.len().saturating_sub(1);
    let mut rows = vec![vec![]; n];
    let mut s = vec![];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(e.to_string()))?;
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CliError::Input(format!("'{cell}' is not a number")))?;
            if k < n {
                rows[k].push(v);
            } else {
                s.push(v);
            }
        }
    }
    Ok((rows, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pool() {
        let pool = parse_pool("prob,X1,X2\n0.5,0,2\n0.25,4,2\n0.25,8,2\n").unwrap();
        assert_eq!(pool.losses(), &[vec![0.0, 4.0, 8.0], vec![2.0, 2.0, 2.0]]);
        assert_eq!(pool.space().weights(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn diagnostics_name_position() {
        let err = parse_pool("prob,X1\n0.5,1\n0.5,abc\n").unwrap_err().to_string();
        assert!(err.contains("line 3, column 2"), "{err}");
        let err = parse_pool("prob,X1\n0.5,1\n-0.5,1\n").unwrap_err().to_string();
        assert!(err.contains("line 3, column 1"), "{err}");
        let err = parse_pool("prob,X1\n0.5,1\n0.4,1\n").unwrap_err().to_string();
        assert!(err.contains("sums to"), "{err}");
        let err = parse_pool("prob,X1\n0.5,1\n0.5,1,2\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse_pool("p,X1\n1,1\n").unwrap_err().to_string();
        assert!(err.contains("'prob'"), "{err}");
        assert!(parse_pool("prob,X1\n0.5,1\n0.5,-1\n").is_err());
    }

    #[test]
    fn near_unit_sum_is_normalized() {
        let pool = parse_pool("prob,X1\n0.3333333333,1\n0.3333333333,2\n0.3333333334,3\n").unwrap();
        assert_eq!(pool.atoms(), 3);
    }

    #[test]
    fn contribution_round_trip() {
        let cm = ContributionMatrix::new(vec![vec![1.2, 3.6], vec![0.8, 2.4]]);
        let text = contributions_csv(&cm, &[2.0, 6.0]).unwrap();
        assert!(text.starts_with("C1,C2,S\n"));
        let (rows, s) = parse_contributions(&text).unwrap();
        assert_eq!(rows, cm.rows());
        assert_eq!(s, vec![2.0, 6.0]);
    }
}
