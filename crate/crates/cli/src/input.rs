//! CSV ingestion: unit-level `x,sigma` (optional `id`) or replicate-level
//! `id,value` rows, which are collapsed to (mean, sd/√n) per id.

use std::collections::HashMap;
use std::path::Path;

use hamt_core::{replicate_summary, Observation};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub ids: Vec<String>,
    pub observations: Vec<Observation>,
    /// Replicates per unit for replicate-level input.
    pub replicates: Option<Vec<usize>>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn number(field: &str, what: &str, line: u64) -> CliResult<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::input(format!("line {line}: cannot parse {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(CliError::input(format!("line {line}: {what} must be finite, got {field}")));
    }
    Ok(v)
}

pub fn read_input(path: &Path) -> CliResult<Input> {
    let file = std::fs::File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    read_from(file)
}

pub fn read_from<R: std::io::Read>(src: R) -> CliResult<Input> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(src);
    let headers = rdr.headers()?.clone();
    let id = column(&headers, "id");
    let (x, sigma, value) = (column(&headers, "x"), column(&headers, "sigma"), column(&headers, "value"));
    match (x, sigma, value, id) {
        (Some(x), Some(sigma), _, _) => read_units(rdr, id, x, sigma),
        (_, _, Some(value), Some(id)) => read_replicates(rdr, id, value),
        _ => Err(CliError::input(format!(
            "expected a header `x,sigma` (optionally with `id`) or `id,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        ))),
    }
}

fn read_units<R: std::io::Read>(
    mut rdr: csv::Reader<R>,
    id: Option<usize>,
    x: usize,
    sigma: usize,
) -> CliResult<Input> {
    let mut ids = Vec::new();
    let mut observations = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        let xv = number(rec.get(x).unwrap_or(""), "x", line)?;
        let sv = number(rec.get(sigma).unwrap_or(""), "sigma", line)?;
        if sv <= 0.0 {
            return Err(CliError::input(format!("line {line}: sigma must be positive, got {sv}")));
        }
        let obs = Observation::new(xv, sv).map_err(|e| CliError::input(format!("line {line}: {e}")))?;
        ids.push(match id {
            Some(c) => rec.get(c).unwrap_or("").trim().to_string(),
            None => (row + 1).to_string(),
        });
        observations.push(obs);
    }
    if observations.is_empty() {
        return Err(CliError::input("input has no data rows"));
    }
    Ok(Input {
        ids,
        observations,
        replicates: None,
    })
}

fn read_replicates<R: std::io::Read>(mut rdr: csv::Reader<R>, id: usize, value: usize) -> CliResult<Input> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<f64>> = HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        let key = rec.get(id).unwrap_or("").trim().to_string();
        let v = number(rec.get(value).unwrap_or(""), "value", line)?;
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(v);
    }
    if order.is_empty() {
        return Err(CliError::input("input has no data rows"));
    }
    let mut observations = Vec::with_capacity(order.len());
    let mut replicates = Vec::with_capacity(order.len());
    for key in &order {
        let values = &groups[key];
        let obs = replicate_summary(values).map_err(|e| {
            CliError::input(format!("unit `{key}` ({} replicates): {e}; its standard error would be σ = 0", values.len()))
        })?;
        observations.push(obs);
        replicates.push(values.len());
    }
    Ok(Input {
        ids: order,
        observations,
        replicates: Some(replicates),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> CliResult<Input> {
        read_from(text.as_bytes())
    }

    #[test]
    fn unit_level() {
        let inp = read("x,sigma\n1.5,1\n-2,0.5\n").unwrap();
        assert_eq!(inp.ids, ["1", "2"]);
        assert_eq!(inp.observations[1].x(), -2.0);
        let inp = read("sigma,id,x\n2,a,0\n").unwrap();
        assert_eq!((inp.ids[0].as_str(), inp.observations[0].sigma()), ("a", 2.0));
    }

    #[test]
    fn replicate_level() {
        let inp = read("id,value\na,1\nb,2\na,3\nb,2.5\n").unwrap();
        assert_eq!(inp.ids, ["a", "b"]);
        assert_eq!(inp.replicates, Some(vec![2, 2]));
        assert_eq!(inp.observations[0].x(), 2.0);
        // sd of (1, 3) is √2, over √2 replicates
        assert!((inp.observations[0].sigma() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_line() {
        let msg = |t: &str| match read(t) {
            Err(CliError::Input(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(msg("x,sigma\n1,1\n2,abc\n").starts_with("line 3:"));
        assert!(msg("x,sigma\n1,1\n2,0\n").starts_with("line 3:"));
        assert!(msg("x,sigma\n1,1\n2,-1\n").contains("positive"));
        assert!(msg("x,sigma\n1,1,4\n").contains("line 2"));
        assert!(msg("a,b\n1,2\n").contains("expected a header"));
        assert!(msg("x,sigma\n").contains("no data"));
        assert!(msg("id,value\nu,4\nu,4\nu,4\nu,4\n").contains("σ = 0"));
    }
}
