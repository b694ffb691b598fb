use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 14] = [
    "experiment",
    "model",
    "scheme",
    "combiner",
    "M",
    "N",
    "K",
    "L",
    "sweep_var",
    "sweep_value",
    "sum_se_mean",
    "sum_se_stderr",
    "trials",
    "seed",
];

/// One output row. For the favorable-propagation sweep `sum_se_mean` holds
/// the variance and `scheme`/`combiner` are `none`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub model: String,
    pub scheme: String,
    pub combiner: String,
    pub antennas: usize,
    pub spreading_len: usize,
    pub ues_per_cell: usize,
    pub cells: usize,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub sum_se_mean: f64,
    pub sum_se_stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    experiment: String,
    model: String,
    scheme: String,
    combiner: String,
    #[serde(rename = "M")]
    antennas: usize,
    #[serde(rename = "N")]
    spreading_len: usize,
    #[serde(rename = "K")]
    ues_per_cell: usize,
    #[serde(rename = "L")]
    cells: usize,
    sweep_var: String,
    sweep_value: String,
    sum_se_mean: String,
    sum_se_stderr: String,
    trials: usize,
    seed: u64,
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// exponent notation outside `[1e-4, 1e9)`.
pub fn format_sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent form");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if exponent < -4 || exponent >= DIGITS {
        let mantissa = trim_fraction(mantissa);
        let sign = if exponent < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exponent.abs())
    } else {
        let decimals = (DIGITS - 1 - exponent) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_float(field: &str, value: &str, path: &Path) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{}: column '{field}' holds '{value}', not a number", path.display())))
}

/// Writes the rows with a header. Refuses to create a file for no rows.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("no result rows to write"));
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer
            .serialize(CsvRow {
                experiment: row.experiment.clone(),
                model: row.model.clone(),
                scheme: row.scheme.clone(),
                combiner: row.combiner.clone(),
                antennas: row.antennas,
                spreading_len: row.spreading_len,
                ues_per_cell: row.ues_per_cell,
                cells: row.cells,
                sweep_var: row.sweep_var.clone(),
                sweep_value: format_sig9(row.sweep_value),
                sum_se_mean: format_sig9(row.sum_se_mean),
                sum_se_stderr: format_sig9(row.sum_se_stderr),
                trials: row.trials,
                seed: row.seed,
            })
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a file produced by [`write_csv`], checking the header.
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::config(format!(
            "{}: unexpected header {:?}, expected {:?}",
            path.display(),
            header,
            CSV_HEADER
        )));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<CsvRow>() {
        let r = record.map_err(csv_err)?;
        rows.push(ResultRow {
            sweep_value: parse_float("sweep_value", &r.sweep_value, path)?,
            sum_se_mean: parse_float("sum_se_mean", &r.sum_se_mean, path)?,
            sum_se_stderr: parse_float("sum_se_stderr", &r.sum_se_stderr, path)?,
            experiment: r.experiment,
            model: r.model,
            sweep_var: r.sweep_var,
            scheme: r.scheme,
            combiner: r.combiner,
            antennas: r.antennas,
            spreading_len: r.spreading_len,
            ues_per_cell: r.ues_per_cell,
            cells: r.cells,
            trials: r.trials,
            seed: r.seed,
        });
    }
    Ok(rows)
}
