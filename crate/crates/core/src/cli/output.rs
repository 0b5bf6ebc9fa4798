use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Number, Value};

use super::{OutputFormat, ResultRow, ResultTable};

const SIGNIFICANT_DIGITS: usize = 12;

/// `%.12g`-style formatting: 12 significant digits, trailing zeros
/// trimmed, scientific notation outside `[1e-4, 1e12)`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn record(row: &ResultRow) -> Vec<String> {
    row.parameters
        .iter()
        .map(|&p| cell(p))
        .chain([
            row.metric.clone(),
            row.method.clone(),
            format_number(row.value),
            cell(row.ci_half_width),
            row.trials.map(|t| t.to_string()).unwrap_or_default(),
            row.seed.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .collect()
}

fn json_number(x: Option<f64>) -> Value {
    x.and_then(|v| format_number(v).parse::<f64>().ok())
        .and_then(Number::from_f64)
        .map_or(Value::Null, Value::Number)
}

/// Writes `table` in `format`. An empty table still produces the CSV header.
pub fn write_results<W: Write>(
    table: &ResultTable,
    format: OutputFormat,
    out: W,
) -> io::Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(table.columns())?;
            for row in &table.rows {
                w.write_record(record(row))?;
            }
            w.flush()
        }
        OutputFormat::JsonLines => {
            let mut out = out;
            for row in &table.rows {
                let mut obj = Map::new();
                for (name, &v) in table.parameters.iter().zip(&row.parameters) {
                    obj.insert(name.clone(), json_number(v));
                }
                obj.insert("metric".into(), Value::from(row.metric.as_str()));
                obj.insert("method".into(), Value::from(row.method.as_str()));
                obj.insert("value".into(), json_number(Some(row.value)));
                obj.insert("ci_half_width".into(), json_number(row.ci_half_width));
                obj.insert("trials".into(), row.trials.map_or(Value::Null, Value::from));
                obj.insert("seed".into(), row.seed.map_or(Value::Null, Value::from));
                serde_json::to_writer(&mut out, &Value::Object(obj))?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit_results(
    table: &ResultTable,
    format: OutputFormat,
    path: Option<&Path>,
) -> io::Result<()> {
    match path {
        Some(p) => write_results(table, format, BufWriter::new(File::create(p)?)),
        None => write_results(table, format, io::stdout().lock()),
    }
}
