//! Results persistence. The CSV schema is fixed (one column per SweepRow
//! field, group metrics flattened); floats are written with the shortest
//! decimal form that parses back to the identical bits, so finite values
//! round-trip exactly.

use std::path::Path;
use std::str::FromStr;

use crate::analysis::GroupMetrics;
use crate::error::{Error, Result};
use crate::optimize::Objective;
use crate::sweeps::SweepRow;

pub const RESULTS_HEADER: [&str; 25] = [
    "setting",
    "objective",
    "lambda",
    "model_size",
    "p_maj",
    "r_sc",
    "trial",
    "n_train",
    "converged",
    "grad_norm",
    "train_err_g0",
    "train_err_g1",
    "train_err_g2",
    "train_err_g3",
    "train_avg",
    "train_worst",
    "train_worst_group",
    "test_err_g0",
    "test_err_g1",
    "test_err_g2",
    "test_err_g3",
    "test_avg",
    "test_worst",
    "test_worst_group",
    "wall_time_s",
];

/// Writes rows in the fixed schema.
pub fn write_results(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path.as_ref())?;
    writer.write_record(RESULTS_HEADER)?;
    for row in rows {
        let mut record: Vec<String> = Vec::with_capacity(RESULTS_HEADER.len());
        record.push(row.setting.clone());
        record.push(row.objective.name().to_string());
        record.push(row.lambda.to_string());
        record.push(row.model_size.to_string());
        record.push(row.p_maj.to_string());
        record.push(row.r_sc.to_string());
        record.push(row.trial.to_string());
        record.push(row.n_train.to_string());
        record.push(row.converged.to_string());
        record.push(row.grad_norm.to_string());
        push_metrics(&mut record, &row.train);
        push_metrics(&mut record, &row.test);
        record.push(row.wall_time_s.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn push_metrics(record: &mut Vec<String>, m: &GroupMetrics) {
    for e in m.per_group_error {
        record.push(e.to_string());
    }
    record.push(m.average_error.to_string());
    record.push(m.worst_group_error.to_string());
    record.push(m.worst_group_id.to_string());
}

/// Reads rows written by [`write_results`]; rejects files whose header does
/// not match the fixed schema.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Parse {
            row: None,
            msg: format!("unexpected results header: {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(|e| Error::parse_at(row_no, e.to_string()))?;
        let field = |k: usize| -> &str { record.get(k).unwrap_or("") };
        fn parse<T: FromStr>(raw: &str, row: usize, name: &str) -> Result<T> {
            raw.parse().map_err(|_| Error::parse_at(row, format!("bad `{name}` value `{raw}`")))
        }
        let train = parse_metrics(&record, 10, row_no)?;
        let test = parse_metrics(&record, 17, row_no)?;
        rows.push(SweepRow {
            setting: field(0).to_string(),
            objective: Objective::from_str(field(1))
                .map_err(|e| Error::parse_at(row_no, e.to_string()))?,
            lambda: parse(field(2), row_no, "lambda")?,
            model_size: parse(field(3), row_no, "model_size")?,
            p_maj: parse(field(4), row_no, "p_maj")?,
            r_sc: parse(field(5), row_no, "r_sc")?,
            trial: parse(field(6), row_no, "trial")?,
            n_train: parse(field(7), row_no, "n_train")?,
            converged: parse(field(8), row_no, "converged")?,
            grad_norm: parse(field(9), row_no, "grad_norm")?,
            train,
            test,
            wall_time_s: parse(field(24), row_no, "wall_time_s")?,
        });
    }
    Ok(rows)
}

fn parse_metrics(record: &csv::StringRecord, base: usize, row_no: usize) -> Result<GroupMetrics> {
    let get = |k: usize| -> Result<f64> {
        let raw = record.get(base + k).unwrap_or("");
        raw.parse().map_err(|_| Error::parse_at(row_no, format!("bad metric value `{raw}`")))
    };
    Ok(GroupMetrics {
        per_group_error: [get(0)?, get(1)?, get(2)?, get(3)?],
        average_error: get(4)?,
        worst_group_error: get(5)?,
        worst_group_id: record
            .get(base + 6)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::parse_at(row_no, "bad worst_group value".to_string()))?,
    })
}
