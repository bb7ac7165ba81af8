//! CSV ingestion, label binarisation, standardisation and the JSON/CSV
//! artifact formats (datasets, models, experiment results).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::harness::ExperimentResult;
use crate::types::{Dataset, Label, LinearModel, Method, ModelFlag, NEGATIVE, POSITIVE};

/// Which column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: LabelColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: true,
            label_column: LabelColumn::Last,
        }
    }
}

/// A parsed table: numeric feature columns plus one raw label column.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
    pub raw_labels: Vec<String>,
    pub label_name: String,
}

impl RawTable {
    pub fn n_samples(&self) -> usize {
        self.raw_labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Distinct raw labels, numerically sorted when they all parse as numbers.
    pub fn classes(&self) -> Vec<String> {
        let mut classes: Vec<String> = self.raw_labels.clone();
        classes.sort();
        classes.dedup();
        if classes.iter().all(|c| c.parse::<f64>().is_ok()) {
            classes.sort_by(|a, b| {
                a.parse::<f64>()
                    .unwrap()
                    .total_cmp(&b.parse::<f64>().unwrap())
            });
        }
        classes
    }
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::ParseError {
        row,
        column: 0,
        message: e.to_string(),
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawTable> {
    parse_csv(File::open(path)?, opts)
}

pub fn parse_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let first = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(Error::ParseError {
                row: 0,
                column: 0,
                message: "file is empty".into(),
            })
        }
    };
    let width = first.len();
    if width < 2 {
        return Err(Error::ParseError {
            row: 1,
            column: 0,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let header: Vec<String> = if opts.has_header {
        first.iter().map(str::to_string).collect()
    } else {
        (0..width).map(|j| format!("x{j}")).collect()
    };
    let label_idx = match &opts.label_column {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(Error::MissingLabelColumn(i.to_string())),
        LabelColumn::Name(name) => {
            if !opts.has_header {
                return Err(Error::MissingLabelColumn(name.clone()));
            }
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?
        }
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut push_record = |record: &csv::StringRecord, line: usize| -> Result<()> {
        if record.len() != width {
            return Err(Error::ParseError {
                row: line,
                column: record.len(),
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::NonNumericFeature {
                        row: line,
                        column: header[j].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        Ok(())
    };
    if !opts.has_header {
        push_record(&first, 1)?;
    }
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        push_record(&record, line)?;
    }
    if raw_labels.is_empty() {
        return Err(Error::ParseError {
            row: 1,
            column: 0,
            message: "no data rows".into(),
        });
    }
    let features = Array2::from_shape_vec((raw_labels.len(), width - 1), values)
        .expect("row widths were checked");
    Ok(RawTable {
        feature_names,
        features,
        raw_labels,
        label_name: header[label_idx].clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PositiveClass {
    Label(String),
    OneVsRestAll,
}

#[derive(Clone, Debug)]
pub struct PreprocessSpec {
    pub standardize: bool,
    pub positive_class: PositiveClass,
    pub label_column: LabelColumn,
}

#[derive(Clone, Debug)]
pub enum Binarized {
    Single(Dataset),
    /// One dataset per raw class, that class labelled `+1`.
    OneVsRest(Vec<(String, Dataset)>),
}

/// Labels rows of `positive` as `+1` and every other row as `-1`.
pub fn binarize_class(table: &RawTable, positive: &str) -> Result<Dataset> {
    if !table.raw_labels.iter().any(|l| l == positive) {
        return Err(Error::UnknownPositiveClass(positive.to_string()));
    }
    let labels: Vec<Label> = table
        .raw_labels
        .iter()
        .map(|l| if l == positive { POSITIVE } else { NEGATIVE })
        .collect();
    Dataset::new(table.features.clone(), labels)?.with_feature_names(table.feature_names.clone())
}

pub fn binarize(table: &RawTable, spec: &PreprocessSpec) -> Result<Binarized> {
    match &spec.positive_class {
        PositiveClass::Label(l) => binarize_class(table, l).map(Binarized::Single),
        PositiveClass::OneVsRestAll => {
            let classes = table.classes();
            if classes.len() < 2 {
                return Err(Error::MissingClass(NEGATIVE));
            }
            classes
                .into_iter()
                .map(|c| binarize_class(table, &c).map(|d| (c, d)))
                .collect::<Result<Vec<_>>>()
                .map(Binarized::OneVsRest)
        }
    }
}

/// Per-feature z-scoring with parameters fitted on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, or 1 for constant columns (centred only).
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.n_samples() == 0 {
            return Err(Error::EmptyInput);
        }
        let x = train.features();
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let sd = x.std_axis(Axis(0), 0.0);
        let scale = sd.mapv(|s| if s > 0.0 { s } else { 1.0 });
        Ok(Standardizer {
            mean: mean.to_vec(),
            scale: scale.to_vec(),
        })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_features() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: data.n_features(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        let z = (&data.features() - &mean) / &scale;
        data.map_features(z)
    }
}

/// Fits on `train` and applies the same transform to `train` and every other set.
pub fn standardize_fit_apply(
    train: &Dataset,
    others: &[Dataset],
) -> Result<(Dataset, Vec<Dataset>, Standardizer)> {
    let s = Standardizer::fit(train)?;
    let train_z = s.apply(train)?;
    let others_z = others.iter().map(|d| s.apply(d)).collect::<Result<Vec<_>>>()?;
    Ok((train_z, others_z, s))
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes features and a trailing `label` column (`1` / `-1`).
pub fn write_dataset_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match data.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..data.n_features()).map(|j| format!("x{j}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header).map_err(csv_error)?;
    let mut record = Vec::with_capacity(header.len());
    for (row, &y) in data.features().outer_iter().zip(data.labels()) {
        record.clear();
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        record.push(y.to_string());
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_csv(data, BufWriter::new(File::create(path)?))
}

/// Reads a dataset whose label column already holds `1` / `-1`.
pub fn read_dataset<R: Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let table = parse_csv(reader, opts)?;
    let mut labels = Vec::with_capacity(table.n_samples());
    for (row, raw) in table.raw_labels.iter().enumerate() {
        let value: i64 = raw
            .parse::<i64>()
            .or_else(|_| raw.parse::<f64>().map(|v| if v.fract() == 0.0 { v as i64 } else { 0 }))
            .map_err(|_| Error::InvalidLabel { row, value: 0 })?;
        if value != 1 && value != -1 {
            return Err(Error::InvalidLabel { row, value });
        }
        labels.push(value as Label);
    }
    Dataset::new(table.features, labels)?.with_feature_names(table.feature_names)
}

pub fn load_dataset(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    read_dataset(File::open(path)?, opts)
}

/// Hyperparameters and method as stored in a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigRecord {
    pub method: Method,
    pub c0: f64,
    pub c_const: f64,
    pub tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    pub support_threshold_rel: f64,
}

/// Flat JSON layout of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub w: Vec<f64>,
    pub b: f64,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub support: Vec<usize>,
    pub config: ModelConfigRecord,
    pub flags: Vec<ModelFlag>,
}

impl From<&LinearModel> for ModelRecord {
    fn from(m: &LinearModel) -> Self {
        ModelRecord {
            w: m.w.to_vec(),
            b: m.b,
            lambda: m.lambda,
            alpha: m.alpha.to_vec(),
            support: m.support.clone(),
            config: ModelConfigRecord {
                method: m.method,
                c0: m.config.c0,
                c_const: m.config.c_const,
                tol: m.config.tol,
                max_iter: m.config.max_iter,
                support_threshold_rel: m.config.support_threshold_rel,
            },
            flags: m.flags.clone(),
        }
    }
}

impl From<ModelRecord> for LinearModel {
    fn from(r: ModelRecord) -> Self {
        LinearModel {
            method: r.config.method,
            w: Array1::from(r.w),
            b: r.b,
            alpha: Array1::from(r.alpha),
            lambda: r.lambda,
            support: r.support,
            config: TrainConfig {
                c0: r.config.c0,
                c_const: r.config.c_const,
                tol: r.config.tol,
                max_iter: r.config.max_iter,
                support_threshold_rel: r.config.support_threshold_rel,
            },
            flags: r.flags,
        }
    }
}

pub fn model_to_json(model: &LinearModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelRecord::from(model))?)
}

pub fn model_from_json(s: &str) -> Result<LinearModel> {
    let record: ModelRecord = serde_json::from_str(s)?;
    Ok(record.into())
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)? + "\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

/// `score,label` per row.
pub fn write_scores_csv<W: Write>(scores: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["score", "label"]).map_err(csv_error)?;
    for &s in scores {
        w.write_record([fmt_f64(s), crate::types::label_of(s).to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULTS_HEADER: [&str; 11] = [
    "method",
    "replication",
    "fold",
    "ccr",
    "mwe",
    "angle_deg",
    "intercept_dev",
    "chosen_c0",
    "chosen_c",
    "n_train_plus",
    "n_train_minus",
];

/// One row per replication-fold per method.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER).map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for result in results {
        for rec in &result.records {
            let (c0, c) = match &rec.config {
                Some(cfg) if result.method == Method::Pglmc => (fmt_f64(cfg.c0), fmt_f64(cfg.c_const)),
                Some(cfg) => (fmt_f64(cfg.c0), String::new()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                result.method.as_str().to_string(),
                rec.replication.to_string(),
                rec.fold.to_string(),
                fmt_f64(rec.report.ccr),
                fmt_f64(rec.report.mwe),
                opt(rec.report.angle_deg),
                opt(rec.report.intercept_dev),
                c0,
                c,
                rec.n_train_plus.to_string(),
                rec.n_train_minus.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
