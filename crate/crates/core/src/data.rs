//! Datasets: synthetic generators, CSV round trips, standardization, and
//! linear-ANM fitting for user-supplied tabular data.

use crate::classifier::AffineScaler;
use crate::error::{Error, Result};
use crate::expr::logistic;
use crate::rng;
use crate::scm::{builtin, Instance, Mechanism, NodeKind, NodeSpec, NoiseDist, ScmSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A labeled tabular dataset tied to an SCM's coordinate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    /// Binary labels stored as 0.0 / 1.0.
    pub labels: Vec<f64>,
    pub feature_names: Vec<String>,
    /// True for categorical coordinates; they are never rescaled.
    pub categorical_mask: Vec<bool>,
    /// Standardization parameters, recorded whenever applied.
    pub standardization: Option<AffineScaler>,
    /// Dataset identifier: SCM name or source file.
    pub source: String,
    pub seed: u64,
}

impl Dataset {
    pub fn from_parts(
        scm: &ScmSpec,
        instances: Vec<Instance>,
        labels: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if instances.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: instances.len(),
                got: labels.len(),
            });
        }
        for y in &labels {
            if *y != 0.0 && *y != 1.0 {
                return Err(Error::NonBinaryLabel(format!("{y}")));
            }
        }
        Ok(Dataset {
            instances,
            labels,
            feature_names: scm.node_names(),
            categorical_mask: (0..scm.dim()).map(|i| scm.nodes()[i].kind.is_categorical()).collect(),
            standardization: None,
            source: scm.name().to_string(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Seed-stable shuffled split into (first, second) with `frac` of the
    /// rows in the first part. The parts are disjoint and cover the dataset.
    pub fn split(&self, frac: f64, seed: u64) -> (Dataset, Dataset) {
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut r = rng::stream(seed, &[0x59111]);
        // Fisher-Yates.
        for i in (1..indices.len()).rev() {
            let j = r.gen_range(0..=i);
            indices.swap(i, j);
        }
        let cut = ((self.len() as f64) * frac).round() as usize;
        let pick = |ids: &[usize]| Dataset {
            instances: ids.iter().map(|&i| self.instances[i].clone()).collect(),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            categorical_mask: self.categorical_mask.clone(),
            standardization: self.standardization.clone(),
            source: self.source.clone(),
            seed: self.seed,
        };
        (pick(&indices[..cut]), pick(&indices[cut..]))
    }

    /// Mean/scale of the continuous coordinates (identity on categorical and
    /// on zero-variance features). This is the transform `standardize`
    /// applies and the transform trained models carry.
    pub fn fit_scaler(&self) -> (AffineScaler, Vec<usize>) {
        let n = self.len() as f64;
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut skipped = Vec::new();
        for j in 0..dim {
            if self.categorical_mask[j] {
                continue;
            }
            let m: f64 = self.instances.iter().map(|v| v.values[j]).sum::<f64>() / n;
            let var: f64 =
                self.instances.iter().map(|v| (v.values[j] - m).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                mean[j] = m;
                scale[j] = var.sqrt();
            } else {
                skipped.push(j);
            }
        }
        (AffineScaler { mean, scale }, skipped)
    }
}

/// Standardization outcome: the rescaled dataset plus any zero-variance
/// features that were left unscaled.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub dataset: Dataset,
    pub skipped_features: Vec<usize>,
}

/// Scales continuous coordinates to zero mean and unit variance, recording
/// the parameters. Categorical coordinates are untouched; zero-variance
/// features are left unscaled and reported.
pub fn standardize(ds: &Dataset) -> Result<Standardized> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (scaler, skipped) = ds.fit_scaler();
    let instances = ds
        .instances
        .iter()
        .map(|v| Instance::new(scaler.apply(&v.values)))
        .collect();
    let mut out = ds.clone();
    out.instances = instances;
    out.standardization = Some(scaler);
    Ok(Standardized { dataset: out, skipped_features: skipped })
}

/// Inverts `standardize` using the recorded parameters.
pub fn destandardize(ds: &Dataset) -> Result<Dataset> {
    let scaler = ds
        .standardization
        .as_ref()
        .ok_or_else(|| Error::InvalidScm("dataset has no standardization recorded".into()))?;
    let instances = ds
        .instances
        .iter()
        .map(|v| {
            Instance::new(
                v.values
                    .iter()
                    .zip(scaler.mean.iter().zip(&scaler.scale))
                    .map(|(x, (m, s))| x * s + m)
                    .collect(),
            )
        })
        .collect();
    let mut out = ds.clone();
    out.instances = instances;
    out.standardization = None;
    Ok(out)
}

// ── synthetic generators ───────────────────────────────────────────────

/// Label probability rule for the built-in datasets.
pub fn label_probability(name: &str, v: &Instance) -> Result<f64> {
    match name {
        // sigmoid(X1 + X2)
        "lin" | "imf" => Ok(logistic(v.values[1] + v.values[2])),
        // sigmoid((X1 + X2)^2)
        "nlm" => Ok(logistic((v.values[1] + v.values[2]).powi(2))),
        // sigmoid(0.3 (-L - D + I + S + I*S))
        "loan" => {
            let (l, d, i, s) = (v.values[3], v.values[4], v.values[5], v.values[6]);
            Ok(logistic(0.3 * (-l - d + i + s + i * s)))
        }
        other => Err(Error::UnknownDataset(other.into())),
    }
}

/// Generates one of the built-in datasets by ancestral sampling plus the
/// matching Bernoulli label rule.
pub fn gen_dataset(name: &str, n: usize, seed: u64) -> Result<(ScmSpec, Dataset)> {
    let scm = builtin::by_name(name)?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let instances = scm.sample(n, rng::derive(seed, &[0xda7a]))?;
    let mut label_rng = rng::stream(seed, &[0x1abe1]);
    let labels = instances
        .iter()
        .map(|v| {
            let p = label_probability(name, v)?;
            Ok(if label_rng.gen_bool(p.clamp(0.0, 1.0)) { 1.0 } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let ds = Dataset::from_parts(&scm, instances, labels, seed)?;
    Ok((scm, ds))
}

// ── CSV round trips ────────────────────────────────────────────────────

/// Writes features plus a final binary `y` column.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.feature_names.clone();
    header.push("y".into());
    w.write_record(&header)?;
    for (v, y) in ds.instances.iter().zip(&ds.labels) {
        let mut row: Vec<String> = v.values.iter().map(|x| format!("{x}")).collect();
        row.push(format!("{}", *y as u8));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_csv`] back against a known SCM: the
/// feature columns are matched by node name and a binary `y` column is
/// required.
pub fn read_csv(path: &Path, scm: &ScmSpec) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::ColumnMismatch("missing label column \"y\"".into()))?;
    let mut col_of = Vec::with_capacity(scm.dim());
    for name in scm.node_names() {
        let col = header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::ColumnMismatch(format!("CSV is missing column {name:?}")))?;
        col_of.push(col);
    }
    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(scm.dim());
        for &c in &col_of {
            let cell = record
                .get(c)
                .ok_or_else(|| Error::ColumnMismatch(format!("short row at column {c}")))?;
            row.push(cell.trim().parse::<f64>().map_err(|_| {
                Error::ColumnMismatch(format!("non-numeric value {cell:?} in column {c}"))
            })?);
        }
        let y: f64 = record
            .get(y_col)
            .ok_or_else(|| Error::ColumnMismatch("short row at label column".into()))?
            .trim()
            .parse()
            .map_err(|_| Error::NonBinaryLabel("unparseable".into()))?;
        let v = Instance::new(row);
        scm.validate_instance(&v)?;
        instances.push(v);
        labels.push(y);
    }
    let mut ds = Dataset::from_parts(scm, instances, labels, 0)?;
    ds.source = format!("{}", path.display());
    Ok(ds)
}

// ── linear-ANM fitting ─────────────────────────────────────────────────

/// User-declared causal layout for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub nodes: Vec<DagNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagNode {
    pub name: String,
    pub parents: Vec<String>,
}

impl DagSpec {
    pub fn read_json(path: &Path) -> Result<DagSpec> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Node order with every parent before its child.
    fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let index_of = |name: &str| -> Result<usize> {
            self.nodes.iter().position(|nd| nd.name == name).ok_or_else(|| {
                Error::InvalidScm(format!("DAG spec references unknown node {name:?}"))
            })
        };
        let mut parents: Vec<Vec<usize>> = Vec::with_capacity(n);
        for node in &self.nodes {
            parents.push(node.parents.iter().map(|p| index_of(p)).collect::<Result<_>>()?);
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let before = order.len();
            for i in 0..n {
                if !placed[i] && parents[i].iter().all(|&p| placed[p]) {
                    placed[i] = true;
                    order.push(i);
                }
            }
            if order.len() == before {
                return Err(Error::InvalidScm("DAG spec contains a cycle".into()));
            }
        }
        Ok(order)
    }
}

/// Solves the normal equations by Gaussian elimination with partial
/// pivoting; `None` when the system is singular.
fn solve_least_squares(design: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let k = design[0].len();
    let mut ata = vec![vec![0.0; k + 1]; k];
    for (row, &t) in design.iter().zip(target) {
        for i in 0..k {
            for j in 0..k {
                ata[i][j] += row[i] * row[j];
            }
            ata[i][k] += row[i] * t;
        }
    }
    let scale = ata
        .iter()
        .flat_map(|r| r[..k].iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| {
            ata[a][col].abs().partial_cmp(&ata[b][col].abs()).unwrap()
        })?;
        if ata[pivot][col].abs() < 1e-10 * scale {
            return None;
        }
        ata.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = ata[row][col] / ata[col][col];
                for j in col..=k {
                    ata[row][j] -= f * ata[col][j];
                }
            }
        }
    }
    Some((0..k).map(|i| ata[i][k] / ata[i][i]).collect())
}

/// Reads a CSV with a header and binary `y` column, fits a linear ANM per
/// node (least squares on its declared parents, residuals become Gaussian
/// noise), and returns the fitted SCM with the dataset.
pub fn ingest_csv(
    path: &Path,
    dag: &DagSpec,
    sensitive_names: &[String],
) -> Result<(ScmSpec, Dataset)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::ColumnMismatch("missing label column \"y\"".into()))?;

    let order = dag.topo_order()?;
    let ordered: Vec<&DagNode> = order.iter().map(|&i| &dag.nodes[i]).collect();
    let mut col_of = Vec::with_capacity(ordered.len());
    for node in &ordered {
        let col = header.iter().position(|h| *h == node.name).ok_or_else(|| {
            Error::ColumnMismatch(format!("CSV is missing column {:?}", node.name))
        })?;
        col_of.push(col);
    }
    for s in sensitive_names {
        if !ordered.iter().any(|n| &n.name == s) {
            return Err(Error::ColumnMismatch(format!(
                "sensitive column {s:?} is not in the DAG spec"
            )));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(ordered.len());
        for &c in &col_of {
            let cell = record.get(c).ok_or_else(|| {
                Error::ColumnMismatch(format!("short row while reading column {c}"))
            })?;
            row.push(cell.trim().parse::<f64>().map_err(|_| {
                Error::ColumnMismatch(format!("non-numeric value {cell:?} in column {c}"))
            })?);
        }
        let y_cell = record
            .get(y_col)
            .ok_or_else(|| Error::ColumnMismatch("short row at label column".into()))?;
        let y: f64 = y_cell
            .trim()
            .parse()
            .map_err(|_| Error::NonBinaryLabel(y_cell.to_string()))?;
        if y != 0.0 && y != 1.0 {
            return Err(Error::NonBinaryLabel(format!("{y}")));
        }
        rows.push(row);
        labels.push(y);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let n = rows.len();
    let dim = ordered.len();
    let name_to_idx = |name: &str| ordered.iter().position(|nd| nd.name == name).unwrap();
    let mut nodes = Vec::with_capacity(dim);
    for (i, node) in ordered.iter().enumerate() {
        let is_sensitive = sensitive_names.contains(&node.name);
        let parents: Vec<usize> = node.parents.iter().map(|p| name_to_idx(p)).collect();
        if is_sensitive {
            if !parents.is_empty() {
                return Err(Error::InvalidScm(format!(
                    "sensitive node {} must be a root",
                    node.name
                )));
            }
            let values: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            if values.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidScm(format!(
                    "sensitive column {} must be coded 0/1",
                    node.name
                )));
            }
            let p_hat = values.iter().sum::<f64>() / n as f64;
            nodes.push(NodeSpec {
                name: node.name.clone(),
                kind: NodeKind::Categorical { levels: vec![0.0, 1.0] },
                mechanism: Mechanism::Identity,
                noise: NoiseDist::Bernoulli { p: p_hat },
                parents,
            });
            continue;
        }
        // Least squares of the node on [1, parents].
        let design: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut d = Vec::with_capacity(parents.len() + 1);
                d.push(1.0);
                d.extend(parents.iter().map(|&p| r[p]));
                d
            })
            .collect();
        let target: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        let beta = solve_least_squares(&design, &target)
            .ok_or_else(|| Error::SingularDesign { node: node.name.clone() })?;
        let residuals: Vec<f64> = design
            .iter()
            .zip(&target)
            .map(|(d, t)| t - d.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let res_mean = residuals.iter().sum::<f64>() / n as f64;
        let res_var =
            residuals.iter().map(|r| (r - res_mean).powi(2)).sum::<f64>() / n as f64;
        nodes.push(NodeSpec {
            name: node.name.clone(),
            kind: NodeKind::Continuous,
            mechanism: Mechanism::Linear { coeffs: beta[1..].to_vec(), intercept: beta[0] },
            // Variance floored so a noiseless fit still yields a valid model.
            noise: NoiseDist::Normal { mean: res_mean, var: res_var.max(1e-12) },
            parents,
        });
    }

    let sensitive_idx: Vec<usize> =
        sensitive_names.iter().map(|s| name_to_idx(s)).collect();
    let scm_name = dag.name.clone().unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "fitted".into())
    });
    let scm = ScmSpec::new(scm_name, nodes, sensitive_idx)?;
    let instances: Vec<Instance> = rows.into_iter().map(Instance::new).collect();
    let mut ds = Dataset::from_parts(&scm, instances, labels, 0)?;
    ds.source = format!("{}", path.display());
    Ok((scm, ds))
}
