//! Per-family datasets: batch generation through the oracle, canonical CSV
//! persistence, seeded splits and min-max scaling.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design_space::{encode, is_valid, DesignAlternative, Family, FeatureSchema, GridPoint};
use crate::error::{Error, Result};
use crate::geometry::shading_area;
use crate::sim::{Exposure, Fidelity, MetricVector, Output, Site, SunSampler};

pub const GENERATOR_VERSION: &str = "shadekit-oracle/1";
pub const CHECKPOINT_EVERY: usize = 1000;
pub const METRIC_COLUMNS: [&str; 6] = ["sda", "ase", "mda", "avg_ill", "hvc60", "area"];

/// Rounds to six significant digits, the canonical stored precision.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let r: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round_metrics(m: MetricVector) -> MetricVector {
    MetricVector::from_array(m.to_array().map(round_sig6))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: u32,
    pub features: Vec<f64>,
    /// `None` for geometrically infeasible alternatives.
    pub metrics: Option<MetricVector>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub family: Family,
    pub schema: FeatureSchema,
    pub fidelity: Fidelity,
    pub generator_version: String,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub generator_version: String,
    pub family: Family,
    pub fidelity: Fidelity,
    pub day_step: u32,
    pub site: Site,
    pub row_count: usize,
    pub valid_count: usize,
    pub content_hash: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub fidelity: Fidelity,
    pub parallelism: usize,
    pub checkpoint_every: usize,
    /// Test hook: fail with [`Error::Interrupted`] once this many rows are checkpointed.
    #[doc(hidden)]
    pub stop_after: Option<usize>,
}

impl GenerateOptions {
    pub fn new(fidelity: Fidelity, parallelism: usize) -> Self {
        GenerateOptions { fidelity, parallelism, checkpoint_every: CHECKPOINT_EVERY, stop_after: None }
    }
}

/// Representative of the alternatives that share one optical configuration:
/// the same alternative with the first glass and the first material.
fn optical_key(family: Family, alt: &DesignAlternative) -> usize {
    let mut gp = GridPoint::of(alt).expect("enumerated alternative");
    gp.indices[4] = 0;
    if family.has_material() {
        *gp.indices.last_mut().unwrap() = 0;
    }
    gp.rank()
}

fn simulate_ids(family: Family, ids: std::ops::Range<usize>, sampler: &SunSampler) -> Vec<Row> {
    let alts: Vec<DesignAlternative> = ids
        .map(|id| GridPoint::from_rank(family, id).expect("id in range").to_alternative())
        .collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, alt) in alts.iter().enumerate() {
        if is_valid(alt) {
            groups.entry(optical_key(family, alt)).or_default().push(k);
        }
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let computed: Vec<Vec<(usize, MetricVector)>> = groups
        .par_iter()
        .map(|members| {
            let exposure = Exposure::compute(&alts[members[0]], sampler).expect("valid alternative simulates");
            members
                .iter()
                .map(|&k| {
                    let alt = &alts[k];
                    (k, round_metrics(exposure.metrics(alt.opening.glass_vt, shading_area(alt))))
                })
                .collect()
        })
        .collect();
    let mut metrics: Vec<Option<MetricVector>> = vec![None; alts.len()];
    for (k, m) in computed.into_iter().flatten() {
        metrics[k] = Some(m);
    }
    alts.iter()
        .zip(metrics)
        .map(|(alt, m)| Row { id: alt.id, features: encode(alt), valid: m.is_some(), metrics: m })
        .collect()
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::domain(format!("cannot build worker pool: {e}")))
}

/// Simulates every enumerated alternative of `family`, in id order.
pub fn generate(family: Family, fidelity: Fidelity, parallelism: usize) -> Result<Dataset> {
    let sampler = SunSampler::shared(fidelity);
    let rows = pool(parallelism)?.install(|| simulate_ids(family, 0..family.count(), sampler));
    Ok(Dataset::new(family, fidelity, rows))
}

pub fn partial_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    csv.with_file_name(name)
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Generates `family` into `csv`, checkpointing every `checkpoint_every` rows
/// to `<csv>.partial`. A rerun after an interruption resumes at the first
/// missing id.
pub fn generate_to_file(family: Family, opts: &GenerateOptions, csv: &Path) -> Result<Dataset> {
    let sampler = SunSampler::shared(opts.fidelity);
    let schema = FeatureSchema::for_family(family);
    let partial = partial_path(csv);
    let mut rows = if partial.exists() { read_partial(&partial, &schema)? } else { Vec::new() };
    let total = family.count();
    let pool = pool(opts.parallelism)?;
    let step = opts.checkpoint_every.max(1);

    if rows.is_empty() {
        fs::write(&partial, csv_header(&schema).join(",") + "\n")?;
    }
    while rows.len() < total {
        let start = rows.len();
        let end = (start + step).min(total);
        let chunk = pool.install(|| simulate_ids(family, start..end, sampler));
        let mut text = String::new();
        for row in &chunk {
            text.push_str(&row_fields(row).join(","));
            text.push('\n');
        }
        let appended = fs::OpenOptions::new()
            .append(true)
            .open(&partial)
            .and_then(|mut f| f.write_all(text.as_bytes()).and_then(|_| f.sync_data()));
        if let Err(source) = appended {
            return Err(Error::Interrupted { completed: start, source });
        }
        rows.extend(chunk);
        if opts.stop_after.is_some_and(|n| rows.len() >= n && rows.len() < total) {
            return Err(Error::Interrupted {
                completed: rows.len(),
                source: io::Error::new(io::ErrorKind::Interrupted, "stopped by request"),
            });
        }
    }
    let ds = Dataset::new(family, opts.fidelity, rows);
    ds.write_csv(csv)?;
    fs::remove_file(&partial)?;
    Ok(ds)
}

fn read_partial(path: &Path, schema: &FeatureSchema) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or_default().trim_end();
    if header != csv_header(schema).join(",") {
        return Err(Error::Format(format!("checkpoint {} has a foreign header", path.display())));
    }
    let mut rows = Vec::new();
    for line in lines {
        // a torn final line from a crash is simply recomputed
        let Some(line) = line.strip_suffix('\n') else { break };
        let fields: Vec<&str> = line.split(',').collect();
        let row = parse_row(&fields, schema)?;
        if row.id as usize != rows.len() {
            return Err(Error::Format(format!("checkpoint {} is not contiguous", path.display())));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn csv_header(schema: &FeatureSchema) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend(schema.columns.iter().map(|c| c.name.clone()));
    h.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    h.push("valid".into());
    h
}

fn row_fields(row: &Row) -> Vec<String> {
    let mut f = vec![row.id.to_string()];
    f.extend(row.features.iter().map(|v| v.to_string()));
    match &row.metrics {
        Some(m) => f.extend(m.to_array().iter().map(|v| v.to_string())),
        None => f.extend(std::iter::repeat(String::new()).take(6)),
    }
    f.push(row.valid.to_string());
    f
}

fn parse_row(fields: &[&str], schema: &FeatureSchema) -> Result<Row> {
    let n = schema.len();
    if fields.len() != n + 8 {
        return Err(Error::Format(format!("expected {} fields, found {}", n + 8, fields.len())));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number `{s}`"))) };
    let id = fields[0].parse().map_err(|_| Error::Format(format!("bad id `{}`", fields[0])))?;
    let features = fields[1..=n].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
    let metric_fields = &fields[n + 1..n + 7];
    let metrics = if metric_fields.iter().all(|s| s.is_empty()) {
        None
    } else {
        let v: Vec<f64> = metric_fields.iter().map(|s| num(s)).collect::<Result<_>>()?;
        Some(MetricVector::from_array(v.try_into().unwrap()))
    };
    let valid = match fields[n + 7] {
        "true" => true,
        "false" => false,
        other => return Err(Error::Format(format!("bad validity flag `{other}`"))),
    };
    Ok(Row { id, features, metrics, valid })
}

impl Dataset {
    pub fn new(family: Family, fidelity: Fidelity, rows: Vec<Row>) -> Self {
        Dataset {
            family,
            schema: FeatureSchema::for_family(family),
            fidelity,
            generator_version: GENERATOR_VERSION.into(),
            rows,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.rows.iter().filter(|r| r.valid).count()
    }

    /// Canonical CSV bytes (LF line endings, shortest round-trip floats).
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(csv_header(&self.schema)).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row_fields(row)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_bytes()))
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            generator_version: self.generator_version.clone(),
            family: self.family,
            fidelity: self.fidelity,
            day_step: self.fidelity.day_step(),
            site: Site::TEHRAN,
            row_count: self.rows.len(),
            valid_count: self.valid_count(),
            content_hash: self.content_hash(),
            columns: csv_header(&self.schema),
        }
    }

    /// Writes the CSV and its JSON sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let bytes = self.to_csv_bytes();
        let tmp = path.with_extension("csv.tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write_csv`], verifying the sidecar hash.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let bytes = fs::read(path)?;
        if hex::encode(Sha256::digest(&bytes)) != meta.content_hash {
            return Err(Error::HashMismatch(path.to_path_buf()));
        }
        let schema = FeatureSchema::for_family(meta.family);
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if header != csv_header(&schema) {
            return Err(Error::Format(format!("{} header does not match the {} schema", path.display(), meta.family)));
        }
        let mut rows = Vec::with_capacity(meta.row_count);
        for record in reader.records() {
            let record = record?;
            let fields: Vec<&str> = record.iter().collect();
            rows.push(parse_row(&fields, &schema)?);
        }
        Ok(Dataset {
            family: meta.family,
            schema,
            fidelity: meta.fidelity,
            generator_version: meta.generator_version,
            rows,
        })
    }

    /// Valid rows split into train / validation / test partitions.
    pub fn partitions(&self, spec: &SplitSpec) -> Result<Partitions> {
        let valid: Vec<&Row> = self.rows.iter().filter(|r| r.valid).collect();
        let split = split_indices(valid.len(), spec)?;
        let take = |role: Role, ix: &[usize]| Partition {
            role,
            ids: ix.iter().map(|&i| valid[i].id).collect(),
            features: ix.iter().map(|&i| valid[i].features.clone()).collect(),
            metrics: ix.iter().map(|&i| valid[i].metrics.expect("valid row has metrics")).collect(),
        };
        Ok(Partitions {
            train: take(Role::Train, &split.train),
            validation: take(Role::Validation, &split.validation),
            test: take(Role::Test, &split.test),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_fraction: f64,
    pub validation_fraction: f64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec { seed, test_fraction: 0.2, validation_fraction: 0.1 }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(42)
    }
}

/// Row positions of each partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Test takes `round(f_test·N)` rows, validation `round(f_val·(N − test))`,
/// train the rest; membership comes from a seeded uniform shuffle.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if n == 0 {
        return Err(Error::domain("cannot split an empty dataset"));
    }
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    let n_val = (spec.validation_fraction * (n - n_test) as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices {
        test: sorted(&order[..n_test]),
        validation: sorted(&order[n_test..n_test + n_val]),
        train: sorted(&order[n_test + n_val..]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Validation,
    Test,
    /// Union of partitions with different roles.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub role: Role,
    pub ids: Vec<u32>,
    pub features: Vec<Vec<f64>>,
    pub metrics: Vec<MetricVector>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn targets(&self, output: Output) -> Vec<f64> {
        self.metrics.iter().map(|m| m.get(output)).collect()
    }

    /// Concatenation; the role survives only if both sides share it.
    pub fn union(&self, other: &Partition) -> Partition {
        Partition {
            role: if self.role == other.role { self.role } else { Role::Mixed },
            ids: self.ids.iter().chain(&other.ids).copied().collect(),
            features: self.features.iter().chain(&other.features).cloned().collect(),
            metrics: self.metrics.iter().chain(&other.metrics).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub train: Partition,
    pub validation: Partition,
    pub test: Partition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

/// Per-column min-max scaling; one-hot columns pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub ranges: Vec<ColumnRange>,
    pub one_hot: Vec<bool>,
}

impl ScalerParams {
    /// Fits on a training partition. Any other role is refused, since fitting
    /// on held-out rows leaks them into the model.
    pub fn fit(train: &Partition, schema: &FeatureSchema) -> Result<Self> {
        if train.role != Role::Train {
            return Err(Error::ScalerMisuse(format!("scaler fitted on a {:?} partition", train.role)));
        }
        Self::fit_rows(&train.features, schema.one_hot_mask())
    }

    pub fn fit_rows(rows: &[Vec<f64>], one_hot: Vec<bool>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("cannot fit a scaler on zero rows"));
        }
        let ranges = (0..one_hot.len())
            .map(|j| {
                let (min, max) = rows
                    .iter()
                    .map(|r| r[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                ColumnRange { min, max }
            })
            .collect();
        Ok(ScalerParams { ranges, one_hot })
    }

    /// Linear map of the training range onto [0, 1], unclamped; constant
    /// columns map to 0.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.ranges)
            .zip(&self.one_hot)
            .map(|((&x, r), &oh)| {
                if oh {
                    x
                } else if r.max > r.min {
                    (x - r.min) / (r.max - r.min)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_sizes() {
        let s = split_indices(100, &SplitSpec::new(1)).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.train.len()), (20, 8, 72));
        let s = split_indices(87912, &SplitSpec::new(1)).unwrap();
        assert_eq!((s.test.len(), s.validation.len(), s.train.len()), (17582, 7033, 63297));
        assert!(split_indices(0, &SplitSpec::new(1)).is_err());
    }

    #[test]
    fn split_is_seed_reproducible() {
        let a = split_indices(500, &SplitSpec::new(9)).unwrap();
        assert_eq!(a, split_indices(500, &SplitSpec::new(9)).unwrap());
        assert_ne!(a, split_indices(500, &SplitSpec::new(10)).unwrap());
    }

    proptest! {
        #[test]
        fn split_partitions_are_disjoint_and_exhaustive(n in 1usize..2000, seed in any::<u64>()) {
            let s = split_indices(n, &SplitSpec::new(seed)).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn scaled_training_values_lie_in_unit_interval(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..40)
        ) {
            let sc = ScalerParams::fit_rows(&rows, vec![false; 3]).unwrap();
            for r in &rows {
                for v in sc.apply(r) {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn sig6_rounding_is_idempotent_and_round_trips(x in -1e7f64..1e7) {
            let r = round_sig6(x);
            prop_assert_eq!(round_sig6(r), r);
            prop_assert_eq!(r.to_string().parse::<f64>().unwrap(), r);
            prop_assert!((r - x).abs() <= x.abs() * 5e-6 + 1e-300);
        }
    }

    #[test]
    fn scaler_examples() {
        let rows = vec![vec![2.0, 5.0, 1.0], vec![4.0, 5.0, 0.0]];
        let sc = ScalerParams::fit_rows(&rows, vec![false, false, true]).unwrap();
        assert_eq!(sc.apply(&[2.0, 5.0, 1.0]), vec![0.0, 0.0, 1.0]);
        assert_eq!(sc.apply(&[4.0, 5.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(sc.apply(&[3.0, 5.0, 0.0])[0], 0.5);
        assert_eq!(sc.apply(&[6.0, 7.0, 0.0])[0], 2.0);
        assert_eq!(sc.apply(&[6.0, 7.0, 0.0])[1], 0.0);
    }

    fn tiny(role: Role) -> Partition {
        Partition {
            role,
            ids: vec![0],
            features: vec![vec![1.0; 12]],
            metrics: vec![MetricVector::from_array([0.0; 6])],
        }
    }

    #[test]
    fn scaler_refuses_held_out_rows() {
        let schema = FeatureSchema::for_family(Family::NoShading);
        assert!(ScalerParams::fit(&tiny(Role::Train), &schema).is_ok());
        let merged = tiny(Role::Train).union(&tiny(Role::Test));
        assert!(matches!(ScalerParams::fit(&merged, &schema), Err(Error::ScalerMisuse(_))));
        assert!(matches!(ScalerParams::fit(&tiny(Role::Test), &schema), Err(Error::ScalerMisuse(_))));
    }

    #[test]
    fn no_shading_generation_and_csv_round_trip() {
        let ds = generate(Family::NoShading, Fidelity::Coarse, 2).unwrap();
        assert_eq!(ds.rows.len(), 648);
        assert!(ds.rows.iter().enumerate().all(|(i, r)| r.id as usize == i));
        assert!(ds.rows.iter().all(|r| r.valid == r.metrics.is_some()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no_shading.csv");
        ds.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back, ds);
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.starts_with("id,win_side_N,win_side_E,win_side_W,win_side_S,width_x"));

        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::HashMismatch(_))));
    }

    #[test]
    fn interrupted_generation_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vp.csv");
        let mut opts = GenerateOptions::new(Fidelity::Coarse, 1);
        opts.checkpoint_every = 250;
        opts.stop_after = Some(500);
        let err = generate_to_file(Family::VerticalPanel, &opts, &path).unwrap_err();
        assert!(matches!(err, Error::Interrupted { completed: 500, .. }));
        assert!(partial_path(&path).exists());
        // simulate a torn write at the end of the checkpoint
        let mut f = fs::OpenOptions::new().append(true).open(partial_path(&path)).unwrap();
        f.write_all(b"500,0,0").unwrap();
        drop(f);

        opts.stop_after = None;
        let resumed = generate_to_file(Family::VerticalPanel, &opts, &path).unwrap();
        assert!(!partial_path(&path).exists());
        let fresh = generate(Family::VerticalPanel, Fidelity::Coarse, 1).unwrap();
        assert_eq!(resumed, fresh);
        assert_eq!(fs::read(&path).unwrap(), fresh.to_csv_bytes());
    }
}
