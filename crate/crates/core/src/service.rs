//! Prediction, suggestion and LEED scoring behind the HTTP API and CLI.
//!
//! Artifacts live under one root:
//! `data/<family>.csv`, `models/<family>/<output>.json`,
//! `reports/<family>.shap.json` and `optimal_db.{json,csv}`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::design_space::{
    DesignAlternative, Family, FeatureSchema, Material, Orientation, ParamValues, ParameterSpec,
};
use crate::error::{Error, Result};
use crate::moo::{OptimalRecord, ParetoArchive};
use crate::sensitivity::{report_path, ShapReport};
use crate::sim::{MetricVector, Output};
use crate::surrogate::{artifact_path, SurrogateModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeedTable {
    /// Any ASE above this (percent) scores nothing.
    pub ase_limit: f64,
    /// (minimum sDA, points), ascending.
    pub steps: Vec<(f64, u8)>,
}

impl Default for LeedTable {
    fn default() -> Self {
        LeedTable { ase_limit: 10.0, steps: vec![(40.0, 1), (55.0, 2), (75.0, 3)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeedScore {
    pub points: u8,
    pub sda_threshold_met: bool,
    pub ase_gate_met: bool,
    pub table: LeedTable,
}

pub fn leed_score(sda: f64, ase: f64, table: &LeedTable) -> Result<LeedScore> {
    for (name, v) in [("sda", sda), ("ase", ase)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} is outside [0, 100]")));
        }
    }
    let ase_gate_met = ase <= table.ase_limit;
    let earned = table.steps.iter().filter(|(min, _)| sda >= *min).map(|&(_, p)| p).max().unwrap_or(0);
    Ok(LeedScore {
        points: if ase_gate_met { earned } else { 0 },
        sda_threshold_met: earned > 0,
        ase_gate_met,
        table: table.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub model: u64,
    pub shap: u64,
    pub optimize: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { split: 42, model: 42, shap: 42, optimize: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub artifacts: PathBuf,
    pub host: String,
    pub port: u16,
    pub leed: LeedTable,
    pub seeds: Seeds,
    /// Used when a suggest query names no limit.
    pub default_max_results: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            artifacts: PathBuf::from("artifacts"),
            host: "127.0.0.1".into(),
            port: 8080,
            leed: LeedTable::default(),
            seeds: Seeds::default(),
            default_max_results: 50,
        }
    }
}

pub const ENV_PORT: &str = "SHADEKIT_PORT";
pub const ENV_ARTIFACTS: &str = "SHADEKIT_ARTIFACTS";

impl ServiceConfig {
    /// Reads a JSON config; missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read(path) {
            Ok(b) => Ok(serde_json::from_slice(&b)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.into())),
            Err(e) => Err(e.into()),
        }
    }

    /// Applies `SHADEKIT_PORT` and `SHADEKIT_ARTIFACTS` as returned by `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(p) = var(ENV_PORT) {
            self.port = p.parse().map_err(|_| Error::domain(format!("{ENV_PORT}=`{p}` is not a port number")))?;
        }
        if let Some(a) = var(ENV_ARTIFACTS) {
            self.artifacts = PathBuf::from(a);
        }
        Ok(())
    }
}

/// Paths of every artifact under one root directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Artifacts { root: root.into() }
    }

    pub fn dataset(&self, family: Family) -> PathBuf {
        self.root.join("data").join(format!("{}.csv", family.name()))
    }

    pub fn model(&self, family: Family, output: Output) -> PathBuf {
        artifact_path(&self.root.join("models"), family, output)
    }

    pub fn report(&self, family: Family) -> PathBuf {
        report_path(&self.root.join("reports"), family)
    }

    pub fn optimal_json(&self) -> PathBuf {
        self.root.join("optimal_db.json")
    }

    pub fn optimal_csv(&self) -> PathBuf {
        self.root.join("optimal_db.csv")
    }
}

/// A parameter value as sent by clients: a number, or a label for
/// categorical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Label(String),
}

impl ParamValue {
    fn number(&self, name: &str) -> Result<f64> {
        match self {
            ParamValue::Number(v) if v.is_finite() => Ok(*v),
            ParamValue::Label(s) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::domain(format!("{name} expects a number, got `{s}`"))),
            ParamValue::Number(v) => Err(Error::domain(format!("{name} = {v} is not finite"))),
        }
    }
}

/// The parameter assignment describing `alt`.
pub fn params_of(alt: &DesignAlternative) -> BTreeMap<String, ParamValue> {
    let schema = FeatureSchema::for_family(alt.family());
    let x = crate::design_space::encode(alt);
    let mut out = BTreeMap::new();
    out.insert("win_side".into(), ParamValue::Label(alt.room.win_side.label().into()));
    if let Some(m) = alt.shading.material() {
        out.insert("sh_mat".into(), ParamValue::Label(m.label().into()));
    }
    for p in schema.parameters() {
        if let ParamValues::Numeric(_) = p.values {
            out.insert(p.name.clone(), ParamValue::Number(x[p.columns[0]]));
        }
    }
    out
}

/// Feature vector for a parameter assignment. Parameters with a single
/// admissible level may be omitted. Numeric values off the design grid are
/// accepted and reported through the returned flag.
pub fn features_from_params(schema: &FeatureSchema, params: &BTreeMap<String, ParamValue>) -> Result<(Vec<f64>, bool)> {
    let specs = schema.parameters();
    if let Some(unknown) = params.keys().find(|k| !specs.iter().any(|p| &p.name == *k)) {
        return Err(Error::domain(format!("{} has no parameter `{unknown}`", schema.family)));
    }
    let mut x = vec![0.0; schema.len()];
    let mut off_grid = false;
    for spec in &specs {
        let value = params.get(&spec.name);
        match &spec.values {
            ParamValues::Categorical(levels) => {
                let label = match value {
                    Some(ParamValue::Label(s)) => s.clone(),
                    Some(ParamValue::Number(_)) => {
                        return Err(Error::domain(format!("{} expects one of {levels:?}", spec.name)))
                    }
                    None if levels.len() == 1 => levels[0].clone(),
                    None => return Err(Error::domain(format!("missing parameter `{}`", spec.name))),
                };
                let k = categorical_index(spec, &label)?;
                x[spec.columns[k]] = 1.0;
            }
            ParamValues::Numeric(levels) => {
                let v = match value {
                    Some(v) => v.number(&spec.name)?,
                    None if levels.len() == 1 => levels[0],
                    None => return Err(Error::domain(format!("missing parameter `{}`", spec.name))),
                };
                off_grid |= !levels.iter().any(|l| (l - v).abs() <= 1e-9);
                x[spec.columns[0]] = v;
            }
        }
    }
    Ok((x, off_grid))
}

fn categorical_index(spec: &ParameterSpec, label: &str) -> Result<usize> {
    match spec.name.as_str() {
        "win_side" => Ok(Orientation::from_str(label)?.index()),
        "sh_mat" => Ok(Material::from_str(label)?.index()),
        _ => match &spec.values {
            ParamValues::Categorical(levels) => levels
                .iter()
                .position(|l| l.eq_ignore_ascii_case(label))
                .ok_or_else(|| Error::domain(format!("{} expects one of {levels:?}", spec.name))),
            ParamValues::Numeric(_) => unreachable!("numeric parameter treated as categorical"),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub family: String,
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub family: Family,
    pub metrics: MetricVector,
    pub leed: LeedScore,
    /// Star flag per parameter; all false when no sensitivity report exists.
    pub stars: BTreeMap<String, bool>,
    pub off_grid: bool,
    pub model_hashes: BTreeMap<String, String>,
    pub report_hash: Option<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterInfo {
    #[serde(flatten)]
    pub spec: ParameterSpec,
    pub starred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub family: Family,
    pub parameters: Vec<ParameterInfo>,
    pub sensitivity_available: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Range {
    fn contains(&self, v: f64) -> bool {
        self.min.map_or(true, |m| v >= m) && self.max.map_or(true, |m| v <= m)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuggestQuery {
    pub family: Option<Family>,
    pub win_side: Option<Orientation>,
    pub width_x: Option<f64>,
    pub length_y: Option<f64>,
    pub wwr: Option<f64>,
    pub sda: Option<Range>,
    pub ase: Option<Range>,
    pub hvc60: Option<Range>,
    pub area: Option<Range>,
    pub max_results: Option<usize>,
}

impl SuggestQuery {
    pub fn matches(&self, r: &OptimalRecord) -> bool {
        let close = |want: Option<f64>, have: f64| want.map_or(true, |w| (w - have).abs() <= 1e-9);
        let a = &r.alternative;
        let p = &r.predicted;
        self.family.map_or(true, |f| f == r.family)
            && self.win_side.map_or(true, |o| o == a.room.win_side)
            && close(self.width_x, a.room.width_x)
            && close(self.length_y, a.room.length_y)
            && close(self.wwr, a.opening.wwr)
            && self.sda.map_or(true, |rg| rg.contains(p.sda))
            && self.ase.map_or(true, |rg| rg.contains(p.ase))
            && self.hvc60.map_or(true, |rg| rg.contains(p.hvc60))
            && self.area.map_or(true, |rg| rg.contains(p.area))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub total_matches: usize,
    pub records: Vec<OptimalRecord>,
    /// Why nothing was returned, when the database itself is empty.
    pub reason: Option<String>,
}

/// Conjunctive filter over the archive, best sDA first, then smallest area.
pub fn suggest(db: &ParetoArchive, query: &SuggestQuery, default_max: usize) -> SuggestResponse {
    if db.is_empty() {
        return SuggestResponse { total_matches: 0, records: Vec::new(), reason: Some("optimal database is empty".into()) };
    }
    let mut hits: Vec<&OptimalRecord> = db.records.iter().filter(|r| query.matches(r)).collect();
    hits.sort_by(|a, b| {
        b.predicted
            .sda
            .total_cmp(&a.predicted.sda)
            .then(a.predicted.area.total_cmp(&b.predicted.area))
            .then(a.family.cmp(&b.family))
            .then(a.alternative.id.cmp(&b.alternative.id))
    });
    let total_matches = hits.len();
    hits.truncate(query.max_results.unwrap_or(default_max));
    SuggestResponse { total_matches, records: hits.into_iter().cloned().collect(), reason: None }
}

#[derive(Default)]
struct Loaded {
    models: HashMap<(Family, Output), Arc<SurrogateModel>>,
    reports: HashMap<Family, Arc<ShapReport>>,
    db: Option<Arc<ParetoArchive>>,
}

impl Loaded {
    fn fork(&self) -> Loaded {
        Loaded { models: self.models.clone(), reports: self.reports.clone(), db: self.db.clone() }
    }
}

/// Read-mostly artifact cache. Each artifact is loaded from disk on first
/// use; `reload` swaps in an empty cache so later requests see fresh files.
pub struct Predictor {
    artifacts: Artifacts,
    leed: LeedTable,
    default_max_results: usize,
    state: RwLock<Arc<Loaded>>,
}

impl Predictor {
    pub fn new(config: &ServiceConfig) -> Self {
        Predictor {
            artifacts: Artifacts::new(&config.artifacts),
            leed: config.leed.clone(),
            default_max_results: config.default_max_results,
            state: RwLock::new(Arc::new(Loaded::default())),
        }
    }

    pub fn artifacts(&self) -> &Artifacts {
        &self.artifacts
    }

    fn snapshot(&self) -> Arc<Loaded> {
        self.state.read().expect("state lock").clone()
    }

    fn publish(&self, edit: impl FnOnce(&mut Loaded)) {
        let mut guard = self.state.write().expect("state lock");
        let mut next = guard.fork();
        edit(&mut next);
        *guard = Arc::new(next);
    }

    pub fn reload(&self) {
        *self.state.write().expect("state lock") = Arc::new(Loaded::default());
    }

    /// Installs an in-memory model, replacing any cached one.
    pub fn insert_model(&self, model: SurrogateModel) {
        let key = (model.family(), model.output());
        self.publish(|s| {
            s.models.insert(key, Arc::new(model));
        });
    }

    pub fn model(&self, family: Family, output: Output) -> Result<Arc<SurrogateModel>> {
        if let Some(m) = self.snapshot().models.get(&(family, output)) {
            return Ok(m.clone());
        }
        let m = Arc::new(SurrogateModel::load(&self.artifacts.model(family, output))?);
        if m.family() != family || m.output() != output {
            return Err(Error::Format(format!("artifact for {family}/{output} holds {}/{}", m.family(), m.output())));
        }
        self.publish(|s| {
            s.models.insert((family, output), m.clone());
        });
        Ok(m)
    }

    /// The family's sensitivity report, or `None` if none was produced.
    pub fn report(&self, family: Family) -> Result<Option<Arc<ShapReport>>> {
        if let Some(r) = self.snapshot().reports.get(&family) {
            return Ok(Some(r.clone()));
        }
        match ShapReport::load(&self.artifacts.report(family)) {
            Ok(r) => {
                let r = Arc::new(r);
                self.publish(|s| {
                    s.reports.insert(family, r.clone());
                });
                Ok(Some(r))
            }
            Err(Error::MissingArtifact(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn optimal_db(&self) -> Result<Arc<ParetoArchive>> {
        if let Some(db) = &self.snapshot().db {
            return Ok(db.clone());
        }
        let db = Arc::new(ParetoArchive::load_json(&self.artifacts.optimal_json())?);
        self.publish(|s| s.db = Some(db.clone()));
        Ok(db)
    }

    pub fn schema(&self, family: Family) -> Result<SchemaResponse> {
        let report = self.report(family)?;
        let parameters = FeatureSchema::for_family(family)
            .parameters()
            .into_iter()
            .map(|spec| ParameterInfo { starred: report.as_ref().map_or(false, |r| r.is_starred(&spec.name)), spec })
            .collect();
        Ok(SchemaResponse { family, parameters, sensitivity_available: report.is_some() })
    }

    pub fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        let started = Instant::now();
        let family: Family = request.family.parse()?;
        let schema = FeatureSchema::for_family(family);
        let (x, off_grid) = features_from_params(&schema, &request.params)?;
        let mut values = [0.0; 6];
        let mut model_hashes = BTreeMap::new();
        for out in Output::ALL {
            let m = self.model(family, out)?;
            values[out.index()] = m.predict(&x);
            model_hashes.insert(out.name().to_string(), m.content_hash.clone());
        }
        let metrics = MetricVector::from_array(values);
        let leed = leed_score(metrics.sda.clamp(0.0, 100.0), metrics.ase.clamp(0.0, 100.0), &self.leed)?;
        let report = self.report(family)?;
        let stars = schema
            .parameters()
            .iter()
            .map(|p| (p.name.clone(), report.as_ref().map_or(false, |r| r.is_starred(&p.name))))
            .collect();
        Ok(PredictResponse {
            family,
            metrics,
            leed,
            stars,
            off_grid,
            model_hashes,
            report_hash: report.map(|r| r.content_hash()),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn suggest(&self, query: &SuggestQuery) -> Result<SuggestResponse> {
        Ok(suggest(self.optimal_db()?.as_ref(), query, self.default_max_results))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::alternative;
    use crate::moo::{EvolveConfig, Objectives};

    fn pts(sda: f64, ase: f64) -> u8 {
        leed_score(sda, ase, &LeedTable::default()).unwrap().points
    }

    #[test]
    fn leed_table_cases() {
        assert_eq!(pts(97.0, 34.0), 0);
        assert_eq!(pts(39.0, 5.0), 0);
        assert_eq!(pts(76.0, 9.0), 3);
        assert_eq!(pts(56.0, 10.0), 2);
        assert_eq!(pts(40.0, 0.0), 1);
        assert!(leed_score(101.0, 0.0, &LeedTable::default()).is_err());
        assert!(leed_score(50.0, -1.0, &LeedTable::default()).is_err());
        let s = leed_score(97.0, 34.0, &LeedTable::default()).unwrap();
        assert!(s.sda_threshold_met && !s.ase_gate_met);
    }

    #[test]
    fn points_imply_ase_gate() {
        for sda in (0..=100).step_by(3) {
            for ase in (0..=100).step_by(7) {
                let s = leed_score(sda as f64, ase as f64, &LeedTable::default()).unwrap();
                assert!(s.points == 0 || ase <= 10);
            }
        }
    }

    #[test]
    fn env_overrides_apply() {
        let mut c = ServiceConfig::default();
        c.apply_env(|k| match k {
            ENV_PORT => Some("9123".into()),
            ENV_ARTIFACTS => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((c.port, c.artifacts.as_path()), (9123, Path::new("/tmp/x")));
        assert!(c.apply_env(|_| Some("nope".into())).is_err());
        let parsed: ServiceConfig = serde_json::from_str(r#"{"port": 1}"#).unwrap();
        assert_eq!(parsed.leed, LeedTable::default());
    }

    #[test]
    fn params_round_trip_to_features() {
        for family in Family::ALL {
            for id in [0, family.count() as u32 / 3, family.count() as u32 - 1] {
                let alt = alternative(family, id).unwrap();
                let schema = FeatureSchema::for_family(family);
                let (x, off) = features_from_params(&schema, &params_of(&alt)).unwrap();
                assert_eq!(x, crate::design_space::encode(&alt));
                assert!(!off);
            }
        }
    }

    #[test]
    fn off_grid_and_bad_params() {
        let alt = alternative(Family::Overhang, 5).unwrap();
        let schema = FeatureSchema::for_family(Family::Overhang);
        let mut p = params_of(&alt);
        p.insert("sh_depth".into(), ParamValue::Number(0.7));
        assert!(features_from_params(&schema, &p).unwrap().1);
        p.insert("bogus".into(), ParamValue::Number(1.0));
        assert!(features_from_params(&schema, &p).is_err());
        let mut p = params_of(&alt);
        p.remove("sh_tilt");
        assert!(features_from_params(&schema, &p).is_err());
        let mut p = params_of(&alt);
        p.insert("win_side".into(), ParamValue::Label("up".into()));
        assert!(features_from_params(&schema, &p).is_err());
    }

    #[test]
    fn fixed_parameters_may_be_omitted() {
        let alt = alternative(Family::VerticalPanel, 7).unwrap();
        let schema = FeatureSchema::for_family(Family::VerticalPanel);
        let mut p = params_of(&alt);
        for k in ["wwr", "win_sill", "win_height", "win_num"] {
            p.remove(k);
        }
        assert_eq!(features_from_params(&schema, &p).unwrap().0, crate::design_space::encode(&alt));
    }

    fn record(family: Family, id: u32, sda: f64, area: f64) -> OptimalRecord {
        let alt = alternative(family, id).unwrap();
        OptimalRecord {
            family,
            orientation: alt.room.win_side,
            seed: 0,
            alternative: alt,
            predicted: Objectives { sda, ase: 5.0, hvc60: 3.0, area },
        }
    }

    fn archive(records: Vec<OptimalRecord>) -> ParetoArchive {
        ParetoArchive { config: EvolveConfig::smoke(0), slices: Vec::new(), records, model_hashes: Vec::new() }
    }

    #[test]
    fn suggest_orders_and_truncates() {
        let db = archive(vec![
            record(Family::Overhang, 1, 50.0, 2.0),
            record(Family::Overhang, 2, 60.0, 3.0),
            record(Family::Louvers, 3, 60.0, 1.0),
        ]);
        let r = suggest(&db, &SuggestQuery::default(), 10);
        let ids: Vec<u32> = r.records.iter().map(|r| r.alternative.id).collect();
        assert_eq!(ids, vec![3, 2, 1]);
        let q = SuggestQuery { max_results: Some(2), ..Default::default() };
        assert_eq!(suggest(&db, &q, 10).records.len(), 2);
        assert_eq!(suggest(&db, &q, 10).total_matches, 3);
        let empty = suggest(&archive(Vec::new()), &q, 10);
        assert!(empty.records.is_empty() && empty.reason.is_some());
    }
}
