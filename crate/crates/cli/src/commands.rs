//! Pipeline steps behind the CLI subcommands. Each returns a JSON summary.

use serde_json::{json, Value};
use shadekit_core::dataset::{generate_to_file, Dataset, GenerateOptions};
use shadekit_core::moo::{build_optimal_db, EvolveConfig, ObjectiveModels};
use shadekit_core::sensitivity::{build_report, ReportOptions, REPORT_OUTPUTS};
use shadekit_core::service::{Artifacts, Seeds};
use shadekit_core::surrogate::{self, Algorithm, Hyperparams, SurrogateModel};
use shadekit_core::{Error, Family, Fidelity, Output, Result, SplitSpec};

pub fn generate(art: &Artifacts, family: Family, fidelity: Fidelity, parallelism: usize) -> Result<Value> {
    let path = art.dataset(family);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let ds = generate_to_file(family, &GenerateOptions::new(fidelity, parallelism), &path)?;
    Ok(json!({
        "family": family,
        "fidelity": fidelity.name(),
        "rows": ds.rows.len(),
        "valid": ds.valid_count(),
        "path": path,
        "sha256": ds.content_hash(),
    }))
}

pub fn load_dataset(art: &Artifacts, family: Family) -> Result<Dataset> {
    let path = art.dataset(family);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    Dataset::read_csv(&path)
}

fn model_summary(m: &SurrogateModel, path: &std::path::Path) -> Value {
    let r = &m.report;
    json!({
        "family": m.family(),
        "output": m.output(),
        "hyperparams": r.hyperparams,
        "test": r.test,
        "validation": r.validation,
        "val_test_gap": r.val_test_gap,
        "overfit_flag": r.overfit_flag,
        "train_seconds": r.train_seconds,
        "tune_seconds": r.tune_seconds,
        "path": path,
    })
}

/// Grid-searches one model per output and saves each.
pub fn tune(
    art: &Artifacts,
    family: Family,
    outputs: &[Output],
    algorithm: Algorithm,
    seeds: &Seeds,
) -> Result<Vec<Value>> {
    let ds = load_dataset(art, family)?;
    let grid = algorithm.default_grid();
    outputs
        .iter()
        .map(|&o| {
            let m = surrogate::tune(&ds, o, &grid, &SplitSpec::new(seeds.split), seeds.model)?;
            let path = art.model(family, o);
            m.save(&path)?;
            Ok(model_summary(&m, &path))
        })
        .collect()
}

/// Trains with fixed hyperparameters and saves each model.
pub fn train(art: &Artifacts, family: Family, outputs: &[Output], params: Hyperparams, seeds: &Seeds) -> Result<Vec<Value>> {
    let ds = load_dataset(art, family)?;
    outputs
        .iter()
        .map(|&o| {
            let m = surrogate::train(&ds, o, params, &SplitSpec::new(seeds.split), seeds.model)?;
            let path = art.model(family, o);
            m.save(&path)?;
            Ok(model_summary(&m, &path))
        })
        .collect()
}

pub fn load_models(art: &Artifacts, family: Family, outputs: &[Output]) -> Result<Vec<SurrogateModel>> {
    outputs.iter().map(|&o| SurrogateModel::load(&art.model(family, o))).collect()
}

pub fn shap(art: &Artifacts, family: Family, seed: u64, options: ReportOptions) -> Result<Value> {
    let ds = load_dataset(art, family)?;
    let models = load_models(art, family, &REPORT_OUTPUTS)?;
    let refs: Vec<&SurrogateModel> = models.iter().collect();
    let report = build_report(family, &refs, &ds, seed, options)?;
    let path = art.report(family);
    report.save(&path)?;
    Ok(json!({
        "family": family,
        "ranking": report.ranking(),
        "starred": report.starred(),
        "excluded": report.excluded,
        "few_rows": report.few_rows,
        "path": path,
    }))
}

pub fn optimize(art: &Artifacts, families: &[Family], cfg: EvolveConfig) -> Result<Value> {
    let mut models = Vec::new();
    for &f in families {
        models.extend(load_models(art, f, &[Output::Sda, Output::Ase, Output::Hvc60])?);
    }
    let sets = families
        .iter()
        .map(|&f| Ok((f, ObjectiveModels::select(f, &models)?)))
        .collect::<Result<Vec<_>>>()?;
    let db = build_optimal_db(&sets, cfg.pop_size, cfg.generations, cfg.seed)?;
    db.save_json(&art.optimal_json())?;
    db.write_csv(&art.optimal_csv())?;
    Ok(json!({
        "records": db.len(),
        "dominated_pairs": db.dominated_pairs(),
        "slices": db.slices,
        "json": art.optimal_json(),
        "csv": art.optimal_csv(),
    }))
}
