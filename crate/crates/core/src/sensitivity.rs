//! Shapley attributions of surrogate predictions and the per-family
//! importance report behind the UI's star labels.
//!
//! The value of a coalition S is the interventional expectation
//! `v(S) = mean_b f(x_S, b_rest)` over a background sample.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design_space::Family;
use crate::error::{Error, Result};
use crate::sim::Output;
use crate::surrogate::SurrogateModel;

pub const MAX_EXACT_FEATURES: usize = 15;
/// Outputs that enter the combined ranking.
pub const REPORT_OUTPUTS: [Output; 3] = [Output::Sda, Output::Ase, Output::Hvc60];

fn check_inputs(x: &[f64], background: &[Vec<f64>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::domain("empty background sample"));
    }
    if background.iter().any(|b| b.len() != x.len()) {
        return Err(Error::domain("background rows and instance differ in width"));
    }
    Ok(())
}

/// Exact Shapley values by enumerating all feature subsets.
pub fn shap_exact<F>(model: &F, x: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_inputs(x, background)?;
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::domain(format!(
            "{d} features exceed the exact limit of {MAX_EXACT_FEATURES}; use the sampling estimator (shap_mc)"
        )));
    }
    let value: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![0.0; d];
            let mut sum = 0.0;
            for b in background {
                for j in 0..d {
                    z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                }
                sum += model(&z);
            }
            sum / background.len() as f64
        })
        .collect();
    // weight of a coalition of size s not containing j: s! (d-s-1)! / d!
    let weights: Vec<f64> = (0..d)
        .map(|s| {
            let mut binom = 1.0;
            for k in 0..s {
                binom = binom * (d - 1 - k) as f64 / (k + 1) as f64;
            }
            1.0 / (d as f64 * binom)
        })
        .collect();
    Ok((0..d)
        .map(|j| {
            let bit = 1usize << j;
            (0..1usize << d)
                .filter(|m| m & bit == 0)
                .map(|m| weights[m.count_ones() as usize] * (value[m | bit] - value[m]))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub phi: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_permutations: usize,
}

/// Permutation-sampling estimate. Each sample draws a feature order and a
/// background row, then switches features from the background row to the
/// instance one at a time; the step change is that feature's contribution.
pub fn shap_mc<F>(model: &F, x: &[f64], background: &[Vec<f64>], n_permutations: usize, seed: u64) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    check_inputs(x, background)?;
    if n_permutations == 0 {
        return Err(Error::domain("n_permutations must be at least 1"));
    }
    let d = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        let mut z = background[rng.gen_range(0..background.len())].clone();
        let mut prev = model(&z);
        for &j in &order {
            if z[j] == x[j] {
                continue;
            }
            z[j] = x[j];
            let cur = model(&z);
            let delta = cur - prev;
            sum[j] += delta;
            sum_sq[j] += delta * delta;
            prev = cur;
        }
    }
    let n = n_permutations as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = if n_permutations < 2 {
        vec![f64::INFINITY; d]
    } else {
        phi.iter()
            .zip(&sum_sq)
            .map(|(m, sq)| ((sq - n * m * m).max(0.0) / (n - 1.0) / n).sqrt())
            .collect()
    };
    Ok(McEstimate { phi, std_err, n_permutations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub instances: usize,
    pub background: usize,
    pub permutations: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { instances: 200, background: 256, permutations: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub name: String,
    /// Mean |φ| per output, in `REPORT_OUTPUTS` order.
    pub mean_abs: Vec<f64>,
    /// `mean_abs` divided by its output's total over all features.
    pub normalized: Vec<f64>,
    pub combined: f64,
    pub starred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub family: Family,
    pub seed: u64,
    pub outputs: Vec<Output>,
    pub options: ReportOptions,
    pub instances_used: usize,
    /// Set when the dataset had fewer valid rows than requested instances.
    pub few_rows: bool,
    /// Features in descending combined score.
    pub features: Vec<FeatureScore>,
    /// Parameters fixed to one level within the family, hence not ranked.
    pub excluded: Vec<String>,
    pub dataset_hash: String,
    pub model_hashes: Vec<String>,
}

impl ShapReport {
    pub fn ranking(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn starred(&self) -> Vec<&str> {
        self.features.iter().filter(|f| f.starred).map(|f| f.name.as_str()).collect()
    }

    pub fn is_starred(&self, name: &str) -> bool {
        self.features.iter().any(|f| f.starred && f.name == name)
    }

    /// SHA-256 of the report's JSON form.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("report serializes")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        match fs::read(path) {
            Ok(b) => Ok(serde_json::from_slice(&b)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.into())),
            Err(e) => Err(e.into()),
        }
    }
}

/// `<root>/<family>.shap.json`
pub fn report_path(root: &Path, family: Family) -> PathBuf {
    root.join(format!("{}.shap.json", family.name()))
}

/// Attributes `options.instances` seeded valid alternatives for each of sDA,
/// ASE and HVC-60, folds one-hot columns into their parameter, normalizes each
/// output to sum 1 and stars features scoring at least half the top score.
pub fn build_report(
    family: Family,
    models: &[&SurrogateModel],
    dataset: &Dataset,
    seed: u64,
    options: ReportOptions,
) -> Result<ShapReport> {
    if dataset.family != family {
        return Err(Error::domain(format!("dataset is for {}, not {family}", dataset.family)));
    }
    let mut ordered = Vec::with_capacity(REPORT_OUTPUTS.len());
    for out in REPORT_OUTPUTS {
        let m = models
            .iter()
            .find(|m| m.output() == out && m.family() == family)
            .ok_or_else(|| Error::domain(format!("no {family} model for {out}")))?;
        ordered.push(*m);
    }
    let scaler = &ordered[0].body.scaler;
    if ordered.iter().any(|m| &m.body.scaler != scaler) {
        return Err(Error::domain("report models were trained on different partitions"));
    }
    if options.instances == 0 || options.background == 0 || options.permutations == 0 {
        return Err(Error::domain("report options must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = dataset.partitions(&ordered[0].body.split)?;
    let mut background: Vec<Vec<f64>> = parts.train.features.iter().map(|f| scaler.apply(f)).collect();
    if background.len() > options.background {
        let mut picked = (0..background.len()).choose_multiple(&mut rng, options.background);
        picked.sort_unstable();
        background = picked.into_iter().map(|i| background[i].clone()).collect();
    }
    if background.is_empty() {
        return Err(Error::domain(format!("{family} has no training rows for a background sample")));
    }
    let valid: Vec<&Vec<f64>> = dataset.rows.iter().filter(|r| r.valid).map(|r| &r.features).collect();
    let few_rows = valid.len() < options.instances;
    let mut picked = (0..valid.len()).choose_multiple(&mut rng, options.instances.min(valid.len()));
    picked.sort_unstable();
    let instances: Vec<Vec<f64>> = picked.iter().map(|&i| scaler.apply(valid[i])).collect();

    let params = dataset.schema.parameters();
    let (free, fixed): (Vec<_>, Vec<_>) = params.into_iter().partition(|p| p.is_free());

    // mean |φ| per output per free parameter
    let mut mean_abs = vec![vec![0.0; free.len()]; REPORT_OUTPUTS.len()];
    for (o, model) in ordered.iter().enumerate() {
        let f = |z: &[f64]| model.body.model.predict(z);
        let per_instance: Vec<Vec<f64>> = instances
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let s = seed ^ ((o as u64) << 56) ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let est = shap_mc(&f, x, &background, options.permutations, s)?;
                Ok(free.iter().map(|p| p.columns.iter().map(|&c| est.phi[c].abs()).sum()).collect())
            })
            .collect::<Result<_>>()?;
        for (k, slot) in mean_abs[o].iter_mut().enumerate() {
            let mut col: Vec<f64> = per_instance.iter().map(|v| v[k]).collect();
            col.sort_by(f64::total_cmp);
            *slot = col.iter().sum::<f64>() / col.len().max(1) as f64;
        }
    }
    let normalized: Vec<Vec<f64>> = mean_abs
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect()
        })
        .collect();
    let mut features: Vec<FeatureScore> = free
        .iter()
        .enumerate()
        .map(|(k, p)| FeatureScore {
            name: p.name.clone(),
            mean_abs: mean_abs.iter().map(|r| r[k]).collect(),
            normalized: normalized.iter().map(|r| r[k]).collect(),
            combined: normalized.iter().map(|r| r[k]).sum(),
            starred: false,
        })
        .collect();
    features.sort_by(|a, b| b.combined.total_cmp(&a.combined));
    let top = features.first().map_or(0.0, |f| f.combined);
    for f in &mut features {
        f.starred = top > 0.0 && f.combined >= 0.5 * top;
    }
    Ok(ShapReport {
        family,
        seed,
        outputs: REPORT_OUTPUTS.to_vec(),
        options,
        instances_used: instances.len(),
        few_rows,
        features,
        excluded: fixed.into_iter().map(|p| p.name).collect(),
        dataset_hash: dataset.content_hash(),
        model_hashes: ordered.iter().map(|m| m.content_hash.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy(z: &[f64]) -> f64 {
        // interactions on purpose; feature 4 is ignored
        2.0 * z[0] + z[1] * z[2] - 0.5 * z[3] * z[3] + z[0] * z[1] * z[3]
    }

    fn toy_background() -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..24).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn additive_model_has_closed_form() {
        let g1 = |v: f64| v * v;
        let g2 = |v: f64| 3.0 * v.sin();
        let f = |z: &[f64]| g1(z[0]) + g2(z[1]);
        let bg = vec![vec![0.5, -1.0], vec![2.0, 0.3], vec![-1.0, 1.2]];
        let x = [1.5, 0.7];
        let phi = shap_exact(&f, &x, &bg).unwrap();
        let mean = |g: &dyn Fn(f64) -> f64, j: usize| bg.iter().map(|b| g(b[j])).sum::<f64>() / bg.len() as f64;
        assert_abs_diff_eq!(phi[0], g1(x[0]) - mean(&g1, 0), epsilon = 1e-12);
        assert_abs_diff_eq!(phi[1], g2(x[1]) - mean(&g2, 1), epsilon = 1e-12);
    }

    #[test]
    fn dummy_feature_gets_zero() {
        let bg = toy_background();
        let x = [0.3, -0.6, 0.9, 0.1, 0.7];
        assert_eq!(shap_exact(&toy, &x, &bg).unwrap()[4], 0.0);
        let mc = shap_mc(&toy, &x, &bg, 50, 1).unwrap();
        assert_eq!(mc.phi[4], 0.0);
        assert!(mc.phi[4].abs() <= 3.0 * mc.std_err[4]);
    }

    #[test]
    fn symmetric_features_share_credit() {
        let f = |z: &[f64]| z[0] * z[1] + z[2];
        let bg = vec![vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let phi = shap_exact(&f, &[2.0, 2.0, 0.5], &bg).unwrap();
        assert_abs_diff_eq!(phi[0], phi[1], epsilon = 1e-12);
    }

    #[test]
    fn too_many_features_points_to_sampling() {
        let f = |z: &[f64]| z.iter().sum::<f64>();
        let x = vec![0.0; 16];
        let err = shap_exact(&f, &x, &[x.clone()]).unwrap_err();
        assert!(err.to_string().contains("shap_mc"));
    }

    #[test]
    fn sampling_agrees_with_enumeration() {
        let bg = toy_background();
        let x = [0.8, -0.4, 0.6, -0.9, 0.2];
        let exact = shap_exact(&toy, &x, &bg).unwrap();
        let mc = shap_mc(&toy, &x, &bg, 4000, 17).unwrap();
        for j in 0..5 {
            let tol = 3.0 * mc.std_err[j];
            assert!((mc.phi[j] - exact[j]).abs() <= tol, "feature {j}: {} vs {} (3 SE = {tol})", mc.phi[j], exact[j]);
        }
        assert_eq!(mc, shap_mc(&toy, &x, &bg, 4000, 17).unwrap());
    }

    #[test]
    fn sampling_error_shrinks_with_more_permutations() {
        let bg = toy_background();
        let x = [0.8, -0.4, 0.6, -0.9, 0.2];
        let exact = shap_exact(&toy, &x, &bg).unwrap();
        let err = |n| {
            (0..20u64)
                .map(|s| {
                    let mc = shap_mc(&toy, &x, &bg, n, s).unwrap();
                    mc.phi.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
                })
                .sum::<f64>()
        };
        assert!(err(400) < err(25));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn efficiency_holds(x in prop::collection::vec(-2.0f64..2.0, 5)) {
            let bg = toy_background();
            let phi = shap_exact(&toy, &x, &bg).unwrap();
            let base = bg.iter().map(|b| toy(b)).sum::<f64>() / bg.len() as f64;
            prop_assert!((phi.iter().sum::<f64>() - (toy(&x) - base)).abs() < 1e-9);
        }

        #[test]
        fn efficiency_holds_at_ten_features(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |z: &[f64]| z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().tanh() + z[0] * z[9];
            let bg: Vec<Vec<f64>> = (0..4).map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi = shap_exact(&f, &x, &bg).unwrap();
            let base = bg.iter().map(|b| f(b)).sum::<f64>() / bg.len() as f64;
            prop_assert!((phi.iter().sum::<f64>() - (f(&x) - base)).abs() < 1e-9);
        }
    }
}
