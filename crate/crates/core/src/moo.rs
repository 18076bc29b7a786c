//! NSGA-II over categorical genomes and the optimal-designs database.
//!
//! All objectives are minimized. A shading genome holds one level index per
//! enumeration axis except the window orientation, which is fixed per run.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_space::{self, DesignAlternative, Family, GridPoint, Orientation};
use crate::error::{Error, Result};
use crate::geometry::shading_area;
use crate::sim::Output;
use crate::surrogate::{splitmix, SurrogateModel};

pub type Genome = Vec<u16>;

/// A search space of categorical genes with minimized objectives.
pub trait Problem: Sync {
    fn cardinalities(&self) -> &[usize];
    fn evaluate(&self, genome: &[u16]) -> Vec<f64>;
    fn is_valid(&self, _genome: &[u16]) -> bool {
        true
    }
}

/// `a` is no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strictly |= x < y;
    }
    strictly
}

/// Deb's fast non-dominated sort. Fronts hold row indices in ascending order.
pub fn non_dominated_sort(rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = rows.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&rows[i], &rows[j]) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(&rows[j], &rows[i]) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (indices into `rows`).
/// Extremes of every non-constant objective get +∞; a constant objective
/// contributes nothing.
pub fn crowding_distance(rows: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let n_obj = rows[front[0]].len();
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..n_obj {
        order.sort_by(|&a, &b| rows[front[a]][m].total_cmp(&rows[front[b]][m]).then(a.cmp(&b)));
        let lo = rows[front[order[0]]][m];
        let hi = rows[front[order[n - 1]]][m];
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        for k in 1..n.saturating_sub(1) {
            let gap = rows[front[order[k + 1]]][m] - rows[front[order[k - 1]]][m];
            dist[order[k]] += gap / range;
        }
    }
    dist
}

/// Area dominated by a 2-objective point set up to `reference`.
pub fn hypervolume_2d(points: &[Vec<f64>], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> =
        points.iter().filter(|p| p[0] < reference[0] && p[1] < reference[1]).map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for p in pts {
        if p[1] < best_y {
            area += (reference[0] - p[0]) * (best_y - p[1]);
            best_y = p[1];
        }
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub seed: u64,
    pub crossover_prob: f64,
    /// Per-gene reset probability; `None` means 1 / genome length.
    pub mutation_prob: Option<f64>,
}

impl EvolveConfig {
    pub fn new(pop_size: usize, generations: usize, seed: u64) -> Self {
        EvolveConfig { pop_size, generations, seed, crossover_prob: 0.9, mutation_prob: None }
    }

    /// Population 500 for 20 generations.
    pub fn standard(seed: u64) -> Self {
        Self::new(500, 20, seed)
    }

    /// Population 50 for 5 generations.
    pub fn smoke(seed: u64) -> Self {
        Self::new(50, 5, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

struct Evolver<'a, P: Problem> {
    problem: &'a P,
    cfg: EvolveConfig,
    rng: ChaCha8Rng,
    cache: HashMap<Genome, Vec<f64>>,
    mutation_prob: f64,
}

const MAX_DRAWS: usize = 1000;

impl<P: Problem> Evolver<'_, P> {
    fn random_genome(&mut self) -> Genome {
        self.problem.cardinalities().iter().map(|&c| self.rng.gen_range(0..c) as u16).collect()
    }

    fn random_valid(&mut self) -> Option<Genome> {
        for _ in 0..MAX_DRAWS {
            let g = self.random_genome();
            if self.problem.is_valid(&g) {
                return Some(g);
            }
        }
        None
    }

    /// Re-draws single genes until the genome is valid, falling back to a
    /// fresh random genome.
    fn repair(&mut self, mut g: Genome) -> Option<Genome> {
        let cards = self.problem.cardinalities();
        for _ in 0..20 {
            if self.problem.is_valid(&g) {
                return Some(g);
            }
            let k = self.rng.gen_range(0..g.len());
            g[k] = self.rng.gen_range(0..cards[k]) as u16;
        }
        if self.problem.is_valid(&g) {
            Some(g)
        } else {
            self.random_valid()
        }
    }

    fn evaluate(&mut self, genomes: &[Genome]) -> Vec<Vec<f64>> {
        let fresh: Vec<&Genome> = {
            let mut seen = HashSet::new();
            genomes.iter().filter(|g| !self.cache.contains_key(*g) && seen.insert(*g)).collect()
        };
        let problem = self.problem;
        let values: Vec<Vec<f64>> = fresh.par_iter().map(|g| problem.evaluate(g)).collect();
        for (g, v) in fresh.into_iter().zip(values) {
            self.cache.insert(g.clone(), v);
        }
        genomes.iter().map(|g| self.cache[g].clone()).collect()
    }

    fn tournament(&mut self, pop: &[Individual]) -> usize {
        let a = self.rng.gen_range(0..pop.len());
        let b = self.rng.gen_range(0..pop.len());
        let better = |x: &Individual, y: &Individual| x.rank < y.rank || (x.rank == y.rank && x.crowding > y.crowding);
        if better(&pop[b], &pop[a]) {
            b
        } else {
            a
        }
    }

    fn offspring(&mut self, pop: &[Individual]) -> Vec<Genome> {
        let cards = self.problem.cardinalities().to_vec();
        let mut kids = Vec::with_capacity(self.cfg.pop_size);
        while kids.len() < self.cfg.pop_size {
            let p1 = pop[self.tournament(pop)].genome.clone();
            let p2 = pop[self.tournament(pop)].genome.clone();
            let (mut c1, mut c2) = (p1, p2);
            if self.rng.gen::<f64>() < self.cfg.crossover_prob {
                for k in 0..c1.len() {
                    if self.rng.gen::<bool>() {
                        std::mem::swap(&mut c1[k], &mut c2[k]);
                    }
                }
            }
            for child in [c1, c2] {
                let mut child = child;
                for (k, gene) in child.iter_mut().enumerate() {
                    if self.rng.gen::<f64>() < self.mutation_prob {
                        *gene = self.rng.gen_range(0..cards[k]) as u16;
                    }
                }
                if let Some(child) = self.repair(child) {
                    if kids.len() < self.cfg.pop_size {
                        kids.push(child);
                    }
                }
            }
        }
        kids
    }
}

/// Sorts `genomes` into ranked, crowded individuals and keeps the best `keep`.
fn survive(genomes: Vec<Genome>, objectives: Vec<Vec<f64>>, keep: usize) -> Vec<Individual> {
    let fronts = non_dominated_sort(&objectives);
    let mut next = Vec::with_capacity(keep);
    for (rank, front) in fronts.iter().enumerate() {
        if next.len() >= keep {
            break;
        }
        let crowd = crowding_distance(&objectives, front);
        let mut members: Vec<(usize, f64)> = front.iter().copied().zip(crowd).collect();
        if next.len() + members.len() > keep {
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            members.truncate(keep - next.len());
        }
        for (i, crowding) in members {
            next.push(Individual { genome: genomes[i].clone(), objectives: objectives[i].clone(), rank, crowding });
        }
    }
    next
}

/// Runs NSGA-II and returns the final population; `observe` sees the
/// population after initialization (generation 0) and after every generation.
pub fn evolve_with<P, F>(problem: &P, cfg: EvolveConfig, mut observe: F) -> Result<Vec<Individual>>
where
    P: Problem,
    F: FnMut(usize, &[Individual]),
{
    if cfg.pop_size < 2 {
        return Err(Error::domain("population size must be at least 2"));
    }
    let cards = problem.cardinalities();
    if cards.is_empty() || cards.iter().any(|&c| c == 0 || c > u16::MAX as usize) {
        return Err(Error::domain("every gene needs between 1 and 65535 levels"));
    }
    let mutation_prob = cfg.mutation_prob.unwrap_or(1.0 / cards.len() as f64);
    let mut ev = Evolver { problem, cfg, rng: ChaCha8Rng::seed_from_u64(cfg.seed), cache: HashMap::new(), mutation_prob };

    let mut seen = HashSet::new();
    let mut init = Vec::with_capacity(cfg.pop_size);
    for _ in 0..cfg.pop_size * 20 {
        if init.len() == cfg.pop_size {
            break;
        }
        match ev.random_valid() {
            Some(g) if seen.insert(g.clone()) => init.push(g),
            Some(_) => {}
            None => break,
        }
    }
    if init.is_empty() {
        return Err(Error::domain("no valid individual could be sampled"));
    }
    let objs = ev.evaluate(&init);
    let mut pop = survive(init, objs, cfg.pop_size);
    observe(0, &pop);

    for generation in 1..=cfg.generations {
        let kids = ev.offspring(&pop);
        let mut seen = HashSet::new();
        let union: Vec<Genome> =
            pop.iter().map(|i| i.genome.clone()).chain(kids).filter(|g| seen.insert(g.clone())).collect();
        let objs = ev.evaluate(&union);
        pop = survive(union, objs, cfg.pop_size);
        observe(generation, &pop);
    }
    Ok(pop)
}

pub fn evolve<P: Problem>(problem: &P, cfg: EvolveConfig) -> Result<Vec<Individual>> {
    evolve_with(problem, cfg, |_, _| {})
}

/// Surrogates for the three predicted objectives of one family.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveModels<'a> {
    pub sda: &'a SurrogateModel,
    pub ase: &'a SurrogateModel,
    pub hvc60: &'a SurrogateModel,
}

impl<'a> ObjectiveModels<'a> {
    /// Picks the sDA, ASE and HVC-60 models of `family` out of `models`.
    pub fn select(family: Family, models: &'a [SurrogateModel]) -> Result<Self> {
        let find = |o: Output| {
            models
                .iter()
                .find(|m| m.family() == family && m.output() == o)
                .ok_or_else(|| Error::domain(format!("no {family} model for {o}")))
        };
        Ok(ObjectiveModels { sda: find(Output::Sda)?, ase: find(Output::Ase)?, hvc60: find(Output::Hvc60)? })
    }
}

/// Predicted (sDA, ASE, HVC-60) and exact shading area of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub sda: f64,
    pub ase: f64,
    pub hvc60: f64,
    pub area: f64,
}

impl Objectives {
    pub fn evaluate(alt: &DesignAlternative, models: &ObjectiveModels) -> Self {
        let x = design_space::encode(alt);
        Objectives {
            sda: models.sda.predict(&x),
            ase: models.ase.predict(&x),
            hvc60: models.hvc60.predict(&x),
            area: shading_area(alt),
        }
    }

    /// Minimization form: (−sDA, ASE, −HVC-60, area).
    pub fn minimized(&self) -> Vec<f64> {
        vec![-self.sda, self.ase, -self.hvc60, self.area]
    }
}

/// One family and window orientation as an optimization problem.
pub struct ShadingProblem<'a> {
    pub family: Family,
    pub orientation: Orientation,
    models: ObjectiveModels<'a>,
    cards: Vec<usize>,
}

impl<'a> ShadingProblem<'a> {
    pub fn new(family: Family, orientation: Orientation, models: ObjectiveModels<'a>) -> Result<Self> {
        if [models.sda, models.ase, models.hvc60].iter().any(|m| m.family() != family) {
            return Err(Error::domain(format!("objective models do not belong to {family}")));
        }
        let mut cards = family.axis_sizes();
        cards.remove(1);
        Ok(ShadingProblem { family, orientation, models, cards })
    }

    pub fn alternative(&self, genome: &[u16]) -> DesignAlternative {
        let mut indices: Vec<usize> = genome.iter().map(|&g| g as usize).collect();
        indices.insert(1, self.orientation.index());
        GridPoint { family: self.family, indices }.to_alternative()
    }
}

impl Problem for ShadingProblem<'_> {
    fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    fn evaluate(&self, genome: &[u16]) -> Vec<f64> {
        Objectives::evaluate(&self.alternative(genome), &self.models).minimized()
    }

    fn is_valid(&self, genome: &[u16]) -> bool {
        design_space::is_valid(&self.alternative(genome))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRecord {
    pub family: Family,
    pub orientation: Orientation,
    pub seed: u64,
    pub alternative: DesignAlternative,
    pub predicted: Objectives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub family: Family,
    pub orientation: Orientation,
    pub seed: u64,
    /// Front-0 size before filtering.
    pub candidates: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub config: EvolveConfig,
    pub slices: Vec<SliceSummary>,
    pub records: Vec<OptimalRecord>,
    pub model_hashes: Vec<String>,
}

fn slice_seed(seed: u64, family: Family, orientation: Orientation) -> u64 {
    let f = Family::ALL.iter().position(|&x| x == family).unwrap() as u64;
    splitmix(seed ^ splitmix(f << 8 | orientation.index() as u64))
}

/// Front 0 of a seeded NSGA-II run for one (family, orientation) slice,
/// validity-filtered and free of duplicates.
pub fn evolve_slice(
    family: Family,
    orientation: Orientation,
    models: ObjectiveModels,
    cfg: EvolveConfig,
) -> Result<(Vec<OptimalRecord>, SliceSummary)> {
    let problem = ShadingProblem::new(family, orientation, models)?;
    let pop = evolve(&problem, cfg)?;
    let front: Vec<&Individual> = pop.iter().filter(|i| i.rank == 0).collect();
    let mut seen = HashSet::new();
    let records: Vec<OptimalRecord> = front
        .iter()
        .map(|i| problem.alternative(&i.genome))
        .filter(|alt| design_space::is_valid(alt) && seen.insert(alt.id))
        .map(|alt| OptimalRecord {
            family,
            orientation,
            seed: cfg.seed,
            predicted: Objectives::evaluate(&alt, &models),
            alternative: alt,
        })
        .collect();
    let summary = SliceSummary { family, orientation, seed: cfg.seed, candidates: front.len(), kept: records.len() };
    Ok((records, summary))
}

/// Runs every family in `families` for all four orientations and collects the
/// slices into one archive.
pub fn build_optimal_db(
    families: &[(Family, ObjectiveModels)],
    pop_size: usize,
    generations: usize,
    seed: u64,
) -> Result<ParetoArchive> {
    let config = EvolveConfig::new(pop_size, generations, seed);
    let mut records = Vec::new();
    let mut slices = Vec::new();
    let mut model_hashes = Vec::new();
    let mut seen = HashSet::new();
    for (family, models) in families {
        if *family == Family::NoShading {
            return Err(Error::domain("the optimal database covers shaded families only"));
        }
        for m in [models.sda, models.ase, models.hvc60] {
            model_hashes.push(m.content_hash.clone());
        }
        for orientation in Orientation::ALL {
            let cfg = EvolveConfig { seed: slice_seed(seed, *family, orientation), ..config };
            let (recs, summary) = evolve_slice(*family, orientation, *models, cfg)?;
            records.extend(recs.into_iter().filter(|r| seen.insert((r.family, r.alternative.id))));
            slices.push(summary);
        }
    }
    Ok(ParetoArchive { config, slices, records, model_hashes })
}

/// Union of every family's shading parameter names, in family order.
fn shading_columns() -> Vec<&'static str> {
    let mut names = Vec::new();
    for f in Family::ALL {
        for (n, _) in f.shading_axes() {
            if !names.contains(n) {
                names.push(*n);
            }
        }
    }
    names
}

impl ParetoArchive {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        match fs::read(path) {
            Ok(b) => Ok(serde_json::from_slice(&b)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.into())),
            Err(e) => Err(e.into()),
        }
    }

    /// Flat table: design parameters (blank where a family lacks one),
    /// predicted objectives, family, orientation and seed.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let shading = shading_columns();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "id", "win_side", "sh_mat", "width_x", "length_y", "obs_angle", "wwr", "win_sill", "win_height", "win_num",
            "glass_vt",
        ];
        header.extend(&shading);
        header.extend(["sda", "ase", "hvc60", "area", "family", "orientation", "seed"]);
        w.write_record(&header)?;
        for r in &self.records {
            let a = &r.alternative;
            let mut row = vec![
                a.id.to_string(),
                a.room.win_side.to_string(),
                a.shading.material().map(|m| m.label().to_string()).unwrap_or_default(),
                a.room.width_x.to_string(),
                a.room.length_y.to_string(),
                a.room.obs_angle.to_string(),
                a.opening.wwr.to_string(),
                a.opening.win_sill.to_string(),
                a.opening.win_height.to_string(),
                a.opening.win_num.to_string(),
                a.opening.glass_vt.to_string(),
            ];
            let axes = r.family.shading_axes();
            let values = a.shading.numeric_values();
            for name in &shading {
                row.push(axes.iter().position(|(n, _)| n == name).map(|k| values[k].to_string()).unwrap_or_default());
            }
            let p = &r.predicted;
            row.extend([p.sda, p.ase, p.hvc60, p.area].map(|v| v.to_string()));
            row.extend([r.family.to_string(), r.orientation.to_string(), r.seed.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pairs within one (family, orientation) slice where one record
    /// dominates the other.
    pub fn dominated_pairs(&self) -> usize {
        let mut groups: HashMap<(Family, Orientation), Vec<Vec<f64>>> = HashMap::new();
        for r in &self.records {
            groups.entry((r.family, r.orientation)).or_default().push(r.predicted.minimized());
        }
        groups
            .values()
            .map(|rows| {
                let mut n = 0;
                for i in 0..rows.len() {
                    for j in 0..rows.len() {
                        if i != j && dominates(&rows[i], &rows[j]) {
                            n += 1;
                        }
                    }
                }
                n
            })
            .sum()
    }
}
