//! Synthetic tissue generator with known niche structure.
//!
//! Each condition is a separate tissue section laid out as a jittered grid.
//! The grid is tiled into square patches, each patch is assigned a niche
//! archetype drawn from the condition's archetype mixture, and every cell in
//! a patch draws its cell type from that archetype's type mixture. Counts are
//! Poisson around a profile combining the cell type's markers with the
//! archetype's gene program.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ClusterConfig;
use crate::io::{self, IoError};
use crate::niche::{Categorical, SpatialDataset};
use crate::pipeline::{InputConfig, OutputConfig, PipelineConfig};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid generator config: {0}")]
pub struct InvalidGeneratorConfig(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Grid columns and rows per section.
    pub grid_width: usize,
    pub grid_height: usize,
    /// Uniform displacement of each cell, as a fraction of the grid spacing.
    pub jitter: f64,
    /// Empty columns between adjacent sections.
    pub section_gap: usize,
    /// Side length, in grid cells, of a region sharing one archetype.
    pub patch_size: usize,
    pub n_genes: usize,
    /// Mean total counts per cell.
    pub library_size: f64,
    pub n_supertypes: usize,
    pub subclasses_per_supertype: usize,
    pub types_per_subclass: usize,
    pub n_archetypes: usize,
    /// Cell-type weights per archetype. Generated from the seed when absent.
    pub archetype_type_weights: Option<Vec<Vec<f64>>>,
    /// Archetype weights per condition; one entry per condition.
    pub condition_archetype_weights: Vec<Vec<f64>>,
    /// Fold change of a cell type's marker genes.
    pub marker_strength: f64,
    /// Fold change of an archetype's program genes.
    pub program_strength: f64,
    /// Marker and program genes per cell type and per archetype.
    pub genes_per_program: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_width: 30,
            grid_height: 30,
            jitter: 0.4,
            section_gap: 5,
            patch_size: 3,
            n_genes: 50,
            library_size: 500.0,
            n_supertypes: 3,
            subclasses_per_supertype: 2,
            types_per_subclass: 2,
            n_archetypes: 3,
            archetype_type_weights: None,
            condition_archetype_weights: vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.6, 0.3], vec![0.3, 0.1, 0.6]],
            marker_strength: 4.0,
            program_strength: 2.0,
            genes_per_program: 3,
        }
    }
}

fn check_weights(what: &str, rows: &[Vec<f64>], width: usize) -> Result<(), InvalidGeneratorConfig> {
    for (i, w) in rows.iter().enumerate() {
        if w.len() != width {
            return Err(InvalidGeneratorConfig(format!("{what} row {i} has {} weights, expected {width}", w.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(InvalidGeneratorConfig(format!("{what} row {i} must be nonnegative with a positive sum")));
        }
    }
    Ok(())
}

impl SynthConfig {
    pub fn n_cell_types(&self) -> usize {
        self.n_supertypes * self.subclasses_per_supertype * self.types_per_subclass
    }

    pub fn n_conditions(&self) -> usize {
        self.condition_archetype_weights.len()
    }

    pub fn validate(&self) -> Result<(), InvalidGeneratorConfig> {
        let bad = |m: String| Err(InvalidGeneratorConfig(m));
        if self.grid_width < 2 || self.grid_height < 2 {
            return bad("grid must be at least 2x2".into());
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter must lie in [0, 1)".into());
        }
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        if self.n_genes == 0 {
            return bad("n_genes must be positive".into());
        }
        if !(self.library_size.is_finite() && self.library_size > 0.0) {
            return bad("library_size must be positive".into());
        }
        if self.n_cell_types() == 0 {
            return bad("cell type hierarchy is empty".into());
        }
        if self.n_archetypes == 0 {
            return bad("n_archetypes must be positive".into());
        }
        if self.condition_archetype_weights.is_empty() {
            return bad("at least one condition is required".into());
        }
        check_weights("condition_archetype_weights", &self.condition_archetype_weights, self.n_archetypes)?;
        if let Some(w) = &self.archetype_type_weights {
            if w.len() != self.n_archetypes {
                return bad(format!("archetype_type_weights has {} rows, expected {}", w.len(), self.n_archetypes));
            }
            check_weights("archetype_type_weights", w, self.n_cell_types())?;
        }
        if !(self.marker_strength >= 0.0 && self.program_strength >= 0.0) {
            return bad("strengths must be nonnegative".into());
        }
        Ok(())
    }
}

/// A generated dataset plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTissue {
    pub dataset: SpatialDataset,
    /// Archetype of the patch holding each cell.
    pub archetypes: Vec<usize>,
}

fn sampler(weights: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).expect("weights validated")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthTissue, InvalidGeneratorConfig> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_types = cfg.n_cell_types();
    let q = cfg.n_genes;

    let type_weights = match &cfg.archetype_type_weights {
        Some(w) => w.clone(),
        None => {
            let gamma = Gamma::new(0.5, 1.0).expect("valid shape");
            (0..cfg.n_archetypes)
                .map(|_| (0..n_types).map(|_| gamma.sample(&mut rng) + 1e-3).collect())
                .collect()
        }
    };

    // Expression profile per (archetype, type): unit baseline, boosted on
    // the type's markers and the archetype's program genes.
    let mut genes: Vec<usize> = (0..q).collect();
    let mut pick = |rng: &mut ChaCha8Rng| {
        genes.shuffle(rng);
        genes[..cfg.genes_per_program.min(q)].to_vec()
    };
    let markers: Vec<Vec<usize>> = (0..n_types).map(|_| pick(&mut rng)).collect();
    let programs: Vec<Vec<usize>> = (0..cfg.n_archetypes).map(|_| pick(&mut rng)).collect();
    let mut profiles = vec![vec![vec![1.0f64; q]; n_types]; cfg.n_archetypes];
    for (a, per_type) in profiles.iter_mut().enumerate() {
        for (t, profile) in per_type.iter_mut().enumerate() {
            for &g in &markers[t] {
                profile[g] *= 1.0 + cfg.marker_strength;
            }
            for &g in &programs[a] {
                profile[g] *= 1.0 + cfg.program_strength;
            }
            let total: f64 = profile.iter().sum();
            profile.iter_mut().for_each(|r| *r *= cfg.library_size / total);
        }
    }

    let type_samplers: Vec<_> = type_weights.iter().map(|w| sampler(w)).collect();
    let unit = Uniform::new(-0.5, 0.5).expect("valid range");
    let patches_x = cfg.grid_width.div_ceil(cfg.patch_size);
    let patches_y = cfg.grid_height.div_ceil(cfg.patch_size);
    let per_section = cfg.grid_width * cfg.grid_height;
    let n = per_section * cfg.n_conditions();

    let mut cell_ids = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(2 * n);
    let mut expression = Array2::zeros((n, q));
    let mut types = Vec::with_capacity(n);
    let mut archetypes = Vec::with_capacity(n);
    let mut conditions = Vec::with_capacity(n);
    for (c, mixture) in cfg.condition_archetype_weights.iter().enumerate() {
        let arch_sampler = sampler(mixture);
        let patch_arch: Vec<usize> = (0..patches_x * patches_y).map(|_| arch_sampler.sample(&mut rng)).collect();
        let x0 = (c * (cfg.grid_width + cfg.section_gap)) as f64;
        for row in 0..cfg.grid_height {
            for col in 0..cfg.grid_width {
                let a = patch_arch[(row / cfg.patch_size) * patches_x + col / cfg.patch_size];
                let t = type_samplers[a].sample(&mut rng);
                let i = cell_ids.len();
                cell_ids.push(format!("s{c}_{row}_{col}"));
                coords.push(x0 + col as f64 + cfg.jitter * unit.sample(&mut rng));
                coords.push(row as f64 + cfg.jitter * unit.sample(&mut rng));
                let profile = &profiles[a][t];
                let mut total = 0.0;
                for (g, &rate) in profile.iter().enumerate() {
                    let v: f64 = Poisson::new(rate).expect("positive rate").sample(&mut rng);
                    expression[[i, g]] = v;
                    total += v;
                }
                if total == 0.0 {
                    // Keep every library nonzero.
                    let top = (0..q).max_by(|&x, &y| profile[x].total_cmp(&profile[y])).expect("q > 0");
                    expression[[i, top]] = 1.0;
                }
                types.push(t);
                archetypes.push(a);
                conditions.push(c);
            }
        }
    }

    let per_subclass = cfg.types_per_subclass;
    let per_supertype = cfg.types_per_subclass * cfg.subclasses_per_supertype;
    let labels = |prefix: &str, f: &dyn Fn(usize) -> usize| -> Categorical {
        Categorical::from_labels(&types.iter().map(|&t| format!("{prefix}{}", f(t))).collect::<Vec<_>>())
    };
    let dataset = SpatialDataset {
        cell_ids,
        coords: Array2::from_shape_vec((n, 2), coords).expect("two coordinates per cell"),
        genes: (0..q).map(|g| format!("gene{g:03}")).collect(),
        expression,
        cell_types: labels("type", &|t| t),
        subclasses: labels("subclass", &|t| t / per_subclass),
        supertypes: labels("supertype", &|t| t / per_supertype),
        condition: Categorical::from_labels(&conditions.iter().map(|c| format!("condition{c}")).collect::<Vec<_>>()),
    };
    Ok(SynthTissue { dataset, archetypes })
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

/// Writes `cells.csv`, `expression.csv`, `ground_truth.csv`, the resolved
/// generator config `synth.toml`, and a ready-to-run `pipeline.toml`.
pub fn write_fixture(tissue: &SynthTissue, cfg: &SynthConfig, dir: &Path) -> Result<(), IoError> {
    let io_err = |path: &Path, source| IoError::Io { path: path.to_owned(), source };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let d = &tissue.dataset;
    io::write_dataset(d, &dir.join("cells.csv"), &dir.join("expression.csv"))?;
    io::write_rows(
        &dir.join(GROUND_TRUTH_FILE),
        &["cell_id", "archetype", "condition"],
        (0..d.n_cells()).map(|i| [d.cell_ids[i].clone(), tissue.archetypes[i].to_string(), d.condition.label(i).to_owned()]),
    )?;
    let generator = toml::to_string(cfg).expect("serializable");
    io::write_bytes(&dir.join("synth.toml"), generator.as_bytes())?;
    let pipeline = PipelineConfig {
        input: InputConfig { cells: "cells.csv".into(), expression: "expression.csv".into() },
        output: OutputConfig { dir: Some("results".into()), csv_mirror: false },
        niche: Default::default(),
        wavelets: Default::default(),
        eval: Default::default(),
        metrics: Default::default(),
        cluster: ClusterConfig { n_clusters: cfg.n_archetypes.max(2), ..Default::default() },
    };
    let body = toml::to_string(&pipeline).expect("serializable");
    io::write_bytes(&dir.join("pipeline.toml"), body.as_bytes())
}

/// Reads `ground_truth.csv` archetype codes in file order.
pub fn read_ground_truth(path: &Path) -> Result<Vec<(String, usize)>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Io { path: path.to_owned(), source: e })?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Parse {
            path: path.to_owned(),
            line: i as u64 + 2,
            column: 0,
            message: e.to_string(),
        })?;
        let archetype = record[1].parse().map_err(|_| IoError::Parse {
            path: path.to_owned(),
            line: i as u64 + 2,
            column: 2,
            message: format!("{:?} is not an archetype index", &record[1]),
        })?;
        out.push((record[0].to_owned(), archetype));
    }
    Ok(out)
}
