//! Per-hyperedge features: expression means, within-niche gene-gene
//! correlations, correlation of each gene with its one-step diffusion, and
//! cell-type counts at three granularities.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::{Granularity, NicheConfig, NicheError, SpatialDataset};
use crate::diffusion::DiffusionOperator;
use crate::hypercore::Hypergraph;
use crate::signal::SignalMatrix;

/// Target library size for count normalization.
pub const LIBRARY_SIZE: f64 = 10_000.0;

/// Scales each cell to [`LIBRARY_SIZE`] total counts, then applies `ln(1 + ·)`.
pub fn lognormalize(expression: ArrayView2<'_, f64>) -> Result<Array2<f64>, NicheError> {
    let mut out = expression.to_owned();
    for (cell, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        if let Some(gene) = row.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(NicheError::InvalidDataset(format!("cell {cell}, gene {gene}: invalid count")));
        }
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(NicheError::ZeroLibraryCell { cell });
        }
        let scale = LIBRARY_SIZE / total;
        row.mapv_inplace(|c| (c * scale).ln_1p());
    }
    Ok(out)
}

/// What one column of the feature matrix holds.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FeatureColumn {
    Mean { gene: usize },
    PairCorrelation { a: usize, b: usize },
    DiffusionCorrelation { gene: usize },
    TypeCount { granularity: Granularity, label: usize },
}

impl FeatureColumn {
    /// Column header, e.g. `mean:GAD1` or `count:subclass:L2/3 IT`.
    pub fn header(&self, dataset: &SpatialDataset) -> String {
        match *self {
            FeatureColumn::Mean { gene } => format!("mean:{}", dataset.genes[gene]),
            FeatureColumn::PairCorrelation { a, b } => {
                format!("corr:{}:{}", dataset.genes[a], dataset.genes[b])
            }
            FeatureColumn::DiffusionCorrelation { gene } => format!("diffcorr:{}", dataset.genes[gene]),
            FeatureColumn::TypeCount { granularity, label } => format!(
                "count:{}:{}",
                granularity.name(),
                dataset.labels(granularity).vocabulary()[label]
            ),
        }
    }
}

/// Hyperedge features `z` (one row per hyperedge) and their column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperedgeFeatureMatrix {
    pub values: Array2<f64>,
    pub column_schema: Vec<FeatureColumn>,
}

/// All pairs `(a, b)`, `a < b`, among the `top` highest-variance genes.
/// Variance ties go to the lower gene index.
pub fn select_gene_pairs(norm_expr: ArrayView2<'_, f64>, top: usize) -> Vec<(usize, usize)> {
    let n = norm_expr.nrows() as f64;
    let mut ranked: Vec<(f64, usize)> = norm_expr
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(g, col)| {
            let mean = pairwise_sum(&col.to_vec()) / n;
            let centered: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&centered) / n, g)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = ranked.into_iter().take(top).map(|(_, g)| g).collect();
    chosen.sort_unstable();
    let mut pairs = Vec::new();
    for (i, &a) in chosen.iter().enumerate() {
        for &b in &chosen[i + 1..] {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Pearson correlation, or 0 when it is not measurable: fewer than
/// `min_len` samples, or either side constant.
pub fn pearson(x: &[f64], y: &[f64], min_len: usize) -> f64 {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    if n < min_len.max(2) || is_constant(x) || is_constant(y) {
        return 0.0;
    }
    let mx = pairwise_sum(x) / n as f64;
    let my = pairwise_sum(y) / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Summation by recursive halving, in a fixed order.
fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Builds the feature matrix `z` for every hyperedge of `g`.
///
/// Column layout: `q` means, one correlation per gene pair, `q` diffusion
/// correlations, then type counts for cell type, subclass and supertype
/// vocabularies in order. The diffused expression `P_H · norm_expr` is taken
/// once over the whole hypergraph and then restricted to each hyperedge.
pub fn hyperedge_features(
    g: &Hypergraph,
    norm_expr: ArrayView2<'_, f64>,
    dataset: &SpatialDataset,
    cfg: &NicheConfig,
    op: &DiffusionOperator<'_>,
) -> Result<HyperedgeFeatureMatrix, NicheError> {
    let n = g.n();
    let q = norm_expr.ncols();
    for (what, got) in [
        ("expression rows vs vertices", norm_expr.nrows()),
        ("operator dimension vs vertices", op.dim()),
        ("dataset cells vs vertices", dataset.n_cells()),
    ] {
        if got != n {
            return Err(NicheError::DimensionMismatch { what, expected: n, got });
        }
    }
    let pairs = match &cfg.gene_pairs {
        Some(p) => p.clone(),
        None => select_gene_pairs(norm_expr, cfg.top_variance_genes),
    };
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= q || b >= q || a == b) {
        return Err(NicheError::InvalidGenePair { a, b, q });
    }
    let mut label_codes = Vec::new();
    for gran in Granularity::ALL {
        let labels = dataset.labels(gran);
        let size = labels.vocabulary().len();
        if let Some(&code) = labels.codes().iter().find(|&&c| c >= size) {
            return Err(NicheError::UnknownLabel { granularity: gran.name(), code, size });
        }
        label_codes.push((gran, labels.codes(), size));
    }

    let mut schema: Vec<FeatureColumn> = (0..q).map(|gene| FeatureColumn::Mean { gene }).collect();
    schema.extend(pairs.iter().map(|&(a, b)| FeatureColumn::PairCorrelation { a, b }));
    schema.extend((0..q).map(|gene| FeatureColumn::DiffusionCorrelation { gene }));
    for &(granularity, _, size) in &label_codes {
        schema.extend((0..size).map(|label| FeatureColumn::TypeCount { granularity, label }));
    }
    let p = schema.len();

    let expr = norm_expr.as_standard_layout().into_owned();
    let diffused = op.apply(&SignalMatrix::new(expr.clone())?)?.into_inner();
    let min_cells = cfg.min_cells_for_correlation;

    let mut values = Array2::zeros((g.m(), p));
    let fill = |(j, mut row): (usize, ndarray::ArrayViewMut1<'_, f64>)| {
        let members = g.edge_members(j);
        let size = members.len();
        let local = expr.select(Axis(0), members);
        let local_diffused = diffused.select(Axis(0), members);
        let genes: Vec<Vec<f64>> = local.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
        let mut col = 0;
        for gene in &genes {
            row[col] = pairwise_sum(gene) / size as f64;
            col += 1;
        }
        for &(a, b) in &pairs {
            row[col] = pearson(&genes[a], &genes[b], min_cells);
            col += 1;
        }
        for (gene, smoothed) in genes.iter().zip(local_diffused.axis_iter(Axis(1))) {
            row[col] = pearson(gene, &smoothed.to_vec(), min_cells);
            col += 1;
        }
        for &(_, codes, vocab) in &label_codes {
            for &v in members {
                row[col + codes[v]] += 1.0;
            }
            col += vocab;
        }
    };
    values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(fill);

    Ok(HyperedgeFeatureMatrix { values, column_schema: schema })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::niche::Categorical;
    use ndarray::array;

    #[test]
    fn lognormalize_rows() {
        let out = lognormalize(array![[10.0, 0.0], [5.0, 5.0], [1.0, 3.0], [2.0, 6.0]].view()).unwrap();
        assert!((out[[0, 0]] - 10_001f64.ln()).abs() < 1e-12);
        assert!((out[[0, 0]] - 9.2104).abs() < 1e-4);
        assert_eq!(out[[0, 1]], 0.0);
        assert_eq!(out[[1, 0]], 5001f64.ln());
        assert_eq!(out[[1, 1]], 5001f64.ln());
        assert_eq!(out.row(2), out.row(3));
    }

    #[test]
    fn lognormalize_zero_cell() {
        let err = lognormalize(array![[1.0, 2.0], [0.0, 0.0]].view()).unwrap_err();
        assert_eq!(err, NicheError::ZeroLibraryCell { cell: 1 });
    }

    #[test]
    fn pearson_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0], 3) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[8.0, 6.0, 4.0, 2.0], 3) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 2.0, 3.0, 4.0], &[5.0; 4], 3), 0.0);
        assert_eq!(pearson(&[0.1; 3], &[1.0, 2.0, 3.0], 3), 0.0);
        assert_eq!(pearson(&[1.0, 2.0], &[1.0, 2.0], 3), 0.0);
    }

    #[test]
    fn gene_pairs_by_variance() {
        let e = array![[0.0, 5.0, 1.0, 0.0], [0.0, -5.0, 2.0, 3.0], [0.0, 5.0, 3.0, -3.0]];
        assert_eq!(select_gene_pairs(e.view(), 2), vec![(1, 3)]);
        assert_eq!(select_gene_pairs(e.view(), 3), vec![(1, 2), (1, 3), (2, 3)]);
    }

    fn toy_dataset(expr: Array2<f64>, types: &[&str]) -> SpatialDataset {
        let n = expr.nrows();
        let q = expr.ncols();
        SpatialDataset {
            cell_ids: (0..n).map(|i| format!("c{i}")).collect(),
            coords: Array2::zeros((n, 2)),
            genes: (0..q).map(|g| format!("g{g}")).collect(),
            expression: expr,
            cell_types: Categorical::new(vec!["A".into(), "B".into(), "C".into()], types
                .iter()
                .map(|t| match *t {
                    "A" => 0,
                    "B" => 1,
                    _ => 2,
                })
                .collect())
            .unwrap(),
            subclasses: Categorical::from_labels(&vec!["s"; n]),
            supertypes: Categorical::from_labels(&vec!["t"; n]),
            condition: Categorical::from_labels(&vec!["x"; n]),
        }
    }

    #[test]
    fn feature_families() {
        // One hyperedge over all four cells plus one over the first two.
        let g = Hypergraph::new(4, vec![vec![0, 1, 2, 3], vec![0, 1]]).unwrap();
        let expr = array![[1.0, 2.0, 7.0], [2.0, 4.0, 7.0], [3.0, 6.0, 7.0], [4.0, 8.0, 7.0]];
        let ds = toy_dataset(expr.clone(), &["A", "A", "B", "A"]);
        let cfg = NicheConfig { gene_pairs: Some(vec![(0, 1), (0, 2)]), ..Default::default() };
        let op = DiffusionOperator::new(&g);
        let z = hyperedge_features(&g, expr.view(), &ds, &cfg, &op).unwrap();

        // 3 means + 2 pairs + 3 diffusion correlations + 3 + 1 + 1 counts
        assert_eq!(z.values.dim(), (2, 13));
        assert_eq!(z.column_schema.len(), 13);
        assert_eq!(z.column_schema[3], FeatureColumn::PairCorrelation { a: 0, b: 1 });
        assert_eq!(z.column_schema[8].header(&ds), "count:cell_type:A");

        let row = z.values.row(0);
        assert_eq!(row.slice(ndarray::s![..3]).to_vec(), vec![2.5, 5.0, 7.0]);
        assert!((row[3] - 1.0).abs() < 1e-15);
        assert_eq!(row[4], 0.0); // constant gene
        assert_eq!(row.slice(ndarray::s![8..11]).to_vec(), vec![3.0, 1.0, 0.0]);
        assert_eq!(row[11], 4.0);

        let pair_edge = z.values.row(1);
        assert_eq!(pair_edge[0], 1.5);
        assert_eq!(pair_edge[3], 0.0); // two cells < min_cells_for_correlation
        assert_eq!(pair_edge.slice(ndarray::s![8..11]).to_vec(), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn diffusion_correlation_matches_direct_computation() {
        let g = Hypergraph::new(5, vec![vec![0, 1, 2], vec![2, 3, 4], vec![0, 1, 2, 3, 4]]).unwrap();
        let expr = array![[1.0, 0.3], [4.0, 0.1], [2.0, 0.9], [8.0, 0.2], [3.0, 0.5]];
        let ds = toy_dataset(expr.clone(), &["A"; 5]);
        let cfg = NicheConfig { gene_pairs: Some(vec![]), ..Default::default() };
        let op = DiffusionOperator::new(&g);
        let z = hyperedge_features(&g, expr.view(), &ds, &cfg, &op).unwrap();
        let p = op.dense_materialize().unwrap();
        let smooth = p.dot(&expr);
        for j in 0..3 {
            let members = g.edge_members(j);
            for gene in 0..2 {
                let x: Vec<f64> = members.iter().map(|&v| expr[[v, gene]]).collect();
                let y: Vec<f64> = members.iter().map(|&v| smooth[[v, gene]]).collect();
                let want = pearson(&x, &y, 3);
                assert!((z.values[[j, 2 + gene]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_pairs_and_shapes() {
        let g = Hypergraph::new(3, vec![vec![0, 1, 2]]).unwrap();
        let expr = Array2::ones((3, 2));
        let ds = toy_dataset(expr.clone(), &["A"; 3]);
        let op = DiffusionOperator::new(&g);
        let cfg = NicheConfig { gene_pairs: Some(vec![(0, 2)]), ..Default::default() };
        assert_eq!(
            hyperedge_features(&g, expr.view(), &ds, &cfg, &op).unwrap_err(),
            NicheError::InvalidGenePair { a: 0, b: 2, q: 2 }
        );
        let short = Array2::ones((2, 2));
        assert!(matches!(
            hyperedge_features(&g, short.view(), &ds, &NicheConfig::default(), &op),
            Err(NicheError::DimensionMismatch { .. })
        ));
    }
}
