//! Labeled training dictionaries and their ridge projectors.
//!
//! A [`Dictionary`] stores training samples as unit-norm columns grouped into
//! contiguous class blocks. The [`Projector`] `P = (AᵀA + λI)⁻¹Aᵀ` is
//! computed once with a Cholesky solve so that coding an observation is a
//! single matrix-vector product.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Columns whose norm falls below this are rejected.
pub const ZERO_COLUMN_EPS: f64 = 1e-12;
/// Smallest admissible Cholesky pivot of the regularized Gram matrix.
pub const SINGULAR_PIVOT_EPS: f64 = 1e-12;

/// Data-scaled default ridge weight: `1e-3 * n / m`.
pub fn default_lambda(rows: usize, cols: usize) -> f64 {
    1e-3 * cols as f64 / rows as f64
}

#[derive(Debug, Clone, Default)]
pub struct DictionaryOptions {
    /// Ridge weight; `None` selects [`default_lambda`].
    pub lambda: Option<f64>,
    /// Subtract the per-row mean before normalizing.
    pub center: bool,
    /// Declared classes in block order. Defaults to order of first appearance.
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
    class_names: Vec<String>,
    blocks: Vec<Range<usize>>,
    column_labels: Vec<usize>,
    column_norms: Vec<f64>,
    center: Option<DVector<f64>>,
    lambda: f64,
}

impl Dictionary {
    pub fn build<S: AsRef<str>>(columns: &[Vec<f64>], labels: &[S], opts: &DictionaryOptions) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("dictionary needs at least one column".into()));
        }
        if labels.len() != columns.len() {
            return Err(Error::DimensionMismatch { expected: columns.len(), got: labels.len() });
        }
        let m = columns[0].len();
        if m == 0 {
            return Err(Error::InvalidParameter("dictionary columns are empty".into()));
        }
        if let Some(bad) = columns.iter().find(|c| c.len() != m) {
            return Err(Error::RaggedColumns { expected: m, got: bad.len() });
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }

        let class_names: Vec<String> = match &opts.classes {
            Some(c) => c.clone(),
            None => {
                let mut seen: Vec<String> = Vec::new();
                for l in labels {
                    if !seen.iter().any(|s| s == l.as_ref()) {
                        seen.push(l.as_ref().to_string());
                    }
                }
                seen
            }
        };
        let mut label_ids = Vec::with_capacity(labels.len());
        for l in labels {
            let id = class_names
                .iter()
                .position(|c| c == l.as_ref())
                .ok_or_else(|| Error::UnknownClass(l.as_ref().to_string()))?;
            label_ids.push(id);
        }

        // stable grouping: class order first, original order within a class
        let mut order: Vec<usize> = (0..columns.len()).collect();
        order.sort_by_key(|&i| label_ids[i]);
        let mut blocks = Vec::with_capacity(class_names.len());
        let mut start = 0;
        for (k, name) in class_names.iter().enumerate() {
            let len = label_ids.iter().filter(|&&id| id == k).count();
            if len == 0 {
                return Err(Error::EmptyClass(name.clone()));
            }
            blocks.push(start..start + len);
            start += len;
        }

        let n = columns.len();
        let mut matrix = DMatrix::from_fn(m, n, |r, c| columns[order[c]][r]);
        let center = if opts.center {
            let mean = matrix.column_mean();
            for mut col in matrix.column_iter_mut() {
                col -= &mean;
            }
            Some(mean)
        } else {
            None
        };
        let mut column_norms = Vec::with_capacity(n);
        for (c, mut col) in matrix.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm < ZERO_COLUMN_EPS {
                return Err(Error::ZeroColumn(order[c]));
            }
            col /= norm;
            column_norms.push(norm);
        }

        let lambda = opts.lambda.unwrap_or_else(|| default_lambda(m, n));
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let column_labels = order.iter().map(|&i| label_ids[i]).collect();
        Ok(Dictionary { matrix, class_names, blocks, column_labels, column_norms, center, lambda })
    }

    /// Reassembles a dictionary from stored parts. The matrix must already
    /// have unit-norm columns grouped by block.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        class_names: Vec<String>,
        block_sizes: &[usize],
        column_norms: Vec<f64>,
        center: Option<DVector<f64>>,
        lambda: f64,
    ) -> Result<Self> {
        let (m, n) = matrix.shape();
        if m == 0 || n == 0 {
            return Err(Error::ModelFormat("empty dictionary".into()));
        }
        if class_names.len() != block_sizes.len() || block_sizes.iter().sum::<usize>() != n {
            return Err(Error::ModelFormat("block sizes do not partition the columns".into()));
        }
        if block_sizes.contains(&0) {
            return Err(Error::ModelFormat("empty class block".into()));
        }
        if column_norms.len() != n {
            return Err(Error::ModelFormat("column norm count mismatch".into()));
        }
        if center.as_ref().is_some_and(|c| c.len() != m) {
            return Err(Error::ModelFormat("center length mismatch".into()));
        }
        for (j, col) in matrix.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::ModelFormat(format!("column {j} is not unit norm")));
            }
        }
        let mut blocks = Vec::new();
        let mut column_labels = Vec::with_capacity(n);
        let mut start = 0;
        for (k, &len) in block_sizes.iter().enumerate() {
            blocks.push(start..start + len);
            column_labels.extend(std::iter::repeat_n(k, len));
            start += len;
        }
        Ok(Dictionary { matrix, class_names, blocks, column_labels, column_norms, center, lambda })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Observation length `m`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of training columns `n`.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn column_labels(&self) -> &[usize] {
        &self.column_labels
    }

    /// Column norms before normalization (after centering).
    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn center(&self) -> Option<&DVector<f64>> {
        self.center.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// `y` minus the stored center; a copy of `y` when centering is off.
    pub fn apply_center(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.rows() {
            return Err(Error::DimensionMismatch { expected: self.rows(), got: y.len() });
        }
        let mut v = DVector::from_column_slice(y);
        if let Some(c) = &self.center {
            v -= c;
        }
        Ok(v)
    }
}

/// Precomputed ridge operator `(AᵀA + λI)⁻¹Aᵀ`, `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: DMatrix<f64>,
    lambda: f64,
}

impl Projector {
    pub fn from_matrix(matrix: DMatrix<f64>, lambda: f64) -> Self {
        Projector { matrix, lambda }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(m, n)` of the dictionary this operator was built from.
    pub fn dims(&self) -> (usize, usize) {
        (self.matrix.ncols(), self.matrix.nrows())
    }
}

fn regularized_gram(d: &Dictionary) -> DMatrix<f64> {
    let a = d.matrix();
    let mut gram = a.tr_mul(a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += d.lambda();
    }
    gram
}

fn factor(d: &Dictionary) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = regularized_gram(d).cholesky().ok_or(Error::SingularGram)?;
    // every pivot bounds the smallest eigenvalue from above
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v * v));
    if min_pivot <= SINGULAR_PIVOT_EPS {
        return Err(Error::SingularGram);
    }
    Ok(chol)
}

pub fn precompute_projection(d: &Dictionary) -> Result<Projector> {
    let chol = factor(d)?;
    let p = chol.solve(&d.matrix().transpose());
    Ok(Projector { matrix: p, lambda: d.lambda() })
}

/// Recomputes row `i` of the projector from scratch.
pub fn projector_row(d: &Dictionary, i: usize) -> Result<DVector<f64>> {
    let n = d.cols();
    if i >= n {
        return Err(Error::DimensionMismatch { expected: n, got: i });
    }
    let chol = factor(d)?;
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    // row i of G⁻¹Aᵀ is (A G⁻¹ e_i)ᵀ since G is symmetric
    let g_inv_e = chol.solve(&e);
    Ok(d.matrix() * g_inv_e)
}

/// A dictionary paired with its projector.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDictionary {
    pub dictionary: Dictionary,
    pub projector: Projector,
}

impl PreparedDictionary {
    pub fn new(dictionary: Dictionary) -> Result<Self> {
        let projector = precompute_projection(&dictionary)?;
        Ok(PreparedDictionary { dictionary, projector })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts(lambda: f64) -> DictionaryOptions {
        DictionaryOptions { lambda: Some(lambda), ..Default::default() }
    }

    #[test]
    fn identity_dictionary() {
        let d = Dictionary::build(&[vec![1.0, 0.0], vec![0.0, 1.0]], &["a", "b"], &opts(0.0)).unwrap();
        assert_eq!(d.matrix(), &DMatrix::identity(2, 2));
        assert_eq!(d.blocks(), &[0..1, 1..2]);
        let p = precompute_projection(&d).unwrap();
        assert!((p.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let d1 = Dictionary::build(&[vec![1.0, 0.0], vec![0.0, 1.0]], &["a", "b"], &opts(1.0)).unwrap();
        let p1 = precompute_projection(&d1).unwrap();
        assert!((p1.matrix() - DMatrix::<f64>::identity(2, 2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn three_four_five() {
        let d = Dictionary::build(&[vec![3.0, 4.0]], &["a"], &opts(0.0)).unwrap();
        assert!((d.matrix()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((d.matrix()[(1, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(d.column_norms(), &[5.0]);
    }

    #[test]
    fn diag_projector_against_dense_solve() {
        // columns are diag(1, 2) before normalization; normalization makes A = I,
        // so build the operator straight from the stored matrix instead
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let d = Dictionary {
            matrix: a.clone(),
            class_names: vec!["a".into(), "b".into()],
            blocks: vec![0..1, 1..2],
            column_labels: vec![0, 1],
            column_norms: vec![1.0, 1.0],
            center: None,
            lambda: 1.0,
        };
        let p = precompute_projection(&d).unwrap();
        // oracle: (AᵀA + I)⁻¹Aᵀ = diag(1/2, 2/5)
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.4]);
        assert!((p.matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn grouping_and_errors() {
        let cols = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let d = Dictionary::build(&cols, &["b", "a", "b"], &opts(0.1)).unwrap();
        assert_eq!(d.class_names(), &["b".to_string(), "a".to_string()]);
        assert_eq!(d.blocks(), &[0..2, 2..3]);
        assert_eq!(d.column_labels(), &[0, 0, 1]);
        // second stored column is the original third column
        assert!((d.matrix()[(0, 1)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);

        assert!(matches!(
            Dictionary::build(&[vec![1.0, 0.0], vec![1.0]], &["a", "b"], &opts(0.0)),
            Err(Error::RaggedColumns { .. })
        ));
        assert!(matches!(
            Dictionary::build(&[vec![1.0, 0.0], vec![0.0, 0.0]], &["a", "b"], &opts(0.0)),
            Err(Error::ZeroColumn(1))
        ));
        let declared = DictionaryOptions { classes: Some(vec!["a".into(), "z".into()]), ..opts(0.0) };
        assert!(matches!(Dictionary::build(&[vec![1.0, 0.0]], &["a"], &declared), Err(Error::EmptyClass(_))));
        assert!(matches!(Dictionary::build(&[vec![1.0, 0.0]], &["q"], &declared), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn singular_gram_detected() {
        let cols = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let d = Dictionary::build(&cols, &["a", "b"], &opts(0.0)).unwrap();
        assert!(matches!(precompute_projection(&d), Err(Error::SingularGram)));
        let d = Dictionary::build(&cols, &["a", "b"], &opts(0.1)).unwrap();
        assert!(precompute_projection(&d).is_ok());
    }

    #[test]
    fn random_columns_unit_norm_against_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cols: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<&str> = (0..20).map(|i| if i % 3 == 0 { "x" } else { "y" }).collect();
        let d = Dictionary::build(&cols, &labels, &opts(0.01)).unwrap();
        // naive normalizer in the stored order
        let mut order: Vec<usize> = (0..20).collect();
        order.sort_by_key(|&i| if labels[i] == "x" { 0 } else { 1 });
        for (j, &src) in order.iter().enumerate() {
            let norm: f64 = cols[src].iter().map(|v| v * v).sum::<f64>().sqrt();
            for r in 0..6 {
                assert!((d.matrix()[(r, j)] - cols[src][r] / norm).abs() < 1e-14);
            }
            assert!((d.matrix().column(j).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn centering_against_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(-1.0..3.0)).collect()).collect();
        let labels = ["a", "a", "a", "a", "b", "b", "b", "b"];
        let d = Dictionary::build(&cols, &labels, &DictionaryOptions { center: true, ..opts(0.1) }).unwrap();
        let c = d.center().unwrap();
        for r in 0..4 {
            let mean: f64 = cols.iter().map(|v| v[r]).sum::<f64>() / 8.0;
            assert!((c[r] - mean).abs() < 1e-14);
        }
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let yc = d.apply_center(&y).unwrap();
        for r in 0..4 {
            assert_eq!(yc[r], y[r] - c[r]);
        }
        let yy: Vec<f64> = c.iter().copied().collect();
        assert!(d.apply_center(&yy).unwrap().amax() == 0.0);
        assert!(matches!(d.apply_center(&[1.0]), Err(Error::DimensionMismatch { .. })));

        let plain = Dictionary::build(&cols, &labels, &opts(0.1)).unwrap();
        assert_eq!(plain.apply_center(&y).unwrap().as_slice(), &y[..]);
    }

    #[test]
    fn projector_row_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<String> = (0..12).map(|i| format!("c{}", i % 3)).collect();
        let d = Dictionary::build(&cols, &labels, &opts(0.1)).unwrap();
        let p = precompute_projection(&d).unwrap();
        for i in [0, 5, 11] {
            let row = projector_row(&d, i).unwrap();
            let stored = p.matrix().row(i).transpose();
            assert!((row - stored).amax() < 1e-12);
        }
    }
}
