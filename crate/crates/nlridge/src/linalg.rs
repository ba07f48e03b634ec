//! Small dense symmetric linear algebra and orthonormal transforms.
//!
//! Patch-group estimation only ever produces modest matrices (a group
//! Gram matrix is `k x k` with `k` rarely beyond 120), so the Cholesky
//! factorization is written out directly instead of delegating to a
//! BLAS backend. That keeps the positive-definiteness tolerance and the
//! failure behaviour an explicit part of the contract.

use ndarray::{Array1, Array2, ArrayView2};

/// Relative positive-definiteness tolerance: a Cholesky pivot at or below
/// `PD_TOLERANCE * max(diag)` makes the factorization fail with
/// [`LinalgError::NotPositiveDefinite`].
pub const PD_TOLERANCE: f64 = 1e-12;

/// Per-entry tolerance for the orthonormality check in
/// [`OrthoTransform::from_rows`].
const ORTHONORMALITY_TOLERANCE: f64 = 1e-12;

/// Errors produced by the dense linear-algebra kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// A Cholesky pivot fell below the relative tolerance, so the matrix
    /// is not usably positive definite.
    NotPositiveDefinite { pivot: f64, index: usize },
    /// Operand dimensions disagree.
    DimensionMismatch { expected: usize, got: usize },
    /// The rows handed to `OrthoTransform::from_rows` are not orthonormal.
    NotOrthonormal { max_deviation: f64 },
}

impl std::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinalgError::NotPositiveDefinite { pivot, index } => write!(
                f,
                "matrix is not positive definite: pivot {pivot:e} at index {index}"
            ),
            LinalgError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            LinalgError::NotOrthonormal { max_deviation } => write!(
                f,
                "rows are not orthonormal: max deviation {max_deviation:e} from identity"
            ),
        }
    }
}

impl std::error::Error for LinalgError {}

// ============================================================================
// Symmetric matrices
// ============================================================================

/// Dense symmetric matrix. Both triangles are stored and kept mirrored on
/// every write, so `get(i, j) == get(j, i)` holds bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    /// Zero matrix of the given order.
    pub fn zeros(order: usize) -> Self {
        SymMatrix {
            data: Array2::zeros((order, order)),
        }
    }

    /// Identity matrix of the given order.
    pub fn identity(order: usize) -> Self {
        SymMatrix {
            data: Array2::eye(order),
        }
    }

    /// Builds from a closure evaluated on the lower triangle (`i >= j`);
    /// the upper triangle is mirrored from it.
    pub fn from_lower(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Array2::zeros((order, order));
        for i in 0..order {
            for j in 0..=i {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        SymMatrix { data }
    }

    /// Gram matrix `Yᵀ·Y` of the columns of `y` (`k x k` for an `n x k`
    /// input). Only one triangle is computed, then mirrored, so exact
    /// symmetry survives floating-point summation order.
    pub fn gram(y: ArrayView2<f64>) -> Self {
        let k = y.ncols();
        SymMatrix::from_lower(k, |i, j| y.column(i).dot(&y.column(j)))
    }

    /// Scatter matrix `Z·Zᵀ` of the rows of `z` (`n x n` for an `n x k`
    /// input), scaled by `scale`.
    pub fn scaled_scatter(z: ArrayView2<f64>, scale: f64) -> Self {
        let n = z.nrows();
        SymMatrix::from_lower(n, |i, j| scale * z.row(i).dot(&z.row(j)))
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// Writes both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[(i, j)] = value;
        self.data[(j, i)] = value;
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.order() {
            self.data[(i, i)] += value;
        }
    }

    /// Largest diagonal entry (0.0 for an empty matrix).
    pub fn max_diagonal(&self) -> f64 {
        (0..self.order())
            .map(|i| self.data[(i, i)])
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.data[(i, i)]).sum()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }
}

// ============================================================================
// Diagonal matrices
// ============================================================================

/// Diagonal matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMatrix {
    diag: Array1<f64>,
}

impl DiagMatrix {
    pub fn from_vec(diag: Vec<f64>) -> Self {
        DiagMatrix {
            diag: Array1::from_vec(diag),
        }
    }

    /// Scalar multiple of the identity: `value · I`.
    pub fn constant(order: usize, value: f64) -> Self {
        DiagMatrix {
            diag: Array1::from_elem(order, value),
        }
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn trace(&self) -> f64 {
        self.diag.sum()
    }

    pub fn min(&self) -> f64 {
        self.diag.fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.diag
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_scalar(&mut self, value: f64) {
        self.diag += value;
    }
}

// ============================================================================
// Cholesky factorization
// ============================================================================

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: Array2<f64>,
}

/// Factors a symmetric matrix, failing with `NotPositiveDefinite` as soon
/// as a pivot drops to `PD_TOLERANCE` times the largest diagonal entry of
/// the input.
pub fn cholesky_factor(a: &SymMatrix) -> Result<CholeskyFactor, LinalgError> {
    let n = a.order();
    let tolerance = PD_TOLERANCE * a.max_diagonal();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a.get(j, j);
        for p in 0..j {
            pivot -= l[(j, p)] * l[(j, p)];
        }
        if pivot <= tolerance {
            return Err(LinalgError::NotPositiveDefinite { pivot, index: j });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(CholeskyFactor { l })
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `A·x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.order();
        let mut x = b.clone();
        // Forward: L·z = b.
        for i in 0..n {
            let mut s = x[i];
            for p in 0..i {
                s -= self.l[(i, p)] * x[p];
            }
            x[i] = s / self.l[(i, i)];
        }
        // Backward: Lᵀ·x = z.
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in i + 1..n {
                s -= self.l[(p, i)] * x[p];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A·X = B` column by column.
    pub fn solve_matrix(&self, b: ArrayView2<f64>) -> Result<Array2<f64>, LinalgError> {
        if b.nrows() != self.order() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.order(),
                got: b.nrows(),
            });
        }
        let mut x = Array2::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            let solved = self.solve_vec(&col.to_owned());
            x.column_mut(j).assign(&solved);
        }
        Ok(x)
    }
}

/// Solves `A·X = B` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &SymMatrix, b: ArrayView2<f64>) -> Result<Array2<f64>, LinalgError> {
    cholesky_factor(a)?.solve_matrix(b)
}

// ============================================================================
// Orthonormal transforms
// ============================================================================

/// Square orthonormal transform, stored by rows (each row is one basis
/// vector of the analysis side).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoTransform {
    rows: Array2<f64>,
}

impl OrthoTransform {
    /// Identity transform.
    pub fn identity(order: usize) -> Self {
        OrthoTransform {
            rows: Array2::eye(order),
        }
    }

    /// Orthonormal DCT-II matrix: row 0 is the constant `1/sqrt(order)`,
    /// row `i >= 1` has entries `sqrt(2/order)·cos(pi·(2j+1)·i/(2·order))`.
    pub fn dct(order: usize) -> Self {
        assert!(order >= 1, "transform order must be at least 1");
        let n = order as f64;
        let mut rows = Array2::zeros((order, order));
        for j in 0..order {
            rows[(0, j)] = 1.0 / n.sqrt();
        }
        let scale = (2.0 / n).sqrt();
        for i in 1..order {
            for j in 0..order {
                let angle = std::f64::consts::PI * (2 * j + 1) as f64 * i as f64 / (2.0 * n);
                rows[(i, j)] = scale * angle.cos();
            }
        }
        OrthoTransform { rows }
    }

    /// Wraps an explicit row basis, verifying `R·Rᵀ = I` to within
    /// `1e-12` per entry.
    pub fn from_rows(rows: Array2<f64>) -> Result<Self, LinalgError> {
        if rows.nrows() != rows.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: rows.nrows(),
                got: rows.ncols(),
            });
        }
        let order = rows.nrows();
        let mut max_deviation = 0.0f64;
        for i in 0..order {
            for j in i..order {
                let dot = rows.row(i).dot(&rows.row(j));
                let target = if i == j { 1.0 } else { 0.0 };
                max_deviation = max_deviation.max((dot - target).abs());
            }
        }
        if max_deviation > ORTHONORMALITY_TOLERANCE {
            return Err(LinalgError::NotOrthonormal { max_deviation });
        }
        Ok(OrthoTransform { rows })
    }

    pub fn order(&self) -> usize {
        self.rows.nrows()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }
}

/// Forward separable analysis transform of a patch group.
///
/// Each column of `y` is a row-major vectorized square patch; it is
/// transformed by `patch` along both patch axes (the Kronecker square
/// `patch ⊗ patch`, applied as two one-dimensional passes), and the group
/// axis is transformed by `group`. Requires `patch.order()² == y.nrows()`
/// and `group.order() == y.ncols()`.
pub fn separable_transform(
    y: ArrayView2<f64>,
    patch: &OrthoTransform,
    group: &OrthoTransform,
) -> Result<Array2<f64>, LinalgError> {
    apply_separable(y, patch, group, false)
}

/// Inverse of [`separable_transform`] for the same pair of transforms.
pub fn separable_inverse(
    coefficients: ArrayView2<f64>,
    patch: &OrthoTransform,
    group: &OrthoTransform,
) -> Result<Array2<f64>, LinalgError> {
    apply_separable(coefficients, patch, group, true)
}

fn apply_separable(
    y: ArrayView2<f64>,
    patch: &OrthoTransform,
    group: &OrthoTransform,
    inverse: bool,
) -> Result<Array2<f64>, LinalgError> {
    let side = patch.order();
    let n = y.nrows();
    let k = y.ncols();
    if side * side != n {
        return Err(LinalgError::DimensionMismatch {
            expected: side * side,
            got: n,
        });
    }
    if group.order() != k {
        return Err(LinalgError::DimensionMismatch {
            expected: group.order(),
            got: k,
        });
    }
    let d = patch.matrix();
    let g = group.matrix();
    let mut out = Array2::zeros((n, k));
    for j in 0..k {
        let p = y.column(j).to_owned().into_shape_with_order((side, side)).expect("side*side == n");
        // Two one-dimensional passes realize the 2-D patch transform.
        let t = if inverse {
            d.t().dot(&p).dot(&d)
        } else {
            d.dot(&p).dot(&d.t())
        };
        let flat = t.into_shape_with_order(n).expect("square patch");
        out.column_mut(j).assign(&flat);
    }
    // Group axis: out·Gᵀ forward, out·G inverse.
    let out = if inverse { out.dot(&g) } else { out.dot(&g.t()) };
    Ok(out)
}
