//! Covariance models for the Gaussian design rows.
//!
//! A [`CovarianceModel`] is immutable after construction and caches the
//! spectral factorization together with `Σ^{1/2}`, `Σ^{-1/2}` and `Σ^{-1}`.
//! All square roots are symmetric (spectral) roots.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, cholesky, sorted_eigen, spectral_map, submatrix, symmetrize};
use crate::rng;
use crate::{Error, Result};

/// Smallest eigenvalue accepted before a model is declared ill-conditioned.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// A covariance family that can be instantiated at any dimension (except
/// `Explicit`, which has a fixed dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceFamily {
    Identity,
    /// `Σ_ij = ρ^{|i−j|}`
    Ar1 { rho: f64 },
    /// `Σ = V diag(spikes) Vᵀ + σ² I`
    Spiked {
        spikes: Vec<f64>,
        sigma_sq: f64,
        /// Seed of the Gaussian matrix whose QR factor gives `V`.
        #[serde(default)]
        v_seed: u64,
        /// Explicit orthonormal directions (columns), overriding `v_seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directions: Option<Vec<Vec<f64>>>,
    },
    /// Dense row-major matrix.
    Explicit { matrix: Vec<Vec<f64>> },
}

impl CovarianceFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            CovarianceFamily::Identity => Ok(()),
            CovarianceFamily::Ar1 { rho } => {
                if !(rho.is_finite() && *rho > -1.0 && *rho < 1.0) {
                    return Err(Error::Parameter(format!("ar1 requires -1 < rho < 1, got {rho}")));
                }
                Ok(())
            }
            CovarianceFamily::Spiked {
                spikes, sigma_sq, ..
            } => {
                if spikes.is_empty() {
                    return Err(Error::Parameter("spiked model needs at least one spike".into()));
                }
                if let Some(s) = spikes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(Error::Parameter(format!("spike values must be > 0, got {s}")));
                }
                if !(sigma_sq.is_finite() && *sigma_sq > 0.0) {
                    return Err(Error::Parameter(format!("sigma_sq must be > 0, got {sigma_sq}")));
                }
                Ok(())
            }
            CovarianceFamily::Explicit { matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|row| row.len() != n) {
                    return Err(Error::Dimension("explicit covariance must be a non-empty square matrix".into()));
                }
                Ok(())
            }
        }
    }

    /// Dimension forced by the family, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            CovarianceFamily::Explicit { matrix } => Some(matrix.len()),
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            CovarianceFamily::Identity => true,
            CovarianceFamily::Ar1 { rho } => *rho == 0.0,
            _ => false,
        }
    }

    /// Builds the model at dimension `p`.
    pub fn build(&self, p: usize) -> Result<CovarianceModel> {
        build(&CovarianceSpec {
            family: self.clone(),
            dim: p,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    #[serde(flatten)]
    pub family: CovarianceFamily,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct CovarianceModel {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    inv: DMatrix<f64>,
    diagonal: bool,
}

/// The three symmetric factors derived from a covariance matrix.
#[derive(Debug, Clone)]
pub struct SqrtFactors {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub inv: DMatrix<f64>,
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == 0.0))
}

fn check_spectrum(eigenvalues: &DVector<f64>) -> Result<()> {
    let min = eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    if min < EIGENVALUE_FLOOR {
        return Err(Error::IllConditioned {
            min_eigenvalue: min,
            floor: EIGENVALUE_FLOOR,
        });
    }
    Ok(())
}

/// Symmetric square root, inverse square root and inverse of a symmetric
/// positive-definite matrix.
pub fn factor_sqrt(matrix: &DMatrix<f64>) -> Result<SqrtFactors> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::Dimension("factor_sqrt needs a square matrix".into()));
    }
    if is_diagonal(matrix) {
        let d = matrix.diagonal();
        check_spectrum(&d)?;
        return Ok(SqrtFactors {
            sqrt: DMatrix::from_diagonal(&d.map(f64::sqrt)),
            inv_sqrt: DMatrix::from_diagonal(&d.map(|x| 1.0 / x.sqrt())),
            inv: DMatrix::from_diagonal(&d.map(|x| 1.0 / x)),
        });
    }
    let (values, vectors) = sorted_eigen(matrix);
    check_spectrum(&values)?;
    Ok(SqrtFactors {
        sqrt: spectral_map(&values, &vectors, f64::sqrt),
        inv_sqrt: spectral_map(&values, &vectors, |x| 1.0 / x.sqrt()),
        inv: spectral_map(&values, &vectors, |x| 1.0 / x),
    })
}

fn ar1_matrix(rho: f64, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho.powi(i.abs_diff(j) as i32) })
}

fn spike_directions(p: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::stream(seed, &[rng::tag::COVARIANCE, p as u64, r as u64]);
    let gauss = DMatrix::from_fn(p, r, |_, _| StandardNormal.sample(&mut g));
    gauss.qr().q()
}

pub fn build(spec: &CovarianceSpec) -> Result<CovarianceModel> {
    spec.family.validate()?;
    let p = spec.dim;
    if p == 0 {
        return Err(Error::Parameter("covariance dimension must be positive".into()));
    }
    let matrix = match &spec.family {
        CovarianceFamily::Identity => DMatrix::identity(p, p),
        CovarianceFamily::Ar1 { rho } => ar1_matrix(*rho, p),
        CovarianceFamily::Spiked {
            spikes,
            sigma_sq,
            v_seed,
            directions,
        } => {
            let r = spikes.len();
            if r >= p {
                return Err(Error::Parameter(format!("spiked model needs r < p (r = {r}, p = {p})")));
            }
            let v = match directions {
                Some(cols) => {
                    if cols.len() != r || cols.iter().any(|c| c.len() != p) {
                        return Err(Error::Dimension(format!("spike directions must be {r} columns of length {p}")));
                    }
                    let v = DMatrix::from_fn(p, r, |i, j| cols[j][i]);
                    let gram = v.transpose() * &v;
                    if linalg::frobenius_rel_err(&gram, &DMatrix::identity(r, r)) > 1e-8 {
                        return Err(Error::Parameter("spike directions are not orthonormal".into()));
                    }
                    v
                }
                None => spike_directions(p, r, *v_seed),
            };
            let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(spikes));
            let mut m = &v * lambda * v.transpose();
            for i in 0..p {
                m[(i, i)] += sigma_sq;
            }
            symmetrize(&mut m);
            m
        }
        CovarianceFamily::Explicit { matrix } => {
            if matrix.len() != p {
                return Err(Error::Dimension(format!(
                    "explicit covariance has dimension {} but {p} was requested",
                    matrix.len()
                )));
            }
            DMatrix::from_fn(p, p, |i, j| matrix[i][j])
        }
    };
    CovarianceModel::from_matrix(matrix)
}

impl CovarianceModel {
    /// Validates symmetry and definiteness, then factorizes.
    pub fn from_matrix(mut matrix: DMatrix<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if p == 0 || matrix.ncols() != p {
            return Err(Error::Dimension("covariance must be a non-empty square matrix".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("covariance has non-finite entries".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for j in 0..p {
            for i in 0..j {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Parameter(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        symmetrize(&mut matrix);

        let diagonal = is_diagonal(&matrix);
        let (eigenvalues, eigenvectors) = if diagonal {
            let d = matrix.diagonal();
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
            let values = DVector::from_iterator(p, order.iter().map(|&k| d[k]));
            let mut vectors = DMatrix::zeros(p, p);
            for (col, &k) in order.iter().enumerate() {
                vectors[(k, col)] = 1.0;
            }
            (values, vectors)
        } else {
            sorted_eigen(&matrix)
        };
        check_spectrum(&eigenvalues)?;

        let SqrtFactors { sqrt, inv_sqrt, inv } = if diagonal {
            factor_sqrt(&matrix)?
        } else {
            SqrtFactors {
                sqrt: spectral_map(&eigenvalues, &eigenvectors, f64::sqrt),
                inv_sqrt: spectral_map(&eigenvalues, &eigenvectors, |x| 1.0 / x.sqrt()),
                inv: spectral_map(&eigenvalues, &eigenvectors, |x| 1.0 / x),
            }
        };
        Ok(CovarianceModel {
            matrix,
            eigenvalues,
            eigenvectors,
            sqrt,
            inv_sqrt,
            inv,
            diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }
    /// Orthonormal eigenvectors, column `k` paired with `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }
    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }
    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }
    pub fn inv(&self) -> &DMatrix<f64> {
        &self.inv
    }
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }
    pub fn is_identity(&self) -> bool {
        self.diagonal && self.matrix.diagonal().iter().all(|&d| d == 1.0)
    }
    pub fn condition_number(&self) -> f64 {
        self.eigenvalues.max() / self.eigenvalues.min()
    }

    /// `‖v‖²_Σ = vᵀ Σ v`
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        if self.diagonal {
            v.iter().zip(self.matrix.diagonal().iter()).map(|(x, d)| d * x * x).sum()
        } else {
            v.dot(&(&self.matrix * v))
        }
    }
}

/// Sorted, duplicate-free index set; errors on out-of-range entries.
pub(crate) fn normalize_index_set(p: usize, set: &[usize]) -> Result<Vec<usize>> {
    let mut b = set.to_vec();
    b.sort_unstable();
    b.dedup();
    if let Some(&bad) = b.iter().find(|&&i| i >= p) {
        return Err(Error::Dimension(format!("index {bad} out of range for dimension {p}")));
    }
    Ok(b)
}

/// Conditioning of the coordinates outside `given` on those inside it.
pub(crate) struct Conditioning {
    pub given: Vec<usize>,
    pub rest: Vec<usize>,
    /// Cholesky factor of `Σ_{BB}`; `None` when `B` is empty.
    pub chol_given: Option<Cholesky<f64, Dyn>>,
    /// `Σ_{B B^c}`
    pub cross: DMatrix<f64>,
    /// `Σ_{B^cB^c} − Σ_{B^cB} Σ_{BB}^{-1} Σ_{BB^c}`
    pub schur: DMatrix<f64>,
}

impl Conditioning {
    pub fn new(model: &CovarianceModel, given: &[usize]) -> Result<Self> {
        let p = model.dim();
        let given = normalize_index_set(p, given)?;
        if given.len() == p {
            return Err(Error::EmptyComplement);
        }
        let mut in_given = vec![false; p];
        for &i in &given {
            in_given[i] = true;
        }
        let rest: Vec<usize> = (0..p).filter(|&i| !in_given[i]).collect();
        let sigma = model.matrix();
        let rest_block = submatrix(sigma, &rest, &rest);
        if given.is_empty() {
            return Ok(Conditioning {
                given,
                rest,
                chol_given: None,
                cross: DMatrix::zeros(0, p),
                schur: rest_block,
            });
        }
        let cross = submatrix(sigma, &given, &rest);
        let chol = cholesky(submatrix(sigma, &given, &given)).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
        })?;
        let w = chol.l().solve_lower_triangular(&cross).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
        })?;
        let mut schur = rest_block - w.transpose() * w;
        symmetrize(&mut schur);
        Ok(Conditioning {
            given,
            rest,
            chol_given: Some(chol),
            cross,
            schur,
        })
    }

    /// `Σ_{BB}^{-1} v`
    pub fn solve_given(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.chol_given {
            Some(c) => c.solve(v),
            None => DVector::zeros(0),
        }
    }
}

/// Schur complement `Σ_{B^cB^c} − Σ_{B^cB} Σ_{BB}^{-1} Σ_{BB^c}` of the
/// block indexed by `given`.
pub fn schur_complement(model: &CovarianceModel, given: &[usize]) -> Result<DMatrix<f64>> {
    Conditioning::new(model, given).map(|c| c.schur)
}
