//! Gaussian posterior representations.
//!
//! [`DlrBelief`] keeps the precision as `diag(Υ) + W Wᵀ`; [`SphericalBelief`]
//! restricts the diagonal to `η I` and stores the low-rank part as an
//! orthonormal basis with singular values. [`DenseBelief`] holds a full
//! precision matrix and exists for the full-covariance baseline and as the
//! reference the compact forms are checked against.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::linalg::{cholesky, thin_svd};
use crate::rng::{seeded, standard_normal_vector};
use crate::{Error, Result};

/// Largest dimension for which a dense P×P matrix is ever materialized.
pub const DEFAULT_ORACLE_LIMIT: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct DlrBelief {
    pub mean: DVector<f64>,
    /// Diagonal of `Υ`, strictly positive.
    pub diag_precision: DVector<f64>,
    /// `W`, P×L. Column order carries no meaning.
    pub low_rank: DMatrix<f64>,
}

impl DlrBelief {
    pub fn new(mean: DVector<f64>, diag_precision: DVector<f64>, low_rank: DMatrix<f64>) -> Result<Self> {
        let b = Self {
            mean,
            diag_precision,
            low_rank,
        };
        b.check()?;
        Ok(b)
    }

    /// `N(μ₀, (η₀ I)⁻¹)` with an all-zero rank-`rank` factor.
    pub fn from_prior(mean: DVector<f64>, eta: f64, rank: usize) -> Result<Self> {
        let p = mean.len();
        Self::new(mean, DVector::from_element(p, eta), DMatrix::zeros(p, rank))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.low_rank.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let p = self.mean.len();
        if self.diag_precision.len() != p {
            return Err(Error::DimensionMismatch {
                what: "diagonal precision",
                expected: p,
                found: self.diag_precision.len(),
            });
        }
        if self.low_rank.nrows() != p {
            return Err(Error::DimensionMismatch {
                what: "low-rank factor rows",
                expected: p,
                found: self.low_rank.nrows(),
            });
        }
        if self.mean.iter().chain(self.low_rank.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("belief mean or factor"));
        }
        if self.diag_precision.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::NotPositiveDefinite("diagonal precision must be positive and finite"));
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Result<DenseBelief> {
        self.to_dense_with_limit(DEFAULT_ORACLE_LIMIT)
    }

    pub fn to_dense_with_limit(&self, limit: usize) -> Result<DenseBelief> {
        self.check()?;
        let p = self.dim();
        if p > limit {
            return Err(Error::TooLarge { dim: p, limit });
        }
        let mut precision = &self.low_rank * self.low_rank.transpose();
        for i in 0..p {
            precision[(i, i)] += self.diag_precision[i];
        }
        Ok(DenseBelief {
            mean: self.mean.clone(),
            precision,
        })
    }

    /// Solves `(Υ + W Wᵀ) X = rhs` by Woodbury in O(P L² + L³) per column.
    pub fn solve_precision(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inv_diag = self.diag_precision.map(|v| 1.0 / v);
        woodbury_solve(&inv_diag, &self.low_rank, rhs)
    }

    /// Draws `n` rows from `N(μ, (Υ + WWᵀ)⁻¹)`, using the dense Cholesky path
    /// up to [`DEFAULT_ORACLE_LIMIT`] and the low-rank square root above it.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if self.dim() <= DEFAULT_ORACLE_LIMIT {
            self.sample_dense(n, seed)
        } else {
            self.sample_low_rank(n, seed)
        }
    }

    pub fn sample_dense(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.to_dense_with_limit(usize::MAX)?.sample(n, seed)
    }

    /// Square-root sampling without any P×P matrix.
    ///
    /// With `V = Υ^{-1/2} W = Q S Rᵀ`, the covariance is
    /// `Υ^{-1/2} (I + Q S² Qᵀ)⁻¹ Υ^{-1/2}` and
    /// `(I + Q S² Qᵀ)^{-1/2} = I − Q diag(1 − 1/√(1+s²)) Qᵀ`.
    pub fn sample_low_rank(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.check()?;
        let p = self.dim();
        let inv_sqrt = self.diag_precision.map(|v| 1.0 / v.sqrt());
        let mut v = self.low_rank.clone();
        for r in 0..p {
            v.row_mut(r).scale_mut(inv_sqrt[r]);
        }
        let svd = thin_svd(&v)?;
        let shrink = svd.singular_values.map(|s| 1.0 - 1.0 / (1.0 + s * s).sqrt());
        let mut rng = seeded(seed);
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let eps = standard_normal_vector(&mut rng, p);
            let coeff = svd.left.transpose() * &eps;
            let coeff = coeff.component_mul(&shrink);
            let z = eps - &svd.left * coeff;
            for j in 0..p {
                out[(i, j)] = self.mean[j] + inv_sqrt[j] * z[j];
            }
        }
        Ok(out)
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lofi-dlr v1");
        let _ = writeln!(s, "P {}", self.dim());
        let _ = writeln!(s, "L {}", self.rank());
        write_floats(&mut s, "mean", self.mean.iter());
        write_floats(&mut s, "diag", self.diag_precision.iter());
        let row_major: Vec<f64> = (0..self.dim())
            .flat_map(|r| (0..self.rank()).map(move |c| (r, c)))
            .map(|(r, c)| self.low_rank[(r, c)])
            .collect();
        write_floats(&mut s, "factor", row_major.iter());
        s
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut rec = Record::new(text, "lofi-dlr v1")?;
        let p = rec.count("P")?;
        let l = rec.count("L")?;
        let mean = rec.floats("mean", p)?;
        let diag = rec.floats("diag", p)?;
        let factor = rec.floats("factor", p * l)?;
        Self::new(
            DVector::from_vec(mean),
            DVector::from_vec(diag),
            DMatrix::from_row_slice(p, l, &factor),
        )
    }
}

/// Spherical-plus-low-rank belief: precision `η I + U diag(λ²) Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalBelief {
    pub mean: DVector<f64>,
    pub eta: f64,
    /// Orthonormal columns, P×L.
    pub basis: DMatrix<f64>,
    /// Non-negative, non-increasing.
    pub singular_values: DVector<f64>,
}

impl SphericalBelief {
    pub fn new(mean: DVector<f64>, eta: f64, basis: DMatrix<f64>, singular_values: DVector<f64>) -> Result<Self> {
        let b = Self {
            mean,
            eta,
            basis,
            singular_values,
        };
        b.check()?;
        Ok(b)
    }

    /// Prior with `λ = 0` and `U` the first `rank` standard basis vectors.
    pub fn from_prior(mean: DVector<f64>, eta: f64, rank: usize) -> Result<Self> {
        let p = mean.len();
        if rank > p {
            return Err(Error::InvalidConfig(format!("spherical rank {rank} exceeds dimension {p}")));
        }
        Self::new(mean, eta, DMatrix::identity(p, rank), DVector::zeros(rank))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let p = self.mean.len();
        if self.basis.nrows() != p {
            return Err(Error::DimensionMismatch {
                what: "spherical basis rows",
                expected: p,
                found: self.basis.nrows(),
            });
        }
        if self.singular_values.len() != self.basis.ncols() {
            return Err(Error::DimensionMismatch {
                what: "spherical singular values",
                expected: self.basis.ncols(),
                found: self.singular_values.len(),
            });
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::NotPositiveDefinite("spherical precision must be positive"));
        }
        if self.singular_values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::NonFinite("singular values must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn orthonormality_error(&self) -> f64 {
        let l = self.rank();
        (self.basis.transpose() * &self.basis - DMatrix::<f64>::identity(l, l)).amax()
    }

    /// `U diag(λ)`.
    pub fn low_rank(&self) -> DMatrix<f64> {
        let mut w = self.basis.clone();
        for c in 0..self.rank() {
            w.column_mut(c).scale_mut(self.singular_values[c]);
        }
        w
    }

    pub fn to_dlr(&self) -> DlrBelief {
        DlrBelief {
            mean: self.mean.clone(),
            diag_precision: DVector::from_element(self.dim(), self.eta),
            low_rank: self.low_rank(),
        }
    }

    pub fn to_dense(&self) -> Result<DenseBelief> {
        self.check()?;
        self.to_dlr().to_dense()
    }

    pub fn to_dense_with_limit(&self, limit: usize) -> Result<DenseBelief> {
        self.check()?;
        self.to_dlr().to_dense_with_limit(limit)
    }

    /// `(η I + U Λ² Uᵀ)⁻¹ v = v/η − U diag(λ²/(η(η+λ²))) Uᵀ v`, valid for orthonormal `U`.
    pub fn solve_precision(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta;
        let d = self.singular_values.map(|l| l * l / (eta * (eta + l * l)));
        let proj = (self.basis.transpose() * rhs).component_mul(&d);
        rhs / eta - &self.basis * proj
    }

    /// Square-root sampling: `Σ^{1/2} = I/√η + U diag(1/√(η+λ²) − 1/√η) Uᵀ`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.check()?;
        let p = self.dim();
        let base = 1.0 / self.eta.sqrt();
        let adj = self.singular_values.map(|l| 1.0 / (self.eta + l * l).sqrt() - base);
        let mut rng = seeded(seed);
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let eps = standard_normal_vector(&mut rng, p);
            let coeff = (self.basis.transpose() * &eps).component_mul(&adj);
            let z = &eps * base + &self.basis * coeff;
            for j in 0..p {
                out[(i, j)] = self.mean[j] + z[j];
            }
        }
        Ok(out)
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lofi-spherical v1");
        let _ = writeln!(s, "P {}", self.dim());
        let _ = writeln!(s, "L {}", self.rank());
        write_floats(&mut s, "mean", self.mean.iter());
        write_floats(&mut s, "eta", [self.eta].iter());
        write_floats(&mut s, "lambda", self.singular_values.iter());
        let row_major: Vec<f64> = (0..self.dim())
            .flat_map(|r| (0..self.rank()).map(move |c| (r, c)))
            .map(|(r, c)| self.basis[(r, c)])
            .collect();
        write_floats(&mut s, "basis", row_major.iter());
        s
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut rec = Record::new(text, "lofi-spherical v1")?;
        let p = rec.count("P")?;
        let l = rec.count("L")?;
        let mean = rec.floats("mean", p)?;
        let eta = rec.floats("eta", 1)?[0];
        let lambda = rec.floats("lambda", l)?;
        let basis = rec.floats("basis", p * l)?;
        Self::new(
            DVector::from_vec(mean),
            eta,
            DMatrix::from_row_slice(p, l, &basis),
            DVector::from_vec(lambda),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseBelief {
    pub mean: DVector<f64>,
    /// Symmetric positive definite.
    pub precision: DMatrix<f64>,
}

impl DenseBelief {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let b = Self { mean, precision };
        b.check()?;
        Ok(b)
    }

    pub fn from_prior(mean: DVector<f64>, eta: f64) -> Result<Self> {
        let p = mean.len();
        Self::new(mean, DMatrix::identity(p, p) * eta)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn check(&self) -> Result<()> {
        let p = self.mean.len();
        if self.precision.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                what: "dense precision",
                expected: p,
                found: self.precision.nrows(),
            });
        }
        let asym = (&self.precision - self.precision.transpose()).amax();
        let scale = self.precision.amax().max(1.0);
        if asym > 1e-10 * scale {
            return Err(Error::NotPositiveDefinite("dense precision is not symmetric"));
        }
        cholesky(self.precision.clone(), "dense precision")?;
        Ok(())
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(cholesky(self.precision.clone(), "dense precision")?.inverse())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let p = self.dim();
        let chol = cholesky(self.precision.clone(), "dense precision")?;
        let lt = chol.l().transpose();
        let mut rng = seeded(seed);
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let eps = standard_normal_vector(&mut rng, p);
            let z = lt
                .solve_upper_triangular(&eps)
                .ok_or(Error::NotPositiveDefinite("dense precision"))?;
            for j in 0..p {
                out[(i, j)] = self.mean[j] + z[j];
            }
        }
        Ok(out)
    }
}

/// `(D⁻¹ + W Wᵀ)⁻¹ rhs` where `inv_diag = D` holds the inverse diagonal
/// precision, via `D − D W (I + Wᵀ D W)⁻¹ Wᵀ D`.
pub(crate) fn woodbury_solve(
    inv_diag: &DVector<f64>,
    w: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut scaled_rhs = rhs.clone();
    for r in 0..rhs.nrows() {
        scaled_rhs.row_mut(r).scale_mut(inv_diag[r]);
    }
    if w.ncols() == 0 {
        return Ok(scaled_rhs);
    }
    let mut dw = w.clone();
    for r in 0..w.nrows() {
        dw.row_mut(r).scale_mut(inv_diag[r]);
    }
    let l = w.ncols();
    let core = DMatrix::<f64>::identity(l, l) + w.transpose() * &dw;
    let chol = cholesky(core, "Woodbury core")?;
    let inner = chol.solve(&(w.transpose() * &scaled_rhs));
    Ok(scaled_rhs - dw * inner)
}

fn write_floats<'a>(s: &mut String, key: &str, values: impl Iterator<Item = &'a f64>) {
    let _ = write!(s, "{key}");
    for v in values {
        let _ = write!(s, " {v:e}");
    }
    let _ = writeln!(s);
}

struct Record<'a> {
    lines: core::str::Lines<'a>,
}

impl<'a> Record<'a> {
    fn new(text: &'a str, magic: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim() == magic => Ok(Self { lines }),
            other => Err(Error::Codec(format!("expected header {magic:?}, found {other:?}"))),
        }
    }

    fn field(&mut self, key: &str) -> Result<core::str::SplitWhitespace<'a>> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| Error::Codec(format!("missing field {key}")))?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts),
            other => Err(Error::Codec(format!("expected field {key}, found {other:?}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let mut parts = self.field(key)?;
        parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Codec(format!("field {key} needs an integer")))
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let values: Vec<f64> = self
            .field(key)?
            .map(|v| v.parse::<f64>().map_err(|_| Error::Codec(format!("bad float {v:?} in {key}"))))
            .collect::<Result<_>>()?;
        if values.len() != n {
            return Err(Error::Codec(format!("field {key}: expected {n} values, found {}", values.len())));
        }
        Ok(values)
    }
}
