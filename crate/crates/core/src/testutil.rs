//! Random instances and dense reference computations shared by unit tests.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::belief::{DlrBelief, SphericalBelief};
use crate::rng::{seeded, standard_normal_matrix, standard_normal_vector};

pub fn random_dlr(seed: u64, p: usize, l: usize) -> DlrBelief {
    let mut rng = seeded(seed);
    let mean = standard_normal_vector(&mut rng, p);
    let diag = standard_normal_vector(&mut rng, p).map(|z| 0.5 + z.abs());
    let w = standard_normal_matrix(&mut rng, p, l) * 0.7;
    DlrBelief::new(mean, diag, w).unwrap()
}

pub fn random_spherical(seed: u64, p: usize, l: usize) -> SphericalBelief {
    let mut rng = seeded(seed);
    let mean = standard_normal_vector(&mut rng, p);
    let eta = 0.5 + standard_normal_vector(&mut rng, 1)[0].abs();
    let q = standard_normal_matrix(&mut rng, p, l).qr().q();
    let mut lam: alloc::vec::Vec<f64> = standard_normal_vector(&mut rng, l).iter().map(|z| 0.2 + z.abs()).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    SphericalBelief::new(mean, eta, q, DVector::from_vec(lam)).unwrap()
}

/// `diag(Υ) + W Wᵀ` by direct multiplication.
pub fn dense_precision(b: &DlrBelief) -> DMatrix<f64> {
    DMatrix::from_diagonal(&b.diag_precision) + &b.low_rank * b.low_rank.transpose()
}

/// `η I + U Λ² Uᵀ` by direct multiplication.
pub fn dense_spherical_precision(b: &SphericalBelief) -> DMatrix<f64> {
    let p = b.dim();
    let lam2 = DMatrix::from_diagonal(&b.singular_values.map(|v| v * v));
    DMatrix::identity(p, p) * b.eta + &b.basis * lam2 * b.basis.transpose()
}
