//! B-spline bases over the continuous environment factor.
//!
//! The raw basis is the standard clamped B-spline basis (partition of unity).
//! [`change_of_basis`] swaps the first raw column for a column of ones so that
//! a coefficient function splits into a constant part (first coefficient) and
//! a varying part (the remaining `q_n - 1` coefficients).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on raw-basis row sums accepted by [`change_of_basis`].
pub const ROW_SUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub degree: usize,
    pub interior_knots: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

impl SplineConfig {
    pub fn new(degree: usize, interior_knots: usize, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        let cfg = SplineConfig { degree, interior_knots, domain_lo, domain_hi };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of basis functions, `O + K + 1`.
    pub fn n_basis(&self) -> usize {
        self.degree + self.interior_knots + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain_lo.is_finite() && self.domain_hi.is_finite()) {
            return Err(Error::InvalidConfig("spline domain must be finite".into()));
        }
        if self.domain_lo >= self.domain_hi {
            return Err(Error::InvalidConfig(format!(
                "spline domain [{}, {}] is empty",
                self.domain_lo, self.domain_hi
            )));
        }
        if self.n_basis() < 2 {
            return Err(Error::InvalidConfig("need at least two basis functions (O + K >= 1)".into()));
        }
        Ok(())
    }
}

/// Clamped knot vector: boundary knots repeated `O + 1` times, `K` equally
/// spaced interior knots.
pub fn build_knot_vector(cfg: &SplineConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let order = cfg.degree + 1;
    let mut knots = Vec::with_capacity(2 * order + cfg.interior_knots);
    knots.extend(std::iter::repeat(cfg.domain_lo).take(order));
    let width = cfg.domain_hi - cfg.domain_lo;
    for k in 1..=cfg.interior_knots {
        knots.push(cfg.domain_lo + width * k as f64 / (cfg.interior_knots + 1) as f64);
    }
    knots.extend(std::iter::repeat(cfg.domain_hi).take(order));
    Ok(knots)
}

/// A validated spline configuration together with its knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSystem {
    cfg: SplineConfig,
    knots: Vec<f64>,
}

impl SplineSystem {
    pub fn new(cfg: SplineConfig) -> Result<Self> {
        let knots = build_knot_vector(&cfg)?;
        Ok(SplineSystem { cfg, knots })
    }

    /// Spline system whose domain is the observed range of `z`.
    pub fn fit_domain(degree: usize, interior_knots: usize, z: &[f64]) -> Result<Self> {
        let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(SplineConfig::new(degree, interior_knots, lo, hi)?)
    }

    pub fn config(&self) -> &SplineConfig {
        &self.cfg
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.cfg.n_basis()
    }

    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(self.cfg.domain_lo, self.cfg.domain_hi)
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.cfg.domain_lo && z <= self.cfg.domain_hi
    }

    /// Raw basis values at `z` (clamped to the domain) written into `out`.
    pub fn eval_into(&self, z: f64, out: &mut [f64]) {
        let deg = self.cfg.degree;
        let q = self.n_basis();
        debug_assert_eq!(out.len(), q);
        out.iter_mut().for_each(|v| *v = 0.0);
        let z = self.clamp(z);
        let t = &self.knots;

        // Knot span: t[span] <= z < t[span + 1], with the right boundary
        // assigned to the last non-empty span.
        let span = if z >= t[q] {
            q - 1
        } else {
            let mut lo = deg;
            let mut hi = q;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if z < t[mid] {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lo
        };

        // Cox-de Boor triangle for the deg + 1 non-zero functions.
        let mut n = vec![0.0; deg + 1];
        let mut left = vec![0.0; deg + 1];
        let mut right = vec![0.0; deg + 1];
        n[0] = 1.0;
        for j in 1..=deg {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (k, v) in n.into_iter().enumerate() {
            out[span - deg + k] = v;
        }
    }

    pub fn eval_raw_basis(&self, z: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis()];
        self.eval_into(z, &mut out);
        out
    }

    /// n x q_n matrix of raw basis values, one row per observation.
    pub fn raw_matrix(&self, z: &[f64]) -> DMatrix<f64> {
        let q = self.n_basis();
        let mut m = DMatrix::zeros(z.len(), q);
        let mut row = vec![0.0; q];
        for (i, &zi) in z.iter().enumerate() {
            self.eval_into(zi, &mut row);
            for k in 0..q {
                m[(i, k)] = row[k];
            }
        }
        m
    }

    /// Changed-basis block `(1, B_2(z), ..., B_q(z))` at each `z`.
    pub fn basis_block(&self, z: &[f64]) -> BasisBlock {
        change_of_basis(self.raw_matrix(z)).expect("raw B-spline rows sum to one")
    }

    /// Varying-part basis `(B_2(z), ..., B_q(z))` at a single point.
    pub fn varying_part(&self, z: f64) -> Vec<f64> {
        let mut v = self.eval_raw_basis(z);
        v.remove(0);
        v
    }
}

/// Design block with a leading column of ones followed by the varying-part
/// basis columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisBlock {
    columns: DMatrix<f64>,
}

impl BasisBlock {
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.columns
    }

    pub fn nrows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }
}

/// Replace the first raw column by ones. Rows of `raw` must sum to one, which
/// makes the two bases span the same space.
pub fn change_of_basis(raw: DMatrix<f64>) -> Result<BasisBlock> {
    if raw.ncols() < 2 {
        return Err(Error::BasisIntegrity(format!("need >= 2 basis columns, got {}", raw.ncols())));
    }
    for (i, row) in raw.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::BasisIntegrity(format!("row {i} sums to {s}")));
        }
    }
    let mut columns = raw;
    columns.column_mut(0).fill(1.0);
    Ok(BasisBlock { columns })
}

/// Row-wise product of the varying-part columns with a genetic factor:
/// entry `(i, k)` is `B_{k+1}(Z_i) * x_i`.
pub fn interaction_block(block: &BasisBlock, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = block.nrows();
    if x.len() != n {
        return Err(Error::Dimension(format!("x has length {}, basis has {n} rows", x.len())));
    }
    let l = block.ncols() - 1;
    let cols = block.columns();
    Ok(DMatrix::from_fn(n, l, |i, k| cols[(i, k + 1)] * x[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys(o: usize, k: usize) -> SplineSystem {
        SplineSystem::new(SplineConfig::new(o, k, 0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn knot_vectors() {
        let k = build_knot_vector(&SplineConfig::new(2, 2, 0.0, 1.0).unwrap()).unwrap();
        let expect = [0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0];
        assert_eq!(k.len(), expect.len());
        for (a, b) in k.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let cfg = SplineConfig::new(2, 0, 0.0, 1.0).unwrap();
        assert_eq!(build_knot_vector(&cfg).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(cfg.n_basis(), 3);
        let cfg = SplineConfig::new(3, 2, 0.0, 1.0).unwrap();
        assert_eq!(build_knot_vector(&cfg).unwrap().len(), 10);
        assert_eq!(cfg.n_basis(), 6);
    }

    #[test]
    fn empty_domain_rejected() {
        assert!(matches!(SplineConfig::new(2, 2, 1.0, 1.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(SplineConfig::new(2, 2, 2.0, 1.0), Err(Error::InvalidConfig(_))));
        assert!(SplineConfig::new(0, 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn clamped_boundary_values() {
        let s = sys(2, 2);
        assert_eq!(s.eval_raw_basis(0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.eval_raw_basis(1.0), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        // outside the domain clamps
        assert_eq!(s.eval_raw_basis(-3.0), s.eval_raw_basis(0.0));
        assert_eq!(s.eval_raw_basis(7.0), s.eval_raw_basis(1.0));
    }

    #[test]
    fn linear_hat_functions() {
        let v = sys(1, 0).eval_raw_basis(0.25);
        assert!((v[0] - 0.75).abs() < 1e-15 && (v[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadratic_matches_closed_form() {
        // O=2, K=0 is the Bernstein basis on [0,1].
        let s = sys(2, 0);
        for &z in &[0.1, 0.37, 0.5, 0.93] {
            let v = s.eval_raw_basis(z);
            let want = [(1.0 - z) * (1.0 - z), 2.0 * z * (1.0 - z), z * z];
            for k in 0..3 {
                assert!((v[k] - want[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (o, k) in [(1, 0), (2, 2), (3, 2), (2, 5), (3, 4)] {
            let s = sys(o, k);
            for _ in 0..1000 {
                let v = s.eval_raw_basis(rng.gen::<f64>());
                assert!(v.iter().all(|&b| b >= 0.0));
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn change_of_basis_definition() {
        let raw = DMatrix::from_row_slice(1, 3, &[0.2, 0.5, 0.3]);
        let b = change_of_basis(raw).unwrap();
        assert_eq!(b.columns().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.5, 0.3]);
        let bad = DMatrix::from_row_slice(1, 3, &[0.2, 0.5, 0.4]);
        assert!(matches!(change_of_basis(bad), Err(Error::BasisIntegrity(_))));
        assert!(change_of_basis(DMatrix::from_element(2, 1, 1.0)).is_err());
    }

    #[test]
    fn constants_live_in_first_column() {
        let s = sys(2, 2);
        let z: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let b = s.basis_block(&z);
        let c = 1.7;
        let coef = DVector::from_vec(vec![c, 0.0, 0.0, 0.0, 0.0]);
        let fit = b.columns() * coef;
        assert!(fit.iter().all(|&v| (v - c).abs() < 1e-15));
        assert!(b.columns().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn interaction_block_cases() {
        let s = sys(1, 0);
        let b = s.basis_block(&[0.25, 0.5]);
        let zero = interaction_block(&b, &DVector::zeros(2)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let ones = interaction_block(&b, &DVector::from_element(2, 1.0)).unwrap();
        assert_eq!(ones.column(0), b.columns().column(1));
        // hand case: B_2(z) = z for O=1, K=0
        let u = interaction_block(&b, &DVector::from_vec(vec![2.0, -3.0])).unwrap();
        assert_eq!(u.shape(), (2, 1));
        assert!((u[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((u[(1, 0)] + 1.5).abs() < 1e-15);
        assert!(matches!(interaction_block(&b, &DVector::zeros(3)), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn change_of_basis_preserves_span(
            o in 1usize..4, k in 0usize..5, seed in 0u64..1000,
        ) {
            let s = sys(o, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
            let raw = s.raw_matrix(&z);
            let block = change_of_basis(raw.clone()).unwrap();
            let coef = DVector::from_fn(s.n_basis(), |_, _| rng.gen_range(-3.0..3.0));
            let target = &raw * coef;
            // least-squares refit in the new basis
            let svd = block.columns().clone().svd(true, true);
            let refit = svd.solve(&target, 1e-12).unwrap();
            let resid = block.columns() * refit - target;
            prop_assert!(resid.amax() < 1e-10);
        }
    }
}
