//! Seedable random streams and the distributions the Gibbs sampler draws from.
//!
//! Parameterizations: `Gamma(shape, rate)` has mean `shape / rate`;
//! `InverseGamma(shape, scale)` has mean `scale / (shape - 1)`;
//! `InverseGaussian(mu, lambda)` has mean `mu` and shape `lambda`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{BlockId, Error, Result};

/// Default master seed used when none is supplied.
pub const DEFAULT_SEED: u64 = 20_190_527;

/// Independent random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids give non-overlapping keystreams for one seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Purposes that get their own sub-streams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Data = 1,
    TestData = 2,
    Chain = 3,
    Aux = 4,
}

/// Stream id for `(kind, replicate, slot)`; `slot` is the chain index for
/// chains and free for other purposes.
pub fn stream_id(kind: StreamKind, replicate: u64, slot: u64) -> u64 {
    ((kind as u64) << 56) | ((replicate & 0xFF_FFFF_FFFF) << 16) | (slot & 0xFFFF)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MvnMode {
    Covariance,
    Precision,
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    mean + sd * std_normal(rng)
}

pub fn cholesky(m: DMatrix<f64>, block: BlockId) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::degenerate(block))
}

/// Draw from `N(mean, Sigma)` where `matrix` is either `Sigma` or its inverse.
/// Precision mode uses a triangular solve against the Cholesky factor.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    matrix: &DMatrix<f64>,
    mode: MvnMode,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = mean.len();
    if matrix.shape() != (d, d) {
        return Err(Error::Dimension(format!("mvn: {}x{} matrix for mean of length {d}", matrix.nrows(), matrix.ncols())));
    }
    let chol = cholesky(matrix.clone(), BlockId::Other("mvn".into()))?;
    let z = DVector::from_fn(d, |_, _| std_normal(rng));
    let noise = match mode {
        MvnMode::Covariance => chol.l() * z,
        MvnMode::Precision => {
            let mut z = z;
            // L^T x = z  =>  Cov(x) = (L L^T)^{-1}
            chol.l_dirty().tr_solve_lower_triangular_mut(&mut z);
            z
        }
    };
    Ok(mean + noise)
}

/// Inverse-Gaussian draw by transformation with one rejection step
/// (Michael, Schucany and Haas).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("inverse-gaussian(mu={mu}, lambda={lambda})")));
    }
    let v = std_normal(rng);
    let y = v * v;
    // x = mu + mu^2 y / (2 lambda) - mu/(2 lambda) sqrt(4 mu lambda y + mu^2 y^2),
    // rewritten as mu / (1 + t + sqrt(t (2 + t))) with t = mu y / (2 lambda)
    // to avoid cancellation when mu y >> lambda.
    let t = mu * y / (2.0 * lambda);
    let x = mu / (1.0 + t + (t * (2.0 + t)).sqrt());
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        Ok(x)
    } else {
        Ok(mu * mu / x)
    }
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Parameter(format!("gamma(shape={shape}, rate={rate})")));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
    // Tiny shapes can underflow to exactly zero; nudge to the smallest positive value.
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Parameter(format!("inverse-gamma(shape={shape}, scale={scale})")));
    }
    Ok(scale / sample_gamma(shape, 1.0, rng)?)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
        return Err(Error::Parameter(format!("beta({a}, {b})")));
    }
    let d = Beta::new(a, b).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(d.sample(rng))
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("bernoulli({p})")));
    }
    Ok(rng.gen::<f64>() < p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(stream_id(StreamKind::Data, 1, 0), stream_id(StreamKind::Chain, 1, 0));
        assert_ne!(stream_id(StreamKind::Chain, 1, 0), stream_id(StreamKind::Chain, 1, 1));
    }

    #[test]
    fn mvn_identity_mean() {
        let mut rng = RngStream::new(1, 0);
        let n = 100_000;
        let mean = DVector::zeros(2);
        let eye = DMatrix::identity(2, 2);
        let mut acc = DVector::zeros(2);
        for _ in 0..n {
            acc += sample_mvn(&mean, &eye, MvnMode::Covariance, &mut rng).unwrap();
        }
        acc /= n as f64;
        assert!(acc.amax() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn mvn_diagonal_variances_both_modes() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let prec = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0 / 9.0]));
        for (m, mode) in [(&cov, MvnMode::Covariance), (&prec, MvnMode::Precision)] {
            let mut rng = RngStream::new(2, 0);
            let draws: Vec<DVector<f64>> =
                (0..100_000).map(|_| sample_mvn(&DVector::zeros(2), m, mode, &mut rng).unwrap()).collect();
            let (_, v0) = mean_var(&draws.iter().map(|d| d[0]).collect::<Vec<_>>());
            let (_, v1) = mean_var(&draws.iter().map(|d| d[1]).collect::<Vec<_>>());
            assert!((v0 / 4.0 - 1.0).abs() < 0.02, "{v0}");
            assert!((v1 / 9.0 - 1.0).abs() < 0.02, "{v1}");
        }
    }

    #[test]
    fn mvn_precision_mode_inverts_correlated_matrix() {
        // covariance of the draws should be the inverse of the precision
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let cov = prec.clone().try_inverse().unwrap();
        let mut rng = RngStream::new(3, 0);
        let n = 200_000;
        let mut s = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = sample_mvn(&DVector::zeros(2), &prec, MvnMode::Precision, &mut rng).unwrap();
            s += &x * x.transpose();
        }
        s /= n as f64;
        assert!((s - cov).amax() < 0.02);
    }

    #[test]
    fn mvn_fixed_seed_is_reproducible() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let draw = |seed| {
            let mut rng = RngStream::new(seed, 0);
            (0..5).map(|_| sample_mvn(&DVector::zeros(2), &m, MvnMode::Precision, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn mvn_rejects_non_spd() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut rng = RngStream::new(0, 0);
        let err = sample_mvn(&DVector::zeros(2), &bad, MvnMode::Covariance, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
    }

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = RngStream::new(4, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_inverse_gaussian(1.0, 1.0, &mut rng).unwrap()).collect();
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.005);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_inverse_gaussian(2.0, 3.0, &mut rng).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 2.0).abs() < 0.01);
        assert!((v / (8.0 / 3.0) - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn inverse_gaussian_degenerate_limit() {
        let mut rng = RngStream::new(5, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_inverse_gaussian(1.0, 1e8, &mut rng).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 1.0).abs() < 1e-3);
        assert!(v.sqrt() < 1e-3);
        assert!(sample_inverse_gaussian(0.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gaussian(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn inverse_gaussian_huge_mean_stays_positive() {
        let mut rng = RngStream::new(6, 0);
        for _ in 0..10_000 {
            let x = sample_inverse_gaussian(1e12, 1e-3, &mut rng).unwrap();
            assert!(x > 0.0 && x.is_finite());
        }
    }

    #[test]
    fn gamma_and_inverse_gamma_means() {
        let mut rng = RngStream::new(7, 0);
        let g: Vec<f64> = (0..1_000_000).map(|_| sample_gamma(2.0, 4.0, &mut rng).unwrap()).collect();
        assert!((mean_var(&g).0 / 0.5 - 1.0).abs() < 0.01);
        let ig: Vec<f64> = (0..1_000_000).map(|_| sample_inverse_gamma(3.0, 2.0, &mut rng).unwrap()).collect();
        assert!((mean_var(&ig).0 - 1.0).abs() < 0.01);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, 0.0, &mut rng).is_err());
        assert!(sample_beta(1.0, -1.0, &mut rng).is_err());
        assert!(sample_bernoulli(1.5, &mut rng).is_err());
    }

    #[test]
    fn beta_one_one_is_uniform_ks() {
        let mut rng = RngStream::new(8, 0);
        let mut xs: Vec<f64> = (0..20_000).map(|_| sample_beta(1.0, 1.0, &mut rng).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i as f64 + 1.0) / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        // Kolmogorov critical value at alpha = 0.01
        assert!(d * n.sqrt() < 1.628, "D = {d}");
    }

    #[test]
    fn bernoulli_edges() {
        let mut rng = RngStream::new(9, 0);
        assert!((0..1000).all(|_| !sample_bernoulli(0.0, &mut rng).unwrap()));
        assert!((0..1000).all(|_| sample_bernoulli(1.0, &mut rng).unwrap()));
    }
}
