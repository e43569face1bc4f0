use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dists::{sample_bernoulli, sample_beta, sample_gamma, sample_inverse_gamma, std_normal};
use crate::error::{BlockId, Error, Result};
use crate::model::{DesignCache, GxEDataset, Hyperparameters};
use crate::variant::Family;

/// All sampled parameters at one iteration.
///
/// Penalized coefficients, their latent scales and indicators are stored per
/// block, indexed like `DesignCache::blocks`. Family-level quantities are
/// indexed by `Family::index()`; entries for families a variant lacks are
/// left at their initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub eta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub zeta0: f64,
    pub coef: Vec<DVector<f64>>,
    pub tau2: Vec<f64>,
    pub phi: Vec<bool>,
    pub lambda2: [f64; 3],
    pub pi: [f64; 3],
    pub sigma2: f64,
}

impl ModelState {
    /// Starting point: all coefficients zero, unit scales, `pi = 1/2`.
    pub fn initial(cache: &DesignCache, sigma2: f64) -> Self {
        ModelState {
            eta: DVector::zeros(cache.b0.ncols()),
            alpha: DVector::zeros(cache.q()),
            zeta0: 0.0,
            coef: cache.blocks.iter().map(|b| DVector::zeros(b.dim())).collect(),
            tau2: vec![1.0; cache.blocks.len()],
            phi: vec![false; cache.blocks.len()],
            lambda2: [1.0; 3],
            pi: [if cache.variant.spike() { 0.5 } else { 1.0 }; 3],
            sigma2,
        }
    }

    /// Draw every parameter from the joint prior.
    pub fn draw_prior<R: Rng + ?Sized>(cache: &DesignCache, hyper: &Hyperparameters, rng: &mut R) -> Result<Self> {
        if hyper.improper_sigma() {
            return Err(Error::InvalidConfig("cannot draw from an improper sigma^2 prior".into()));
        }
        let spike = cache.variant.spike();
        let mut st = ModelState::initial(cache, 1.0);
        for &f in cache.variant.families() {
            let (a, b) = hyper.gamma_prior(f);
            st.lambda2[f.index()] = sample_gamma(a, b, rng)?;
            if spike {
                let (r, w) = hyper.beta_prior(f);
                st.pi[f.index()] = sample_beta(r, w, rng)?;
            }
        }
        st.sigma2 = sample_inverse_gamma(hyper.s, hyper.h, rng)?;
        let normal_vec = |len: usize, sd: f64, rng: &mut R| DVector::from_fn(len, |_, _| sd * std_normal(rng));
        st.eta = normal_vec(st.eta.len(), hyper.prior_var_eta.sqrt(), rng);
        st.alpha = normal_vec(st.alpha.len(), hyper.prior_var_alpha.sqrt(), rng);
        st.zeta0 = hyper.prior_var_zeta0.sqrt() * std_normal(rng);
        for (k, blk) in cache.blocks.iter().enumerate() {
            let f = blk.family.index();
            let d = blk.dim() as f64;
            st.tau2[k] = sample_gamma((d + 1.0) / 2.0, d * st.lambda2[f] / 2.0, rng)?;
            st.phi[k] = !spike || sample_bernoulli(st.pi[f], rng)?;
            if st.phi[k] {
                st.coef[k] = normal_vec(blk.dim(), (st.sigma2 * st.tau2[k]).sqrt(), rng);
            }
        }
        Ok(st)
    }

    /// Constant genetic effect of gene `j` (zero if the variant has no constant block).
    pub fn gamma1(&self, cache: &DesignCache, j: usize) -> f64 {
        match cache.block_index(Family::Constant, j) {
            Some(b) => self.coef[b][0],
            None => {
                let b = cache.block_index(Family::Varying, j).expect("varying block");
                self.coef[b][0]
            }
        }
    }

    /// Varying part of gene `j`'s coefficient function.
    pub fn gamma_star(&self, cache: &DesignCache, j: usize) -> DVector<f64> {
        let b = cache.block_index(Family::Varying, j).expect("varying block");
        if cache.variant.split() {
            self.coef[b].clone()
        } else {
            self.coef[b].rows(1, self.coef[b].len() - 1).into_owned()
        }
    }

    pub fn zeta(&self, cache: &DesignCache, j: usize) -> f64 {
        self.coef[cache.block_index(Family::LinearE, j).expect("E block")][0]
    }

    /// Indicator for `(family, gene)`; false when the variant has no such block.
    pub fn phi(&self, cache: &DesignCache, family: Family, j: usize) -> bool {
        cache.block_index(family, j).map(|b| self.phi[b]).unwrap_or(false)
    }

    /// `phi = 1` exactly when the block is nonzero, and all scales positive.
    pub fn check_consistency(&self) -> Result<()> {
        for (k, (c, &phi)) in self.coef.iter().zip(&self.phi).enumerate() {
            let nonzero = c.iter().any(|&v| v != 0.0);
            if nonzero != phi {
                return Err(Error::State(format!("block {k}: indicator {phi} but coefficients nonzero = {nonzero}")));
            }
        }
        let scales_ok = self.sigma2 > 0.0
            && self.tau2.iter().all(|&t| t > 0.0)
            && self.lambda2.iter().all(|&l| l > 0.0)
            && self.pi.iter().all(|&p| (0.0..=1.0).contains(&p));
        if !scales_ok {
            return Err(Error::State("scale parameter out of range".into()));
        }
        Ok(())
    }

    fn contribution(&self, block: &BlockId, cache: &DesignCache) -> Result<DVector<f64>> {
        Ok(match block {
            BlockId::Eta => &cache.b0 * &self.eta,
            BlockId::Alpha => &cache.w * &self.alpha,
            BlockId::Zeta0 => &cache.e * self.zeta0,
            BlockId::Penalized(k) => {
                let blk = cache.blocks.get(*k).ok_or_else(|| Error::Identifier(block.to_string()))?;
                &blk.design * &self.coef[*k]
            }
            BlockId::Other(s) => return Err(Error::Identifier(s.clone())),
        })
    }
}

/// Full model mean assembled from scratch.
pub fn assemble_mean(state: &ModelState, cache: &DesignCache) -> DVector<f64> {
    let mut mu = &cache.b0 * &state.eta;
    if cache.q() > 0 {
        mu += &cache.w * &state.alpha;
    }
    mu.axpy(state.zeta0, &cache.e, 1.0);
    for (blk, c) in cache.blocks.iter().zip(&state.coef) {
        if c.iter().any(|&v| v != 0.0) {
            mu.gemv(1.0, &blk.design, c, 1.0);
        }
    }
    mu
}

/// Gaussian log density of `y` given the state.
pub fn log_likelihood(state: &ModelState, data: &GxEDataset, cache: &DesignCache) -> Result<f64> {
    if !(state.sigma2 > 0.0) {
        return Err(Error::State(format!("sigma2 = {} must be positive", state.sigma2)));
    }
    let r = &data.y - assemble_mean(state, cache);
    let n = data.n() as f64;
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI * state.sigma2).ln() - r.norm_squared() / (2.0 * state.sigma2))
}

/// `r = y - mu`, maintained incrementally by the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r: DVector<f64>,
}

impl Residual {
    pub fn new(y: &DVector<f64>, state: &ModelState, cache: &DesignCache) -> Self {
        Residual { r: y - assemble_mean(state, cache) }
    }

    /// Partial residual with `block`'s current contribution added back.
    pub fn exclude(&self, block: &BlockId, state: &ModelState, cache: &DesignCache) -> Result<DVector<f64>> {
        Ok(&self.r + state.contribution(block, cache)?)
    }

    /// `r -= design * (new - old)`.
    pub fn apply_delta(&mut self, design: &DMatrix<f64>, old: &DVector<f64>, new: &DVector<f64>) {
        let delta = new - old;
        if delta.iter().any(|&v| v != 0.0) {
            self.r.gemv(-1.0, design, &delta, 1.0);
        }
    }

    pub fn resync(&mut self, y: &DVector<f64>, state: &ModelState, cache: &DesignCache) {
        self.r = y - assemble_mean(state, cache);
    }

    /// Largest absolute gap from a from-scratch recomputation.
    pub fn drift(&self, y: &DVector<f64>, state: &ModelState, cache: &DesignCache) -> f64 {
        (y - assemble_mean(state, cache) - &self.r).amax()
    }
}
