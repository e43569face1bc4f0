use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::dists::{
    cholesky, sample_beta, sample_gamma, sample_inverse_gamma, sample_inverse_gaussian, std_normal,
};
use crate::error::{BlockId, Error, Result};
use crate::model::{DesignCache, Hyperparameters, ModelState, Residual};
use crate::variant::Family;

/// Sweeps between full recomputations of the residual.
pub const RESYNC_EVERY: usize = 500;

/// Full conditional of one penalized block given everything else.
///
/// Slab: `N(mean, sigma^2 P^{-1})` with `P = D'D + I / tau^2`.
#[derive(Debug, Clone)]
pub struct BlockConditional {
    pub mean: DVector<f64>,
    pub precision: Cholesky<f64, Dyn>,
    /// Log odds of the slab against the spike; `+inf` without a spike.
    pub log_odds: f64,
}

impl BlockConditional {
    pub fn slab_probability(&self) -> f64 {
        sigmoid(self.log_odds)
    }

    /// `sigma^2 P^{-1}`.
    pub fn covariance(&self, sigma2: f64) -> DMatrix<f64> {
        self.precision.inverse() * sigma2
    }

    /// `ln |P^{-1}|^{-1/2}`, i.e. the sum of log diagonal entries of the factor.
    pub fn half_log_det_precision(&self) -> f64 {
        self.precision.l_dirty().diagonal().iter().map(|v| v.ln()).sum()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One chain's mutable state plus the shared design. Owns `y` so the
/// successive-conditional test can redraw it.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    pub cache: &'a DesignCache,
    pub hyper: &'a Hyperparameters,
    pub y: DVector<f64>,
    pub state: ModelState,
    pub resid: Residual,
    sweeps: usize,
    /// Update π for spike variants (switched off only in tests).
    pub update_pi: bool,
}

impl<'a> Sampler<'a> {
    pub fn new(cache: &'a DesignCache, hyper: &'a Hyperparameters, y: DVector<f64>, state: ModelState) -> Result<Self> {
        hyper.validate()?;
        if y.len() != cache.n() {
            return Err(Error::Dimension(format!("y has {} rows, design has {}", y.len(), cache.n())));
        }
        let resid = Residual::new(&y, &state, cache);
        Ok(Sampler { cache, hyper, y, state, resid, sweeps: 0, update_pi: true })
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Replace the response; the residual is recomputed.
    pub fn set_y(&mut self, y: DVector<f64>) {
        self.y = y;
        self.resid.resync(&self.y, &self.state, self.cache);
    }

    /// One full sweep in the fixed order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let s = self.sweeps;
        self.sweep_inner(rng).map_err(|e| e.at_sweep(s))?;
        self.sweeps += 1;
        if self.sweeps % RESYNC_EVERY == 0 {
            self.resid.resync(&self.y, &self.state, self.cache);
        }
        Ok(())
    }

    fn sweep_inner<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.update_eta(rng)?;
        self.update_alpha(rng)?;
        self.update_zeta0(rng)?;
        for j in 0..self.cache.p() {
            let blocks: [Option<usize>; 3] = Family::ALL.map(|f| self.cache.block_index(f, j));
            for k in blocks.iter().flatten() {
                self.update_block(*k, rng)?;
            }
            for k in blocks.iter().flatten() {
                self.update_tau(*k, rng)?;
            }
        }
        let fams = self.cache.variant.families();
        for &f in fams {
            self.update_lambda(f, rng)?;
        }
        if self.cache.variant.spike() && self.update_pi {
            for &f in fams {
                self.update_pi(f, rng)?;
            }
        }
        self.update_sigma2(rng)
    }

    /// Conditional of an unpenalized block with prior `N(0, v I)`:
    /// `N(P^{-1} b, P^{-1})` with `P = I / v + G / sigma^2`, `b = D' r~ / sigma^2`.
    fn fixed_conditional(
        &self,
        design: &DMatrix<f64>,
        gram: &DMatrix<f64>,
        old: &DVector<f64>,
        prior_var: f64,
        id: BlockId,
    ) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
        let s2 = self.state.sigma2;
        let b = (design.tr_mul(&self.resid.r) + gram * old) / s2;
        let mut p = gram / s2;
        for i in 0..p.nrows() {
            p[(i, i)] += 1.0 / prior_var;
        }
        let chol = cholesky(p, id)?;
        let mean = chol.solve(&b);
        Ok((mean, chol))
    }

    fn draw_fixed<R: Rng + ?Sized>(
        &self,
        design: &DMatrix<f64>,
        gram: &DMatrix<f64>,
        old: &DVector<f64>,
        prior_var: f64,
        id: BlockId,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let (mean, chol) = self.fixed_conditional(design, gram, old, prior_var, id.clone())?;
        let mut z = DVector::from_fn(mean.len(), |_, _| std_normal(rng));
        chol.l_dirty().tr_solve_lower_triangular_mut(&mut z);
        let draw = mean + z;
        if draw.iter().all(|v| v.is_finite()) {
            Ok(draw)
        } else {
            Err(Error::degenerate(id))
        }
    }

    /// Mean and covariance of the `eta` conditional.
    pub fn eta_conditional(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.cache;
        let (mean, chol) = self.fixed_conditional(&c.b0, &c.b0_gram, &self.state.eta, self.hyper.prior_var_eta, BlockId::Eta)?;
        Ok((mean, chol.inverse()))
    }

    pub fn update_eta<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let c = self.cache;
        let new = self.draw_fixed(&c.b0, &c.b0_gram, &self.state.eta, self.hyper.prior_var_eta, BlockId::Eta, rng)?;
        self.resid.apply_delta(&c.b0, &self.state.eta, &new);
        self.state.eta = new;
        Ok(())
    }

    pub fn update_alpha<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let c = self.cache;
        if c.q() == 0 {
            return Ok(());
        }
        let new = self.draw_fixed(&c.w, &c.w_gram, &self.state.alpha, self.hyper.prior_var_alpha, BlockId::Alpha, rng)?;
        self.resid.apply_delta(&c.w, &self.state.alpha, &new);
        self.state.alpha = new;
        Ok(())
    }

    pub fn update_zeta0<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let c = self.cache;
        let s2 = self.state.sigma2;
        let old = self.state.zeta0;
        let b = (c.e.dot(&self.resid.r) + c.e_sq * old) / s2;
        let prec = 1.0 / self.hyper.prior_var_zeta0 + c.e_sq / s2;
        let new = b / prec + std_normal(rng) / prec.sqrt();
        if !new.is_finite() {
            return Err(Error::degenerate(BlockId::Zeta0));
        }
        self.resid.r.axpy(old - new, &c.e, 1.0);
        self.state.zeta0 = new;
        Ok(())
    }

    /// Conditional of penalized block `k` at the current state.
    pub fn block_conditional(&self, k: usize) -> Result<BlockConditional> {
        let blk = self.cache.blocks.get(k).ok_or_else(|| Error::Identifier(format!("penalized block {k}")))?;
        let old = &self.state.coef[k];
        let tau2 = self.state.tau2[k];
        let s2 = self.state.sigma2;
        let d = blk.dim();
        // D' r~ with r~ the residual excluding this block
        let mut b = blk.design.tr_mul(&self.resid.r);
        if self.state.phi[k] || old.iter().any(|&v| v != 0.0) {
            b.gemv(1.0, &blk.gram, old, 1.0);
        }
        let mut p = blk.gram.clone();
        for i in 0..d {
            p[(i, i)] += 1.0 / tau2;
        }
        let chol = cholesky(p, BlockId::Penalized(k))?;
        let mean = chol.solve(&b);
        let log_odds = if self.cache.variant.spike() {
            let pi = self.state.pi[blk.family.index()];
            let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
            let quad = b.dot(&mean);
            pi.ln() - (-pi).ln_1p() - 0.5 * d as f64 * tau2.ln() - half_log_det + quad / (2.0 * s2)
        } else {
            f64::INFINITY
        };
        if log_odds.is_nan() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::degenerate(BlockId::Penalized(k)));
        }
        Ok(BlockConditional { mean, precision: chol, log_odds })
    }

    pub fn update_block<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<()> {
        let cond = self.block_conditional(k)?;
        let slab = if self.cache.variant.spike() { rng.gen::<f64>() < cond.slab_probability() } else { true };
        let new = if slab {
            let mut z = DVector::from_fn(cond.mean.len(), |_, _| std_normal(rng));
            cond.precision.l_dirty().tr_solve_lower_triangular_mut(&mut z);
            let draw = &cond.mean + z * self.state.sigma2.sqrt();
            if draw.iter().any(|v| !v.is_finite()) {
                return Err(Error::degenerate(BlockId::Penalized(k)));
            }
            draw
        } else {
            DVector::zeros(cond.mean.len())
        };
        let blk = &self.cache.blocks[k];
        self.resid.apply_delta(&blk.design, &self.state.coef[k], &new);
        // a continuous draw is exactly zero with probability zero; keep the
        // indicator faithful to the stored value regardless
        self.state.phi[k] = new.iter().any(|&v| v != 0.0);
        self.state.coef[k] = new;
        Ok(())
    }

    /// Latent scale of block `k`.
    pub fn update_tau<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<()> {
        let blk = &self.cache.blocks[k];
        let d = blk.dim() as f64;
        let lambda2 = self.state.lambda2[blk.family.index()];
        let tau2 = if self.state.phi[k] {
            let norm2 = self.state.coef[k].norm_squared();
            let mu = (d * lambda2 * self.state.sigma2 / norm2).sqrt();
            1.0 / sample_inverse_gaussian(mu, d * lambda2, rng)?
        } else {
            sample_gamma((d + 1.0) / 2.0, d * lambda2 / 2.0, rng)?
        };
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::degenerate(BlockId::Other(format!("tau2 of penalized block {k}"))));
        }
        self.state.tau2[k] = tau2;
        Ok(())
    }

    pub fn update_lambda<R: Rng + ?Sized>(&mut self, f: Family, rng: &mut R) -> Result<()> {
        let (a, b) = self.hyper.gamma_prior(f);
        let (mut shape, mut rate) = (a, b);
        for k in self.cache.family_blocks(f) {
            let d = self.cache.blocks[k].dim() as f64;
            shape += (d + 1.0) / 2.0;
            rate += d * self.state.tau2[k] / 2.0;
        }
        self.state.lambda2[f.index()] = sample_gamma(shape, rate, rng)?;
        Ok(())
    }

    pub fn update_pi<R: Rng + ?Sized>(&mut self, f: Family, rng: &mut R) -> Result<()> {
        let (r, w) = self.hyper.beta_prior(f);
        let (mut on, mut off) = (0.0, 0.0);
        for k in self.cache.family_blocks(f) {
            if self.state.phi[k] {
                on += 1.0;
            } else {
                off += 1.0;
            }
        }
        self.state.pi[f.index()] = sample_beta(r + on, w + off, rng)?;
        Ok(())
    }

    pub fn update_sigma2<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (shape, scale) = self.sigma2_conditional();
        let s2 = sample_inverse_gamma(shape, scale, rng)?;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::degenerate(BlockId::Other("sigma2".into())));
        }
        self.state.sigma2 = s2;
        Ok(())
    }

    /// `(shape, scale)` of the Inverse-Gamma conditional of `sigma^2`.
    pub fn sigma2_conditional(&self) -> (f64, f64) {
        let mut shape = self.hyper.s + self.cache.n() as f64 / 2.0;
        let mut scale = self.hyper.h + self.resid.r.norm_squared() / 2.0;
        for (k, blk) in self.cache.blocks.iter().enumerate() {
            if self.state.phi[k] {
                shape += blk.dim() as f64 / 2.0;
                scale += self.state.coef[k].norm_squared() / (2.0 * self.state.tau2[k]);
            }
        }
        (shape, scale)
    }
}
