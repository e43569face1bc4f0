use std::ops::Range;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{std_normal, stream_id, RngStream, StreamKind, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::gibbs::Sampler;
use crate::model::{DesignCache, GxEDataset, Hyperparameters, ModelState};
use crate::splines::SplineSystem;
use crate::variant::{Family, MethodVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Replicate index folded into the chain stream ids.
    pub replicate: u64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings { iterations: 10_000, burn_in: 5_000, thin: 1, seed: DEFAULT_SEED, n_chains: 3, replicate: 0 }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidConfig("need at least one chain".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Column positions of one penalized block in a chain's draw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockColumns {
    pub family: Family,
    pub gene: usize,
    pub coef: Range<usize>,
    pub tau2: usize,
}

/// Column layout of the draw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub eta: Range<usize>,
    pub alpha: Range<usize>,
    pub zeta0: usize,
    pub blocks: Vec<BlockColumns>,
    pub lambda2: [Option<usize>; 3],
    pub pi: [Option<usize>; 3],
    pub sigma2: usize,
    pub names: Vec<String>,
}

impl Layout {
    pub fn new(cache: &DesignCache) -> Self {
        let mut names = Vec::new();
        let push = |names: &mut Vec<String>, s: String| {
            names.push(s);
            names.len() - 1
        };
        let start = names.len();
        for k in 0..cache.b0.ncols() {
            push(&mut names, format!("eta[{}]", k + 1));
        }
        let eta = start..names.len();
        let start = names.len();
        for t in 0..cache.q() {
            push(&mut names, format!("alpha[{}]", t + 1));
        }
        let alpha = start..names.len();
        let zeta0 = push(&mut names, "zeta0".into());
        let split = cache.variant.split();
        let mut blocks: Vec<BlockColumns> = cache
            .blocks
            .iter()
            .map(|b| {
                let j = b.gene + 1;
                let start = names.len();
                match (b.family, split) {
                    (Family::Constant, _) => {
                        push(&mut names, format!("gamma1[{j}]"));
                    }
                    (Family::Varying, true) => {
                        for k in 0..b.dim() {
                            push(&mut names, format!("gamma_star[{j},{}]", k + 1));
                        }
                    }
                    (Family::Varying, false) => {
                        for k in 0..b.dim() {
                            push(&mut names, format!("gamma[{j},{}]", k + 1));
                        }
                    }
                    (Family::LinearE, _) => {
                        push(&mut names, format!("zeta[{j}]"));
                    }
                }
                BlockColumns { family: b.family, gene: b.gene, coef: start..names.len(), tau2: 0 }
            })
            .collect();
        for (b, blk) in blocks.iter_mut().zip(&cache.blocks) {
            b.tau2 = push(&mut names, format!("tau2_{}[{}]", blk.family.tag(), blk.gene + 1));
        }
        let mut lambda2 = [None; 3];
        let mut pi = [None; 3];
        for &f in cache.variant.families() {
            lambda2[f.index()] = Some(push(&mut names, format!("lambda2_{}", f.tag())));
        }
        if cache.variant.spike() {
            for &f in cache.variant.families() {
                pi[f.index()] = Some(push(&mut names, format!("pi_{}", f.tag())));
            }
        }
        let sigma2 = push(&mut names, "sigma2".into());
        Layout { eta, alpha, zeta0, blocks, lambda2, pi, sigma2, names }
    }

    pub fn n_columns(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn block(&self, family: Family, gene: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.family == family && b.gene == gene)
    }

    /// Continuous scalar parameters: everything except penalized coefficients and indicators.
    pub fn always_continuous(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.eta.clone().chain(self.alpha.clone()).collect();
        v.push(self.zeta0);
        v.extend(self.lambda2.iter().flatten());
        v.extend(self.pi.iter().flatten());
        v.push(self.sigma2);
        v
    }

    fn record(&self, st: &ModelState, cols: &mut [Vec<f64>], ind: &mut [Vec<u8>]) {
        for (c, k) in self.eta.clone().enumerate() {
            cols[k].push(st.eta[c]);
        }
        for (c, k) in self.alpha.clone().enumerate() {
            cols[k].push(st.alpha[c]);
        }
        cols[self.zeta0].push(st.zeta0);
        for (b, bc) in self.blocks.iter().enumerate() {
            for (c, k) in bc.coef.clone().enumerate() {
                cols[k].push(st.coef[b][c]);
            }
            cols[bc.tau2].push(st.tau2[b]);
            ind[b].push(st.phi[b] as u8);
        }
        for f in 0..3 {
            if let Some(k) = self.lambda2[f] {
                cols[k].push(st.lambda2[f]);
            }
            if let Some(k) = self.pi[f] {
                cols[k].push(st.pi[f]);
            }
        }
        cols[self.sigma2].push(st.sigma2);
    }
}

/// Retained draws of one chain, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub variant: MethodVariant,
    pub layout: Layout,
    pub draws: Vec<Vec<f64>>,
    /// Per penalized block, one indicator per retained draw.
    pub indicators: Vec<Vec<u8>>,
    /// Wall-clock seconds of every sweep, burn-in included.
    pub sweep_seconds: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.draws.first().map(|c| c.len()).unwrap_or(0)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.layout.index_of(name).map(|k| self.draws[k].as_slice())
    }

    pub fn total_seconds(&self) -> f64 {
        self.sweep_seconds.iter().sum()
    }

    /// Coefficient draws of penalized block `b` at retained draw `g`.
    pub fn block_draw(&self, b: usize, g: usize) -> Vec<f64> {
        self.layout.blocks[b].coef.clone().map(|k| self.draws[k][g]).collect()
    }

    /// Every retained draw has `phi = 1` exactly when its block is nonzero.
    pub fn check_indicator_consistency(&self) -> Result<()> {
        for (b, bc) in self.layout.blocks.iter().enumerate() {
            for g in 0..self.n_draws() {
                let nonzero = bc.coef.clone().any(|k| self.draws[k][g] != 0.0);
                if nonzero != (self.indicators[b][g] == 1) {
                    return Err(Error::State(format!("draw {g}, block {b}: indicator disagrees with coefficients")));
                }
            }
        }
        Ok(())
    }
}

/// Dispersed starting point for chain `c`.
fn starting_state(cache: &DesignCache, y: &DVector<f64>, rng: &mut RngStream) -> ModelState {
    let n = y.len() as f64;
    let mean = y.mean();
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).max(1e-8);
    let mut st = ModelState::initial(cache, var * (0.5 * std_normal(rng)).exp());
    for l in st.lambda2.iter_mut() {
        *l = (0.5 * std_normal(rng)).exp();
    }
    st
}

/// Run one chain on a prebuilt design with the given stream.
pub fn run_chain_on(
    cache: &DesignCache,
    y: &DVector<f64>,
    hyper: &Hyperparameters,
    settings: &ChainSettings,
    chain: usize,
) -> Result<ChainOutput> {
    settings.validate()?;
    let sid = stream_id(StreamKind::Chain, settings.replicate, chain as u64);
    let mut rng = RngStream::new(settings.seed, sid);
    let init = starting_state(cache, y, &mut rng);
    let mut sampler = Sampler::new(cache, hyper, y.clone(), init)?;
    let layout = Layout::new(cache);
    let keep = settings.retained();
    let mut draws: Vec<Vec<f64>> = (0..layout.n_columns()).map(|_| Vec::with_capacity(keep)).collect();
    let mut indicators: Vec<Vec<u8>> = (0..cache.blocks.len()).map(|_| Vec::with_capacity(keep)).collect();
    let mut sweep_seconds = Vec::with_capacity(settings.iterations);
    for it in 0..settings.iterations {
        let t0 = Instant::now();
        sampler.sweep(&mut rng)?;
        sweep_seconds.push(t0.elapsed().as_secs_f64());
        if it >= settings.burn_in && (it - settings.burn_in + 1) % settings.thin == 0 && draws[0].len() < keep {
            layout.record(&sampler.state, &mut draws, &mut indicators);
        }
    }
    Ok(ChainOutput {
        variant: cache.variant,
        layout,
        draws,
        indicators,
        sweep_seconds,
        seed: settings.seed,
        stream_id: sid,
    })
}

/// `settings.n_chains` independent chains, run in parallel; output ordered by chain index.
pub fn run_chains_on(
    cache: &DesignCache,
    y: &DVector<f64>,
    hyper: &Hyperparameters,
    settings: &ChainSettings,
) -> Result<Vec<ChainOutput>> {
    settings.validate()?;
    (0..settings.n_chains).into_par_iter().map(|c| run_chain_on(cache, y, hyper, settings, c)).collect()
}

/// Build the design for `variant` and run the first chain.
pub fn run_chain(
    variant: MethodVariant,
    data: &GxEDataset,
    spline: &SplineSystem,
    hyper: &Hyperparameters,
    settings: &ChainSettings,
) -> Result<ChainOutput> {
    let cache = DesignCache::assemble(data, spline, variant)?;
    run_chain_on(&cache, &data.y, hyper, settings, 0)
}

pub fn run_chains(
    variant: MethodVariant,
    data: &GxEDataset,
    spline: &SplineSystem,
    hyper: &Hyperparameters,
    settings: &ChainSettings,
) -> Result<Vec<ChainOutput>> {
    let cache = DesignCache::assemble(data, spline, variant)?;
    run_chains_on(&cache, &data.y, hyper, settings)
}
