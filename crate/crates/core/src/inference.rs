//! Inclusion probabilities, selection rules, curve reconstruction and PSRF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::ChainOutput;
use crate::model::{CurveBasis, DesignCache, GxEDataset};
use crate::stats::{mean, median, quantile_sorted, sorted, variance};
use crate::variant::{Family, MethodVariant};

/// Posterior inclusion probability of every penalized block of one chain.
pub fn inclusion_probabilities(chain: &ChainOutput) -> Result<Vec<f64>> {
    let g = chain.n_draws();
    if g == 0 {
        return Err(Error::EmptyChain);
    }
    Ok(chain.indicators.iter().map(|ind| ind.iter().map(|&v| v as f64).sum::<f64>() / g as f64).collect())
}

/// Inclusion probabilities over all draws of all chains.
pub fn pooled_inclusion(chains: &[ChainOutput]) -> Result<Vec<f64>> {
    let first = chains.first().ok_or(Error::EmptyChain)?;
    let total: usize = chains.iter().map(|c| c.n_draws()).sum();
    if total == 0 {
        return Err(Error::EmptyChain);
    }
    let mut acc = vec![0.0; first.indicators.len()];
    for c in chains {
        for (a, ind) in acc.iter_mut().zip(&c.indicators) {
            *a += ind.iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    Ok(acc.into_iter().map(|s| s / total as f64).collect())
}

/// All retained draws of column `k`, chains concatenated.
pub fn pooled_column(chains: &[ChainOutput], k: usize) -> Vec<f64> {
    chains.iter().flat_map(|c| c.draws[k].iter().copied()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionRule {
    Mpm { threshold: f64 },
    Credible { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSelection {
    /// Zero-based gene index.
    pub gene: usize,
    /// Inclusion probabilities; `None` when the variant has no such block.
    pub p_constant: Option<f64>,
    pub p_varying: Option<f64>,
    pub p_e: Option<f64>,
    pub selected_constant: bool,
    pub selected_varying: bool,
    pub selected_e: bool,
    /// Posterior medians.
    pub gamma1: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub variant: MethodVariant,
    pub rule: SelectionRule,
    pub genes: Vec<GeneSelection>,
}

impl SelectionReport {
    pub fn selected(&self, family: Family) -> Vec<usize> {
        self.genes
            .iter()
            .filter(|g| match family {
                Family::Constant => g.selected_constant,
                Family::Varying => g.selected_varying,
                Family::LinearE => g.selected_e,
            })
            .map(|g| g.gene)
            .collect()
    }

    pub fn write_csv<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "gene",
            "p_constant",
            "p_varying",
            "p_e",
            "selected_constant",
            "selected_varying",
            "selected_e",
            "gamma1_median",
            "zeta_median",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for g in &self.genes {
            w.write_record([
                (g.gene + 1).to_string(),
                opt(g.p_constant),
                opt(g.p_varying),
                opt(g.p_e),
                (g.selected_constant as u8).to_string(),
                (g.selected_varying as u8).to_string(),
                (g.selected_e as u8).to_string(),
                format!("{}", g.gamma1),
                format!("{}", g.zeta),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_chains(chains: &[ChainOutput]) -> Result<&ChainOutput> {
    let first = chains.first().ok_or(Error::EmptyChain)?;
    if chains.iter().all(|c| c.n_draws() == 0) {
        return Err(Error::EmptyChain);
    }
    if chains.iter().any(|c| c.layout != first.layout) {
        return Err(Error::Diagnostic("chains have different layouts".into()));
    }
    Ok(first)
}

fn gene_medians(chains: &[ChainOutput], gene: usize) -> (f64, f64) {
    let l = &chains[0].layout;
    let gamma1 = match l.block(Family::Constant, gene).or_else(|| l.block(Family::Varying, gene)) {
        Some(b) => median(&pooled_column(chains, l.blocks[b].coef.start)),
        None => 0.0,
    };
    let zeta = match l.block(Family::LinearE, gene) {
        Some(b) => median(&pooled_column(chains, l.blocks[b].coef.start)),
        None => 0.0,
    };
    (gamma1, zeta)
}

fn n_genes(chain: &ChainOutput) -> usize {
    chain.layout.blocks.iter().map(|b| b.gene + 1).max().unwrap_or(0)
}

/// Median probability model: a block is selected when its inclusion probability is at least `threshold`.
pub fn mpm_select(chains: &[ChainOutput], threshold: f64) -> Result<SelectionReport> {
    let first = check_chains(chains)?;
    let probs = pooled_inclusion(chains)?;
    let l = &first.layout;
    let genes = (0..n_genes(first))
        .map(|j| {
            let p = |f| l.block(f, j).map(|b| probs[b]);
            let (pc, pv, pe) = (p(Family::Constant), p(Family::Varying), p(Family::LinearE));
            let sel = |v: Option<f64>| v.map(|x| x >= threshold).unwrap_or(false);
            let (gamma1, zeta) = gene_medians(chains, j);
            GeneSelection {
                gene: j,
                p_constant: pc,
                p_varying: pv,
                p_e: pe,
                selected_constant: sel(pc),
                selected_varying: sel(pv),
                selected_e: sel(pe),
                gamma1,
                zeta,
            }
        })
        .collect();
    Ok(SelectionReport { variant: first.variant, rule: SelectionRule::Mpm { threshold }, genes })
}

/// Equal-tailed interval of a sample.
pub fn credible_interval(x: &[f64], level: f64) -> (f64, f64) {
    let s = sorted(x);
    let a = (1.0 - level) / 2.0;
    (quantile_sorted(&s, a), quantile_sorted(&s, 1.0 - a))
}

fn excludes_zero(x: &[f64], level: f64) -> bool {
    let (lo, hi) = credible_interval(x, level);
    lo > 0.0 || hi < 0.0
}

/// Credible-interval rule: a block is selected when any of its coefficients'
/// equal-tailed intervals excludes zero.
pub fn ci_select(chains: &[ChainOutput], level: f64) -> Result<SelectionReport> {
    let first = check_chains(chains)?;
    let probs = pooled_inclusion(chains)?;
    let l = &first.layout;
    let genes = (0..n_genes(first))
        .map(|j| {
            let sel = |f| {
                l.block(f, j)
                    .map(|b| l.blocks[b].coef.clone().any(|k| excludes_zero(&pooled_column(chains, k), level)))
                    .unwrap_or(false)
            };
            let p = |f| l.block(f, j).map(|b| probs[b]);
            let (gamma1, zeta) = gene_medians(chains, j);
            GeneSelection {
                gene: j,
                p_constant: p(Family::Constant),
                p_varying: p(Family::Varying),
                p_e: p(Family::LinearE),
                selected_constant: sel(Family::Constant),
                selected_varying: sel(Family::Varying),
                selected_e: sel(Family::LinearE),
                gamma1,
                zeta,
            }
        })
        .collect();
    Ok(SelectionReport { variant: first.variant, rule: SelectionRule::Credible { level }, genes })
}

/// The variant's default rule: MPM at 1/2 for spike variants, 95% intervals otherwise.
pub fn select(chains: &[ChainOutput]) -> Result<SelectionReport> {
    let first = check_chains(chains)?;
    if first.variant.spike() {
        mpm_select(chains, 0.5)
    } else {
        ci_select(chains, 0.95)
    }
}

/// Posterior-median coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFit {
    pub variant: MethodVariant,
    pub basis: CurveBasis,
    pub eta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub zeta0: f64,
    pub gamma1: Vec<f64>,
    pub gamma_star: Vec<Vec<f64>>,
    pub zeta: Vec<f64>,
}

impl PointFit {
    pub fn from_chains(chains: &[ChainOutput], cache: &DesignCache) -> Result<Self> {
        let first = check_chains(chains)?;
        let l = &first.layout;
        let med = |k: usize| median(&pooled_column(chains, k));
        let p = cache.p();
        let lv = cache.basis.n_varying();
        let mut gamma1 = vec![0.0; p];
        let mut gamma_star = vec![vec![0.0; lv]; p];
        let mut zeta = vec![0.0; p];
        for bc in &l.blocks {
            let meds: Vec<f64> = bc.coef.clone().map(med).collect();
            match bc.family {
                Family::Constant => gamma1[bc.gene] = meds[0],
                Family::Varying if cache.variant.split() => gamma_star[bc.gene] = meds,
                Family::Varying => {
                    gamma1[bc.gene] = meds[0];
                    gamma_star[bc.gene] = meds[1..].to_vec();
                }
                Family::LinearE => zeta[bc.gene] = meds[0],
            }
        }
        Ok(PointFit {
            variant: first.variant,
            basis: cache.basis.clone(),
            eta: l.eta.clone().map(med).collect(),
            alpha: l.alpha.clone().map(med).collect(),
            zeta0: med(l.zeta0),
            gamma1,
            gamma_star,
            zeta,
        })
    }

    pub fn intercept(&self, z: f64) -> f64 {
        self.basis.eval(self.eta[0], &self.eta[1..], z)
    }

    pub fn beta(&self, j: usize, z: f64) -> f64 {
        self.basis.eval(self.gamma1[j], &self.gamma_star[j], z)
    }

    /// Predicted means; `z` outside the basis domain is clamped.
    pub fn predict(&self, data: &GxEDataset) -> Result<Vec<f64>> {
        if data.p() != self.gamma1.len() || data.q() != self.alpha.len() {
            return Err(Error::Dimension("test data dimensions differ from the fit".into()));
        }
        let (lo, hi) = self.basis.domain();
        let outside = data.z.iter().filter(|&&z| z < lo || z > hi).count();
        if outside > 0 {
            log::warn!("{outside} test values of z outside [{lo}, {hi}] clamped");
        }
        Ok((0..data.n())
            .map(|i| {
                let z = self.basis.clamp(data.z[i]);
                let bz = self.basis.varying(z);
                let f = |c: f64, v: &[f64]| c + bz.iter().zip(v).map(|(b, g)| b * g).sum::<f64>();
                let mut m = f(self.eta[0], &self.eta[1..]) + self.zeta0 * data.e[i];
                m += (0..data.q()).map(|t| self.alpha[t] * data.w[(i, t)]).sum::<f64>();
                for j in 0..data.p() {
                    let x = data.x[(i, j)];
                    if x != 0.0 {
                        m += x * (f(self.gamma1[j], &self.gamma_star[j]) + self.zeta[j] * data.e[i]);
                    }
                }
                m
            })
            .collect())
    }
}

/// Pointwise posterior summary of a coefficient function.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBand {
    pub z: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CurveBand {
    pub fn write_csv<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["z", "median", "lo95", "hi95"])?;
        for i in 0..self.z.len() {
            w.write_record([self.z[i], self.median[i], self.lo[i], self.hi[i]].map(|v| format!("{v}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Median and 95% band of `beta_j(z)` over the grid; `gene = None` gives the intercept function.
pub fn reconstruct_beta(
    chains: &[ChainOutput],
    cache: &DesignCache,
    gene: Option<usize>,
    grid: &[f64],
) -> Result<CurveBand> {
    let first = check_chains(chains)?;
    let l = &first.layout;
    // column indices of the constant coefficient and the varying part
    let (c_col, v_cols): (Option<usize>, Vec<usize>) = match gene {
        None => (Some(l.eta.start), (l.eta.start + 1..l.eta.end).collect()),
        Some(j) => {
            let v = l.block(Family::Varying, j).ok_or_else(|| Error::Identifier(format!("gene {}", j + 1)))?;
            let vc = l.blocks[v].coef.clone();
            if cache.variant.split() {
                (l.block(Family::Constant, j).map(|b| l.blocks[b].coef.start), vc.collect())
            } else {
                (Some(vc.start), (vc.start + 1..vc.end).collect())
            }
        }
    };
    let (lo, hi) = cache.basis.domain();
    if grid.iter().any(|&z| z < lo || z > hi) {
        log::warn!("curve grid extends outside [{lo}, {hi}]; values clamped");
    }
    let consts: Vec<f64> = c_col.map(|k| pooled_column(chains, k)).unwrap_or_default();
    let vars: Vec<Vec<f64>> = v_cols.iter().map(|&k| pooled_column(chains, k)).collect();
    let g = vars.first().map(|v| v.len()).unwrap_or(consts.len());
    let mut band = CurveBand { z: grid.to_vec(), median: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for &z in grid {
        let bz = cache.basis.varying(cache.basis.clamp(z));
        let vals: Vec<f64> = (0..g)
            .map(|d| {
                let c = if consts.is_empty() { 0.0 } else { consts[d] };
                c + bz.iter().zip(&vars).map(|(b, col)| b * col[d]).sum::<f64>()
            })
            .collect();
        let s = sorted(&vals);
        band.median.push(quantile_sorted(&s, 0.5));
        band.lo.push(quantile_sorted(&s, 0.025));
        band.hi.push(quantile_sorted(&s, 0.975));
    }
    Ok(band)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsrfReport {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub max: f64,
    pub converged: bool,
}

impl PsrfReport {
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (self.names[i].as_str(), v))
    }
}

/// Gelman-Rubin factor for one parameter from equal-length chains.
pub fn psrf_scalar(chains: &[&[f64]]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::Diagnostic(format!("PSRF needs at least 2 chains, got {m}")));
    }
    let g = chains[0].len();
    if g < 10 || chains.iter().any(|c| c.len() != g) {
        return Err(Error::Diagnostic("PSRF needs equal chain lengths of at least 10".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m as f64;
    let b_over_g = variance(&means);
    let gf = g as f64;
    if w == 0.0 {
        return Ok(if b_over_g == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((((gf - 1.0) / gf * w + b_over_g) / w).sqrt())
}

/// PSRF of the given columns.
pub fn psrf(chains: &[ChainOutput], columns: &[usize]) -> Result<PsrfReport> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic(format!("PSRF needs at least 2 chains, got {}", chains.len())));
    }
    let first = check_chains(chains)?;
    let mut values = Vec::with_capacity(columns.len());
    for &k in columns {
        let cols: Vec<&[f64]> = chains.iter().map(|c| c.draws[k].as_slice()).collect();
        values.push(psrf_scalar(&cols)?);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(PsrfReport {
        names: columns.iter().map(|&k| first.layout.names[k].clone()).collect(),
        converged: values.iter().all(|&v| v <= 1.1),
        values,
        max,
    })
}

/// Columns used for the convergence gate: the always-continuous parameters
/// plus the coefficients of blocks with pooled inclusion probability at least 1/2.
pub fn gated_columns(chains: &[ChainOutput]) -> Result<Vec<usize>> {
    let first = check_chains(chains)?;
    let probs = pooled_inclusion(chains)?;
    let mut cols = first.layout.always_continuous();
    for (b, bc) in first.layout.blocks.iter().enumerate() {
        if probs[b] >= 0.5 {
            cols.extend(bc.coef.clone());
        }
    }
    Ok(cols)
}

/// Fewest active draws per chain for a gated coefficient's PSRF to be defined.
pub const MIN_ACTIVE_DRAWS: usize = 10;

/// Convergence gate. Always-continuous parameters use their raw draws. The
/// coefficients of selected blocks use only the draws where the block is
/// active, since PSRF of a point-mass mixture is ill-posed; each chain keeps
/// its last `m` active draws, `m` the smallest count over chains. A chain with
/// fewer than `MIN_ACTIVE_DRAWS` active draws gives an infinite PSRF.
pub fn psrf_gate(chains: &[ChainOutput]) -> Result<PsrfReport> {
    let mut rep = psrf(chains, &chains.first().map(|c| c.layout.always_continuous()).unwrap_or_default())?;
    let first = &chains[0];
    let probs = pooled_inclusion(chains)?;
    for (b, bc) in first.layout.blocks.iter().enumerate() {
        if probs[b] < 0.5 {
            continue;
        }
        let active: Vec<Vec<usize>> =
            chains.iter().map(|c| (0..c.n_draws()).filter(|&g| c.indicators[b][g] == 1).collect()).collect();
        let m = active.iter().map(|a| a.len()).min().unwrap_or(0);
        for k in bc.coef.clone() {
            let v = if m < MIN_ACTIVE_DRAWS {
                f64::INFINITY
            } else {
                let cols: Vec<Vec<f64>> =
                    chains.iter().zip(&active).map(|(c, a)| a[a.len() - m..].iter().map(|&g| c.draws[k][g]).collect()).collect();
                psrf_scalar(&cols.iter().map(|c| c.as_slice()).collect::<Vec<_>>())?
            };
            rep.names.push(first.layout.names[k].clone());
            rep.values.push(v);
        }
    }
    rep.max = rep.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rep.converged = rep.values.iter().all(|&v| v <= 1.1);
    Ok(rep)
}
