//! Sampler correctness checks in the style of Geweke (2004).
//!
//! Two simulators target the same joint distribution of parameters and data:
//! the marginal-conditional one draws parameters from the prior and data from
//! the likelihood; the posterior ones apply Gibbs updates and then redraw the
//! data. Any parameter functional must have the prior marginal under both.
//!
//! * Single-update check: `theta ~ prior`, `y ~ p(y | theta)`, apply one
//!   conditional update. The updated component is an exact independent prior
//!   draw, so it is compared with fresh prior draws.
//! * Successive-conditional check: alternate full sweeps with redraws of `y`;
//!   thinned draws are compared with the exact prior CDFs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF, Gamma, InverseGamma, Normal};

use crate::dists::{std_normal, stream_id, RngStream, StreamKind};
use crate::error::{Error, Result};
use crate::gibbs::Sampler;
use crate::model::{assemble_mean, DesignCache, GxEDataset, Hyperparameters, ModelState};
use crate::splines::{SplineConfig, SplineSystem};
use crate::stats::{batch_means_t_test, ks_one_sample, ks_two_sample, two_sided_p, TestResult};
use crate::variant::{Family, MethodVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeSettings {
    pub n: usize,
    pub p: usize,
    pub degree: usize,
    pub interior_knots: usize,
    /// Independent replicates per single-update check.
    pub draws: usize,
    /// Retained draws of the successive-conditional chain.
    pub chain_draws: usize,
    pub thin: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for GewekeSettings {
    fn default() -> Self {
        GewekeSettings {
            n: 15,
            p: 3,
            degree: 2,
            interior_knots: 1,
            draws: 4000,
            chain_draws: 2000,
            thin: 100,
            seed: 7,
            alpha: 0.005,
        }
    }
}

/// Hyperparameters with finite prior moments everywhere, suited to the check.
pub fn geweke_hyperparameters() -> Hyperparameters {
    let mut h = Hyperparameters::default();
    h.set_gamma_all(5.0, 5.0);
    h.set_beta_all(2.0, 2.0);
    h.s = 5.0;
    h.h = 4.0;
    h.prior_var_eta = 1.0;
    h.prior_var_alpha = 1.0;
    h.prior_var_zeta0 = 1.0;
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeCheck {
    /// Conditional (or chain) the test belongs to.
    pub group: String,
    pub functional: String,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub variant: MethodVariant,
    pub alpha: f64,
    pub checks: Vec<GewekeCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupVerdict {
    pub group: String,
    pub tests: usize,
    pub min_p: f64,
    pub passed: bool,
}

impl GewekeReport {
    /// Per group, pass when every p-value clears the Bonferroni-adjusted level.
    pub fn verdicts(&self) -> Vec<GroupVerdict> {
        let mut groups: Vec<String> = Vec::new();
        for c in &self.checks {
            if !groups.contains(&c.group) {
                groups.push(c.group.clone());
            }
        }
        groups
            .into_iter()
            .map(|g| {
                let ps: Vec<f64> = self.checks.iter().filter(|c| c.group == g).map(|c| c.result.p_value).collect();
                let min_p = ps.iter().cloned().fold(1.0, f64::min);
                GroupVerdict { passed: min_p >= self.alpha / ps.len() as f64, tests: ps.len(), min_p, group: g }
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.verdicts().iter().all(|v| v.passed)
    }
}

/// Fixed covariates for the check: genotype-like X, uniform Z, binary E, two normal W.
pub fn geweke_design(settings: &GewekeSettings, variant: MethodVariant) -> Result<(GxEDataset, DesignCache)> {
    let mut rng = RngStream::new(settings.seed, stream_id(StreamKind::Aux, 0, 0));
    let (n, p) = (settings.n, settings.p);
    let data = GxEDataset::new(
        DVector::zeros(n),
        DMatrix::from_fn(n, p, |_, _| rng.gen_range(0..3) as f64),
        DVector::from_fn(n, |_, _| rng.gen::<f64>()),
        DVector::from_fn(n, |_, _| (rng.gen::<f64>() < 0.5) as u8 as f64),
        DMatrix::from_fn(n, 2, |_, _| std_normal(&mut rng)),
    )?;
    let spline = SplineSystem::new(SplineConfig::new(settings.degree, settings.interior_knots, 0.0, 1.0)?)?;
    let cache = DesignCache::assemble(&data, &spline, variant)?;
    Ok((data, cache))
}

fn draw_y<R: Rng + ?Sized>(st: &ModelState, cache: &DesignCache, rng: &mut R) -> DVector<f64> {
    let sd = st.sigma2.sqrt();
    assemble_mean(st, cache).map(|m| m + sd * std_normal(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Update {
    Eta,
    Alpha,
    Zeta0,
    Block(usize),
    Tau(usize),
    Lambda(Family),
    Pi(Family),
    Sigma2,
}

impl Update {
    fn apply<R: Rng + ?Sized>(self, s: &mut Sampler<'_>, rng: &mut R) -> Result<()> {
        match self {
            Update::Eta => s.update_eta(rng),
            Update::Alpha => s.update_alpha(rng),
            Update::Zeta0 => s.update_zeta0(rng),
            Update::Block(k) => s.update_block(k, rng),
            Update::Tau(k) => s.update_tau(k, rng),
            Update::Lambda(f) => s.update_lambda(f, rng),
            Update::Pi(f) => s.update_pi(f, rng),
            Update::Sigma2 => s.update_sigma2(rng),
        }
    }

    fn name(self, cache: &DesignCache) -> String {
        let blk = |k: usize| format!("{}[{}]", cache.blocks[k].family.tag(), cache.blocks[k].gene + 1);
        match self {
            Update::Eta => "eta".into(),
            Update::Alpha => "alpha".into(),
            Update::Zeta0 => "zeta0".into(),
            Update::Block(k) => format!("coef_{}", blk(k)),
            Update::Tau(k) => format!("tau2_{}", blk(k)),
            Update::Lambda(f) => format!("lambda2_{}", f.tag()),
            Update::Pi(f) => format!("pi_{}", f.tag()),
            Update::Sigma2 => "sigma2".into(),
        }
    }

    /// Named scalar functionals of the updated component.
    fn functionals(self, st: &ModelState) -> Vec<(String, f64)> {
        let vec_fns = |v: &DVector<f64>| {
            let mut out: Vec<(String, f64)> = v.iter().enumerate().map(|(i, &x)| (format!("[{}]", i + 1), x)).collect();
            if v.len() > 1 {
                out.push(("norm2".into(), v.norm_squared()));
            }
            out
        };
        match self {
            Update::Eta => vec_fns(&st.eta),
            Update::Alpha => vec_fns(&st.alpha),
            Update::Zeta0 => vec![("value".into(), st.zeta0)],
            Update::Block(k) => {
                let mut v = vec_fns(&st.coef[k]);
                v.push(("indicator".into(), st.phi[k] as u8 as f64));
                v
            }
            Update::Tau(k) => vec![("value".into(), st.tau2[k])],
            Update::Lambda(f) => vec![("value".into(), st.lambda2[f.index()])],
            Update::Pi(f) => vec![("value".into(), st.pi[f.index()])],
            Update::Sigma2 => vec![("value".into(), st.sigma2)],
        }
    }
}

fn all_updates(cache: &DesignCache) -> Vec<Update> {
    let mut u = vec![Update::Eta, Update::Alpha, Update::Zeta0];
    for k in 0..cache.blocks.len() {
        u.push(Update::Block(k));
        u.push(Update::Tau(k));
    }
    for &f in cache.variant.families() {
        u.push(Update::Lambda(f));
    }
    if cache.variant.spike() {
        for &f in cache.variant.families() {
            u.push(Update::Pi(f));
        }
    }
    u.push(Update::Sigma2);
    u
}

fn compare(group: &str, name: &str, updated: &[f64], fresh: &[f64]) -> GewekeCheck {
    let result = if name == "indicator" {
        // binary: compare frequencies
        let k = updated.iter().filter(|&&v| v == 1.0).count();
        let p0 = fresh.iter().filter(|&&v| v == 1.0).count() as f64 / fresh.len() as f64;
        let pooled = (k as f64 + p0 * fresh.len() as f64) / (updated.len() + fresh.len()) as f64;
        let se = (pooled * (1.0 - pooled) * (1.0 / updated.len() as f64 + 1.0 / fresh.len() as f64)).sqrt();
        let z = if se > 0.0 { (k as f64 / updated.len() as f64 - p0) / se } else { 0.0 };
        TestResult { statistic: z, p_value: two_sided_p(z) }
    } else {
        ks_two_sample(updated, fresh)
    };
    GewekeCheck { group: group.to_string(), functional: name.to_string(), result }
}

/// Run both checks for `variant`.
pub fn geweke_prior_check(
    variant: MethodVariant,
    hyper: &Hyperparameters,
    settings: &GewekeSettings,
) -> Result<GewekeReport> {
    if settings.draws < 10 || settings.chain_draws < 10 || settings.thin == 0 {
        return Err(Error::InvalidConfig("Geweke check needs at least 10 draws and thin >= 1".into()));
    }
    let (_, cache) = geweke_design(settings, variant)?;
    let mut checks = single_update_checks(&cache, hyper, settings)?;
    checks.extend(successive_checks(&cache, hyper, settings)?);
    Ok(GewekeReport { variant, alpha: settings.alpha, checks })
}

fn single_update_checks(
    cache: &DesignCache,
    hyper: &Hyperparameters,
    settings: &GewekeSettings,
) -> Result<Vec<GewekeCheck>> {
    let mut out = Vec::new();
    for (u_idx, upd) in all_updates(cache).into_iter().enumerate() {
        let mut rng = RngStream::new(settings.seed, stream_id(StreamKind::Aux, 1, u_idx as u64));
        let mut updated: Vec<Vec<f64>> = Vec::new();
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for _ in 0..settings.draws {
            let st = ModelState::draw_prior(cache, hyper, &mut rng)?;
            let y = draw_y(&st, cache, &mut rng);
            let mut s = Sampler::new(cache, hyper, y, st)?;
            upd.apply(&mut s, &mut rng)?;
            let a = upd.functionals(&s.state);
            let b = upd.functionals(&ModelState::draw_prior(cache, hyper, &mut rng)?);
            if names.is_empty() {
                names = a.iter().map(|(n, _)| n.clone()).collect();
                updated = vec![Vec::with_capacity(settings.draws); names.len()];
                fresh = vec![Vec::with_capacity(settings.draws); names.len()];
            }
            for (i, ((_, va), (_, vb))) in a.into_iter().zip(b).enumerate() {
                updated[i].push(va);
                fresh[i].push(vb);
            }
        }
        let group = upd.name(cache);
        for (i, name) in names.iter().enumerate() {
            out.push(compare(&group, name, &updated[i], &fresh[i]));
        }
    }
    Ok(out)
}

fn successive_checks(cache: &DesignCache, hyper: &Hyperparameters, settings: &GewekeSettings) -> Result<Vec<GewekeCheck>> {
    let mut rng = RngStream::new(settings.seed, stream_id(StreamKind::Aux, 2, 0));
    let st = ModelState::draw_prior(cache, hyper, &mut rng)?;
    let y = draw_y(&st, cache, &mut rng);
    let mut s = Sampler::new(cache, hyper, y, st)?;
    let fams = cache.variant.families();
    let mut lambda: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut pi: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut sigma2 = Vec::new();
    let mut eta1 = Vec::new();
    let mut zeta0 = Vec::new();
    let mut phi_frac: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for it in 0..settings.chain_draws * settings.thin {
        s.sweep(&mut rng)?;
        let y = draw_y(&s.state, cache, &mut rng);
        s.set_y(y);
        if (it + 1) % settings.thin == 0 {
            for &f in fams {
                lambda[f.index()].push(s.state.lambda2[f.index()]);
                pi[f.index()].push(s.state.pi[f.index()]);
            }
            for &f in fams {
                let ks: Vec<usize> = cache.family_blocks(f).collect();
                let on = ks.iter().filter(|&&k| s.state.phi[k]).count();
                phi_frac[f.index()].push(on as f64 / ks.len() as f64);
            }
            sigma2.push(s.state.sigma2);
            eta1.push(s.state.eta[0]);
            zeta0.push(s.state.zeta0);
        }
    }
    let group = "successive";
    let mut out = Vec::new();
    let mut push = |name: String, result: TestResult| out.push(GewekeCheck { group: group.into(), functional: name, result });
    for &f in fams {
        let (a, b) = hyper.gamma_prior(f);
        let g = Gamma::new(a, b).map_err(|e| Error::Parameter(e.to_string()))?;
        push(format!("lambda2_{}", f.tag()), ks_one_sample(&lambda[f.index()], |x| g.cdf(x)));
        if cache.variant.spike() {
            let (r, w) = hyper.beta_prior(f);
            let be = Beta::new(r, w).map_err(|e| Error::Parameter(e.to_string()))?;
            push(format!("pi_{}", f.tag()), ks_one_sample(&pi[f.index()], |x| be.cdf(x)));
            // mean active fraction is E[pi] = r / (r + w)
            push(format!("phi_{}", f.tag()), batch_means_t_test(&phi_frac[f.index()], r / (r + w), 10));
        }
    }
    let ig = InverseGamma::new(hyper.s, hyper.h).map_err(|e| Error::Parameter(e.to_string()))?;
    push("sigma2".into(), ks_one_sample(&sigma2, |x| ig.cdf(x)));
    let ne = Normal::new(0.0, hyper.prior_var_eta.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    push("eta[1]".into(), ks_one_sample(&eta1, |x| ne.cdf(x)));
    let nz = Normal::new(0.0, hyper.prior_var_zeta0.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    push("zeta0".into(), ks_one_sample(&zeta0, |x| nz.cdf(x)));
    Ok(out)
}
