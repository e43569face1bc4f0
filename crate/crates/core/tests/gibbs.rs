use gxe_core::dists::{std_normal, RngStream};
use gxe_core::gibbs::geweke::{geweke_hyperparameters, GewekeSettings};
use gxe_core::gibbs::{
    geweke_prior_check, run_chain, run_chain_on, sigmoid, ChainSettings, Sampler, RESYNC_EVERY,
};
use gxe_core::model::assemble_mean;
use gxe_core::{DesignCache, Family, GxEDataset, Hyperparameters, MethodVariant, ModelState, SplineConfig, SplineSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn dataset(n: usize, p: usize, seed: u64) -> GxEDataset {
    let mut rng = RngStream::new(seed, 99);
    let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(0..3) as f64);
    let z = DVector::from_fn(n, |_, _| rng.gen::<f64>());
    let e = DVector::from_fn(n, |_, _| (rng.gen::<f64>() < 0.5) as u8 as f64);
    let w = DMatrix::from_fn(n, 2, |_, _| std_normal(&mut rng));
    let y = DVector::from_fn(n, |i, _| x[(i, 0)] * (1.0 + z[i]) + 0.5 * e[i] + std_normal(&mut rng));
    GxEDataset::new(y, x, z, e, w).unwrap()
}

fn spline(degree: usize, knots: usize) -> SplineSystem {
    SplineSystem::new(SplineConfig::new(degree, knots, 0.0, 1.0).unwrap()).unwrap()
}

fn state_with(cache: &DesignCache, f: impl FnOnce(&mut ModelState)) -> ModelState {
    let mut st = ModelState::initial(cache, 1.0);
    f(&mut st);
    st
}

#[test]
fn eta_flat_prior_limit_is_least_squares() {
    let data = dataset(20, 2, 1);
    let cache = DesignCache::assemble(&data, &spline(2, 1), MethodVariant::BssvcSi).unwrap();
    let mut hyper = Hyperparameters::default();
    hyper.prior_var_eta = 1e12;
    let st = state_with(&cache, |s| s.sigma2 = 1.0);
    let s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let (mean, _) = s.eta_conditional().unwrap();
    let ls = cache.b0.clone().svd(true, true).solve(&data.y, 1e-12).unwrap();
    assert!((mean - ls).amax() < 1e-6);
}

#[test]
fn eta_zero_projection_gives_zero_mean() {
    let data = dataset(20, 2, 2);
    let cache = DesignCache::assemble(&data, &spline(2, 1), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let y = DVector::zeros(20);
    let s = Sampler::new(&cache, &hyper, y, ModelState::initial(&cache, 1.0)).unwrap();
    assert!(s.eta_conditional().unwrap().0.amax() < 1e-14);
}

#[test]
fn eta_draws_match_closed_form() {
    let data = dataset(20, 2, 3);
    let cache = DesignCache::assemble(&data, &spline(2, 1), MethodVariant::BssvcSi).unwrap();
    let mut hyper = Hyperparameters::default();
    hyper.prior_var_eta = 10.0;
    let st = state_with(&cache, |s| s.sigma2 = 0.8);
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    // closed form with an explicit inverse
    let prec = DMatrix::identity(cache.b0.ncols(), cache.b0.ncols()) / 10.0 + &cache.b0_gram / 0.8;
    let cov = prec.try_inverse().unwrap();
    let mu = &cov * cache.b0.tr_mul(&data.y) / 0.8;
    let (m, c) = s.eta_conditional().unwrap();
    assert!((&m - &mu).amax() < 1e-10 && (&c - &cov).amax() < 1e-10);
    let mut rng = RngStream::new(3, 0);
    let n = 100_000;
    let mut acc = DVector::zeros(mu.len());
    for _ in 0..n {
        s.update_eta(&mut rng).unwrap();
        acc += &s.state.eta;
        s.state.eta.fill(0.0);
        s.resid.resync(&data.y, &s.state, &cache);
    }
    acc /= n as f64;
    for k in 0..mu.len() {
        let se = (cov[(k, k)] / n as f64).sqrt();
        assert!((acc[k] - mu[k]).abs() < (0.01 * mu[k].abs()).max(5.0 * se), "coord {k}: {} vs {}", acc[k], mu[k]);
    }
}

#[test]
fn slab_probability_limits() {
    let data = dataset(30, 3, 4);
    let cache = DesignCache::assemble(&data, &spline(2, 2), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    for (pi, expected) in [(1.0, 1.0), (0.0, 0.0)] {
        let st = state_with(&cache, |s| s.pi = [pi; 3]);
        let mut s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
        let mut rng = RngStream::new(4, 0);
        for k in 0..cache.blocks.len() {
            assert_eq!(s.block_conditional(k).unwrap().slab_probability(), expected);
            s.update_block(k, &mut rng).unwrap();
            assert_eq!(s.state.phi[k], expected == 1.0);
        }
    }
}

#[test]
fn uninformative_block_gives_prior_odds() {
    let mut data = dataset(30, 2, 5);
    data.x.column_mut(1).fill(0.0);
    let cache = DesignCache::assemble(&data, &spline(2, 2), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let st = state_with(&cache, |s| {
        s.pi = [0.3, 0.2, 0.7];
        s.tau2 = vec![3.7; s.tau2.len()];
    });
    let s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    for f in Family::ALL {
        let k = cache.block_index(f, 1).unwrap();
        let l = s.block_conditional(k).unwrap().slab_probability();
        assert!((l - s.state.pi[f.index()]).abs() < 1e-12, "{f:?}: {l}");
    }
}

#[test]
fn inclusion_frequency_matches_slab_probability() {
    let data = dataset(10, 2, 6);
    let cache = DesignCache::assemble(&data, &spline(1, 1), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let k = cache.block_index(Family::Constant, 1).unwrap();
    // calibrate the prior odds against the Bayes factor so that l sits near 0.3
    let probe = state_with(&cache, |s| s.pi = [0.5; 3]);
    let l_even = Sampler::new(&cache, &hyper, data.y.clone(), probe).unwrap().block_conditional(k).unwrap().slab_probability();
    let bf = l_even / (1.0 - l_even);
    let prior_odds = (0.3 / 0.7) / bf;
    let pi = prior_odds / (1.0 + prior_odds);
    let st = state_with(&cache, |s| s.pi = [pi; 3]);
    let base = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let l = base.block_conditional(k).unwrap().slab_probability();
    assert!((l - 0.3).abs() < 1e-9);
    let mut rng = RngStream::new(6, 0);
    let n = 100_000;
    let mut hits = 0;
    for _ in 0..n {
        let mut s = base.clone();
        s.update_block(k, &mut rng).unwrap();
        hits += s.state.phi[k] as usize;
    }
    let freq = hits as f64 / n as f64;
    assert!((freq - l).abs() < 0.01 * l.max(1.0 - l), "{freq} vs {l}");
}

#[test]
fn log_det_identity_on_random_spd() {
    let data = dataset(25, 2, 7);
    let cache = DesignCache::assemble(&data, &spline(3, 2), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let st = state_with(&cache, |s| s.tau2 = vec![0.37; s.tau2.len()]);
    let s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let k = cache.block_index(Family::Varying, 0).unwrap();
    let cond = s.block_conditional(k).unwrap();
    let d = cache.blocks[k].dim();
    let p = &cache.blocks[k].gram + DMatrix::identity(d, d) / 0.37;
    assert!((cond.half_log_det_precision() - 0.5 * p.determinant().ln()).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn slab_probability_in_unit_interval(
        pi in 0.0f64..=1.0,
        tau2 in 1e-12f64..1e12,
        sigma2 in 1e-8f64..1e8,
        scale in -1e6f64..1e6,
    ) {
        let data = dataset(12, 1, 8);
        let cache = DesignCache::assemble(&data, &spline(2, 1), MethodVariant::BssvcSi).unwrap();
        let hyper = Hyperparameters::default();
        let st = state_with(&cache, |s| { s.pi = [pi; 3]; s.tau2 = vec![tau2; s.tau2.len()]; s.sigma2 = sigma2; });
        let s = Sampler::new(&cache, &hyper, &data.y * scale, st).unwrap();
        for k in 0..cache.blocks.len() {
            let l = s.block_conditional(k).unwrap().slab_probability();
            prop_assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn sigmoid_bounded(x in proptest::num::f64::ANY) {
        let v = sigmoid(x);
        prop_assert!(x.is_nan() || (0.0..=1.0).contains(&v));
    }
}

#[test]
fn tau_zero_branch_gamma_mean() {
    // L = 4 varying block with lambda^2 = 2: Gamma(2.5, 4), mean 0.625
    let data = dataset(20, 1, 9);
    let cache = DesignCache::assemble(&data, &spline(2, 2), MethodVariant::BssvcSi).unwrap();
    let k = cache.block_index(Family::Varying, 0).unwrap();
    assert_eq!(cache.blocks[k].dim(), 4);
    let hyper = Hyperparameters::default();
    let st = state_with(&cache, |s| s.lambda2 = [2.0; 3]);
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let mut rng = RngStream::new(9, 0);
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        s.update_tau(k, &mut rng).unwrap();
        acc += s.state.tau2[k];
    }
    // sd of Gamma(2.5, 4) is 0.395; 5 standard errors
    assert!((acc / n as f64 - 0.625).abs() < 5.0 * 0.395 / (n as f64).sqrt());
}

#[test]
fn tau_nonzero_branch_unit_mean_parameter() {
    // ||gamma||^2 = L lambda^2 sigma^2 gives an Inverse-Gaussian with mean 1 for 1 / tau^2
    let data = dataset(20, 1, 10);
    let cache = DesignCache::assemble(&data, &spline(2, 2), MethodVariant::BssvcSi).unwrap();
    let k = cache.block_index(Family::Varying, 0).unwrap();
    let hyper = Hyperparameters::default();
    let (lambda2, sigma2) = (1.5, 0.5);
    let st = state_with(&cache, |s| {
        s.lambda2 = [lambda2; 3];
        s.sigma2 = sigma2;
        s.coef[k] = DVector::from_element(4, (lambda2 * sigma2).sqrt());
        s.phi[k] = true;
    });
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let mut rng = RngStream::new(10, 0);
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        s.update_tau(k, &mut rng).unwrap();
        acc += 1.0 / s.state.tau2[k];
    }
    // IG(1, 4 * 1.5): variance mu^3 / lambda = 1/6
    assert!((acc / n as f64 - 1.0).abs() < 5.0 * (1.0f64 / 6.0 / n as f64).sqrt());
}

#[test]
fn lambda_posterior_gamma_6_7() {
    let data = dataset(20, 2, 11);
    let cache = DesignCache::assemble(&data, &spline(2, 2), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let st = state_with(&cache, |s| {
        s.tau2[cache.block_index(Family::Varying, 0).unwrap()] = 1.0;
        s.tau2[cache.block_index(Family::Varying, 1).unwrap()] = 2.0;
    });
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let mut rng = RngStream::new(11, 0);
    let n = 200_000;
    let (mut m1, mut m2) = (0.0, 0.0);
    for _ in 0..n {
        s.update_lambda(Family::Varying, &mut rng).unwrap();
        let v = s.state.lambda2[1];
        m1 += v;
        m2 += v * v;
    }
    let mean = m1 / n as f64;
    let var = m2 / n as f64 - mean * mean;
    assert!((mean - 6.0 / 7.0).abs() < 5.0 * (6.0f64 / 49.0 / n as f64).sqrt());
    assert!((var - 6.0 / 49.0).abs() < 0.02 * 6.0 / 49.0);
}

#[test]
fn pi_posterior_beta_4_8() {
    let data = dataset(20, 10, 12);
    let cache = DesignCache::assemble(&data, &spline(1, 1), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let st = state_with(&cache, |s| {
        for j in 0..3 {
            let k = cache.block_index(Family::Varying, j).unwrap();
            s.coef[k] = DVector::from_element(cache.blocks[k].dim(), 0.1);
            s.phi[k] = true;
        }
    });
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap();
    let mut rng = RngStream::new(12, 0);
    let n = 200_000;
    let (mut m1, mut m2) = (0.0, 0.0);
    for _ in 0..n {
        s.update_pi(Family::Varying, &mut rng).unwrap();
        let v = s.state.pi[1];
        m1 += v;
        m2 += v * v;
    }
    let mean = m1 / n as f64;
    let var = m2 / n as f64 - mean * mean;
    // Beta(4, 8): mean 1/3, variance 32 / (144 * 13)
    let tv = 32.0 / (144.0 * 13.0);
    assert!((mean - 1.0 / 3.0).abs() < 5.0 * (tv / n as f64).sqrt());
    assert!((var - tv).abs() < 0.02 * tv);
}

#[test]
fn sigma2_inverse_gamma_3_3() {
    let data = GxEDataset::new(
        DVector::from_element(4, 1.0),
        DMatrix::from_row_slice(4, 1, &[1.0, 0.0, 2.0, 1.0]),
        DVector::from_vec(vec![0.1, 0.4, 0.6, 0.9]),
        DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]),
        DMatrix::zeros(4, 0),
    )
    .unwrap();
    let cache = DesignCache::assemble(&data, &spline(1, 0), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), ModelState::initial(&cache, 1.0)).unwrap();
    assert_eq!(s.sigma2_conditional(), (3.0, 3.0));
    let mut rng = RngStream::new(13, 0);
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        s.update_sigma2(&mut rng).unwrap();
        acc += s.state.sigma2;
    }
    // IG(3, 3): mean 1.5, variance 2.25
    assert!((acc / n as f64 - 1.5).abs() < 5.0 * (2.25 / n as f64).sqrt());
}

#[test]
fn sigma2_conditional_scale_equivariant() {
    let data = dataset(30, 3, 14);
    let cache = DesignCache::assemble(&data, &spline(2, 1), MethodVariant::BssvcSi).unwrap();
    let mut hyper = Hyperparameters::default();
    hyper.h = 0.0;
    hyper.s = 0.0;
    let mut rng = RngStream::new(14, 0);
    let mut prior_hyper = Hyperparameters::default();
    prior_hyper.prior_var_eta = 1.0;
    let st = ModelState::draw_prior(&cache, &prior_hyper, &mut rng).unwrap();
    let k = 3.0;
    let mut scaled = st.clone();
    scaled.eta *= k;
    scaled.alpha *= k;
    scaled.zeta0 *= k;
    for c in scaled.coef.iter_mut() {
        *c *= k;
    }
    let a = Sampler::new(&cache, &hyper, data.y.clone(), st).unwrap().sigma2_conditional();
    let b = Sampler::new(&cache, &hyper, &data.y * k, scaled).unwrap().sigma2_conditional();
    assert_eq!(a.0, b.0);
    assert!((b.1 - k * k * a.1).abs() < 1e-9 * b.1);
}

#[test]
fn fixed_pi_spike_matches_laplace_conditionals() {
    let data = dataset(40, 3, 15);
    let sp = spline(2, 2);
    let c1 = DesignCache::assemble(&data, &sp, MethodVariant::BssvcSi).unwrap();
    let c2 = DesignCache::assemble(&data, &sp, MethodVariant::BvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let mut rng = RngStream::new(15, 0);
    let mut st = ModelState::draw_prior(&c1, &hyper, &mut rng).unwrap();
    st.pi = [1.0; 3];
    for (k, c) in st.coef.iter_mut().enumerate() {
        if c.iter().all(|&v| v == 0.0) {
            c.fill(0.2);
            st.phi[k] = true;
        }
    }
    let s1 = Sampler::new(&c1, &hyper, data.y.clone(), st.clone()).unwrap();
    let s2 = Sampler::new(&c2, &hyper, data.y.clone(), st.clone()).unwrap();
    for k in 0..c1.blocks.len() {
        let (a, b) = (s1.block_conditional(k).unwrap(), s2.block_conditional(k).unwrap());
        assert_eq!(a.slab_probability(), 1.0);
        assert!((&a.mean - &b.mean).amax() < 1e-12);
        assert!((a.covariance(st.sigma2) - b.covariance(st.sigma2)).amax() < 1e-12);
    }
}

#[test]
fn chain_is_deterministic_and_consistent() {
    let data = dataset(60, 6, 16);
    let sp = spline(2, 2);
    let settings = ChainSettings { iterations: 1200, burn_in: 200, thin: 3, n_chains: 1, ..Default::default() };
    for v in MethodVariant::ALL {
        let a = run_chain(v, &data, &sp, &Hyperparameters::default(), &settings).unwrap();
        let b = run_chain(v, &data, &sp, &Hyperparameters::default(), &settings).unwrap();
        assert_eq!(a.draws, b.draws, "{v}");
        assert_eq!(a.indicators, b.indicators);
        assert_eq!(a.n_draws(), 1000 / 3);
        a.check_indicator_consistency().unwrap();
        if !v.spike() {
            assert!(a.indicators.iter().flatten().all(|&i| i == 1));
        }
    }
}

#[test]
fn residual_drift_bounded_between_resyncs() {
    let data = dataset(80, 8, 17);
    let cache = DesignCache::assemble(&data, &spline(2, 2), MethodVariant::BssvcSi).unwrap();
    let hyper = Hyperparameters::default();
    let mut s = Sampler::new(&cache, &hyper, data.y.clone(), ModelState::initial(&cache, 1.0)).unwrap();
    let mut rng = RngStream::new(17, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..RESYNC_EVERY - 1 {
        s.sweep(&mut rng).unwrap();
        worst = worst.max(s.resid.drift(&data.y, &s.state, &cache));
        s.state.check_consistency().unwrap();
    }
    assert!(worst < 1e-6, "drift {worst}");
    s.sweep(&mut rng).unwrap();
    assert_eq!(s.resid.r, &data.y - assemble_mean(&s.state, &cache));
}

#[test]
fn invalid_settings_rejected() {
    let data = dataset(20, 2, 18);
    let cache = DesignCache::assemble(&data, &spline(1, 1), MethodVariant::Bvc).unwrap();
    let bad = ChainSettings { iterations: 10, burn_in: 10, ..Default::default() };
    assert!(run_chain_on(&cache, &data.y, &Hyperparameters::default(), &bad, 0).is_err());
    let bad = ChainSettings { thin: 0, ..Default::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn geweke_all_variants() {
    let hyper = geweke_hyperparameters();
    for v in MethodVariant::ALL {
        let report = geweke_prior_check(v, &hyper, &GewekeSettings::default()).unwrap();
        for verdict in report.verdicts() {
            assert!(verdict.passed, "{v} {verdict:?}");
        }
    }
}

#[test]
fn geweke_detects_a_broken_conditional() {
    // scaling the sigma^2 prior scale only in the sampler's hyperparameters
    // makes the update target the wrong distribution
    let settings = GewekeSettings { draws: 2000, chain_draws: 400, thin: 10, ..Default::default() };
    let hyper = geweke_hyperparameters();
    let (_, cache) = gxe_core::gibbs::geweke::geweke_design(&settings, MethodVariant::BssvcSi).unwrap();
    let mut wrong = hyper.clone();
    wrong.h *= 3.0;
    let mut rng = RngStream::new(1, 1);
    let mut upd = Vec::new();
    let mut fresh = Vec::new();
    for _ in 0..settings.draws {
        let st = ModelState::draw_prior(&cache, &hyper, &mut rng).unwrap();
        let y = assemble_mean(&st, &cache).map(|m| m + st.sigma2.sqrt() * std_normal(&mut rng));
        let mut s = Sampler::new(&cache, &wrong, y, st).unwrap();
        s.update_sigma2(&mut rng).unwrap();
        upd.push(s.state.sigma2);
        fresh.push(ModelState::draw_prior(&cache, &hyper, &mut rng).unwrap().sigma2);
    }
    assert!(gxe_core::stats::ks_two_sample(&upd, &fresh).p_value < 1e-6);
}
