use std::fs;
use std::path::Path;
use std::time::Instant;

use gxe_core::chainio::{write_chain, write_summary};
use gxe_core::config::RunConfig;
use gxe_core::gibbs::{run_chain_on, ChainSettings};
use gxe_core::inference::{psrf_gate, reconstruct_beta};
use gxe_core::metrics::{default_grid, estimation_errors, identification_counts, prediction_error};
use gxe_core::simgen::{read_genotypes, TruthSpec};
use gxe_core::study::{fit_dataset, run_study, simulate_replicate, write_failures, write_scores, write_table};
use gxe_core::{DesignCache, Family, GxEDataset, MethodVariant};
use nalgebra::DMatrix;

use crate::{CliError, CliResult, EXIT_GATE, EXIT_NUMERICAL};

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(&cfg.output_dir)
}

fn genotypes(cfg: &RunConfig) -> CliResult<Option<DMatrix<f64>>> {
    Ok(match &cfg.data.genotypes {
        Some(p) => Some(read_genotypes(p)?),
        None => None,
    })
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let g = genotypes(cfg)?;
    let rep = simulate_replicate(&cfg.simulation, cfg.seed, 0, g.as_ref())?;
    let dir = out_dir(cfg)?;
    rep.train.write_csv(dir.join("train.csv"))?;
    rep.test.write_csv(dir.join("test.csv"))?;
    rep.truth.write_csv(dir.join("truth.csv"))?;
    cfg.echo(dir.join("config.toml"))?;
    println!(
        "example {}: train n={} test n={} p={} q={} written to {}",
        cfg.simulation.example,
        rep.train.n(),
        rep.test.n(),
        rep.train.p(),
        rep.train.q(),
        dir.display()
    );
    Ok(())
}

fn genes(list: Vec<usize>) -> String {
    if list.is_empty() {
        "-".into()
    } else {
        list.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",")
    }
}

pub fn fit(cfg: &RunConfig) -> CliResult<()> {
    let path = cfg.data.dataset.as_ref().ok_or_else(|| CliError::config("no dataset given (--data)"))?;
    let data = GxEDataset::read_csv(path)?;
    let out = fit_dataset(cfg.method, &data, cfg, 0)?;
    let dir = out_dir(cfg)?;
    cfg.echo(dir.join("config.toml"))?;
    fs::create_dir_all(dir.join("chains"))?;
    for (c, ch) in out.chains.iter().enumerate() {
        write_chain(ch, dir.join("chains").join(format!("chain_{c}.bin")))?;
    }
    write_summary(&out.chains, dir.join("summary.csv"))?;
    out.report.write_csv(dir.join("selection.csv"))?;

    fs::create_dir_all(dir.join("curves"))?;
    let (lo, hi) = out.cache.basis.domain();
    let grid: Vec<f64> = default_grid().iter().map(|t| lo + t * (hi - lo)).collect();
    reconstruct_beta(&out.chains, &out.cache, None, &grid)?.write_csv(dir.join("curves").join("intercept.csv"))?;
    for g in &out.report.genes {
        if g.selected_constant || g.selected_varying {
            let band = reconstruct_beta(&out.chains, &out.cache, Some(g.gene), &grid)?;
            band.write_csv(dir.join("curves").join(format!("beta_{}.csv", g.gene + 1)))?;
        }
    }

    let mut scores: Vec<(String, f64)> = Vec::new();
    if let Some(t) = &cfg.data.truth {
        let truth = TruthSpec::read_csv(t)?;
        let id = identification_counts(&out.report, &truth)?;
        for (name, c) in [("varying", id.varying), ("constant", id.constant), ("e", id.e)] {
            scores.push((format!("{name}_tp"), c.tp as f64));
            scores.push((format!("{name}_fp"), c.fp as f64));
        }
        scores.push(("total".into(), estimation_errors(&out.fit, &truth, &default_grid())?.total()));
    }
    if let Some(t) = &cfg.data.test {
        scores.push(("prediction_error".into(), prediction_error(&out.fit, &GxEDataset::read_csv(t)?)?));
    }
    if !scores.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("scores.csv"))?;
        w.write_record(["metric", "value"])?;
        for (k, v) in &scores {
            w.write_record([k.clone(), format!("{v}")])?;
        }
        w.flush()?;
    }

    println!("{} on n={} p={} in {:.1}s", cfg.method, data.n(), data.p(), out.seconds);
    for (label, f) in [("varying", Family::Varying), ("constant", Family::Constant), ("E interaction", Family::LinearE)] {
        println!("  {label}: {}", genes(out.report.selected(f)));
    }
    for (k, v) in &scores {
        println!("  {k} = {v}");
    }

    if out.chains.len() < 2 {
        log::warn!("one chain: PSRF gate not evaluated");
        return Ok(());
    }
    let rep = match psrf_gate(&out.chains) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("PSRF gate not evaluated: {e}");
            return Ok(());
        }
    };
    let mut w = csv::Writer::from_path(dir.join("psrf.csv"))?;
    w.write_record(["parameter", "psrf"])?;
    for (n, v) in rep.names.iter().zip(&rep.values) {
        w.write_record([n.clone(), format!("{v}")])?;
    }
    w.flush()?;
    let (worst, max) = rep.worst().unwrap_or(("-", f64::NAN));
    println!("  max PSRF {max:.4} ({worst})");
    if !rep.converged {
        let msg = format!("PSRF gate failed: {worst} = {max:.4} > 1.1");
        if cfg.psrf_gate {
            return Err(CliError { code: EXIT_GATE, message: msg });
        }
        log::warn!("{msg}");
    }
    Ok(())
}

pub fn replicate(cfg: &RunConfig) -> CliResult<()> {
    let g = genotypes(cfg)?;
    let methods = cfg.study.methods.clone();
    let result = run_study(cfg, &methods, g.as_ref());
    let dir = out_dir(cfg)?;
    cfg.echo(dir.join("config.toml"))?;
    write_table(&result, &methods, dir.join("table.csv"))?;
    write_scores(&result, dir.join("scores.csv"))?;
    write_failures(&result, dir.join("failures.csv"))?;
    for &m in &methods {
        let s = result.for_method(m);
        let failed = result.failures.iter().filter(|f| f.method == m).count();
        let avg = |f: &dyn Fn(&gxe_core::study::ReplicateScore) -> f64| {
            if s.is_empty() {
                f64::NAN
            } else {
                s.iter().map(|x| f(x)).sum::<f64>() / s.len() as f64
            }
        };
        println!(
            "{m}: {} ok, {failed} failed; varying TP {:.2} FP {:.2}, constant TP {:.2} FP {:.2}, E TP {:.2} FP {:.2}; total {:.3}; PE {:.3}; {:.1}s/fit",
            s.len(),
            avg(&|x| x.identification.varying.tp as f64),
            avg(&|x| x.identification.varying.fp as f64),
            avg(&|x| x.identification.constant.tp as f64),
            avg(&|x| x.identification.constant.fp as f64),
            avg(&|x| x.identification.e.tp as f64),
            avg(&|x| x.identification.e.fp as f64),
            avg(&|x| x.total),
            avg(&|x| x.prediction_error),
            avg(&|x| x.seconds),
        );
    }
    println!("table written to {}", dir.join("table.csv").display());
    if result.scores.is_empty() {
        return Err(CliError { code: EXIT_NUMERICAL, message: "every replicate failed; see failures.csv".into() });
    }
    Ok(())
}

pub fn benchmark(cfg: &RunConfig, ns: &[usize], ps: &[usize], iters: usize) -> CliResult<()> {
    if iters < 2 {
        return Err(CliError::config("benchmark needs at least 2 iterations"));
    }
    let dir = out_dir(cfg)?;
    let mut w = csv::Writer::from_path(dir.join("benchmark.csv"))?;
    w.write_record(["n", "p", "iterations", "seconds", "effective_coefficients"])?;
    for &n in ns {
        for &p in ps {
            let mut c = cfg.clone();
            c.simulation.example = 1;
            c.simulation.n = n;
            c.simulation.p = p;
            c.simulation.validate()?;
            let rep = simulate_replicate(&c.simulation, c.seed, 0, None)?;
            let spline = c.spline_for(rep.train.z.as_slice())?;
            let cache = DesignCache::assemble(&rep.train, &spline, MethodVariant::BssvcSi)?;
            let settings = ChainSettings { iterations: iters, burn_in: iters / 2, thin: 1, seed: c.seed, n_chains: 1, replicate: 0 };
            let t0 = Instant::now();
            run_chain_on(&cache, &rep.train.y, &c.hyper, &settings, 0)?;
            let secs = t0.elapsed().as_secs_f64();
            println!("n={n} p={p}: {secs:.2}s for {iters} iterations, {} coefficients", cache.n_coefficients());
            w.write_record([n.to_string(), p.to_string(), iters.to_string(), format!("{secs:.3}"), cache.n_coefficients().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
