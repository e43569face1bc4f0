//! Replicate studies: simulate, fit every method, score, aggregate.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SimulationSection};
use crate::dists::{stream_id, RngStream, StreamKind};
use crate::error::{Error, Result};
use crate::gibbs::run_chains_on;
use crate::inference::{psrf_gate, select, PointFit, SelectionReport};
use crate::metrics::{default_grid, estimation_errors, identification_counts, prediction_error, EstimationErrors, Identification};
use crate::model::{DesignCache, GxEDataset};
use crate::simgen::{gen_example1, gen_example2, gen_example3, subsample_genotypes, TruthSpec};
use crate::stats::{mean, variance};
use crate::variant::MethodVariant;

/// Training set, test set and truth of one replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: u64,
    pub train: GxEDataset,
    pub test: GxEDataset,
    pub truth: TruthSpec,
}

fn generate(sim: &SimulationSection, n: usize, genotypes: Option<&DMatrix<f64>>, rng: &mut RngStream) -> Result<(GxEDataset, TruthSpec)> {
    let opts = sim.options();
    match sim.example {
        1 => gen_example1(n, sim.p, &opts, rng),
        2 => gen_example2(n, sim.p, &opts, rng),
        3 => gen_example3(n, sim.p, &sim.ld()?, &opts, rng),
        4 => {
            let g = genotypes.ok_or_else(|| Error::InvalidConfig("example 4 needs a genotype file".into()))?;
            subsample_genotypes(g, n, &TruthSpec::example1(g.ncols())?, &opts, rng)
        }
        k => Err(Error::InvalidConfig(format!("unknown example {k}"))),
    }
}

/// Data of replicate `index`; training and test sets use their own streams.
pub fn simulate_replicate(sim: &SimulationSection, seed: u64, index: u64, genotypes: Option<&DMatrix<f64>>) -> Result<Replicate> {
    let mut rng = RngStream::new(seed, stream_id(StreamKind::Data, index, 0));
    let (train, truth) = generate(sim, sim.n, genotypes, &mut rng)?;
    let mut rng = RngStream::new(seed, stream_id(StreamKind::TestData, index, 0));
    let (test, _) = generate(sim, sim.test_size(), genotypes, &mut rng)?;
    Ok(Replicate { index, train, test, truth })
}

/// Scores of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateScore {
    pub replicate: u64,
    pub method: MethodVariant,
    pub identification: Identification,
    pub errors: EstimationErrors,
    pub total: f64,
    pub prediction_error: f64,
    /// Largest gated PSRF; `None` with a single chain or too few draws.
    pub psrf_max: Option<f64>,
    pub seconds: f64,
}

/// Everything one fit produces.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub cache: DesignCache,
    pub chains: Vec<crate::gibbs::ChainOutput>,
    pub report: SelectionReport,
    pub fit: PointFit,
    pub psrf_max: Option<f64>,
    pub seconds: f64,
}

pub fn fit_dataset(method: MethodVariant, data: &GxEDataset, cfg: &RunConfig, replicate: u64) -> Result<FitOutcome> {
    let t0 = Instant::now();
    let spline = cfg.spline_for(data.z.as_slice())?;
    let cache = DesignCache::assemble(data, &spline, method)?;
    let chains = run_chains_on(&cache, &data.y, &cfg.hyper, &cfg.chain_settings(replicate))?;
    let report = select(&chains)?;
    let fit = PointFit::from_chains(&chains, &cache)?;
    // short runs cannot support the diagnostic; they are reported without it
    let psrf_max = if chains.len() >= 2 { psrf_gate(&chains).ok().map(|r| r.max) } else { None };
    Ok(FitOutcome { cache, chains, report, fit, psrf_max, seconds: t0.elapsed().as_secs_f64() })
}

pub fn score_replicate(method: MethodVariant, rep: &Replicate, cfg: &RunConfig) -> Result<ReplicateScore> {
    let out = fit_dataset(method, &rep.train, cfg, rep.index)?;
    let errors = estimation_errors(&out.fit, &rep.truth, &default_grid())?;
    Ok(ReplicateScore {
        replicate: rep.index,
        method,
        identification: identification_counts(&out.report, &rep.truth)?,
        total: errors.total(),
        errors,
        prediction_error: prediction_error(&out.fit, &rep.test)?,
        psrf_max: out.psrf_max,
        seconds: out.seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: u64,
    pub method: MethodVariant,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    /// Ordered by replicate, then by position in the method list.
    pub scores: Vec<ReplicateScore>,
    pub failures: Vec<Failure>,
}

impl StudyResult {
    pub fn for_method(&self, m: MethodVariant) -> Vec<&ReplicateScore> {
        self.scores.iter().filter(|s| s.method == m).collect()
    }
}

/// Replicates `0..replicates` of the configured simulation, fitted with every
/// method in `methods`. Replicates run in parallel; failures are collected,
/// not propagated.
pub fn run_study(cfg: &RunConfig, methods: &[MethodVariant], genotypes: Option<&DMatrix<f64>>) -> StudyResult {
    let per_rep: Vec<Vec<std::result::Result<ReplicateScore, Failure>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let rep = match simulate_replicate(&cfg.simulation, cfg.seed, r, genotypes) {
                Ok(rep) => rep,
                Err(e) => {
                    return methods
                        .iter()
                        .map(|&m| Err(Failure { replicate: r, method: m, message: format!("simulation: {e}") }))
                        .collect()
                }
            };
            methods
                .iter()
                .map(|&m| {
                    score_replicate(m, &rep, cfg).map_err(|e| Failure { replicate: r, method: m, message: e.to_string() })
                })
                .collect()
        })
        .collect();
    let mut out = StudyResult::default();
    for res in per_rep.into_iter().flatten() {
        match res {
            Ok(s) => out.scores.push(s),
            Err(f) => {
                log::warn!("replicate {} {} failed: {}", f.replicate, f.method, f.message);
                out.failures.push(f)
            }
        }
    }
    out
}

/// Mean and sample sd of one table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub sd: f64,
}

impl Cell {
    pub fn of(x: &[f64]) -> Cell {
        match x.len() {
            0 => Cell { mean: f64::NAN, sd: f64::NAN },
            1 => Cell { mean: x[0], sd: 0.0 },
            _ => Cell { mean: mean(x), sd: variance(x).sqrt() },
        }
    }

    pub fn format(&self) -> String {
        format!("{:.3}({:.3})", self.mean, self.sd)
    }
}

/// Row labels of the aggregated table, in output order, with their extractors.
fn metric_rows(p: usize, q: usize) -> Vec<(String, Box<dyn Fn(&ReplicateScore) -> f64>)> {
    let mut rows: Vec<(String, Box<dyn Fn(&ReplicateScore) -> f64>)> = vec![
        ("varying_tp".into(), Box::new(|s| s.identification.varying.tp as f64)),
        ("varying_fp".into(), Box::new(|s| s.identification.varying.fp as f64)),
        ("constant_tp".into(), Box::new(|s| s.identification.constant.tp as f64)),
        ("constant_fp".into(), Box::new(|s| s.identification.constant.fp as f64)),
        ("e_tp".into(), Box::new(|s| s.identification.e.tp as f64)),
        ("e_fp".into(), Box::new(|s| s.identification.e.fp as f64)),
        ("imse_intercept".into(), Box::new(|s| s.errors.intercept_imse)),
    ];
    for j in 0..p.min(8) {
        rows.push((format!("imse_beta{}", j + 1), Box::new(move |s| s.errors.beta_imse[j])));
    }
    for t in 0..q {
        rows.push((format!("mse_alpha{}", t + 1), Box::new(move |s| s.errors.alpha_sq[t])));
    }
    rows.push(("mse_zeta0".into(), Box::new(|s| s.errors.zeta0_sq)));
    for j in 0..p.min(5) {
        rows.push((format!("mse_zeta{}", j + 1), Box::new(move |s| s.errors.zeta_sq[j])));
    }
    rows.push(("total".into(), Box::new(|s| s.total)));
    rows.push(("prediction_error".into(), Box::new(|s| s.prediction_error)));
    rows
}

/// One metric per row, one `mean(sd)` column per method, plus counts of
/// successful and failed replicates.
pub fn write_table<P: AsRef<Path>>(result: &StudyResult, methods: &[MethodVariant], path: P) -> Result<()> {
    let first = result.scores.first();
    let (p, q) = first.map(|s| (s.errors.beta_imse.len(), s.errors.alpha_sq.len())).unwrap_or((0, 0));
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["metric".to_string()];
    header.extend(methods.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    let count = |f: &dyn Fn(MethodVariant) -> usize| methods.iter().map(|&m| f(m).to_string()).collect::<Vec<_>>();
    let mut row = vec!["replicates_ok".to_string()];
    row.extend(count(&|m| result.for_method(m).len()));
    w.write_record(&row)?;
    let mut row = vec!["replicates_failed".to_string()];
    row.extend(count(&|m| result.failures.iter().filter(|f| f.method == m).count()));
    w.write_record(&row)?;
    for (name, get) in metric_rows(p, q) {
        let mut row = vec![name];
        for &m in methods {
            let vals: Vec<f64> = result.for_method(m).into_iter().map(&get).collect();
            row.push(Cell::of(&vals).format());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate scores in long form.
pub fn write_scores<P: AsRef<Path>>(result: &StudyResult, path: P) -> Result<()> {
    let first = result.scores.first();
    let (p, q) = first.map(|s| (s.errors.beta_imse.len(), s.errors.alpha_sq.len())).unwrap_or((0, 0));
    let rows = metric_rows(p, q);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["replicate".to_string(), "method".to_string()];
    header.extend(rows.iter().map(|(n, _)| n.clone()));
    header.push("psrf_max".into());
    w.write_record(&header)?;
    for s in &result.scores {
        let mut rec = vec![s.replicate.to_string(), s.method.name().to_string()];
        rec.extend(rows.iter().map(|(_, g)| format!("{}", g(s))));
        rec.push(s.psrf_max.map(|v| format!("{v}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures<P: AsRef<Path>>(result: &StudyResult, path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "method", "message"])?;
    for f in &result.failures {
        w.write_record([f.replicate.to_string(), f.method.name().to_string(), f.message.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.simulation.n = 60;
        c.simulation.p = 10;
        c.simulation.n_test = Some(30);
        c.chain.iterations = 200;
        c.chain.burn_in = 100;
        c.chain.n_chains = 2;
        c.replicates = 2;
        c
    }

    #[test]
    fn replicate_streams_are_distinct_and_stable() {
        let c = tiny();
        let a = simulate_replicate(&c.simulation, 1, 0, None).unwrap();
        let b = simulate_replicate(&c.simulation, 1, 0, None).unwrap();
        let d = simulate_replicate(&c.simulation, 1, 1, None).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(a.train.y, d.train.y);
        assert_ne!(a.train.y.rows(0, 30), a.test.y);
        assert_eq!(a.test.n(), 30);
    }

    #[test]
    fn example4_needs_genotypes() {
        let mut c = tiny();
        c.simulation.example = 4;
        assert!(simulate_replicate(&c.simulation, 1, 0, None).is_err());
        let g = DMatrix::from_fn(80, 10, |i, j| ((i * 7 + j * 3) % 3) as f64);
        let r = simulate_replicate(&c.simulation, 1, 0, Some(&g)).unwrap();
        assert_eq!((r.train.n(), r.train.p()), (60, 10));
    }

    #[test]
    fn study_is_deterministic_and_ordered() {
        let c = tiny();
        let methods = [MethodVariant::BssvcSi, MethodVariant::Bl];
        let a = run_study(&c, &methods, None);
        let b = run_study(&c, &methods, None);
        assert!(a.failures.is_empty());
        assert_eq!(a.scores.len(), 4);
        let key = |s: &ReplicateScore| (s.replicate, s.method.name());
        assert_eq!(a.scores.iter().map(key).collect::<Vec<_>>(), vec![(0, "BSSVC-SI"), (0, "BL"), (1, "BSSVC-SI"), (1, "BL")]);
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert_eq!((x.total, x.prediction_error, x.identification), (y.total, y.prediction_error, y.identification));
        }
        let dir = tempfile::tempdir().unwrap();
        write_table(&a, &methods, dir.path().join("t1.csv")).unwrap();
        write_table(&b, &methods, dir.path().join("t2.csv")).unwrap();
        write_scores(&a, dir.path().join("s1.csv")).unwrap();
        write_scores(&b, dir.path().join("s2.csv")).unwrap();
        let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
        assert_eq!(read("t1.csv"), read("t2.csv"));
        assert_eq!(read("s1.csv"), read("s2.csv"));
    }

    #[test]
    fn failures_are_disclosed() {
        let mut c = tiny();
        c.simulation.example = 4;
        c.replicates = 1;
        let r = run_study(&c, &[MethodVariant::Bvc], None);
        assert!(r.scores.is_empty());
        assert_eq!(r.failures.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table(&r, &[MethodVariant::Bvc], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("replicates_ok,0") && text.contains("replicates_failed,1"));
    }

    #[test]
    fn cell_formatting() {
        assert_eq!(Cell::of(&[1.0, 3.0]).format(), "2.000(1.414)");
        assert_eq!(Cell::of(&[2.5]).format(), "2.500(0.000)");
        assert!(Cell::of(&[]).mean.is_nan());
    }
}
