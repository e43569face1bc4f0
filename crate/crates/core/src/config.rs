//! Run configuration, read from and echoed as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dists::DEFAULT_SEED;
use crate::error::{Error, Result};
use crate::gibbs::ChainSettings;
use crate::model::Hyperparameters;
use crate::simgen::{LdSpec, SimOptions};
use crate::splines::SplineSystem;
use crate::variant::MethodVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSection {
    /// Degree O of the B-splines.
    pub degree: usize,
    /// Number K of interior knots.
    pub interior_knots: usize,
}

impl Default for SplineSection {
    fn default() -> Self {
        SplineSection { degree: 2, interior_knots: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        let d = ChainSettings::default();
        ChainSection { iterations: d.iterations, burn_in: d.burn_in, thin: d.thin, n_chains: d.n_chains }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Training dataset CSV for `fit`.
    pub dataset: Option<PathBuf>,
    /// Optional held-out dataset; prediction error is reported when present.
    pub test: Option<PathBuf>,
    /// Optional truth CSV; estimation and identification scores are reported when present.
    pub truth: Option<PathBuf>,
    /// Genotype matrix sampled by example 4.
    pub genotypes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Simulation design, 1 to 4.
    pub example: u8,
    pub n: usize,
    pub p: usize,
    /// Size of the independent test set; defaults to `n`.
    pub n_test: Option<usize>,
    pub rho: f64,
    pub w_rho: f64,
    pub e_prob: f64,
    pub noise_sd: Option<f64>,
    /// LD parameters of example 3.
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let o = SimOptions::default();
        SimulationSection {
            example: 1,
            n: 500,
            p: 100,
            n_test: None,
            rho: o.rho,
            w_rho: o.w_rho,
            e_prob: o.e_prob,
            noise_sd: o.noise_sd,
            q1: 0.3,
            q2: 0.3,
            r: 0.6,
        }
    }
}

impl SimulationSection {
    pub fn test_size(&self) -> usize {
        self.n_test.unwrap_or(self.n)
    }

    pub fn options(&self) -> SimOptions {
        SimOptions { rho: self.rho, w_rho: self.w_rho, e_prob: self.e_prob, noise_sd: self.noise_sd }
    }

    pub fn ld(&self) -> Result<LdSpec> {
        LdSpec::new(self.q1, self.q2, self.r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.example) {
            return Err(Error::InvalidConfig(format!("example must be 1 to 4, got {}", self.example)));
        }
        if self.n < 2 || self.n_test == Some(0) {
            return Err(Error::InvalidConfig("simulation needs n >= 2 and n_test >= 1".into()));
        }
        if self.p < 8 {
            return Err(Error::InvalidConfig(format!("the simulation truth has 8 active genes, p = {} is too small", self.p)));
        }
        if !(0.0..1.0).contains(&self.rho.abs()) || !(0.0..1.0).contains(&self.w_rho.abs()) {
            return Err(Error::InvalidConfig("correlations must lie in (-1, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.e_prob) {
            return Err(Error::InvalidConfig(format!("e_prob {} outside [0, 1]", self.e_prob)));
        }
        if self.noise_sd.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("noise_sd must be finite and non-negative".into()));
        }
        if self.example == 3 {
            self.ld()?.joint_genotypes()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Methods fitted to every replicate.
    pub methods: Vec<MethodVariant>,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection { methods: MethodVariant::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: MethodVariant,
    /// Master seed of every random stream.
    pub seed: u64,
    pub replicates: usize,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Fail `fit` when the PSRF gate is not met.
    pub psrf_gate: bool,
    pub spline: SplineSection,
    pub chain: ChainSection,
    pub hyper: Hyperparameters,
    pub data: DataSection,
    pub simulation: SimulationSection,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: MethodVariant::BssvcSi,
            seed: DEFAULT_SEED,
            replicates: 1,
            output_dir: PathBuf::from("out"),
            threads: 0,
            psrf_gate: true,
            spline: SplineSection::default(),
            chain: ChainSection::default(),
            hyper: Hyperparameters::default(),
            data: DataSection::default(),
            simulation: SimulationSection::default(),
            study: StudySection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Write the configuration next to the outputs it produced.
    pub fn echo<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn chain_settings(&self, replicate: u64) -> ChainSettings {
        ChainSettings {
            iterations: self.chain.iterations,
            burn_in: self.chain.burn_in,
            thin: self.chain.thin,
            seed: self.seed,
            n_chains: self.chain.n_chains,
            replicate,
        }
    }

    /// Spline system over the observed range of `z`.
    pub fn spline_for(&self, z: &[f64]) -> Result<SplineSystem> {
        SplineSystem::fit_domain(self.spline.degree, self.spline.interior_knots, z)
    }

    pub fn validate(&self) -> Result<()> {
        self.chain_settings(0).validate()?;
        if self.chain.iterations - self.chain.burn_in < self.chain.thin {
            return Err(Error::InvalidConfig("no draws would be retained".into()));
        }
        if self.spline.degree == 0 {
            return Err(Error::InvalidConfig("spline degree must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.study.methods.is_empty() {
            return Err(Error::InvalidConfig("study needs at least one method".into()));
        }
        self.hyper.validate()?;
        self.simulation.validate()
    }
}
