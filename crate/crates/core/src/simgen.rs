//! Simulation designs with known coefficients.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::std_normal;
use crate::error::{Error, Result};
use crate::model::GxEDataset;
use crate::stats::quantile_sorted;

/// Closed-form coefficient functions used by the designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruthFn {
    Zero,
    Const(f64),
    /// `2 exp(2z - 1)`
    Exp,
    /// `-6 z (1 - z)`
    Quad,
    /// `-4 z^3`
    Cubic,
    /// `2 sin(2 pi z)`
    Sine,
}

impl TruthFn {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            TruthFn::Zero => 0.0,
            TruthFn::Const(c) => c,
            TruthFn::Exp => 2.0 * (2.0 * z - 1.0).exp(),
            TruthFn::Quad => -6.0 * z * (1.0 - z),
            TruthFn::Cubic => -4.0 * z.powi(3),
            TruthFn::Sine => 2.0 * (2.0 * std::f64::consts::PI * z).sin(),
        }
    }

    pub fn is_varying(self) -> bool {
        matches!(self, TruthFn::Exp | TruthFn::Quad | TruthFn::Cubic | TruthFn::Sine)
    }

    /// Nonzero constant function.
    pub fn is_constant(self) -> bool {
        matches!(self, TruthFn::Const(c) if c != 0.0)
    }

    fn kind(self) -> (&'static str, f64) {
        match self {
            TruthFn::Zero => ("zero", 0.0),
            TruthFn::Const(c) => ("const", c),
            TruthFn::Exp => ("exp", 0.0),
            TruthFn::Quad => ("quad", 0.0),
            TruthFn::Cubic => ("cubic", 0.0),
            TruthFn::Sine => ("sine", 0.0),
        }
    }

    fn from_kind(kind: &str, value: f64) -> Result<Self> {
        Ok(match kind {
            "zero" => TruthFn::Zero,
            "const" => TruthFn::Const(value),
            "exp" => TruthFn::Exp,
            "quad" => TruthFn::Quad,
            "cubic" => TruthFn::Cubic,
            "sine" => TruthFn::Sine,
            _ => return Err(Error::Ingestion(format!("unknown function kind `{kind}`"))),
        })
    }
}

/// True coefficients of a simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub intercept: TruthFn,
    pub beta: Vec<TruthFn>,
    pub alpha: Vec<f64>,
    pub zeta0: f64,
    pub zeta: Vec<f64>,
    pub noise_sd: f64,
}

impl TruthSpec {
    /// The Example 1 coefficients for `p >= 8` genes.
    pub fn example1(p: usize) -> Result<Self> {
        if p < 8 {
            return Err(Error::Spec(format!("the design needs at least 8 genes, got p = {p}")));
        }
        let mut beta = vec![TruthFn::Zero; p];
        beta[..3].copy_from_slice(&[TruthFn::Exp, TruthFn::Quad, TruthFn::Cubic]);
        for (j, c) in [0.5, 0.8, -1.2, 0.7, -1.1].into_iter().enumerate() {
            beta[3 + j] = TruthFn::Const(c);
        }
        let mut zeta = vec![0.0; p];
        zeta[..5].copy_from_slice(&[0.6, 1.5, -1.3, 1.0, -0.8]);
        Ok(TruthSpec { intercept: TruthFn::Sine, beta, alpha: vec![-0.5, 1.0], zeta0: 1.5, zeta, noise_sd: 1.0 })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn varying_set(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.beta[j].is_varying()).collect()
    }

    pub fn constant_set(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.beta[j].is_constant()).collect()
    }

    pub fn e_set(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.zeta[j] != 0.0).collect()
    }

    /// Noise-free mean for every row.
    pub fn mean(&self, x: &DMatrix<f64>, z: &DVector<f64>, e: &DVector<f64>, w: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |i, _| {
            let mut m = self.intercept.eval(z[i]) + self.zeta0 * e[i];
            for (t, a) in self.alpha.iter().enumerate() {
                m += a * w[(i, t)];
            }
            for j in 0..self.p() {
                let xij = x[(i, j)];
                if xij != 0.0 {
                    m += xij * (self.beta[j].eval(z[i]) + self.zeta[j] * e[i]);
                }
            }
            m
        })
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["term", "kind", "value"])?;
        let f = |v: f64| format!("{v}");
        let (k, v) = self.intercept.kind();
        w.write_record(["beta0", k, &f(v)])?;
        for (j, b) in self.beta.iter().enumerate() {
            let (k, v) = b.kind();
            w.write_record([&format!("beta[{}]", j + 1), k, &f(v)])?;
        }
        for (t, a) in self.alpha.iter().enumerate() {
            w.write_record([&format!("alpha[{}]", t + 1), "scalar", &f(*a)])?;
        }
        w.write_record(["zeta0", "scalar", &f(self.zeta0)])?;
        for (j, z) in self.zeta.iter().enumerate() {
            w.write_record([&format!("zeta[{}]", j + 1), "scalar", &f(*z)])?;
        }
        w.write_record(["noise_sd", "scalar", &f(self.noise_sd)])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(|e| Error::Ingestion(e.to_string()))?;
        let mut t = TruthSpec {
            intercept: TruthFn::Zero,
            beta: Vec::new(),
            alpha: Vec::new(),
            zeta0: 0.0,
            zeta: Vec::new(),
            noise_sd: 1.0,
        };
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Ingestion(e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::Ingestion("truth rows need term, kind, value".into()));
            }
            let value: f64 = rec[2].trim().parse().map_err(|_| Error::Ingestion(format!("bad value `{}`", &rec[2])))?;
            let term = rec[0].trim();
            let kind = rec[1].trim();
            let (base, idx) = match term.split_once('[') {
                Some((b, rest)) => {
                    let i: usize = rest
                        .trim_end_matches(']')
                        .parse()
                        .map_err(|_| Error::Ingestion(format!("bad term `{term}`")))?;
                    (b, Some(i))
                }
                None => (term, None),
            };
            let in_order = |len: usize| {
                if idx == Some(len + 1) {
                    Ok(())
                } else {
                    Err(Error::Ingestion(format!("out-of-order term `{term}`")))
                }
            };
            match base {
                "beta0" => t.intercept = TruthFn::from_kind(kind, value)?,
                "beta" => {
                    in_order(t.beta.len())?;
                    t.beta.push(TruthFn::from_kind(kind, value)?)
                }
                "alpha" => {
                    in_order(t.alpha.len())?;
                    t.alpha.push(value)
                }
                "zeta0" => t.zeta0 = value,
                "zeta" => {
                    in_order(t.zeta.len())?;
                    t.zeta.push(value)
                }
                "noise_sd" => t.noise_sd = value,
                _ => return Err(Error::Ingestion(format!("unknown term `{term}`"))),
            }
        }
        if t.zeta.len() != t.beta.len() {
            return Err(Error::Ingestion("truth file has unequal beta and zeta counts".into()));
        }
        Ok(t)
    }
}

/// Covariate and noise settings shared by the designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// AR correlation of the expression matrix.
    pub rho: f64,
    /// Correlation of the two clinical covariates.
    pub w_rho: f64,
    /// Success probability of the binary environment factor.
    pub e_prob: f64,
    /// Overrides the truth's noise sd when set.
    pub noise_sd: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { rho: 0.5, w_rho: 0.5, e_prob: 0.5, noise_sd: None }
    }
}

/// Linkage-disequilibrium parameters of two adjacent loci.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdSpec {
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
}

impl LdSpec {
    pub fn new(q1: f64, q2: f64, r: f64) -> Result<Self> {
        let s = LdSpec { q1, q2, r };
        s.haplotypes()?;
        Ok(s)
    }

    pub fn delta(&self) -> f64 {
        self.r * (self.q1 * (1.0 - self.q1) * self.q2 * (1.0 - self.q2)).sqrt()
    }

    /// `(p_AB, p_Ab, p_aB, p_ab)`.
    pub fn haplotypes(&self) -> Result<[f64; 4]> {
        let (q1, q2) = (self.q1, self.q2);
        if !(q1 > 0.0 && q1 <= 0.5 && q2 > 0.0 && q2 <= 0.5) {
            return Err(Error::Spec(format!("minor allele frequencies must lie in (0, 0.5]; got {q1}, {q2}")));
        }
        if !(self.r > -1.0 && self.r < 1.0) {
            return Err(Error::Spec(format!("correlation must lie in (-1, 1); got {}", self.r)));
        }
        let d = self.delta();
        let h = [q1 * q2 + d, q1 * (1.0 - q2) - d, (1.0 - q1) * q2 - d, (1.0 - q1) * (1.0 - q2) + d];
        if h.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Spec(format!("LD {d} gives a haplotype frequency outside [0, 1]: {h:?}")));
        }
        Ok(h)
    }

    /// Joint genotype probabilities `P(g1, g2)`, genotypes coded as minor-allele counts.
    pub fn joint_genotypes(&self) -> Result<[[f64; 3]; 3]> {
        let h = self.haplotypes()?;
        // haplotype (allele at locus 1, allele at locus 2), 1 = minor
        let haps = [(1, 1, h[0]), (1, 0, h[1]), (0, 1, h[2]), (0, 0, h[3])];
        let mut joint = [[0.0; 3]; 3];
        for &(a1, b1, p1) in &haps {
            for &(a2, b2, p2) in &haps {
                joint[a1 + a2][b1 + b2] += p1 * p2;
            }
        }
        Ok(joint)
    }

    /// `P(g2 | g1)`; rows indexed by `g1`.
    pub fn conditional_matrix(&self) -> Result<[[f64; 3]; 3]> {
        let joint = self.joint_genotypes()?;
        let mut cond = [[0.0; 3]; 3];
        for g1 in 0..3 {
            let m: f64 = joint[g1].iter().sum();
            for g2 in 0..3 {
                cond[g1][g2] = joint[g1][g2] / m;
            }
        }
        Ok(cond)
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64; 3], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    if u < probs[0] {
        0
    } else if u < probs[0] + probs[1] {
        1
    } else {
        2
    }
}

/// `n x p` AR(`rho`) Gaussian matrix with unit variances.
pub fn ar_matrix<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = std_normal(rng);
        x[(i, 0)] = prev;
        for j in 1..p {
            prev = rho * prev + s * std_normal(rng);
            x[(i, j)] = prev;
        }
    }
    x
}

/// Per column: above Q3 -> 2, within [Q1, Q3] -> 1, below Q1 -> 0.
pub fn quartile_code(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let mut col: Vec<f64> = x.column(j).iter().copied().collect();
        col.sort_by(|a, b| a.total_cmp(b));
        let (q1, q3) = (quantile_sorted(&col, 0.25), quantile_sorted(&col, 0.75));
        for i in 0..x.nrows() {
            let v = x[(i, j)];
            out[(i, j)] = if v > q3 {
                2.0
            } else if v < q1 {
                0.0
            } else {
                1.0
            };
        }
    }
    out
}

/// Attach Z, E, W and a response generated from `truth` to genetic factors `x`.
pub fn attach_response<R: Rng + ?Sized>(
    x: DMatrix<f64>,
    truth: &TruthSpec,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<GxEDataset> {
    let n = x.nrows();
    if x.ncols() != truth.p() {
        return Err(Error::Dimension(format!("{} genetic columns but truth has {}", x.ncols(), truth.p())));
    }
    if !(opts.e_prob >= 0.0 && opts.e_prob <= 1.0) || !(opts.w_rho.abs() < 1.0) {
        return Err(Error::Spec("e_prob must be in [0, 1] and |w_rho| < 1".into()));
    }
    let z = DVector::from_fn(n, |_, _| rng.gen::<f64>());
    let e = DVector::from_fn(n, |_, _| (rng.gen::<f64>() < opts.e_prob) as u8 as f64);
    let q = truth.alpha.len();
    let ws = (1.0 - opts.w_rho * opts.w_rho).sqrt();
    let mut w = DMatrix::zeros(n, q);
    for i in 0..n {
        // equicorrelated pair for q = 2; AR for longer vectors
        let mut prev = 0.0;
        for t in 0..q {
            let v = if t == 0 { std_normal(rng) } else { opts.w_rho * prev + ws * std_normal(rng) };
            w[(i, t)] = v;
            prev = v;
        }
    }
    let sd = opts.noise_sd.unwrap_or(truth.noise_sd);
    let y = truth.mean(&x, &z, &e, &w).map(|m| m + sd * std_normal(rng));
    GxEDataset::new(y, x, z, e, w)
}

pub fn gen_example1<R: Rng + ?Sized>(n: usize, p: usize, opts: &SimOptions, rng: &mut R) -> Result<(GxEDataset, TruthSpec)> {
    check_size(n, p, opts.rho)?;
    let truth = TruthSpec::example1(p)?;
    let x = ar_matrix(n, p, opts.rho, rng);
    Ok((attach_response(x, &truth, opts, rng)?, truth))
}

pub fn gen_example2<R: Rng + ?Sized>(n: usize, p: usize, opts: &SimOptions, rng: &mut R) -> Result<(GxEDataset, TruthSpec)> {
    check_size(n, p, opts.rho)?;
    let truth = TruthSpec::example1(p)?;
    let x = quartile_code(&ar_matrix(n, p, opts.rho, rng));
    Ok((attach_response(x, &truth, opts, rng)?, truth))
}

/// Markov chain of genotypes along the loci. Odd loci (1, 3, ...) have MAF
/// `q1`, even loci `q2`; each locus is drawn from the conditional genotype
/// matrix given its predecessor.
pub fn ld_genotypes<R: Rng + ?Sized>(n: usize, p: usize, ld: &LdSpec, rng: &mut R) -> Result<DMatrix<f64>> {
    let fwd = ld.conditional_matrix()?;
    let back = LdSpec { q1: ld.q2, q2: ld.q1, r: ld.r }.conditional_matrix()?;
    let q = ld.q1;
    // index = minor-allele count
    let first = [(1.0 - q) * (1.0 - q), 2.0 * q * (1.0 - q), q * q];
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut g = categorical(&first, rng);
        x[(i, 0)] = g as f64;
        for j in 1..p {
            let m = if j % 2 == 1 { &fwd } else { &back };
            g = categorical(&m[g], rng);
            x[(i, j)] = g as f64;
        }
    }
    Ok(x)
}

pub fn gen_example3<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    ld: &LdSpec,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<(GxEDataset, TruthSpec)> {
    check_size(n, p, 0.0)?;
    let truth = TruthSpec::example1(p)?;
    let x = ld_genotypes(n, p, ld, rng)?;
    Ok((attach_response(x, &truth, opts, rng)?, truth))
}

/// Read a numeric genotype matrix; a non-numeric first row is taken as a header.
pub fn read_genotypes<P: AsRef<Path>>(path: P) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingestion(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if r == 0 => continue,
            Err(_) => return Err(Error::Ingestion(format!("row {}: non-numeric genotype", r + 1))),
        }
    }
    let p = rows.first().map(|r| r.len()).ok_or_else(|| Error::Ingestion("genotype file has no rows".into()))?;
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Ingestion("genotype rows have unequal lengths".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Ingestion("genotype file contains non-finite values".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Subsample `n_sub` rows without replacement and simulate the rest from `truth`.
pub fn gen_from_genotype_file<P: AsRef<Path>, R: Rng + ?Sized>(
    path: P,
    n_sub: usize,
    truth: &TruthSpec,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<(GxEDataset, TruthSpec)> {
    let g = read_genotypes(path)?;
    subsample_genotypes(&g, n_sub, truth, opts, rng)
}

pub fn subsample_genotypes<R: Rng + ?Sized>(
    g: &DMatrix<f64>,
    n_sub: usize,
    truth: &TruthSpec,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<(GxEDataset, TruthSpec)> {
    if g.nrows() < n_sub || n_sub == 0 {
        return Err(Error::Ingestion(format!("need {n_sub} subjects, genotype file has {}", g.nrows())));
    }
    if g.ncols() != truth.p() {
        return Err(Error::Ingestion(format!("genotype file has {} loci, truth has {}", g.ncols(), truth.p())));
    }
    let rows = sample(rng, g.nrows(), n_sub).into_vec();
    let x = DMatrix::from_fn(n_sub, g.ncols(), |i, j| g[(rows[i], j)]);
    Ok((attach_response(x, truth, opts, rng)?, truth.clone()))
}

fn check_size(n: usize, p: usize, rho: f64) -> Result<()> {
    if n == 0 || p == 0 {
        return Err(Error::Spec("n and p must be positive".into()));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Spec(format!("|rho| must be below 1, got {rho}")));
    }
    Ok(())
}
