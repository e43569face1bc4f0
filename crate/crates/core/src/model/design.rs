use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::GxEDataset;
use crate::splines::SplineSystem;
use crate::variant::{Family, MethodVariant};

/// Basis for coefficient functions of `z`: the changed B-spline basis, or
/// `(1, z)` for the linear model.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveBasis {
    Spline(SplineSystem),
    Linear { lo: f64, hi: f64 },
}

impl CurveBasis {
    pub fn for_variant(variant: MethodVariant, spline: &SplineSystem) -> Self {
        if variant.linear() {
            let c = spline.config();
            CurveBasis::Linear { lo: c.domain_lo, hi: c.domain_hi }
        } else {
            CurveBasis::Spline(spline.clone())
        }
    }

    /// Number of coefficients for one full function (constant plus varying part).
    pub fn n_full(&self) -> usize {
        match self {
            CurveBasis::Spline(s) => s.n_basis(),
            CurveBasis::Linear { .. } => 2,
        }
    }

    /// Size of the varying part.
    pub fn n_varying(&self) -> usize {
        self.n_full() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            CurveBasis::Spline(s) => (s.config().domain_lo, s.config().domain_hi),
            CurveBasis::Linear { lo, hi } => (*lo, *hi),
        }
    }

    pub fn clamp(&self, z: f64) -> f64 {
        let (lo, hi) = self.domain();
        z.clamp(lo, hi)
    }

    /// Varying-part basis values at `z` (clamped).
    pub fn varying_into(&self, z: f64, out: &mut [f64]) {
        match self {
            CurveBasis::Spline(s) => {
                let mut raw = vec![0.0; s.n_basis()];
                s.eval_into(z, &mut raw);
                out.copy_from_slice(&raw[1..]);
            }
            CurveBasis::Linear { .. } => out[0] = self.clamp(z),
        }
    }

    pub fn varying(&self, z: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_varying()];
        self.varying_into(z, &mut v);
        v
    }

    /// Evaluate `c + varying(z) . v` for a split coefficient function.
    pub fn eval(&self, constant: f64, varying: &[f64], z: f64) -> f64 {
        constant + self.varying(z).iter().zip(varying).map(|(b, g)| b * g).sum::<f64>()
    }

    /// n x n_full block with a leading column of ones.
    pub fn block(&self, z: &[f64]) -> DMatrix<f64> {
        match self {
            CurveBasis::Spline(s) => s.basis_block(z).into_inner(),
            CurveBasis::Linear { .. } => DMatrix::from_fn(z.len(), 2, |i, k| if k == 0 { 1.0 } else { self.clamp(z[i]) }),
        }
    }
}

/// A penalized coefficient block: design columns plus their Gram matrix.
#[derive(Debug, Clone)]
pub struct PenalizedBlock {
    pub family: Family,
    /// Zero-based gene index.
    pub gene: usize,
    pub design: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

impl PenalizedBlock {
    fn new(family: Family, gene: usize, design: DMatrix<f64>) -> Self {
        let gram = design.tr_mul(&design);
        PenalizedBlock { family, gene, design, gram }
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }
}

/// Fixed design quantities for one dataset and variant. Immutable once
/// built; shared read-only across chains.
#[derive(Debug, Clone)]
pub struct DesignCache {
    pub variant: MethodVariant,
    pub basis: CurveBasis,
    /// Intercept-function basis; first column all ones.
    pub b0: DMatrix<f64>,
    pub b0_gram: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub w_gram: DMatrix<f64>,
    pub e: DVector<f64>,
    pub e_sq: f64,
    /// Penalized blocks grouped by gene, in sweep order.
    pub blocks: Vec<PenalizedBlock>,
    gene_blocks: Vec<[Option<usize>; 3]>,
    n: usize,
    p: usize,
}

impl DesignCache {
    pub fn assemble(data: &GxEDataset, spline: &SplineSystem, variant: MethodVariant) -> Result<Self> {
        data.validate()?;
        let n = data.n();
        let p = data.p();
        if let Some(z) = data.z.iter().find(|&&z| !spline.contains(z)) {
            let c = spline.config();
            return Err(Error::InvalidConfig(format!(
                "z = {z} outside spline domain [{}, {}]",
                c.domain_lo, c.domain_hi
            )));
        }
        let basis = CurveBasis::for_variant(variant, spline);
        let b0 = basis.block(data.z.as_slice());
        let b0_gram = b0.tr_mul(&b0);
        let w = data.w.clone();
        let w_gram = w.tr_mul(&w);
        let e = data.e.clone();
        let e_sq = e.dot(&e);

        let mut blocks = Vec::with_capacity(3 * p);
        let mut gene_blocks = vec![[None; 3]; p];
        for j in 0..p {
            let xj: DVector<f64> = data.x.column(j).into_owned();
            let mut push = |fam: Family, design: DMatrix<f64>| {
                gene_blocks[j][fam.index()] = Some(blocks.len());
                blocks.push(PenalizedBlock::new(fam, j, design));
            };
            // varying part: B_k(Z_i) X_ij for k >= 2 (or Z_i X_ij for the linear model)
            let u = DMatrix::from_fn(n, basis.n_varying(), |i, k| b0[(i, k + 1)] * xj[i]);
            let t = DMatrix::from_fn(n, 1, |i, _| xj[i] * data.e[i]);
            if variant.split() {
                push(Family::Constant, DMatrix::from_column_slice(n, 1, xj.as_slice()));
                push(Family::Varying, u);
            } else {
                let mut whole = DMatrix::zeros(n, basis.n_full());
                whole.column_mut(0).copy_from(&xj);
                whole.columns_mut(1, basis.n_varying()).copy_from(&u);
                push(Family::Varying, whole);
            }
            push(Family::LinearE, t);
        }
        Ok(DesignCache { variant, basis, b0, b0_gram, w, w_gram, e, e_sq, blocks, gene_blocks, n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    /// Index of the block for `(family, gene)`, if the variant has one.
    pub fn block_index(&self, family: Family, gene: usize) -> Option<usize> {
        self.gene_blocks.get(gene).and_then(|g| g[family.index()])
    }

    /// Blocks of one gene in sweep order.
    pub fn gene_block_indices(&self, gene: usize) -> impl Iterator<Item = usize> + '_ {
        self.gene_blocks[gene].iter().flatten().copied()
    }

    pub fn family_blocks(&self, family: Family) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().enumerate().filter(move |(_, b)| b.family == family).map(|(i, _)| i)
    }

    /// `U_j`: the varying-part interaction columns of gene `j`.
    pub fn interaction(&self, gene: usize) -> DMatrix<f64> {
        let b = &self.blocks[self.block_index(Family::Varying, gene).expect("every variant has a varying block")];
        if self.variant.split() {
            b.design.clone()
        } else {
            b.design.columns(1, b.dim() - 1).into_owned()
        }
    }

    /// `T_j = X_j * E`.
    pub fn e_interaction(&self, gene: usize) -> DVector<f64> {
        let b = &self.blocks[self.block_index(Family::LinearE, gene).expect("every variant has an E block")];
        b.design.column(0).into_owned()
    }

    /// Number of regression coefficients after basis expansion.
    pub fn n_coefficients(&self) -> usize {
        self.b0.ncols() + self.q() + 1 + self.blocks.iter().map(|b| b.dim()).sum::<usize>()
    }
}
