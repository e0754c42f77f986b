//! Mutual-information objectives over batches of class predictions.
//!
//! For two aligned prediction batches `Pa`, `Pb` (`B × C`, rows on the
//! simplex) the joint is `P = (1/B)·Σ_b Pa[b]ᵀ ⊗ Pb[b]`, optionally
//! symmetrized as `(P + Pᵀ)/2`, and
//! `I = Σ_ij P_ij·(ln P_ij − ln P_i − ln P_j)` with every log argument
//! clamped at [`LOG_FLOOR`](crate::autodiff::LOG_FLOOR).
//!
//! The triplet loss averages the three pairwise terms among the original,
//! weak and strong views and negates the result.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Which unsupervised objective to minimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiObjective {
    /// Mean of the three pairwise terms among original, weak and strong views.
    Triplet,
    /// Original view against the strong view only.
    SinglePair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiOptions {
    /// Symmetrize each pairwise joint before computing marginals.
    pub symmetrize: bool,
}

impl Default for MiOptions {
    fn default() -> Self {
        MiOptions { symmetrize: true }
    }
}

/// `C × C` joint distribution of two prediction batches, with marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMatrix {
    classes: usize,
    p: Vec<f64>,
}

impl JointMatrix {
    /// Wraps an explicit joint. Entries must be non-negative and sum to one.
    pub fn new(classes: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != classes * classes {
            return Err(Error::shape("joint", format!("{} entries for {} classes", p.len(), classes)));
        }
        let total: f64 = p.iter().sum();
        if p.iter().any(|&v| v < 0.0 || !v.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("joint is not a distribution (total {total})")));
        }
        Ok(JointMatrix { classes, p })
    }

    /// Joint of two prediction batches.
    pub fn from_predictions(pa: &Tensor, pb: &Tensor, opts: MiOptions) -> Result<Self> {
        let mut g = Graph::new();
        let (a, b) = (g.constant(pa.clone()), g.constant(pb.clone()));
        let j = joint(&mut g, a, b, opts)?;
        Ok(JointMatrix {
            classes: g.shape(j)[0],
            p: g.values(j).to_vec(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.classes + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.p.chunks_exact(self.classes).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.classes];
        for row in self.p.chunks_exact(self.classes) {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m
    }

    pub fn mutual_information(&self) -> f64 {
        let mut g = Graph::new();
        let t = Tensor::from_vec(vec![self.classes, self.classes], self.p.clone())
            .expect("square joint");
        let j = g.constant(t);
        let i = information(&mut g, j).expect("square joint");
        g.item(i)
    }
}

fn check_pair(g: &Graph, pa: Var, pb: Var) -> Result<()> {
    let (sa, sb) = (g.shape(pa), g.shape(pb));
    if sa.len() != 2 || sa != sb {
        return Err(Error::contract(format!("misaligned prediction batches {:?} and {:?}", sa, sb)));
    }
    if sa[0] == 0 {
        return Err(Error::contract("empty prediction batch"));
    }
    Ok(())
}

/// Differentiable joint `P` of two `B × C` prediction batches.
pub fn joint(g: &mut Graph, pa: Var, pb: Var, opts: MiOptions) -> Result<Var> {
    check_pair(g, pa, pb)?;
    let batch = g.shape(pa)[0] as f64;
    let at = g.transpose(pa)?;
    let outer = g.matmul(at, pb)?;
    let p = g.scale(outer, 1.0 / batch)?;
    if !opts.symmetrize {
        return Ok(p);
    }
    let pt = g.transpose(p)?;
    let both = g.add(p, pt)?;
    g.scale(both, 0.5)
}

/// Differentiable `I` of a `C × C` joint node.
pub fn information(g: &mut Graph, p: Var) -> Result<Var> {
    let row = g.sum_cols(p)?;
    let col = g.sum_rows(p)?;
    let independent = g.matmul(row, col)?;
    let log_p = g.log(p)?;
    let log_ind = g.log(independent)?;
    let ratio = g.sub(log_p, log_ind)?;
    let terms = g.mul(p, ratio)?;
    g.sum(terms)
}

/// `I(Pa; Pb)`.
pub fn pair_information(g: &mut Graph, pa: Var, pb: Var, opts: MiOptions) -> Result<Var> {
    let p = joint(g, pa, pb, opts)?;
    information(g, p)
}

/// `−I(Pa; Pb)`.
pub fn single_pair_mi_loss(g: &mut Graph, pa: Var, pb: Var, opts: MiOptions) -> Result<Var> {
    let i = pair_information(g, pa, pb, opts)?;
    g.scale(i, -1.0)
}

/// `−(1/3)·[I(Pu;Pw) + I(Pu;Ps) + I(Pw;Ps)]`.
pub fn triplet_mi_loss(g: &mut Graph, pu: Var, pw: Var, ps: Var, opts: MiOptions) -> Result<Var> {
    check_pair(g, pu, pw)?;
    check_pair(g, pu, ps)?;
    let uw = pair_information(g, pu, pw, opts)?;
    let us = pair_information(g, pu, ps, opts)?;
    let ws = pair_information(g, pw, ps, opts)?;
    let sum = g.add(uw, us)?;
    let sum = g.add(sum, ws)?;
    g.scale(sum, -1.0 / 3.0)
}

/// Numeric value of an objective on constant prediction batches.
pub fn objective_value(objective: MiObjective, pu: &Tensor, pw: &Tensor, ps: &Tensor, opts: MiOptions) -> Result<f64> {
    let mut g = Graph::new();
    let (u, w, s) = (g.constant(pu.clone()), g.constant(pw.clone()), g.constant(ps.clone()));
    let loss = match objective {
        MiObjective::Triplet => triplet_mi_loss(&mut g, u, w, s, opts)?,
        MiObjective::SinglePair => single_pair_mi_loss(&mut g, u, s, opts)?,
    };
    Ok(g.item(loss))
}
