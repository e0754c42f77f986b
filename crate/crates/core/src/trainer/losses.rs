//! Loss terms of one training step, built on a graph.

use crate::autodiff::{Graph, Tensor, Var};
use crate::dtm::ProxyLabel;
use crate::error::{Error, Result};
use crate::mi::{triplet_mi_loss, MiOptions};

use super::config::UnlabeledNorm;

/// `−(1/denom)·Σ_i log p_i[target_i]` over rows with a target; `None` when
/// no row has one.
pub fn cross_entropy(g: &mut Graph, probs: Var, targets: &[Option<usize>], denom: f64) -> Result<Option<Var>> {
    let (rows, classes) = match g.shape(probs) {
        &[r, c] => (r, c),
        s => return Err(Error::shape("cross_entropy", format!("{:?}", s))),
    };
    if targets.len() != rows {
        return Err(Error::contract(format!("{} targets for {} rows", targets.len(), rows)));
    }
    if targets.iter().all(Option::is_none) {
        return Ok(None);
    }
    let mut onehot = Tensor::zeros(vec![rows, classes]);
    for (i, t) in targets.iter().enumerate() {
        if let Some(c) = *t {
            if c >= classes {
                return Err(Error::contract(format!("target {c} out of range")));
            }
            onehot.values_mut()[i * classes + c] = 1.0;
        }
    }
    let mask = g.constant(onehot);
    let logp = g.log(probs)?;
    let picked = g.mul(logp, mask)?;
    let total = g.sum(picked)?;
    Ok(Some(g.scale(total, -1.0 / denom)?))
}

/// Scalar loss nodes of one step; absent terms are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub ce_labeled: Var,
    pub ce_unlabeled: Option<Var>,
    pub tmi: Option<Var>,
    pub total: Var,
}

impl LossTerms {
    pub fn values(&self, g: &Graph) -> (f64, f64, f64, f64) {
        (
            g.item(self.ce_labeled),
            self.ce_unlabeled.map_or(0.0, |v| g.item(v)),
            self.tmi.map_or(0.0, |v| g.item(v)),
            g.item(self.total),
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossSettings {
    /// Weight on the mutual-information term; 0 disables it.
    pub alpha: f64,
    pub norm: UnlabeledNorm,
    pub mi: MiOptions,
}

/// Prediction nodes of the views entering the loss.
#[derive(Clone, Copy, Debug)]
pub struct ViewProbs {
    pub labeled_strong: Var,
    /// Original, weak and strong unlabeled views; absent in labeled-only steps.
    pub unlabeled: Option<(Var, Var, Var)>,
}

/// `L = CE_l + CE_u + α·L_tmi`.
pub fn loss_terms(
    g: &mut Graph,
    probs: ViewProbs,
    labels: &[usize],
    proxies: &[ProxyLabel],
    settings: LossSettings,
) -> Result<LossTerms> {
    if labels.is_empty() {
        return Err(Error::contract("empty labeled batch"));
    }
    let targets: Vec<Option<usize>> = labels.iter().map(|&l| Some(l)).collect();
    let ce_labeled = cross_entropy(g, probs.labeled_strong, &targets, labels.len() as f64)?
        .expect("labeled batch is non-empty");
    let mut total = ce_labeled;
    let mut ce_unlabeled = None;
    let mut tmi = None;
    if let Some((pu, pw, ps)) = probs.unlabeled {
        let targets: Vec<Option<usize>> = proxies.iter().map(|p| p.get()).collect();
        let denom = match settings.norm {
            UnlabeledNorm::Valid => targets.iter().filter(|t| t.is_some()).count(),
            UnlabeledNorm::Batch => targets.len(),
        };
        ce_unlabeled = cross_entropy(g, ps, &targets, denom.max(1) as f64)?;
        if let Some(cu) = ce_unlabeled {
            total = g.add(total, cu)?;
        }
        if settings.alpha > 0.0 {
            let t = triplet_mi_loss(g, pu, pw, ps, settings.mi)?;
            let weighted = g.scale(t, settings.alpha)?;
            total = g.add(total, weighted)?;
            tmi = Some(t);
        }
    }
    Ok(LossTerms {
        ce_labeled,
        ce_unlabeled,
        tmi,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ignored_rows_contribute_nothing() {
        let probs = Tensor::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
        let mut g = Graph::new();
        let p = g.leaf(probs, true);
        let ce = cross_entropy(&mut g, p, &[Some(0), None, Some(1)], 2.0).unwrap().unwrap();
        let expected = -(0.7f64.ln() + 0.5f64.ln()) / 2.0;
        assert!((g.item(ce) - expected).abs() < 1e-15);
        g.backward(ce).unwrap();
        assert_eq!(&g.grad(p).unwrap()[2..4], &[0.0, 0.0]);

        let mut g = Graph::new();
        let p = g.leaf(Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap(), true);
        assert!(cross_entropy(&mut g, p, &[None], 1.0).unwrap().is_none());
    }
}
