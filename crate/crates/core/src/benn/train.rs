use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{grad_step, LossConfig, LossTerms};
use super::net::GeneratorNet;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Predictor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 300,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::arg("batch size must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(Error::arg("at least one training epoch is required"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::arg("learning rate must be a non-negative number"));
        }
        Ok(())
    }
}

/// Loss terms summed over the batches of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub terms: LossTerms,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    /// CSV with header `epoch,term1,term2,term3,total`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "term1", "term2", "term3", "total"])?;
        for r in &self.epochs {
            out.write_record([
                r.epoch.to_string(),
                r.terms.term1.to_string(),
                r.terms.term2.to_string(),
                r.terms.term3.to_string(),
                r.terms.total.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<training log>", e))?;
        Ok(())
    }
}

/// Splits a shuffled order into batches, folding a trailing single row into
/// the previous batch so every batch has a pair.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

/// Mini-batch gradient descent over `ds` (expected to be normalized).
pub fn train<P: Predictor + ?Sized>(
    mut net: GeneratorNet,
    ds: &Dataset,
    model: &P,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
) -> Result<(GeneratorNet, TrainingLog)> {
    lcfg.validate()?;
    tcfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::arg("training needs at least two rows"));
    }
    if ds.n_features() != net.n_features {
        return Err(Error::arg("dataset and generator disagree on feature count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut log = TrainingLog::default();
    let rows = ds.rows();
    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        for (step, idx) in batches(&order, tcfg.batch_size).into_iter().enumerate() {
            let batch = rows.select(ndarray::Axis(0), idx);
            let terms = grad_step(&mut net, batch.view(), model, lcfg, tcfg.learning_rate).map_err(|e| match e {
                Error::Training { message, .. } => Error::Training { epoch, step, message },
                other => other,
            })?;
            sum += terms;
        }
        log.epochs.push(EpochRecord { epoch, terms: sum });
        if epoch % 50 == 0 || epoch + 1 == tcfg.epochs {
            log::debug!("epoch {epoch}: total loss {:.6}", sum.total);
        }
    }
    Ok((net, log))
}
