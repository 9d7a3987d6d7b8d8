//! Unsupervised bias estimation with a bias-vector generator.
//!
//! The generator maps each sample to a perturbation `B(x)` in `(-1, 1)^n`.
//! Training rewards perturbations that change the audited model's outcome
//! while keeping them sparse and similar across samples; the mean absolute
//! entry per feature is that feature's bias estimation.

mod loss;
mod net;
mod train;

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Predictor;

pub use loss::{grad_step, gradients, loss, FdTarget, LossConfig, LossTerms};
pub use net::{GeneratorNet, Gradients, Layer, DEFAULT_HIDDEN_LAYERS, DEFAULT_HIDDEN_UNITS, GENERATOR_FORMAT_VERSION};
pub use train::{train, EpochRecord, TrainConfig, TrainingLog};

/// Per-feature bias estimations in `[0, 1]`, in column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BennEstimate {
    pub features: Vec<String>,
    pub values: Vec<f64>,
}

impl BennEstimate {
    pub fn get(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|i| self.values[i])
    }

    /// Keeps only the named features, in the given order.
    pub fn restrict(&self, features: &[String]) -> Result<BennEstimate> {
        let values = features
            .iter()
            .map(|f| {
                self.get(f)
                    .ok_or_else(|| Error::arg(format!("no estimation for feature `{f}`")))
            })
            .collect::<Result<_>>()?;
        Ok(BennEstimate {
            features: features.to_vec(),
            values,
        })
    }
}

/// Mean absolute value of each column.
pub fn post_process(vectors: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if vectors.nrows() == 0 {
        return Err(Error::arg("no bias vectors to post-process"));
    }
    let m = vectors.nrows() as f64;
    Ok(vectors.map_axis(Axis(0), |col| {
        // Summing in sorted order makes the result independent of row order, bit for bit.
        let mut abs: Vec<f64> = col.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        abs.iter().sum::<f64>() / m
    }))
}

/// Runs the generator over every row of `ds` and post-processes the result.
pub fn estimate_bias(net: &GeneratorNet, ds: &Dataset) -> Result<BennEstimate> {
    let vectors = net.forward(ds.rows().view())?;
    let values = post_process(vectors.view())?;
    Ok(BennEstimate {
        features: ds.schema().columns.clone(),
        values: values.to_vec(),
    })
}

/// Trains a fresh default generator on `ds` and returns its estimations for
/// every column, plus the trained net and training log.
pub fn run_benn<P: Predictor + ?Sized>(
    ds: &Dataset,
    model: &P,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
    net_seed: u64,
) -> Result<(BennEstimate, GeneratorNet, TrainingLog)> {
    let net = GeneratorNet::new(ds.n_features(), net_seed);
    let (net, log) = train(net, ds, model, lcfg, tcfg)?;
    let est = estimate_bias(&net, ds)?;
    Ok((est, net, log))
}
