use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::net::{GeneratorNet, Gradients};
use crate::error::{Error, Result};
use crate::model::Predictor;

/// What the finite differences on `B` are taken of for the first term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdTarget {
    /// Differences of the per-sample term `(M(x + B) - M(x))²` itself.
    #[default]
    Composite,
    /// Differences of `M(x + B)`, chained with `2 (M(x + B) - M(x))`.
    /// Vanishes wherever no prediction has flipped yet.
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Sharpness of the nonzero-count surrogate `b² / (b² + eps²)`.
    pub eps: f64,
    /// Finite-difference step on each coordinate of `B`.
    pub fd_step: f64,
    pub fd_target: FdTarget,
    /// Divide each sample's surrogate count by `n` before squaring.
    pub normalize_count: bool,
    /// Clamp perturbed inputs `x + B` to `[0, 1]` before querying the model.
    pub clamp: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            eps: 0.3,
            fd_step: 0.6,
            fd_target: FdTarget::Composite,
            normalize_count: true,
            clamp: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::arg(format!("{name} must be a non-negative number")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::arg("eps must be positive"));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::arg("fd step must be positive"));
        }
        Ok(())
    }
}

/// Loss value split into its three terms; `total = term1 + term2 + term3`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// `-λ1 Σ (M(x + B) - M(x))²`, never positive.
    pub term1: f64,
    /// `λ2 Σ (count)²`.
    pub term2: f64,
    /// `λ3 Σ_{i,j} |B_i - B_j|²` over ordered pairs.
    pub term3: f64,
    pub total: f64,
}

impl LossTerms {
    fn new(term1: f64, term2: f64, term3: f64) -> Self {
        Self {
            term1,
            term2,
            term3,
            total: term1 + term2 + term3,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.term1.is_finite() && self.term2.is_finite() && self.term3.is_finite()
    }
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        *self = Self::new(self.term1 + o.term1, self.term2 + o.term2, self.term3 + o.term3);
    }
}

fn surrogate(b: f64, eps: f64) -> f64 {
    let b2 = b * b;
    b2 / (b2 + eps * eps)
}

fn surrogate_deriv(b: f64, eps: f64) -> f64 {
    let e2 = eps * eps;
    let den = b * b + e2;
    2.0 * b * e2 / (den * den)
}

fn count_scale(cfg: &LossConfig, n: usize) -> f64 {
    if cfg.normalize_count {
        1.0 / n as f64
    } else {
        1.0
    }
}

/// Terms 2 and 3 with their gradient with respect to `B`.
fn regularizers(b: &Array2<f64>, cfg: &LossConfig) -> (f64, f64, Array2<f64>) {
    let (k, n) = b.dim();
    let c = count_scale(cfg, n);
    let mut grad = Array2::zeros((k, n));
    let mut term2 = 0.0;
    for (row, mut g) in b.outer_iter().zip(grad.outer_iter_mut()) {
        let count = c * row.iter().map(|&v| surrogate(v, cfg.eps)).sum::<f64>();
        term2 += count * count;
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = cfg.lambda2 * 2.0 * count * c * surrogate_deriv(v, cfg.eps);
        }
    }
    // Σ_{i,j} |B_i - B_j|² = 2k Σ_i |B_i - mean|², gradient 4k (B_i - mean).
    let mean = b.mean_axis(Axis(0)).expect("batch is non-empty");
    let centered = b - &mean;
    let term3 = 2.0 * k as f64 * centered.iter().map(|v| v * v).sum::<f64>();
    grad.scaled_add(cfg.lambda3 * 4.0 * k as f64, &centered);
    (cfg.lambda2 * term2, cfg.lambda3 * term3, grad)
}

fn check_batch(net: &GeneratorNet, batch: ArrayView2<'_, f64>, model: &(impl Predictor + ?Sized)) -> Result<()> {
    if batch.nrows() < 2 {
        return Err(Error::arg("a loss batch needs at least two rows"));
    }
    if model.n_features() != net.n_features {
        return Err(Error::arg("model and generator disagree on feature count"));
    }
    Ok(())
}

fn query(model: &(impl Predictor + ?Sized), rows: Array2<f64>, cfg: &LossConfig) -> Result<Vec<f64>> {
    let rows = if cfg.clamp {
        rows.mapv(|v| v.clamp(0.0, 1.0))
    } else {
        rows
    };
    crate::model::predict(model, rows.view())
}

/// Evaluates the loss on one batch.
pub fn loss<P: Predictor + ?Sized>(
    net: &GeneratorNet,
    batch: ArrayView2<'_, f64>,
    model: &P,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    check_batch(net, batch, model)?;
    let b = net.forward(batch)?;
    let k = batch.nrows();
    let mut rows = Array2::zeros((2 * k, net.n_features));
    rows.slice_mut(ndarray::s![..k, ..]).assign(&batch);
    rows.slice_mut(ndarray::s![k.., ..]).assign(&(&batch + &b));
    let out = query(model, rows, cfg)?;
    let term1 = -cfg.lambda1 * (0..k).map(|i| (out[k + i] - out[i]).powi(2)).sum::<f64>();
    let (term2, term3, _) = regularizers(&b, cfg);
    Ok(LossTerms::new(term1, term2, term3))
}

/// Loss and parameter gradients for one batch.
///
/// Terms 2 and 3 are differentiated exactly. Term 1 goes through the
/// black-box model by central differences on each coordinate of `B`,
/// costing `2n + 2` queries per row, all sent in a single batch.
pub fn gradients<P: Predictor + ?Sized>(
    net: &GeneratorNet,
    batch: ArrayView2<'_, f64>,
    model: &P,
    cfg: &LossConfig,
) -> Result<(LossTerms, Gradients)> {
    check_batch(net, batch, model)?;
    let trace = net.trace(batch)?;
    let b = trace.acts.last().expect("trace has output");
    let (k, n) = b.dim();
    let h = cfg.fd_step;

    // Blocks: x, x + B, then x + B ± h e_j for each j.
    let shifted = &batch + b;
    let mut rows = Array2::zeros(((2 + 2 * n) * k, n));
    rows.slice_mut(ndarray::s![..k, ..]).assign(&batch);
    rows.slice_mut(ndarray::s![k..2 * k, ..]).assign(&shifted);
    for j in 0..n {
        for (s, sign) in [(0, 1.0), (1, -1.0)] {
            let start = (2 + 2 * j + s) * k;
            let mut block = rows.slice_mut(ndarray::s![start..start + k, ..]);
            block.assign(&shifted);
            block.column_mut(j).mapv_inplace(|v| v + sign * h);
        }
    }
    let out = query(model, rows, cfg)?;
    let at = |block: usize, i: usize| out[block * k + i];

    let mut term1 = 0.0;
    let mut grad = Array2::zeros((k, n));
    for i in 0..k {
        let base = at(0, i);
        let diff = at(1, i) - base;
        term1 -= cfg.lambda1 * diff * diff;
        for j in 0..n {
            let (plus, minus) = (at(2 + 2 * j, i), at(3 + 2 * j, i));
            let d = match cfg.fd_target {
                FdTarget::Composite => ((plus - base).powi(2) - (minus - base).powi(2)) / (2.0 * h),
                FdTarget::Model => 2.0 * diff * (plus - minus) / (2.0 * h),
            };
            grad[[i, j]] = -cfg.lambda1 * d;
        }
    }
    let (term2, term3, reg_grad) = regularizers(b, cfg);
    grad += &reg_grad;
    Ok((LossTerms::new(term1, term2, term3), net.backward(&trace, &grad)))
}

/// One gradient-descent step in place. Non-finite loss or gradients leave
/// the net untouched and return a training error (epoch and step 0; the
/// training loop fills in its own position).
pub fn grad_step<P: Predictor + ?Sized>(
    net: &mut GeneratorNet,
    batch: ArrayView2<'_, f64>,
    model: &P,
    cfg: &LossConfig,
    lr: f64,
) -> Result<LossTerms> {
    let (terms, grads) = gradients(net, batch, model, cfg)?;
    if !terms.is_finite() || !grads.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            step: 0,
            message: format!(
                "non-finite loss or gradient (loss {:?}, max |grad| {})",
                terms,
                grads.max_abs()
            ),
        });
    }
    net.apply(&grads, lr);
    if !net.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            step: 0,
            message: "parameters became non-finite".into(),
        });
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantPredictor, StumpPredictor};
    use ndarray::array;

    fn no_fd(cfg: LossConfig) -> LossConfig {
        LossConfig { lambda1: 0.0, ..cfg }
    }

    #[test]
    fn zero_net_has_zero_loss() {
        let net = GeneratorNet::zeros(3, 8, 40);
        let batch = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.5, 0.5, 0.5]];
        let model = StumpPredictor::new(3, 0, 0.5);
        let l = loss(&net, batch.view(), &model, &LossConfig::default()).unwrap();
        assert_eq!(l, LossTerms::default());
    }

    #[test]
    fn identical_vectors_have_no_pair_term() {
        let b = array![[0.3, -0.2], [0.3, -0.2]];
        let (_, term3, _) = regularizers(&b, &LossConfig::default());
        assert_eq!(term3, 0.0);
    }

    #[test]
    fn hand_evaluated_two_row_batch() {
        // Single-feature net whose output for row 1 is tanh(3) and for row 2 is 0.
        let mut net = GeneratorNet::zeros(1, 1, 1);
        net.layers[0].weights[[0, 0]] = 1.0;
        net.layers[1].weights[[0, 0]] = 3.0;
        let batch = array![[1.0], [0.0]];
        let b = net.forward(batch.view()).unwrap();
        let v = 3.0f64.tanh();
        assert_eq!(b[[0, 0]], v);
        assert_eq!(b[[1, 0]], 0.0);
        let cfg = LossConfig {
            eps: 1e-4,
            normalize_count: false,
            ..LossConfig::default()
        };
        let model = ConstantPredictor::new(1, 0.4);
        let l = loss(&net, batch.view(), &model, &cfg).unwrap();
        let s = v * v / (v * v + 1e-8);
        assert!((s - 1.0).abs() < 1e-7);
        assert_eq!(l.term1, 0.0);
        assert!((l.term2 - 1.0).abs() < 1e-7);
        assert!((l.term3 - 2.0 * v * v).abs() < 1e-12);
        assert!((l.total - (1.0 + 2.0 * v * v)).abs() < 1e-7);
    }

    #[test]
    fn count_term_is_normalized_by_width() {
        let b = array![[0.9, 0.9, 0.0, 0.0]];
        let cfg = LossConfig {
            eps: 1e-6,
            ..LossConfig::default()
        };
        let (term2, _, _) = regularizers(&b, &cfg);
        assert!((term2 - 0.25).abs() < 1e-9);
        let (term2, _, _) = regularizers(
            &b,
            &LossConfig {
                normalize_count: false,
                ..cfg
            },
        );
        assert!((term2 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn terms_have_fixed_signs() {
        let net = GeneratorNet::new(3, 5);
        let batch = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let model = StumpPredictor::new(3, 0, 0.5);
        let l = loss(&net, batch.view(), &model, &LossConfig::default()).unwrap();
        assert!(l.term1 <= 0.0 && l.term2 >= 0.0 && l.term3 >= 0.0);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut net = GeneratorNet::new(3, 1);
        let before = net.clone();
        let batch = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        grad_step(
            &mut net,
            batch.view(),
            &StumpPredictor::new(3, 0, 0.5),
            &LossConfig::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn constant_model_gives_no_first_term_gradient() {
        let net = GeneratorNet::new(3, 2);
        let batch = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.2, 0.4, 0.9]];
        let model = ConstantPredictor::new(3, 0.7);
        let (_, with) = gradients(&net, batch.view(), &model, &LossConfig::default()).unwrap();
        let (_, without) = gradients(&net, batch.view(), &model, &no_fd(LossConfig::default())).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn composite_target_sees_flips_the_model_target_misses() {
        // At B ≈ 0 nothing has flipped yet, so the chained form is zero.
        let net = GeneratorNet::zeros(3, 2, 4);
        let batch = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let model = StumpPredictor::new(3, 0, 0.5);
        let reg_free = LossConfig {
            lambda2: 0.0,
            lambda3: 0.0,
            ..LossConfig::default()
        };
        let (_, g_model) = gradients(
            &net,
            batch.view(),
            &model,
            &LossConfig {
                fd_target: FdTarget::Model,
                ..reg_free.clone()
            },
        )
        .unwrap();
        assert_eq!(g_model.max_abs(), 0.0);
        let (_, g_comp) = gradients(&net, batch.view(), &model, &reg_free).unwrap();
        assert!(g_comp.layers.last().unwrap().bias[0] != 0.0);
    }

    #[test]
    fn one_row_batch_rejected() {
        let net = GeneratorNet::new(3, 0);
        let model = StumpPredictor::new(3, 0, 0.5);
        assert!(loss(&net, array![[0.0, 0.0, 0.0]].view(), &model, &LossConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig {
            eps: 0.0,
            ..LossConfig::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            lambda2: -1.0,
            ..LossConfig::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            fd_step: f64::NAN,
            ..LossConfig::default()
        }
        .validate()
        .is_err());
    }
}
