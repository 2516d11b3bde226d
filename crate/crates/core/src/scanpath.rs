//! Scanpath generation: gradient descent of the classification loss with
//! respect to the fixation coordinates.
//!
//! Each committed fixation expands the visibility state; the next fixation
//! starts where the previous one ended and follows the negative gradient of
//! the loss evaluated on the candidate rendering, clamped to image bounds.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::foveation::{self, FoveationConfig, FoveationError, FoveationState};
use crate::predictor::{cross_entropy, Predictor, PredictorError};
use crate::scalar::Scalar;
use crate::tensor::{Array, Graph, TensorError, Var};

#[derive(Debug, Error)]
pub enum ScanpathError {
    #[error("{field} must be {constraint}")]
    InvalidParameter { field: &'static str, constraint: &'static str },
    #[error("target class {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },
    #[error("fixation ({0}, {1}) lies outside a {2}x{3} image")]
    FixationOutOfBounds(f64, f64, usize, usize),
    #[error("gradient or loss became non-finite")]
    NonFinite,
    #[error("while optimizing fixation {index}: {source}")]
    AtFixation { index: usize, #[source] source: Box<ScanpathError> },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Foveation(#[from] FoveationError),
}

/// How the first fixation is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitPolicy {
    /// Image center, the default.
    Center,
    /// Uniform over the image, deterministic per seed.
    Random { seed: u64 },
}

/// Which class the loss is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetPolicy {
    /// The predictor's own top class on the unfoveated image.
    Predicted,
    /// An explicit label.
    Label(usize),
}

/// Scanpath generation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanpathConfig<T> {
    /// Number of committed fixations.
    pub fixation_count: usize,
    /// Descent step in pixels per unit gradient.
    pub step_size: T,
    /// Gradient steps taken before committing each fixation.
    pub inner_steps: usize,
    pub init: InitPolicy,
    pub target: TargetPolicy,
}

impl<T: Scalar> ScanpathConfig<T> {
    /// Defaults for a given image width: five fixations, single-step inner
    /// optimization, step size a tenth of the width, center start.
    pub fn for_width(width: usize) -> Self {
        Self {
            fixation_count: 5,
            step_size: T::of_usize(width) / T::of(10.0),
            inner_steps: 1,
            init: InitPolicy::Center,
            target: TargetPolicy::Predicted,
        }
    }

    pub fn validate(&self) -> Result<(), ScanpathError> {
        if self.fixation_count < 1 {
            return Err(ScanpathError::InvalidParameter {
                field: "fixation_count",
                constraint: "at least 1",
            });
        }
        if !(self.step_size > T::zero()) {
            return Err(ScanpathError::InvalidParameter { field: "step_size", constraint: "positive" });
        }
        if self.inner_steps < 1 {
            return Err(ScanpathError::InvalidParameter {
                field: "inner_steps",
                constraint: "at least 1",
            });
        }
        Ok(())
    }
}

/// An ordered fixation sequence with the loss observed after committing each
/// fixation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scanpath<T> {
    fixations: Vec<(T, T)>,
    losses: Vec<T>,
    initial_loss: T,
    target: usize,
}

impl<T: Scalar> Scanpath<T> {
    pub fn from_parts(fixations: Vec<(T, T)>, losses: Vec<T>, initial_loss: T, target: usize) -> Self {
        assert_eq!(fixations.len(), losses.len());
        Self { fixations, losses, initial_loss, target }
    }

    pub fn fixations(&self) -> &[(T, T)] {
        &self.fixations
    }

    /// Loss of the rendered state after committing fixation `i`.
    pub fn losses(&self) -> &[T] {
        &self.losses
    }

    /// Loss of the fully coarse rendering, before any fixation.
    pub fn initial_loss(&self) -> T {
        self.initial_loss
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    /// Target-class confidence after each fixation, derived from the
    /// recorded cross-entropy losses.
    pub fn confidences(&self) -> Vec<T> {
        self.losses.iter().map(|&l| (-l).exp()).collect()
    }

    /// Confidence before any fixation.
    pub fn initial_confidence(&self) -> T {
        (-self.initial_loss).exp()
    }

    /// Plain-text export: one `t,row,col,loss` line per fixation, `t`
    /// starting at 1, full floating-point precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, ((r, c), loss)) in self.fixations.iter().zip(&self.losses).enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, r, c, loss).expect("string write");
        }
        out
    }
}

/// One descent step on an already-built graph: backpropagates `loss`,
/// reads the gradient of the `[2]`-shaped fixation tensor, and returns the
/// clamped update together with the loss value.
fn descend_step<T: Scalar>(
    g: &mut Graph<T>,
    loss: Var,
    fixation: Var,
    step_size: T,
    max_row: T,
    max_col: T,
) -> Result<((T, T), T), ScanpathError> {
    let loss_value = g.scalar_value(loss);
    g.backward(loss)?;
    let grad = g.grad(fixation).expect("fixation participates in the loss");
    let (gr, gc) = (grad[0], grad[1]);
    if !(loss_value.is_finite() && gr.is_finite() && gc.is_finite()) {
        return Err(ScanpathError::NonFinite);
    }
    let (r0, c0) = (g.data(fixation)[0], g.data(fixation)[1]);
    let r = (r0 - step_size * gr).max(T::zero()).min(max_row);
    let c = (c0 - step_size * gc).max(T::zero()).min(max_col);
    Ok(((r, c), loss_value))
}

/// One gradient step of the classification loss with respect to the fixation
/// location, over the candidate rendering of the current state. Returns the
/// moved (bounds-clamped) fixation and the loss at the starting point.
pub fn fixation_step<T: Scalar>(
    predictor: &Predictor<T>,
    image: &Array<T>,
    coarse: &Array<T>,
    state: &FoveationState<T>,
    fixation: (T, T),
    target: usize,
    step_size: T,
    fov: &FoveationConfig<T>,
) -> Result<((T, T), T), ScanpathError> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let (max_row, max_col) = (T::of_usize(h - 1), T::of_usize(w - 1));
    if fixation.0 < T::zero() || fixation.0 > max_row || fixation.1 < T::zero() || fixation.1 > max_col
    {
        return Err(ScanpathError::FixationOutOfBounds(
            fixation.0.to_f64().unwrap_or(f64::NAN),
            fixation.1.to_f64().unwrap_or(f64::NAN),
            h,
            w,
        ));
    }
    let mut g = Graph::new();
    let x = g.constant_array(image);
    let xb = g.constant_array(coarse);
    let f = g.leaf(vec![2], vec![fixation.0, fixation.1])?;
    let rendered = foveation::render_candidate(&mut g, x, xb, state, f, fov)?;
    let (logits, _) = predictor.forward_graph(&mut g, rendered, false)?;
    let loss = g.softmax_cross_entropy(logits, target)?;
    descend_step(&mut g, loss, f, step_size, max_row, max_col)
}

/// Loss of the committed state rendering against `target`.
fn state_loss<T: Scalar>(
    predictor: &Predictor<T>,
    image: &Array<T>,
    coarse: &Array<T>,
    state: &FoveationState<T>,
    target: usize,
) -> Result<T, ScanpathError> {
    let rendered = foveation::render_state(image, coarse, state);
    let logits = predictor.forward_array(&rendered)?;
    Ok(cross_entropy(&logits, target))
}

/// Generates a scanpath by iterated gradient descent.
///
/// The target class is fixed for the whole run: the predictor's own top
/// prediction on the unfoveated image unless an explicit label is given.
/// Each of the `fixation_count` fixations runs `inner_steps` descent steps
/// from the previous location, is committed into the visibility state, and
/// is recorded together with the loss of the committed rendering.
pub fn generate_scanpath<T: Scalar>(
    predictor: &Predictor<T>,
    image: &Array<T>,
    cfg: &ScanpathConfig<T>,
    fov: &FoveationConfig<T>,
) -> Result<Scanpath<T>, ScanpathError> {
    cfg.validate()?;
    fov.validate()?;
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let target = match cfg.target {
        TargetPolicy::Predicted => predictor.predict(image)?,
        TargetPolicy::Label(label) => {
            if label >= predictor.classes() {
                return Err(ScanpathError::InvalidTarget {
                    target: label,
                    classes: predictor.classes(),
                });
            }
            label
        }
    };
    let coarse = foveation::coarse(image, fov.blur_sigma, fov.blur_radius);
    let mut fixation = match cfg.init {
        InitPolicy::Center => (T::of_usize(h - 1) / T::of(2.0), T::of_usize(w - 1) / T::of(2.0)),
        InitPolicy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r: f64 = rng.random_range(0.0..=(h - 1) as f64);
            let c: f64 = rng.random_range(0.0..=(w - 1) as f64);
            (T::of(r), T::of(c))
        }
    };
    let mut state = FoveationState::new(h, w);
    let initial_loss = state_loss(predictor, image, &coarse, &state, target)?;
    let mut fixations = Vec::with_capacity(cfg.fixation_count);
    let mut losses = Vec::with_capacity(cfg.fixation_count);
    for index in 0..cfg.fixation_count {
        for _ in 0..cfg.inner_steps {
            let (next, _) =
                fixation_step(predictor, image, &coarse, &state, fixation, target, cfg.step_size, fov)
                    .map_err(|e| ScanpathError::AtFixation { index, source: Box::new(e) })?;
            fixation = next;
        }
        state = foveation::update_state(&state, fixation, fov.fovea_sigma, fov.forgetting);
        let loss = state_loss(predictor, image, &coarse, &state, target)?;
        fixations.push(fixation);
        losses.push(loss);
    }
    Ok(Scanpath { fixations, losses, initial_loss, target })
}
