//! Differentiable foveation: coarse image construction, Gaussian visibility
//! blobs, the foveated blend, and the accumulated visibility state.
//!
//! A rendered state shows the original image at full fidelity wherever the
//! visibility mask is 1 and the blurred image where it is 0. Committing a
//! fixation adds a Gaussian blob to the mask; a forgetting factor decays the
//! contribution of earlier fixations so attention can move on.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Array, Graph, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoveationError {
    #[error("{field} must be {constraint}, got {value}")]
    InvalidParameter { field: &'static str, constraint: &'static str, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Parameters of the foveation model, in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct FoveationConfig<T> {
    /// Standard deviation of the visibility blob around a fixation.
    pub fovea_sigma: T,
    /// Standard deviation of the Gaussian blur used for the coarse image.
    pub blur_sigma: T,
    /// How much previously accumulated visibility is retained per fixation,
    /// in `[0, 1]`; 0 is memoryless, 1 never forgets.
    pub forgetting: T,
    /// Truncation radius of the blur kernel.
    pub blur_radius: usize,
}

impl<T: Scalar> FoveationConfig<T> {
    pub fn new(fovea_sigma: T, blur_sigma: T, forgetting: T, blur_radius: usize) -> Result<Self, FoveationError> {
        let cfg = Self { fovea_sigma, blur_sigma, forgetting, blur_radius };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults for a given image width: blob sigma of an eighth of the
    /// width, blur sigma of a sixteenth, radius of three blur sigmas
    /// rounded up.
    pub fn for_width(width: usize) -> Self {
        let blur_sigma = T::of_usize(width) / T::of(16.0);
        Self {
            fovea_sigma: T::of_usize(width) / T::of(8.0),
            blur_sigma,
            forgetting: T::of(0.6),
            blur_radius: ((blur_sigma.to_f64().unwrap() * 3.0).ceil() as usize).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), FoveationError> {
        let check = |ok: bool, field: &'static str, constraint: &'static str, value: T| {
            if ok {
                Ok(())
            } else {
                Err(FoveationError::InvalidParameter { field, constraint, value: value.to_f64().unwrap_or(f64::NAN) })
            }
        };
        check(self.fovea_sigma > T::zero(), "fovea_sigma", "positive", self.fovea_sigma)?;
        check(self.blur_sigma > T::zero(), "blur_sigma", "positive", self.blur_sigma)?;
        check(
            self.forgetting >= T::zero() && self.forgetting <= T::one(),
            "forgetting",
            "in [0, 1]",
            self.forgetting,
        )?;
        check(self.blur_radius >= 1, "blur_radius", "at least 1", T::of_usize(self.blur_radius))?;
        Ok(())
    }
}

/// Accumulated visibility mask and the number of committed fixations.
#[derive(Debug, Clone, PartialEq)]
pub struct FoveationState<T> {
    visibility: Array<T>,
    step: usize,
}

impl<T: Scalar> FoveationState<T> {
    /// Fresh state with zero visibility everywhere.
    pub fn new(height: usize, width: usize) -> Self {
        Self { visibility: Array::zeros(vec![height, width]), step: 0 }
    }

    pub fn visibility(&self) -> &Array<T> {
        &self.visibility
    }

    /// Number of fixations committed so far.
    pub fn step(&self) -> usize {
        self.step
    }
}

/// Normalized 1-d Gaussian kernel truncated at `radius` taps per side.
fn blur_kernel<T: Scalar>(sigma: T, radius: usize) -> Vec<T> {
    let denom = T::of(2.0) * sigma * sigma;
    let mut kernel: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::of_usize(i.max(radius) - i.min(radius));
            (-(d * d) / denom).exp()
        })
        .collect();
    let total: T = kernel.iter().copied().sum();
    for k in &mut kernel {
        *k = *k / total;
    }
    kernel
}

/// Reflects an out-of-range index back into `[0, n)` (half-sample symmetric).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Coarse version of an image: per-channel separable Gaussian blur with a
/// normalized truncated kernel and reflective boundary handling. The result
/// is a plain array; it enters graphs as a constant.
pub fn coarse<T: Scalar>(image: &Array<T>, blur_sigma: T, blur_radius: usize) -> Array<T> {
    assert_eq!(image.shape().len(), 3, "coarse expects a [C,H,W] image");
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let kernel = blur_kernel(blur_sigma, blur_radius);
    let r = blur_radius as isize;
    // Horizontal pass, then vertical.
    let mut tmp = Array::zeros(vec![c, h, w]);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let mut acc = T::zero();
                for (t, &k) in kernel.iter().enumerate() {
                    let jj = reflect(j as isize + t as isize - r, w);
                    acc = acc + k * image.at3(ch, i, jj);
                }
                tmp.set3(ch, i, j, acc);
            }
        }
    }
    let mut out = Array::zeros(vec![c, h, w]);
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let mut acc = T::zero();
                for (t, &k) in kernel.iter().enumerate() {
                    let ii = reflect(i as isize + t as isize - r, h);
                    acc = acc + k * tmp.at3(ch, ii, j);
                }
                out.set3(ch, i, j, acc);
            }
        }
    }
    out
}

/// Unnormalized Gaussian visibility blob evaluated on the pixel grid, as a
/// plain array. Peak value 1 when the center lies on a pixel center.
pub fn blob_array<T: Scalar>(center: (T, T), sigma: T, height: usize, width: usize) -> Array<T> {
    let denom = T::of(2.0) * sigma * sigma;
    Array::from_fn(vec![height, width], |p| {
        let dr = T::of_usize(p / width) - center.0;
        let dc = T::of_usize(p % width) - center.1;
        (-(dr * dr + dc * dc) / denom).exp()
    })
}

/// Differentiable blob: same values as [`blob_array`], with gradients flowing
/// to the `[2]`-shaped center tensor.
pub fn blob<T: Scalar>(
    g: &mut Graph<T>,
    center: Var,
    sigma: T,
    height: usize,
    width: usize,
) -> Result<Var, TensorError> {
    g.gaussian_blob(center, sigma, height, width)
}

/// Foveated blend around a single fixation: the original image under the
/// blob, the coarse image elsewhere. Differentiable in the fixation.
pub fn foveate<T: Scalar>(
    g: &mut Graph<T>,
    image: Var,
    coarse: Var,
    center: Var,
    sigma: T,
) -> Result<Var, TensorError> {
    let shape = g.shape(image).to_vec();
    let weight = g.gaussian_blob(center, sigma, shape[1], shape[2])?;
    g.blend(weight, image, coarse)
}

/// Commits a fixation into the visibility mask:
/// `G <- clamp(forgetting * G + blob(center), 0, 1)`.
///
/// Committed visibility is a constant with respect to later fixations; only
/// the newest blob carries gradients, inside [`render_candidate`].
pub fn update_state<T: Scalar>(
    state: &FoveationState<T>,
    center: (T, T),
    sigma: T,
    forgetting: T,
) -> FoveationState<T> {
    let shape = state.visibility.shape();
    let (h, w) = (shape[0], shape[1]);
    let blob = blob_array(center, sigma, h, w);
    let mut next = Array::zeros(vec![h, w]);
    for p in 0..h * w {
        let v = forgetting * state.visibility.data()[p] + blob.data()[p];
        next.data_mut()[p] = v.max(T::zero()).min(T::one());
    }
    FoveationState { visibility: next, step: state.step + 1 }
}

/// Renders the committed state: `G * x + (1 - G) * coarse`, as a plain array.
pub fn render_state<T: Scalar>(
    image: &Array<T>,
    coarse: &Array<T>,
    state: &FoveationState<T>,
) -> Array<T> {
    assert_eq!(image.shape(), coarse.shape(), "image and coarse shapes must agree");
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let g = state.visibility.data();
    let mut out = Array::zeros(vec![c, h, w]);
    for ch in 0..c {
        for p in 0..h * w {
            let v = g[p] * image.data()[ch * h * w + p]
                + (T::one() - g[p]) * coarse.data()[ch * h * w + p];
            out.data_mut()[ch * h * w + p] = v;
        }
    }
    out
}

/// Builds the differentiable rendering of the state with a candidate blob at
/// `center` stacked on top of the committed visibility:
/// `s = clamp(forgetting * G + blob(center), 0, 1) * x + (1 - ...) * coarse`.
///
/// Returns the rendered `[C,H,W]` tensor; gradients reach `center` only.
pub fn render_candidate<T: Scalar>(
    g: &mut Graph<T>,
    image: Var,
    coarse: Var,
    state: &FoveationState<T>,
    center: Var,
    cfg: &FoveationConfig<T>,
) -> Result<Var, TensorError> {
    let shape = g.shape(image).to_vec();
    let (h, w) = (shape[1], shape[2]);
    let blob = g.gaussian_blob(center, cfg.fovea_sigma, h, w)?;
    let carried = state.visibility.map(|v| cfg.forgetting * v);
    let mask = if state.step == 0 {
        blob
    } else {
        let prev = g.constant_array(&carried);
        g.add(blob, prev)?
    };
    let clamped = g.clamp(mask, T::zero(), T::one());
    g.blend(clamped, image, coarse)
}
