//! Conditional-quantile estimation by pinball-loss minimisation.
//!
//! Models are fitted on standardised inputs and targets by full-batch
//! subgradient descent. A step that would increase the training loss is
//! rejected and the learning rate halved, so the recorded loss sequence is
//! non-increasing.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::types::{Context, PacParams, TargetSample};

/// Check loss `u·q` for `u >= 0` and `u·(q-1)` otherwise, with `u = r - q̂`.
pub fn pinball_loss(u: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!(
            "quantile level must lie in (0,1), got {q}"
        )));
    }
    Ok(pinball(u, q))
}

#[inline]
fn pinball(u: f64, q: f64) -> f64 {
    if u >= 0.0 {
        u * q
    } else {
        u * (q - 1.0)
    }
}

/// Subgradient of the check loss with respect to the prediction.
#[inline]
fn pinball_subgrad(u: f64, q: f64) -> f64 {
    if u > 0.0 {
        -q
    } else if u < 0.0 {
        1.0 - q
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Affine,
    /// One hidden layer with softplus activation.
    Mlp {
        hidden_width: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileTrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for QuantileTrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Affine,
            learning_rate: 0.5,
            epochs: 500,
        }
    }
}

impl QuantileTrainConfig {
    pub fn mlp() -> Self {
        Self {
            kind: ModelKind::Mlp { hidden_width: 32 },
            learning_rate: 0.5,
            epochs: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let ModelKind::Mlp { hidden_width } = self.kind {
            if hidden_width == 0 {
                return Err(invalid("hidden width must be at least 1"));
            }
        }
        Ok(())
    }
}

// ── Fitted functions ────────────────────────────────────────────────────

/// One-hidden-layer network on standardised inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    x_shift: Vec<f64>,
    x_scale: Vec<f64>,
    y_shift: f64,
    y_scale: f64,
    /// Row-major `hidden × dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    out_weights: Vec<f64>,
    out_bias: f64,
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Mlp {
    fn dim(&self) -> usize {
        self.x_shift.len()
    }

    fn hidden(&self) -> usize {
        self.biases.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let xt: Vec<f64> = (0..d)
            .map(|k| (x[k] - self.x_shift[k]) / self.x_scale[k])
            .collect();
        let mut out = self.out_bias;
        for j in 0..self.hidden() {
            let row = &self.weights[j * d..(j + 1) * d];
            let z = self.biases[j] + row.iter().zip(&xt).map(|(w, v)| w * v).sum::<f64>();
            out += self.out_weights[j] * softplus(z);
        }
        self.y_shift + self.y_scale * out
    }
}

/// A fitted conditional-quantile function.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileFunction {
    Constant(f64),
    Affine { intercept: f64, slopes: Vec<f64> },
    Mlp(Mlp),
}

impl QuantileFunction {
    pub fn eval(&self, context: &Context) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Affine { intercept, slopes } => {
                intercept
                    + slopes
                        .iter()
                        .zip(context.values())
                        .map(|(c, s)| c * s)
                        .sum::<f64>()
            }
            Self::Mlp(m) => m.eval(context.values()),
        }
    }

    fn write_text(&self, out: &mut String) {
        match self {
            Self::Constant(c) => {
                let _ = write!(out, "constant {c}");
            }
            Self::Affine { intercept, slopes } => {
                let _ = write!(out, "affine {intercept}");
                for s in slopes {
                    let _ = write!(out, " {s}");
                }
            }
            Self::Mlp(m) => {
                let _ = write!(out, "mlp {} {}", m.dim(), m.hidden());
                let tail = m
                    .x_shift
                    .iter()
                    .chain(&m.x_scale)
                    .chain([&m.y_shift, &m.y_scale])
                    .chain(&m.weights)
                    .chain(&m.biases)
                    .chain(&m.out_weights)
                    .chain([&m.out_bias]);
                for v in tail {
                    let _ = write!(out, " {v}");
                }
            }
        }
    }

    fn parse_text(text: &str, line: u64) -> Result<Self> {
        let err = |message: String| Error::Parse { line, message };
        let mut toks = text.split_whitespace();
        let kind = toks
            .next()
            .ok_or_else(|| err("missing model kind".into()))?;
        let nums: Vec<f64> = toks
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(format!("bad number '{t}'")))
            })
            .collect::<Result<_>>()?;
        match kind {
            "constant" if nums.len() == 1 => Ok(Self::Constant(nums[0])),
            "affine" if !nums.is_empty() => Ok(Self::Affine {
                intercept: nums[0],
                slopes: nums[1..].to_vec(),
            }),
            "mlp" if nums.len() >= 2 => {
                let (d, h) = (nums[0] as usize, nums[1] as usize);
                let body = &nums[2..];
                if body.len() != 2 * d + 2 + h * d + 2 * h + 1 {
                    return Err(err(format!(
                        "mlp expects {} values",
                        2 * d + 2 + h * d + 2 * h + 1
                    )));
                }
                let mut it = body.iter().copied();
                let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
                let x_shift = take(d);
                let x_scale = take(d);
                let y = take(2);
                let weights = take(h * d);
                let biases = take(h);
                let out_weights = take(h);
                let out_bias = take(1)[0];
                Ok(Self::Mlp(Mlp {
                    x_shift,
                    x_scale,
                    y_shift: y[0],
                    y_scale: y[1],
                    weights,
                    biases,
                    out_weights,
                    out_bias,
                }))
            }
            other => Err(err(format!("unrecognised model line '{other}'"))),
        }
    }
}

/// Lower and upper conditional-quantile functions at levels
/// `(eps_lo, eps_up)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePairModel {
    pub lo: QuantileFunction,
    pub up: QuantileFunction,
    pub eps_lo: f64,
    pub eps_up: f64,
}

impl QuantilePairModel {
    /// Constant pair, used when there is not enough data to train.
    pub fn constant(lo: f64, up: f64, eps_lo: f64, eps_up: f64) -> Self {
        Self {
            lo: QuantileFunction::Constant(lo),
            up: QuantileFunction::Constant(up),
            eps_lo,
            eps_up,
        }
    }

    /// `(q_lo(s), q_up(s))`; crossed pairs are replaced by their midpoint.
    pub fn eval(&self, context: &Context) -> (f64, f64) {
        let lo = self.lo.eval(context);
        let up = self.up.eval(context);
        if lo > up {
            let mid = 0.5 * (lo + up);
            (mid, mid)
        } else {
            (lo, up)
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("levels {} {}\nlo ", self.eps_lo, self.eps_up);
        self.lo.write_text(&mut out);
        out.push_str("\nup ");
        self.up.write_text(&mut out);
        out.push('\n');
        out
    }

    /// Parse the three lines written by [`QuantilePairModel::to_text`];
    /// `first_line` is the line number of `levels` for error messages.
    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = (u64, &'a str)>) -> Result<Self> {
        let mut next = |key: &str| -> Result<(u64, &'a str)> {
            let (no, text) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing '{key}' line"),
            })?;
            let rest = text.strip_prefix(key).ok_or_else(|| Error::Parse {
                line: no,
                message: format!("expected '{key}'"),
            })?;
            Ok((no, rest.trim()))
        };
        let (no, levels) = next("levels")?;
        let lv: Vec<f64> = levels
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: no,
                message: "bad levels".into(),
            })?;
        if lv.len() != 2 {
            return Err(Error::Parse {
                line: no,
                message: "levels needs two values".into(),
            });
        }
        let (no, lo) = next("lo")?;
        let lo = QuantileFunction::parse_text(lo, no)?;
        let (no, up) = next("up")?;
        let up = QuantileFunction::parse_text(up, no)?;
        Ok(Self {
            lo,
            up,
            eps_lo: lv[0],
            eps_up: lv[1],
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        Self::from_lines(&mut lines)
    }
}

// ── Training ────────────────────────────────────────────────────────────

struct Standardized {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    x_shift: Vec<f64>,
    x_scale: Vec<f64>,
    y_shift: f64,
    y_scale: f64,
}

fn shift_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (
        mean,
        if sd > 1e-12 * mean.abs().max(1.0) {
            sd
        } else {
            1.0
        },
    )
}

fn standardize(train: &[TargetSample]) -> Standardized {
    let d = train[0].context.dim();
    let (mut x_shift, mut x_scale) = (vec![0.0; d], vec![1.0; d]);
    for k in 0..d {
        let (m, s) = shift_scale(train.iter().map(move |t| t.context.values()[k]));
        x_shift[k] = m;
        x_scale[k] = s;
    }
    let (y_shift, y_scale) = shift_scale(train.iter().map(|t| t.reward));
    let x = train
        .iter()
        .map(|t| {
            (0..d)
                .map(|k| (t.context.values()[k] - x_shift[k]) / x_scale[k])
                .collect()
        })
        .collect();
    let y = train
        .iter()
        .map(|t| (t.reward - y_shift) / y_scale)
        .collect();
    Standardized {
        x,
        y,
        x_shift,
        x_scale,
        y_shift,
        y_scale,
    }
}

/// Mean loss and its subgradient at `theta`.
type Objective<'a> = dyn Fn(&[f64], &mut [f64]) -> f64 + 'a;

/// Full-batch subgradient descent; a step that increases the loss is
/// rejected and the learning rate halved. Returns the accepted loss history
/// (starting with the initial loss).
fn descend(
    theta: &mut [f64],
    objective: &Objective<'_>,
    learning_rate: f64,
    epochs: usize,
) -> Vec<f64> {
    let p = theta.len();
    let mut grad = vec![0.0; p];
    let mut loss = objective(theta, &mut grad);
    let mut history = vec![loss];
    let mut lr = learning_rate;
    let mut candidate = vec![0.0; p];
    let mut cand_grad = vec![0.0; p];
    for _ in 0..epochs {
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        for i in 0..p {
            candidate[i] = theta[i] - lr * grad[i];
        }
        let cand_loss = objective(&candidate, &mut cand_grad);
        if cand_loss > loss {
            lr *= 0.5;
            if lr < 1e-14 {
                break;
            }
        } else {
            theta.copy_from_slice(&candidate);
            std::mem::swap(&mut grad, &mut cand_grad);
            loss = cand_loss;
            history.push(loss);
        }
    }
    history
}

/// A fitted function plus the accepted training-loss history (in
/// standardised units).
#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub function: QuantileFunction,
    pub loss_history: Vec<f64>,
}

/// Fit one conditional quantile at `level ∈ (0,1)`.
pub fn fit_quantile(
    train: &[TargetSample],
    level: f64,
    cfg: &QuantileTrainConfig,
    rng: &mut Rng,
) -> Result<QuantileFit> {
    cfg.validate()?;
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!(
            "quantile level must lie in (0,1), got {level}"
        )));
    }
    if train.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train.len(),
        });
    }
    let st = standardize(train);
    let d = st.x_shift.len();
    let n = st.y.len() as f64;
    match cfg.kind {
        ModelKind::Affine => {
            let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                for (x, y) in st.x.iter().zip(&st.y) {
                    let pred = theta[0] + theta[1..].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                    let u = y - pred;
                    loss += pinball(u, level);
                    let g = pinball_subgrad(u, level);
                    grad[0] += g;
                    for k in 0..d {
                        grad[k + 1] += g * x[k];
                    }
                }
                grad.iter_mut().for_each(|g| *g /= n);
                loss / n
            };
            let mut theta = vec![0.0; d + 1];
            let history = descend(&mut theta, &objective, cfg.learning_rate, cfg.epochs);
            // Fold the standardisation back into raw coefficients.
            let slopes: Vec<f64> = (0..d)
                .map(|k| st.y_scale * theta[k + 1] / st.x_scale[k])
                .collect();
            let intercept = st.y_shift + st.y_scale * theta[0]
                - slopes
                    .iter()
                    .zip(&st.x_shift)
                    .map(|(c, m)| c * m)
                    .sum::<f64>();
            Ok(QuantileFit {
                function: QuantileFunction::Affine { intercept, slopes },
                loss_history: history,
            })
        }
        ModelKind::Mlp { hidden_width: h } => {
            // Layout: W (h*d), b (h), v (h), c (1).
            let (wo, bo, vo, co) = (0, h * d, h * d + h, h * d + 2 * h);
            let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                let mut z = vec![0.0; h];
                for (x, y) in st.x.iter().zip(&st.y) {
                    let mut pred = theta[co];
                    for j in 0..h {
                        let row = &theta[wo + j * d..wo + (j + 1) * d];
                        z[j] = theta[bo + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                        pred += theta[vo + j] * softplus(z[j]);
                    }
                    let u = y - pred;
                    loss += pinball(u, level);
                    let g = pinball_subgrad(u, level);
                    if g == 0.0 {
                        continue;
                    }
                    grad[co] += g;
                    for j in 0..h {
                        grad[vo + j] += g * softplus(z[j]);
                        let back = g * theta[vo + j] * sigmoid(z[j]);
                        grad[bo + j] += back;
                        for k in 0..d {
                            grad[wo + j * d + k] += back * x[k];
                        }
                    }
                }
                grad.iter_mut().for_each(|g| *g /= n);
                loss / n
            };
            let scale = 1.0 / (d as f64).sqrt();
            let mut theta = vec![0.0; h * d + 2 * h + 1];
            for v in theta[wo..bo].iter_mut() {
                *v = rng.uniform_range(-scale, scale);
            }
            for v in theta[bo..vo].iter_mut() {
                *v = rng.uniform_range(-1.0, 1.0);
            }
            for v in theta[vo..co].iter_mut() {
                *v = rng.uniform_range(-0.1, 0.1);
            }
            let history = descend(&mut theta, &objective, cfg.learning_rate, cfg.epochs);
            Ok(QuantileFit {
                function: QuantileFunction::Mlp(Mlp {
                    x_shift: st.x_shift,
                    x_scale: st.x_scale,
                    y_shift: st.y_shift,
                    y_scale: st.y_scale,
                    weights: theta[wo..bo].to_vec(),
                    biases: theta[bo..vo].to_vec(),
                    out_weights: theta[vo..co].to_vec(),
                    out_bias: theta[co],
                }),
                loss_history: history,
            })
        }
    }
}

fn fit_level(
    train: &[TargetSample],
    level: f64,
    cfg: &QuantileTrainConfig,
    rng: &mut Rng,
) -> Result<QuantileFunction> {
    if level <= 0.0 {
        return Ok(QuantileFunction::Constant(f64::NEG_INFINITY));
    }
    if level >= 1.0 {
        return Ok(QuantileFunction::Constant(f64::INFINITY));
    }
    Ok(fit_quantile(train, level, cfg, rng)?.function)
}

/// Fit `q_lo` and `q_up` at the levels in `params`. Levels 0 and 1 map to
/// the constant functions `-inf` and `+inf`.
pub fn fit_quantile_pair(
    train: &[TargetSample],
    cfg: &QuantileTrainConfig,
    params: &PacParams,
    rng: &mut Rng,
) -> Result<QuantilePairModel> {
    if train.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train.len(),
        });
    }
    let mut lo_rng = rng.child(0);
    let mut up_rng = rng.child(1);
    Ok(QuantilePairModel {
        lo: fit_level(train, params.eps_lo, cfg, &mut lo_rng)?,
        up: fit_level(train, params.eps_up, cfg, &mut up_rng)?,
        eps_lo: params.eps_lo,
        eps_up: params.eps_up,
    })
}
