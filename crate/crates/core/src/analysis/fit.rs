//! Least-squares fits for the curve shapes used throughout: linear,
//! Lorentzian, sin², sinc², and the two-sided exponential envelope.
//!
//! Parameterizations are chosen so the headline quantity is a parameter:
//! the Lorentzian width parameter is directly the FWHM, the envelope decay
//! is γ of e^{−2πγ|x−x₀|}. Zero-noise synthetic data from any of these
//! shapes is recovered to 1e−6 relative over the ranges exercised in the
//! property tests (amplitudes 0.5–100, widths between a twentieth and half
//! of the sampled span, centers inside the sampled span, offsets up to the
//! amplitude). For the periodic sin² shape the node position is identified
//! modulo the node spacing π/c.

use serde::Serialize;

use crate::analysis::optimizer::{levenberg_marquardt, LmModel, LmOptions, LmOutcome};
use crate::error::{Error, Result};
use crate::phase_matching::sinc;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Fitable model shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// y = slope·x + intercept (exact closed-form solve).
    Linear,
    /// y = A / (1 + ((x−x₀)/(w/2))²) + b; w is the FWHM.
    Lorentzian,
    /// y = A·sin²(c·(x−x₀)) + b; x₀ is a node.
    Sin2,
    /// y = A·sinc²(c·(x−x₀)) + b; x₀ is the peak.
    Sinc2,
    /// y = A·e^{−2πγ|x−x₀|} + b.
    ExpEnvelope,
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::Linear => "linear",
            FitModel::Lorentzian => "lorentzian",
            FitModel::Sin2 => "sin2",
            FitModel::Sinc2 => "sinc2",
            FitModel::ExpEnvelope => "exp_envelope",
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::Linear => &["slope", "intercept"],
            FitModel::Lorentzian => &["amplitude", "center", "fwhm", "offset"],
            FitModel::Sin2 => &["amplitude", "frequency", "node", "offset"],
            FitModel::Sinc2 => &["amplitude", "frequency", "center", "offset"],
            FitModel::ExpEnvelope => &["amplitude", "gamma", "center", "offset"],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "linear" => FitModel::Linear,
            "lorentzian" => FitModel::Lorentzian,
            "sin2" => FitModel::Sin2,
            "sinc2" => FitModel::Sinc2,
            "exp_envelope" => FitModel::ExpEnvelope,
            other => {
                return Err(Error::argument(
                    "model",
                    format!("unknown fit model {other}"),
                ))
            }
        })
    }

    pub fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::Linear => p[0] * x + p[1],
            FitModel::Lorentzian => {
                let u = 2.0 * (x - p[1]) / p[2];
                p[0] / (1.0 + u * u) + p[3]
            }
            FitModel::Sin2 => {
                let s = (p[1] * (x - p[2])).sin();
                p[0] * s * s + p[3]
            }
            FitModel::Sinc2 => {
                let s = sinc(p[1] * (x - p[2]));
                p[0] * s * s + p[3]
            }
            FitModel::ExpEnvelope => p[0] * (-TWO_PI * p[1] * (x - p[2]).abs()).exp() + p[3],
        }
    }
}

/// d/du sinc(u), stable through u = 0.
fn dsinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        -u / 3.0 + u * u * u / 30.0
    } else {
        (u.cos() - sinc(u)) / u
    }
}

struct ModelSurface(FitModel);

impl LmModel for ModelSurface {
    fn n_params(&self) -> usize {
        self.0.n_params()
    }

    fn eval(&self, p: &[f64], x: f64) -> f64 {
        self.0.eval(p, x)
    }

    fn gradient(&self, p: &[f64], x: f64, out: &mut [f64]) {
        match self.0 {
            FitModel::Linear => {
                out[0] = x;
                out[1] = 1.0;
            }
            FitModel::Lorentzian => {
                let (a, x0, w) = (p[0], p[1], p[2]);
                let u = 2.0 * (x - x0) / w;
                let den = 1.0 + u * u;
                out[0] = 1.0 / den;
                out[1] = a * (2.0 * u / den.powi(2)) * (2.0 / w);
                out[2] = a * (2.0 * u / den.powi(2)) * (u / w);
                out[3] = 1.0;
            }
            FitModel::Sin2 => {
                let (a, c, x0) = (p[0], p[1], p[2]);
                let arg = c * (x - x0);
                let s = arg.sin();
                out[0] = s * s;
                let s2 = (2.0 * arg).sin();
                out[1] = a * (x - x0) * s2;
                out[2] = -a * c * s2;
                out[3] = 1.0;
            }
            FitModel::Sinc2 => {
                let (a, c, x0) = (p[0], p[1], p[2]);
                let u = c * (x - x0);
                let s = sinc(u);
                out[0] = s * s;
                let dd = 2.0 * s * dsinc(u);
                out[1] = a * dd * (x - x0);
                out[2] = -a * dd * c;
                out[3] = 1.0;
            }
            FitModel::ExpEnvelope => {
                let (a, g, x0) = (p[0], p[1], p[2]);
                let d = x - x0;
                let e = (-TWO_PI * g * d.abs()).exp();
                out[0] = e;
                out[1] = -TWO_PI * d.abs() * a * e;
                out[2] = TWO_PI * g * d.signum() * a * e;
                out[3] = 1.0;
            }
        }
    }
}

/// One derived quantity computed from the fitted parameters.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DerivedQuantity {
    pub name: &'static str,
    pub value: f64,
}

/// Fit outcome. `converged == false` is an explicit signal, never a silent
/// wrong answer.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: &'static str,
    pub param_names: &'static [&'static str],
    pub params: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub derived: Vec<DerivedQuantity>,
}

fn validate_data(model: FitModel, data: &[(f64, f64)]) -> Result<()> {
    if data.len() < model.n_params() + 2 {
        return Err(Error::argument(
            "data",
            format!(
                "need at least {} points for {}",
                model.n_params() + 2,
                model.name()
            ),
        ));
    }
    for &(x, y) in data {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::argument("data", "non-finite sample"));
        }
    }
    let x0 = data[0].0;
    if data.iter().all(|&(x, _)| x == x0) {
        return Err(Error::argument("data", "all x values identical"));
    }
    Ok(())
}

fn ranges(data: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for &(x, y) in data {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    (xmin, xmax, ymin, ymax)
}

fn argmax_x(data: &[(f64, f64)]) -> f64 {
    data.iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty")
        .0
}

fn argmin_x(data: &[(f64, f64)]) -> f64 {
    data.iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty")
        .0
}

/// Width of the region around the peak where y stays above offset + A/2.
fn half_max_width(data: &[(f64, f64)], x_peak: f64, ymin: f64, ymax: f64, span: f64) -> f64 {
    let half = ymin + 0.5 * (ymax - ymin);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for &(x, y) in data {
        if y < half {
            if x < x_peak {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
        }
    }
    if lo.is_finite() && hi.is_finite() {
        hi - lo
    } else {
        span / 4.0
    }
}

fn auto_initial(model: FitModel, data: &[(f64, f64)]) -> Vec<f64> {
    let (xmin, xmax, ymin, ymax) = ranges(data);
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);
    let amp = (ymax - ymin).max(f64::MIN_POSITIVE);
    match model {
        FitModel::Linear => unreachable!("linear is solved in closed form"),
        FitModel::Lorentzian => {
            let x_peak = argmax_x(data);
            let w = half_max_width(data, x_peak, ymin, ymax, span);
            vec![amp, x_peak, w, ymin]
        }
        FitModel::Sin2 => {
            // The node is the data minimum; peak-to-node distance is a
            // quarter period.
            let node = argmin_x(data);
            let peak = argmax_x(data);
            let quarter = (peak - node).abs().max(span / 100.0);
            vec![amp, std::f64::consts::PI / (2.0 * quarter), node, ymin]
        }
        FitModel::Sinc2 => {
            let x_peak = argmax_x(data);
            let w = half_max_width(data, x_peak, ymin, ymax, span);
            // sinc² reaches half maximum at |u| ≈ 1.39156.
            vec![amp, 2.0 * 1.39156 / w, x_peak, ymin]
        }
        FitModel::ExpEnvelope => {
            let x_peak = argmax_x(data);
            // Log-linear regression of y − b on |x − x₀| above 10% of peak.
            let floor = ymin;
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            let mut n = 0.0;
            for &(x, y) in data {
                let v = y - floor;
                if v > 0.1 * amp {
                    let lx = (x - x_peak).abs();
                    let ly = v.ln();
                    sx += lx;
                    sy += ly;
                    sxx += lx * lx;
                    sxy += lx * ly;
                    n += 1.0;
                }
            }
            let denom = n * sxx - sx * sx;
            let gamma = if denom.abs() > 0.0 && n >= 2.0 {
                (-(n * sxy - sx * sy) / denom / TWO_PI).abs().max(0.01 / span)
            } else {
                1.0 / span
            };
            vec![amp, gamma, x_peak, floor]
        }
    }
}

fn derived_quantities(model: FitModel, p: &[f64]) -> Vec<DerivedQuantity> {
    match model {
        FitModel::Linear => vec![],
        FitModel::Lorentzian => vec![
            DerivedQuantity { name: "fwhm", value: p[2].abs() },
            DerivedQuantity { name: "center", value: p[1] },
        ],
        FitModel::Sin2 => vec![
            DerivedQuantity { name: "node", value: p[2] },
            DerivedQuantity { name: "node_spacing", value: std::f64::consts::PI / p[1].abs() },
        ],
        FitModel::Sinc2 => vec![
            DerivedQuantity { name: "t_opt", value: p[2] },
            DerivedQuantity { name: "first_zero_offset", value: std::f64::consts::PI / p[1].abs() },
        ],
        FitModel::ExpEnvelope => vec![
            DerivedQuantity { name: "gamma", value: p[1].abs() },
            DerivedQuantity { name: "fwhm", value: 2.0f64.ln() / (std::f64::consts::PI * p[1].abs()) },
            DerivedQuantity { name: "center", value: p[2] },
        ],
    }
}

fn linear_fit(data: &[(f64, f64)]) -> FitResult {
    let n = data.len() as f64;
    let mean_x = data.iter().map(|d| d.0).sum::<f64>() / n;
    let mean_y = data.iter().map(|d| d.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in data {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss = data
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    FitResult {
        model: FitModel::Linear.name(),
        param_names: FitModel::Linear.param_names(),
        params: vec![slope, intercept],
        rss,
        converged: true,
        iterations: 0,
        derived: vec![],
    }
}

/// Least-squares fit of `model` to (x, y) data. When `initial` is omitted the
/// guess policy documented on each model is used.
pub fn fit(model: FitModel, data: &[(f64, f64)], initial: Option<&[f64]>) -> Result<FitResult> {
    validate_data(model, data)?;
    if model == FitModel::Linear {
        return Ok(linear_fit(data));
    }
    let p0 = match initial {
        Some(p) => {
            if p.len() != model.n_params() {
                return Err(Error::argument(
                    "initial",
                    format!("expected {} parameters", model.n_params()),
                ));
            }
            p.to_vec()
        }
        None => auto_initial(model, data),
    };
    let outcome: LmOutcome =
        levenberg_marquardt(&ModelSurface(model), data, &p0, LmOptions::default());
    Ok(FitResult {
        model: model.name(),
        param_names: model.param_names(),
        params: outcome.params.clone(),
        rss: outcome.rss,
        converged: outcome.converged,
        iterations: outcome.iterations,
        derived: derived_quantities(model, &outcome.params),
    })
}
