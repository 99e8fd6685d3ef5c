//! Benchmark field generation: spectral simulation of Burgers, KdV and
//! Kuramoto–Sivashinsky, calibrated Gaussian noise, and Savitzky–Golay
//! denoising.

mod etdrk4;
pub mod savgol;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Axis, Field};
use crate::seed;
use crate::stats;

/// Supported benchmark equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    /// `u_t = 0.1 u_xx − u u_x`
    Burgers,
    /// `u_t = −u_xxx − 6 u u_x`
    Kdv,
    /// `u_t = −u_xx − u_xxxx − u u_x`
    Ks,
}

impl Equation {
    /// Fourier symbol of the linear part.
    fn symbol(self, k: f64) -> Complex64 {
        match self {
            Equation::Burgers => Complex64::new(-0.1 * k * k, 0.0),
            Equation::Kdv => Complex64::new(0.0, k * k * k),
            Equation::Ks => Complex64::new(k * k - k.powi(4), 0.0),
        }
    }

    /// Coefficient `g` of the conservative nonlinearity `g·(u²)_x`.
    fn flux(self) -> f64 {
        match self {
            Equation::Burgers | Equation::Ks => -0.5,
            Equation::Kdv => -3.0,
        }
    }

    /// Growth allowance applied to the initial amplitude in the step rule.
    fn amplitude_margin(self) -> f64 {
        match self {
            Equation::Burgers | Equation::Kdv => 1.0,
            Equation::Ks => 2.5,
        }
    }

    /// Reference grid: Burgers 256×101 on [−8,8]×[0,10]; KdV 512×501 on
    /// [−20,20]×[0,40]; KS 512×251 on [0,32π]×[0,100].
    pub fn default_grid(self) -> (Axis, Axis) {
        match self {
            Equation::Burgers => (Axis::periodic(256, -8.0, 8.0), Axis::closed(101, 0.0, 10.0)),
            Equation::Kdv => (Axis::periodic(512, -20.0, 20.0), Axis::closed(501, 0.0, 40.0)),
            Equation::Ks => (Axis::periodic(512, 0.0, 32.0 * std::f64::consts::PI), Axis::closed(251, 0.0, 100.0)),
        }
    }

    /// Initial condition used when none is requested.
    pub fn default_initial(self) -> InitialCondition {
        match self {
            Equation::Burgers => InitialCondition::Gaussian,
            Equation::Kdv => InitialCondition::TwoSoliton,
            Equation::Ks => InitialCondition::KsCosine,
        }
    }

    /// Right-hand-side terms and coefficients, keyed by library label.
    pub fn truth(self) -> Vec<(&'static str, f64)> {
        match self {
            Equation::Burgers => vec![("u u_x", -1.0), ("u_xx", 0.1)],
            Equation::Kdv => vec![("u u_x", -6.0), ("u_xxx", -1.0)],
            Equation::Ks => vec![("u u_x", -1.0), ("u_xx", -1.0), ("u_xxxx", -1.0)],
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Equation::Burgers => "burgers",
            Equation::Kdv => "kdv",
            Equation::Ks => "ks",
        })
    }
}

impl FromStr for Equation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "burgers" => Ok(Equation::Burgers),
            "kdv" => Ok(Equation::Kdv),
            "ks" | "kuramoto-sivashinsky" => Ok(Equation::Ks),
            other => Err(Error::Config(format!("unknown equation `{other}`"))),
        }
    }
}

/// Named initial-condition presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "preset")]
pub enum InitialCondition {
    /// `exp(−(x+2)²)`
    Gaussian,
    /// Single KdV soliton `(c/2)·sech²(√c/2·(x − x0))`.
    Soliton { speed: f64, centre: f64 },
    /// Superposition of solitons with speeds 2 and 0.5 centred at −10 and 5.
    TwoSoliton,
    /// `cos(x/16)·(1 + sin(x/16))`
    KsCosine,
    /// Identically zero.
    Zero,
}

impl FromStr for InitialCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(InitialCondition::Gaussian),
            "soliton" => Ok(InitialCondition::Soliton { speed: 1.0, centre: -10.0 }),
            "two-soliton" => Ok(InitialCondition::TwoSoliton),
            "ks-cosine" => Ok(InitialCondition::KsCosine),
            "zero" => Ok(InitialCondition::Zero),
            other => Err(Error::Config(format!("unknown initial condition `{other}`"))),
        }
    }
}

/// Closed-form one-soliton KdV solution on a periodic domain of length `period`.
pub fn kdv_soliton(x: f64, t: f64, speed: f64, centre: f64, lo: f64, period: f64) -> f64 {
    // Distance to the nearest periodic image of the crest.
    let crest = lo + (centre + speed * t - lo).rem_euclid(period);
    let mut d = x - crest;
    d -= period * (d / period).round();
    let s = 1.0 / (0.5 * speed.sqrt() * d).cosh();
    0.5 * speed * s * s
}

impl InitialCondition {
    fn evaluate(&self, axis: &Axis) -> Vec<f64> {
        let period = axis.hi - axis.lo;
        axis.points()
            .into_iter()
            .map(|x| match *self {
                InitialCondition::Gaussian => (-(x + 2.0) * (x + 2.0)).exp(),
                InitialCondition::Soliton { speed, centre } => kdv_soliton(x, 0.0, speed, centre, axis.lo, period),
                InitialCondition::TwoSoliton => {
                    kdv_soliton(x, 0.0, 2.0, -10.0, axis.lo, period) + kdv_soliton(x, 0.0, 0.5, 5.0, axis.lo, period)
                }
                InitialCondition::KsCosine => (x / 16.0).cos() * (1.0 + (x / 16.0).sin()),
                InitialCondition::Zero => 0.0,
            })
            .collect()
    }
}

/// Courant number applied to the advective speed in the step rule.
const COURANT: f64 = 0.5;

/// Integrate `equation` from `initial` on the periodic `space` axis, sampling
/// at every point of `time`.
pub fn simulate_pde(equation: Equation, space: Axis, time: Axis, initial: InitialCondition) -> Result<Field> {
    if !space.periodic {
        return Err(Error::Config("spectral solver needs a periodic space axis".into()));
    }
    let u0 = initial.evaluate(&space);
    let probe = Field::new(equation.to_string(), vec![space], time, vec![0.0; space.n * time.n])?;
    let dt_out = time.step();
    let period = space.hi - space.lo;

    // Largest power-of-two subdivision of the output interval meeting the bound.
    let amplitude = u0.iter().fold(0.0f64, |a, v| a.max(v.abs())) * equation.amplitude_margin();
    let speed = 2.0 * equation.flux().abs() * amplitude;
    let dt_max = if speed > 0.0 { COURANT * space.step() / speed } else { f64::INFINITY };
    let mut substeps = 1usize;
    while dt_out / substeps as f64 > dt_max {
        substeps *= 2;
    }
    let dt = dt_out / substeps as f64;
    let solver = etdrk4::Etdrk4::new(space.n, period, dt, |k| equation.symbol(k), equation.flux());

    let nt = time.n;
    let mut values = vec![0.0; space.n * nt];
    let mut state = solver.to_spectral(&u0);
    let mut snapshot = u0;
    for it in 0..nt {
        if it > 0 {
            for _ in 0..substeps {
                solver.step(&mut state);
            }
            snapshot = solver.to_physical(&state);
        }
        if snapshot.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
            return Err(Error::Divergence { time_index: it });
        }
        for (ix, v) in snapshot.iter().enumerate() {
            values[ix * nt + it] = *v;
        }
    }
    probe.with_values(values)
}

/// Gaussian observation noise: standard deviation `sd(field)·level_percent/100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level_percent: f64,
    pub seed: u64,
}

/// Add i.i.d. Gaussian noise scaled to the field's overall standard deviation.
pub fn add_noise(field: &Field, spec: NoiseSpec) -> Result<Field> {
    if !spec.level_percent.is_finite() || spec.level_percent < 0.0 {
        return Err(Error::Config(format!("noise level must be finite and ≥ 0, got {}", spec.level_percent)));
    }
    if field.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("cannot add noise to a field with non-finite values".into()));
    }
    if spec.level_percent == 0.0 {
        return Ok(field.clone());
    }
    let sigma = stats::sd(field.values()) * spec.level_percent / 100.0;
    let mut rng = seed::rng(spec.seed);
    let noisy = field
        .values()
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    field.with_values(noisy)
}

/// Savitzky–Golay smoothing along each space axis and then time.
pub fn denoise(field: &Field, window: usize, polyorder: usize) -> Result<Field> {
    let weights = savgol::coefficients(window, polyorder, 0)?;
    let shape = field.shape();
    if let Some(&short) = shape.iter().find(|&&n| n < window) {
        return Err(Error::Config(format!("window {window} exceeds an axis of length {short}")));
    }
    let mut values = field.values().to_vec();
    for axis in 0..shape.len() {
        values = savgol::filter_axis(&values, &shape, axis, &weights);
    }
    field.with_values(values)
}
