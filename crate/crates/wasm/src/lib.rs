//! Browser bindings. Each export takes a JSON request and returns a JSON
//! reply; the plain functions below do the work and are tested natively.

use nalgebra::{DMatrix, DVector};
use pdesift::knockoff::{knockoff_threshold, CovMethod, KnockoffSampler, KnockoffSettings, SMatrixMethod, StatisticKind};
use pdesift::pdegen::{self, Equation, NoiseSpec};
use pdesift::select::{aggregate_ranks, mcdm_preferences, Aggregation, Direction, McdmMethod};
use pdesift::{seed, Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRequest {
    pub equation: Equation,
    pub nx: usize,
    pub nt: usize,
    pub noise_percent: f64,
    pub window: usize,
    pub polyorder: usize,
    /// Time index of the returned slice.
    pub snapshot: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct FieldView {
    pub x: Vec<f64>,
    pub t: f64,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub denoised: Vec<f64>,
    pub rmse_noisy: f64,
    pub rmse_denoised: f64,
}

pub fn field_view(req: &FieldRequest) -> Result<FieldView> {
    let (mut x, mut t) = req.equation.default_grid();
    x.n = req.nx;
    t.n = req.nt;
    if req.snapshot >= t.n {
        return Err(Error::Config(format!("snapshot {} outside {} time points", req.snapshot, t.n)));
    }
    let clean = pdegen::simulate_pde(req.equation, x, t, req.equation.default_initial())?;
    let noisy = pdegen::add_noise(&clean, NoiseSpec { level_percent: req.noise_percent, seed: req.seed })?;
    let denoised = pdegen::denoise(&noisy, req.window, req.polyorder)?;
    let slice = |f: &pdesift::Field| -> Vec<f64> { (0..x.n).map(|i| f.values()[f.index(&[i], req.snapshot)]).collect() };
    let (c, n, d) = (slice(&clean), slice(&noisy), slice(&denoised));
    let rmse = |a: &[f64]| (a.iter().zip(&c).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
    Ok(FieldView {
        x: x.points(),
        t: t.point(req.snapshot),
        rmse_noisy: rmse(&n),
        rmse_denoised: rmse(&d),
        clean: c,
        noisy: n,
        denoised: d,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnockoffRequest {
    pub n: usize,
    pub p: usize,
    /// Number of non-null features, spread evenly over the columns.
    pub signals: usize,
    pub amplitude: f64,
    pub rho: f64,
    pub q: f64,
    pub statistic: StatisticKind,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct KnockoffView {
    pub statistic: Vec<f64>,
    pub threshold: f64,
    pub truth: Vec<usize>,
    pub selected: Vec<usize>,
    pub fdp: f64,
    pub power: f64,
}

pub fn knockoff_filter(req: &KnockoffRequest) -> Result<KnockoffView> {
    if req.p < 2 || req.n <= 2 * req.p || req.signals == 0 || req.signals > req.p {
        return Err(Error::Config("need p ≥ 2, n > 2p and 1 ≤ signals ≤ p".into()));
    }
    if !(0.0..1.0).contains(&req.rho.abs()) || !(req.q > 0.0 && req.q < 1.0) {
        return Err(Error::Config("need |rho| < 1 and 0 < q < 1".into()));
    }
    let mut rng = seed::rng(seed::derive(req.seed, "demo-design", 0));
    let sigma = DMatrix::from_fn(req.p, req.p, |i, j| req.rho.powi((i as i32 - j as i32).abs()));
    let chol = sigma.cholesky().ok_or_else(|| Error::Config("AR(1) covariance is not positive definite".into()))?.l();
    let x = DMatrix::<f64>::from_fn(req.n, req.p, |_, _| StandardNormal.sample(&mut rng)) * chol.transpose();
    let stride = req.p / req.signals;
    let truth: Vec<usize> = (0..req.signals).map(|k| k * stride).collect();
    let mut beta = DVector::zeros(req.p);
    for (k, &j) in truth.iter().enumerate() {
        beta[j] = if k % 2 == 0 { req.amplitude } else { -req.amplitude };
    }
    let noise = DVector::<f64>::from_fn(req.n, |_, _| StandardNormal.sample(&mut rng));
    let y = &x * beta + noise;

    let sampler = KnockoffSampler::new(&x, CovMethod::LedoitWolf, SMatrixMethod::Equi, seed::derive(req.seed, "demo-cov", 0))?;
    let settings = KnockoffSettings {
        smatrix: SMatrixMethod::Equi,
        statistic: req.statistic,
        base_q: req.q,
        offset: 1,
        s_max: (2 * req.signals).max(10).min(2 * req.p),
        ridge_penalty: 0.0,
    };
    let r = sampler.realise(&x, std::slice::from_ref(&y), &settings, seed::derive(req.seed, "demo-draw", 0))?.remove(0);
    let (threshold, selected) = knockoff_threshold(&r.statistic, req.q, 1);
    let hits = selected.iter().filter(|j| truth.contains(j)).count();
    let fdp = if selected.is_empty() { 0.0 } else { (selected.len() - hits) as f64 / selected.len() as f64 };
    Ok(KnockoffView { statistic: r.statistic, threshold, power: hits as f64 / truth.len() as f64, truth, selected, fdp })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    /// Alternatives × criteria.
    pub matrix: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub directions: Vec<Direction>,
    /// Tie-break for the consensus winner; defaults to zeros.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Serialize)]
pub struct MethodRanking {
    pub method: McdmMethod,
    pub scores: Vec<f64>,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct RankView {
    pub methods: Vec<MethodRanking>,
    pub consensus: Vec<(Aggregation, Vec<usize>)>,
    pub winner: usize,
}

pub fn rank_alternatives(req: &RankRequest) -> Result<RankView> {
    let m = req.matrix.len();
    let c = req.weights.len();
    if m < 2 || c == 0 || req.directions.len() != c || req.matrix.iter().any(|row| row.len() != c) {
        return Err(Error::Config("matrix needs ≥ 2 rows whose width matches weights and directions".into()));
    }
    if req.matrix.iter().flatten().chain(&req.weights).any(|v| !v.is_finite()) || req.weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Config("entries must be finite and weights non-negative".into()));
    }
    let total: f64 = req.weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("weights must not all be zero".into()));
    }
    let weights: Vec<f64> = req.weights.iter().map(|w| w / total).collect();
    let matrix = DMatrix::from_fn(m, c, |i, j| req.matrix[i][j]);
    let methods: Vec<MethodRanking> = McdmMethod::ALL
        .iter()
        .map(|&method| {
            let prefs = mcdm_preferences(&matrix, &weights, &req.directions, method);
            MethodRanking { method, ranks: prefs.ranks(), scores: prefs.scores }
        })
        .collect();
    let ranks: Vec<Vec<usize>> = methods.iter().map(|r| r.ranks.clone()).collect();
    let sizes = req.sizes.clone().unwrap_or_else(|| vec![0; m]);
    if sizes.len() != m {
        return Err(Error::Config("sizes must have one entry per alternative".into()));
    }
    let consensus = aggregate_ranks(&ranks, &sizes)?;
    Ok(RankView { methods, consensus: consensus.rankings, winner: consensus.winner })
}

fn call<Req: for<'de> Deserialize<'de>, Resp: Serialize>(
    request: &str,
    op: fn(&Req) -> Result<Resp>,
) -> std::result::Result<String, JsError> {
    let req: Req = serde_json::from_str(request).map_err(|e| JsError::new(&e.to_string()))?;
    let resp = op(&req).map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&resp).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = fieldView)]
pub fn field_view_js(request: &str) -> std::result::Result<String, JsError> {
    call(request, field_view)
}

#[wasm_bindgen(js_name = knockoffFilter)]
pub fn knockoff_filter_js(request: &str) -> std::result::Result<String, JsError> {
    call(request, knockoff_filter)
}

#[wasm_bindgen(js_name = rankAlternatives)]
pub fn rank_alternatives_js(request: &str) -> std::result::Result<String, JsError> {
    call(request, rank_alternatives)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn denoising_reduces_error() {
        let req = FieldRequest {
            equation: Equation::Burgers,
            nx: 128,
            nt: 41,
            noise_percent: 20.0,
            window: 11,
            polyorder: 3,
            snapshot: 20,
            seed: 1,
        };
        let view = field_view(&req).unwrap();
        assert_eq!(view.x.len(), 128);
        assert!(view.rmse_denoised < view.rmse_noisy);
    }

    #[test]
    fn snapshot_out_of_range_is_rejected() {
        let req = FieldRequest {
            equation: Equation::Burgers,
            nx: 64,
            nt: 10,
            noise_percent: 0.0,
            window: 5,
            polyorder: 2,
            snapshot: 10,
            seed: 1,
        };
        assert!(field_view(&req).is_err());
    }

    #[test]
    fn strong_signals_are_found() {
        let req =
            KnockoffRequest { n: 400, p: 40, signals: 8, amplitude: 1.0, rho: 0.2, q: 0.2, statistic: StatisticKind::ShapDs, seed: 3 };
        let view = knockoff_filter(&req).unwrap();
        assert_eq!(view.statistic.len(), 40);
        assert_eq!(view.power, 1.0);
    }

    #[test]
    fn dominant_row_wins_every_method() {
        let req = RankRequest {
            matrix: vec![vec![1.0, 9.0], vec![2.0, 5.0], vec![3.0, 1.0]],
            weights: vec![1.0, 1.0],
            directions: vec![Direction::Minimise, Direction::Maximise],
            sizes: None,
        };
        let view = rank_alternatives(&req).unwrap();
        assert!(view.methods.iter().all(|m| m.ranks[0] == 1));
        assert_eq!(view.winner, 0);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let req =
            RankRequest { matrix: vec![vec![1.0], vec![2.0, 3.0]], weights: vec![1.0], directions: vec![Direction::Minimise], sizes: None };
        assert!(rank_alternatives(&req).is_err());
    }
}
