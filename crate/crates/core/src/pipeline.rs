//! End-to-end discovery run: simulate or load fields, build the weak-form
//! library, screen, eliminate, select, refit and score against ground truth.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::field::Field;
use crate::pdegen::{self, Equation, NoiseSpec};
use crate::regress;
use crate::rfe::{self, RfeConfig, RfeOutcome};
use crate::screen::{self, ScreenConfig, ScreenReport};
use crate::seed;
use crate::select::{self, Alternative, IcSelection, SelectConfig, Selection};
use crate::stats;
use crate::weaklib::{self, CandidateLibrary};
use crate::{linalg, par};

/// Where the fields come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Dataset {
    /// Simulated benchmark; grid sizes default to the reference grid.
    Builtin {
        equation: Equation,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nx: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nt: Option<usize>,
    },
    /// One or two saved fields (file stems) on a shared grid.
    Files { paths: Vec<PathBuf> },
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Builtin { equation: Equation::Burgers, nx: None, nt: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseConfig {
    pub window: usize,
    pub polyorder: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub max_poly: u32,
    pub max_deriv: u32,
    pub n_domains: usize,
    /// Half-widths in cells, space axes then time; a sixteenth of each axis when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<Vec<usize>>,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig { max_poly: 6, max_deriv: 6, n_domains: 1000, half_widths: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root of every stage seed.
    pub seed: u64,
    /// Thread cap (0: all cores).
    pub workers: usize,
    pub dataset: Dataset,
    pub noise_percent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denoise: Option<DenoiseConfig>,
    pub library: LibraryConfig,
    pub screen: ScreenConfig,
    pub rfe: RfeConfig,
    pub select: SelectConfig,
    /// Term label → true coefficient; a builtin dataset supplies its own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<BTreeMap<String, f64>>,
    /// Record wall-clock stage timings (makes reports run-dependent).
    pub record_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 0,
            dataset: Dataset::default(),
            noise_percent: 0.0,
            denoise: None,
            library: LibraryConfig::default(),
            screen: ScreenConfig::default(),
            rfe: RfeConfig::default(),
            select: SelectConfig::default(),
            ground_truth: None,
            record_timings: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_percent >= 0.0 && self.noise_percent.is_finite()) {
            return Err(Error::Config(format!("noise_percent must be finite and ≥ 0, got {}", self.noise_percent)));
        }
        let lib = &self.library;
        if lib.max_poly == 0 || lib.max_deriv == 0 || lib.n_domains == 0 {
            return Err(Error::Config("library needs max_poly, max_deriv and n_domains ≥ 1".into()));
        }
        if lib.half_widths.as_ref().is_some_and(|h| h.is_empty() || h.contains(&0)) {
            return Err(Error::Config("library half_widths must be non-empty and positive".into()));
        }
        if let Some(d) = self.denoise {
            if d.window % 2 == 0 || d.polyorder >= d.window {
                return Err(Error::Config(format!("denoise needs an odd window > polyorder, got {} and {}", d.window, d.polyorder)));
            }
        }
        match &self.dataset {
            Dataset::Files { paths } if paths.is_empty() || paths.len() > 2 => {
                return Err(Error::Config("dataset needs one or two field files".into()));
            }
            Dataset::Builtin { nx, nt, .. } if nx.is_some_and(|n| n < 8) || nt.is_some_and(|n| n < 2) => {
                return Err(Error::Config("builtin grid needs nx ≥ 8 and nt ≥ 2".into()));
            }
            _ => {}
        }
        if self.ground_truth.as_ref().is_some_and(BTreeMap::is_empty) {
            return Err(Error::Config("ground_truth, when given, must be non-empty".into()));
        }
        self.screen.validate()?;
        self.rfe.validate()?;
        self.select.validate()
    }

    /// Ground truth from the config, else from a builtin dataset.
    pub fn truth(&self) -> Option<BTreeMap<String, f64>> {
        self.ground_truth.clone().or_else(|| match self.dataset {
            Dataset::Builtin { equation, .. } => Some(equation.truth().into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
            Dataset::Files { .. } => None,
        })
    }

    /// Stage seeds derived from the root seed and each stage's own seed.
    pub fn seeds(&self) -> Seeds {
        let root = self.seed;
        Seeds {
            root,
            noise: seed::derive(root, "noise", 0),
            subdomains: seed::derive(root, "subdomains", 0),
            screen: seed::derive(root, "screen", self.screen.seed),
            rfe: seed::derive(root, "rfe", self.rfe.seed),
            select: seed::derive(root, "select", self.select.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub noise: u64,
    pub subdomains: u64,
    pub screen: u64,
    pub rfe: u64,
    pub select: u64,
}

/// Indices and labels of one stage's support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSupport {
    pub indices: Vec<usize>,
    pub labels: Vec<String>,
}

impl StageSupport {
    fn of(library: &CandidateLibrary, indices: &[usize]) -> Self {
        StageSupport { indices: indices.to_vec(), labels: library.labels(indices) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCoefficient {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub efdr: f64,
    pub epower: f64,
    /// Per-term percentage coefficient error; only on exact recovery.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce_percent: Option<Vec<TermCoefficient>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub dataset: String,
    pub library_rows: usize,
    pub library_terms: usize,
    pub screen: StageSupport,
    pub tuned_q: f64,
    pub rfe: StageSupport,
    pub winner: StageSupport,
    /// Raw-scale OLS coefficients of the winner.
    pub coefficients: Vec<TermCoefficient>,
    /// Supports chosen by the information criteria on the same alternatives.
    pub aic_choice: StageSupport,
    pub ebic_choice: StageSupport,
    /// Library term indices of each elimination-order alternative.
    pub mcdm_order: Vec<StageSupport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<StageTiming>>,
    pub seeds: Seeds,
}

impl DiscoveryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// eFDR, ePOWER and, on exact recovery, percentage coefficient errors.
/// Returns the metrics and any warnings.
pub fn compute_metrics(discovered: &[TermCoefficient], truth: &BTreeMap<String, f64>) -> Result<(Metrics, Vec<String>)> {
    if truth.is_empty() {
        return Err(Error::Config("ground truth is empty".into()));
    }
    let hits = discovered.iter().filter(|t| truth.contains_key(&t.label)).count();
    let efdr = if discovered.is_empty() { 0.0 } else { (discovered.len() - hits) as f64 / discovered.len() as f64 };
    let epower = hits as f64 / truth.len() as f64;
    let exact = hits == truth.len() && discovered.len() == truth.len();
    if !exact {
        let warning = "support is not an exact recovery; coefficient errors omitted".to_string();
        return Ok((Metrics { efdr, epower, ce_percent: None, ce_mean: None, ce_sd: None }, vec![warning]));
    }
    let ce: Vec<TermCoefficient> = discovered
        .iter()
        .map(|t| {
            let reference = truth[&t.label];
            TermCoefficient { label: t.label.clone(), value: 100.0 * (t.value - reference).abs() / reference.abs() }
        })
        .collect();
    let values: Vec<f64> = ce.iter().map(|c| c.value).collect();
    Ok((Metrics { efdr, epower, ce_mean: Some(stats::mean(&values)), ce_sd: Some(stats::sd(&values)), ce_percent: Some(ce) }, Vec::new()))
}

/// Load or simulate the fields, then add noise and denoise.
pub fn prepare_fields(config: &PipelineConfig) -> Result<Vec<Field>> {
    let seeds = config.seeds();
    let clean: Vec<Field> = match &config.dataset {
        Dataset::Builtin { equation, nx, nt } => {
            let (mut x, mut t) = equation.default_grid();
            x.n = nx.unwrap_or(x.n);
            t.n = nt.unwrap_or(t.n);
            vec![pdegen::simulate_pde(*equation, x, t, equation.default_initial())?]
        }
        Dataset::Files { paths } => paths.iter().map(|p| Field::load(p)).collect::<Result<_>>()?,
    };
    clean
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let noisy = pdegen::add_noise(
                f,
                NoiseSpec { level_percent: config.noise_percent, seed: seed::derive(seeds.noise, "field", i as u64) },
            )?;
            match config.denoise {
                Some(d) => pdegen::denoise(&noisy, d.window, d.polyorder),
                None => Ok(noisy),
            }
        })
        .collect()
}

/// Weak-form library over the prepared fields.
pub fn build_library(fields: &[Field], config: &PipelineConfig) -> Result<CandidateLibrary> {
    let seeds = config.seeds();
    let base = fields.first().ok_or_else(|| Error::Config("no fields".into()))?;
    let half_widths =
        config.library.half_widths.clone().unwrap_or_else(|| base.shape().iter().map(|&n| (n / 16).max(1).min((n - 1) / 2)).collect());
    let subdomains = weaklib::sample_subdomains(base, config.library.n_domains, &half_widths, seeds.subdomains)?;
    let refs: Vec<&Field> = fields.iter().collect();
    weaklib::build_library(&refs, config.library.max_poly, config.library.max_deriv, &subdomains, seeds.subdomains)
}

/// Screening with the pipeline-derived seed.
pub fn run_screen(library: &CandidateLibrary, config: &PipelineConfig) -> Result<screen::ScreenOutcome> {
    let cfg = ScreenConfig { seed: config.seeds().screen, ..config.screen.clone() };
    screen::adaptive_filter(library, &cfg)
}

/// Elimination on the first response.
pub fn run_rfe(library: &CandidateLibrary, support: &[usize], config: &PipelineConfig) -> Result<RfeOutcome> {
    let cfg = RfeConfig { seed: config.seeds().rfe, ..config.rfe.clone() };
    rfe::rfe(&library.design, &library.responses[0], support, &cfg)
}

/// Alternatives, MCDM selection and IC comparison on the eliminated support.
pub struct SelectOutcome {
    pub alternatives: Vec<Alternative>,
    pub selection: Selection,
    pub ic: IcSelection,
    /// Library column indices of each alternative.
    pub supports: Vec<Vec<usize>>,
}

pub fn run_select(library: &CandidateLibrary, rfe_support: &[usize], config: &PipelineConfig) -> Result<SelectOutcome> {
    if rfe_support.is_empty() {
        return Err(Error::EmptyDiscovery("elimination left no terms".into()));
    }
    let cfg = SelectConfig { seed: config.seeds().select, ..config.select.clone() };
    let restricted = library.restrict(rfe_support);
    let y = &library.responses[0];
    let alternatives = select::enumerate_alternatives(&restricted.design, y, cfg.ridge_penalty)?;
    let selection = select::mcdm_select(&alternatives, &restricted, y, &cfg)?;
    let ic = select::ic_select(&alternatives, &restricted.design, y, cfg.ebic_gamma)?;
    let supports = alternatives.iter().map(|a| a.support.iter().map(|&j| rfe_support[j]).collect()).collect();
    Ok(SelectOutcome { alternatives, selection, ic, supports })
}

/// Raw-scale OLS coefficients on library columns `support`.
pub fn refit(library: &CandidateLibrary, support: &[usize], y: &DVector<f64>) -> Result<Vec<TermCoefficient>> {
    let beta = regress::fit_ols(&linalg::columns(&library.design, support), y)?;
    let raw = library.to_raw(support, beta.as_slice());
    Ok(library.labels(support).into_iter().zip(raw).map(|(label, value)| TermCoefficient { label, value }).collect())
}

fn dataset_name(d: &Dataset) -> String {
    match d {
        Dataset::Builtin { equation, .. } => equation.to_string(),
        Dataset::Files { paths } => paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
    }
}

/// Stage stopwatch; reads the clock only when enabled.
struct Clock {
    last: Option<Instant>,
    entries: Vec<StageTiming>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock { last: enabled.then(Instant::now), entries: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        if let Some(last) = self.last {
            let now = Instant::now();
            self.entries.push(StageTiming { stage: stage.into(), seconds: (now - last).as_secs_f64() });
            self.last = Some(now);
        }
    }
}

/// Report plus the intermediate artifacts it was built from.
pub struct PipelineRun {
    pub report: DiscoveryReport,
    pub screen_report: ScreenReport,
    pub rfe: RfeOutcome,
    pub select: SelectOutcome,
}

/// Full pipeline; every error is tagged with the stage it came from.
pub fn run_pipeline(config: &PipelineConfig) -> Result<DiscoveryReport> {
    run_pipeline_full(config).map(|run| run.report)
}

pub fn run_pipeline_full(config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    par::with_workers(config.workers, || run_stages(config))?
}

fn run_stages(config: &PipelineConfig) -> Result<PipelineRun> {
    let mut clock = Clock::new(config.record_timings);
    let fields = prepare_fields(config).stage("simulate")?;
    clock.lap("simulate");
    let library = build_library(&fields, config).stage("library")?;
    clock.lap("library");
    let screened = run_screen(&library, config).stage("screen")?;
    clock.lap("screen");
    let eliminated = run_rfe(&library, &screened.support.indices, config).stage("rfe")?;
    clock.lap("rfe");
    let chosen = run_select(&library, &eliminated.support, config).stage("select")?;
    clock.lap("select");
    let winner = chosen.supports[chosen.selection.winner].clone();
    let coefficients = refit(&library, &winner, &library.responses[0]).stage("refit")?;
    clock.lap("refit");

    let mut warnings = Vec::new();
    let metrics = match config.truth() {
        Some(truth) => {
            let (m, w) = compute_metrics(&coefficients, &truth)?;
            warnings.extend(w);
            Some(m)
        }
        None => None,
    };
    let report = DiscoveryReport {
        dataset: dataset_name(&config.dataset),
        library_rows: library.n_rows(),
        library_terms: library.n_terms(),
        screen: StageSupport::of(&library, &screened.support.indices),
        tuned_q: screened.tuned_q,
        rfe: StageSupport::of(&library, &eliminated.support),
        winner: StageSupport::of(&library, &winner),
        coefficients,
        aic_choice: StageSupport::of(&library, &chosen.supports[chosen.ic.aic_winner]),
        ebic_choice: StageSupport::of(&library, &chosen.supports[chosen.ic.ebic_winner]),
        mcdm_order: chosen.selection.ordering.iter().map(|&a| StageSupport::of(&library, &chosen.supports[a])).collect(),
        metrics,
        warnings,
        timings: config.record_timings.then_some(clock.entries),
        seeds: config.seeds(),
    };
    Ok(PipelineRun { report, screen_report: screened.report, rfe: eliminated, select: chosen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn truth_of(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn coefs(pairs: &[(&str, f64)]) -> Vec<TermCoefficient> {
        pairs.iter().map(|(k, v)| TermCoefficient { label: k.to_string(), value: *v }).collect()
    }

    #[test]
    fn metrics_set_arithmetic() {
        let truth = truth_of(&[("u u_x", -1.0), ("u_xx", 0.1)]);
        let (m, w) = compute_metrics(&coefs(&[("u u_x", -1.0), ("u_xx", 0.1), ("u_xxxx", 0.01)]), &truth).unwrap();
        assert!((m.efdr - 1.0 / 3.0).abs() < 1e-15 && m.epower == 1.0);
        assert!(m.ce_mean.is_none() && w.len() == 1);
        let (m, w) = compute_metrics(&coefs(&[("u u_x", -1.0), ("u_xx", 0.0991)]), &truth).unwrap();
        assert_eq!((m.efdr, m.epower), (0.0, 1.0));
        assert!(w.is_empty());
        let ce = m.ce_percent.unwrap();
        assert!((ce[1].value - 0.9).abs() < 1e-9);
        assert!((m.ce_mean.unwrap() - 0.45).abs() < 1e-9);
        assert!(matches!(compute_metrics(&[], &BTreeMap::new()), Err(Error::Config(_))));
    }

    #[test]
    fn config_rejects_empty_library_params_and_unknown_keys() {
        let cfg = PipelineConfig { library: LibraryConfig { half_widths: Some(vec![]), ..LibraryConfig::default() }, ..Default::default() };
        assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
        let zero = PipelineConfig { library: LibraryConfig { n_domains: 0, ..LibraryConfig::default() }, ..Default::default() };
        assert!(matches!(zero.validate(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"library": {"max_poly": 2, "typo": 1}}"#).is_err());
        let parsed: PipelineConfig =
            serde_json::from_str(r#"{"dataset": {"builtin": {"equation": "ks"}}, "screen": {"q0": 0.3}}"#).unwrap();
        assert_eq!(parsed.screen.q0, 0.3);
        assert_eq!(parsed.truth().unwrap().len(), 3);
    }

    #[test]
    fn seeds_are_split_per_stage() {
        let s = PipelineConfig::default().seeds();
        let all = [s.noise, s.subdomains, s.screen, s.rfe, s.select];
        for (i, a) in all.iter().enumerate() {
            assert!(all[i + 1..].iter().all(|b| a != b));
        }
    }

    fn support(indices: Vec<usize>) -> StageSupport {
        StageSupport { labels: indices.iter().map(|i| format!("t{i}")).collect(), indices }
    }

    proptest! {
        #[test]
        fn report_round_trip_is_byte_stable(
            values in proptest::collection::vec(-1e6f64..1e6, 1..6),
            tiny in -1e-300f64..1e-300,
            seed in any::<u64>(),
            timed in any::<bool>(),
        ) {
            let coefficients: Vec<TermCoefficient> =
                values.iter().enumerate().map(|(i, &v)| TermCoefficient { label: format!("t{i}"), value: v + tiny }).collect();
            let idx: Vec<usize> = (0..values.len()).collect();
            let cfg = PipelineConfig { seed, ..Default::default() };
            let report = DiscoveryReport {
                dataset: "burgers".into(),
                library_rows: 10,
                library_terms: 20,
                screen: support(idx.clone()),
                tuned_q: values[0].abs() / 1e6,
                rfe: support(idx.clone()),
                winner: support(idx.clone()),
                coefficients: coefficients.clone(),
                aic_choice: support(idx.clone()),
                ebic_choice: support(idx),
                mcdm_order: Vec::new(),
                metrics: Some(Metrics { efdr: 0.0, epower: 1.0, ce_mean: Some(values[0]), ce_sd: None, ce_percent: Some(coefficients) }),
                warnings: vec!["w".into()],
                timings: timed.then(|| vec![StageTiming { stage: "screen".into(), seconds: tiny.abs() }]),
                seeds: cfg.seeds(),
            };
            let first = report.to_json().unwrap();
            let parsed = DiscoveryReport::from_json(&first).unwrap();
            prop_assert_eq!(&parsed, &report);
            prop_assert_eq!(parsed.to_json().unwrap(), first);
        }
    }
}
