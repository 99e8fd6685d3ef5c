//! Final model choice among best-subset alternatives.
//!
//! Every support size of the eliminated library contributes its RSS-best
//! subset. The alternatives are scored on six out-of-sample criteria, ranked
//! by five MCDM methods, and the rankings are merged by five aggregation
//! rules. The winner is removed and the rest re-ranked until none remain.

pub mod aggregate;
pub mod criteria;
pub mod matrix;
pub mod mcdm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::regress::{self, exhaustive_best_subset};
use crate::weaklib::CandidateLibrary;

pub use aggregate::{aggregate_ranks, Aggregation, Consensus, KEMENY_LIMIT};
pub use criteria::{
    conformal_intervals, criterion_pinball, criterion_ricomp, criterion_uncertainty, cwc, isotonic_quantile, murphy_ehm, CvPlan,
    IntervalBundle, MurphyEhm, RepeatForecast, CWC_ETA, CWC_MU, FORECAST_LEVELS,
};
pub use matrix::{build_decision_matrix, variance_weights, CriteriaRow, Criterion, DecisionMatrix};
pub use mcdm::{competition_ranks, mcdm_preferences, Direction, McdmMethod, Preferences};

/// Largest eliminated support accepted for enumeration.
pub const MAX_POOL: usize = 20;

/// RSS-best subset of one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    /// Sorted column indices into the eliminated library.
    pub support: Vec<usize>,
    pub size: usize,
    /// Ridge refit on `support`, standardised scale, in support order.
    pub refit_coefficients: Vec<f64>,
    pub rss: f64,
}

/// One RSS-best subset per size `1..=p`.
pub fn enumerate_alternatives(x: &DMatrix<f64>, y: &DVector<f64>, ridge_penalty: f64) -> Result<Vec<Alternative>> {
    let p = x.ncols();
    if p == 0 {
        return Err(Error::Config("no columns to enumerate".into()));
    }
    if p > MAX_POOL {
        return Err(Error::Budget { count: 1u128 << p, budget: 1u128 << MAX_POOL });
    }
    (1..=p)
        .map(|k| {
            let fit = exhaustive_best_subset(x, y, k, ridge_penalty)?;
            Ok(Alternative {
                refit_coefficients: fit.support.iter().map(|&j| fit.coefficients[j]).collect(),
                size: fit.support.len(),
                support: fit.support,
                rss: fit.cv_score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub miscoverage: f64,
    pub folds: usize,
    pub repeats: usize,
    /// Alternatives kept by EBIC before ranking.
    pub n_alternatives: usize,
    pub ebic_gamma: f64,
    pub ridge_penalty: f64,
    pub qr_penalty: f64,
    pub seed: u64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            miscoverage: 0.1,
            folds: 3,
            repeats: 10,
            n_alternatives: 5,
            ebic_gamma: 1.0,
            ridge_penalty: regress::DEFAULT_RIDGE,
            qr_penalty: regress::DEFAULT_RIDGE,
            seed: 0,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan().validate()?;
        if self.n_alternatives == 0 || self.n_alternatives > KEMENY_LIMIT {
            return Err(Error::Config(format!("n_alternatives must be in 1..={KEMENY_LIMIT}, got {}", self.n_alternatives)));
        }
        if !(0.0..=1.0).contains(&self.ebic_gamma) {
            return Err(Error::Config(format!("EBIC γ {} outside [0,1]", self.ebic_gamma)));
        }
        Ok(())
    }

    pub fn plan(&self) -> CvPlan {
        CvPlan {
            folds: self.folds,
            repeats: self.repeats,
            miscoverage: self.miscoverage,
            qr_penalty: self.qr_penalty,
            ridge_penalty: self.ridge_penalty,
            seed: self.seed,
        }
    }
}

/// One pass of ranking over the still-active alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// Alternative indices ranked in this pass.
    pub active: Vec<usize>,
    pub preferences: Vec<Preferences>,
    pub consensus: Consensus,
    pub winner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Alternative indices in elimination order.
    pub ordering: Vec<usize>,
    pub winner: usize,
    pub winner_support: Vec<usize>,
    pub rounds: Vec<Round>,
    pub matrix: Option<DecisionMatrix>,
}

/// Rank `active` rows of the matrix once.
pub fn rank_once(matrix: &DecisionMatrix, active: &[usize], alternatives: &[Alternative]) -> Result<Round> {
    let rows: Vec<usize> = active
        .iter()
        .map(|&a| matrix.row_of(a))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Contract("active alternative missing from the decision matrix".into()))?;
    let sub = matrix.normalised_rows(&rows);
    let preferences: Vec<Preferences> =
        McdmMethod::ALL.iter().map(|&m| mcdm_preferences(&sub, &matrix.weights, &matrix.directions, m)).collect();
    let ranks: Vec<Vec<usize>> = preferences.iter().map(Preferences::ranks).collect();
    let sizes: Vec<usize> = active.iter().map(|&a| alternatives[a].size).collect();
    let consensus = aggregate_ranks(&ranks, &sizes)?;
    let winner = active[consensus.winner];
    Ok(Round { active: active.to_vec(), preferences, consensus, winner })
}

/// Alternative with the highest mean of per-method normalised preferences;
/// ties go to the larger support.
pub fn mean_preference_winner(round: &Round, alternatives: &[Alternative]) -> usize {
    let m = round.active.len();
    let normalised: Vec<Vec<f64>> = round.preferences.iter().map(Preferences::normalised).collect();
    let mean: Vec<f64> = (0..m).map(|i| normalised.iter().map(|v| v[i]).sum::<f64>() / normalised.len() as f64).collect();
    let best = (0..m)
        .max_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(alternatives[round.active[a]].size.cmp(&alternatives[round.active[b]].size)))
        .expect("non-empty round");
    round.active[best]
}

/// Recursive multi-criteria selection over `alternatives`, whose supports
/// index the columns of `library`.
pub fn mcdm_select(alternatives: &[Alternative], library: &CandidateLibrary, y: &DVector<f64>, config: &SelectConfig) -> Result<Selection> {
    config.validate()?;
    match alternatives.len() {
        0 => return Err(Error::Config("no alternatives to select from".into())),
        1 => {
            return Ok(Selection {
                ordering: vec![0],
                winner: 0,
                winner_support: alternatives[0].support.clone(),
                rounds: Vec::new(),
                matrix: None,
            })
        }
        _ => {}
    }
    let matrix = build_decision_matrix(alternatives, library, y, config)?;
    let mut active = matrix.active_alternatives();
    let mut ordering = Vec::with_capacity(active.len());
    let mut rounds = Vec::new();
    while active.len() > 1 {
        let round = rank_once(&matrix, &active, alternatives)?;
        active.retain(|&a| a != round.winner);
        ordering.push(round.winner);
        rounds.push(round);
    }
    ordering.extend(active);
    let winner = ordering[0];
    Ok(Selection { ordering, winner, winner_support: alternatives[winner].support.clone(), rounds, matrix: Some(matrix) })
}

/// Information-criterion choice among alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSelection {
    pub aic: Vec<f64>,
    pub ebic: Vec<f64>,
    pub aic_winner: usize,
    pub ebic_winner: usize,
}

/// Residual sum of squares of the least-squares projection onto `support`.
pub fn projection_rss(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Result<f64> {
    let xs = linalg::columns(x, support);
    let beta = regress::fit_ols(&xs, y)?;
    Ok((y - xs * beta).norm_squared().max(f64::MIN_POSITIVE))
}

/// AIC and EBIC minimisers with the ML noise variance and pool `x.ncols()`.
pub fn ic_select(alternatives: &[Alternative], x: &DMatrix<f64>, y: &DVector<f64>, gamma: f64) -> Result<IcSelection> {
    if alternatives.is_empty() {
        return Err(Error::Config("no alternatives to select from".into()));
    }
    let n = x.nrows();
    let pool = x.ncols();
    let rss: Vec<f64> = alternatives.iter().map(|a| projection_rss(x, y, &a.support)).collect::<Result<_>>()?;
    let aic: Vec<f64> = alternatives.iter().zip(&rss).map(|(a, &r)| regress::aic(r, n, a.size)).collect();
    let ebic: Vec<f64> = alternatives.iter().zip(&rss).map(|(a, &r)| regress::ebic(r, n, a.size, pool, gamma)).collect();
    let argmin = |v: &[f64]| (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).expect("non-empty");
    Ok(IcSelection { aic_winner: argmin(&aic), ebic_winner: argmin(&ebic), aic, ebic })
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

/// Decision matrix as CSV: one row per evaluated alternative, raw and
/// normalised criteria, EBIC and whether it entered the ranking.
pub fn decision_matrix_csv(matrix: &DecisionMatrix) -> Result<String> {
    csv_string(|w| {
        let mut header = vec!["alternative".to_string(), "size".into(), "terms".into(), "ebic".into(), "active".into()];
        header.extend(Criterion::ALL.iter().map(|c| format!("raw_{}", c.name())));
        header.extend(Criterion::ALL.iter().map(|c| format!("norm_{}", c.name())));
        w.write_record(&header)?;
        for row in &matrix.rows {
            let mut rec = vec![
                row.alternative.to_string(),
                row.size.to_string(),
                row.label.clone(),
                row.ebic.to_string(),
                matrix.active.contains(&row.alternative).to_string(),
            ];
            rec.extend(row.raw.iter().chain(&row.normalised).map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// First-round preferences per method (normalised, 1 = best) keyed by
/// support size, plus the composite Borda score.
pub fn preference_curves_csv(selection: &Selection, alternatives: &[Alternative]) -> Result<String> {
    csv_string(|w| {
        let mut header = vec!["size".to_string(), "alternative".into()];
        header.extend(McdmMethod::ALL.iter().map(|m| m.name().to_string()));
        header.push("composite_borda".into());
        w.write_record(&header)?;
        let Some(round) = selection.rounds.first() else {
            return Ok(());
        };
        let normalised: Vec<Vec<f64>> = round.preferences.iter().map(Preferences::normalised).collect();
        let mut order: Vec<usize> = (0..round.active.len()).collect();
        order.sort_by_key(|&i| alternatives[round.active[i]].size);
        for i in order {
            let a = round.active[i];
            let mut rec = vec![alternatives[a].size.to_string(), a.to_string()];
            rec.extend(normalised.iter().map(|v| v[i].to_string()));
            rec.push(round.consensus.composite[i].to_string());
            w.write_record(&rec)?;
        }
        Ok(())
    })
}
