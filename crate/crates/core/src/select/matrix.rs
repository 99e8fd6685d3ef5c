//! Decision matrix assembly: criteria evaluation, EBIC pre-filter,
//! normalisation and variance weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::criteria::{self, cv_splits, FORECAST_LEVELS};
use super::mcdm::Direction;
use super::{projection_rss, Alternative, SelectConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::regress;
use crate::stats;
use crate::weaklib::{structural_complexity, CandidateLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Pinball,
    StructuralComplexity,
    Ricomp,
    PdeUncertainty,
    Miscalibration,
    Cwc,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Pinball,
        Criterion::StructuralComplexity,
        Criterion::Ricomp,
        Criterion::PdeUncertainty,
        Criterion::Miscalibration,
        Criterion::Cwc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Pinball => "pinball",
            Criterion::StructuralComplexity => "structural_complexity",
            Criterion::Ricomp => "ricomp",
            Criterion::PdeUncertainty => "pde_uncertainty",
            Criterion::Miscalibration => "miscalibration",
            Criterion::Cwc => "cwc",
        }
    }

    /// Criteria normalised on a log scale.
    pub fn log_scaled(self) -> bool {
        self != Criterion::StructuralComplexity
    }
}

/// Criteria of one evaluated alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaRow {
    /// Index into the alternatives passed to [`build_decision_matrix`].
    pub alternative: usize,
    pub size: usize,
    /// Term labels joined by `+`.
    pub label: String,
    pub ebic: f64,
    /// Raw criteria in [`Criterion::ALL`] order.
    pub raw: Vec<f64>,
    /// Column-normalised criteria in `[0, 1]`.
    pub normalised: Vec<f64>,
    pub picp: f64,
    pub nmpil: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMatrix {
    /// Every evaluated alternative, in input order.
    pub rows: Vec<CriteriaRow>,
    /// Alternatives retained for ranking, best EBIC first.
    pub active: Vec<usize>,
    pub weights: Vec<f64>,
    pub directions: Vec<Direction>,
}

impl DecisionMatrix {
    pub fn active_alternatives(&self) -> Vec<usize> {
        self.active.clone()
    }

    /// Row holding alternative `a`.
    pub fn row_of(&self, a: usize) -> Option<usize> {
        self.rows.iter().position(|r| r.alternative == a)
    }

    /// Normalised sub-matrix of the given rows.
    pub fn normalised_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), Criterion::ALL.len(), |i, j| self.rows[rows[i]].normalised[j])
    }
}

struct Evaluation {
    raw: Vec<f64>,
    picp: f64,
    nmpil: f64,
}

fn evaluate(x: &DMatrix<f64>, y: &DVector<f64>, complexity: f64, config: &SelectConfig) -> Result<Evaluation> {
    let plan = config.plan();
    let bundle = criteria::conformal_intervals(x, y, &plan)?;
    let pinball = criteria::criterion_pinball(&bundle, y)?;
    let ricomp = criteria::criterion_ricomp(x, y, config.ridge_penalty)?;
    let splits = cv_splits(y.len(), &plan);
    let uncertainty = splits
        .iter()
        .map(|s| criteria::criterion_uncertainty(&linalg::rows(x, &s.train), &linalg::gather(y, &s.train)))
        .sum::<Result<f64>>()?
        / splits.len() as f64;
    let mut miscalibration = 0.0;
    for rf in &bundle.repeats {
        for (level, &tau) in FORECAST_LEVELS.iter().enumerate() {
            miscalibration += criteria::murphy_ehm(rf.at_level(level), y.as_slice(), tau)?.mcb;
        }
    }
    miscalibration /= (bundle.repeats.len() * FORECAST_LEVELS.len()) as f64;
    let cwc = criteria::cwc(bundle.picp, bundle.nmpil, criteria::CWC_MU, criteria::CWC_ETA);
    Ok(Evaluation { raw: vec![pinball, complexity, ricomp, uncertainty, miscalibration, cwc], picp: bundle.picp, nmpil: bundle.nmpil })
}

/// Log10 for positive columns, log10 after a shift by the column range
/// otherwise; then min-max onto `[0, 1]` (constant columns map to 0).
pub fn normalise_column(values: &[f64], log_scaled: bool) -> Vec<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    let t: Vec<f64> = if !log_scaled {
        values.to_vec()
    } else if lo > 0.0 {
        values.iter().map(|v| v.log10()).collect()
    } else {
        values.iter().map(|v| (v - lo + (hi - lo)).log10()).collect()
    };
    let (tlo, thi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    t.iter().map(|v| (v - tlo) / (thi - tlo)).collect()
}

/// Weights proportional to the sample variance of each min-max rescaled
/// column; zero-variance columns get zero weight. Uniform if all vanish.
pub fn variance_weights(matrix: &DMatrix<f64>) -> Vec<f64> {
    let c = matrix.ncols();
    let variances: Vec<f64> = matrix
        .column_iter()
        .map(|col| {
            let (lo, hi) = (col.min(), col.max());
            if hi > lo {
                let scaled: Vec<f64> = col.iter().map(|v| (v - lo) / (hi - lo)).collect();
                stats::sd(&scaled).powi(2)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = variances.iter().sum();
    if total > 0.0 {
        variances.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / c as f64; c]
    }
}

/// Evaluate every alternative, keep the best `n_alternatives` by EBIC and
/// weight the criteria on that active set.
pub fn build_decision_matrix(
    alternatives: &[Alternative],
    library: &CandidateLibrary,
    y: &DVector<f64>,
    config: &SelectConfig,
) -> Result<DecisionMatrix> {
    config.validate()?;
    if alternatives.len() < 2 {
        return Err(Error::Config("a decision matrix needs at least two alternatives".into()));
    }
    let x = &library.design;
    if y.len() != x.nrows() {
        return Err(Error::Config("response length differs from library rows".into()));
    }
    if let Some(bad) = alternatives.iter().flat_map(|a| &a.support).find(|&&j| j >= x.ncols()) {
        return Err(Error::Config(format!("alternative references column {bad} of {}", x.ncols())));
    }
    let (n, pool) = x.shape();
    let evaluations = par::map_range(alternatives.len(), |i| {
        let a = &alternatives[i];
        let complexity: u32 = a.support.iter().map(|&j| structural_complexity(&library.terms[j])).sum();
        let xs = linalg::columns(x, &a.support);
        let ebic = regress::ebic(projection_rss(x, y, &a.support)?, n, a.size, pool, config.ebic_gamma);
        evaluate(&xs, y, complexity as f64, config).map(|e| (ebic, e))
    });
    let mut rows = Vec::with_capacity(alternatives.len());
    for (i, result) in evaluations.into_iter().enumerate() {
        let (ebic, e) = result?;
        let label = library.labels(&alternatives[i].support).join("+");
        if let Some(j) = e.raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { alternative: label, criterion: Criterion::ALL[j].name() });
        }
        if !ebic.is_finite() {
            return Err(Error::NonFinite { alternative: label, criterion: "ebic" });
        }
        rows.push(CriteriaRow {
            alternative: i,
            size: alternatives[i].size,
            label,
            ebic,
            raw: e.raw,
            normalised: Vec::new(),
            picp: e.picp,
            nmpil: e.nmpil,
        });
    }
    let columns: Vec<Vec<f64>> = Criterion::ALL
        .iter()
        .enumerate()
        .map(|(j, c)| normalise_column(&rows.iter().map(|r| r.raw[j]).collect::<Vec<_>>(), c.log_scaled()))
        .collect();
    for (i, row) in rows.iter_mut().enumerate() {
        row.normalised = columns.iter().map(|col| col[i]).collect();
    }
    let mut by_ebic: Vec<usize> = (0..rows.len()).collect();
    by_ebic.sort_by(|&a, &b| rows[a].ebic.total_cmp(&rows[b].ebic).then(rows[a].size.cmp(&rows[b].size)));
    by_ebic.truncate(config.n_alternatives.min(rows.len()));
    let active: Vec<usize> = by_ebic.iter().map(|&r| rows[r].alternative).collect();
    let mut matrix = DecisionMatrix { rows, active, weights: Vec::new(), directions: vec![Direction::Minimise; Criterion::ALL.len()] };
    matrix.weights = variance_weights(&matrix.normalised_rows(&by_ebic));
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_rows_zero_weight_columns() {
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 1.0, 0.0, 0.2, 0.5, 0.5, 0.2, 0.0, 1.0]);
        let w = variance_weights(&m);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 0.5).abs() < 1e-12 && (w[2] - 0.5).abs() < 1e-12);
        let flat = DMatrix::from_element(2, 4, 0.3);
        assert_eq!(variance_weights(&flat), vec![0.25; 4]);
    }

    #[test]
    fn log_normalisation_handles_signs() {
        let pos = normalise_column(&[1.0, 10.0, 100.0], true);
        assert!((pos[1] - 0.5).abs() < 1e-12);
        let neg = normalise_column(&[-5.0, -3.0, 5.0], true);
        assert_eq!((neg[0], neg[2]), (0.0, 1.0));
        assert!(neg[1] > 0.0 && neg[1] < 1.0);
        assert_eq!(normalise_column(&[2.0, 2.0], true), vec![0.0, 0.0]);
        assert_eq!(normalise_column(&[1.0, 2.0, 3.0], false), vec![0.0, 0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(v in proptest::collection::vec(-100.0f64..100.0, 12..=30)) {
            let c = 6;
            let r = v.len() / c;
            let m = DMatrix::from_row_slice(r, c, &v[..r * c]);
            let w = variance_weights(&m);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
