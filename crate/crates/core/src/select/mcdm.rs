//! Multi-criteria decision methods over an alternatives × criteria matrix.
//!
//! Every method first maps each column onto `[0, 1]` with 1 the best value
//! (min-max, oriented by direction); a constant column maps to 1 throughout.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Minimise,
    Maximise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McdmMethod {
    Topsis,
    Vikor,
    Comet,
    Promethee2,
    Cocoso,
}

impl McdmMethod {
    pub const ALL: [McdmMethod; 5] = [McdmMethod::Topsis, McdmMethod::Vikor, McdmMethod::Comet, McdmMethod::Promethee2, McdmMethod::Cocoso];

    pub fn name(self) -> &'static str {
        match self {
            McdmMethod::Topsis => "topsis",
            McdmMethod::Vikor => "vikor",
            McdmMethod::Comet => "comet",
            McdmMethod::Promethee2 => "promethee2",
            McdmMethod::Cocoso => "cocoso",
        }
    }
}

/// VIKOR compromise weight.
pub const VIKOR_V: f64 = 0.5;
/// CoCoSo balancing parameter.
pub const COCOSO_LAMBDA: f64 = 0.5;
const TIE_TOLERANCE: f64 = 1e-10;

/// Scores of one method; `lower_is_better` marks a dispreference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub method: McdmMethod,
    pub scores: Vec<f64>,
    pub lower_is_better: bool,
}

impl Preferences {
    /// Competition ranks (1 = best; ties share the better rank).
    pub fn ranks(&self) -> Vec<usize> {
        let oriented: Vec<f64> = self.scores.iter().map(|&s| if self.lower_is_better { -s } else { s }).collect();
        competition_ranks(&oriented)
    }

    /// Scores mapped to `[0, 1]` with 1 the most preferred.
    pub fn normalised(&self) -> Vec<f64> {
        let oriented: Vec<f64> = self.scores.iter().map(|&s| if self.lower_is_better { -s } else { s }).collect();
        let (lo, hi) = min_max(&oriented);
        oriented.iter().map(|&s| if hi > lo { (s - lo) / (hi - lo) } else { 1.0 }).collect()
    }
}

/// Ranks for higher-is-better scores; near-equal scores tie.
pub fn competition_ranks(scores: &[f64]) -> Vec<usize> {
    let scale = scores.iter().fold(0.0_f64, |m, s| m.max(s.abs())).max(1.0);
    scores.iter().map(|&s| 1 + scores.iter().filter(|&&o| o - s > TIE_TOLERANCE * scale).count()).collect()
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Oriented min-max normalisation; also reports which columns vary.
fn utility(matrix: &DMatrix<f64>, directions: &[Direction]) -> (DMatrix<f64>, Vec<bool>) {
    let mut r = matrix.clone();
    let mut varies = vec![false; matrix.ncols()];
    for (j, mut col) in r.column_iter_mut().enumerate() {
        let (lo, hi) = min_max(col.as_slice());
        if hi > lo {
            varies[j] = true;
            for v in col.iter_mut() {
                *v = match directions[j] {
                    Direction::Minimise => (hi - *v) / (hi - lo),
                    Direction::Maximise => (*v - lo) / (hi - lo),
                };
            }
        } else {
            col.fill(1.0);
        }
    }
    (r, varies)
}

/// Preference scores of `method` for each row.
pub fn mcdm_preferences(matrix: &DMatrix<f64>, weights: &[f64], directions: &[Direction], method: McdmMethod) -> Preferences {
    assert_eq!(matrix.ncols(), weights.len(), "one weight per criterion");
    assert_eq!(matrix.ncols(), directions.len(), "one direction per criterion");
    let (r, varies) = utility(matrix, directions);
    let scores = match method {
        McdmMethod::Topsis => topsis(&r, weights),
        McdmMethod::Vikor => vikor(&r, weights),
        McdmMethod::Comet => comet(&r, weights, &varies),
        McdmMethod::Promethee2 => promethee2(&r, weights),
        McdmMethod::Cocoso => cocoso(&r, weights),
    };
    Preferences { method, scores, lower_is_better: method == McdmMethod::Vikor }
}

fn topsis(r: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let v = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] * w[j]);
    let best: Vec<f64> = v.column_iter().map(|c| c.max()).collect();
    let worst: Vec<f64> = v.column_iter().map(|c| c.min()).collect();
    v.row_iter()
        .map(|row| {
            let dist = |target: &[f64]| row.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let (plus, minus) = (dist(&best), dist(&worst));
            if plus + minus > 0.0 {
                minus / (plus + minus)
            } else {
                0.5
            }
        })
        .collect()
}

fn vikor(r: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let regret = |i: usize| (0..r.ncols()).map(move |j| w[j] * (1.0 - r[(i, j)]));
    let s: Vec<f64> = (0..r.nrows()).map(|i| regret(i).sum()).collect();
    let big_r: Vec<f64> = (0..r.nrows()).map(|i| regret(i).fold(0.0, f64::max)).collect();
    let (s_lo, s_hi) = min_max(&s);
    let (r_lo, r_hi) = min_max(&big_r);
    let scaled = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
    s.iter().zip(&big_r).map(|(&si, &ri)| VIKOR_V * scaled(si, s_lo, s_hi) + (1.0 - VIKOR_V) * scaled(ri, r_lo, r_hi)).collect()
}

/// Triangular memberships of `x` over the characteristic values {0, ½, 1}.
fn memberships(x: f64) -> [f64; 3] {
    if x <= 0.5 {
        let t = (x / 0.5).clamp(0.0, 1.0);
        [1.0 - t, t, 0.0]
    } else {
        let t = ((x - 0.5) / 0.5).clamp(0.0, 1.0);
        [0.0, 1.0 - t, t]
    }
}

/// Characteristic objects on the {min, mid, max} grid of each varying
/// criterion, scored by one minus their weighted Euclidean distance to the
/// ideal; rows are scored by multilinear interpolation of those scores.
fn comet(r: &DMatrix<f64>, w: &[f64], varies: &[bool]) -> Vec<f64> {
    let axes: Vec<usize> = (0..r.ncols()).filter(|&j| varies[j]).collect();
    let total_weight: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let grid = [0.0_f64, 0.5, 1.0];
    let n_objects = 3usize.pow(axes.len() as u32);
    let object_score = |code: usize| {
        let mut c = code;
        let mut d = 0.0;
        for &j in &axes {
            let value = grid[c % 3];
            c /= 3;
            d += w[j] * (1.0 - value).powi(2);
        }
        1.0 - (d / total_weight).sqrt()
    };
    let scores: Vec<f64> = (0..n_objects).map(object_score).collect();
    r.row_iter()
        .map(|row| {
            let mu: Vec<[f64; 3]> = axes.iter().map(|&j| memberships(row[j])).collect();
            (0..n_objects)
                .map(|code| {
                    let mut c = code;
                    let mut weight = 1.0;
                    for m in &mu {
                        weight *= m[c % 3];
                        c /= 3;
                        if weight == 0.0 {
                            break;
                        }
                    }
                    weight * scores[code]
                })
                .sum()
        })
        .collect()
}

/// Net outranking flow with V-shape preference and threshold = column range
/// (1 after normalisation).
fn promethee2(r: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let m = r.nrows();
    if m < 2 {
        return vec![0.0; m];
    }
    let pi = |a: usize, b: usize| -> f64 { (0..r.ncols()).map(|j| w[j] * (r[(a, j)] - r[(b, j)]).clamp(0.0, 1.0)).sum() };
    (0..m).map(|a| (0..m).filter(|&b| b != a).map(|b| pi(a, b) - pi(b, a)).sum::<f64>() / (m - 1) as f64).collect()
}

fn cocoso(r: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = r.row_iter().map(|row| row.iter().zip(w).map(|(v, wj)| v * wj).sum()).collect();
    let p: Vec<f64> = r.row_iter().map(|row| row.iter().zip(w).map(|(v, wj)| v.powf(*wj)).sum()).collect();
    // Relative score against the best row rather than the column total, so
    // that duplicated rows leave the other rows' order intact.
    let top: f64 = s.iter().zip(&p).map(|(a, b)| a + b).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (s_lo, s_hi) = min_max(&s);
    let (p_lo, p_hi) = min_max(&p);
    let floor = 1e-12;
    let c_den = (COCOSO_LAMBDA * s_hi + (1.0 - COCOSO_LAMBDA) * p_hi).max(floor);
    s.iter()
        .zip(&p)
        .map(|(&si, &pi)| {
            let ka = (si + pi) / top;
            let kb = si / s_lo.max(floor) + pi / p_lo.max(floor);
            let kc = (COCOSO_LAMBDA * si + (1.0 - COCOSO_LAMBDA) * pi) / c_den;
            (ka * kb * kc).cbrt() + (ka + kb + kc) / 3.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIN6: [Direction; 6] = [Direction::Minimise; 6];

    fn ranks_of(m: &DMatrix<f64>, w: &[f64], d: &[Direction], method: McdmMethod) -> Vec<usize> {
        mcdm_preferences(m, w, d, method).ranks()
    }

    #[test]
    fn topsis_symmetric_hand_case_ties() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = mcdm_preferences(&m, &[0.5, 0.5], &MIN6[..2], McdmMethod::Topsis);
        assert!((p.scores[0] - p.scores[1]).abs() < 1e-15);
        assert_eq!(p.ranks(), vec![1, 1]);
    }

    #[test]
    fn single_criterion_orders_follow_the_column() {
        let m = DMatrix::from_column_slice(5, 1, &[0.3, 0.1, 0.9, 0.5, 0.2]);
        for method in McdmMethod::ALL {
            assert_eq!(ranks_of(&m, &[1.0], &MIN6[..1], method), vec![3, 1, 5, 4, 2], "{method:?}");
        }
    }

    #[test]
    fn vikor_is_flagged_as_dispreference() {
        let m = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = mcdm_preferences(&m, &[1.0], &MIN6[..1], McdmMethod::Vikor);
        assert!(p.lower_is_better);
        assert_eq!(p.scores, vec![0.0, 0.5, 1.0]);
        assert_eq!(p.normalised(), vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn comet_interpolates_grid_scores_exactly_on_nodes() {
        // Two criteria; row 0 sits on the ideal node, row 1 on the anti-ideal.
        let m = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 0.5, 1.0]);
        let p = mcdm_preferences(&m, &[0.5, 0.5], &MIN6[..2], McdmMethod::Comet);
        assert!((p.scores[0] - 1.0).abs() < 1e-12);
        assert!(p.scores[1].abs() < 1e-12);
        // Node (½, 1) in utility space is (½, 0): distance √(0.5·0.25 + 0.5).
        let expect = 1.0 - (0.5f64 * 0.25 + 0.5).sqrt();
        assert!((p.scores[2] - expect).abs() < 1e-12);
    }

    #[test]
    fn promethee_flows_sum_to_zero() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 4.0, 2.0, 3.0, 3.0, 1.0, 0.5, 0.5]);
        let p = mcdm_preferences(&m, &[0.3, 0.7], &MIN6[..2], McdmMethod::Promethee2);
        assert!(p.scores.iter().sum::<f64>().abs() < 1e-12);
    }

    fn matrix_strategy() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>)> {
        (2usize..7, 1usize..5).prop_flat_map(|(m, c)| {
            (
                proptest::collection::vec(0.0f64..10.0, m * c).prop_map(move |v| DMatrix::from_row_slice(m, c, &v)),
                proptest::collection::vec(0.05f64..1.0, c).prop_map(|w| {
                    let s: f64 = w.iter().sum();
                    w.iter().map(|x| x / s).collect()
                }),
            )
        })
    }

    proptest! {
        #[test]
        fn dominated_row_ranks_last((m, w) in matrix_strategy()) {
            let worst: Vec<f64> = m.column_iter().map(|c| c.max() + 1.0).collect();
            let mut ext = m.clone().insert_row(m.nrows(), 0.0);
            for (j, v) in worst.iter().enumerate() {
                ext[(m.nrows(), j)] = *v;
            }
            let dirs = vec![Direction::Minimise; m.ncols()];
            for method in McdmMethod::ALL {
                let ranks = ranks_of(&ext, &w, &dirs, method);
                let last = ranks[m.nrows()];
                prop_assert!(ranks.iter().all(|&r| r <= last), "{method:?} {ranks:?}");
                prop_assert_eq!(ranks.iter().filter(|&&r| r == last).count(), 1, "{:?} {:?}", method, ranks);
            }
        }

        #[test]
        fn negating_and_flipping_a_column_is_invisible((m, w) in matrix_strategy(), col in 0usize..4) {
            let col = col % m.ncols();
            let dirs = vec![Direction::Minimise; m.ncols()];
            let mut flipped = m.clone();
            flipped.column_mut(col).neg_mut();
            let mut fdirs = dirs.clone();
            fdirs[col] = Direction::Maximise;
            for method in McdmMethod::ALL {
                prop_assert_eq!(ranks_of(&m, &w, &dirs, method), ranks_of(&flipped, &w, &fdirs, method), "{:?}", method);
            }
        }

        #[test]
        fn duplicating_a_row_keeps_the_others_in_order((m, w) in matrix_strategy(), pick in 0usize..7) {
            let pick = pick % m.nrows();
            let dirs = vec![Direction::Minimise; m.ncols()];
            let dup = m.clone().insert_row(m.nrows(), 0.0);
            let mut dup = dup;
            let row = m.row(pick).into_owned();
            dup.row_mut(m.nrows()).copy_from(&row);
            for method in [McdmMethod::Topsis, McdmMethod::Promethee2, McdmMethod::Cocoso] {
                let before = mcdm_preferences(&m, &w, &dirs, method).scores;
                let after = mcdm_preferences(&dup, &w, &dirs, method).scores;
                for a in 0..m.nrows() {
                    for b in 0..m.nrows() {
                        if before[a] > before[b] + 1e-9 {
                            prop_assert!(after[a] > after[b], "{:?}: {} vs {}", method, a, b);
                        }
                    }
                }
            }
        }
    }
}
