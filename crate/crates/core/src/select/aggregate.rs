//! Consensus rankings from several method rankings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest alternative count for the exact Kemeny search.
pub const KEMENY_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Borda,
    Schulze,
    Kemeny,
    Plurality,
    PairwiseGreedy,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] =
        [Aggregation::Borda, Aggregation::Schulze, Aggregation::Kemeny, Aggregation::Plurality, Aggregation::PairwiseGreedy];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    /// One ranking (1 = best) per aggregation, in [`Aggregation::ALL`] order.
    pub rankings: Vec<(Aggregation, Vec<usize>)>,
    /// Borda score over the five consensus rankings.
    pub composite: Vec<f64>,
    /// How many consensus rankings place each alternative first.
    pub first_places: Vec<usize>,
    pub winner: usize,
}

/// `d[a][b]`: number of input rankings placing `a` strictly above `b`.
pub fn pairwise_counts(ranks: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let m = ranks.first().map_or(0, Vec::len);
    let mut d = vec![vec![0; m]; m];
    for r in ranks {
        for a in 0..m {
            for b in 0..m {
                if r[a] < r[b] {
                    d[a][b] += 1;
                }
            }
        }
    }
    d
}

/// Ranks from higher-is-better scores, ties sharing the better rank.
fn ranks_from_scores<T: PartialOrd>(scores: &[T]) -> Vec<usize> {
    scores.iter().map(|s| 1 + scores.iter().filter(|o| *o > s).count()).collect()
}

pub fn borda(ranks: &[Vec<usize>]) -> Vec<usize> {
    ranks_from_scores(&borda_scores(ranks))
}

fn borda_scores(ranks: &[Vec<usize>]) -> Vec<f64> {
    let m = ranks.first().map_or(0, Vec::len);
    (0..m).map(|a| ranks.iter().map(|r| (m - r[a]) as f64).sum()).collect()
}

/// Schulze beatpath method; rank by number of beatpath wins.
pub fn schulze(ranks: &[Vec<usize>]) -> Vec<usize> {
    let d = pairwise_counts(ranks);
    let m = d.len();
    let mut p = vec![vec![0; m]; m];
    for a in 0..m {
        for b in 0..m {
            if a != b && d[a][b] > d[b][a] {
                p[a][b] = d[a][b];
            }
        }
    }
    for k in 0..m {
        for a in 0..m {
            for b in 0..m {
                if a != b && a != k && b != k {
                    p[a][b] = p[a][b].max(p[a][k].min(p[k][b]));
                }
            }
        }
    }
    let wins: Vec<usize> = (0..m).map(|a| (0..m).filter(|&b| p[a][b] > p[b][a]).count()).collect();
    ranks_from_scores(&wins)
}

/// Total pairwise disagreement of an ordering with the inputs.
pub fn kendall_cost(order: &[usize], d: &[Vec<usize>]) -> usize {
    let mut cost = 0;
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            cost += d[b][a];
        }
    }
    cost
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Every minimum-disagreement ordering, by exhaustive permutation search.
pub fn kemeny_orders(ranks: &[Vec<usize>]) -> Result<(usize, Vec<Vec<usize>>)> {
    let d = pairwise_counts(ranks);
    let m = d.len();
    if m > KEMENY_LIMIT {
        let count = (1..=m as u128).product();
        return Err(Error::Budget { count, budget: (1..=KEMENY_LIMIT as u128).product() });
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = (usize::MAX, Vec::new());
    loop {
        let cost = kendall_cost(&perm, &d);
        if cost < best.0 {
            best = (cost, vec![perm.clone()]);
        } else if cost == best.0 {
            best.1.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            return Ok(best);
        }
    }
}

/// Exact Kemeny–Young ranking. With several optimal orderings, an
/// alternative's rank counts only those ahead of it in all of them.
pub fn kemeny(ranks: &[Vec<usize>]) -> Result<Vec<usize>> {
    let (_, orders) = kemeny_orders(ranks)?;
    let m = orders[0].len();
    let pos: Vec<Vec<usize>> = orders.iter().map(|o| positions(o)).collect();
    Ok((0..m).map(|a| 1 + (0..m).filter(|&b| b != a && pos.iter().all(|p| p[b] < p[a])).count()).collect())
}

fn positions(order: &[usize]) -> Vec<usize> {
    let mut r = vec![0; order.len()];
    for (pos, &a) in order.iter().enumerate() {
        r[a] = pos + 1;
    }
    r
}

/// First-place counts, ties broken by second places, then third, and so on.
pub fn plurality(ranks: &[Vec<usize>]) -> Vec<usize> {
    let m = ranks.first().map_or(0, Vec::len);
    let profile: Vec<Vec<usize>> = (0..m).map(|a| (1..=m).map(|k| ranks.iter().filter(|r| r[a] == k).count()).collect()).collect();
    ranks_from_scores(&profile)
}

/// Repeatedly take the alternative with the largest net pairwise margin over
/// those remaining, Borda score breaking ties; fully tied picks share a rank.
pub fn pairwise_greedy(ranks: &[Vec<usize>]) -> Vec<usize> {
    let d = pairwise_counts(ranks);
    let borda = borda_scores(ranks);
    let mut remaining: Vec<usize> = (0..d.len()).collect();
    let mut out = vec![0; d.len()];
    let mut placed = 0;
    while !remaining.is_empty() {
        let key = |a: usize| (remaining.iter().map(|&b| d[a][b] as i64 - d[b][a] as i64).sum::<i64>(), borda[a]);
        let keys: Vec<(i64, f64)> = remaining.iter().map(|&a| key(a)).collect();
        let top =
            keys.iter()
                .copied()
                .fold((i64::MIN, f64::NEG_INFINITY), |acc, k| if k.0 > acc.0 || (k.0 == acc.0 && k.1 > acc.1) { k } else { acc });
        let picks: Vec<usize> = remaining.iter().zip(&keys).filter(|(_, k)| **k == top).map(|(&a, _)| a).collect();
        for &a in &picks {
            out[a] = placed + 1;
        }
        placed += picks.len();
        remaining.retain(|a| !picks.contains(a));
    }
    out
}

/// Five consensus rankings, their composite Borda score, and the winner:
/// most first places, then composite Borda, then larger `sizes`.
pub fn aggregate_ranks(ranks: &[Vec<usize>], sizes: &[usize]) -> Result<Consensus> {
    let m = sizes.len();
    if m == 0 || ranks.is_empty() || ranks.iter().any(|r| r.len() != m) {
        return Err(Error::Config("rank matrix must be non-empty and match the alternatives".into()));
    }
    let rankings = vec![
        (Aggregation::Borda, borda(ranks)),
        (Aggregation::Schulze, schulze(ranks)),
        (Aggregation::Kemeny, kemeny(ranks)?),
        (Aggregation::Plurality, plurality(ranks)),
        (Aggregation::PairwiseGreedy, pairwise_greedy(ranks)),
    ];
    let consensus: Vec<Vec<usize>> = rankings.iter().map(|(_, r)| r.clone()).collect();
    let composite = borda_scores(&consensus);
    let first_places: Vec<usize> = (0..m).map(|a| consensus.iter().filter(|r| r[a] == 1).count()).collect();
    let winner = (0..m)
        .max_by(|&a, &b| {
            first_places[a].cmp(&first_places[b]).then(composite[a].total_cmp(&composite[b])).then(sizes[a].cmp(&sizes[b])).then(b.cmp(&a))
        })
        .expect("non-empty");
    Ok(Consensus { rankings, composite, first_places, winner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_orders(m: usize) -> Vec<Vec<usize>> {
        if m == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for shorter in all_orders(m - 1) {
            for slot in 0..=shorter.len() {
                let mut o = shorter.clone();
                o.insert(slot, m - 1);
                out.push(o);
            }
        }
        out
    }

    fn order_to_ranks(order: &[usize]) -> Vec<usize> {
        let mut r = vec![0; order.len()];
        for (i, &a) in order.iter().enumerate() {
            r[a] = i + 1;
        }
        r
    }

    /// Kendall distance counted pair by pair against each input ranking.
    fn kendall_to_inputs(consensus: &[usize], ranks: &[Vec<usize>]) -> usize {
        let m = consensus.len();
        let mut total = 0;
        for r in ranks {
            for a in 0..m {
                for b in 0..m {
                    if consensus[a] < consensus[b] && r[b] < r[a] {
                        total += 1;
                    }
                }
            }
        }
        total
    }

    #[test]
    fn unanimous_profiles_pass_through() {
        let r = vec![3, 1, 4, 2];
        let ranks = vec![r.clone(); 5];
        let c = aggregate_ranks(&ranks, &[1, 2, 3, 4]).unwrap();
        for (method, out) in &c.rankings {
            assert_eq!(out, &r, "{method:?}");
        }
        assert_eq!(c.winner, 1);
    }

    #[test]
    fn condorcet_winner_tops_schulze_and_kemeny() {
        // Alternative 2 beats each rival in a pairwise majority but is
        // first on only one ballot.
        let ranks = vec![vec![1, 3, 2, 4], vec![4, 1, 2, 3], vec![3, 4, 1, 2], vec![1, 4, 2, 3], vec![4, 1, 2, 3]];
        let d = pairwise_counts(&ranks);
        assert!((0..4).filter(|&b| b != 2).all(|b| d[2][b] > d[b][2]));
        assert_eq!(schulze(&ranks)[2], 1);
        assert_eq!(kemeny(&ranks).unwrap()[2], 1);
    }

    #[test]
    fn winner_tiebreaks_prefer_larger_support() {
        // Two alternatives swapped between ballots: tie on every count.
        let ranks = vec![vec![1, 2], vec![2, 1]];
        assert_eq!(aggregate_ranks(&ranks, &[2, 3]).unwrap().winner, 1);
        assert_eq!(aggregate_ranks(&ranks, &[3, 2]).unwrap().winner, 0);
    }

    #[test]
    fn kemeny_budget() {
        let ranks = vec![(1..=9).collect::<Vec<_>>()];
        assert!(matches!(kemeny(&ranks), Err(Error::Budget { .. })));
    }

    fn profile() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (2usize..=5).prop_flat_map(|m| proptest::collection::vec(Just((1..=m).collect::<Vec<usize>>()).prop_shuffle(), 1..7))
    }

    proptest! {
        #[test]
        fn kemeny_matches_exhaustive_search(ranks in profile()) {
            let m = ranks[0].len();
            let brute: Vec<(usize, Vec<usize>)> = all_orders(m)
                .into_iter()
                .map(|o| (kendall_to_inputs(&order_to_ranks(&o), &ranks), o))
                .collect();
            let best = brute.iter().map(|b| b.0).min().unwrap();
            let (cost, orders) = kemeny_orders(&ranks).unwrap();
            prop_assert_eq!(cost, best);
            prop_assert_eq!(orders.len(), brute.iter().filter(|b| b.0 == best).count());
            if orders.len() == 1 {
                prop_assert_eq!(kemeny(&ranks).unwrap(), order_to_ranks(&orders[0]));
            }
        }

        #[test]
        fn rankings_are_complete(ranks in profile()) {
            let m = ranks[0].len();
            let c = aggregate_ranks(&ranks, &vec![1; m]).unwrap();
            for (_, r) in &c.rankings {
                prop_assert!(r.iter().all(|&v| (1..=m).contains(&v)));
                prop_assert!(r.contains(&1));
            }
            prop_assert!(c.first_places[c.winner] >= 1);
        }
    }
}
