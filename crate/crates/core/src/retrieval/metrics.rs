//! Ranking quality: average precision at K and its mean over all queries.
//!
//! AP@K = (1/min(R,K)) · Σ_{i=1..K} (R_i / i) · I_i, where I_i flags a
//! relevant item at rank i, R_i counts relevant items in the top i, and R
//! is the query's total relevant count in the database. mAP@K averages
//! AP@K over every query, self-excluded; queries with no relevant item at
//! all are skipped and reported.

use crate::error::{Error, Result};

use super::db::RetrievalDB;

/// The usual report points for mAP tables.
pub const DEFAULT_K_TABLE: [usize; 7] = [5, 10, 20, 40, 60, 80, 100];

/// Average precision over the top K of one ranked relevance list.
pub fn ap_at_k(relevance: &[bool], r: usize, k: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::invalid("ap_at_k", "query has no relevant items"));
    }
    if k == 0 {
        return Err(Error::invalid("ap_at_k", "K must be positive"));
    }
    if relevance.len() < k {
        return Err(Error::invalid(
            "ap_at_k",
            format!("relevance list of {} is shorter than K = {k}", relevance.len()),
        ));
    }
    let mut hits = 0u64;
    let mut acc = 0.0;
    for (i, &rel) in relevance.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(acc / r.min(k) as f64)
}

/// mAP@K over a labeled database.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// Queries that contributed to the mean.
    pub evaluated: usize,
    /// Queries skipped because nothing else shares their label.
    pub skipped: usize,
    /// The K actually used (requested K clamped to database size − 1).
    pub k: usize,
}

/// Mean AP@K over every query in the database, self-excluded, relevance
/// defined as label equality. Per-query work may fan out over `threads`;
/// the mean is reduced in index order, so results are thread-count
/// invariant.
pub fn map_at_k(db: &RetrievalDB, k: usize, threads: usize) -> Result<MapReport> {
    let labels = db.labels().ok_or_else(|| Error::invalid("map_at_k", "database has no labels"))?;
    let n = db.len();
    if n < 2 {
        return Err(Error::invalid("map_at_k", "need at least two codes"));
    }
    if k == 0 {
        return Err(Error::invalid("map_at_k", "K must be positive"));
    }
    let k_eff = k.min(n - 1);

    let query_ap = |q: usize| -> Result<Option<f64>> {
        let r = (0..n).filter(|&i| i != q && labels[i] == labels[q]).count();
        if r == 0 {
            return Ok(None);
        }
        let ranked = db.rank(db.code(q), Some(q))?;
        let relevance: Vec<bool> = ranked.iter().map(|&i| labels[i] == labels[q]).collect();
        ap_at_k(&relevance, r, k_eff).map(Some)
    };

    let per_query: Vec<Option<f64>> = if threads <= 1 || n < 2 * threads {
        (0..n).map(query_ap).collect::<Result<_>>()?
    } else {
        let chunk = n.div_ceil(threads);
        let mut parts: Vec<Result<Vec<Option<f64>>>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| {
                    let end = (start + chunk).min(n);
                    let query_ap = &query_ap;
                    scope.spawn(move || (start..end).map(query_ap).collect())
                })
                .collect();
            for h in handles {
                parts.push(h.join().expect("eval worker panicked"));
            }
        });
        let mut all = Vec::with_capacity(n);
        for part in parts {
            all.extend(part?);
        }
        all
    };

    let mut acc = 0.0;
    let mut evaluated = 0usize;
    for ap in per_query.iter().flatten() {
        acc += ap;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::invalid("map_at_k", "every query was skipped (all labels unique)"));
    }
    Ok(MapReport { map: acc / evaluated as f64, evaluated, skipped: n - evaluated, k: k_eff })
}

/// One mAP report per requested K.
pub fn map_table(db: &RetrievalDB, ks: &[usize], threads: usize) -> Result<Vec<MapReport>> {
    ks.iter().map(|&k| map_at_k(db, k, threads)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::code::BinaryCode;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn hand_worked_ap_values() {
        // (1/3)(1/1 + 2/2 + 3/4) = 11/12.
        let ap = ap_at_k(&[true, true, false, true, false], 3, 5).unwrap();
        assert!((ap - 11.0 / 12.0).abs() < 1e-9);

        // (1/3)(1/2 + 2/3) = 7/18.
        let ap = ap_at_k(&[false, true, true], 5, 3).unwrap();
        assert!((ap - 7.0 / 18.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_prefix_scores_one() {
        let ap = ap_at_k(&[true, true, true, false], 5, 3).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ap_rejects_degenerate_inputs() {
        assert!(ap_at_k(&[true, false], 0, 2).is_err(), "R = 0");
        assert!(ap_at_k(&[true], 1, 0).is_err(), "K = 0");
        assert!(ap_at_k(&[true], 1, 2).is_err(), "list shorter than K");
    }

    proptest! {
        #[test]
        fn ap_is_bounded_and_rewards_flipping_a_miss(seed in 0u64..2000) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..12);
            let len = k + rng.gen_range(0..4);
            let relevance: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.4)).collect();
            let ones = relevance.iter().filter(|&&b| b).count();
            let r = ones + rng.gen_range(1..4);

            let ap = ap_at_k(&relevance, r, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));

            // Flip one 0 inside the top K to 1, everything else fixed.
            if let Some(pos) = relevance.iter().take(k).position(|&b| !b) {
                let mut better = relevance.clone();
                better[pos] = true;
                let ap2 = ap_at_k(&better, r, k).unwrap();
                prop_assert!(ap2 >= ap, "flipping a miss at rank {} lowered AP", pos + 1);
            }
        }
    }

    fn db_from_bits(rows: &[&[bool]], labels: &[u32]) -> RetrievalDB {
        let codes = rows.iter().map(|r| BinaryCode::from_bits(r).unwrap()).collect();
        RetrievalDB::new(codes, Some(labels.to_vec())).unwrap()
    }

    #[test]
    fn perfectly_separated_pairs_score_one() {
        // Two videos per label, identical within, complementary across.
        let a = [true, false, true, false];
        let b: Vec<bool> = a.iter().map(|&x| !x).collect();
        let db = db_from_bits(&[&a, &a, &b, &b], &[0, 0, 1, 1]);
        let report = map_at_k(&db, 1, 1).unwrap();
        assert_eq!(report.map, 1.0);
        assert_eq!(report.evaluated, 4);
        assert_eq!(report.skipped, 0);
    }

    #[test]
    fn singleton_labels_are_skipped_and_counted() {
        let a = [true, true, false];
        let b = [false, true, true];
        let db = db_from_bits(&[&a, &a, &b], &[7, 7, 9]);
        let report = map_at_k(&db, 2, 1).unwrap();
        assert_eq!(report.evaluated, 2);
        assert_eq!(report.skipped, 1);

        let all_unique = db_from_bits(&[&a, &b], &[1, 2]);
        assert!(map_at_k(&all_unique, 1, 1).is_err(), "nothing to evaluate");
    }

    #[test]
    fn k_larger_than_database_is_clamped() {
        let a = [true, false];
        let db = db_from_bits(&[&a, &a, &a], &[0, 0, 0]);
        let report = map_at_k(&db, 100, 1).unwrap();
        assert_eq!(report.k, 2);
        assert_eq!(report.map, 1.0);
    }

    #[test]
    fn composition_matches_manual_ap_of_the_ranked_list() {
        // Five codes at hand-picked distances from query 0; labels make
        // ranks 1 and 3 (post-exclusion) relevant.
        let q = [false, false, false, false];
        let d1 = [true, false, false, false];
        let d2 = [true, true, false, false];
        let d3 = [true, true, true, false];
        let d4 = [true, true, true, true];
        let db = db_from_bits(&[&q, &d1, &d2, &d3, &d4], &[5, 5, 1, 5, 1]);
        // Ranked (excluding self): [1, 2, 3, 4] → relevance [1, 0, 1, 0], R=2.
        let expect = ap_at_k(&[true, false, true, false], 2, 4).unwrap();
        let report = map_at_k(&db, 4, 1).unwrap();
        // Query 0's AP is exactly `expect`; verify it via the mean.
        let others: f64 = [1, 2, 3, 4]
            .iter()
            .map(|&i| {
                let ranked = db.rank(db.code(i), Some(i)).unwrap();
                let labels = db.labels().unwrap();
                let rel: Vec<bool> = ranked.iter().map(|&j| labels[j] == labels[i]).collect();
                let r = rel.iter().filter(|&&b| b).count();
                ap_at_k(&rel, r, 4).unwrap()
            })
            .sum();
        assert!((report.map - (expect + others) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn eval_is_thread_count_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let codes: Vec<BinaryCode> = (0..60)
            .map(|_| {
                let bits: Vec<bool> = (0..32).map(|_| rng.gen_bool(0.5)).collect();
                BinaryCode::from_bits(&bits).unwrap()
            })
            .collect();
        let labels: Vec<u32> = (0..60).map(|i| i % 4).collect();
        let db = RetrievalDB::new(codes, Some(labels)).unwrap();
        let base = map_at_k(&db, 10, 1).unwrap();
        for threads in [2, 3, 7] {
            assert_eq!(map_at_k(&db, 10, threads).unwrap(), base);
        }
    }

    /// Random codes against random balanced labels: the measured mAP@20
    /// must match the analytic expectation of AP@K under a uniformly
    /// random permutation of the database.
    ///
    /// With R relevant among N ranked items, E[I_i] = R/N and
    /// E[I_i·I_j] = R(R−1)/(N(N−1)) for i≠j, so
    /// E[AP@K] = (1/K)·(p₁·H_K + p₂·(K − H_K)) with p₁ = R/N,
    /// p₂ = R(R−1)/(N(N−1)), H_K the K-th harmonic number — about 0.068
    /// for N=499, R=99, K=20. Note this is far below the class prior 0.2:
    /// that figure describes precision@K, not the min(R,K)-normalized AP.
    #[test]
    fn random_ranking_map_matches_analytic_expectation() {
        let n = 500usize;
        let classes = 5u32;
        let k = 20usize;

        let big_n = (n - 1) as f64; // ranked items per query
        let r = (n / classes as usize - 1) as f64; // same-label others
        let p1 = r / big_n;
        let p2 = r * (r - 1.0) / (big_n * (big_n - 1.0));
        let h_k: f64 = (1..=k).map(|i| 1.0 / i as f64).sum();
        let expect = (p1 * h_k + p2 * (k as f64 - h_k)) / k as f64;

        let mut means = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(1000 + seed);
            let codes: Vec<BinaryCode> = (0..n)
                .map(|_| {
                    let bits: Vec<bool> = (0..64).map(|_| rng.gen_bool(0.5)).collect();
                    BinaryCode::from_bits(&bits).unwrap()
                })
                .collect();
            let mut labels: Vec<u32> = (0..n).map(|i| i as u32 % classes).collect();
            labels.shuffle(&mut rng);
            let db = RetrievalDB::new(codes, Some(labels)).unwrap();
            means.push(map_at_k(&db, k, 1).unwrap().map);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        assert!((mean - expect).abs() < 0.01, "measured {mean:.4} vs analytic {expect:.4}");
    }
}
