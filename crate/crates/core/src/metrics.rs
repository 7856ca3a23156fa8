//! Protocol analysis: communication accuracy, codebook usage, topographic
//! similarity, and residual ambiguity of the emergent language.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::ObjectRecord;
use crate::numcore::{NumError, Result};

/// One evaluated episode: what the sender said about `target_id` and which
/// candidate the receiver picked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub target_id: usize,
    pub message: Vec<usize>,
    pub chosen_index: usize,
    pub target_index: usize,
}

/// Fraction of episodes where the receiver picked the target.
pub fn accuracy(transcripts: &[Transcript]) -> Result<f64> {
    if transcripts.is_empty() {
        return Err(NumError::Domain { op: "accuracy", what: "no transcripts".into() });
    }
    let hits = transcripts.iter().filter(|t| t.chosen_index == t.target_index).count();
    Ok(hits as f64 / transcripts.len() as f64)
}

/// Fraction of the K-symbol vocabulary appearing at least once.
pub fn active_words(transcripts: &[Transcript], k: usize) -> f64 {
    let mut seen: Vec<usize> = transcripts.iter().flat_map(|t| t.message.iter().copied()).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len() as f64 / k as f64
}

/// Number of distinct full messages.
pub fn unique_messages(transcripts: &[Transcript]) -> usize {
    let mut msgs: Vec<&[usize]> = transcripts.iter().map(|t| t.message.as_slice()).collect();
    msgs.sort_unstable();
    msgs.dedup();
    msgs.len()
}

fn hamming(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64
}

/// Average ranks (1-based) with ties sharing the mean of their rank span.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of two equal-length slices.
fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(NumError::Domain {
            op: "topsim",
            what: "zero variance in pairwise distances".into(),
        });
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman correlation with average-rank tie handling.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(NumError::Domain {
            op: "spearman",
            what: format!("need two equal-length series, got {} and {}", a.len(), b.len()),
        });
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

pub const TOPSIM_SAMPLE: usize = 500;

/// Topographic similarity: Spearman correlation between attribute Hamming
/// distance and message Hamming distance over all pairs of a seeded sample
/// of at most [`TOPSIM_SAMPLE`] evaluated concepts.
pub fn topsim<R: Rng>(transcripts: &[Transcript], rng: &mut R) -> Result<f64> {
    let mut idx: Vec<usize> = (0..transcripts.len()).collect();
    let sample: Vec<usize> = if idx.len() > TOPSIM_SAMPLE {
        idx.shuffle(rng);
        idx.truncate(TOPSIM_SAMPLE);
        idx
    } else {
        idx
    };
    let mut concept_d = Vec::new();
    let mut message_d = Vec::new();
    for (p, &i) in sample.iter().enumerate() {
        let oi = ObjectRecord::from_id(transcripts[i].target_id);
        for &j in &sample[p + 1..] {
            let oj = ObjectRecord::from_id(transcripts[j].target_id);
            concept_d.push(hamming(&oi.attributes, &oj.attributes));
            message_d.push(hamming(&transcripts[i].message, &transcripts[j].message));
        }
    }
    spearman(&concept_d, &message_d)
}

/// Plug-in estimate of the conditional entropy H(concept | message) in bits.
pub fn conditional_entropy(transcripts: &[Transcript]) -> Result<f64> {
    if transcripts.is_empty() {
        return Err(NumError::Domain {
            op: "conditional_entropy",
            what: "no transcripts".into(),
        });
    }
    let n = transcripts.len() as f64;
    // BTreeMap keeps the floating-point summation order deterministic
    let mut per_message: BTreeMap<&[usize], BTreeMap<usize, usize>> = BTreeMap::new();
    for t in transcripts {
        *per_message.entry(&t.message).or_default().entry(t.target_id).or_default() += 1;
    }
    let mut h = 0.0;
    for concepts in per_message.values() {
        let m_count: usize = concepts.values().sum();
        for &c in concepts.values() {
            let joint = c as f64 / n;
            let cond = c as f64 / m_count as f64;
            h -= joint * cond.log2();
        }
    }
    Ok(h.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn t(target_id: usize, message: &[usize], chosen: usize, target: usize) -> Transcript {
        Transcript {
            target_id,
            message: message.to_vec(),
            chosen_index: chosen,
            target_index: target,
        }
    }

    #[test]
    fn accuracy_counts_exact_matches() {
        let ts = vec![t(0, &[1], 0, 0), t(1, &[2], 1, 0), t(2, &[3], 2, 2), t(3, &[4], 3, 3)];
        assert_eq!(accuracy(&ts).unwrap(), 0.75);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn active_words_and_unique_messages() {
        let ts = vec![
            t(0, &[1, 2], 0, 0),
            t(1, &[2, 1], 0, 0),
            t(2, &[1, 2], 0, 0),
            t(3, &[3, 3], 0, 0),
        ];
        assert_eq!(active_words(&ts, 10), 0.3);
        // brute-force set-count oracle on a random transcript
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rand_ts: Vec<Transcript> = (0..100)
            .map(|i| t(i, &[rng.gen_range(0..10), rng.gen_range(0..10)], 0, 0))
            .collect();
        let mut set = std::collections::HashSet::new();
        for tr in &rand_ts {
            set.extend(tr.message.iter().copied());
        }
        assert_eq!(active_words(&rand_ts, 10), set.len() as f64 / 10.0);
        assert_eq!(unique_messages(&ts), 3);
    }

    #[test]
    fn average_ranks_handle_ties() {
        // values 3, 1, 1, 2 -> ranks 4, 1.5, 1.5, 3
        assert_eq!(average_ranks(&[3.0, 1.0, 1.0, 2.0]), vec![4.0, 1.5, 1.5, 3.0]);
    }

    #[test]
    fn spearman_matches_brute_force_rank_oracle() {
        // Independent oracle: rank(x_i) = 1 + count(x_j < x_i) + (count(x_j == x_i) - 1)/2
        fn naive_ranks(v: &[f64]) -> Vec<f64> {
            v.iter()
                .map(|&x| {
                    let below = v.iter().filter(|&&y| y < x).count() as f64;
                    let equal = v.iter().filter(|&&y| y == x).count() as f64;
                    1.0 + below + (equal - 1.0) / 2.0
                })
                .collect()
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: Vec<f64> = (0..60).map(|_| rng.gen_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..60).map(|_| rng.gen_range(0..6) as f64).collect();
            let expected = pearson(&naive_ranks(&a), &naive_ranks(&b)).unwrap();
            let got = spearman(&a, &b).unwrap();
            assert!((got - expected).abs() < 1e-12, "got {got}, expected {expected}");
        }
    }

    #[test]
    fn spearman_is_one_for_monotone_series() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![10.0, 20.0, 25.0, 90.0, 91.0];
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c: Vec<f64> = b.iter().map(|x| -x).collect();
        assert!((spearman(&a, &c).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn topsim_is_one_when_messages_mirror_attributes() {
        // message = attribute tuple itself: distances identical up to scale
        let ts: Vec<Transcript> = (0..200)
            .map(|i| {
                let obj = ObjectRecord::from_id(i * 37 % 10_000);
                t(obj.id, &obj.attributes, 0, 0)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((topsim(&ts, &mut rng).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn topsim_near_zero_for_random_messages() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ts: Vec<Transcript> = (0..600)
            .map(|i| {
                let msg: Vec<usize> = (0..4).map(|_| rng.gen_range(0..10)).collect();
                t(i * 16 % 10_000, &msg, 0, 0)
            })
            .collect();
        let r = topsim(&ts, &mut rng).unwrap();
        assert!(r.abs() < 0.05, "random protocol topsim {r}");
    }

    #[test]
    fn topsim_sample_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ts: Vec<Transcript> = (0..700)
            .map(|i| {
                let msg: Vec<usize> = (0..4).map(|_| rng.gen_range(0..10)).collect();
                t(i * 13 % 10_000, &msg, 0, 0)
            })
            .collect();
        let a = topsim(&ts, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = topsim(&ts, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn conditional_entropy_matches_hand_computed_cases() {
        // bijective protocol: no ambiguity
        let ts: Vec<Transcript> = (0..8).map(|i| t(i, &[i], 0, 0)).collect();
        assert!(conditional_entropy(&ts).unwrap().abs() < 1e-12);

        // one message for two equally likely concepts: exactly 1 bit
        let ts = vec![t(0, &[5], 0, 0), t(1, &[5], 0, 0)];
        assert!((conditional_entropy(&ts).unwrap() - 1.0).abs() < 1e-12);

        // plug-in oracle on a random sample
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ts: Vec<Transcript> = (0..500)
            .map(|_| t(rng.gen_range(0..20), &[rng.gen_range(0..4)], 0, 0))
            .collect();
        let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
        let mut marginal: HashMap<usize, f64> = HashMap::new();
        for tr in &ts {
            *joint.entry((tr.message[0], tr.target_id)).or_default() += 1.0 / 500.0;
            *marginal.entry(tr.message[0]).or_default() += 1.0 / 500.0;
        }
        let expected: f64 =
            -joint.iter().map(|(&(m, _), &p)| p * (p / marginal[&m]).log2()).sum::<f64>();
        let got = conditional_entropy(&ts).unwrap();
        assert!((got - expected).abs() < 1e-10, "got {got}, expected {expected}");
    }
}
