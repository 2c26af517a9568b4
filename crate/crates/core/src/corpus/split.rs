use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{group_by_sentence, RawInstance};
use crate::error::{Error, Result};

/// Draws `n_dev` instances uniformly at random (seeded) as a development set.
/// Both halves keep the input order.
pub fn split_dev_sc(
    train: &[RawInstance],
    n_dev: usize,
    seed: u64,
) -> Result<(Vec<RawInstance>, Vec<RawInstance>)> {
    if n_dev == 0 {
        return Ok((train.to_vec(), Vec::new()));
    }
    if train.len() <= n_dev {
        return Err(Error::Argument(format!(
            "cannot draw {n_dev} dev instances from a {}-instance training set",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_dev = vec![false; train.len()];
    for i in sample(&mut rng, train.len(), n_dev) {
        in_dev[i] = true;
    }
    let (dev, rest): (Vec<_>, Vec<_>) = train
        .iter()
        .zip(&in_dev)
        .partition(|(_, &d)| d);
    Ok((
        rest.into_iter().map(|(i, _)| i.clone()).collect(),
        dev.into_iter().map(|(i, _)| i.clone()).collect(),
    ))
}

/// Moves `round(fraction * n_sentences)` whole sentences to a development
/// set, so every aspect of a sentence lands on the same side.
pub fn split_dev_oe(
    train: &[RawInstance],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<RawInstance>, Vec<RawInstance>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Argument(format!(
            "dev fraction {fraction} outside [0, 1)"
        )));
    }
    let groups = group_by_sentence(train);
    let n_dev = (fraction * groups.len() as f64).round() as usize;
    let mut in_dev = vec![false; groups.len()];
    if n_dev > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in sample(&mut rng, groups.len(), n_dev) {
            in_dev[i] = true;
        }
    }
    let mut rest = Vec::new();
    let mut dev = Vec::new();
    for (group, d) in groups.into_iter().zip(in_dev) {
        let target = if d { &mut dev } else { &mut rest };
        target.extend(group.into_iter().cloned());
    }
    Ok((rest, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{compute_stats, Domain, Span};
    use std::collections::HashSet;

    fn corpus(n_sentences: usize, aspects_per: usize) -> Vec<RawInstance> {
        let mut out = Vec::new();
        for s in 0..n_sentences {
            for k in 0..aspects_per {
                let words = vec!["w".to_string(); aspects_per];
                out.push(
                    RawInstance::new(format!("s{s}#{k}"), words, Span::new(k, k), Domain::Laptop)
                        .unwrap(),
                );
            }
        }
        out
    }

    #[test]
    fn sc_split_partitions() {
        let train = corpus(400, 1);
        let (rest, dev) = split_dev_sc(&train, 150, 7).unwrap();
        assert_eq!(dev.len(), 150);
        assert_eq!(rest.len(), 250);
        let ids: HashSet<_> = rest.iter().chain(&dev).map(|i| i.id.clone()).collect();
        assert_eq!(ids.len(), 400);
        let (rest2, dev2) = split_dev_sc(&train, 150, 7).unwrap();
        assert_eq!((&rest, &dev), (&rest2, &dev2));
        let (_, dev3) = split_dev_sc(&train, 150, 8).unwrap();
        assert_ne!(dev2, dev3);
    }

    #[test]
    fn sc_split_edges() {
        let train = corpus(10, 1);
        let (rest, dev) = split_dev_sc(&train, 0, 1).unwrap();
        assert_eq!(rest, train);
        assert!(dev.is_empty());
        assert!(split_dev_sc(&train, 10, 1).is_err());
    }

    #[test]
    fn oe_split_by_sentence() {
        let train = corpus(1158, 2);
        let (rest, dev) = split_dev_oe(&train, 0.2, 3).unwrap();
        assert_eq!(compute_stats(&dev).n_sentences, 232);
        assert_eq!(compute_stats(&rest).n_sentences, 1158 - 232);
        let dev_keys: HashSet<_> = dev.iter().map(|i| i.sentence_key()).collect();
        assert!(rest.iter().all(|i| !dev_keys.contains(i.sentence_key())));
        assert_eq!(rest.len() + dev.len(), train.len());
        assert_eq!(split_dev_oe(&train, 0.2, 3).unwrap().1, dev);
    }

    #[test]
    fn oe_split_edges() {
        let train = corpus(5, 1);
        assert!(split_dev_oe(&train, 0.0, 1).unwrap().1.is_empty());
        assert!(split_dev_oe(&train, 1.0, 1).is_err());
        assert!(split_dev_oe(&train, -0.1, 1).is_err());
    }
}
