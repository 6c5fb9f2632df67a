use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DatasetError};
use crate::model::Domain;

/// Splits into (dev, test), stratified by (domain, answer count).
///
/// Each stratum contributes `round(dev_frac * n)` questions to dev. Both
/// halves keep the input order. Strata are shuffled in sorted order from a
/// single seeded stream, so the split depends only on the dataset and seed.
pub fn split_dev_test(
    ds: &Dataset,
    dev_frac: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(dev_frac > 0.0 && dev_frac < 1.0) {
        return Err(DatasetError::InvalidFraction(dev_frac));
    }
    let mut strata: BTreeMap<(Domain, u32), Vec<usize>> = BTreeMap::new();
    for (i, q) in ds.questions().iter().enumerate() {
        strata
            .entry((q.domain(), q.answer_count()))
            .or_default()
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_dev = vec![false; ds.len()];
    for ((domain, answer_count), mut idx) in strata {
        let take = (dev_frac * idx.len() as f64).round() as usize;
        if take == 0 {
            return Err(DatasetError::EmptyCell {
                domain,
                answer_count,
            });
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..take] {
            in_dev[i] = true;
        }
    }
    let (mut dev, mut test) = (Vec::new(), Vec::new());
    for (q, &d) in ds.questions().iter().zip(&in_dev) {
        if d {
            dev.push(q.clone());
        } else {
            test.push(q.clone());
        }
    }
    let mut dev_meta = ds.meta.clone();
    dev_meta.name = format!("{}-dev", ds.meta.name);
    let mut test_meta = ds.meta.clone();
    test_meta.name = format!("{}-test", ds.meta.name);
    Ok((Dataset::new(dev_meta, dev)?, Dataset::new(test_meta, test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_math_dataset, DatasetMeta};
    use crate::model::Question;
    use std::collections::HashSet;

    #[test]
    fn split_sizes_and_strata() {
        let ds = generate_math_dataset(500, 11).unwrap();
        assert_eq!(ds.len(), 2000);
        let (dev, test) = split_dev_test(&ds, 0.2, 5).unwrap();
        assert_eq!(dev.len(), 400);
        assert_eq!(test.len(), 1600);
        for n in dev.cell_counts().values() {
            assert_eq!(*n, 100);
        }
        let d: HashSet<&str> = dev.questions().iter().map(|q| q.id()).collect();
        assert!(test.questions().iter().all(|q| !d.contains(q.id())));
        let again = split_dev_test(&ds, 0.2, 5).unwrap();
        assert_eq!(again.0, dev);
        let other = split_dev_test(&ds, 0.2, 6).unwrap();
        assert_ne!(other.0, dev);
    }

    #[test]
    fn tiny_stratum_is_rejected() {
        let q = Question::new("only", Domain::River, "?", vec!["Nile".into()]).unwrap();
        let ds = Dataset::new(DatasetMeta::default(), vec![q]).unwrap();
        assert!(matches!(
            split_dev_test(&ds, 0.2, 0),
            Err(DatasetError::EmptyCell {
                answer_count: 1,
                ..
            })
        ));
        assert!(matches!(
            split_dev_test(&ds, 1.0, 0),
            Err(DatasetError::InvalidFraction(_))
        ));
    }
}
