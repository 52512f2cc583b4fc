//! Datasets for the experiments.

use std::fs::File;

use expost_core::noise::StreamRng;
use expost_core::Histogram;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;

use crate::config::DatasetSource;
use crate::error::{BenchError, Result};

/// `n` independent draws with `Pr[x] ∝ x^exponent` on `1..=support`,
/// aggregated to a histogram keyed `"1"..`.
pub fn gen_power_law(n: u64, support: usize, exponent: f64, seed: u64) -> Histogram {
    let weights = (1..=support).map(|x| (x as f64).powf(exponent));
    let dist = WeightedIndex::new(weights).expect("positive weights");
    let mut rng = StreamRng::seeded(seed);
    let mut counts = vec![0u64; support];
    for _ in 0..n {
        counts[dist.sample(&mut rng)] += 1;
    }
    Histogram::from_counts(&counts)
}

/// Loads the dataset for one trial; synthetic sources without a fixed seed
/// use `trial_seed`.
pub fn load_dataset(source: &DatasetSource, trial_seed: u64) -> Result<Histogram> {
    match source {
        DatasetSource::Synthetic {
            n,
            support,
            exponent,
            seed,
        } => Ok(gen_power_law(
            *n,
            *support,
            *exponent,
            seed.unwrap_or(trial_seed),
        )),
        DatasetSource::CountsCsv { path } => Ok(Histogram::read_counts_csv(open(path)?)?),
        DatasetSource::ContributionsCsv { path } => {
            Ok(Histogram::read_contributions_csv(open(path)?)?)
        }
    }
}

fn open(path: &std::path::Path) -> Result<File> {
    File::open(path)
        .map_err(|e| BenchError::Config(format!("cannot open dataset {}: {e}", path.display())))
}
