//! The encoder-decoder generator and the spectrally normalized pair
//! discriminator.

mod discriminator;
mod generator;
mod spectral;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig, GeneratorOutput};
pub use spectral::{largest_singular_value, matrix_dims, spectral_normalize, SpectralNormState};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{ParamStore, TensorRecord};
use crate::error::{Error, Result};

/// Normal samples with standard deviation `std`, redrawn outside two deviations.
pub(crate) fn truncated_normal<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let x: f64 = rng.sample(StandardNormal);
            if x.abs() <= 2.0 {
                break x * std;
            }
        })
        .collect()
}

pub(crate) fn check_ladder(name: &str, ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() || ladder.contains(&0) {
        return Err(Error::Config(format!("{name} must be a nonempty list of positive channel counts, got {ladder:?}")));
    }
    Ok(())
}

/// All parameters of `store` as checkpoint records, in insertion order.
pub fn store_records(store: &ParamStore) -> Vec<TensorRecord> {
    store
        .iter()
        .map(|p| TensorRecord {
            name: p.name.clone(),
            shape: p.shape.clone(),
            values: p.value.clone(),
        })
        .collect()
}

/// Overwrites values in `store` from `records` whose names start with
/// `prefix`. Every store parameter must be present with a matching shape.
pub fn load_store(store: &mut ParamStore, records: &[TensorRecord], prefix: &str) -> Result<()> {
    let mut seen = 0;
    for r in records.iter().filter(|r| r.name.starts_with(prefix)) {
        let id = store
            .id_of(&r.name)
            .ok_or_else(|| Error::Usage(format!("checkpoint tensor {} has no matching parameter", r.name)))?;
        let p = store.get_mut(id);
        if p.shape != r.shape {
            return Err(Error::shape("load_checkpoint", format!("{} {:?}", r.name, p.shape), format!("{:?}", r.shape)));
        }
        p.value.clone_from(&r.values);
        seen += 1;
    }
    if seen != store.len() {
        let missing: Vec<_> = store
            .iter()
            .filter(|p| !records.iter().any(|r| r.name == p.name))
            .map(|p| p.name.clone())
            .collect();
        return Err(Error::Usage(format!("checkpoint is missing parameters: {}", missing.join(", "))));
    }
    Ok(())
}
