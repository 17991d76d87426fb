use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{grid_adjacency, ModalitySpec, Series};
use crate::error::{Error, Result};

/// 30-minute intervals.
pub const STEPS_PER_DAY: usize = 48;

/// AR(1) coefficient of the shared latent demand process.
const LATENT_PERSISTENCE: f64 = 0.95;

/// Generator settings for one synthetic modality laid out on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModality {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "one")]
    pub features: usize,
    /// Overall flow magnitude of the modality.
    pub scale: f64,
    #[serde(default = "one_f")]
    pub base: f64,
    /// Amplitude of the daily cycle.
    #[serde(default)]
    pub daily_amp: f64,
    /// Amplitude of the half-day cycle, phase-shifted per node.
    #[serde(default)]
    pub half_day_amp: f64,
    /// Weight of the shared latent process.
    #[serde(default)]
    pub coupling: f64,
    /// Standard deviation of i.i.d. Gaussian noise.
    #[serde(default)]
    pub noise: f64,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

impl SynthModality {
    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Generates `days · 48` steps for every modality.
///
/// Node `n` of modality `m` at step `t` (per feature) is
/// `scale·(base + a₁·sin(2πt/48) + a₂·sin(4πt/48 + φₙ) + coupling·λ(t) + ε)`
/// clipped at 0, where `φₙ` is a per-node phase, `λ` is a unit-variance AR(1)
/// process shared by every modality and `ε` is Gaussian noise. The output is
/// fully determined by `seed`.
pub fn synth_generate(specs: &[SynthModality], days: usize, seed: u64) -> Result<Vec<(ModalitySpec, Series)>> {
    if days == 0 {
        return Err(Error::Config("days must be at least 1".into()));
    }
    if specs.is_empty() {
        return Err(Error::Config("no modalities to generate".into()));
    }
    let steps = days * STEPS_PER_DAY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let phases: Vec<Vec<f64>> = specs
        .iter()
        .map(|s| (0..s.node_count()).map(|_| rng.random_range(0.0..2.0 * PI)).collect())
        .collect();

    let innovation = (1.0 - LATENT_PERSISTENCE * LATENT_PERSISTENCE).sqrt();
    let mut latent = Vec::with_capacity(steps);
    let mut lambda: f64 = rng.sample(StandardNormal);
    for _ in 0..steps {
        latent.push(lambda);
        let e: f64 = rng.sample(StandardNormal);
        lambda = LATENT_PERSISTENCE * lambda + innovation * e;
    }

    let mut out = Vec::with_capacity(specs.len());
    for (spec, phase) in specs.iter().zip(&phases) {
        if spec.rows == 0 || spec.cols == 0 || spec.features == 0 {
            return Err(Error::Config(format!("modality `{}` has an empty grid", spec.name)));
        }
        let nodes = spec.node_count();
        let mut data = Vec::with_capacity(steps * nodes * spec.features);
        for (t, &lam) in latent.iter().enumerate() {
            // reduce mod 48 so zero-noise output is exactly periodic
            let tau = (t % STEPS_PER_DAY) as f64;
            let daily = (2.0 * PI * tau / STEPS_PER_DAY as f64).sin();
            for &ph in phase {
                let half = (4.0 * PI * tau / STEPS_PER_DAY as f64 + ph).sin();
                for _ in 0..spec.features {
                    let eps: f64 = if spec.noise > 0.0 {
                        spec.noise * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    let v = spec.scale
                        * (spec.base + spec.daily_amp * daily + spec.half_day_amp * half + spec.coupling * lam + eps);
                    data.push(v.max(0.0) as f32);
                }
            }
        }
        let series = Series::new(steps, nodes, spec.features, data)?;
        let modality = ModalitySpec::new(spec.name.clone(), spec.features, grid_adjacency(spec.rows, spec.cols))?;
        out.push((modality, series));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modality(name: &str, scale: f64, coupling: f64, noise: f64) -> SynthModality {
        SynthModality {
            name: name.into(),
            rows: 2,
            cols: 3,
            features: 1,
            scale,
            base: 1.0,
            daily_amp: 0.5,
            half_day_amp: 0.2,
            coupling,
            noise,
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn node_means(s: &Series) -> Vec<f64> {
        (0..s.steps())
            .map(|t| (0..s.nodes()).map(|n| f64::from(s.get(t, n, 0))).sum::<f64>() / s.nodes() as f64)
            .collect()
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let specs = [modality("a", 100.0, 0.3, 0.1), modality("b", 10.0, 0.3, 0.1)];
        let x = synth_generate(&specs, 2, 7).unwrap();
        let y = synth_generate(&specs, 2, 7).unwrap();
        assert_eq!(x, y);
        let z = synth_generate(&specs, 2, 8).unwrap();
        assert_ne!(x[0].1, z[0].1);
    }

    #[test]
    fn coupled_modalities_are_correlated() {
        let specs = [modality("a", 400.0, 0.4, 0.1), modality("b", 12.0, 0.4, 0.1)];
        let out = synth_generate(&specs, 7, 3).unwrap();
        let r = pearson(&node_means(&out[0].1), &node_means(&out[1].1));
        assert!(r >= 0.5, "pearson {r}");
    }

    #[test]
    fn flat_configuration_is_constant() {
        let mut m = modality("a", 40.0, 0.0, 0.0);
        m.daily_amp = 0.0;
        m.half_day_amp = 0.0;
        m.base = 2.5;
        let out = synth_generate(&[m], 1, 1).unwrap();
        assert!(out[0].1.data().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn noiseless_output_has_period_48() {
        let out = synth_generate(&[modality("a", 30.0, 0.0, 0.0)], 3, 5).unwrap();
        let s = &out[0].1;
        for t in 0..s.steps() - STEPS_PER_DAY {
            for n in 0..s.nodes() {
                assert_eq!(s.get(t, n, 0), s.get(t + STEPS_PER_DAY, n, 0));
            }
        }
    }

    #[test]
    fn values_are_nonnegative_and_graph_matches_grid() {
        let out = synth_generate(&[modality("a", 5.0, 1.0, 2.0)], 2, 9).unwrap();
        assert!(out[0].1.data().iter().all(|&v| v >= 0.0));
        assert_eq!(out[0].0.node_count(), 6);
        assert_eq!(out[0].0.adjacency, grid_adjacency(2, 3));
        assert!(synth_generate(&[modality("a", 1.0, 0.0, 0.0)], 0, 1).is_err());
    }
}
