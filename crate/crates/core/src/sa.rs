//! Single-spin-flip Metropolis simulated annealing.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{QuboInstance, SpinConfiguration};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSchedule {
    #[default]
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    /// One sweep is `N` proposals, one per site in a fresh random order.
    pub sweeps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub schedule: BetaSchedule,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            sweeps: 1000,
            beta_start: 0.1,
            beta_end: 5.0,
            schedule: BetaSchedule::Geometric,
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Validation("at least one sweep is required".into()));
        }
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end.is_finite())
        {
            return Err(Error::Validation(format!(
                "need 0 < beta_start <= beta_end, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }

    /// Inverse temperature of 0-based sweep `k`.
    pub fn beta(&self, k: usize) -> f64 {
        if self.sweeps == 1 {
            return self.beta_end;
        }
        let t = k as f64 / (self.sweeps - 1) as f64;
        match self.schedule {
            BetaSchedule::Geometric => self.beta_start * (self.beta_end / self.beta_start).powf(t),
            BetaSchedule::Linear => self.beta_start + (self.beta_end - self.beta_start) * t,
        }
    }
}

/// Outcome with the tracked energy, kept separately so that incremental
/// bookkeeping can be checked against a fresh evaluation.
#[derive(Debug, Clone)]
pub struct SaOutcome {
    pub best: SpinConfiguration,
    pub final_spins: Vec<i8>,
    pub tracked_energy: f64,
    pub accepted: u64,
}

/// Best configuration seen during the anneal.
pub fn simulated_annealing(inst: &QuboInstance, config: &SaConfig) -> Result<SpinConfiguration> {
    Ok(anneal(inst, config, |_, _| {})?.best)
}

/// Full run; `on_accept(delta, energy)` sees every accepted move.
pub fn anneal(
    inst: &QuboInstance,
    config: &SaConfig,
    mut on_accept: impl FnMut(f64, f64),
) -> Result<SaOutcome> {
    config.validate()?;
    let n = inst.n();
    let mut r = rng::seeded(config.seed);
    let mut s: Vec<i8> = (0..n)
        .map(|_| if r.random::<bool>() { 1 } else { -1 })
        .collect();
    let mut fields = inst.local_fields(&s);
    let mut energy = inst.energy_unchecked(&s);
    let mut best_energy = energy;
    let mut best = s.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut accepted = 0;
    for sweep in 0..config.sweeps {
        let beta = config.beta(sweep);
        order.shuffle(&mut r);
        for &k in &order {
            let delta = inst.flip_delta(&s, fields[k], k);
            let u: f64 = r.random();
            if delta <= 0.0 || u < (-beta * delta).exp() {
                let old = f64::from(s[k]);
                s[k] = -s[k];
                for &(nb, w) in inst.neighbors(k) {
                    fields[nb] -= 2.0 * w * old;
                }
                energy += delta;
                accepted += 1;
                on_accept(delta, energy);
                if energy < best_energy {
                    best_energy = energy;
                    best.copy_from_slice(&s);
                }
            }
        }
    }
    Ok(SaOutcome {
        best: SpinConfiguration::evaluate(inst, best)?,
        final_spins: s,
        tracked_energy: energy,
        accepted,
    })
}
