use super::spec::Method;

/// Outcome of one method on one instance.
///
/// Energies and the relative error are a pure function of the experiment
/// spec; the wall times are not and are kept out of the deterministic
/// record table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    /// `<dims>-<instance seed>`, e.g. `2x3x4-17`.
    pub instance: String,
    pub n: usize,
    pub instance_seed: u64,
    pub method: Method,
    pub iterations: usize,
    pub run_seed: u64,
    pub config_digest: String,
    pub energy: f64,
    pub e0: Option<f64>,
    /// `(E - E0) / |E0|`.
    pub epsilon: Option<f64>,
    pub setup_seconds: Option<f64>,
    pub loop_seconds: Option<f64>,
    pub per_iteration_seconds: Option<f64>,
}

/// Identity of a record within a batch.
pub type RecordKey = (String, Method, usize);

impl BenchRecord {
    pub fn key(&self) -> RecordKey {
        (self.instance.clone(), self.method, self.iterations)
    }

    /// Sort key: size, instance seed, method, iterations.
    pub(crate) fn order(&self) -> (usize, &str, u64, Method, usize) {
        (
            self.n,
            self.instance.as_str(),
            self.instance_seed,
            self.method,
            self.iterations,
        )
    }
}

/// `(E - E0) / |E0|`, undefined when `E0 = 0`.
pub fn relative_error(energy: f64, e0: f64) -> Option<f64> {
    (e0 != 0.0).then(|| (energy - e0) / e0.abs())
}
