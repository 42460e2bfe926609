//! Variational annealing: one ADAM update of the coherent-state parameters
//! per point of the schedule grid, followed by sign readout.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcs::{z_expectations, Ansatz, Engine, GcsParams, Gradient};
use crate::qubo::{unfold_spins, QuboInstance, SpinConfiguration};
use crate::rng;

/// Which variational family is annealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Entangled coherent states.
    #[default]
    Gcs,
    /// Separable states: `M` and `y` stay zero.
    Product,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Gcs => "gcs",
            Mode::Product => "product",
        }
    }
}

/// Schedule fractions `s_j`, one per iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// `s_j = (j - 1) / (n_t - 1)`.
    #[default]
    Linear,
    /// Explicit grid; must start at 0, end at 1 and never decrease.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub n_t: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Half-width of the uniform draw for the initial `x`.
    pub init_scale: f64,
    pub mode: Mode,
    pub schedule: Schedule,
    pub seed: u64,
    /// Restrict `M` to the coupling graph.
    pub sparse_m: bool,
    /// Divide couplings by their mean absolute value before annealing.
    pub rescale: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            n_t: 1000,
            learning_rate: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: 0.01,
            mode: Mode::Gcs,
            schedule: Schedule::Linear,
            seed: 0,
            sparse_m: false,
            rescale: false,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.n_t < 2 {
            return bad(format!("n_t must be at least 2, got {}", self.n_t));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("ADAM {name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!(
                "ADAM epsilon must be positive, got {}",
                self.adam_eps
            ));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!(
                "init scale must be nonnegative, got {}",
                self.init_scale
            ));
        }
        if let Schedule::Custom(grid) = &self.schedule {
            if grid.len() != self.n_t {
                return bad(format!(
                    "schedule has {} points, n_t is {}",
                    grid.len(),
                    self.n_t
                ));
            }
            if grid[0] != 0.0 || grid[grid.len() - 1] != 1.0 {
                return bad("schedule must start at 0 and end at 1".into());
            }
            if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
                return bad("schedule must be finite and nondecreasing".into());
            }
        }
        Ok(())
    }

    /// Fraction `s_j` for 0-based step `j`.
    pub fn fraction(&self, j: usize) -> f64 {
        match &self.schedule {
            Schedule::Linear => j as f64 / (self.n_t - 1) as f64,
            Schedule::Custom(grid) => grid[j],
        }
    }

    pub fn ansatz(&self) -> Ansatz {
        match (self.mode, self.sparse_m) {
            (Mode::Product, _) => Ansatz::Product,
            (Mode::Gcs, true) => Ansatz::SparseM,
            (Mode::Gcs, false) => Ansatz::Full,
        }
    }
}

/// ADAM moments shaped like [`GcsParams`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    n: usize,
    step: u64,
    mx: Vec<[f64; 3]>,
    vx: Vec<[f64; 3]>,
    my: Vec<[f64; 3]>,
    vy: Vec<[f64; 3]>,
    mm: Vec<f64>,
    vm: Vec<f64>,
    /// Pairs `(i < j)` of `M` that are updated.
    m_pairs: Vec<(usize, usize)>,
}

impl OptimizerState {
    /// Fresh state; `M` updates cover every pair for the dense ansatz, the
    /// couplings for the sparse one, and nothing for product states.
    pub fn new(inst: &QuboInstance, config: &AnnealConfig) -> Self {
        let n = inst.n();
        let m_pairs = match config.ansatz() {
            Ansatz::Product => Vec::new(),
            Ansatz::SparseM => inst.bonds().iter().map(|b| (b.i, b.j)).collect(),
            Ansatz::Full => (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .collect(),
        };
        OptimizerState {
            n,
            step: 0,
            mx: vec![[0.0; 3]; n],
            vx: vec![[0.0; 3]; n],
            my: vec![[0.0; 3]; n],
            vy: vec![[0.0; 3]; n],
            mm: vec![0.0; m_pairs.len()],
            vm: vec![0.0; m_pairs.len()],
            m_pairs,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl Adam {
    #[inline]
    fn update(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        *m = self.b1 * *m + (1.0 - self.b1) * g;
        *v = self.b2 * *v + (1.0 - self.b2) * g * g;
        let mhat = *m / self.c1;
        let vhat = *v / self.c2;
        *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
    }
}

/// One bias-corrected ADAM step. Blocks outside the ansatz are left
/// bitwise untouched.
pub fn adam_step(
    params: &mut GcsParams,
    grads: &Gradient,
    state: &mut OptimizerState,
    config: &AnnealConfig,
) -> Result<()> {
    let n = params.n();
    if grads.n() != n || state.n != n {
        return Err(Error::Validation(
            "parameter, gradient and optimizer shapes differ".into(),
        ));
    }
    state.step += 1;
    let t = state.step as f64;
    let adam = Adam {
        lr: config.learning_rate,
        b1: config.adam_beta1,
        b2: config.adam_beta2,
        eps: config.adam_eps,
        c1: 1.0 - config.adam_beta1.powf(t),
        c2: 1.0 - config.adam_beta2.powf(t),
    };
    for k in 0..n {
        for m in 0..3 {
            adam.update(
                &mut params.x[k][m],
                grads.x[k][m],
                &mut state.mx[k][m],
                &mut state.vx[k][m],
            );
        }
    }
    if config.mode == Mode::Gcs {
        for k in 0..n {
            for m in 0..3 {
                adam.update(
                    &mut params.y[k][m],
                    grads.y[k][m],
                    &mut state.my[k][m],
                    &mut state.vy[k][m],
                );
            }
        }
        for (p, &(i, j)) in state.m_pairs.iter().enumerate() {
            let mut v = params.m(i, j);
            adam.update(&mut v, grads.m(i, j), &mut state.mm[p], &mut state.vm[p]);
            params.set_m(i, j, v);
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite parameter after ADAM step {}",
            state.step
        )));
    }
    Ok(())
}

/// `y = 0`, `M = 0`, `x` uniform in `[-init_scale, init_scale]`.
pub fn init_params(n: usize, config: &AnnealConfig) -> GcsParams {
    let mut p = GcsParams::zeros(n);
    if config.init_scale > 0.0 {
        let mut r = rng::seeded(config.seed);
        let s = config.init_scale;
        for v in p.x.iter_mut().flatten() {
            *v = r.random_range(-s..=s);
        }
    }
    p
}

/// Signs of `<sigma_z>` (ties to +1) with their classical energy, plus the
/// unrounded expectations.
pub fn round_state(
    params: &GcsParams,
    inst: &QuboInstance,
) -> Result<(SpinConfiguration, Vec<f64>)> {
    let z = z_expectations(params)?;
    let spins = z.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
    Ok((SpinConfiguration::evaluate(inst, spins)?, z))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealResult {
    pub config: AnnealConfig,
    pub solution: SpinConfiguration,
    /// Loss at each schedule point, before that point's update.
    pub loss_trace: Vec<f64>,
    /// Wall time of each step in seconds.
    pub step_seconds: Vec<f64>,
    /// `<sigma_z>` before rounding.
    pub z: Vec<f64>,
    pub gradient_evaluations: usize,
    pub updates: u64,
    /// Factor the couplings were divided by (1 without rescaling).
    pub coupling_scale: f64,
    /// Whether a bias was folded into an auxiliary spin.
    pub folded: bool,
    pub final_params: GcsParams,
}

/// Anneals a bias-free instance.
pub fn run(inst: &QuboInstance, config: &AnnealConfig) -> Result<AnnealResult> {
    run_with(inst, config, |_, _| {})
}

/// [`run`] with a hook called after every update.
pub fn run_with(
    inst: &QuboInstance,
    config: &AnnealConfig,
    mut hook: impl FnMut(usize, &GcsParams),
) -> Result<AnnealResult> {
    config.validate()?;
    let scale = if config.rescale {
        inst.mean_abs_coupling()
    } else {
        1.0
    };
    let scaled;
    let work = if config.rescale && scale > 0.0 {
        scaled = inst.scaled(1.0 / scale);
        &scaled
    } else {
        inst
    };
    let engine = Engine::new(work, config.ansatz())?;
    let mut params = init_params(inst.n(), config);
    let mut state = OptimizerState::new(inst, config);
    let mut loss_trace = Vec::with_capacity(config.n_t);
    let mut step_seconds = Vec::with_capacity(config.n_t);
    let mut gradient_evaluations = 0;
    for j in 0..config.n_t {
        let start = Instant::now();
        let s = config.fraction(j);
        let ev = engine
            .evaluate(&params, s, true)
            .map_err(|e| step_error(e, j))?;
        gradient_evaluations += 1;
        loss_trace.push(ev.loss);
        let g = ev.gradient.expect("gradient requested");
        adam_step(&mut params, &g, &mut state, config).map_err(|e| step_error(e, j))?;
        step_seconds.push(start.elapsed().as_secs_f64());
        hook(j, &params);
    }
    let (solution, z) = round_state(&params, inst)?;
    Ok(AnnealResult {
        config: config.clone(),
        solution,
        loss_trace,
        step_seconds,
        z,
        gradient_evaluations,
        updates: state.step,
        coupling_scale: if config.rescale && scale > 0.0 {
            scale
        } else {
            1.0
        },
        folded: false,
        final_params: params,
    })
}

fn step_error(e: Error, j: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("step {}: {msg}", j + 1)),
        other => other,
    }
}

/// Anneals any instance; a nonzero bias is folded into an auxiliary spin and
/// the readout is mapped back (global flip so the auxiliary spin is +1).
pub fn solve(inst: &QuboInstance, config: &AnnealConfig) -> Result<AnnealResult> {
    if !inst.has_bias() {
        return run(inst, config);
    }
    let folded = inst.fold_bias();
    let mut res = run(&folded, config)?;
    res.solution = SpinConfiguration::evaluate(inst, unfold_spins(&res.solution.spins))?;
    res.folded = true;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcs::{expval_sx, expval_z, expval_zz, loss};
    use crate::oracle::{build_state, expval_real, Pauli};
    use crate::qubo::{gen_ea3d, Boundary};

    fn small_config(n_t: usize) -> AnnealConfig {
        AnnealConfig {
            n_t,
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        assert!(AnnealConfig::default().validate().is_ok());
        let bad = [
            AnnealConfig {
                n_t: 1,
                ..Default::default()
            },
            AnnealConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            AnnealConfig {
                adam_beta1: 1.0,
                ..Default::default()
            },
            AnnealConfig {
                adam_beta2: 0.0,
                ..Default::default()
            },
            AnnealConfig {
                init_scale: -1.0,
                ..Default::default()
            },
            AnnealConfig {
                n_t: 3,
                schedule: Schedule::Custom(vec![0.0, 0.5]),
                ..Default::default()
            },
            AnnealConfig {
                n_t: 3,
                schedule: Schedule::Custom(vec![0.1, 0.5, 1.0]),
                ..Default::default()
            },
            AnnealConfig {
                n_t: 3,
                schedule: Schedule::Custom(vec![0.0, 0.6, 0.5]),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn linear_schedule_endpoints() {
        let c = small_config(5);
        let s: Vec<f64> = (0..5).map(|j| c.fraction(j)).collect();
        assert_eq!(s, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn init_params_properties() {
        let inst = gen_ea3d(2, 1, Boundary::Periodic).unwrap();
        let zero = init_params(
            8,
            &AnnealConfig {
                init_scale: 0.0,
                ..Default::default()
            },
        );
        assert_eq!(loss(&zero, 0.0, &inst).unwrap(), -8.0);
        let p = init_params(8, &AnnealConfig::default());
        assert!(p.m_is_zero() && p.y_is_zero());
        assert!(p.x.iter().flatten().all(|v| v.abs() <= 0.01));
        for i in 0..8 {
            assert!((expval_sx(&p, i).unwrap() - 1.0).abs() < 1e-3);
        }
        assert_eq!(p, init_params(8, &AnnealConfig::default()));
    }

    fn toy(n: usize) -> (QuboInstance, GcsParams, Gradient) {
        let inst = QuboInstance::new(n, [], vec![0.0; n], 0.0, Boundary::None).unwrap();
        let p = GcsParams::zeros(n);
        let g = Gradient {
            x: vec![[0.0; 3]; n],
            m: vec![0.0; n * n],
            y: vec![[0.0; 3]; n],
        };
        (inst, p, g)
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let (inst, mut p, g) = toy(3);
        p.x[1] = [0.1, 0.2, 0.3];
        let before = p.clone();
        let config = AnnealConfig::default();
        let mut st = OptimizerState::new(&inst, &config);
        adam_step(&mut p, &g, &mut st, &config).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (inst, mut p, mut g) = toy(1);
        p.x[0][0] = 1.0;
        g.x[0][0] = 2.0 * p.x[0][0];
        let config = AnnealConfig::default();
        let mut st = OptimizerState::new(&inst, &config);
        adam_step(&mut p, &g, &mut st, &config).unwrap();
        // lr * g / (|g| + eps)
        assert!((p.x[0][0] - (1.0 - 0.1)).abs() < 1e-9);
    }

    #[test]
    fn product_mode_masks_m_and_y() {
        let (inst, mut p, mut g) = toy(3);
        let mut r = rng::seeded(3);
        for v in
            g.x.iter_mut()
                .chain(g.y.iter_mut())
                .flatten()
                .chain(g.m.iter_mut())
        {
            *v = r.random_range(-1.0..1.0);
        }
        let config = AnnealConfig {
            mode: Mode::Product,
            ..Default::default()
        };
        let mut st = OptimizerState::new(&inst, &config);
        adam_step(&mut p, &g, &mut st, &config).unwrap();
        assert!(p.m_is_zero() && p.y_is_zero());
        assert!(p.x.iter().flatten().all(|&v| v != 0.0));
    }

    #[test]
    fn sparse_m_only_moves_bonds() {
        let inst = QuboInstance::new(3, [(0, 1, 1.0)], vec![0.0; 3], 0.0, Boundary::None).unwrap();
        let (_, mut p, mut g) = toy(3);
        g.m = vec![1.0; 9];
        let config = AnnealConfig {
            sparse_m: true,
            ..Default::default()
        };
        let mut st = OptimizerState::new(&inst, &config);
        adam_step(&mut p, &g, &mut st, &config).unwrap();
        assert!(p.m(0, 1) != 0.0);
        assert_eq!(p.m(1, 0), p.m(0, 1));
        assert_eq!(p.m(0, 2), 0.0);
        assert_eq!(p.m(1, 2), 0.0);
    }

    #[test]
    fn non_finite_update_is_numeric_error() {
        let (inst, mut p, mut g) = toy(1);
        g.x[0][0] = f64::NAN;
        let config = AnnealConfig::default();
        let mut st = OptimizerState::new(&inst, &config);
        assert!(matches!(
            adam_step(&mut p, &g, &mut st, &config),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn round_state_readout() {
        let inst = gen_ea3d(2, 4, Boundary::Open).unwrap();
        let s = vec![1, -1, -1, 1, 1, 1, -1, 1];
        let (sol, _) = round_state(&GcsParams::classical(&s), &inst).unwrap();
        assert_eq!(sol.spins, s);
        assert_eq!(sol.energy, inst.energy(&s).unwrap());
        let (sol, z) = round_state(&GcsParams::zeros(8), &inst).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert_eq!(sol.spins, vec![1; 8]);

        let mut r = rng::seeded(5);
        let p = GcsParams::random(4, 1.0, 0.5, &mut r);
        let inst4 = QuboInstance::new(4, [], vec![0.0; 4], 0.0, Boundary::None).unwrap();
        let (_, z) = round_state(&p, &inst4).unwrap();
        let st = build_state(&p).unwrap();
        for (i, &zi) in z.iter().enumerate() {
            assert!((zi - expval_real(&st, &[(i, Pauli::Z)]).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn run_counts_and_determinism() {
        let inst = gen_ea3d(2, 9, Boundary::Periodic).unwrap();
        let config = AnnealConfig {
            n_t: 50,
            seed: 4,
            ..Default::default()
        };
        let a = run(&inst, &config).unwrap();
        let b = run(&inst, &config).unwrap();
        assert_eq!(a.gradient_evaluations, 50);
        assert_eq!(a.updates, 50);
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.solution.energy, inst.energy(&a.solution.spins).unwrap());
    }

    #[test]
    fn product_runs_stay_separable() {
        let inst = gen_ea3d(2, 2, Boundary::Periodic).unwrap();
        let config = AnnealConfig {
            n_t: 40,
            mode: Mode::Product,
            ..Default::default()
        };
        let res = run_with(&inst, &config, |j, p| {
            assert!(p.m_is_zero() && p.y_is_zero());
            if j % 10 == 0 {
                let zz = expval_zz(p, 0, 5).unwrap();
                let z = expval_z(p, 0).unwrap() * expval_z(p, 5).unwrap();
                assert!((zz - z).abs() < 1e-12);
            }
        })
        .unwrap();
        assert!(res.final_params.m_is_zero() && res.final_params.y_is_zero());
    }

    #[test]
    fn biased_instance_requires_folding() {
        let inst = QuboInstance::new(1, [], vec![1.0], 0.0, Boundary::None).unwrap();
        assert!(matches!(
            run(&inst, &small_config(10)),
            Err(Error::Contract(_))
        ));
        let res = solve(&inst, &small_config(200)).unwrap();
        assert!(res.folded);
        assert_eq!(res.solution.spins, vec![-1]);
        assert_eq!(res.solution.energy, -1.0);
    }

    #[test]
    fn rescale_is_recorded() {
        let inst = gen_ea3d(2, 3, Boundary::Open).unwrap();
        let res = run(
            &inst,
            &AnnealConfig {
                n_t: 20,
                rescale: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(res.coupling_scale, inst.mean_abs_coupling());
        assert_eq!(
            res.solution.energy,
            inst.energy(&res.solution.spins).unwrap()
        );
    }
}
