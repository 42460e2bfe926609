//! Self-check of the analytical engine against the dense oracle and
//! against central finite differences.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gcs::{self, GcsParams, Gradient};
use crate::oracle::{build_state, expval_real, hamiltonian_expval, Pauli, MAX_STATE_SPINS};
use crate::qubo::{Boundary, QuboInstance};
use crate::rng;

/// Absolute tolerance of oracle comparisons.
pub const ORACLE_TOL: f64 = 1e-10;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance of gradient comparisons.
pub const FD_REL_TOL: f64 = 1e-6;
/// Absolute floor of gradient comparisons.
pub const FD_ABS_TOL: f64 = 1e-9;

/// The quantities under test. Implemented by [`Analytic`]; other
/// implementations let the suite be pointed at deliberately broken code.
pub trait Evaluator: Sync {
    fn expval_sx(&self, p: &GcsParams, i: usize) -> Result<f64>;
    fn expval_z(&self, p: &GcsParams, i: usize) -> Result<f64>;
    fn expval_zz(&self, p: &GcsParams, i: usize, j: usize) -> Result<f64>;
    fn loss(&self, p: &GcsParams, s: f64, inst: &QuboInstance) -> Result<f64>;
    fn gradient(&self, p: &GcsParams, s: f64, inst: &QuboInstance) -> Result<Gradient>;
}

/// The shipped engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct Analytic;

impl Evaluator for Analytic {
    fn expval_sx(&self, p: &GcsParams, i: usize) -> Result<f64> {
        gcs::expval_sx(p, i)
    }
    fn expval_z(&self, p: &GcsParams, i: usize) -> Result<f64> {
        gcs::expval_z(p, i)
    }
    fn expval_zz(&self, p: &GcsParams, i: usize, j: usize) -> Result<f64> {
        gcs::expval_zz(p, i, j)
    }
    fn loss(&self, p: &GcsParams, s: f64, inst: &QuboInstance) -> Result<f64> {
        gcs::loss(p, s, inst)
    }
    fn gradient(&self, p: &GcsParams, s: f64, inst: &QuboInstance) -> Result<Gradient> {
        gcs::gradient(p, s, inst)
    }
}

/// Small deliberate defects for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Coupling expectations shifted by `1e-7`.
    ZzShift,
    /// Entangler gradient block scaled by `1 + 1e-4`.
    MGradientScale,
    /// Sign of `d/dy` flipped on the last spin.
    YGradientSign,
}

impl std::str::FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zz-shift" => Ok(Fault::ZzShift),
            "m-gradient-scale" => Ok(Fault::MGradientScale),
            "y-gradient-sign" => Ok(Fault::YGradientSign),
            _ => Err(Error::Validation(format!("unknown fault '{s}'"))),
        }
    }
}

/// [`Analytic`] with one [`Fault`] applied.
#[derive(Debug, Clone, Copy)]
pub struct Faulty(pub Fault);

impl Evaluator for Faulty {
    fn expval_sx(&self, p: &GcsParams, i: usize) -> Result<f64> {
        Analytic.expval_sx(p, i)
    }
    fn expval_z(&self, p: &GcsParams, i: usize) -> Result<f64> {
        Analytic.expval_z(p, i)
    }
    fn expval_zz(&self, p: &GcsParams, i: usize, j: usize) -> Result<f64> {
        let v = Analytic.expval_zz(p, i, j)?;
        Ok(if self.0 == Fault::ZzShift {
            v + 1e-7
        } else {
            v
        })
    }
    fn loss(&self, p: &GcsParams, s: f64, inst: &QuboInstance) -> Result<f64> {
        Analytic.loss(p, s, inst)
    }
    fn gradient(&self, p: &GcsParams, s: f64, inst: &QuboInstance) -> Result<Gradient> {
        let mut g = Analytic.gradient(p, s, inst)?;
        match self.0 {
            Fault::MGradientScale => g.m.iter_mut().for_each(|v| *v *= 1.0 + 1e-4),
            Fault::YGradientSign => {
                if let Some(last) = g.y.last_mut() {
                    last.iter_mut().for_each(|v| *v = -*v);
                }
            }
            Fault::ZzShift => {}
        }
        Ok(g)
    }
}

/// Outcome of one group of comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub compared: usize,
    pub failures: usize,
    /// Largest absolute deviation seen.
    pub max_error: f64,
    /// First failing comparison, for the report.
    pub first_failure: Option<String>,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        CheckResult {
            name,
            compared: 0,
            failures: 0,
            max_error: 0.0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, err: f64, what: impl FnOnce() -> String) {
        self.compared += 1;
        if err.is_nan() {
            self.max_error = f64::NAN;
        } else if err > self.max_error {
            self.max_error = err;
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

/// Dense instance with Gaussian couplings on a random subset of pairs.
pub fn random_instance<R: Rng + ?Sized>(
    n: usize,
    density: f64,
    rng: &mut R,
) -> Result<QuboInstance> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < density {
                pairs.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    let offset = rng.random_range(-1.0..1.0);
    QuboInstance::new(n, pairs, vec![0.0; n], offset, Boundary::None)
}

fn oracle_checks(
    ev: &dyn Evaluator,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let mut rng = rng::stream(seed, 1);
    let mut field = CheckResult::new("oracle: single-site expectations");
    let mut pair = CheckResult::new("oracle: two-site expectations");
    let mut ham = CheckResult::new("oracle: loss");
    for t in 0..trials {
        let p = GcsParams::random(n, 1.5, 0.8, &mut rng);
        let st = build_state(&p)?;
        for i in 0..n {
            for (name, pauli, v) in [
                ("X", Pauli::X, ev.expval_sx(&p, i)?),
                ("Z", Pauli::Z, ev.expval_z(&p, i)?),
            ] {
                let o = expval_real(&st, &[(i, pauli)])?;
                let err = (v - o).abs();
                field.record(err <= ORACLE_TOL, err, || {
                    format!("trial {t}: <{name}({i})> = {v} vs oracle {o}")
                });
            }
            for j in 0..n {
                if i != j {
                    let v = ev.expval_zz(&p, i, j)?;
                    let o = expval_real(&st, &[(i, Pauli::Z), (j, Pauli::Z)])?;
                    let err = (v - o).abs();
                    pair.record(err <= ORACLE_TOL, err, || {
                        format!("trial {t}: <Z({i}) Z({j})> = {v} vs oracle {o}")
                    });
                }
            }
        }
        let inst = random_instance(n, 0.7, &mut rng)?;
        let s: f64 = rng.random();
        let v = ev.loss(&p, s, &inst)?;
        let o = hamiltonian_expval(&st, &inst, s)?;
        let err = (v - o).abs();
        ham.record(err <= ORACLE_TOL, err, || {
            format!("trial {t}: loss(s={s}) = {v} vs oracle {o}")
        });
    }
    Ok(vec![field, pair, ham])
}

fn fd_compare(check: &mut CheckResult, analytic: f64, fd: f64, what: impl FnOnce() -> String) {
    let err = (analytic - fd).abs();
    let ok = err <= (FD_REL_TOL * fd.abs()).max(FD_ABS_TOL);
    check.record(ok, err, || {
        format!("{}: analytic {analytic} vs finite difference {fd}", what())
    });
}

fn gradient_checks(
    ev: &dyn Evaluator,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let mut rng = rng::stream(seed, 2);
    let mut cx = CheckResult::new("finite differences: x block");
    let mut cm = CheckResult::new("finite differences: M block");
    let mut cy = CheckResult::new("finite differences: y block");
    for t in 0..trials {
        let inst = random_instance(n, 0.7, &mut rng)?;
        let p = GcsParams::random(n, 1.0, 0.5, &mut rng);
        let s: f64 = rng.random();
        let g = ev.gradient(&p, s, &inst)?;
        let f = |q: &GcsParams| ev.loss(q, s, &inst);
        let h = FD_STEP;
        for k in 0..n {
            for m in 0..3 {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.x[k][m] += h;
                b.x[k][m] -= h;
                let fd = (f(&a)? - f(&b)?) / (2.0 * h);
                fd_compare(&mut cx, g.x[k][m], fd, || {
                    format!("trial {t}: dL/dx[{k}][{m}]")
                });
                let (mut a, mut b) = (p.clone(), p.clone());
                a.y[k][m] += h;
                b.y[k][m] -= h;
                let fd = (f(&a)? - f(&b)?) / (2.0 * h);
                fd_compare(&mut cy, g.y[k][m], fd, || {
                    format!("trial {t}: dL/dy[{k}][{m}]")
                });
            }
            for l in (k + 1)..n {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.set_m(k, l, p.m(k, l) + h);
                b.set_m(k, l, p.m(k, l) - h);
                let fd = (f(&a)? - f(&b)?) / (2.0 * h);
                fd_compare(&mut cm, g.m(k, l), fd, || {
                    format!("trial {t}: dL/dM[{k}][{l}]")
                });
                let asym = (g.m(k, l) - g.m(l, k)).abs();
                cm.record(asym == 0.0, asym, || {
                    format!("trial {t}: gradient M not symmetric at ({k}, {l})")
                });
            }
            let diag = g.m(k, k).abs();
            cm.record(diag == 0.0, diag, || {
                format!("trial {t}: gradient M diagonal ({k}, {k}) nonzero")
            });
        }
    }
    Ok(vec![cx, cm, cy])
}

/// Runs both suites on `trials` random draws of `n` spins.
pub fn run_suite(ev: &dyn Evaluator, n: usize, trials: usize, seed: u64) -> Result<VerifyReport> {
    if n == 0 {
        return Err(Error::Validation(
            "verification needs at least one spin".into(),
        ));
    }
    if n > MAX_STATE_SPINS {
        return Err(Error::Resource(format!(
            "verification at {n} spins exceeds the {MAX_STATE_SPINS}-spin oracle cap"
        )));
    }
    let mut checks = oracle_checks(ev, n, trials, seed)?;
    checks.extend(gradient_checks(ev, n, trials, seed)?);
    Ok(VerifyReport {
        n,
        trials,
        seed,
        checks,
    })
}

/// [`run_suite`] on the shipped engine.
pub fn verify(n: usize, trials: usize, seed: u64) -> Result<VerifyReport> {
    run_suite(&Analytic, n, trials, seed)
}
