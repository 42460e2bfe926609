//! Closed-form expectation values and gradients.
//!
//! Every Hamiltonian term is one of
//! - a field term `<sigma_src^(i)>` (`src` = x for the transverse field,
//!   z for readout), or
//! - a coupling term `<sigma_z^(i) sigma_z^(j)>`.
//!
//! Pushing `U(y)` through the operator expands it in the ladder basis with
//! coefficients `d(y)`; pushing `V(M)` through gives
//! `V^dag sigma_alpha^(i) V = exp(4 i alpha sum_k M_ik sigma_z^(k)) sigma_alpha^(i)`
//! (the phase sign follows from `V = exp(-i sum_{j != k} M_jk Z_j Z_k)` with
//! `sigma_+ = |0><1|`). What remains is an expectation value in the product
//! state `U(x)|+>^N`, which factorizes site by site:
//!
//! ```text
//! <sigma_src^(i)> = sum_alpha d_{src,alpha}^(i) prod_k P_ik^alpha
//! P_ik^alpha = <psi_k| exp(4 i alpha M_ik Z) (sigma_alpha)^{delta_ik} |psi_k>
//! ```
//!
//! and similarly with nine `(alpha, beta)` combinations for couplings.
//! Gradients reuse the same factors: a parameter living on site `k` only
//! touches `P_ik`, so its derivative is the product with that single factor
//! replaced by its derivative.

use num_complex::Complex64;
use rayon::prelude::*;

use super::params::GcsParams;
use super::spin::{conjugation_coeff_derivs, conjugation_coeffs, SpinData, LADDER_ALPHAS};
use crate::error::{Error, Result};
use crate::qubo::QuboInstance;

const CZERO: Complex64 = Complex64::new(0.0, 0.0);
const CONE: Complex64 = Complex64::new(1.0, 0.0);
const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Factors smaller than this are not divided out of a product; the
/// leave-one-out product is recomputed instead.
const DIVISION_GUARD: f64 = 1e-12;
/// Largest tolerated imaginary part of a Hermitian expectation value.
const IMAG_TOLERANCE: f64 = 1e-9;
/// Terms evaluated per parallel batch before the ordered reduction.
const BATCH: usize = 64;

/// Which parameters are variational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ansatz {
    /// Dense `M`, all blocks differentiated.
    #[default]
    Full,
    /// `M` restricted to the coupling graph of the instance.
    SparseM,
    /// `M = 0` and `y` frozen: separable states, only `x` is differentiated.
    Product,
}

/// Source operator of a field term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldAxis {
    X,
    Y,
    Z,
}

impl FieldAxis {
    fn row(self) -> usize {
        match self {
            FieldAxis::X => 0,
            FieldAxis::Y => 1,
            FieldAxis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Field {
        i: usize,
        axis: FieldAxis,
        coef: f64,
    },
    Coupling {
        i: usize,
        j: usize,
        coef: f64,
    },
}

/// Gradient blocks of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub x: Vec<[f64; 3]>,
    /// Symmetric, zero diagonal, row-major; entry `(i, j)` is the derivative
    /// with respect to the single pair parameter `M_ij = M_ji`.
    pub m: Vec<f64>,
    pub y: Vec<[f64; 3]>,
}

impl Gradient {
    fn zeros(n: usize) -> Self {
        Gradient {
            x: vec![[0.0; 3]; n],
            m: vec![0.0; n * n],
            y: vec![[0.0; 3]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.y)
            .flatten()
            .all(|v| v.is_finite())
            && self.m.iter().all(|v| v.is_finite())
    }
}

/// Loss value with an optional gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Option<Gradient>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-site data shared by every term of one evaluation.
struct Prepared<'a> {
    params: &'a GcsParams,
    spins: Vec<SpinData>,
    d: Vec<[[Complex64; 3]; 3]>,
    dd: Vec<[[[Complex64; 3]; 3]; 3]>,
    /// Nonzero columns of each row of `M`.
    m_support: Vec<Vec<usize>>,
    /// `exp(4 i M_ik)`, dense row-major; only built when every site is visited.
    phases: Option<Vec<Complex64>>,
}

impl<'a> Prepared<'a> {
    fn new(params: &'a GcsParams, with_y_derivs: bool, dense_phases: bool) -> Self {
        let n = params.n();
        let spins = params.x.iter().map(SpinData::new).collect();
        let d = params.y.iter().map(|y| conjugation_coeffs(y).d).collect();
        let dd = if with_y_derivs {
            params
                .y
                .iter()
                .map(|y| {
                    let g = conjugation_coeff_derivs(y);
                    [g[0].1, g[1].1, g[2].1]
                })
                .collect()
        } else {
            Vec::new()
        };
        let m_support = (0..n)
            .map(|i| {
                params
                    .m_row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0.0)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        let phases = dense_phases.then(|| {
            (0..n * n)
                .map(|idx| {
                    let v = params.m_row(idx / n)[idx % n];
                    if v == 0.0 {
                        CONE
                    } else {
                        Complex64::from_polar(1.0, 4.0 * v)
                    }
                })
                .collect()
        });
        Prepared {
            params,
            spins,
            d,
            dd,
            m_support,
            phases,
        }
    }

    #[inline]
    fn phase(&self, i: usize, k: usize) -> Complex64 {
        match &self.phases {
            Some(t) => t[i * self.params.n() + k],
            None => {
                let v = self.params.m(i, k);
                if v == 0.0 {
                    CONE
                } else {
                    Complex64::from_polar(1.0, 4.0 * v)
                }
            }
        }
    }
}

#[inline]
fn pow_phase(u: Complex64, alpha: i32) -> Complex64 {
    match alpha {
        0 => CONE,
        1 => u,
        _ => u.conj(),
    }
}

type Op2 = [[Complex64; 2]; 2];

fn ladder_op(alpha: i32) -> Op2 {
    match alpha {
        -1 => [[CZERO, CZERO], [CONE, CZERO]],
        0 => [[CONE, CZERO], [CZERO, -CONE]],
        _ => [[CZERO, CONE], [CZERO, CZERO]],
    }
}

/// `<bra| op |ket>` for the `sqrt 2`-scaled amplitudes of [`SpinData`].
#[inline]
fn sandwich(bra: &[Complex64; 2], op: &Op2, ket: &[Complex64; 2]) -> Complex64 {
    0.5 * (bra[0].conj() * (op[0][0] * ket[0] + op[0][1] * ket[1])
        + bra[1].conj() * (op[1][0] * ket[0] + op[1][1] * ket[1]))
}

/// `diag(e, conj e)` applied on the given side of `op`.
fn with_phase(op: &Op2, e: Complex64, left: bool) -> Op2 {
    let ph = [e, e.conj()];
    let mut out = *op;
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] *= if left { ph[r] } else { ph[c] };
        }
    }
    out
}

/// `i sigma_z` applied on the given side of `op`.
fn with_i_sigma_z(op: &Op2, left: bool) -> Op2 {
    with_phase(op, CI, left)
}

/// Factors of one term for one ladder combination.
///
/// `factors[p]` is `P_{i,support[p]}` and `product` their running product.
#[derive(Debug, Default, Clone)]
pub(crate) struct TermCache {
    pub support: Vec<usize>,
    pub factors: Vec<Complex64>,
    pub product: Complex64,
    /// `d factor / d x_{k,m}`
    dfx: Vec<[Complex64; 3]>,
    /// `d factor / d M_{i,k}` and `d factor / d M_{j,k}` (row-wise, before symmetrization)
    dmi: Vec<Complex64>,
    dmj: Vec<Complex64>,
}

impl TermCache {
    fn leave_one_out(&self, p: usize) -> Complex64 {
        let f = self.factors[p];
        if f.norm() >= DIVISION_GUARD {
            self.product / f
        } else {
            self.factors
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != p)
                .fold(CONE, |acc, (_, &g)| acc * g)
        }
    }
}

/// Gradient contributions of a single term, aligned with its support.
#[derive(Debug, Default)]
struct TermOutput {
    value: Complex64,
    i: usize,
    j: Option<usize>,
    support: Vec<usize>,
    gx: Vec<[f64; 3]>,
    gmi: Vec<f64>,
    gmj: Vec<f64>,
    gyi: [f64; 3],
    gyj: [f64; 3],
}

struct TermEvaluator<'p, 'a> {
    prep: &'p Prepared<'a>,
    inst: Option<&'p QuboInstance>,
    ansatz: Ansatz,
    want_grad: bool,
}

impl TermEvaluator<'_, '_> {
    fn grad_m(&self) -> bool {
        self.want_grad && self.ansatz != Ansatz::Product
    }

    fn grad_y(&self) -> bool {
        self.want_grad && self.ansatz != Ansatz::Product
    }

    fn support(&self, i: usize, j: Option<usize>, out: &mut Vec<usize>) {
        out.clear();
        let n = self.prep.params.n();
        if self.grad_m() && self.ansatz == Ansatz::Full {
            out.extend(0..n);
            return;
        }
        out.push(i);
        out.extend_from_slice(&self.prep.m_support[i]);
        if let Some(j) = j {
            out.push(j);
            out.extend_from_slice(&self.prep.m_support[j]);
        }
        if self.grad_m() {
            if let Some(inst) = self.inst {
                out.extend(inst.neighbors(i).iter().map(|&(k, _)| k));
                if let Some(j) = j {
                    out.extend(inst.neighbors(j).iter().map(|&(k, _)| k));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Fills `cache` with the factors for ladder indices `(alpha, beta)`.
    /// `beta` is ignored for field terms (`j = None`).
    fn factorize(
        &self,
        i: usize,
        j: Option<usize>,
        alpha: i32,
        beta: i32,
        cache: &mut TermCache,
        support: &[usize],
    ) {
        let prep = self.prep;
        let grad = self.want_grad;
        cache.support.clear();
        cache.factors.clear();
        cache.dfx.clear();
        cache.dmi.clear();
        cache.dmj.clear();
        let mut product = CONE;
        let fa = 4.0 * f64::from(alpha);
        let fb = 4.0 * f64::from(beta);
        for &k in support {
            let sd = &prep.spins[k];
            let (f, dfx, dmi, dmj);
            if k == i || Some(k) == j {
                // operator on a site carrying a ladder operator
                let (op, dop, into_i) = if k == i {
                    let base = ladder_op(alpha);
                    match j {
                        None => (base, None, false),
                        Some(j) => {
                            let e = pow_phase(prep.phase(j, i), beta);
                            let op = with_phase(&base, e, false);
                            (op, Some(with_i_sigma_z(&op, false)), false)
                        }
                    }
                } else {
                    let e = pow_phase(prep.phase(i, k), alpha);
                    let op = with_phase(&ladder_op(beta), e, true);
                    (op, Some(with_i_sigma_z(&op, true)), true)
                };
                f = sandwich(&sd.psi, &op, &sd.psi);
                let mut g = [CZERO; 3];
                if grad {
                    for (m, gm) in g.iter_mut().enumerate() {
                        *gm = sandwich(&sd.dpsi[m], &op, &sd.psi)
                            + sandwich(&sd.psi, &op, &sd.dpsi[m]);
                    }
                }
                dfx = g;
                let dphi = match (grad, dop) {
                    (true, Some(dop)) => sandwich(&sd.psi, &dop, &sd.psi),
                    _ => CZERO,
                };
                // site i's phase comes from row j (weight 4 beta); site j's from row i (4 alpha)
                if into_i {
                    dmi = dphi * fa;
                    dmj = CZERO;
                } else {
                    dmi = CZERO;
                    dmj = dphi * fb;
                }
            } else {
                let mut e = pow_phase(prep.phase(i, k), alpha);
                if let Some(j) = j {
                    e *= pow_phase(prep.phase(j, k), beta);
                }
                f = Complex64::new(e.re, sd.z * e.im);
                let ie = CI * e.im;
                dfx = [ie * sd.dz[0], ie * sd.dz[1], ie * sd.dz[2]];
                let dtheta = Complex64::new(-e.im, sd.z * e.re);
                dmi = dtheta * fa;
                dmj = dtheta * fb;
            }
            product *= f;
            cache.support.push(k);
            cache.factors.push(f);
            if grad {
                cache.dfx.push(dfx);
                cache.dmi.push(dmi);
                cache.dmj.push(dmj);
            }
        }
        cache.product = product;
    }

    fn evaluate(
        &self,
        term: Term,
        cache: &mut TermCache,
        support: &mut Vec<usize>,
    ) -> Result<TermOutput> {
        let prep = self.prep;
        let (i, j, coef, src_row) = match term {
            Term::Field { i, axis, coef } => (i, None, coef, axis.row()),
            Term::Coupling { i, j, coef } => (i, Some(j), coef, 2),
        };
        self.support(i, j, support);
        let mut out = TermOutput {
            i,
            j,
            ..Default::default()
        };
        if self.want_grad {
            out.support = support.clone();
            out.gx = vec![[0.0; 3]; support.len()];
            if self.grad_m() {
                out.gmi = vec![0.0; support.len()];
                if j.is_some() {
                    out.gmj = vec![0.0; support.len()];
                }
            }
        }
        let specials: Vec<usize> = support
            .iter()
            .copied()
            .filter(|&k| k == i || Some(k) == j)
            .collect();
        let di = &prep.d[i][src_row];
        let betas: &[i32] = if j.is_some() { &LADDER_ALPHAS } else { &[0] };
        let mut value = CZERO;
        for (ai, &alpha) in LADDER_ALPHAS.iter().enumerate() {
            for (bi, &beta) in betas.iter().enumerate() {
                let dj = j.map_or(CONE, |j| prep.d[j][2][bi]);
                let weight = di[ai] * dj;
                let need_y = self.grad_y();
                if weight == CZERO && !need_y {
                    continue;
                }
                // without ladder operators every off-site factor is exactly 1
                let sites: &[usize] = if alpha == 0 && beta == 0 {
                    &specials
                } else {
                    support
                };
                self.factorize(i, j, alpha, beta, cache, sites);
                let p = cache.product;
                value += weight * p;
                if !self.want_grad {
                    continue;
                }
                let kappa = weight * coef;
                if kappa != CZERO {
                    // positions in `cache` map into `support` by index search only
                    // when the reduced special-site list was used
                    let reduced = sites.len() != support.len();
                    for (q, &k) in cache.support.iter().enumerate() {
                        let pos = if reduced {
                            support.binary_search(&k).expect("special in support")
                        } else {
                            q
                        };
                        let loo = kappa * cache.leave_one_out(q);
                        for m in 0..3 {
                            out.gx[pos][m] += (loo * cache.dfx[q][m]).re;
                        }
                        if self.grad_m() {
                            out.gmi[pos] += (loo * cache.dmi[q]).re;
                            if j.is_some() {
                                out.gmj[pos] += (loo * cache.dmj[q]).re;
                            }
                        }
                    }
                }
                if need_y {
                    let ddi = &prep.dd[i];
                    for m in 0..3 {
                        out.gyi[m] += (coef * ddi[m][src_row][ai] * dj * p).re;
                    }
                    if let Some(j) = j {
                        let ddj = &prep.dd[j];
                        for m in 0..3 {
                            out.gyj[m] += (coef * di[ai] * ddj[m][2][bi] * p).re;
                        }
                    }
                }
            }
        }
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite expectation value in {}",
                describe(term)
            )));
        }
        if value.im.abs() > IMAG_TOLERANCE {
            return Err(Error::Numeric(format!(
                "expectation value in {} has imaginary part {:e}",
                describe(term),
                value.im
            )));
        }
        out.value = value;
        Ok(out)
    }
}

fn describe(term: Term) -> String {
    match term {
        Term::Field { i, axis, .. } => format!("field term <sigma_{axis:?}({i})>"),
        Term::Coupling { i, j, .. } => format!("coupling term <Z({i}) Z({j})>"),
    }
}

fn check_site(params: &GcsParams, i: usize) -> Result<()> {
    if i >= params.n() {
        return Err(Error::Validation(format!(
            "site {i} out of range for {} spins",
            params.n()
        )));
    }
    Ok(())
}

fn single_term(params: &GcsParams, term: Term) -> Result<f64> {
    let prep = Prepared::new(params, false, false);
    let ev = TermEvaluator {
        prep: &prep,
        inst: None,
        ansatz: Ansatz::Full,
        want_grad: false,
    };
    let mut cache = TermCache::default();
    let mut support = Vec::new();
    Ok(ev.evaluate(term, &mut cache, &mut support)?.value.re)
}

/// `<sigma_x^(i)>`; cost grows with the number of nonzero `M_ik`.
pub fn expval_sx(params: &GcsParams, i: usize) -> Result<f64> {
    check_site(params, i)?;
    single_term(
        params,
        Term::Field {
            i,
            axis: FieldAxis::X,
            coef: 1.0,
        },
    )
}

/// `<sigma_axis^(i)>` for any Pauli axis.
pub fn expval_field(params: &GcsParams, i: usize, axis: FieldAxis) -> Result<f64> {
    check_site(params, i)?;
    single_term(params, Term::Field { i, axis, coef: 1.0 })
}

/// `<sigma_z^(i)>`.
pub fn expval_z(params: &GcsParams, i: usize) -> Result<f64> {
    expval_field(params, i, FieldAxis::Z)
}

/// `<sigma_z^(i) sigma_z^(j)>` for `i != j`.
pub fn expval_zz(params: &GcsParams, i: usize, j: usize) -> Result<f64> {
    check_site(params, i)?;
    check_site(params, j)?;
    if i == j {
        return Err(Error::Contract(format!(
            "<Z({i}) Z({i})> is the identity; same-site couplings belong in the offset"
        )));
    }
    single_term(params, Term::Coupling { i, j, coef: 1.0 })
}

/// `<sigma_z^(i)>` for every site, sharing the per-site setup.
pub fn z_expectations(params: &GcsParams) -> Result<Vec<f64>> {
    let prep = Prepared::new(params, false, false);
    let ev = TermEvaluator {
        prep: &prep,
        inst: None,
        ansatz: Ansatz::Full,
        want_grad: false,
    };
    (0..params.n())
        .into_par_iter()
        .map_init(
            || (TermCache::default(), Vec::new()),
            |(cache, support), i| {
                ev.evaluate(
                    Term::Field {
                        i,
                        axis: FieldAxis::Z,
                        coef: 1.0,
                    },
                    cache,
                    support,
                )
                .map(|o| o.value.re)
            },
        )
        .collect()
}

/// Evaluates `<H(s)>` and its gradient for one instance and ansatz.
///
/// `H(s) = s (sum_{i != j} W_ij Z_i Z_j + offset) - (1 - s) sum_i X_i`.
/// The instance must be bias-free (see [`QuboInstance::fold_bias`]).
#[derive(Debug, Clone, Copy)]
pub struct Engine<'a> {
    inst: &'a QuboInstance,
    ansatz: Ansatz,
}

impl<'a> Engine<'a> {
    pub fn new(inst: &'a QuboInstance, ansatz: Ansatz) -> Result<Self> {
        if inst.has_bias() {
            return Err(Error::Contract(
                "instance has a linear bias; call fold_bias() before annealing".into(),
            ));
        }
        Ok(Engine { inst, ansatz })
    }

    pub fn ansatz(&self) -> Ansatz {
        self.ansatz
    }

    fn check(&self, params: &GcsParams, s: f64) -> Result<()> {
        if params.n() != self.inst.n() {
            return Err(Error::Validation(format!(
                "parameters describe {} spins, instance has {}",
                params.n(),
                self.inst.n()
            )));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation(format!(
                "schedule fraction {s} outside [0, 1]"
            )));
        }
        Ok(())
    }

    fn terms(&self, s: f64) -> Vec<Term> {
        let n = self.inst.n();
        let mut terms = Vec::with_capacity(n + self.inst.bonds().len());
        let field = -(1.0 - s);
        if field != 0.0 {
            terms.extend((0..n).map(|i| Term::Field {
                i,
                axis: FieldAxis::X,
                coef: field,
            }));
        }
        if s != 0.0 {
            terms.extend(self.inst.bonds().iter().map(|b| Term::Coupling {
                i: b.i,
                j: b.j,
                coef: 2.0 * b.w * s,
            }));
        }
        terms
    }

    pub fn loss(&self, params: &GcsParams, s: f64) -> Result<f64> {
        Ok(self.evaluate(params, s, false)?.loss)
    }

    pub fn gradient(&self, params: &GcsParams, s: f64) -> Result<Gradient> {
        Ok(self
            .evaluate(params, s, true)?
            .gradient
            .expect("gradient requested"))
    }

    /// Loss and (optionally) gradient. Terms run in parallel; the reduction
    /// is sequential in term order, so results do not depend on the number
    /// of worker threads.
    pub fn evaluate(&self, params: &GcsParams, s: f64, want_grad: bool) -> Result<Evaluation> {
        self.check(params, s)?;
        let n = params.n();
        let full = want_grad && self.ansatz == Ansatz::Full;
        let prep = Prepared::new(params, want_grad && self.ansatz != Ansatz::Product, full);
        let ev = TermEvaluator {
            prep: &prep,
            inst: Some(self.inst),
            ansatz: self.ansatz,
            want_grad,
        };
        let terms = self.terms(s);

        let mut loss = Compensated::default();
        loss.add(s * self.inst.offset());
        let mut gx = vec![[Compensated::default(); 3]; if want_grad { n } else { 0 }];
        let mut gy = vec![[Compensated::default(); 3]; if want_grad { n } else { 0 }];
        // row-wise M derivatives before symmetrization
        let mut gm_rows =
            vec![Compensated::default(); if want_grad && ev.grad_m() { n * n } else { 0 }];

        for batch in terms.chunks(BATCH) {
            let outputs: Vec<Result<TermOutput>> = batch
                .par_iter()
                .map_init(
                    || (TermCache::default(), Vec::new()),
                    |(cache, support), &t| {
                        let mut o = ev.evaluate(t, cache, support)?;
                        o.value *= match t {
                            Term::Field { coef, .. } | Term::Coupling { coef, .. } => coef,
                        };
                        Ok(o)
                    },
                )
                .collect();
            for o in outputs {
                let o = o?;
                loss.add(o.value.re);
                if !want_grad {
                    continue;
                }
                for (q, &k) in o.support.iter().enumerate() {
                    for m in 0..3 {
                        gx[k][m].add(o.gx[q][m]);
                    }
                    if !o.gmi.is_empty() {
                        gm_rows[o.i * n + k].add(o.gmi[q]);
                    }
                    if let (Some(j), false) = (o.j, o.gmj.is_empty()) {
                        gm_rows[j * n + k].add(o.gmj[q]);
                    }
                }
                if ev.grad_y() {
                    for m in 0..3 {
                        gy[o.i][m].add(o.gyi[m]);
                        if let Some(j) = o.j {
                            gy[j][m].add(o.gyj[m]);
                        }
                    }
                }
            }
        }

        let loss = loss.value();
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at s = {s}")));
        }
        let gradient = want_grad.then(|| {
            let mut g = Gradient::zeros(n);
            for k in 0..n {
                for m in 0..3 {
                    g.x[k][m] = gx[k][m].value();
                    g.y[k][m] = gy[k][m].value();
                }
            }
            if !gm_rows.is_empty() {
                for a in 0..n {
                    for b in (a + 1)..n {
                        let v = gm_rows[a * n + b].value() + gm_rows[b * n + a].value();
                        g.m[a * n + b] = v;
                        g.m[b * n + a] = v;
                    }
                }
            }
            g
        });
        if let Some(g) = &gradient {
            check_gradient(g)?;
        }
        Ok(Evaluation { loss, gradient })
    }
}

fn check_gradient(g: &Gradient) -> Result<()> {
    let n = g.n();
    for (k, row) in g.x.iter().enumerate() {
        if let Some(m) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient entry x[{k}][{m}]"
            )));
        }
    }
    for (k, row) in g.y.iter().enumerate() {
        if let Some(m) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient entry y[{k}][{m}]"
            )));
        }
    }
    if let Some(idx) = g.m.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient entry M[{}][{}]",
            idx / n,
            idx % n
        )));
    }
    Ok(())
}

/// `<H(s)>` with the full ansatz.
pub fn loss(params: &GcsParams, s: f64, inst: &QuboInstance) -> Result<f64> {
    Engine::new(inst, Ansatz::Full)?.loss(params, s)
}

/// Gradient of `<H(s)>` with respect to every block of the full ansatz.
pub fn gradient(params: &GcsParams, s: f64, inst: &QuboInstance) -> Result<Gradient> {
    Engine::new(inst, Ansatz::Full)?.gradient(params, s)
}

#[cfg(test)]
pub(crate) fn field_cache(params: &GcsParams, i: usize, alpha: i32) -> TermCache {
    let prep = Prepared::new(params, false, false);
    let ev = TermEvaluator {
        prep: &prep,
        inst: None,
        ansatz: Ansatz::Full,
        want_grad: false,
    };
    let mut support = Vec::new();
    ev.support(i, None, &mut support);
    let mut cache = TermCache::default();
    ev.factorize(i, None, alpha, 0, &mut cache, &support);
    cache
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_state, expval_real, hamiltonian_expval, Pauli};
    use crate::qubo::{Boundary, QuboInstance};
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_instance(n: usize, density: f64, rng: &mut impl Rng) -> QuboInstance {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < density {
                    pairs.push((i, j, rng.sample::<f64, _>(StandardNormal)));
                }
            }
        }
        QuboInstance::new(
            n,
            pairs,
            vec![0.0; n],
            rng.random_range(-1.0..1.0),
            Boundary::None,
        )
        .unwrap()
    }

    #[test]
    fn zero_params_field_and_coupling_values() {
        let p = GcsParams::zeros(4);
        for i in 0..4 {
            assert_eq!(expval_sx(&p, i).unwrap(), 1.0);
            assert_eq!(expval_z(&p, i).unwrap(), 0.0);
        }
        assert_eq!(expval_zz(&p, 0, 3).unwrap(), 0.0);
        assert!(matches!(expval_zz(&p, 2, 2), Err(Error::Contract(_))));
        assert!(matches!(expval_sx(&p, 4), Err(Error::Validation(_))));
    }

    #[test]
    fn matches_statevector_oracle() {
        let mut rng = rng::seeded(17);
        for n in 2..=6 {
            for _ in 0..10 {
                let p = GcsParams::random(n, 1.3, 0.9, &mut rng);
                let st = build_state(&p).unwrap();
                for i in 0..n {
                    for (axis, pauli) in [
                        (FieldAxis::X, Pauli::X),
                        (FieldAxis::Y, Pauli::Y),
                        (FieldAxis::Z, Pauli::Z),
                    ] {
                        let a = expval_field(&p, i, axis).unwrap();
                        let b = expval_real(&st, &[(i, pauli)]).unwrap();
                        assert!((a - b).abs() < 1e-10, "n={n} i={i} {axis:?}: {a} vs {b}");
                    }
                    for j in 0..n {
                        if i != j {
                            let a = expval_zz(&p, i, j).unwrap();
                            let b = expval_real(&st, &[(i, Pauli::Z), (j, Pauli::Z)]).unwrap();
                            assert!((a - b).abs() < 1e-10, "n={n} ({i},{j}): {a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_m_matches_oracle() {
        let mut rng = rng::seeded(3);
        let mut p = GcsParams::random(5, 1.0, 0.0, &mut rng);
        p.set_m(0, 3, 0.4);
        p.set_m(1, 2, -0.7);
        let st = build_state(&p).unwrap();
        for (i, j) in [(0, 1), (0, 3), (2, 4), (1, 2)] {
            let a = expval_zz(&p, i, j).unwrap();
            let b = expval_real(&st, &[(i, Pauli::Z), (j, Pauli::Z)]).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_matches_oracle_hamiltonian() {
        let mut rng = rng::seeded(5);
        for n in 2..=5 {
            let inst = random_instance(n, 0.7, &mut rng);
            let p = GcsParams::random(n, 1.0, 0.6, &mut rng);
            let st = build_state(&p).unwrap();
            for s in [0.0, 0.37, 1.0] {
                let a = loss(&p, s, &inst).unwrap();
                let b = hamiltonian_expval(&st, &inst, s).unwrap();
                assert!((a - b).abs() < 1e-10, "n={n} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn transverse_ground_state_and_classical_embedding() {
        let mut rng = rng::seeded(8);
        let inst = random_instance(6, 0.5, &mut rng);
        assert_eq!(loss(&GcsParams::zeros(6), 0.0, &inst).unwrap(), -6.0);
        for _ in 0..8 {
            let s: Vec<i8> = (0..6)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect();
            let e = loss(&GcsParams::classical(&s), 1.0, &inst).unwrap();
            assert!((e - inst.energy(&s).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn biased_instance_is_a_contract_error() {
        let inst =
            QuboInstance::new(2, [(0, 1, 1.0)], vec![0.5, 0.0], 0.0, Boundary::None).unwrap();
        assert!(matches!(
            Engine::new(&inst, Ansatz::Full),
            Err(Error::Contract(_))
        ));
        assert!(Engine::new(&inst.fold_bias(), Ansatz::Full).is_ok());
    }

    #[test]
    fn product_state_factorizes() {
        let mut rng = rng::seeded(21);
        for _ in 0..20 {
            let p = GcsParams::random(4, 2.0, 0.0, &mut rng);
            let zz = expval_zz(&p, 1, 3).unwrap();
            let z = expval_z(&p, 1).unwrap() * expval_z(&p, 3).unwrap();
            assert!((zz - z).abs() < 1e-12);
        }
    }

    #[test]
    fn cached_product_equals_factors() {
        let mut rng = rng::seeded(2);
        let p = GcsParams::random(6, 1.0, 1.0, &mut rng);
        for alpha in LADDER_ALPHAS {
            let cache = field_cache(&p, 2, alpha);
            assert_eq!(cache.support.len(), 6);
            let prod = cache.factors.iter().fold(CONE, |a, &f| a * f);
            assert!((prod - cache.product).norm() < 1e-12);
            for q in 0..cache.support.len() {
                let direct = cache
                    .factors
                    .iter()
                    .enumerate()
                    .filter(|&(r, _)| r != q)
                    .fold(CONE, |a, (_, &f)| a * f);
                assert!((direct - cache.leave_one_out(q)).norm() < 1e-12);
            }
        }
    }

    fn assert_close(analytic: f64, fd: f64, what: &str) {
        let tol = (1e-6 * fd.abs()).max(1e-9);
        assert!(
            (analytic - fd).abs() <= tol,
            "{what}: analytic {analytic} vs fd {fd}"
        );
    }

    fn fd_check(inst: &QuboInstance, p: &GcsParams, s: f64) {
        const H: f64 = 1e-5;
        let engine = Engine::new(inst, Ansatz::Full).unwrap();
        let g = engine.gradient(p, s).unwrap();
        let f = |q: &GcsParams| engine.loss(q, s).unwrap();
        let n = p.n();
        for k in 0..n {
            for m in 0..3 {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.x[k][m] += H;
                b.x[k][m] -= H;
                assert_close(
                    g.x[k][m],
                    (f(&a) - f(&b)) / (2.0 * H),
                    &format!("x[{k}][{m}]"),
                );
                let (mut a, mut b) = (p.clone(), p.clone());
                a.y[k][m] += H;
                b.y[k][m] -= H;
                assert_close(
                    g.y[k][m],
                    (f(&a) - f(&b)) / (2.0 * H),
                    &format!("y[{k}][{m}]"),
                );
            }
            assert_eq!(g.m(k, k), 0.0);
            for l in (k + 1)..n {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.set_m(k, l, p.m(k, l) + H);
                b.set_m(k, l, p.m(k, l) - H);
                assert_close(
                    g.m(k, l),
                    (f(&a) - f(&b)) / (2.0 * H),
                    &format!("M[{k}][{l}]"),
                );
                assert_eq!(g.m(k, l), g.m(l, k));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::seeded(13);
        for n in 2..=5 {
            let inst = random_instance(n, 0.8, &mut rng);
            let p = GcsParams::random(n, 1.0, 0.5, &mut rng);
            fd_check(&inst, &p, rng.random_range(0.0..1.0));
        }
    }

    #[test]
    fn gradient_at_endpoints() {
        let mut rng = rng::seeded(4);
        let inst = random_instance(4, 1.0, &mut rng);
        let p = GcsParams::random(4, 0.8, 0.3, &mut rng);
        fd_check(&inst, &p, 0.0);
        fd_check(&inst, &p, 1.0);
    }

    #[test]
    fn stationary_at_plus_state() {
        let mut rng = rng::seeded(1);
        let inst = random_instance(4, 1.0, &mut rng);
        let g = gradient(&GcsParams::zeros(4), 0.0, &inst).unwrap();
        for row in &g.x {
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn isolated_spin_has_zero_m_gradient() {
        let inst = QuboInstance::new(
            4,
            [(0, 1, 0.8), (1, 2, -1.1)],
            vec![0.0; 4],
            0.0,
            Boundary::None,
        )
        .unwrap();
        let mut rng = rng::seeded(6);
        let mut p = GcsParams::random(4, 0.9, 0.0, &mut rng);
        p.set_m(0, 1, 0.3);
        p.set_m(1, 2, -0.2);
        p.y = vec![[0.0; 3]; 4];
        let g = gradient(&p, 1.0, &inst).unwrap();
        for k in 0..4 {
            assert_eq!(g.m(3, k), 0.0);
        }
        fd_check(&inst, &p, 1.0);
        // a rotated readout frame couples the isolated spin's phase in
        p.y[0] = [0.3, -0.2, 0.5];
        fd_check(&inst, &p, 1.0);
    }

    #[test]
    fn restricted_ansatz_gradients_agree_with_full_on_their_blocks() {
        let mut rng = rng::seeded(9);
        let inst = random_instance(5, 0.5, &mut rng);
        let mut p = GcsParams::random(5, 1.0, 0.0, &mut rng);
        for b in inst.bonds() {
            p.set_m(b.i, b.j, rng.random_range(-0.5..0.5));
        }
        let full = Engine::new(&inst, Ansatz::Full)
            .unwrap()
            .evaluate(&p, 0.6, true)
            .unwrap();
        let sparse = Engine::new(&inst, Ansatz::SparseM)
            .unwrap()
            .evaluate(&p, 0.6, true)
            .unwrap();
        let gf = full.gradient.unwrap();
        let gs = sparse.gradient.unwrap();
        assert!((full.loss - sparse.loss).abs() < 1e-13);
        for k in 0..5 {
            for m in 0..3 {
                assert!((gf.x[k][m] - gs.x[k][m]).abs() < 1e-12);
                assert!((gf.y[k][m] - gs.y[k][m]).abs() < 1e-12);
            }
        }
        for b in inst.bonds() {
            assert!((gf.m(b.i, b.j) - gs.m(b.i, b.j)).abs() < 1e-12);
        }

        let q = GcsParams::random(5, 1.0, 0.0, &mut rng);
        let full = Engine::new(&inst, Ansatz::Full)
            .unwrap()
            .gradient(&q, 0.3)
            .unwrap();
        let prod = Engine::new(&inst, Ansatz::Product)
            .unwrap()
            .gradient(&q, 0.3)
            .unwrap();
        for k in 0..5 {
            for m in 0..3 {
                assert!((full.x[k][m] - prod.x[k][m]).abs() < 1e-12);
            }
        }
        assert!(prod.m.iter().all(|&v| v == 0.0));
        assert!(prod.y.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn result_does_not_depend_on_thread_count() {
        let inst = crate::qubo::gen_ea3d(3, 2, Boundary::Periodic).unwrap();
        let mut rng = rng::seeded(10);
        let p = GcsParams::random(inst.n(), 0.5, 0.05, &mut rng);
        let engine = Engine::new(&inst, Ansatz::Full).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| engine.evaluate(&p, 0.4, true).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.gradient, b.gradient);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut c = Compensated::default();
        c.add(1e16);
        for _ in 0..10 {
            c.add(1.0);
        }
        c.add(-1e16);
        assert_eq!(c.value(), 10.0);
    }
}
