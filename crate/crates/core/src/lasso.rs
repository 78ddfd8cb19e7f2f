//! l1-regularized decomposition `argmin |v - D omega|^2 + lambda |omega|_1`.
//!
//! Solved with an accelerated proximal gradient method (Nesterov momentum,
//! function-value restart) started from zero. The step is `1/L` with
//! `L = 2 sigma_max(D)^2` estimated by power iteration on `D^T D`. Optimality
//! is certified by the subgradient (KKT) residual rather than by iterate
//! movement, so the result does not depend on the choice of solver.
//!
//! Every few iterations the iterate is polished: it is first moved along null
//! directions of its support columns until those columns are independent
//! (first-order steps crawl along such directions), then the stationarity
//! equations restricted to that support and sign pattern are solved exactly.
//! A polished point replaces the iterate only when its KKT residual is lower
//! and its objective is not higher, which removes the slow tail on
//! ill-conditioned dictionaries.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dictionary::ConcatDictionary;
use crate::error::{check_dim, Result, SdbeError};
use crate::feature::FeatureVector;
use crate::ridge::check_lambda;

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
pub const DEFAULT_OBJ_TOL: f64 = 1e-10;

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-10;
/// Consecutive stalled iterations before giving up. An iteration is stalled
/// when the relative objective change is below `obj_tol` and the KKT residual
/// is no better than the best seen so far.
const STALL_LIMIT: usize = 50;
/// Iterations between sign-pattern checkpoints. A refinement is attempted
/// when the pattern matches the previous checkpoint.
const REFINE_EVERY: usize = 20;
/// Support Gram eigenvalues below this fraction of the largest count as null.
const NULL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Settings {
    pub lambda: f64,
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub obj_tol: f64,
}

impl L1Settings {
    pub fn new(lambda: f64) -> Self {
        L1Settings {
            lambda,
            max_iters: DEFAULT_MAX_ITERS,
            kkt_tol: DEFAULT_KKT_TOL,
            obj_tol: DEFAULT_OBJ_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.max_iters == 0 {
            return Err(SdbeError::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.kkt_tol > 0.0) || !(self.obj_tol > 0.0) {
            return Err(SdbeError::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub omega: DVector<f64>,
    pub iterations: usize,
    /// Largest per-coordinate violation of the stationarity conditions.
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

impl L1Solution {
    /// Turns an uncertified iterate into [`SdbeError::NotConverged`].
    pub fn certified(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(SdbeError::NotConverged {
                iterations: self.iterations,
                kkt_residual: self.kkt_residual,
            })
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// KKT violation given the smooth gradient `g = 2 D^T (D omega - v)`.
fn kkt_from_gradient(grad: &DVector<f64>, omega: &DVector<f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(omega.iter())
        .map(|(&g, &w)| {
            if w > 0.0 {
                (g + lambda).abs()
            } else if w < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn kkt_residual(
    d: &ConcatDictionary,
    v: &FeatureVector,
    omega: &DVector<f64>,
    lambda: f64,
) -> Result<f64> {
    check_dim(d.dim(), v.dim())?;
    check_dim(d.ncols(), omega.len())?;
    let d = d.matrix();
    let grad = d.tr_mul(&(d * omega - v.values())) * 2.0;
    Ok(kkt_from_gradient(&grad, omega, lambda))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
fn power_iteration(gram: &DMatrix<f64>) -> f64 {
    let n = gram.ncols();
    // deterministic start with a slight tilt so it is not orthogonal to
    // structured top eigenvectors
    let mut x = DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
    x /= x.norm();
    let mut mu = 0.0;
    for _ in 0..POWER_ITERS {
        let y = gram * &x;
        let next = x.dot(&y);
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        x = y / ny;
        if (next - mu).abs() <= POWER_TOL * next.abs() {
            mu = next;
            break;
        }
        mu = next;
    }
    // the Rayleigh quotient of the last iterate is never worse than `mu`
    mu.max(x.dot(&(gram * &x)))
}

/// Lasso solver with the dictionary Gram matrix and step size precomputed,
/// so repeated queries against one dictionary share the setup cost.
#[derive(Debug, Clone)]
pub struct LassoSolver {
    d: DMatrix<f64>,
    gram: DMatrix<f64>,
    lipschitz: f64,
    settings: L1Settings,
}

enum Refined {
    Point(Iterate),
    SignFlip,
    Singular,
}

struct Iterate {
    x: DVector<f64>,
    /// `G x`
    gx: DVector<f64>,
    f: f64,
}

impl LassoSolver {
    pub fn new(d: &DMatrix<f64>, settings: L1Settings) -> Result<Self> {
        settings.validate()?;
        if d.iter().any(|x| !x.is_finite()) {
            return Err(SdbeError::NumericalFailure(
                "dictionary contains non-finite entries".into(),
            ));
        }
        let gram = d.tr_mul(d);
        let top = power_iteration(&gram);
        let lipschitz = if top > 0.0 { 2.0 * top } else { 1.0 };
        Ok(LassoSolver {
            d: d.clone(),
            gram,
            lipschitz,
            settings,
        })
    }

    pub fn settings(&self) -> &L1Settings {
        &self.settings
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn solve(&self, v: &DVector<f64>) -> Result<L1Solution> {
        self.run(v, None)
    }

    /// Like [`LassoSolver::solve`], also returning the objective after every
    /// iteration (starting with the objective at zero).
    pub fn solve_traced(&self, v: &DVector<f64>) -> Result<(L1Solution, Vec<f64>)> {
        let mut trace = Vec::new();
        let sol = self.run(v, Some(&mut trace))?;
        Ok((sol, trace))
    }

    /// `G x` using only the nonzero coordinates of `x`.
    fn gram_times(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                out.axpy(xj, &self.gram.column(j), 1.0);
            }
        }
        out
    }

    fn objective(&self, v: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let mut r = v.clone();
        let mut l1 = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                r.axpy(-xj, &self.d.column(j), 1.0);
                l1 += xj.abs();
            }
        }
        r.norm_squared() + self.settings.lambda * l1
    }

    fn prox_step(
        &self,
        v: &DVector<f64>,
        b: &DVector<f64>,
        point: &DVector<f64>,
        g_point: &DVector<f64>,
        lip: f64,
    ) -> Iterate {
        let lambda = self.settings.lambda;
        let x = DVector::from_fn(point.len(), |j, _| {
            let grad = 2.0 * (g_point[j] - b[j]);
            soft_threshold(point[j] - grad / lip, lambda / lip)
        });
        let gx = self.gram_times(&x);
        let f = self.objective(v, &x);
        Iterate { x, gx, f }
    }

    fn kkt(&self, it: &Iterate, b: &DVector<f64>) -> f64 {
        let grad = (&it.gx - b) * 2.0;
        kkt_from_gradient(&grad, &it.x, self.settings.lambda)
    }

    /// Exact minimizer over a support with fixed signs:
    /// `G_SS w = b_S - lambda/2 sign(x_S)`.
    fn refine_on(
        &self,
        v: &DVector<f64>,
        b: &DVector<f64>,
        x: &DVector<f64>,
        support: &[usize],
    ) -> Refined {
        let k = support.len();
        if k == 0 || k > self.d.nrows() {
            return Refined::Singular;
        }
        let half = 0.5 * self.settings.lambda;
        let g = DMatrix::from_fn(k, k, |i, j| self.gram[(support[i], support[j])]);
        let rhs = DVector::from_fn(k, |i, _| b[support[i]] - half * x[support[i]].signum());
        let Some(chol) = Cholesky::new(g) else {
            return Refined::Singular;
        };
        let w = chol.solve(&rhs);
        if support
            .iter()
            .zip(w.iter())
            .any(|(&j, &wj)| wj.signum() != x[j].signum() || wj == 0.0)
        {
            return Refined::SignFlip;
        }
        let mut out = DVector::zeros(x.len());
        for (&j, &wj) in support.iter().zip(w.iter()) {
            out[j] = wj;
        }
        let gx = self.gram_times(&out);
        let f = self.objective(v, &out);
        Refined::Point(Iterate { x: out, gx, f })
    }

    /// Moves `x` along null directions of its support columns, always the
    /// way that does not increase `|x|_1`, zeroing one coordinate per move,
    /// until no null direction is left. The residual `v - D x` is unchanged.
    /// The null space is computed once and then updated by eliminating each
    /// zeroed coordinate from the remaining basis vectors.
    fn reduce_to_basic(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut x = x.clone();
        let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 0.0).collect();
        let k = support.len();
        if k == 0 {
            return x;
        }
        let g = DMatrix::from_fn(k, k, |i, j| self.gram[(support[i], support[j])]);
        let eig = g.symmetric_eigen();
        let cutoff = NULL_REL_TOL * eig.eigenvalues.amax();
        let mut basis: Vec<DVector<f64>> = (0..k)
            .filter(|&c| eig.eigenvalues[c] <= cutoff)
            .map(|c| eig.eigenvectors.column(c).clone_owned())
            .collect();
        while let Some(mut z) = basis.pop() {
            let slope: f64 = (0..k).map(|i| x[support[i]].signum() * z[i]).sum();
            if slope > 0.0 {
                z = -z;
            }
            let hit = |z: &DVector<f64>| {
                (0..k)
                    .filter(|&i| x[support[i]] * z[i] < 0.0)
                    .map(|i| (i, -x[support[i]] / z[i]))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            };
            let (i, t) = match hit(&z) {
                Some(h) => h,
                None if slope == 0.0 => match hit(&-&z) {
                    Some(h) => {
                        z = -z;
                        h
                    }
                    None => continue,
                },
                None => continue,
            };
            for r in 0..k {
                let j = support[r];
                if x[j] != 0.0 {
                    x[j] = if r == i { 0.0 } else { x[j] + t * z[r] };
                }
            }
            // keep only null directions that leave coordinate i at zero
            if let Some(p) =
                (0..basis.len()).max_by(|&a, &b| basis[a][i].abs().total_cmp(&basis[b][i].abs()))
            {
                if basis[p][i] != 0.0 {
                    let pivot = basis.swap_remove(p);
                    for q in basis.iter_mut() {
                        let f = q[i] / pivot[i];
                        q.axpy(-f, &pivot, 1.0);
                        q[i] = 0.0;
                    }
                }
            }
        }
        x
    }

    /// Solves exactly on the support of `it`; when those columns are
    /// dependent, first reduces `it` to a basic point. Returns the candidate
    /// when its KKT residual beats `kkt` without raising the objective.
    fn refine(
        &self,
        v: &DVector<f64>,
        b: &DVector<f64>,
        it: &Iterate,
        kkt: f64,
    ) -> Option<(Iterate, f64)> {
        let support = |x: &DVector<f64>| (0..x.len()).filter(|&j| x[j] != 0.0).collect::<Vec<_>>();
        let cand = match self.refine_on(v, b, &it.x, &support(&it.x)) {
            Refined::Point(c) => c,
            Refined::SignFlip => return None,
            Refined::Singular => {
                let x = self.reduce_to_basic(&it.x);
                match self.refine_on(v, b, &x, &support(&x)) {
                    Refined::Point(c) => c,
                    _ => return None,
                }
            }
        };
        let r = self.kkt(&cand, b);
        (r < kkt && cand.f <= it.f + 1e-13 * it.f.max(1e-300)).then_some((cand, r))
    }

    fn run(&self, v: &DVector<f64>, mut trace: Option<&mut Vec<f64>>) -> Result<L1Solution> {
        check_dim(self.d.nrows(), v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SdbeError::NonFinite);
        }
        let s = &self.settings;
        let n = self.d.ncols();
        let b = self.d.tr_mul(v);
        let mut cur = Iterate {
            x: DVector::zeros(n),
            gx: DVector::zeros(n),
            f: v.norm_squared(),
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(cur.f);
        }
        let mut kkt = self.kkt(&cur, &b);
        if kkt <= s.kkt_tol {
            return Ok(L1Solution {
                omega: cur.x,
                iterations: 0,
                kkt_residual: kkt,
                objective: cur.f,
                converged: true,
            });
        }

        let mut lip = self.lipschitz;
        let mut y = cur.x.clone();
        let mut gy = cur.gx.clone();
        let mut theta = 1.0f64;
        let mut stalled = 0usize;
        let mut best_kkt = kkt;
        let mut last_signs: Vec<i8> = Vec::new();
        let mut iterations = 0usize;

        for k in 1..=s.max_iters {
            iterations = k;
            let slack = 1e-13 * cur.f.max(1e-300);
            let mut next = self.prox_step(v, &b, &y, &gy, lip);
            if next.f > cur.f + slack {
                // momentum overshot: restart with a plain step from the current point
                theta = 1.0;
                next = self.prox_step(v, &b, &cur.x, &cur.gx, lip);
                let mut doublings = 0;
                while next.f > cur.f + slack && doublings < 60 {
                    // power iteration underestimated sigma_max
                    lip *= 2.0;
                    doublings += 1;
                    next = self.prox_step(v, &b, &cur.x, &cur.gx, lip);
                }
                if next.f > cur.f {
                    next = Iterate {
                        x: cur.x.clone(),
                        gx: cur.gx.clone(),
                        f: cur.f,
                    };
                }
                y = next.x.clone();
                gy = next.gx.clone();
            } else {
                let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                let beta = (theta - 1.0) / theta_next;
                y = &next.x + (&next.x - &cur.x) * beta;
                gy = &next.gx + (&next.gx - &cur.gx) * beta;
                theta = theta_next;
            }
            let rel_change = (cur.f - next.f).abs() / cur.f.max(1e-300);
            cur = next;
            if let Some(t) = trace.as_deref_mut() {
                t.push(cur.f);
            }
            kkt = self.kkt(&cur, &b);
            if kkt <= s.kkt_tol {
                break;
            }
            let stalling = rel_change <= s.obj_tol && kkt >= best_kkt;
            let checkpoint = k % REFINE_EVERY == 0;
            let settled = checkpoint && {
                let signs: Vec<i8> = cur
                    .x
                    .iter()
                    .map(|&x| (x > 0.0) as i8 - (x < 0.0) as i8)
                    .collect();
                std::mem::replace(&mut last_signs, signs) == last_signs
            };
            if settled || (stalling && stalled + 1 >= STALL_LIMIT) {
                if let Some((r, r_kkt)) = self.refine(v, &b, &cur, kkt) {
                    cur = r;
                    kkt = r_kkt;
                    y = cur.x.clone();
                    gy = cur.gx.clone();
                    theta = 1.0;
                    stalled = 0;
                    best_kkt = best_kkt.min(kkt);
                    if kkt <= s.kkt_tol {
                        break;
                    }
                    continue;
                }
            }
            if stalling {
                stalled += 1;
                if stalled >= STALL_LIMIT {
                    break;
                }
            } else {
                stalled = 0;
            }
            best_kkt = best_kkt.min(kkt);
        }
        Ok(L1Solution {
            omega: cur.x,
            iterations,
            kkt_residual: kkt,
            objective: cur.f,
            converged: kkt <= s.kkt_tol,
        })
    }
}

pub fn solve_l1(
    d: &ConcatDictionary,
    v: &FeatureVector,
    settings: L1Settings,
) -> Result<L1Solution> {
    check_dim(d.dim(), v.dim())?;
    LassoSolver::new(d.matrix(), settings)?.solve(v.values())
}
