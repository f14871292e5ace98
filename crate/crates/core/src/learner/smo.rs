//! Sequential minimal optimization for box- and equality-constrained SVM duals.
//!
//! Solves
//!
//! ```text
//! min_a  0.5 a'Qa + p'a   s.t.  y'a = 0,  0 <= a_t <= C_t,
//! ```
//!
//! with `y_t = +-1` and `Q_st = y_s y_t K(x_s, x_t)`, by repeatedly optimizing the
//! maximal KKT-violating pair. Classification and epsilon-regression both reduce to
//! this form; regression uses two variables per training sample.

use std::collections::VecDeque;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::Kernel;

/// Curvature used when a pair has non-positive second derivative.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoConfig {
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// `None` picks `max(10_000_000, 100 * n_variables)`.
    pub max_iterations: Option<usize>,
    /// Bound on the kernel-row cache.
    pub cache_bytes: usize,
    /// Record the dual objective after every pair update.
    pub track_objective: bool,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tolerance: 1e-3,
            max_iterations: None,
            cache_bytes: 256 << 20,
            track_objective: false,
        }
    }
}

/// Lazily computed kernel rows over the base samples, evicted first-in first-out
/// once the byte budget is spent.
struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    kernel: Kernel,
    slots: Vec<Option<Rc<Vec<f64>>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], kernel: Kernel, cache_bytes: usize) -> Self {
        let row_bytes = (x.len() * std::mem::size_of::<f64>()).max(1);
        KernelRows {
            x,
            kernel,
            slots: vec![None; x.len()],
            order: VecDeque::new(),
            capacity: (cache_bytes / row_bytes).max(2),
        }
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(r) = &self.slots[i] {
            return Rc::clone(r);
        }
        let xi = &self.x[i];
        let row: Rc<Vec<f64>> = Rc::new(self.x.iter().map(|xj| self.kernel.eval(xi, xj)).collect());
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.slots[old] = None;
            }
        }
        self.order.push_back(i);
        self.slots[i] = Some(Rc::clone(&row));
        row
    }
}

/// A dual problem over `y.len()` variables; variable `t` refers to base sample
/// `base[t]`.
pub(crate) struct DualProblem<'a> {
    pub x: &'a [Vec<f64>],
    pub base: Vec<usize>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Maximal KKT violation `m(a) - M(a)` at the returned point (0 if satisfied).
    pub kkt_gap: f64,
    pub objective_trace: Vec<f64>,
}

struct State<'p> {
    problem: &'p DualProblem<'p>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl State<'_> {
    fn in_up(&self, t: usize) -> bool {
        if self.problem.y[t] > 0.0 {
            self.alpha[t] < self.problem.upper[t]
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.problem.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.problem.upper[t]
        }
    }

    /// Maximal violating pair `(i, j, m - M)`.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let y = &self.problem.y;
        let (mut i, mut m) = (None, f64::NEG_INFINITY);
        let (mut j, mut big_m) = (None, f64::INFINITY);
        for t in 0..self.alpha.len() {
            let v = -y[t] * self.grad[t];
            if self.in_up(t) && v > m {
                m = v;
                i = Some(t);
            }
            if self.in_low(t) && v < big_m {
                big_m = v;
                j = Some(t);
            }
        }
        Some((i?, j?, m - big_m))
    }

    fn objective(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .zip(&self.problem.p)
            .map(|((a, g), p)| a * (g + p))
            .sum::<f64>()
    }

    fn rho(&self) -> f64 {
        let (y, upper) = (&self.problem.y, &self.problem.upper);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut free_sum) = (0usize, 0.0);
        for t in 0..self.alpha.len() {
            let yg = y[t] * self.grad[t];
            let at_upper = self.alpha[t] >= upper[t];
            let at_lower = self.alpha[t] <= 0.0;
            if at_upper {
                if y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower {
                if y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else {
            0.5 * (ub + lb)
        }
    }
}

/// Largest value and the first index holding it.
fn first_max(v: &[f64]) -> (usize, f64) {
    let mut acc = [f64::NEG_INFINITY; 8];
    let chunks = v.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] = if c[k] > acc[k] { c[k] } else { acc[k] };
        }
    }
    let mut best = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for &x in tail {
        best = if x > best { x } else { best };
    }
    (v.iter().position(|&x| x == best).unwrap_or(0), best)
}

pub(crate) fn solve(problem: &DualProblem<'_>, kernel: Kernel, config: &SmoConfig) -> SmoSolution {
    let n = problem.y.len();
    let n_base = problem.x.len();
    assert!(
        n.is_multiple_of(n_base) && problem.base.iter().enumerate().all(|(t, &b)| b == t % n_base),
        "variables must cycle through the base samples in order"
    );
    let mut rows = KernelRows::new(problem.x, kernel, config.cache_bytes);
    let diag: Vec<f64> = problem
        .base
        .iter()
        .map(|&b| kernel.eval(&problem.x[b], &problem.x[b]))
        .collect();
    let mut st = State {
        problem,
        alpha: vec![0.0; n],
        grad: problem.p.clone(),
    };
    let max_iterations = config.max_iterations.unwrap_or((100 * n).max(10_000_000));
    let mut trace = Vec::new();
    if config.track_objective {
        trace.push(st.objective());
    }

    let (y, upper, base) = (&problem.y, &problem.upper, &problem.base);
    let mut iterations = 0;
    let mut converged = false;
    let mut up_score = vec![0.0; n];
    let mut low_score = vec![0.0; n];
    let mut pair = st.select_pair();
    loop {
        let Some((i, j, gap)) = pair else {
            converged = true;
            break;
        };
        if gap < config.tolerance {
            converged = true;
            break;
        }
        if iterations >= max_iterations {
            break;
        }
        iterations += 1;

        let ki = rows.row(base[i]);
        let kj = rows.row(base[j]);
        let q_ij = y[i] * y[j] * ki[base[j]];
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (st.alpha[i], st.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);

        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-st.grad[i] - st.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (st.grad[i] - st.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        st.alpha[i] = ai;
        st.alpha[j] = aj;

        let (si, sj) = (y[i] * (ai - old_i), y[j] * (aj - old_j));
        let n_base = ki.len();
        for start in (0..n).step_by(n_base) {
            let end = start + n_base;
            let span = st.grad[start..end]
                .iter_mut()
                .zip(&st.alpha[start..end])
                .zip(&y[start..end])
                .zip(&upper[start..end])
                .zip(ki.iter().zip(kj.iter()))
                .zip(up_score[start..end].iter_mut().zip(&mut low_score[start..end]));
            for (((((g, &a), &yt), &ut), (&kit, &kjt)), (us, ls)) in span {
                *g += yt * (si * kit + sj * kjt);
                let v = -yt * *g;
                let (below, above, positive) = (a < ut, a > 0.0, yt > 0.0);
                let is_up = (positive & below) | (!positive & above);
                let is_low = (positive & above) | (!positive & below);
                *us = if is_up { v } else { f64::NEG_INFINITY };
                *ls = if is_low { -v } else { f64::NEG_INFINITY };
            }
        }
        let (up, m) = first_max(&up_score);
        let (low, neg_big_m) = first_max(&low_score);
        let (up, low) = if m > f64::NEG_INFINITY && neg_big_m > f64::NEG_INFINITY {
            (up, low)
        } else {
            (usize::MAX, usize::MAX)
        };
        let big_m = -neg_big_m;
        pair = (up != usize::MAX && low != usize::MAX).then_some((up, low, m - big_m));
        if config.track_objective {
            trace.push(st.objective());
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without meeting tolerance");
    }

    let kkt_gap = pair.map_or(0.0, |(_, _, g)| g.max(0.0));
    SmoSolution {
        rho: st.rho(),
        objective: st.objective(),
        alpha: st.alpha,
        iterations,
        converged,
        kkt_gap,
        objective_trace: trace,
    }
}
