//! Placement optimization: feasible initialization, Adam, the minibatch
//! loop with moving-average convergence, and thread co-optimization.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomyModel;
use crate::constraints::{self, ObjectiveBreakdown, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::forward::TargetImage;
use crate::geom::{norm, scale, Vec3};
use crate::layout::{ElectrodeLayout, Thread};

/// Moving-average window for convergence and minibatch best tracking.
pub const CONVERGENCE_WINDOW: usize = 20;
// Draws taken before the acceptance rate is checked.
const RATE_CHECK_DRAWS: u64 = 1_000_000;
const MIN_INIT_ACCEPTANCE: f64 = 1e-4;
/// Stream selectors so that initialization and batch order use
/// independent random sequences for the same seed.
const INIT_STREAM: u64 = 1;
const ORDER_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    /// One bias-corrected Adam update of `params` in place. The state is
    /// untouched when the gradient is rejected.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam state has {} entries, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(state: &AdamState, params: &[f64], grads: &[f64]) -> Result<(AdamState, Vec<f64>)> {
    let mut s = state.clone();
    let mut p = params.to_vec();
    s.update(&mut p, grads)?;
    Ok((s, p))
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

fn sample_feasible(anatomy: &AnatomyModel, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::invalid("electrode count must be >= 1"));
    }
    let (lo, hi) = anatomy.gm_sdf().bounds();
    let mut out = Vec::with_capacity(n);
    let mut draws: u64 = 0;
    while out.len() < n {
        let p = [0, 1, 2].map(|a| if hi[a] > lo[a] { rng.random_range(lo[a]..hi[a]) } else { lo[a] });
        draws += 1;
        if anatomy.sdf(p).0 <= 0.0 {
            out.push(p);
        }
        if draws >= RATE_CHECK_DRAWS && (out.len() as f64) < MIN_INIT_ACCEPTANCE * draws as f64 {
            return Err(Error::InfeasibleRegion(format!(
                "{} of {draws} uniform draws landed in gray matter",
                out.len()
            )));
        }
    }
    Ok(out)
}

/// `n` points drawn uniformly from the gray-matter region by rejection in
/// the field's bounding box.
pub fn init_layout(anatomy: &AnatomyModel, n: usize, seed: u64) -> Result<ElectrodeLayout> {
    Ok(ElectrodeLayout::Free(sample_feasible(anatomy, n, &mut init_rng(seed))?))
}

/// Threads with entries drawn like [`init_layout`] and directions along
/// the local inward normal (negative SDF gradient).
pub fn init_threads(
    anatomy: &AnatomyModel,
    n_insert: usize,
    m: usize,
    spacing: f64,
    seed: u64,
) -> Result<ElectrodeLayout> {
    if m == 0 {
        return Err(Error::invalid("electrodes per thread must be >= 1"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid(format!("thread spacing must be > 0, got {spacing}")));
    }
    let entries = sample_feasible(anatomy, n_insert, &mut init_rng(seed))?;
    let threads = entries
        .into_iter()
        .map(|entry| {
            let g = anatomy.sdf(entry).1;
            let n = norm(g);
            let direction = if n > 1e-9 { scale(g, -1.0 / n) } else { [0.0, 0.0, -1.0] };
            Thread { entry, direction, spacing, count: m }
        })
        .collect();
    Ok(ElectrodeLayout::Threads(threads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub breakdown: ObjectiveBreakdown,
    pub violations: usize,
    /// Largest displacement of any 3-parameter group in this step, mm.
    pub step_norm: f64,
    /// Wall time of the iteration, milliseconds.
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Iteration whose parameters were returned.
    pub best_iter: Option<usize>,
}

impl OptimizationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Running minimum of the total objective.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.breakdown.total);
                best
            })
            .collect()
    }
}

/// One objective evaluation: breakdown, parameter gradient and the
/// current violation count.
pub struct Evaluation {
    pub breakdown: ObjectiveBreakdown,
    pub grads: Vec<f64>,
    pub violations: usize,
}

fn window_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Adam over a flat parameter vector with cyclic minibatches from a
/// seed-shuffled dataset.
///
/// With full batches the returned parameters are those with the lowest
/// total; with minibatches the lowest moving average of the total over
/// the last [`CONVERGENCE_WINDOW`] iterations selects them.
pub fn run_adam<F>(
    initial: Vec<f64>,
    dataset: &[TargetImage],
    config: &ObjectiveConfig,
    mut eval: F,
) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: FnMut(&[f64], &[&TargetImage]) -> Result<Evaluation>,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(ORDER_STREAM);
    order.shuffle(&mut rng);
    let batch_len = config.batch_size.min(dataset.len());
    let full_batch = batch_len == dataset.len();

    let mut params = initial;
    let mut adam = AdamState::new(params.len(), config.lr);
    let mut trace = OptimizationTrace::default();
    let mut totals: Vec<f64> = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), None);
    let mut cursor = 0;
    let mut calm = 0;

    for iter in 0..config.max_iters {
        let start = Instant::now();
        let batch: Vec<&TargetImage> = (0..batch_len).map(|b| &dataset[order[(cursor + b) % order.len()]]).collect();
        cursor = (cursor + batch_len) % order.len();
        let ev = eval(&params, &batch)?;
        totals.push(ev.breakdown.total);

        let score = if full_batch {
            ev.breakdown.total
        } else {
            let from = totals.len().saturating_sub(CONVERGENCE_WINDOW);
            window_mean(&totals[from..])
        };
        if score < best.0 || best.2.is_none() {
            best = (score, params.clone(), Some(iter));
        }

        let before = params.clone();
        adam.update(&mut params, &ev.grads)?;
        let step_norm = before
            .chunks(3)
            .zip(params.chunks(3))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        trace.records.push(TraceRecord {
            iter,
            breakdown: ev.breakdown,
            violations: ev.violations,
            step_norm,
            ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if totals.len() >= 2 * CONVERGENCE_WINDOW {
            let n = totals.len();
            let cur = window_mean(&totals[n - CONVERGENCE_WINDOW..]);
            let prev = window_mean(&totals[n - 2 * CONVERGENCE_WINDOW..n - CONVERGENCE_WINDOW]);
            let diff = (cur - prev).abs();
            if diff == 0.0 || diff <= config.tol * prev.abs() {
                calm += 1;
            } else {
                calm = 0;
            }
            // Minibatch noise can satisfy a single check by chance.
            if calm >= CONVERGENCE_WINDOW {
                trace.converged = true;
                break;
            }
        }
    }
    trace.best_iter = best.2;
    Ok((best.1, trace))
}

/// Optimize `initial` against the total objective.
pub fn optimize_from(
    anatomy: &AnatomyModel,
    dataset: &[TargetImage],
    initial: ElectrodeLayout,
    config: &ObjectiveConfig,
) -> Result<(ElectrodeLayout, OptimizationTrace)> {
    initial.validate()?;
    let mut layout = initial;
    let (params, trace) = run_adam(layout.params(), dataset, config, |p, batch| {
        let mut l = layout.clone();
        l.set_params(p);
        let positions = l.positions()?;
        let (breakdown, g) = constraints::objective_at_positions(&positions, anatomy, batch, config)?;
        Ok(Evaluation {
            breakdown,
            grads: l.chain_gradient(&g)?,
            violations: constraints::violations_at(&positions, anatomy, config.tau).0,
        })
    })?;
    layout.set_params(&params);
    Ok((layout, trace))
}

/// Percept-aware placement of `n` free electrodes.
pub fn optimize_placement(
    anatomy: &AnatomyModel,
    dataset: &[TargetImage],
    n: usize,
    config: &ObjectiveConfig,
) -> Result<(ElectrodeLayout, OptimizationTrace)> {
    config.validate()?;
    let init = init_layout(anatomy, n, config.seed)?;
    optimize_from(anatomy, dataset, init, config)
}

/// Co-optimize `n_insert` threads of `m` electrodes each, `spacing` mm
/// apart, over entry points and insertion directions.
pub fn optimize_threads(
    anatomy: &AnatomyModel,
    dataset: &[TargetImage],
    config: &ObjectiveConfig,
    n_insert: usize,
    m: usize,
    spacing: f64,
) -> Result<(ElectrodeLayout, OptimizationTrace)> {
    config.validate()?;
    let init = init_threads(anatomy, n_insert, m, spacing, config.seed)?;
    optimize_from(anatomy, dataset, init, config)
}
