//! Free-particle embedding trainer.
//!
//! Per epoch the temperature `tau` and the step size `alpha` come off their
//! schedules, membership strengths are rebuilt at the current temperature,
//! and `ceil(n/m)` minibatch iterations run. Each iteration samples `m`
//! indices uniformly with replacement, draws one neighbor per index from the
//! membership rows, and moves particles in two phases: first the repulsive
//! update over all batch pairs, then the attractive update evaluated at the
//! post-repulsion positions. Every per-pair gradient component is clamped to
//! `[-clip, clip]` before the step size is applied.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::affinity::{
    attractive_coeff, membership, q_embed, repulsive_coeff, EmbedKernelParams, MembershipTable,
};
use crate::error::{Error, Result};
use crate::geodesic::{
    local_scales, normalize_median, rescale_and_symmetrize, shortest_paths, truncate_ktilde,
    GlobalDistanceMatrix,
};
use crate::neighbors::{knn_graph, pairwise_l2};

/// Low-dimensional particle matrix, one row per input point.
pub type Embedding = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Geometric,
    Linear,
    Constant,
}

/// A per-epoch scalar schedule with fixed endpoints.
#[derive(Debug, Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    start: f64,
    end: f64,
    len: usize,
}

impl Schedule {
    pub fn geometric(start: f64, end: f64, len: usize) -> Self {
        assert!(start > 0.0 && end > 0.0 && len >= 1);
        Schedule { kind: ScheduleKind::Geometric, start, end, len }
    }

    pub fn linear(start: f64, end: f64, len: usize) -> Self {
        assert!(len >= 1);
        Schedule { kind: ScheduleKind::Linear, start, end, len }
    }

    pub fn constant(value: f64, len: usize) -> Self {
        assert!(len >= 1);
        Schedule { kind: ScheduleKind::Constant, start: value, end: value, len }
    }

    /// Geometric schedule written as a per-epoch decay factor.
    pub fn from_decay(start: f64, rate: f64, len: usize) -> Self {
        assert!(start > 0.0 && rate > 0.0 && len >= 1);
        let end = start * rate.powi(len as i32 - 1);
        Schedule { kind: ScheduleKind::Geometric, start, end, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, t: usize) -> f64 {
        let t = t.min(self.len - 1);
        if self.len == 1 {
            return self.start;
        }
        let frac = t as f64 / (self.len - 1) as f64;
        match self.kind {
            ScheduleKind::Constant => self.start,
            ScheduleKind::Linear => self.start + (self.end - self.start) * frac,
            ScheduleKind::Geometric => self.start * (self.end / self.start).powf(frac),
        }
    }
}

/// Training configuration shared by the transductive and inductive fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Weight of the repulsive half of the loss.
    pub lambda_e: f64,
    pub n_epoch: usize,
    /// Minibatch size m (sampling is with replacement).
    pub batch: usize,
    /// Neighbor count for the distance construction.
    pub k: usize,
    /// Per-pair gradient clamp.
    pub clip: f64,
    /// Initial particle step size and its per-epoch decay factor.
    pub alpha0: f64,
    pub alpha_decay: f64,
    /// Temperature endpoints of the annealing schedule.
    pub tau_start: f64,
    pub tau_end: f64,
    /// Disable annealing and hold the temperature at this value instead.
    pub fixed_tau: Option<f64>,
    /// Keep only this many smallest distances per row before the membership
    /// stage (a cheaper approximate sampler for large n).
    pub k_tilde: Option<usize>,
    /// Treat every repulsive weight (1 - mu_ij) as 1.
    pub neg_approx: bool,
    pub seed: u64,
    /// Embedding dimensionality.
    pub dim: usize,
    pub kernel: EmbedKernelParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda_e: 1.0,
            n_epoch: 300,
            batch: 100,
            k: 15,
            clip: 4.0,
            alpha0: 1.0,
            alpha_decay: 0.98,
            tau_start: 1.0,
            tau_end: 0.1,
            fixed_tau: None,
            k_tilde: None,
            neg_approx: false,
            seed: 0,
            dim: 2,
            kernel: EmbedKernelParams::default(),
        }
    }
}

impl FitConfig {
    pub fn tau_schedule(&self) -> Schedule {
        match self.fixed_tau {
            Some(t) => Schedule::constant(t, self.n_epoch),
            None => Schedule::geometric(self.tau_start, self.tau_end, self.n_epoch),
        }
    }

    pub fn alpha_schedule(&self) -> Schedule {
        Schedule::from_decay(self.alpha0, self.alpha_decay, self.n_epoch)
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if self.n_epoch == 0 {
            return Err(Error::invalid("n_epoch must be >= 1"));
        }
        if self.batch < 2 {
            return Err(Error::invalid("batch size must be >= 2"));
        }
        if n < self.batch.max(self.k + 1) {
            return Err(Error::invalid(format!(
                "need n >= max(K+1, batch) = {}, got n = {n}",
                self.batch.max(self.k + 1)
            )));
        }
        if self.tau_end > self.tau_start || self.tau_end <= 0.0 {
            return Err(Error::invalid("temperature endpoints must satisfy 0 < tau_end <= tau_start"));
        }
        if let Some(t) = self.fixed_tau {
            if t <= 0.0 {
                return Err(Error::invalid("fixed_tau must be positive"));
            }
        }
        if let Some(kt) = self.k_tilde {
            if kt == 0 || kt >= n {
                return Err(Error::invalid("k_tilde must satisfy 1 <= k_tilde <= n-1"));
            }
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be >= 1"));
        }
        Ok(())
    }
}

/// A particle in a minibatch: which row of the position matrix it lives in
/// and which data index its membership weights come from. In the
/// transductive trainer rows are data indices; the inductive trainer uses
/// batch-local rows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Slot {
    pub row: usize,
    pub data: usize,
}

/// Full objective value (diagonal excluded):
/// `-sum mu_ij log q_ij - lambda_e sum (1 - mu_ij) log(1 - q_ij)`.
pub fn loss_full(
    z: &ArrayView2<f64>,
    table: &MembershipTable,
    lambda_e: f64,
    kernel: &EmbedKernelParams,
) -> f64 {
    let n = z.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let zi = z.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = q_embed(zi.as_slice().unwrap(), z.row(j).as_slice().unwrap(), kernel);
            let mu = table.mu(i, j);
            total += -mu * q.ln() - lambda_e * (1.0 - mu) * (1.0 - q).ln();
        }
    }
    total
}

pub(crate) fn stochastic_loss_slots(
    z: &ArrayView2<f64>,
    slots: &[Slot],
    m: usize,
    table: &MembershipTable,
    lambda_e: f64,
    neg_approx: bool,
    kernel: &EmbedKernelParams,
) -> f64 {
    let mut total = 0.0;
    for k in 0..m {
        let (a, nb) = (&slots[k], &slots[m + k]);
        let q = q_embed(
            z.row(a.row).as_slice().unwrap(),
            z.row(nb.row).as_slice().unwrap(),
            kernel,
        );
        total += -table.row_sum(a.data) * q.ln();
    }
    for a in 0..m {
        for b in 0..m {
            if a == b || slots[a].data == slots[b].data {
                continue;
            }
            let q = q_embed(
                z.row(slots[a].row).as_slice().unwrap(),
                z.row(slots[b].row).as_slice().unwrap(),
                kernel,
            );
            let w = if neg_approx { 1.0 } else { 1.0 - table.mu(slots[a].data, slots[b].data) };
            total += -lambda_e * w * (1.0 - q).ln();
        }
    }
    total
}

/// Minibatch estimate of the objective: `s` are the sampled indices, `js[k]`
/// the neighbor drawn for `s[k]`, `z` the full particle matrix.
pub fn loss_stochastic(
    s: &[usize],
    js: &[usize],
    z: &ArrayView2<f64>,
    table: &MembershipTable,
    lambda_e: f64,
    kernel: &EmbedKernelParams,
) -> f64 {
    assert_eq!(s.len(), js.len());
    let slots: Vec<Slot> = s
        .iter()
        .chain(js.iter())
        .map(|&i| Slot { row: i, data: i })
        .collect();
    stochastic_loss_slots(z, &slots, s.len(), table, lambda_e, false, kernel)
}

/// One clipped two-phase particle move over a minibatch. `slots[..m]` are
/// the sampled indices, `slots[m..2m]` their drawn neighbors. Phase one
/// accumulates the repulsive gradient over all batch pairs and applies it;
/// phase two does the same for the attractive pairs at the moved positions.
///
/// The summand gradients carry the loss weights as written (the membership
/// mass of the sampled row on the attractive side, `lambda_e * (1 - mu)` on
/// the repulsive side). Clipping happens at two levels: each summand's
/// gradient component is clamped to `[-clip, clip]`, and so is the
/// accumulated per-particle phase gradient, so no particle moves more than
/// `alpha * clip` per coordinate per phase. Both trainers funnel through
/// this function.
#[allow(clippy::too_many_arguments)]
pub(crate) fn two_phase_move(
    z: &mut Array2<f64>,
    slots: &[Slot],
    m: usize,
    table: &MembershipTable,
    lambda_e: f64,
    neg_approx: bool,
    alpha: f64,
    clip: f64,
    kernel: &EmbedKernelParams,
) {
    let d = z.ncols();
    debug_assert_eq!(slots.len(), 2 * m);

    // Repulsive phase over the batch-by-batch pairs.
    let mut acc = vec![0.0f64; m * d];
    for a in 0..m {
        for b in (a + 1)..m {
            if slots[a].data == slots[b].data {
                continue;
            }
            let (ra, rb) = (slots[a].row, slots[b].row);
            let mut r2 = 0.0;
            for t in 0..d {
                let diff = z[[ra, t]] - z[[rb, t]];
                r2 += diff * diff;
            }
            let w = lambda_e
                * if neg_approx { 1.0 } else { 1.0 - table.mu(slots[a].data, slots[b].data) };
            let coeff = repulsive_coeff(r2.sqrt(), kernel);
            for t in 0..d {
                let g = (w * coeff * (z[[ra, t]] - z[[rb, t]])).clamp(-clip, clip);
                // The batch double sum visits each pair in both orders.
                acc[a * d + t] += 2.0 * g;
                acc[b * d + t] -= 2.0 * g;
            }
        }
    }
    for a in 0..m {
        let ra = slots[a].row;
        for t in 0..d {
            z[[ra, t]] -= alpha * acc[a * d + t].clamp(-clip, clip);
        }
    }

    // Attractive phase for each (index, sampled neighbor) pair, evaluated at
    // the post-repulsion positions.
    let mut acc = vec![0.0f64; 2 * m * d];
    for k in 0..m {
        let (a, nb) = (&slots[k], &slots[m + k]);
        if a.data == nb.data {
            continue;
        }
        let mut r2 = 0.0;
        for t in 0..d {
            let diff = z[[a.row, t]] - z[[nb.row, t]];
            r2 += diff * diff;
        }
        let w = table.row_sum(a.data);
        let coeff = attractive_coeff(r2.sqrt(), kernel);
        for t in 0..d {
            let g = (w * coeff * (z[[a.row, t]] - z[[nb.row, t]])).clamp(-clip, clip);
            acc[k * d + t] += g;
            acc[(m + k) * d + t] -= g;
        }
    }
    for (s, slot) in slots.iter().enumerate() {
        for t in 0..d {
            z[[slot.row, t]] -= alpha * acc[s * d + t].clamp(-clip, clip);
        }
    }
}

/// One epoch of minibatch updates; returns the mean stochastic loss over the
/// epoch's iterations (evaluated before each move).
pub fn sgd_epoch<R: Rng + ?Sized>(
    z: &mut Embedding,
    table: &MembershipTable,
    cfg: &FitConfig,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let n = z.nrows();
    let m = cfg.batch;
    let n_iter = n.div_ceil(m);
    let mut loss_sum = 0.0;
    let mut slots: Vec<Slot> = Vec::with_capacity(2 * m);
    for _ in 0..n_iter {
        slots.clear();
        for _ in 0..m {
            let i = rng.gen_range(0..n);
            slots.push(Slot { row: i, data: i });
        }
        for k in 0..m {
            let j = table.sample_neighbor(slots[k].data, rng)?;
            slots.push(Slot { row: j, data: j });
        }
        loss_sum += stochastic_loss_slots(
            &z.view(),
            &slots,
            m,
            table,
            cfg.lambda_e,
            cfg.neg_approx,
            &cfg.kernel,
        );
        two_phase_move(
            z,
            &slots,
            m,
            table,
            cfg.lambda_e,
            cfg.neg_approx,
            alpha,
            cfg.clip,
            &cfg.kernel,
        );
    }
    Ok(loss_sum / n_iter as f64)
}

/// Input to a fit: raw points (the distance construction runs first) or an
/// already normalized global distance matrix.
pub enum FitInput<'a> {
    Points(ArrayView2<'a, f64>),
    Distances(&'a GlobalDistanceMatrix),
}

impl<'a> FitInput<'a> {
    fn n(&self) -> usize {
        match self {
            FitInput::Points(x) => x.nrows(),
            FitInput::Distances(d) => d.n(),
        }
    }
}

/// Wall-clock totals per pipeline stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    /// Pairwise distances, neighbor graph, rescaling, shortest paths and
    /// median normalization.
    pub distance_secs: f64,
    /// Membership-table builds summed over epochs.
    pub membership_secs: f64,
    /// Minibatch optimization summed over epochs.
    pub optimize_secs: f64,
}

pub struct FitResult {
    pub embedding: Embedding,
    pub epoch_mean_loss: Vec<f64>,
    pub timings: StageTimings,
}

/// Run the distance construction (for point input), normalize the finite
/// distances to median 3, and build the global distance matrix used by the
/// epoch loop. Shared by both trainers.
pub(crate) fn prepare_distances(
    input: &FitInput,
    cfg: &FitConfig,
    timings: &mut StageTimings,
) -> Result<GlobalDistanceMatrix> {
    let started = Instant::now();
    let base = match input {
        FitInput::Points(x) => {
            let d2 = pairwise_l2(x);
            let g = knn_graph(&d2.view(), cfg.k)?;
            let scales = local_scales(&g);
            let local = rescale_and_symmetrize(&g, &scales)?;
            normalize_median(shortest_paths(&local), 3.0)?
        }
        FitInput::Distances(d) => (*d).clone(),
    };
    let out = match cfg.k_tilde {
        Some(kt) => truncate_ktilde(&base, kt),
        None => base,
    };
    timings.distance_secs += started.elapsed().as_secs_f64();
    Ok(out)
}

pub(crate) fn init_embedding(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Embedding {
    let mut z = Array2::zeros((n, dim));
    for i in 0..n {
        for t in 0..dim {
            let g: f64 = rng.sample(StandardNormal);
            z[[i, t]] = 0.01 * g;
        }
    }
    z
}

pub fn fit_transductive(input: FitInput, cfg: &FitConfig) -> Result<FitResult> {
    fit_transductive_with(input, cfg, |_, _, _| {})
}

/// Like [`fit_transductive`] but invokes `on_epoch(epoch, z, mean_loss)`
/// after every epoch (checkpointing, logging, convergence monitoring).
pub fn fit_transductive_with(
    input: FitInput,
    cfg: &FitConfig,
    mut on_epoch: impl FnMut(usize, &Embedding, f64),
) -> Result<FitResult> {
    let n = input.n();
    cfg.validate(n)?;
    let mut timings = StageTimings::default();
    let dglo = prepare_distances(&input, cfg, &mut timings)?;

    let tau_sch = cfg.tau_schedule();
    let alpha_sch = cfg.alpha_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = init_embedding(n, cfg.dim, &mut rng);
    let mut epoch_mean_loss = Vec::with_capacity(cfg.n_epoch);

    for epoch in 0..cfg.n_epoch {
        let tau = tau_sch.value(epoch);
        let alpha = alpha_sch.value(epoch);

        let started = Instant::now();
        let table = membership(&dglo, tau);
        timings.membership_secs += started.elapsed().as_secs_f64();

        let started = Instant::now();
        let mean_loss = sgd_epoch(&mut z, &table, cfg, alpha, &mut rng)?;
        timings.optimize_secs += started.elapsed().as_secs_f64();

        epoch_mean_loss.push(mean_loss);
        on_epoch(epoch, &z, mean_loss);
    }
    Ok(FitResult { embedding: z, epoch_mean_loss, timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_scurve, Seed};
    use ndarray::array;

    fn table_from_entries(entries: &[(usize, usize, f64)], n: usize, tau: f64) -> MembershipTable {
        let mut d = Array2::from_elem((n, n), f64::INFINITY);
        for i in 0..n {
            d[[i, i]] = 0.0;
        }
        for &(i, j, v) in entries {
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
        membership(&GlobalDistanceMatrix::from_dense(d).unwrap(), tau)
    }

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        let s = Schedule::geometric(1.0, 0.1, 300);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(299) - 0.1).abs() < 1e-12);
        for t in 1..300 {
            assert!(s.value(t) < s.value(t - 1));
        }
        let a = Schedule::from_decay(1.0, 0.98, 300);
        assert!((a.value(10) - 0.98f64.powi(10)).abs() < 1e-12);
        let c = Schedule::constant(0.5, 10);
        assert_eq!(c.value(0), 0.5);
        assert_eq!(c.value(9), 0.5);
        let l = Schedule::linear(0.0, 1.0, 11);
        assert!((l.value(5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_full_hand_case() {
        let k = EmbedKernelParams::default();
        let table = table_from_entries(&[(0, 1, 0.3), (0, 2, 1.1), (1, 2, 0.6)], 3, 1.0);
        let z = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let got = loss_full(&z.view(), &table, 0.7, &k);

        let mut want = 0.0;
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let mu = table.mu(i, j);
            let q = q_embed(
                z.row(i).as_slice().unwrap(),
                z.row(j).as_slice().unwrap(),
                &k,
            );
            want += 2.0 * (-mu * q.ln() - 0.7 * (1.0 - mu) * (1.0 - q).ln());
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn loss_full_zero_when_no_mass_and_no_repulsion() {
        let k = EmbedKernelParams::default();
        let table = table_from_entries(&[], 3, 1.0);
        let z = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        assert_eq!(loss_full(&z.view(), &table, 0.0, &k), 0.0);
    }

    #[test]
    fn loss_full_translation_invariant() {
        // Dyadic coordinates keep the shifted differences exact.
        let k = EmbedKernelParams::default();
        let table = table_from_entries(&[(0, 1, 0.5), (1, 2, 1.5)], 3, 1.0);
        let z = array![[0.125, -0.5], [1.25, 0.75], [-2.0, 0.375]];
        let shifted = z.mapv(|v| v + 0.25);
        let a = loss_full(&z.view(), &table, 1.0, &k);
        let b = loss_full(&shifted.view(), &table, 1.0, &k);
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_loss_repeated_index_drops_negative_term() {
        let k = EmbedKernelParams::default();
        let table = table_from_entries(&[(0, 1, 0.4)], 2, 1.0);
        let z = array![[0.0, 0.0], [1.0, 1.0]];
        // S = {0, 0}: the batch pair shares a data index, so only the
        // attractive half contributes.
        let with_rep = loss_stochastic(&[0, 0], &[1, 1], &z.view(), &table, 1.0, &k);
        let no_rep = loss_stochastic(&[0, 0], &[1, 1], &z.view(), &table, 0.0, &k);
        assert_eq!(with_rep, no_rep);
    }

    #[test]
    fn stochastic_loss_symmetric_under_relabeling() {
        let k = EmbedKernelParams::default();
        let table = table_from_entries(&[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], 3, 1.0);
        let z = array![[0.0, 0.0], [1.0, 0.0], [0.5, 0.866]];
        let a = loss_stochastic(&[0, 1], &[2, 2], &z.view(), &table, 1.0, &k);
        let b = loss_stochastic(&[1, 0], &[2, 2], &z.view(), &table, 1.0, &k);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_leaves_particles_untouched() {
        let m = gen_scurve(60, Seed(2));
        let cfg = FitConfig { batch: 10, n_epoch: 3, k: 5, alpha0: 0.0, ..Default::default() };
        let d2 = pairwise_l2(&m.points.view());
        let g = knn_graph(&d2.view(), cfg.k).unwrap();
        let scales = local_scales(&g);
        let local = rescale_and_symmetrize(&g, &scales).unwrap();
        let dglo = normalize_median(shortest_paths(&local), 3.0).unwrap();
        let table = membership(&dglo, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = init_embedding(60, 2, &mut rng);
        let before = z.clone();
        sgd_epoch(&mut z, &table, &cfg, 0.0, &mut rng).unwrap();
        assert_eq!(z, before);
    }

    #[test]
    fn attraction_pulls_single_pair_closer() {
        let k = EmbedKernelParams::default();
        // Distance zero in input space: mu = 1; no repulsion (lambda 0).
        let table = table_from_entries(&[(0, 1, 0.0)], 2, 1.0);
        let mut z = array![[0.0, 0.0], [3.0, 0.0]];
        let before = 3.0;
        let slots = [
            Slot { row: 0, data: 0 },
            Slot { row: 1, data: 1 },
            Slot { row: 1, data: 1 },
            Slot { row: 0, data: 0 },
        ];
        two_phase_move(&mut z, &slots, 2, &table, 0.0, false, 0.5, 4.0, &k);
        let after = ((z[[0, 0]] - z[[1, 0]]).powi(2) + (z[[0, 1]] - z[[1, 1]]).powi(2)).sqrt();
        assert!(after < before, "pair should move closer: {after} vs {before}");
    }

    #[test]
    fn per_pair_updates_respect_clip() {
        let k = EmbedKernelParams::default();
        // Far apart in input space (mu ~ 0) but nearly coincident particles:
        // the raw repulsive gradient explodes and must be clamped.
        let table = table_from_entries(&[(0, 1, 50.0)], 2, 1.0);
        let mut z = array![[0.0, 0.0], [1e-4, 0.0]];
        let raw = repulsive_coeff(1e-4, &k).abs() * 1e-4;
        assert!(raw > 4.0, "test setup should exceed the clamp, raw = {raw}");

        let alpha = 1.0;
        let clip = 4.0;
        let before = z.clone();
        let slots = [
            Slot { row: 0, data: 0 },
            Slot { row: 1, data: 1 },
            Slot { row: 1, data: 1 },
            Slot { row: 0, data: 0 },
        ];
        two_phase_move(&mut z, &slots, 2, &table, 1.0, false, alpha, clip, &k);
        // One clamped phase gradient per phase: at most alpha*clip each.
        let bound = alpha * 2.0 * clip + 1e-12;
        for (a, b) in z.iter().zip(before.iter()) {
            assert!((a - b).abs() <= bound, "move {} exceeds clip bound {bound}", (a - b).abs());
        }
    }

    #[test]
    fn accumulated_phase_update_respects_clip() {
        // Many batch partners with saturated pair gradients: the applied
        // per-phase move still cannot exceed alpha * clip per coordinate.
        let k = EmbedKernelParams::default();
        let m = 8;
        let entries: Vec<(usize, usize, f64)> = (0..2 * m)
            .flat_map(|i| ((i + 1)..2 * m).map(move |j| (i, j, 40.0)))
            .collect();
        let table = table_from_entries(&entries, 2 * m, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = Array2::from_shape_fn((2 * m, 2), |_| rng.gen_range(-1e-3..1e-3));
        let before = z.clone();
        let (alpha, clip) = (0.7, 4.0);
        let slots: Vec<Slot> = (0..2 * m).map(|i| Slot { row: i, data: i }).collect();
        two_phase_move(&mut z, &slots, m, &table, 1.0, false, alpha, clip, &k);
        for (a, b) in z.iter().zip(before.iter()) {
            assert!((a - b).abs() <= alpha * 2.0 * clip + 1e-12);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = gen_scurve(80, Seed(6));
        let cfg = FitConfig { n_epoch: 5, batch: 16, k: 6, seed: 11, ..Default::default() };
        let a = fit_transductive(FitInput::Points(m.points.view()), &cfg).unwrap();
        let b = fit_transductive(FitInput::Points(m.points.view()), &cfg).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.epoch_mean_loss, b.epoch_mean_loss);
    }

    #[test]
    fn loss_decreases_on_small_scurve() {
        // Fixed temperature keeps the objective comparable across epochs.
        let m = gen_scurve(100, Seed(3));
        let cfg = FitConfig {
            n_epoch: 10,
            batch: 100,
            k: 10,
            fixed_tau: Some(1.0),
            seed: 4,
            ..Default::default()
        };
        let fit = fit_transductive(FitInput::Points(m.points.view()), &cfg).unwrap();
        let first = fit.epoch_mean_loss[0];
        let last = *fit.epoch_mean_loss.last().unwrap();
        assert!(
            last < first,
            "mean stochastic loss should drop: first {first}, last {last}"
        );
    }

    #[test]
    fn fixed_tau_rebuilds_identical_tables() {
        let m = gen_scurve(60, Seed(9));
        let cfg = FitConfig {
            n_epoch: 3,
            batch: 10,
            k: 5,
            fixed_tau: Some(0.5),
            seed: 1,
            ..Default::default()
        };
        let fit = fit_transductive(FitInput::Points(m.points.view()), &cfg).unwrap();
        assert!(fit.epoch_mean_loss.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn rejects_undersized_data() {
        let m = gen_scurve(50, Seed(1));
        let cfg = FitConfig { batch: 100, ..Default::default() };
        assert!(fit_transductive(FitInput::Points(m.points.view()), &cfg).is_err());
    }
}
