//! Mapper training by particle moves.
//!
//! Each iteration evaluates the network on the sampled points and their
//! drawn neighbors, moves those outputs exactly like the free-particle
//! trainer would (same clipped two-phase step, shared code path), and then
//! regresses the network onto the moved positions with one Adam step on the
//! squared error, treating the moved positions as constants. The Adam
//! learning rate decays with the shared per-epoch factor and its moments are
//! renewed every 20 epochs.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::membership;
use crate::error::{Error, Result};
use crate::mlp::{AdamState, Mapper, Mode};
use crate::transductive::{
    prepare_distances, stochastic_loss_slots, two_phase_move, Embedding, FitConfig, FitInput,
    Schedule, Slot, StageTimings,
};

/// Default width and depth of the mapper's hidden stack.
pub const MAPPER_HIDDEN: usize = 128;
pub const MAPPER_DEPTH: usize = 3;

/// Initial Adam learning rate and the moment-renewal period (in epochs).
pub const ADAM_LR0: f64 = 0.01;
pub const ADAM_RESET_PERIOD: usize = 20;

pub struct InductiveFitResult {
    pub mapper: Mapper,
    /// Eval-mode embedding of the training points after the final epoch.
    pub embedding: Embedding,
    pub epoch_mean_loss: Vec<f64>,
    pub timings: StageTimings,
}

pub fn fit_inductive(x: &ArrayView2<f64>, cfg: &FitConfig) -> Result<InductiveFitResult> {
    fit_inductive_with(x, cfg, |_, _, _| {})
}

/// Like [`fit_inductive`] but invokes `on_epoch(epoch, mapper, mean_loss)`
/// after every epoch.
pub fn fit_inductive_with(
    x: &ArrayView2<f64>,
    cfg: &FitConfig,
    mut on_epoch: impl FnMut(usize, &Mapper, f64),
) -> Result<InductiveFitResult> {
    let n = x.nrows();
    let p = x.ncols();
    cfg.validate(n)?;
    let mut timings = StageTimings::default();
    let dglo = prepare_distances(&FitInput::Points(x.view()), cfg, &mut timings)?;

    let tau_sch = cfg.tau_schedule();
    let alpha_sch = cfg.alpha_schedule();
    let eta_sch = Schedule::from_decay(ADAM_LR0, cfg.alpha_decay, cfg.n_epoch);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mapper = Mapper::init_from_rng(p, cfg.dim, MAPPER_HIDDEN, MAPPER_DEPTH, &mut rng);
    mapper.set_mode(Mode::Train);
    let mut adam = AdamState::new(&mapper);

    let m = cfg.batch;
    let n_iter = n.div_ceil(m);
    let mut epoch_mean_loss = Vec::with_capacity(cfg.n_epoch);
    let mut xbatch = Array2::zeros((2 * m, p));
    let mut slots: Vec<Slot> = Vec::with_capacity(2 * m);

    for epoch in 0..cfg.n_epoch {
        let tau = tau_sch.value(epoch);
        let alpha = alpha_sch.value(epoch);
        let eta = eta_sch.value(epoch);
        if epoch > 0 && epoch % ADAM_RESET_PERIOD == 0 {
            adam.reset();
        }

        let started = Instant::now();
        let table = membership(&dglo, tau);
        timings.membership_secs += started.elapsed().as_secs_f64();

        let started = Instant::now();
        let mut loss_sum = 0.0;
        for _ in 0..n_iter {
            slots.clear();
            for row in 0..m {
                let i = rng.gen_range(0..n);
                slots.push(Slot { row, data: i });
            }
            for k in 0..m {
                let j = table.sample_neighbor(slots[k].data, &mut rng)?;
                slots.push(Slot { row: m + k, data: j });
            }
            for (row, slot) in slots.iter().enumerate() {
                xbatch.row_mut(row).assign(&x.row(slot.data));
            }

            let (z, cache) = mapper.forward_train(&xbatch.view())?;
            mapper.update_running(&cache);

            loss_sum += stochastic_loss_slots(
                &z.view(),
                &slots,
                m,
                &table,
                cfg.lambda_e,
                cfg.neg_approx,
                &cfg.kernel,
            );

            let mut moved = z.clone();
            two_phase_move(
                &mut moved,
                &slots,
                m,
                &table,
                cfg.lambda_e,
                cfg.neg_approx,
                alpha,
                cfg.clip,
                &cfg.kernel,
            );

            // d/dZ of |Z - Z_moved|_F^2 with the moved positions constant.
            let d_out = (&z - &moved).mapv(|v| 2.0 * v);
            let grads = mapper.backward(&cache, &d_out.view());
            adam.step(&mut mapper, &grads, eta);
        }
        timings.optimize_secs += started.elapsed().as_secs_f64();

        epoch_mean_loss.push(loss_sum / n_iter as f64);
        on_epoch(epoch, &mapper, loss_sum / n_iter as f64);
    }

    mapper.set_mode(Mode::Eval);
    let embedding = transform(&mapper, &x.view())?;
    Ok(InductiveFitResult { mapper, embedding, epoch_mean_loss, timings })
}

/// Embed rows with a trained mapper (eval-mode forward; pure function).
pub fn transform(mapper: &Mapper, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != mapper.in_dim() {
        return Err(Error::DimensionMismatch { expected: mapper.in_dim(), got: x.ncols() });
    }
    if x.nrows() == 0 {
        return Ok(Array2::zeros((0, mapper.out_dim())));
    }
    mapper.forward_eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_hierarchical, gen_scurve, Seed};

    fn quick_cfg() -> FitConfig {
        FitConfig { n_epoch: 6, batch: 20, k: 6, seed: 3, ..Default::default() }
    }

    #[test]
    fn seeded_runs_produce_identical_mappers() {
        let m = gen_scurve(80, Seed(21));
        let cfg = quick_cfg();
        let a = fit_inductive(&m.points.view(), &cfg).unwrap();
        let b = fit_inductive(&m.points.view(), &cfg).unwrap();
        assert_eq!(a.embedding, b.embedding);
        for g in 0..a.mapper.group_count() {
            for i in 0..a.mapper.group_len(g) {
                assert_eq!(a.mapper.param_get(g, i), b.mapper.param_get(g, i));
            }
        }
    }

    #[test]
    fn transform_matches_training_embedding() {
        let m = gen_scurve(60, Seed(22));
        let cfg = quick_cfg();
        let fit = fit_inductive(&m.points.view(), &cfg).unwrap();
        let again = transform(&fit.mapper, &m.points.view()).unwrap();
        assert_eq!(fit.embedding, again);
        assert_eq!(again.dim(), (60, 2));
        assert!(again.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn transform_edge_cases() {
        let m = gen_scurve(60, Seed(23));
        let fit = fit_inductive(&m.points.view(), &quick_cfg()).unwrap();

        let empty = Array2::zeros((0, 3));
        let out = transform(&fit.mapper, &empty.view()).unwrap();
        assert_eq!(out.dim(), (0, 2));

        let wrong = Array2::zeros((4, 5));
        assert!(transform(&fit.mapper, &wrong.view()).is_err());
    }

    #[test]
    fn loss_is_finite_and_moves_on_small_hierarchy() {
        let m = gen_hierarchical(2, Seed(24));
        let cfg = FitConfig { n_epoch: 4, batch: 25, k: 8, seed: 9, ..Default::default() };
        let fit = fit_inductive(&m.points.view(), &cfg).unwrap();
        assert!(fit.epoch_mean_loss.iter().all(|l| l.is_finite()));
        assert_eq!(fit.embedding.dim(), (250, 2));
    }
}
