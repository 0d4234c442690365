//! Fully connected mapper network: `linear -> batch norm -> ReLU` repeated
//! for each hidden layer, then a final linear projection to the embedding
//! dimension. Forward, reverse-mode gradients, the Adam optimizer and a
//! small binary serialization format live here; the training loop is in the
//! inductive module.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: Array2<f64>, // out x in
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// The mapper `Q: R^p -> R^d`.
#[derive(Debug, Clone)]
pub struct Mapper {
    linears: Vec<Linear>,
    bns: Vec<BatchNorm>,
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    mode: Mode,
}

/// Activations saved by a forward pass for the backward pass.
pub struct ForwardCache {
    train: bool,
    /// Input to linear layer l (so `inputs[0]` is the data batch).
    inputs: Vec<Array2<f64>>,
    /// Linear outputs of the hidden layers, before normalization.
    pre_bn: Vec<Array2<f64>>,
    /// Normalization statistics actually used (batch stats in train mode,
    /// running stats in eval mode; variances are biased in train mode).
    mean: Vec<Array1<f64>>,
    var: Vec<Array1<f64>>,
    /// Normalized activations before scale and shift.
    normalized: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped like the mapper's parameters.
pub struct MapperGrads {
    pub(crate) linears: Vec<(Array2<f64>, Array1<f64>)>,
    pub(crate) bns: Vec<(Array1<f64>, Array1<f64>)>,
}

impl Mapper {
    /// Fresh mapper with `depth` hidden layers of width `hidden`. Weights and
    /// biases start uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(in_dim: usize, out_dim: usize, hidden: usize, depth: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_from_rng(in_dim, out_dim, hidden, depth, &mut rng)
    }

    pub(crate) fn init_from_rng(
        in_dim: usize,
        out_dim: usize,
        hidden: usize,
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(in_dim >= 1 && out_dim >= 1 && hidden >= 1 && depth >= 1);
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat(hidden).take(depth));
        dims.push(out_dim);

        let linears = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
                let bias = Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..bound));
                Linear { w: weights, b: bias }
            })
            .collect();
        let bns = (0..depth)
            .map(|_| BatchNorm {
                gamma: Array1::ones(hidden),
                beta: Array1::zeros(hidden),
                running_mean: Array1::zeros(hidden),
                running_var: Array1::ones(hidden),
            })
            .collect();
        Mapper { linears, bns, in_dim, hidden, out_dim, mode: Mode::Eval }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn depth(&self) -> usize {
        self.bns.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Forward pass using the stored mode.
    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        match self.mode {
            Mode::Train => Ok(self.forward_train(x)?.0),
            Mode::Eval => self.forward_eval(x),
        }
    }

    /// Train-mode forward: hidden layers normalize by batch statistics.
    /// Needs at least two rows. Running statistics are not touched here;
    /// call [`Mapper::update_running`] with the returned cache to fold the
    /// batch in.
    pub fn forward_train(&self, x: &ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.nrows() < 2 {
            return Err(Error::invalid("train-mode batches need at least 2 rows"));
        }
        self.forward_internal(x, true)
    }

    /// Eval-mode forward: hidden layers normalize by running statistics.
    /// Deterministic in the inputs.
    pub fn forward_eval(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_internal(x, false)?.0)
    }

    /// Eval-mode forward that also returns the cache (for gradient checks).
    #[cfg(test)]
    pub(crate) fn forward_eval_cached(
        &self,
        x: &ArrayView2<f64>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.forward_internal(x, false)
    }

    fn forward_internal(&self, x: &ArrayView2<f64>, train: bool) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.in_dim {
            return Err(Error::DimensionMismatch { expected: self.in_dim, got: x.ncols() });
        }
        let batch = x.nrows() as f64;
        let mut cache = ForwardCache {
            train,
            inputs: Vec::with_capacity(self.depth() + 1),
            pre_bn: Vec::with_capacity(self.depth()),
            mean: Vec::with_capacity(self.depth()),
            var: Vec::with_capacity(self.depth()),
            normalized: Vec::with_capacity(self.depth()),
        };
        let mut cur = x.to_owned();
        for l in 0..self.depth() {
            cache.inputs.push(cur.clone());
            let lin = &self.linears[l];
            let y = cur.dot(&lin.w.t()) + &lin.b;

            let bn = &self.bns[l];
            let (mean, var) = if train {
                let mean = y.mean_axis(Axis(0)).unwrap();
                let var = y
                    .axis_iter(Axis(1))
                    .zip(mean.iter())
                    .map(|(col, &m)| col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / batch)
                    .collect::<Array1<f64>>();
                (mean, var)
            } else {
                (bn.running_mean.clone(), bn.running_var.clone())
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let mut normalized = y.clone();
            for (mut row, _) in normalized.axis_iter_mut(Axis(0)).zip(0..) {
                for (h, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean[h]) * inv_std[h];
                }
            }
            let mut act = normalized.clone();
            for mut row in act.axis_iter_mut(Axis(0)) {
                for (h, v) in row.iter_mut().enumerate() {
                    let pre = bn.gamma[h] * *v + bn.beta[h];
                    *v = pre.max(0.0);
                }
            }
            cache.pre_bn.push(y);
            cache.mean.push(mean);
            cache.var.push(var);
            cache.normalized.push(normalized);
            cur = act;
        }
        cache.inputs.push(cur.clone());
        let last = self.linears.last().unwrap();
        let out = cur.dot(&last.w.t()) + &last.b;
        Ok((out, cache))
    }

    /// Fold a train-mode batch into the running statistics:
    /// `running = (1 - momentum) * running + momentum * batch_stat`, with the
    /// unbiased batch variance.
    pub fn update_running(&mut self, cache: &ForwardCache) {
        assert!(cache.train, "running statistics only update from train-mode batches");
        for l in 0..self.depth() {
            let batch = cache.pre_bn[l].nrows() as f64;
            let unbias = batch / (batch - 1.0);
            let bn = &mut self.bns[l];
            for h in 0..self.hidden {
                bn.running_mean[h] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[h] + BN_MOMENTUM * cache.mean[l][h];
                bn.running_var[h] = (1.0 - BN_MOMENTUM) * bn.running_var[h]
                    + BN_MOMENTUM * cache.var[l][h] * unbias;
            }
        }
    }

    /// Reverse-mode gradients of a scalar loss with upstream gradient
    /// `d_out` with respect to every parameter. The cache decides whether
    /// the batch-statistics or running-statistics branch of the
    /// normalization is differentiated.
    pub fn backward(&self, cache: &ForwardCache, d_out: &ArrayView2<f64>) -> MapperGrads {
        let depth = self.depth();
        let batch = cache.inputs[0].nrows() as f64;
        let mut g_lin: Vec<(Array2<f64>, Array1<f64>)> = self
            .linears
            .iter()
            .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
            .collect();
        let mut g_bn: Vec<(Array1<f64>, Array1<f64>)> =
            self.bns.iter().map(|b| (Array1::zeros(b.gamma.len()), Array1::zeros(b.beta.len()))).collect();

        // Final linear.
        let last = self.linears.last().unwrap();
        g_lin[depth].0 = d_out.t().dot(&cache.inputs[depth]);
        g_lin[depth].1 = d_out.sum_axis(Axis(0));
        let mut grad = d_out.dot(&last.w); // gradient wrt post-ReLU activation

        for l in (0..depth).rev() {
            let bn = &self.bns[l];
            // ReLU: the stored input to the next linear is the post-ReLU
            // activation, zero exactly where the unit was off.
            let act = &cache.inputs[l + 1];
            let mut d_act = grad;
            d_act.zip_mut_with(act, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });

            // Scale and shift.
            let xhat = &cache.normalized[l];
            for h in 0..self.hidden {
                let mut dg = 0.0;
                let mut db = 0.0;
                for r in 0..d_act.nrows() {
                    dg += d_act[[r, h]] * xhat[[r, h]];
                    db += d_act[[r, h]];
                }
                g_bn[l].0[h] = dg;
                g_bn[l].1[h] = db;
            }

            // Normalization.
            let y = &cache.pre_bn[l];
            let mean = &cache.mean[l];
            let var = &cache.var[l];
            let mut d_y = Array2::zeros(y.dim());
            if cache.train {
                for h in 0..self.hidden {
                    let inv_std = 1.0 / (var[h] + BN_EPS).sqrt();
                    let gamma = bn.gamma[h];
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_centered = 0.0;
                    let mut sum_centered = 0.0;
                    for r in 0..y.nrows() {
                        let dxhat = d_act[[r, h]] * gamma;
                        let centered = y[[r, h]] - mean[h];
                        sum_dxhat += dxhat;
                        sum_dxhat_centered += dxhat * centered;
                        sum_centered += centered;
                    }
                    let d_var = sum_dxhat_centered * (-0.5) * inv_std.powi(3);
                    let d_mean = -sum_dxhat * inv_std - 2.0 * d_var * sum_centered / batch;
                    for r in 0..y.nrows() {
                        let dxhat = d_act[[r, h]] * gamma;
                        let centered = y[[r, h]] - mean[h];
                        d_y[[r, h]] =
                            dxhat * inv_std + 2.0 * d_var * centered / batch + d_mean / batch;
                    }
                }
            } else {
                for h in 0..self.hidden {
                    let inv_std = 1.0 / (var[h] + BN_EPS).sqrt();
                    let gamma = bn.gamma[h];
                    for r in 0..y.nrows() {
                        d_y[[r, h]] = d_act[[r, h]] * gamma * inv_std;
                    }
                }
            }

            // Linear.
            g_lin[l].0 = d_y.t().dot(&cache.inputs[l]);
            g_lin[l].1 = d_y.sum_axis(Axis(0));
            grad = d_y.dot(&self.linears[l].w);
        }
        MapperGrads { linears: g_lin, bns: g_bn }
    }

    // -- flat parameter access (used by the optimizer state and the
    //    gradient-check tests) -------------------------------------------

    /// Parameter groups in canonical order: each linear's weights then bias,
    /// followed by each normalization's gamma then beta.
    pub fn group_count(&self) -> usize {
        2 * self.linears.len() + 2 * self.bns.len()
    }

    pub fn group_len(&self, group: usize) -> usize {
        let nl = self.linears.len();
        if group < 2 * nl {
            let l = &self.linears[group / 2];
            if group % 2 == 0 {
                l.w.len()
            } else {
                l.b.len()
            }
        } else {
            let g = group - 2 * nl;
            self.bns[g / 2].gamma.len()
        }
    }

    pub fn param_get(&self, group: usize, idx: usize) -> f64 {
        let nl = self.linears.len();
        if group < 2 * nl {
            let l = &self.linears[group / 2];
            if group % 2 == 0 {
                *l.w.as_slice().unwrap().get(idx).unwrap()
            } else {
                l.b[idx]
            }
        } else {
            let g = group - 2 * nl;
            let bn = &self.bns[g / 2];
            if g % 2 == 0 {
                bn.gamma[idx]
            } else {
                bn.beta[idx]
            }
        }
    }

    pub fn param_add(&mut self, group: usize, idx: usize, delta: f64) {
        let nl = self.linears.len();
        if group < 2 * nl {
            let l = &mut self.linears[group / 2];
            if group % 2 == 0 {
                l.w.as_slice_mut().unwrap()[idx] += delta;
            } else {
                l.b[idx] += delta;
            }
        } else {
            let g = group - 2 * nl;
            let bn = &mut self.bns[g / 2];
            if g % 2 == 0 {
                bn.gamma[idx] += delta;
            } else {
                bn.beta[idx] += delta;
            }
        }
    }

    // -- serialization ----------------------------------------------------

    /// Write the mapper (dimensions, parameters, running statistics) in the
    /// `GLMQ` binary format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(b"GLMQ")?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [self.in_dim, self.hidden, self.depth(), self.out_dim] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let put = |vals: &[f64], w: &mut BufWriter<std::fs::File>| -> Result<()> {
            for v in vals {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        for l in &self.linears {
            put(l.w.as_slice().unwrap(), &mut w)?;
            put(l.b.as_slice().unwrap(), &mut w)?;
        }
        for bn in &self.bns {
            put(bn.gamma.as_slice().unwrap(), &mut w)?;
            put(bn.beta.as_slice().unwrap(), &mut w)?;
            put(bn.running_mean.as_slice().unwrap(), &mut w)?;
            put(bn.running_var.as_slice().unwrap(), &mut w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a mapper written by [`Mapper::save`]. Loads in eval mode.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"GLMQ" {
            return Err(Error::Format("bad magic; not a GLMQ mapper file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(Error::Format(format!("unsupported mapper file version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut dims = [0usize; 4];
        for d in &mut dims {
            r.read_exact(&mut b8)?;
            *d = u64::from_le_bytes(b8) as usize;
        }
        let [in_dim, hidden, depth, out_dim] = dims;
        if in_dim == 0 || hidden == 0 || depth == 0 || out_dim == 0 {
            return Err(Error::Format("mapper file has zero dimensions".into()));
        }

        let take = |len: usize, r: &mut BufReader<std::fs::File>| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            let mut b8 = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                out.push(f64::from_le_bytes(b8));
            }
            Ok(out)
        };

        let mut dims_chain = vec![in_dim];
        dims_chain.extend(std::iter::repeat(hidden).take(depth));
        dims_chain.push(out_dim);
        let mut linears = Vec::with_capacity(depth + 1);
        for win in dims_chain.windows(2) {
            let (fi, fo) = (win[0], win[1]);
            let w = Array2::from_shape_vec((fo, fi), take(fo * fi, &mut r)?)
                .map_err(|e| Error::Format(e.to_string()))?;
            let b = Array1::from_vec(take(fo, &mut r)?);
            linears.push(Linear { w, b });
        }
        let mut bns = Vec::with_capacity(depth);
        for _ in 0..depth {
            bns.push(BatchNorm {
                gamma: Array1::from_vec(take(hidden, &mut r)?),
                beta: Array1::from_vec(take(hidden, &mut r)?),
                running_mean: Array1::from_vec(take(hidden, &mut r)?),
                running_var: Array1::from_vec(take(hidden, &mut r)?),
            });
        }
        Ok(Mapper { linears, bns, in_dim, hidden, out_dim, mode: Mode::Eval })
    }

    #[cfg(test)]
    pub(crate) fn zero_params(&mut self) {
        for l in &mut self.linears {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }
}

/// Adam with bias correction. Moments and the step counter can be renewed
/// mid-training; the learning rate is supplied per call.
pub struct AdamState {
    m_lin: Vec<(Array2<f64>, Array1<f64>)>,
    v_lin: Vec<(Array2<f64>, Array1<f64>)>,
    m_bn: Vec<(Array1<f64>, Array1<f64>)>,
    v_bn: Vec<(Array1<f64>, Array1<f64>)>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(mapper: &Mapper) -> Self {
        let zeros_lin = || {
            mapper
                .linears
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect::<Vec<_>>()
        };
        let zeros_bn = || {
            mapper
                .bns
                .iter()
                .map(|b| (Array1::zeros(b.gamma.len()), Array1::zeros(b.beta.len())))
                .collect::<Vec<_>>()
        };
        AdamState {
            m_lin: zeros_lin(),
            v_lin: zeros_lin(),
            m_bn: zeros_bn(),
            v_bn: zeros_bn(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Zero the moments and the step counter.
    pub fn reset(&mut self) {
        for (mw, mb) in self.m_lin.iter_mut().chain(self.v_lin.iter_mut()) {
            mw.fill(0.0);
            mb.fill(0.0);
        }
        for (mg, mb) in self.m_bn.iter_mut().chain(self.v_bn.iter_mut()) {
            mg.fill(0.0);
            mb.fill(0.0);
        }
        self.step = 0;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of every mapper parameter.
    pub fn step(&mut self, mapper: &mut Mapper, grads: &MapperGrads, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        };

        for (l, lin) in mapper.linears.iter_mut().enumerate() {
            let (gw, gb) = &grads.linears[l];
            for ((p, g), (m, v)) in lin
                .w
                .iter_mut()
                .zip(gw.iter())
                .zip(self.m_lin[l].0.iter_mut().zip(self.v_lin[l].0.iter_mut()))
            {
                update(p, *g, m, v);
            }
            for ((p, g), (m, v)) in lin
                .b
                .iter_mut()
                .zip(gb.iter())
                .zip(self.m_lin[l].1.iter_mut().zip(self.v_lin[l].1.iter_mut()))
            {
                update(p, *g, m, v);
            }
        }
        for (l, bn) in mapper.bns.iter_mut().enumerate() {
            let (gg, gb) = &grads.bns[l];
            for ((p, g), (m, v)) in bn
                .gamma
                .iter_mut()
                .zip(gg.iter())
                .zip(self.m_bn[l].0.iter_mut().zip(self.v_bn[l].0.iter_mut()))
            {
                update(p, *g, m, v);
            }
            for ((p, g), (m, v)) in bn
                .beta
                .iter_mut()
                .zip(gb.iter())
                .zip(self.m_bn[l].1.iter_mut().zip(self.v_bn[l].1.iter_mut()))
            {
                update(p, *g, m, v);
            }
        }
    }
}

impl MapperGrads {
    pub fn zeros_like(mapper: &Mapper) -> Self {
        MapperGrads {
            linears: mapper
                .linears
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect(),
            bns: mapper
                .bns
                .iter()
                .map(|b| (Array1::zeros(b.gamma.len()), Array1::zeros(b.beta.len())))
                .collect(),
        }
    }

    /// Flat access mirroring [`Mapper::param_get`]'s group order.
    pub fn get(&self, group: usize, idx: usize) -> f64 {
        let nl = self.linears.len();
        if group < 2 * nl {
            let l = &self.linears[group / 2];
            if group % 2 == 0 {
                l.0.as_slice().unwrap()[idx]
            } else {
                l.1[idx]
            }
        } else {
            let g = group - 2 * nl;
            let bn = &self.bns[g / 2];
            if g % 2 == 0 {
                bn.0[idx]
            } else {
                bn.1[idx]
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (w, b) in &self.linears {
            for v in w.iter().chain(b.iter()) {
                m = m.max(v.abs());
            }
        }
        for (g, b) in &self.bns {
            for v in g.iter().chain(b.iter()) {
                m = m.max(v.abs());
            }
        }
        m
    }
}
