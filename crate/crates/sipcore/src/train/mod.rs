//! End-to-end training of the power-control weights, channel estimator and
//! data detector against the data-symbol MSE.

pub mod ops;

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Activation, Graph, Gradients, Tensor, Var};
use crate::channel::{noise_for_energy, ChannelEstimate, ChannelSample, ChannelTensor};
use crate::eval::nmse_db;
use crate::grid::{make_dft_pilots, PilotBook};
use crate::linalg::CMatrix;
use crate::nn::{channel_net, data_net, path_gain_db, BnUpdates, BoundSet, NetConfig, NetParams};
use crate::tx::{draw_noise, modulate_qam, Constellation, PdpFactors};
use crate::{Error, Result, C64};
use ops::BatchFrames;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    /// `Es/sigma^2` range (dB) sampled once per batch.
    pub snr_db: (f64, f64),
    pub seed: u64,
    /// Weight of the auxiliary channel loss; 0 disables it.
    pub lambda_ce: f64,
    /// Initial PDP factor.
    pub rho0: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config(alloc::format!("learning rate {} is invalid", self.lr)));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        if !(self.snr_db.0 <= self.snr_db.1) || !self.snr_db.0.is_finite() || !self.snr_db.1.is_finite() {
            return Err(Error::config("Es/sigma^2 range is empty"));
        }
        if !(self.lambda_ce >= 0.0) {
            return Err(Error::config("auxiliary loss weight must be non-negative"));
        }
        if !(self.rho0 > 0.0 && self.rho0 < 1.0) {
            return Err(Error::config("initial PDP factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Static description of the trainable link.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub net: NetConfig,
    pub power: f64,
    pub constellation: Constellation,
    pub pilots: PilotBook,
    pub lambda_ce: f64,
}

impl ChainSpec {
    pub fn new(net: NetConfig, power: f64, qam_order: usize, lambda_ce: f64) -> Result<Self> {
        net.validate()?;
        if !(power > 0.0) {
            return Err(Error::config("transmit power must be positive"));
        }
        let pilots = make_dft_pilots(net.users, &net.grid)?;
        Ok(Self {
            constellation: Constellation::qam(qam_order)?,
            net,
            power,
            pilots,
            lambda_ce,
        })
    }
}

/// `sum_k ||d_k - d_hat_k||^2`.
pub fn loss(d: &CMatrix, d_hat: &CMatrix) -> Result<f64> {
    if d.rows() != d_hat.rows() || d.cols() != d_hat.cols() {
        return Err(Error::shape("loss: data and estimate shapes differ"));
    }
    Ok(d.as_slice().iter().zip(d_hat.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// Amplitude factor that brings the mean per-link, per-RE channel energy of
/// `samples` to one.
pub fn channel_scale(samples: &[&ChannelSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let e: f64 = samples
        .iter()
        .map(|s| s.h.energy() / (s.antennas() * s.users() * s.h.res()) as f64)
        .sum::<f64>()
        / samples.len() as f64;
    if !(e > 0.0) {
        return Err(Error::domain("channel samples carry no energy"));
    }
    Ok(1.0 / e.sqrt())
}

/// Mean summed-channel energy after scaling by `amp`.
pub fn scaled_energy(samples: &[&ChannelSample], amp: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(amp * amp * samples.iter().map(|s| s.summed_energy()).sum::<f64>() / samples.len() as f64)
}

/// One batch of frames plus the link metadata the networks see.
#[derive(Debug, Clone)]
pub struct Batch {
    pub frames: Rc<BatchFrames>,
    /// Path gain (dB) per link row.
    pub pg_db: Vec<f64>,
    /// Constellation index of every data symbol, `[B, K, E]`.
    pub data_idx: Vec<usize>,
}

/// Draw data and noise for `samples`, with channels scaled by `amp`.
pub fn draw_batch(
    spec: &ChainSpec,
    samples: &[&ChannelSample],
    amp: f64,
    noise_var: f64,
    rng: &mut impl Rng,
) -> Result<Batch> {
    let (m_n, k_n, e_n) = (spec.net.antennas, spec.net.users, spec.net.grid.res());
    let mut data_idx = Vec::with_capacity(samples.len() * k_n * e_n);
    let mut noise = Vec::with_capacity(samples.len() * m_n * e_n);
    for _ in samples {
        data_idx.extend(modulate_qam(rng, &spec.constellation, k_n * e_n).indices);
        noise.extend_from_slice(draw_noise(rng, m_n, e_n, noise_var).as_slice());
    }
    assemble_batch(spec, samples, amp, noise_var, data_idx, noise)
}

/// Batch from given symbol indices `[B, K, E]` and noise `[B, M, E]`.
pub fn assemble_batch(
    spec: &ChainSpec,
    samples: &[&ChannelSample],
    amp: f64,
    noise_var: f64,
    data_idx: Vec<usize>,
    noise: Vec<C64>,
) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (m_n, k_n, e_n) = (spec.net.antennas, spec.net.users, spec.net.grid.res());
    let b = samples.len();
    if data_idx.len() != b * k_n * e_n || noise.len() != b * m_n * e_n {
        return Err(Error::shape("batch data or noise has the wrong length"));
    }
    let mut h = Vec::with_capacity(b * m_n * k_n * e_n);
    let mut pg_db = Vec::with_capacity(b * m_n * k_n);
    for s in samples {
        s.validate()?;
        if s.antennas() != m_n || s.users() != k_n || s.h.res() != e_n {
            return Err(Error::shape(alloc::format!(
                "sample is {}x{}x{}, network expects {m_n}x{k_n}x{e_n}",
                s.antennas(),
                s.users(),
                s.h.res()
            )));
        }
        h.extend(s.h.as_slice().iter().map(|z| z * amp));
        pg_db.extend(s.path_gain.iter().map(|&g| path_gain_db(g)));
    }
    let points = spec.constellation.points();
    let data = data_idx
        .iter()
        .map(|&i| points.get(i).copied().ok_or(Error::Range { what: "constellation", index: i, limit: points.len() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        frames: Rc::new(BatchFrames {
            batch: b,
            antennas: m_n,
            users: k_n,
            res: e_n,
            power: spec.power,
            noise_var,
            h,
            data,
            noise,
            pilots: spec.pilots.as_slice().to_vec(),
        }),
        pg_db,
        data_idx,
    })
}

/// Batch-norm behaviour of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics.
    Train,
    /// Running statistics.
    Eval,
}

/// Recorded forward pass of the full link.
pub struct ChainGraph {
    pub graph: Graph,
    pub loss: Var,
    pub rho: Var,
    pub h_ls: Var,
    pub h_hat: Var,
    pub d_mmse: Var,
    pub d_hat: Var,
    pub w_p: Var,
    pub w_c: BoundSet,
    pub w_d: BoundSet,
    pub bn_updates: BnUpdates,
}

/// Build the chain `rho -> transmit -> LS -> f_c -> cancel -> MMSE -> f_d`
/// and the batch-mean loss.
pub fn build_chain(spec: &ChainSpec, params: &NetParams, batch: &Batch, mode: Mode, trainable: bool) -> Result<ChainGraph> {
    let f = &batch.frames;
    let mut g = Graph::new();
    let w_p = if trainable { g.param(params.w_p.clone()) } else { g.constant(params.w_p.clone()) };
    let w_c = params.w_c.bind(&mut g, trainable);
    let w_d = params.w_d.bind(&mut g, trainable);

    let rho = g.act(w_p, Activation::Sigmoid);
    let y = ops::transmit(&mut g, rho, f);
    let h_ls = ops::ls_estimate(&mut g, y, rho, f)?;
    let h_hat = channel_net(&mut g, &spec.net, &w_c, h_ls, &batch.pg_db)?;
    let y_sp = ops::cancel_pilots(&mut g, y, h_hat, rho, f);
    let d_mmse = ops::mmse_detect(&mut g, y_sp, h_hat, rho, f)?;
    let running = (mode == Mode::Eval).then_some(&params.bn);
    let (d_hat, bn_updates) = data_net(&mut g, &spec.net, &w_d, running, d_mmse)?;

    let b = f.batch;
    let d_true = g.constant(Tensor::from_complex(&[b, f.users, f.res], &f.data)?);
    let se = g.squared_error(d_hat, d_true);
    let mut loss = g.scale(se, 1.0 / b as f64);
    if spec.lambda_ce != 0.0 {
        let h_true = g.constant(Tensor::from_complex(&[b, f.antennas, f.users, f.res], &f.h)?);
        let ce = g.squared_error(h_hat, h_true);
        let ce = g.scale(ce, spec.lambda_ce / b as f64);
        loss = g.add(loss, ce);
    }
    Ok(ChainGraph {
        graph: g,
        loss,
        rho,
        h_ls,
        h_hat,
        d_mmse,
        d_hat,
        w_p,
        w_c,
        w_d,
        bn_updates,
    })
}

/// Every intermediate of one frame through the trained link.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub data: CMatrix,
    pub data_idx: Vec<usize>,
    pub d_mmse: CMatrix,
    pub d_hat: CMatrix,
    /// True channel after scaling.
    pub h: ChannelTensor,
    pub h_ls: ChannelEstimate,
    pub h_hat: ChannelEstimate,
    pub rho: PdpFactors,
    pub loss: f64,
}

/// Single-frame evaluation-mode forward pass.
pub fn forward_chain(
    spec: &ChainSpec,
    sample: &ChannelSample,
    params: &NetParams,
    amp: f64,
    noise_var: f64,
    rng: &mut impl Rng,
) -> Result<ChainTrace> {
    let batch = draw_batch(spec, &[sample], amp, noise_var, rng)?;
    let c = build_chain(spec, params, &batch, Mode::Eval, false)?;
    trace_of(spec, &batch, &c, 0)
}

/// Extract frame `b` of a recorded chain.
pub fn trace_of(spec: &ChainSpec, batch: &Batch, c: &ChainGraph, b: usize) -> Result<ChainTrace> {
    let f = &batch.frames;
    let (m_n, k_n, e_n) = (f.antennas, f.users, f.res);
    let hl = m_n * k_n * e_n;
    let dl = k_n * e_n;
    let g = &c.graph;
    let cm = |v: Var| CMatrix::from_vec(k_n, e_n, g.value(v).as_complex()[b * dl..(b + 1) * dl].to_vec());
    let ct = |src: &[C64]| ChannelTensor::from_vec(m_n, k_n, e_n, src[b * hl..(b + 1) * hl].to_vec());
    let data = CMatrix::from_vec(k_n, e_n, f.data[b * dl..(b + 1) * dl].to_vec())?;
    let d_hat = cm(c.d_hat)?;
    let _ = spec;
    Ok(ChainTrace {
        loss: loss(&data, &d_hat)?,
        data,
        data_idx: batch.data_idx[b * dl..(b + 1) * dl].to_vec(),
        d_mmse: cm(c.d_mmse)?,
        d_hat,
        h: ct(&f.h)?,
        h_ls: ct(g.value(c.h_ls).as_complex())?,
        h_hat: ct(g.value(c.h_hat).as_complex())?,
        rho: PdpFactors::new(k_n, e_n, g.value(c.rho).data().to_vec())?,
    })
}

// ─── optimizer ──────────────────────────────────────────────────────────────

/// Adam moments for every learnable tensor, ordered `w_p`, `w_c`, `w_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn learnable_mut(p: &mut NetParams) -> Vec<&mut Tensor> {
    let mut out = vec![&mut p.w_p];
    out.extend(p.w_c.tensors_mut());
    out.extend(p.w_d.tensors_mut());
    out
}

impl Adam {
    pub fn new(params: &NetParams, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        let mut sizes = vec![params.w_p.len()];
        sizes.extend(params.w_c.iter().map(|(_, t)| t.len()));
        sizes.extend(params.w_d.iter().map(|(_, t)| t.len()));
        Self {
            lr,
            betas,
            eps,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Apply one update from gradients ordered like [`Adam::new`].
    pub fn update(&mut self, params: &mut NetParams, grads: &[Option<&Tensor>]) -> Result<()> {
        let tensors = learnable_mut(params);
        if tensors.len() != grads.len() || tensors.len() != self.m.len() {
            return Err(Error::shape("optimizer state does not match the parameters"));
        }
        self.step += 1;
        let (b1, b2) = self.betas;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (i, t) in tensors.into_iter().enumerate() {
            let Some(g) = grads[i] else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in t.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                *p -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn ordered_grads<'a>(c: &ChainGraph, grads: &'a Gradients) -> Vec<Option<&'a Tensor>> {
    let mut out = vec![grads.get(c.w_p)];
    out.extend(c.w_c.vars().map(|v| grads.get(v)));
    out.extend(c.w_d.vars().map(|v| grads.get(v)));
    out
}

// ─── training loop ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_nmse_db: f64,
    pub lr: f64,
    pub seed: u64,
}

pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub best: NetParams,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: NetParams,
    pub optimizer: Adam,
    pub history: Vec<EpochMetrics>,
    /// Channel amplitude normalization used throughout.
    pub channel_amp: f64,
}

/// Seeded generator for a named purpose.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_FRAMES: u64 = 3;
const STREAM_VAL: u64 = 4;

/// Freshly initialized parameters for a training run.
pub fn init_params(spec: &ChainSpec, cfg: &TrainConfig) -> Result<NetParams> {
    NetParams::init(&spec.net, cfg.rho0, &mut stream_rng(cfg.seed, STREAM_INIT))
}

/// Validation loss and NMSE with a fixed frame seed.
pub fn validate(
    spec: &ChainSpec,
    params: &NetParams,
    samples: &[&ChannelSample],
    amp: f64,
    energy: f64,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let mut rng = stream_rng(cfg.seed, STREAM_VAL);
    let (mut total, mut err, mut ref_e) = (0.0, 0.0, 0.0);
    for chunk in samples.chunks(cfg.batch_size) {
        let snr = rng.random_range(cfg.snr_db.0..=cfg.snr_db.1);
        let nv = noise_for_energy(spec.power, energy, snr)?;
        let batch = draw_batch(spec, chunk, amp, nv, &mut rng)?;
        let c = build_chain(spec, params, &batch, Mode::Eval, false)?;
        total += c.graph.value(c.loss).item() * chunk.len() as f64;
        let hh = c.graph.value(c.h_hat).as_complex();
        for (a, b) in batch.frames.h.iter().zip(hh) {
            err += (a - b).norm_sqr();
            ref_e += a.norm_sqr();
        }
    }
    Ok((total / samples.len() as f64, nmse_db(err, ref_e)?))
}

/// Jointly optimize `w_p`, `w_c` and `w_d`. `observer` sees every epoch's
/// metrics as soon as they are available.
pub fn train(
    cfg: &TrainConfig,
    spec: &ChainSpec,
    train_set: &[&ChannelSample],
    val_set: &[&ChannelSample],
    params: NetParams,
    observer: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !params.matches(&spec.net) {
        return Err(Error::config("parameters do not match the network configuration"));
    }
    let amp = channel_scale(train_set)?;
    let energy = scaled_energy(train_set, amp)?;
    let mut params = params;
    let mut opt = Adam::new(&params, cfg.lr, cfg.betas, cfg.adam_eps);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut frames = stream_rng(cfg.seed, STREAM_FRAMES);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, NetParams)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let samples: Vec<&ChannelSample> = idx.iter().map(|&i| train_set[i]).collect();
            let snr = frames.random_range(cfg.snr_db.0..=cfg.snr_db.1);
            let nv = noise_for_energy(spec.power, energy, snr)?;
            let batch = draw_batch(spec, &samples, amp, nv, &mut frames)?;
            let c = build_chain(spec, &params, &batch, Mode::Train, true)?;
            let l = c.graph.value(c.loss).item();
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    samples: idx.to_vec(),
                    snr_db: snr,
                });
            }
            epoch_loss += l * idx.len() as f64;
            let grads = c.graph.backward(c.loss);
            opt.update(&mut params, &ordered_grads(&c, &grads))?;
            let count = idx.len() * spec.net.users * spec.net.grid.res();
            params.update_running(&c.bn_updates, count)?;
        }
        let (val_loss, val_nmse_db) = validate(spec, &params, val_set, amp, energy, cfg)?;
        let m = EpochMetrics {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            val_nmse_db,
            lr: cfg.lr,
            seed: cfg.seed,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} nmse {:.2} dB",
            m.train_loss,
            m.val_loss,
            m.val_nmse_db
        );
        observer(&m);
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, params.clone()));
        }
        history.push(m);
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best: best_params,
        best_epoch,
        last: params,
        optimizer: opt,
        history,
        channel_amp: amp,
    })
}

// ─── gradient check ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub coords: usize,
    /// Step reductions triggered by inconsistent one-sided differences.
    pub refined: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Maximum number of tenfold step reductions per coordinate.
pub const KINK_REFINEMENTS: usize = 3;

/// Compare autodiff gradients of the training loss with central
/// differences (`step`) on up to `coords` random coordinates per group.
/// Where the forward and backward one-sided slopes disagree by more than
/// 0.1 %, the step is divided by ten (at most [`KINK_REFINEMENTS`] times).
pub fn grad_check(
    spec: &ChainSpec,
    params: &NetParams,
    batch: &Batch,
    coords: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let c = build_chain(spec, params, batch, Mode::Train, true)?;
    let grads = c.graph.backward(c.loss);
    let eval = |p: &NetParams| -> Result<f64> {
        let c = build_chain(spec, p, batch, Mode::Train, false)?;
        Ok(c.graph.value(c.loss).item())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();

    // (group, tensor index within the group, var)
    let mut layout: Vec<(&str, Vec<(usize, Var)>)> = vec![("W_p", vec![(0, c.w_p)])];
    layout.push(("W_c", c.w_c.vars().enumerate().collect()));
    layout.push(("W_d", c.w_d.vars().enumerate().collect()));
    for (name, tensors) in layout {
        let mut all: Vec<(usize, Var, usize)> = Vec::new();
        for (ti, v) in &tensors {
            for j in 0..c.graph.value(*v).len() {
                all.push((*ti, *v, j));
            }
        }
        all.shuffle(&mut rng);
        all.truncate(coords);
        let mut worst: f64 = 0.0;
        let mut refined = 0;
        for &(ti, v, j) in &all {
            let analytic = grads.get(v).map_or(0.0, |t| t.data()[j]);
            let perturbed = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                let t = match name {
                    "W_p" => &mut p.w_p,
                    "W_c" => p.w_c.tensors_mut().nth(ti).expect("tensor index"),
                    _ => p.w_d.tensors_mut().nth(ti).expect("tensor index"),
                };
                t.data_mut()[j] += delta;
                eval(&p)
            };
            // shrink the step while the one-sided slopes disagree, which
            // signals an activation kink inside [x - h, x + h]
            let base = eval(params)?;
            let mut h = step;
            let mut numeric = 0.0;
            for level in 0..=KINK_REFINEMENTS {
                let fwd = (perturbed(h)? - base) / h;
                let bwd = (base - perturbed(-h)?) / h;
                numeric = 0.5 * (fwd + bwd);
                if (fwd - bwd).abs() <= 1e-3 * fwd.abs().max(bwd.abs()).max(1e-6) {
                    break;
                }
                if level < KINK_REFINEMENTS {
                    refined += 1;
                    h *= 0.1;
                }
            }
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / scale;
            worst = worst.max(rel);
        }
        groups.push(GroupError {
            group: String::from(name),
            coords: all.len(),
            refined,
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { groups })
}
