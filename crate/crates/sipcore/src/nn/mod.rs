//! Receiver networks: reshape maps, the path-gain embedding, the U-Net
//! channel estimator `f_c` and the convolutional data detector `f_d`.
//!
//! Feature maps are `[rows, channels, S, T]`. For `f_c` the row of link
//! `(m, k)` in frame `b` is `(b * M + m) * K + k`; for `f_d` it is `b * K + k`.

mod params;

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;

pub use params::{count_params, BoundSet, NetParams, ParamCounts, ParamSet};

use crate::autodiff::{Activation, BatchStats, Graph, Tensor, Var};
use crate::channel::{ChannelEstimate, ChannelTensor};
use crate::grid::ResourceGrid;
use crate::linalg::CMatrix;
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.3;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNetConfig {
    /// Length of the frequency scaling vector.
    pub l_f: usize,
    /// Feature width at the fusion point (scale and shift length).
    pub l_s: usize,
    pub mlp_hidden: usize,
    /// U-Net channel widths per level, finest first.
    pub widths: [usize; 3],
    /// Convolutions per level (encoder and decoder; the last entry is the
    /// bottleneck).
    pub level_convs: [usize; 3],
    /// Add the LS estimate to the network output.
    pub residual: bool,
    /// Zero-initialize the final projection.
    pub zero_projection: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataNetConfig {
    pub width: usize,
    pub hidden_layers: usize,
    /// Skip the detector network: `D_hat = D_mmse`.
    pub bypass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub antennas: usize,
    pub users: usize,
    pub grid: ResourceGrid,
    pub channel: ChannelNetConfig,
    pub data: DataNetConfig,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.channel;
        if self.antennas == 0 || self.users == 0 {
            return Err(Error::config("network needs at least one antenna and one user"));
        }
        if self.grid.subcarriers() < 4 || self.grid.symbols() < 4 {
            return Err(Error::config(alloc::format!(
                "grid {}x{} is too small for two down-sampling stages (need at least 4x4)",
                self.grid.subcarriers(),
                self.grid.symbols()
            )));
        }
        if c.l_f == 0 || c.l_s == 0 || c.mlp_hidden == 0 || c.widths.contains(&0) {
            return Err(Error::config("channel-net widths must be positive"));
        }
        if c.level_convs.contains(&0) {
            return Err(Error::config("every U-Net level needs at least one convolution"));
        }
        if !self.data.bypass && self.data.width == 0 {
            return Err(Error::config("data-net width must be positive"));
        }
        Ok(())
    }
}

// ─── reshape maps ───────────────────────────────────────────────────────────

/// Gather map from interleaved `[rows, E, 2]` to `[rows, 2, S, T]`.
fn unfold_index(rows: usize, grid: &ResourceGrid) -> Vec<usize> {
    let (s_n, t_n, e_n) = (grid.subcarriers(), grid.symbols(), grid.res());
    let mut idx = Vec::with_capacity(rows * 2 * e_n);
    for r in 0..rows {
        for c in 0..2 {
            for s in 0..s_n {
                for t in 0..t_n {
                    idx.push((r * e_n + s + s_n * t) * 2 + c);
                }
            }
        }
    }
    idx
}

/// Inverse of [`unfold_index`].
fn fold_index(rows: usize, grid: &ResourceGrid) -> Vec<usize> {
    let (s_n, t_n, e_n) = (grid.subcarriers(), grid.symbols(), grid.res());
    let mut idx = Vec::with_capacity(rows * 2 * e_n);
    for r in 0..rows {
        for e in 0..e_n {
            let (s, t) = (e % s_n, e / s_n);
            for c in 0..2 {
                idx.push(((r * 2 + c) * s_n + s) * t_n + t);
            }
        }
    }
    idx
}

fn unfold_values(values: &[crate::C64], rows: usize, grid: &ResourceGrid) -> Tensor {
    let flat: &[f64] = bytemuck::cast_slice(values);
    let data = unfold_index(rows, grid).into_iter().map(|i| flat[i]).collect();
    Tensor::new(&[rows, 2, grid.subcarriers(), grid.symbols()], data).expect("unfold shape")
}

fn fold_values(t: &Tensor, grid: &ResourceGrid) -> Vec<crate::C64> {
    let rows = t.shape()[0];
    let flat: Vec<f64> = fold_index(rows, grid).into_iter().map(|i| t.data()[i]).collect();
    bytemuck::cast_slice(&flat).to_vec()
}

fn check_unfold(t: &Tensor, grid: &ResourceGrid) -> Result<()> {
    let s = t.shape();
    if s.len() != 4 || s[1] != 2 || s[2] != grid.subcarriers() || s[3] != grid.symbols() {
        return Err(Error::shape(alloc::format!(
            "expected [rows, 2, {}, {}], got {s:?}",
            grid.subcarriers(),
            grid.symbols()
        )));
    }
    Ok(())
}

/// `M x K x E` estimate to `(M K) x 2 x S x T` (channel 0 real, 1 imaginary).
pub fn f_tce(h: &ChannelEstimate, grid: &ResourceGrid) -> Result<Tensor> {
    if h.res() != grid.res() {
        return Err(Error::shape(alloc::format!("estimate has {} REs, grid has {}", h.res(), grid.res())));
    }
    Ok(unfold_values(h.as_slice(), h.antennas() * h.users(), grid))
}

pub fn f_tce_inv(t: &Tensor, antennas: usize, users: usize, grid: &ResourceGrid) -> Result<ChannelEstimate> {
    check_unfold(t, grid)?;
    if t.shape()[0] != antennas * users {
        return Err(Error::shape(alloc::format!("{} rows for {antennas}x{users} links", t.shape()[0])));
    }
    ChannelTensor::from_vec(antennas, users, grid.res(), fold_values(t, grid))
}

/// `K x E` symbols to `K x 2 x S x T`.
pub fn f_tdd(d: &CMatrix, grid: &ResourceGrid) -> Result<Tensor> {
    if d.cols() != grid.res() {
        return Err(Error::shape(alloc::format!("data has {} REs, grid has {}", d.cols(), grid.res())));
    }
    Ok(unfold_values(d.as_slice(), d.rows(), grid))
}

pub fn f_tdd_inv(t: &Tensor, grid: &ResourceGrid) -> Result<CMatrix> {
    check_unfold(t, grid)?;
    CMatrix::from_vec(t.shape()[0], grid.res(), fold_values(t, grid))
}

/// Graph version of the unfold map for interleaved `[.., E, 2]` inputs whose
/// leading dimensions multiply to `rows`.
pub fn unfold(g: &mut Graph, x: Var, rows: usize, grid: &ResourceGrid) -> Var {
    let idx = Rc::new(unfold_index(rows, grid));
    g.gather(x, idx, &[rows, 2, grid.subcarriers(), grid.symbols()])
}

/// Graph version of the fold map; `shape` is the interleaved output shape.
pub fn fold(g: &mut Graph, x: Var, grid: &ResourceGrid, shape: &[usize]) -> Var {
    let rows = g.shape(x)[0];
    let idx = Rc::new(fold_index(rows, grid));
    g.gather(x, idx, shape)
}

// ─── path-gain embedding ────────────────────────────────────────────────────

/// `[f_s]_i = exp(-ln(10000) i / L_f)` for `i = 0..L_f`.
pub fn freq_scaling_vector(l_f: usize) -> Result<Vec<f64>> {
    if l_f == 0 {
        return Err(Error::config("frequency scaling vector needs length >= 1"));
    }
    let c = 10000f64.ln() / l_f as f64;
    Ok((0..l_f).map(|i| (-c * i as f64).exp()).collect())
}

/// `[sin(a f_s^T) | cos(a f_s^T)]`, row-major `len(a) x 2 L_f`.
pub fn a_mid(a: &[f64], f_s: &[f64]) -> Vec<f64> {
    let l_f = f_s.len();
    let mut out = vec![0.0; a.len() * 2 * l_f];
    for (r, &av) in a.iter().enumerate() {
        let row = &mut out[r * 2 * l_f..(r + 1) * 2 * l_f];
        for (i, &f) in f_s.iter().enumerate() {
            row[i] = (av * f).sin();
            row[l_f + i] = (av * f).cos();
        }
    }
    out
}

/// Linear path gain to the embedding input (dB).
pub fn path_gain_db(gain: f64) -> f64 {
    10.0 * gain.log10()
}

/// Scale and shift rows, each `rows x L_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgEmbedding {
    pub rows: usize,
    pub l_s: usize,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

fn embed_graph(g: &mut Graph, cfg: &ChannelNetConfig, p: &BoundSet, a_db: &[f64]) -> Result<(Var, Var)> {
    let f_s = freq_scaling_vector(cfg.l_f)?;
    let rows = a_db.len();
    let mid = g.constant(Tensor::new(&[rows, 2 * cfg.l_f], a_mid(a_db, &f_s))?);
    let h = g.linear(mid, p.var("mlp.0.w")?, p.var("mlp.0.b")?);
    let h = g.act(h, Activation::Silu);
    let out = g.linear(h, p.var("mlp.1.w")?, p.var("mlp.1.b")?);
    if g.shape(out)[1] != 2 * cfg.l_s {
        return Err(Error::shape(alloc::format!(
            "embedding MLP emits {} features, need 2 x {}",
            g.shape(out)[1],
            cfg.l_s
        )));
    }
    let l_s = cfg.l_s;
    let half = |off: usize| -> Rc<Vec<usize>> {
        Rc::new((0..rows).flat_map(|r| (0..l_s).map(move |j| r * 2 * l_s + off + j)).collect())
    };
    let scale = g.gather(out, half(0), &[rows, l_s]);
    let shift = g.gather(out, half(l_s), &[rows, l_s]);
    Ok((scale, shift))
}

/// Path-gain embedding for gains `a_db` (already in dB, one per link).
pub fn pg_embed(a_db: &[f64], cfg: &ChannelNetConfig, params: &ParamSet) -> Result<PgEmbedding> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let (scale, shift) = embed_graph(&mut g, cfg, &p, a_db)?;
    Ok(PgEmbedding {
        rows: a_db.len(),
        l_s: cfg.l_s,
        scale: g.value(scale).data().to_vec(),
        shift: g.value(shift).data().to_vec(),
    })
}

// ─── channel estimator ──────────────────────────────────────────────────────

fn conv_act(g: &mut Graph, p: &BoundSet, name: &str, x: Var, stride: usize) -> Result<Var> {
    let w = p.var(&alloc::format!("{name}.w"))?;
    let b = p.var(&alloc::format!("{name}.b"))?;
    let pad = g.shape(w)[2] / 2;
    let y = g.conv2d(x, w, b, stride, pad);
    Ok(g.act(y, Activation::LeakyRelu(LEAKY_SLOPE)))
}

/// Crop `[R, C, H, W]` to the leading `h x w` window.
fn crop(g: &mut Graph, x: Var, h: usize, w: usize) -> Var {
    let s = g.shape(x).to_vec();
    if s[2] == h && s[3] == w {
        return x;
    }
    let (sh, sw) = (s[2], s[3]);
    let idx: Vec<usize> = (0..s[0] * s[1])
        .flat_map(|rc| (0..h).flat_map(move |i| (0..w).map(move |j| (rc * sh + i) * sw + j)))
        .collect();
    g.gather(x, Rc::new(idx), &[s[0], s[1], h, w])
}

fn up_block(g: &mut Graph, p: &BoundSet, level: usize, convs: usize, x: Var, skip: Var) -> Result<Var> {
    let w = p.var(&alloc::format!("up{level}.w"))?;
    let b = p.var(&alloc::format!("up{level}.b"))?;
    let up = g.conv_transpose2d(x, w, b, 2, 1, 1);
    let up = g.act(up, Activation::LeakyRelu(LEAKY_SLOPE));
    let (h, wd) = (g.shape(skip)[2], g.shape(skip)[3]);
    let up = crop(g, up, h, wd);
    let mut y = g.concat_channels(up, skip);
    for i in 0..convs {
        y = conv_act(g, p, &alloc::format!("dec{level}.{i}"), y, 1)?;
    }
    Ok(y)
}

/// `f_c` on interleaved LS estimates `h_ls [B, M, K, E, 2]` with per-link
/// path gains in dB (`B M K` values in row order).
pub fn channel_net(g: &mut Graph, cfg: &NetConfig, p: &BoundSet, h_ls: Var, pg_db: &[f64]) -> Result<Var> {
    let shape = g.shape(h_ls).to_vec();
    let rows = cfg.antennas * cfg.users * shape[0];
    if shape.len() != 5 || shape[1] != cfg.antennas || shape[2] != cfg.users || shape[3] != cfg.grid.res() {
        return Err(Error::shape(alloc::format!("channel net input {shape:?}")));
    }
    if pg_db.len() != rows {
        return Err(Error::shape(alloc::format!("{} path gains for {rows} links", pg_db.len())));
    }
    let c = &cfg.channel;
    let x = unfold(g, h_ls, rows, &cfg.grid);
    let mut f = conv_act(g, p, "front.0", x, 1)?;
    f = conv_act(g, p, "front.1", f, 1)?;
    let (scale, shift) = embed_graph(g, c, p, pg_db)?;
    f = g.film(f, scale, shift);

    let mut e0 = f;
    for i in 0..c.level_convs[0] {
        e0 = conv_act(g, p, &alloc::format!("enc0.{i}"), e0, 1)?;
    }
    // odd sizes: the stride-2 conv's zero border equals explicit zero padding
    let mut e1 = conv_act(g, p, "down1", e0, 2)?;
    for i in 0..c.level_convs[1] {
        e1 = conv_act(g, p, &alloc::format!("enc1.{i}"), e1, 1)?;
    }
    let mut mid = conv_act(g, p, "down2", e1, 2)?;
    for i in 0..c.level_convs[2] {
        mid = conv_act(g, p, &alloc::format!("mid.{i}"), mid, 1)?;
    }
    let d1 = up_block(g, p, 1, c.level_convs[1], mid, e1)?;
    let d0 = up_block(g, p, 0, c.level_convs[0], d1, e0)?;
    let mut out = g.conv2d(d0, p.var("head.w")?, p.var("head.b")?, 1, 0);
    if c.residual {
        out = g.add(out, x);
    }
    Ok(fold(g, out, &cfg.grid, &shape))
}

/// Convenience forward of `f_c` for one frame.
pub fn channel_net_forward(
    h_ls: &ChannelEstimate,
    path_gain: &[f64],
    cfg: &NetConfig,
    params: &NetParams,
) -> Result<ChannelEstimate> {
    let mut g = Graph::new();
    let p = params.w_c.bind(&mut g, false);
    let x = g.constant(Tensor::from_complex(
        &[1, h_ls.antennas(), h_ls.users(), h_ls.res()],
        h_ls.as_slice(),
    )?);
    let db: Vec<f64> = path_gain.iter().map(|&v| path_gain_db(v)).collect();
    let y = channel_net(&mut g, cfg, &p, x, &db)?;
    ChannelTensor::from_vec(h_ls.antennas(), h_ls.users(), h_ls.res(), g.value(y).as_complex().to_vec())
}

// ─── data detector ──────────────────────────────────────────────────────────

/// Per-layer batch statistics collected in training mode.
pub type BnUpdates = Vec<(String, BatchStats)>;

/// `f_d` on interleaved equalized symbols `d [B, K, E, 2]`. With
/// `running = Some(..)` batch norm uses the stored statistics; otherwise
/// batch statistics are used and returned.
pub fn data_net(
    g: &mut Graph,
    cfg: &NetConfig,
    p: &BoundSet,
    running: Option<&ParamSet>,
    d: Var,
) -> Result<(Var, BnUpdates)> {
    let mut updates = Vec::new();
    if cfg.data.bypass {
        return Ok((d, updates));
    }
    let shape = g.shape(d).to_vec();
    if shape.len() != 4 || shape[1] != cfg.users || shape[2] != cfg.grid.res() {
        return Err(Error::shape(alloc::format!("data net input {shape:?}")));
    }
    let rows = shape[0] * cfg.users;
    let mut x = unfold(g, d, rows, &cfg.grid);
    for i in 0..=cfg.data.hidden_layers {
        let name = alloc::format!("conv.{i}");
        let y = g.conv2d(x, p.var(&alloc::format!("{name}.w"))?, p.var(&alloc::format!("{name}.b"))?, 1, 1);
        let bn = alloc::format!("bn.{i}");
        let stats = match running {
            Some(r) => Some((
                r.get(&alloc::format!("{bn}.mean"))?.data(),
                r.get(&alloc::format!("{bn}.var"))?.data(),
            )),
            None => None,
        };
        let gamma = p.var(&alloc::format!("{bn}.gamma"))?;
        let beta = p.var(&alloc::format!("{bn}.beta"))?;
        let (y, batch) = g.batch_norm(y, gamma, beta, BN_EPS, stats);
        if let Some(s) = batch {
            updates.push((bn, s));
        }
        x = g.act(y, Activation::Relu);
    }
    let out = g.conv2d(x, p.var("out.w")?, p.var("out.b")?, 1, 1);
    let out = g.act(out, Activation::Tanh);
    Ok((fold(g, out, &cfg.grid, &shape), updates))
}

/// Convenience evaluation-mode forward of `f_d` for one frame.
pub fn data_net_forward(d: &CMatrix, cfg: &NetConfig, params: &NetParams) -> Result<CMatrix> {
    let mut g = Graph::new();
    let p = params.w_d.bind(&mut g, false);
    let x = g.constant(Tensor::from_complex(&[1, d.rows(), d.cols()], d.as_slice())?);
    let (y, _) = data_net(&mut g, cfg, &p, Some(&params.bn), x)?;
    CMatrix::from_vec(d.rows(), d.cols(), g.value(y).as_complex().to_vec())
}
