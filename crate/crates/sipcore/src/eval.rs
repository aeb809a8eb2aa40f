//! Metrics, PDP-factor region statistics and paired SNR sweeps over the
//! classical and learned receivers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;

use crate::channel::{noise_for_energy, ChannelSample, ChannelTensor};
use crate::grid::{make_dft_pilots, ResourceGrid};
use crate::linalg::CMatrix;
use crate::nn::NetParams;
use crate::rx::{cancel_pilots, hard_decision, icedd, mmse_detect, tp_receive, SipLink};
use crate::train::{assemble_batch, build_chain, channel_scale, scaled_energy, stream_rng, trace_of, ChainSpec, Mode};
use crate::tx::{build_tp_frame, draw_noise, modulate_qam, propagate, superimpose, Constellation, PdpFactors};
use crate::{Error, Result, C64};

/// Reported NMSE for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -300.0;
/// Subcarriers per resource block.
pub const RB_SIZE: usize = 12;

/// `10 log10(err / reference)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(err: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::domain("NMSE reference has zero energy"));
    }
    Ok((10.0 * (err / reference).log10()).max(NMSE_FLOOR_DB))
}

pub fn nmse(h: &ChannelTensor, h_hat: &ChannelTensor) -> Result<f64> {
    if !h.same_shape(h_hat) {
        return Err(Error::shape("NMSE: estimate shape differs from the channel"));
    }
    let err: f64 = h.as_slice().iter().zip(h_hat.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    nmse_db(err, h.energy())
}

/// Symbol and bit error rates of hard decisions (Gray label = index).
pub fn error_rates(truth: &[usize], decided: &[usize], constellation: &Constellation) -> Result<(f64, f64)> {
    if truth.len() != decided.len() {
        return Err(Error::shape("error_rates: length mismatch"));
    }
    if truth.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (sym, bits) = error_counts(truth, decided);
    let n = truth.len() as f64;
    Ok((sym as f64 / n, bits as f64 / (n * constellation.bits_per_symbol() as f64)))
}

fn error_counts(truth: &[usize], decided: &[usize]) -> (usize, usize) {
    truth.iter().zip(decided).fold((0, 0), |(s, b), (&t, &d)| {
        (s + usize::from(t != d), b + (t ^ d).count_ones() as usize)
    })
}

// ─── PDP-factor regions ─────────────────────────────────────────────────────

/// Boolean masks over the RE index `e = s + S t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub grid: ResourceGrid,
    pub whole: Vec<bool>,
    pub head_tail_rbs: Vec<bool>,
    pub middle_rbs: Vec<bool>,
    pub edge_symbols: Vec<bool>,
    pub middle_symbols: Vec<bool>,
}

impl RegionMask {
    pub fn regions(&self) -> [(&'static str, &[bool]); 5] {
        [
            ("whole", &self.whole),
            ("head-tail RBs", &self.head_tail_rbs),
            ("middle RBs", &self.middle_rbs),
            ("edge symbols", &self.edge_symbols),
            ("middle symbols", &self.middle_symbols),
        ]
    }
}

/// Head-tail RBs are the first and last resource blocks; middle symbols are
/// `2..=T-3` (zero-based).
pub fn make_region_masks(grid: &ResourceGrid) -> Result<RegionMask> {
    let (s_n, t_n) = (grid.subcarriers(), grid.symbols());
    if s_n % RB_SIZE != 0 || s_n < 2 * RB_SIZE {
        return Err(Error::config(alloc::format!(
            "{s_n} subcarriers are not a whole number of at least two {RB_SIZE}-subcarrier RBs"
        )));
    }
    if t_n < 4 {
        return Err(Error::config(alloc::format!("need at least 4 OFDM symbols, got {t_n}")));
    }
    let e_n = grid.res();
    let build = |f: &dyn Fn(usize, usize) -> bool| -> Vec<bool> { (0..e_n).map(|e| f(e % s_n, e / s_n)).collect() };
    let head_tail = |s: usize| s < RB_SIZE || s >= s_n - RB_SIZE;
    let middle_sym = |t: usize| (2..=t_n - 3).contains(&t);
    Ok(RegionMask {
        grid: *grid,
        whole: vec![true; e_n],
        head_tail_rbs: build(&|s, _| head_tail(s)),
        middle_rbs: build(&|s, _| !head_tail(s)),
        edge_symbols: build(&|_, t| !middle_sym(t)),
        middle_symbols: build(&|_, t| middle_sym(t)),
    })
}

/// Mean and population standard deviation in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl RegionStat {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let count = values.clone().count();
        if count == 0 {
            return None;
        }
        let mean = values.clone().sum::<f64>() / count as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        Some(Self { mean, std: var.sqrt(), count })
    }
}

impl fmt::Display for RegionStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}±{:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub region: &'static str,
    /// Pooled over users and REs; `None` for an empty region.
    pub pooled: Option<RegionStat>,
    pub per_user: Vec<Option<RegionStat>>,
}

pub fn pdp_region_stats(rho: &PdpFactors, masks: &RegionMask) -> Result<Vec<RegionReport>> {
    if rho.res() != masks.grid.res() {
        return Err(Error::shape("PDP factors do not match the region grid"));
    }
    let k_n = rho.users();
    Ok(masks
        .regions()
        .into_iter()
        .map(|(region, mask)| {
            let sel = move |k: usize| {
                rho.row(k).iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| 100.0 * v)
            };
            RegionReport {
                region,
                pooled: RegionStat::of((0..k_n).flat_map(sel)),
                per_user: (0..k_n).map(|k| RegionStat::of(sel(k))).collect(),
            }
        })
        .collect())
}

// ─── sweeps ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Tp,
    SipUniform,
    SipIcedd,
    SipceAblation,
    Casip,
    PerfectCsi,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Tp,
        Scheme::SipUniform,
        Scheme::SipIcedd,
        Scheme::SipceAblation,
        Scheme::Casip,
        Scheme::PerfectCsi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Tp => "TP",
            Scheme::SipUniform => "SIP-uniform",
            Scheme::SipIcedd => "SIP-ICEDD",
            Scheme::SipceAblation => "SIPCE-ablation",
            Scheme::Casip => "CaSIP",
            Scheme::PerfectCsi => "perfect-CSI",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(alloc::format!("unknown scheme {s}")))
    }

    pub fn learned(self) -> bool {
        matches!(self, Scheme::SipceAblation | Scheme::Casip)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub scheme: String,
    pub snr_db: f64,
    pub velocity_kmh: f64,
    pub nmse_db: f64,
    pub symbol_mse: f64,
    pub ser: f64,
    pub ber: f64,
    pub samples: usize,
}

/// A trained link.
#[derive(Debug, Clone)]
pub struct LearnedModel {
    pub spec: ChainSpec,
    pub params: NetParams,
    pub channel_amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub power: f64,
    pub qam_order: usize,
    /// PDP factor of the uniform superimposed-pilot baselines.
    pub rho_uniform: f64,
    pub icedd_iterations: usize,
    pub window: (usize, usize),
}

#[derive(Default, Clone)]
struct Acc {
    err: f64,
    reference: f64,
    sq: f64,
    symbols: usize,
    sym_err: usize,
    bit_err: usize,
}

impl Acc {
    fn channel(&mut self, h: &[C64], h_hat: &[C64]) {
        for (a, b) in h.iter().zip(h_hat) {
            self.err += (a - b).norm_sqr();
            self.reference += a.norm_sqr();
        }
    }

    /// Accumulate symbols on the REs selected by `keep`.
    fn data(&mut self, truth: &[usize], points: &[C64], soft: &CMatrix, decided: &[usize], keep: &dyn Fn(usize) -> bool) {
        let e_n = soft.cols();
        for (i, (&t, &d)) in truth.iter().zip(decided).enumerate() {
            if !keep(i % e_n) {
                continue;
            }
            self.sq += (points[t] - soft.as_slice()[i]).norm_sqr();
            self.symbols += 1;
            self.sym_err += usize::from(t != d);
            self.bit_err += (t ^ d).count_ones() as usize;
        }
    }
}

/// Frame realizations shared by every scheme of one trial.
struct Frame {
    data_idx: Vec<usize>,
    unit_noise: Vec<C64>,
}

/// Paired Monte-Carlo sweep: per `(trial, sample)` one set of data symbols
/// and unit-variance noise is drawn and reused, scaled, by every scheme and
/// SNR. Channels are scaled by the learned model's amplitude factor, or
/// normalized on `samples` when no learned scheme is requested.
pub fn sweep(
    cfg: &SweepConfig,
    samples: &[&ChannelSample],
    casip: Option<&LearnedModel>,
    sipce: Option<&LearnedModel>,
) -> Result<Vec<MetricRecord>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.trials == 0 {
        return Err(Error::config("sweep needs at least one trial"));
    }
    for &s in &cfg.schemes {
        let missing = match s {
            Scheme::Casip => casip.is_none(),
            Scheme::SipceAblation => sipce.is_none(),
            _ => false,
        };
        if missing {
            return Err(Error::config(alloc::format!("no checkpoint for scheme {s}")));
        }
    }
    let first = samples[0];
    let grid = first.grid;
    let (m_n, k_n, e_n) = (first.antennas(), first.users(), grid.res());
    let amp = match casip.or(sipce) {
        Some(m) if cfg.schemes.iter().any(|s| s.learned()) => m.channel_amp,
        _ => channel_scale(samples)?,
    };
    let energy = scaled_energy(samples, amp)?;
    let constellation = Constellation::qam(cfg.qam_order)?;
    let pilots = make_dft_pilots(k_n, &grid)?;
    let rho_u = PdpFactors::uniform(k_n, e_n, cfg.rho_uniform)?;
    let velocity = first.meta.velocity_kmh;

    let mut acc = vec![vec![Acc::default(); cfg.snr_db.len()]; cfg.schemes.len()];
    for trial in 0..cfg.trials {
        for (i, &sample) in samples.iter().enumerate() {
            let mut rng = stream_rng(cfg.seed, (trial * samples.len() + i) as u64 + 1);
            let frame = Frame {
                data_idx: modulate_qam(&mut rng, &constellation, k_n * e_n).indices,
                unit_noise: draw_noise(&mut rng, m_n, e_n, 1.0).into_vec(),
            };
            let mut h = sample.h.clone();
            h.scale(amp);
            let data = CMatrix::from_vec(
                k_n,
                e_n,
                frame.data_idx.iter().map(|&j| constellation.points()[j]).collect(),
            )?;
            for (si, &snr) in cfg.snr_db.iter().enumerate() {
                let nv = noise_for_energy(cfg.power, energy, snr)?;
                let noise: Vec<C64> = frame.unit_noise.iter().map(|z| z * nv.sqrt()).collect();
                let received = |s_tx: &CMatrix| -> Result<CMatrix> {
                    let mut y = propagate(&h, s_tx)?;
                    for (a, n) in y.as_mut_slice().iter_mut().zip(&noise) {
                        *a += n;
                    }
                    Ok(y)
                };
                let link = SipLink {
                    grid,
                    pilots: &pilots,
                    rho: &rho_u,
                    power: cfg.power,
                    noise_var: nv,
                };
                for (ci, &scheme) in cfg.schemes.iter().enumerate() {
                    let a = &mut acc[ci][si];
                    let all = |_: usize| true;
                    match scheme {
                        Scheme::Tp => {
                            let tp = build_tp_frame(&data, cfg.power, &grid)?;
                            let y = received(&tp.s_tx)?;
                            let (h_hat, soft) = tp_receive(&y, &tp, cfg.power, nv, &grid)?;
                            a.channel(h.as_slice(), h_hat.as_slice());
                            let decided = hard_decision(&soft, &constellation);
                            a.data(&frame.data_idx, constellation.points(), &soft, &decided, &|e| !tp.pilot_mask[e]);
                        }
                        Scheme::SipUniform | Scheme::SipIcedd => {
                            let iters = if scheme == Scheme::SipUniform { 1 } else { cfg.icedd_iterations };
                            let y = received(&superimpose(&rho_u, &pilots, &data, cfg.power)?)?;
                            let steps = icedd(&y, &link, iters, cfg.window, &constellation)?;
                            let last = steps.last().expect("at least one iteration");
                            a.channel(h.as_slice(), last.estimate.as_slice());
                            a.data(&frame.data_idx, constellation.points(), &last.soft, &last.decided, &all);
                        }
                        Scheme::PerfectCsi => {
                            let y = received(&superimpose(&rho_u, &pilots, &data, cfg.power)?)?;
                            let ysp = cancel_pilots(&y, &h, &rho_u, &pilots, cfg.power)?;
                            let soft = mmse_detect(&ysp, &h, &rho_u, cfg.power, nv)?;
                            a.channel(h.as_slice(), h.as_slice());
                            let decided = hard_decision(&soft, &constellation);
                            a.data(&frame.data_idx, constellation.points(), &soft, &decided, &all);
                        }
                        Scheme::Casip | Scheme::SipceAblation => {
                            let model = if scheme == Scheme::Casip { casip } else { sipce }.expect("checked above");
                            let batch = assemble_batch(
                                &model.spec,
                                &[sample],
                                amp,
                                nv,
                                frame.data_idx.clone(),
                                noise.clone(),
                            )?;
                            let c = build_chain(&model.spec, &model.params, &batch, Mode::Eval, false)?;
                            let t = trace_of(&model.spec, &batch, &c, 0)?;
                            let soft = if scheme == Scheme::Casip { t.d_hat } else { t.d_mmse };
                            a.channel(t.h.as_slice(), t.h_hat.as_slice());
                            let decided = hard_decision(&soft, &constellation);
                            a.data(&frame.data_idx, constellation.points(), &soft, &decided, &all);
                        }
                    }
                }
            }
        }
    }
    let bits = constellation.bits_per_symbol() as f64;
    let mut out = Vec::with_capacity(cfg.schemes.len() * cfg.snr_db.len());
    for (ci, &scheme) in cfg.schemes.iter().enumerate() {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            let a = &acc[ci][si];
            let n = a.symbols.max(1) as f64;
            out.push(MetricRecord {
                scheme: String::from(scheme.name()),
                snr_db: snr,
                velocity_kmh: velocity,
                nmse_db: nmse_db(a.err, a.reference)?,
                symbol_mse: a.sq / n,
                ser: a.sym_err as f64 / n,
                ber: a.bit_err as f64 / (n * bits),
                samples: cfg.trials * samples.len(),
            });
        }
    }
    Ok(out)
}
