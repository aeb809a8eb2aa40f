//! Fading channel datasets.
//!
//! Channels follow a tapped-delay-line model: an exponential power-delay
//! profile scaled to a requested RMS delay spread, each tap evolving in time
//! as a sum-of-sinusoids Jakes process. Per-user responses are scaled by the
//! large-scale path gain so that `E{|H_{m,k,e}|^2} = A_{m,k}`.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::grid::ResourceGrid;
use crate::{Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex tensor indexed `[m, k, e]` (antenna, user, RE), RE fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    antennas: usize,
    users: usize,
    res: usize,
    data: Vec<C64>,
}

/// Channel estimates share the layout of true channels.
pub type ChannelEstimate = ChannelTensor;

impl ChannelTensor {
    pub fn zeros(antennas: usize, users: usize, res: usize) -> Self {
        Self {
            antennas,
            users,
            res,
            data: alloc::vec![C64::new(0.0, 0.0); antennas * users * res],
        }
    }

    pub fn from_vec(antennas: usize, users: usize, res: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != antennas * users * res {
            return Err(Error::shape(alloc::format!(
                "channel tensor {antennas}x{users}x{res} needs {} entries, got {}",
                antennas * users * res,
                data.len()
            )));
        }
        Ok(Self {
            antennas,
            users,
            res,
            data,
        })
    }

    #[inline]
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    #[inline]
    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn res(&self) -> usize {
        self.res
    }

    #[inline]
    pub fn index(&self, m: usize, k: usize, e: usize) -> usize {
        (m * self.users + k) * self.res + e
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize, e: usize) -> C64 {
        self.data[self.index(m, k, e)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, k: usize, e: usize, v: C64) {
        let i = self.index(m, k, e);
        self.data[i] = v;
    }

    /// The `E` responses of one antenna/user link.
    #[inline]
    pub fn link(&self, m: usize, k: usize) -> &[C64] {
        let start = (m * self.users + k) * self.res;
        &self.data[start..start + self.res]
    }

    #[inline]
    pub fn link_mut(&mut self, m: usize, k: usize) -> &mut [C64] {
        let start = (m * self.users + k) * self.res;
        &mut self.data[start..start + self.res]
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn same_shape(&self, other: &ChannelTensor) -> bool {
        self.antennas == other.antennas && self.users == other.users && self.res == other.res
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub velocity_kmh: f64,
    pub delay_spread_ns: f64,
    /// Horizontal user-BS distances, one per user.
    pub distances_m: Vec<f64>,
    pub seed: u64,
}

/// One channel realization over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub grid: ResourceGrid,
    pub h: ChannelTensor,
    /// Linear power gain, row-major `M x K`.
    pub path_gain: Vec<f64>,
    pub meta: SampleMeta,
}

impl ChannelSample {
    pub fn antennas(&self) -> usize {
        self.h.antennas()
    }

    pub fn users(&self) -> usize {
        self.h.users()
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.res() != self.grid.res() {
            return Err(Error::shape("channel RE count does not match the grid"));
        }
        if self.path_gain.len() != self.antennas() * self.users() {
            return Err(Error::shape("path gain must be M x K"));
        }
        if self.path_gain.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::domain("path gains must be strictly positive"));
        }
        Ok(())
    }

    /// Per-antenna, per-RE energy of the summed user channels,
    /// `||sum_k H_k||_F^2 / (M E)`.
    pub fn summed_energy(&self) -> f64 {
        let (m_n, k_n, e_n) = (self.h.antennas(), self.h.users(), self.h.res());
        let mut acc = 0.0;
        for m in 0..m_n {
            for e in 0..e_n {
                let s: C64 = (0..k_n).map(|k| self.h.get(m, k, e)).sum();
                acc += s.norm_sqr();
            }
        }
        acc / (m_n * e_n) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub antennas: usize,
    pub users: usize,
    pub grid: ResourceGrid,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub velocity_kmh: f64,
    /// Per-sample RMS delay spread is drawn uniformly from this range.
    pub delay_spread_ns: (f64, f64),
    /// Horizontal distance range for user placement.
    pub distance_m: (f64, f64),
    pub bs_height_m: f64,
    pub ut_height_m: f64,
    pub taps: usize,
    pub samples: usize,
    pub distance_classes: usize,
    /// Sinusoids per tap in the Jakes generator.
    pub oscillators: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier frequency", self.carrier_hz),
            ("subcarrier spacing", self.subcarrier_spacing_hz),
            ("minimum delay spread", self.delay_spread_ns.0),
            ("minimum distance", self.distance_m.0),
            ("BS height", self.bs_height_m),
            ("UT height", self.ut_height_m),
        ];
        for (what, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(alloc::format!("{what} must be positive, got {v}")));
            }
        }
        if !(self.velocity_kmh >= 0.0) {
            return Err(Error::config("velocity must be non-negative"));
        }
        if self.delay_spread_ns.1 < self.delay_spread_ns.0 {
            return Err(Error::config("delay spread range is empty"));
        }
        if self.distance_m.1 < self.distance_m.0 {
            return Err(Error::config("distance range is empty"));
        }
        if self.antennas == 0 || self.users == 0 {
            return Err(Error::config("need at least one antenna and one user"));
        }
        if self.taps == 0 {
            return Err(Error::config("tap count must be at least 1"));
        }
        if self.oscillators == 0 {
            return Err(Error::config("Jakes generator needs at least one oscillator"));
        }
        if self.distance_classes == 0 {
            return Err(Error::config("need at least one distance class"));
        }
        Ok(())
    }

    /// Maximum Doppler shift `v fc / c` in Hz.
    pub fn doppler_hz(&self) -> f64 {
        doppler_hz(self.velocity_kmh, self.carrier_hz)
    }

    /// OFDM symbol duration including a normal cyclic prefix (14 symbols per
    /// `15 / (14 df)` slot share).
    pub fn symbol_duration_s(&self) -> f64 {
        15.0 / (14.0 * self.subcarrier_spacing_hz)
    }
}

pub fn doppler_hz(velocity_kmh: f64, carrier_hz: f64) -> f64 {
    velocity_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

/// Large-scale path gain (linear power) from 3D distance in metres and
/// carrier frequency in GHz: `PL = 28 + 22 log10(d) + 20 log10(fc)` dB.
pub fn path_gain_from_distance(d3d_m: f64, carrier_ghz: f64) -> Result<f64> {
    if !(d3d_m > 0.0) || !(carrier_ghz > 0.0) {
        return Err(Error::domain(alloc::format!(
            "path loss needs positive distance and frequency, got d = {d3d_m}, fc = {carrier_ghz}"
        )));
    }
    let pl_db = 28.0 + 22.0 * d3d_m.log10() + 20.0 * carrier_ghz.log10();
    Ok(10f64.powf(-pl_db / 10.0))
}

/// Tap delays (s) and normalized powers.
#[derive(Debug, Clone, PartialEq)]
pub struct TapProfile {
    pub delays_s: Vec<f64>,
    pub powers: Vec<f64>,
}

impl TapProfile {
    pub fn rms_delay_spread(&self) -> f64 {
        let total: f64 = self.powers.iter().sum();
        let mean: f64 = self
            .delays_s
            .iter()
            .zip(&self.powers)
            .map(|(d, p)| d * p)
            .sum::<f64>()
            / total;
        let second: f64 = self
            .delays_s
            .iter()
            .zip(&self.powers)
            .map(|(d, p)| d * d * p)
            .sum::<f64>()
            / total;
        (second - mean * mean).max(0.0).sqrt()
    }
}

/// Exponential power-delay profile with `taps` uniformly spaced taps spanning
/// four times the requested RMS delay spread. The decay constant is found by
/// bisection so the discrete profile hits `rms_s` exactly.
pub fn exponential_profile(rms_s: f64, taps: usize) -> Result<TapProfile> {
    if taps == 0 {
        return Err(Error::config("tap count must be at least 1"));
    }
    if !(rms_s > 0.0) {
        return Err(Error::config(alloc::format!(
            "delay spread must be positive, got {rms_s}"
        )));
    }
    if taps == 1 {
        return Ok(TapProfile {
            delays_s: alloc::vec![0.0],
            powers: alloc::vec![1.0],
        });
    }
    let spacing = 4.0 * rms_s / (taps - 1) as f64;
    let delays_s: Vec<f64> = (0..taps).map(|l| l as f64 * spacing).collect();
    let profile = |decay: f64| {
        let raw: Vec<f64> = delays_s.iter().map(|d| (-d / decay).exp()).collect();
        let total: f64 = raw.iter().sum();
        TapProfile {
            delays_s: delays_s.clone(),
            powers: raw.into_iter().map(|p| p / total).collect(),
        }
    };
    // rms grows monotonically with the decay constant
    let (mut lo, mut hi) = (rms_s * 1e-3, rms_s * 1e3);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if profile(mid).rms_delay_spread() < rms_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(profile((lo * hi).sqrt()))
}

/// Sum-of-sinusoids Jakes process: `(1/sqrt(N)) sum_n exp(j(2 pi fD cos(a_n) t + p_n))`.
pub(crate) struct JakesTap {
    doppler_cos: Vec<f64>,
    phases: Vec<f64>,
}

impl JakesTap {
    pub(crate) fn draw(rng: &mut impl Rng, oscillators: usize, doppler_hz: f64) -> Self {
        let mut doppler_cos = Vec::with_capacity(oscillators);
        let mut phases = Vec::with_capacity(oscillators);
        for _ in 0..oscillators {
            let angle: f64 = rng.random::<f64>() * 2.0 * PI;
            doppler_cos.push(2.0 * PI * doppler_hz * angle.cos());
            phases.push(rng.random::<f64>() * 2.0 * PI);
        }
        Self {
            doppler_cos,
            phases,
        }
    }

    pub(crate) fn at(&self, t: f64) -> C64 {
        let acc: C64 = self
            .doppler_cos
            .iter()
            .zip(&self.phases)
            .map(|(w, p)| C64::from_polar(1.0, w * t + p))
            .sum();
        acc / (self.phases.len() as f64).sqrt()
    }
}

fn d3d(horizontal_m: f64, cfg: &SimConfig) -> f64 {
    let dh = cfg.bs_height_m - cfg.ut_height_m;
    (horizontal_m * horizontal_m + dh * dh).sqrt()
}

/// Generate one sample for users at the given horizontal distances.
pub fn gen_tdl_channel(
    cfg: &SimConfig,
    distances_m: &[f64],
    delay_spread_ns: f64,
    seed: u64,
) -> Result<ChannelSample> {
    cfg.validate()?;
    if distances_m.len() != cfg.users {
        return Err(Error::config(alloc::format!(
            "need {} user distances, got {}",
            cfg.users,
            distances_m.len()
        )));
    }
    let profile = exponential_profile(delay_spread_ns * 1e-9, cfg.taps)?;
    let gains = distances_m
        .iter()
        .map(|&d| path_gain_from_distance(d3d(d, cfg), cfg.carrier_hz * 1e-9))
        .collect::<Result<Vec<_>>>()?;

    let (s_n, t_n) = (cfg.grid.subcarriers(), cfg.grid.symbols());
    let taps = profile.powers.len();
    // frequency phase of each tap at each subcarrier, weighted by sqrt(power)
    let mut steering = Vec::with_capacity(s_n * taps);
    for s in 0..s_n {
        for l in 0..taps {
            let phase = -2.0 * PI * s as f64 * cfg.subcarrier_spacing_hz * profile.delays_s[l];
            steering.push(C64::from_polar(profile.powers[l].sqrt(), phase));
        }
    }
    let fd = cfg.doppler_hz();
    let ts = cfg.symbol_duration_s();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = ChannelTensor::zeros(cfg.antennas, cfg.users, cfg.grid.res());
    let mut tap_series = alloc::vec![C64::new(0.0, 0.0); taps * t_n];
    for m in 0..cfg.antennas {
        for k in 0..cfg.users {
            for l in 0..taps {
                let tap = JakesTap::draw(&mut rng, cfg.oscillators, fd);
                for t in 0..t_n {
                    tap_series[l * t_n + t] = tap.at(t as f64 * ts);
                }
            }
            let amp = gains[k].sqrt();
            let link = h.link_mut(m, k);
            for t in 0..t_n {
                for s in 0..s_n {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..taps {
                        acc += steering[s * taps + l] * tap_series[l * t_n + t];
                    }
                    link[s + s_n * t] = acc * amp;
                }
            }
        }
    }
    let mut path_gain = Vec::with_capacity(cfg.antennas * cfg.users);
    for _ in 0..cfg.antennas {
        path_gain.extend_from_slice(&gains);
    }
    Ok(ChannelSample {
        grid: cfg.grid,
        h,
        path_gain,
        meta: SampleMeta {
            velocity_kmh: cfg.velocity_kmh,
            delay_spread_ns,
            distances_m: distances_m.to_vec(),
            seed,
        },
    })
}

/// Generate `cfg.samples` samples. Users are placed in `cfg.distance_classes`
/// fixed location classes; sample `i` belongs to class `i mod classes`.
pub fn gen_dataset(cfg: &SimConfig, seed: u64) -> Result<Vec<ChannelSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<Vec<f64>> = (0..cfg.distance_classes)
        .map(|_| {
            (0..cfg.users)
                .map(|_| rng.random_range(cfg.distance_m.0..=cfg.distance_m.1))
                .collect()
        })
        .collect();
    (0..cfg.samples)
        .map(|i| {
            let spread = if cfg.delay_spread_ns.1 > cfg.delay_spread_ns.0 {
                rng.random_range(cfg.delay_spread_ns.0..cfg.delay_spread_ns.1)
            } else {
                cfg.delay_spread_ns.0
            };
            let sample_seed = rng.next_u64();
            gen_tdl_channel(cfg, &classes[i % classes.len()], spread, sample_seed)
        })
        .collect()
}

/// Number of distinct user-distance configurations in a dataset.
pub fn distance_classes(samples: &[ChannelSample]) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for s in samples {
        let d = s.meta.distances_m.as_slice();
        if !seen.iter().any(|x| *x == d) {
            seen.push(d);
        }
    }
    seen.len()
}

/// Mean summed-channel energy per antenna per RE over a dataset.
pub fn mean_summed_energy(samples: &[ChannelSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(samples.iter().map(ChannelSample::summed_energy).sum::<f64>() / samples.len() as f64)
}

/// Noise variance giving `Es/sigma^2 = target_db` for transmit power `power`.
pub fn calibrate_noise(power: f64, samples: &[ChannelSample], target_db: f64) -> Result<f64> {
    let energy = mean_summed_energy(samples)?;
    noise_for_energy(power, energy, target_db)
}

/// [`calibrate_noise`] with a precomputed mean summed-channel energy.
pub fn noise_for_energy(power: f64, energy: f64, target_db: f64) -> Result<f64> {
    if !target_db.is_finite() {
        return Err(Error::domain("Es/sigma^2 target must be finite"));
    }
    Ok(power * energy / 10f64.powf(target_db / 10.0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 7:1:1 split into `floor(7n/9)`, `floor(n/9)` and the remainder.
pub fn split_dataset(n: usize, seed: u64) -> Result<DatasetSplit> {
    if n < 9 {
        return Err(Error::config(alloc::format!(
            "a 7:1:1 split needs at least 9 samples, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = 7 * n / 9;
    let n_val = n / 9;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(DatasetSplit {
        train: idx,
        val,
        test,
    })
}
