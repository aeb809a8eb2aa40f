//! Transmitter side: PDP factors, QAM, superimposition and the channel.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelTensor;
use crate::grid::{dft_rows, PilotBook, ResourceGrid};
use crate::linalg::CMatrix;
use crate::{Error, Result, C64};

/// Pilot share of the transmit power per user and RE, row-major `K x E`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpFactors {
    users: usize,
    res: usize,
    values: Vec<f64>,
}

impl PdpFactors {
    pub fn new(users: usize, res: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != users * res {
            return Err(Error::shape(alloc::format!(
                "PDP factors need {users}x{res} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(alloc::format!("PDP factor {v} outside [0, 1]")));
        }
        Ok(Self { users, res, values })
    }

    pub fn uniform(users: usize, res: usize, rho: f64) -> Result<Self> {
        Self::new(users, res, alloc::vec![rho; users * res])
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
    pub fn get(&self, user: usize, re: usize) -> f64 {
        self.values[user * self.res + re]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.res..(user + 1) * self.res]
    }
}

/// Unconstrained power-control parameters, `K x E`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerWeights {
    pub users: usize,
    pub res: usize,
    pub values: Vec<f64>,
}

impl PowerWeights {
    /// Weights whose sigmoid is `rho` everywhere.
    pub fn uniform(users: usize, res: usize, rho: f64) -> Self {
        Self {
            users,
            res,
            values: alloc::vec![logit(rho); users * res],
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn pdp_from_weights(w: &PowerWeights) -> PdpFactors {
    PdpFactors {
        users: w.users,
        res: w.res,
        values: w.values.iter().map(|&x| sigmoid(x)).collect(),
    }
}

/// Gray-mapped square QAM with unit average energy. `points()[i]` carries
/// the bit label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: u32,
    points: Vec<C64>,
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        let per_axis = match order {
            4 => 2usize,
            16 => 4,
            64 => 8,
            _ => {
                return Err(Error::config(alloc::format!(
                    "unsupported QAM order {order} (expected 4, 16 or 64)"
                )))
            }
        };
        let axis_bits = per_axis.trailing_zeros();
        let norm = (2.0 * ((per_axis * per_axis) as f64 - 1.0) / 3.0).sqrt();
        // amplitude level for each Gray label on one axis
        let mut level_of_label = alloc::vec![0.0; per_axis];
        for i in 0..per_axis {
            let gray = i ^ (i >> 1);
            level_of_label[gray] = (2 * i) as f64 - (per_axis - 1) as f64;
        }
        let points = (0..order)
            .map(|label| {
                let re = level_of_label[label >> axis_bits];
                let im = level_of_label[label & (per_axis - 1)];
                C64::new(re / norm, im / norm)
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol: 2 * axis_bits,
            points,
        })
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    #[inline]
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    /// Index of the nearest point; ties go to the smallest index.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.min((a - b).norm());
            }
        }
        d
    }
}

/// Random QAM symbols with their constellation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QamSymbols {
    pub indices: Vec<usize>,
    pub symbols: Vec<C64>,
}

pub fn modulate_qam(rng: &mut impl Rng, constellation: &Constellation, count: usize) -> QamSymbols {
    let indices: Vec<usize> = (0..count)
        .map(|_| rng.random_range(0..constellation.order()))
        .collect();
    let symbols = indices.iter().map(|&i| constellation.points()[i]).collect();
    QamSymbols { indices, symbols }
}

/// `s_k = sqrt(P rho_k) o phi_k + sqrt(P (1 - rho_k)) o d_k`.
pub fn superimpose(
    rho: &PdpFactors,
    pilots: &PilotBook,
    data: &CMatrix,
    power: f64,
) -> Result<CMatrix> {
    let (k_n, e_n) = (rho.users(), rho.res());
    if pilots.users() != k_n || pilots.res() != e_n || data.rows() != k_n || data.cols() != e_n {
        return Err(Error::shape("superimpose: PDP factors, pilots and data must all be K x E"));
    }
    if !(power >= 0.0) {
        return Err(Error::domain("transmit power must be non-negative"));
    }
    if let Some(v) = rho.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(alloc::format!("PDP factor {v} outside [0, 1]")));
    }
    Ok(CMatrix::from_fn(k_n, e_n, |k, e| {
        let r = rho.get(k, e);
        pilots.get(k, e) * (power * r).sqrt() + data.get(k, e) * (power * (1.0 - r)).sqrt()
    }))
}

/// Circularly-symmetric Gaussian noise with per-sample variance `var`.
pub fn draw_noise(rng: &mut impl Rng, rows: usize, cols: usize, var: f64) -> CMatrix {
    let std = (var / 2.0).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * std, im * std)
    })
}

/// Noiseless part of `Y = sum_k H_k diag(s_k)`.
pub fn propagate(channel: &ChannelTensor, s_tx: &CMatrix) -> Result<CMatrix> {
    let (m_n, k_n, e_n) = (channel.antennas(), channel.users(), channel.res());
    if s_tx.rows() != k_n || s_tx.cols() != e_n {
        return Err(Error::shape(alloc::format!(
            "transmit signal is {}x{}, channel expects {k_n}x{e_n}",
            s_tx.rows(),
            s_tx.cols()
        )));
    }
    let mut y = CMatrix::zeros(m_n, e_n);
    let out = y.as_mut_slice();
    for m in 0..m_n {
        for k in 0..k_n {
            let link = channel.link(m, k);
            let s = s_tx.row(k);
            let row = &mut out[m * e_n..(m + 1) * e_n];
            for e in 0..e_n {
                row[e] += link[e] * s[e];
            }
        }
    }
    Ok(y)
}

/// `Y = sum_k H_k diag(s_k) + N` with `N ~ CN(0, noise_var)`.
pub fn transmit(
    channel: &ChannelTensor,
    s_tx: &CMatrix,
    noise_var: f64,
    rng: &mut impl Rng,
) -> Result<CMatrix> {
    if !(noise_var >= 0.0) {
        return Err(Error::domain(alloc::format!("noise variance {noise_var} is negative")));
    }
    let mut y = propagate(channel, s_tx)?;
    let noise = draw_noise(rng, y.rows(), y.cols(), noise_var);
    for (a, n) in y.as_mut_slice().iter_mut().zip(noise.as_slice()) {
        *a += n;
    }
    Ok(y)
}

/// Traditional-pilot frame: two OFDM symbols of code-multiplexed pilots, data
/// everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct TpFrame {
    pub s_tx: CMatrix,
    /// `true` on pilot REs, indexed by RE.
    pub pilot_mask: Vec<bool>,
    pub pilot_symbols: [usize; 2],
    /// Per-user DFT codes across subcarriers, `K x S`.
    pub pilots: PilotBook,
}

impl TpFrame {
    pub fn data_res(&self) -> impl Iterator<Item = usize> + '_ {
        self.pilot_mask
            .iter()
            .enumerate()
            .filter(|(_, p)| !**p)
            .map(|(e, _)| e)
    }
}

/// Pilot OFDM symbol positions for a `T`-symbol slot: `{2, T - 3}`, i.e.
/// `{2, 11}` for a 14-symbol slot.
pub fn tp_pilot_symbols(symbols: usize) -> Result<[usize; 2]> {
    if symbols < 4 {
        return Err(Error::config(alloc::format!(
            "traditional pilots need at least 4 OFDM symbols, got {symbols}"
        )));
    }
    Ok([2, (symbols - 3).max(3)])
}

pub fn build_tp_frame(data: &CMatrix, power: f64, grid: &ResourceGrid) -> Result<TpFrame> {
    let k_n = data.rows();
    let (s_n, e_n) = (grid.subcarriers(), grid.res());
    if data.cols() != e_n {
        return Err(Error::shape("TP data must be K x E"));
    }
    if k_n > s_n {
        return Err(Error::config(alloc::format!(
            "{k_n} users cannot share {s_n} pilot subcarriers orthogonally"
        )));
    }
    let pilot_symbols = tp_pilot_symbols(grid.symbols())?;
    let pilots = dft_rows(k_n, s_n)?;
    let mut pilot_mask = alloc::vec![false; e_n];
    for &t in &pilot_symbols {
        for s in 0..s_n {
            pilot_mask[grid.re_index(s, t)?] = true;
        }
    }
    let amp = power.sqrt();
    let s_tx = CMatrix::from_fn(k_n, e_n, |k, e| {
        if pilot_mask[e] {
            pilots.get(k, e % s_n) * amp
        } else {
            data.get(k, e) * amp
        }
    });
    Ok(TpFrame {
        s_tx,
        pilot_mask,
        pilot_symbols,
        pilots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_dft_pilots;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(20.0) > 1.0 - 1e-8);
        assert!((sigmoid(-0.8473) - 0.3).abs() < 1e-4);
        assert!((sigmoid(logit(0.3)) - 0.3).abs() < 1e-15);
        let w = PowerWeights::uniform(2, 3, 0.3);
        let rho = pdp_from_weights(&w);
        assert!(rho.as_slice().iter().all(|r| (r - 0.3).abs() < 1e-15));
    }

    #[test]
    fn sigmoid_derivative_matches_central_differences() {
        let h = 1e-5;
        let mut w = -5.0;
        while w <= 5.0 {
            let s = sigmoid(w);
            let analytic = s * (1.0 - s);
            let numeric = (sigmoid(w + h) - sigmoid(w - h)) / (2.0 * h);
            assert!((analytic - numeric).abs() / analytic < 1e-6, "w = {w}");
            w += 0.25;
        }
    }

    #[test]
    fn qam_geometry() {
        let c16 = Constellation::qam(16).unwrap();
        let mean: f64 = c16.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean - 1.0).abs() < 1e-15);
        let max = c16
            .points()
            .iter()
            .map(|p| p.re.abs().max(p.im.abs()))
            .fold(0.0, f64::max);
        assert!((max - 3.0 / 10f64.sqrt()).abs() < 1e-15);
        assert!((c16.min_distance() - 2.0 / 10f64.sqrt()).abs() < 1e-12);

        let c4 = Constellation::qam(4).unwrap();
        for p in c4.points() {
            assert!((p.re.abs() - 0.5f64.sqrt()).abs() < 1e-15);
            assert!((p.im.abs() - 0.5f64.sqrt()).abs() < 1e-15);
        }
        let c64 = Constellation::qam(64).unwrap();
        let mean: f64 = c64.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 64.0;
        assert!((mean - 1.0).abs() < 1e-12);
        assert!(Constellation::qam(8).is_err());
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::qam(16).unwrap();
        let dmin = c.min_distance();
        for (i, a) in c.points().iter().enumerate() {
            for (j, b) in c.points().iter().enumerate() {
                if i != j && ((a - b).norm() - dmin).abs() < 1e-9 {
                    assert_eq!((i ^ j).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn superimpose_limits() {
        let grid = ResourceGrid::new(4, 2).unwrap();
        let pilots = make_dft_pilots(2, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Constellation::qam(16).unwrap();
        let d = modulate_qam(&mut rng, &c, 16);
        let data = CMatrix::from_vec(2, 8, d.symbols).unwrap();
        let p = 2.0;

        let s = superimpose(&PdpFactors::uniform(2, 8, 1.0).unwrap(), &pilots, &data, p).unwrap();
        for k in 0..2 {
            for e in 0..8 {
                assert!((s.get(k, e) - pilots.get(k, e) * p.sqrt()).norm() < 1e-15);
            }
        }
        let s = superimpose(&PdpFactors::uniform(2, 8, 0.0).unwrap(), &pilots, &data, p).unwrap();
        for k in 0..2 {
            for e in 0..8 {
                assert!((s.get(k, e) - data.get(k, e) * p.sqrt()).norm() < 1e-15);
            }
        }
        let s = superimpose(&PdpFactors::uniform(2, 8, 0.3).unwrap(), &pilots, &data, 1.0).unwrap();
        let want = pilots.get(1, 3) * 0.3f64.sqrt() + data.get(1, 3) * 0.7f64.sqrt();
        assert!((s.get(1, 3) - want).norm() < 1e-15);

        assert!(PdpFactors::uniform(2, 8, 1.5).is_err());
    }

    #[test]
    fn transmit_rejects_negative_noise() {
        let h = ChannelTensor::zeros(1, 1, 2);
        let s = CMatrix::zeros(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(transmit(&h, &s, -1.0, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn noiseless_single_user_returns_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut h = ChannelTensor::zeros(3, 1, 5);
        for z in h.as_mut_slice() {
            *z = C64::new(rng.random(), rng.random());
        }
        let s = CMatrix::from_vec(1, 5, alloc::vec![C64::new(1.0, 0.0); 5]).unwrap();
        let y = transmit(&h, &s, 0.0, &mut rng).unwrap();
        for m in 0..3 {
            for e in 0..5 {
                assert_eq!(y.get(m, e), h.get(m, 0, e));
            }
        }
    }

    #[test]
    fn noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = draw_noise(&mut rng, 100, 1000, 0.25);
        let mean = n.energy() / 1e5;
        assert!((mean - 0.25).abs() < 0.25 * 0.02, "{mean}");
    }

    #[test]
    fn tp_frame_layout() {
        let grid = ResourceGrid::new(24, 14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Constellation::qam(16).unwrap();
        let d = modulate_qam(&mut rng, &c, 4 * grid.res());
        let data = CMatrix::from_vec(4, grid.res(), d.symbols).unwrap();
        let f = build_tp_frame(&data, 1.0, &grid).unwrap();
        assert_eq!(f.pilot_symbols, [2, 11]);
        let n_pilot = f.pilot_mask.iter().filter(|p| **p).count();
        assert_eq!(n_pilot, 2 * 24);
        assert_eq!(f.data_res().count(), 12 * 24);
        let frac = f.data_res().count() as f64 / grid.res() as f64;
        assert!((frac - 12.0 / 14.0).abs() < 1e-15);
        for e in 0..grid.res() {
            let (_, t) = grid.grid_index(e).unwrap();
            assert_eq!(f.pilot_mask[e], t == 2 || t == 11);
        }
        let too_many = CMatrix::zeros(30, grid.res());
        assert!(matches!(build_tp_frame(&too_many, 1.0, &grid), Err(Error::Config(_))));
        assert!(tp_pilot_symbols(3).is_err());
        assert_eq!(tp_pilot_symbols(4).unwrap(), [2, 3]);
    }
}
