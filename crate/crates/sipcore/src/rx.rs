//! Classical receivers: per-RE LS, pilot cancellation, MMSE detection,
//! iterative estimation/detection and the traditional-pilot baseline.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;

use crate::channel::{ChannelEstimate, ChannelTensor};
use crate::grid::{PilotBook, ResourceGrid};
use crate::linalg::{regularized_gram, CMatrix, HermitianSolver};
use crate::tx::{Constellation, PdpFactors, TpFrame};
use crate::{Error, Result, C64};

/// Link dimensions shared by the per-RE kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub antennas: usize,
    pub users: usize,
    pub res: usize,
}

// ─── slice kernels (shared with the differentiable chain) ───────────────────

/// `H[m,k,e] = Y[m,e] / (sqrt(P rho[k,e]) phi[k,e])`
pub(crate) fn ls_kernel(
    d: Dims,
    y: &[C64],
    rho: &[f64],
    pilots: &[C64],
    power: f64,
    out: &mut [C64],
) -> Result<()> {
    for k in 0..d.users {
        for e in 0..d.res {
            if !(rho[k * d.res + e] > 0.0) {
                return Err(Error::SingularPilot { user: k, re: e });
            }
        }
    }
    for m in 0..d.antennas {
        let yr = &y[m * d.res..(m + 1) * d.res];
        for k in 0..d.users {
            let o = &mut out[(m * d.users + k) * d.res..(m * d.users + k + 1) * d.res];
            for e in 0..d.res {
                let amp = pilots[k * d.res + e] * (power * rho[k * d.res + e]).sqrt();
                o[e] = yr[e] / amp;
            }
        }
    }
    Ok(())
}

/// `Y[m,e] - sum_k H[m,k,e] sqrt(P rho[k,e]) phi[k,e]`
pub(crate) fn cancel_kernel(
    d: Dims,
    y: &[C64],
    h: &[C64],
    rho: &[f64],
    pilots: &[C64],
    power: f64,
    out: &mut [C64],
) {
    out.copy_from_slice(y);
    for m in 0..d.antennas {
        let o = &mut out[m * d.res..(m + 1) * d.res];
        for k in 0..d.users {
            let hl = &h[(m * d.users + k) * d.res..(m * d.users + k + 1) * d.res];
            for e in 0..d.res {
                let amp = pilots[k * d.res + e] * (power * rho[k * d.res + e]).sqrt();
                o[e] -= hl[e] * amp;
            }
        }
    }
}

/// Builds `G = H_e diag(sqrt(P (1 - rho_e)))` for one RE, row-major `M x K`.
#[inline]
pub(crate) fn data_gain_matrix(d: Dims, h: &[C64], rho: &[f64], power: f64, e: usize, g: &mut [C64]) {
    for m in 0..d.antennas {
        for k in 0..d.users {
            let c = (power * (1.0 - rho[k * d.res + e])).sqrt();
            g[m * d.users + k] = h[(m * d.users + k) * d.res + e] * c;
        }
    }
}

/// Per-RE `d_e = (G^H G + sigma^2 I)^{-1} G^H y_e`, output `K x E`.
pub(crate) fn mmse_kernel(
    d: Dims,
    y: &[C64],
    h: &[C64],
    rho: &[f64],
    power: f64,
    noise_var: f64,
    out: &mut [C64],
) -> Result<()> {
    let (m_n, k_n) = (d.antennas, d.users);
    let mut g = alloc::vec![C64::new(0.0, 0.0); m_n * k_n];
    let mut gram = alloc::vec![C64::new(0.0, 0.0); k_n * k_n];
    let mut rhs = alloc::vec![C64::new(0.0, 0.0); k_n];
    for e in 0..d.res {
        data_gain_matrix(d, h, rho, power, e, &mut g);
        regularized_gram(&g, m_n, k_n, noise_var, &mut gram);
        for (k, r) in rhs.iter_mut().enumerate() {
            *r = (0..m_n)
                .map(|m| g[m * k_n + k].conj() * y[m * d.res + e])
                .sum();
        }
        HermitianSolver::new(k_n, &gram)?.solve_in_place(&mut rhs);
        for k in 0..k_n {
            out[k * d.res + e] = rhs[k];
        }
    }
    Ok(())
}

// ─── public API ─────────────────────────────────────────────────────────────

fn check_link(y: &CMatrix, rho: &PdpFactors, pilots: &PilotBook) -> Result<Dims> {
    let d = Dims {
        antennas: y.rows(),
        users: rho.users(),
        res: y.cols(),
    };
    if rho.res() != d.res || pilots.users() != d.users || pilots.res() != d.res {
        return Err(Error::shape(alloc::format!(
            "received {}x{}, PDP factors {}x{}, pilots {}x{}",
            y.rows(),
            y.cols(),
            rho.users(),
            rho.res(),
            pilots.users(),
            pilots.res()
        )));
    }
    Ok(d)
}

fn check_estimate(d: Dims, h: &ChannelTensor) -> Result<()> {
    if h.antennas() != d.antennas || h.users() != d.users || h.res() != d.res {
        return Err(Error::shape(alloc::format!(
            "channel estimate is {}x{}x{}, expected {}x{}x{}",
            h.antennas(),
            h.users(),
            h.res(),
            d.antennas,
            d.users,
            d.res
        )));
    }
    Ok(())
}

/// Per-RE least-squares estimate `H_k = Y diag(sqrt(p_k) o phi_k)^{-1}`.
///
/// Each estimate still carries the other users' pilots and all data symbols.
pub fn ls_estimate(
    y: &CMatrix,
    rho: &PdpFactors,
    pilots: &PilotBook,
    power: f64,
) -> Result<ChannelEstimate> {
    let d = check_link(y, rho, pilots)?;
    let mut h = ChannelTensor::zeros(d.antennas, d.users, d.res);
    ls_kernel(d, y.as_slice(), rho.as_slice(), pilots.as_slice(), power, h.as_mut_slice())?;
    Ok(h)
}

/// Box average over a `ws x wt` (subcarrier x symbol) neighbourhood of every
/// link; the window is truncated at the grid edges.
pub fn despread_smooth(
    h: &ChannelTensor,
    grid: &ResourceGrid,
    window: (usize, usize),
) -> Result<ChannelEstimate> {
    let (ws, wt) = window;
    if ws == 0 || wt == 0 || ws % 2 == 0 || wt % 2 == 0 {
        return Err(Error::config(alloc::format!(
            "smoothing window must be odd in both axes, got {ws}x{wt}"
        )));
    }
    if h.res() != grid.res() {
        return Err(Error::shape("channel estimate does not match the grid"));
    }
    if window == (1, 1) {
        return Ok(h.clone());
    }
    let (s_n, t_n) = (grid.subcarriers(), grid.symbols());
    let (hs, ht) = (ws / 2, wt / 2);
    let mut out = ChannelTensor::zeros(h.antennas(), h.users(), h.res());
    for m in 0..h.antennas() {
        for k in 0..h.users() {
            let src = h.link(m, k);
            let dst = out.link_mut(m, k);
            for t in 0..t_n {
                let t0 = t.saturating_sub(ht);
                let t1 = (t + ht).min(t_n - 1);
                for s in 0..s_n {
                    let s0 = s.saturating_sub(hs);
                    let s1 = (s + hs).min(s_n - 1);
                    let mut acc = C64::new(0.0, 0.0);
                    for tt in t0..=t1 {
                        for ss in s0..=s1 {
                            acc += src[ss + s_n * tt];
                        }
                    }
                    dst[s + s_n * t] = acc / ((t1 - t0 + 1) * (s1 - s0 + 1)) as f64;
                }
            }
        }
    }
    Ok(out)
}

/// Removes the pilot contribution `sum_k H_k diag(sqrt(p_k) o phi_k)` from `Y`.
pub fn cancel_pilots(
    y: &CMatrix,
    h: &ChannelEstimate,
    rho: &PdpFactors,
    pilots: &PilotBook,
    power: f64,
) -> Result<CMatrix> {
    let d = check_link(y, rho, pilots)?;
    check_estimate(d, h)?;
    let mut out = CMatrix::zeros(d.antennas, d.res);
    cancel_kernel(
        d,
        y.as_slice(),
        h.as_slice(),
        rho.as_slice(),
        pilots.as_slice(),
        power,
        out.as_mut_slice(),
    );
    Ok(out)
}

/// Per-RE linear MMSE detection with data gains `sqrt(P (1 - rho))`.
/// Returns soft symbols, `K x E`.
pub fn mmse_detect(
    y: &CMatrix,
    h: &ChannelEstimate,
    rho: &PdpFactors,
    power: f64,
    noise_var: f64,
) -> Result<CMatrix> {
    let d = Dims {
        antennas: y.rows(),
        users: rho.users(),
        res: y.cols(),
    };
    if rho.res() != d.res {
        return Err(Error::shape("PDP factors do not match the received signal"));
    }
    check_estimate(d, h)?;
    if !(noise_var >= 0.0) {
        return Err(Error::domain("noise variance must be non-negative"));
    }
    let mut out = CMatrix::zeros(d.users, d.res);
    mmse_kernel(
        d,
        y.as_slice(),
        h.as_slice(),
        rho.as_slice(),
        power,
        noise_var,
        out.as_mut_slice(),
    )?;
    Ok(out)
}

/// Nearest constellation index for every soft symbol.
pub fn hard_decision(soft: &CMatrix, constellation: &Constellation) -> Vec<usize> {
    soft.as_slice()
        .iter()
        .map(|&z| constellation.nearest(z))
        .collect()
}

/// Maps constellation indices back to symbols, keeping the `K x E` shape.
pub fn symbols_of(indices: &[usize], users: usize, constellation: &Constellation) -> Result<CMatrix> {
    let res = indices.len() / users.max(1);
    CMatrix::from_vec(
        users,
        res,
        indices.iter().map(|&i| constellation.points()[i]).collect(),
    )
}

/// LS estimate after removing the data contribution of previously detected
/// symbols: `Y - sum_k H_k diag(sqrt(p~_k) o d_k)` fed to [`ls_estimate`].
pub fn data_cancelled_ls(
    y: &CMatrix,
    h_prev: &ChannelEstimate,
    data: &CMatrix,
    rho: &PdpFactors,
    pilots: &PilotBook,
    power: f64,
) -> Result<ChannelEstimate> {
    let d = check_link(y, rho, pilots)?;
    check_estimate(d, h_prev)?;
    if data.rows() != d.users || data.cols() != d.res {
        return Err(Error::shape("detected data must be K x E"));
    }
    let mut yd = y.clone();
    let out = yd.as_mut_slice();
    for m in 0..d.antennas {
        for k in 0..d.users {
            let hl = h_prev.link(m, k);
            for e in 0..d.res {
                let c = (power * (1.0 - rho.get(k, e))).sqrt();
                out[m * d.res + e] -= hl[e] * data.get(k, e) * c;
            }
        }
    }
    ls_estimate(&yd, rho, pilots, power)
}

/// Everything the superimposed-pilot receivers need besides `Y`.
#[derive(Debug, Clone, Copy)]
pub struct SipLink<'a> {
    pub grid: ResourceGrid,
    pub pilots: &'a PilotBook,
    pub rho: &'a PdpFactors,
    pub power: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IceddStep {
    pub estimate: ChannelEstimate,
    pub soft: CMatrix,
    pub decided: Vec<usize>,
}

/// One SIP receiver pass for a given channel estimate.
fn detect_with(
    y: &CMatrix,
    h: &ChannelEstimate,
    link: &SipLink<'_>,
    constellation: &Constellation,
) -> Result<(CMatrix, Vec<usize>)> {
    let ysp = cancel_pilots(y, h, link.rho, link.pilots, link.power)?;
    let soft = mmse_detect(&ysp, h, link.rho, link.power, link.noise_var)?;
    let decided = hard_decision(&soft, constellation);
    Ok((soft, decided))
}

/// Iterative channel estimation and data detection with hard decisions
/// between iterations. Returns one entry per iteration.
pub fn icedd(
    y: &CMatrix,
    link: &SipLink<'_>,
    iterations: usize,
    window: (usize, usize),
    constellation: &Constellation,
) -> Result<Vec<IceddStep>> {
    icedd_with(y, link, iterations, window, constellation, |idx, users| {
        symbols_of(idx, users, constellation)
    })
}

/// [`icedd`] with a pluggable decision-to-symbol map, e.g. a decoder-aided
/// refinement.
pub fn icedd_with(
    y: &CMatrix,
    link: &SipLink<'_>,
    iterations: usize,
    window: (usize, usize),
    constellation: &Constellation,
    mut remodulate: impl FnMut(&[usize], usize) -> Result<CMatrix>,
) -> Result<Vec<IceddStep>> {
    if iterations == 0 {
        return Err(Error::config("ICEDD needs at least one iteration"));
    }
    let users = link.rho.users();
    let raw = ls_estimate(y, link.rho, link.pilots, link.power)?;
    let estimate = despread_smooth(&raw, &link.grid, window)?;
    let (soft, decided) = detect_with(y, &estimate, link, constellation)?;
    let mut steps = alloc::vec![IceddStep {
        estimate,
        soft,
        decided,
    }];
    for _ in 1..iterations {
        let prev = steps.last().expect("at least one step");
        let data = remodulate(&prev.decided, users)?;
        let raw = data_cancelled_ls(y, &prev.estimate, &data, link.rho, link.pilots, link.power)?;
        let estimate = despread_smooth(&raw, &link.grid, window)?;
        let (soft, decided) = detect_with(y, &estimate, link, constellation)?;
        steps.push(IceddStep {
            estimate,
            soft,
            decided,
        });
    }
    Ok(steps)
}

/// Traditional-pilot receiver: despread LS on the two pilot symbols, linear
/// inter/extrapolation in time, MMSE on the data REs. Soft output is zero on
/// pilot REs.
pub fn tp_receive(
    y: &CMatrix,
    frame: &TpFrame,
    power: f64,
    noise_var: f64,
    grid: &ResourceGrid,
) -> Result<(ChannelEstimate, CMatrix)> {
    let (s_n, t_n) = (grid.subcarriers(), grid.symbols());
    let k_n = frame.pilots.users();
    let m_n = y.rows();
    if y.cols() != grid.res() || frame.pilot_mask.len() != grid.res() {
        return Err(Error::shape("TP frame does not match the grid"));
    }
    let pilot_syms: Vec<usize> = (0..t_n)
        .filter(|&t| (0..s_n).all(|s| frame.pilot_mask[s + s_n * t]))
        .collect();
    if pilot_syms.len() != 2 {
        return Err(Error::config(alloc::format!(
            "time interpolation needs exactly 2 pilot symbols, mask has {}",
            pilot_syms.len()
        )));
    }
    let (t1, t2) = (pilot_syms[0], pilot_syms[1]);
    let amp = power.sqrt();
    let mut h = ChannelTensor::zeros(m_n, k_n, grid.res());
    for m in 0..m_n {
        for k in 0..k_n {
            let mut at_pilot = [alloc::vec![C64::new(0.0, 0.0); s_n], alloc::vec![C64::new(0.0, 0.0); s_n]];
            for (slot, &tp) in [t1, t2].iter().enumerate() {
                for s in 0..s_n {
                    // K adjacent subcarriers span a full code period
                    let start = (s as isize - (k_n as isize - 1) / 2).clamp(0, (s_n - k_n) as isize) as usize;
                    let acc: C64 = (start..start + k_n)
                        .map(|ss| y.get(m, ss + s_n * tp) * frame.pilots.get(k, ss).conj())
                        .sum();
                    at_pilot[slot][s] = acc / (k_n as f64 * amp);
                }
            }
            let link = h.link_mut(m, k);
            for t in 0..t_n {
                let w = (t as f64 - t1 as f64) / (t2 - t1) as f64;
                for s in 0..s_n {
                    link[s + s_n * t] = at_pilot[0][s] + (at_pilot[1][s] - at_pilot[0][s]) * w;
                }
            }
        }
    }
    let rho = PdpFactors::uniform(k_n, grid.res(), 0.0)?;
    let mut soft = mmse_detect(y, &h, &rho, power, noise_var)?;
    for (e, &p) in frame.pilot_mask.iter().enumerate() {
        if p {
            for k in 0..k_n {
                soft.set(k, e, C64::new(0.0, 0.0));
            }
        }
    }
    Ok((h, soft))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_dft_pilots;
    use crate::tx::{build_tp_frame, modulate_qam, propagate, superimpose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channel(rng: &mut impl Rng, m: usize, k: usize, e: usize) -> ChannelTensor {
        let data = (0..m * k * e)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        ChannelTensor::from_vec(m, k, e, data).unwrap()
    }

    fn qam_data(rng: &mut impl Rng, k: usize, e: usize) -> CMatrix {
        let c = Constellation::qam(16).unwrap();
        CMatrix::from_vec(k, e, modulate_qam(rng, &c, k * e).symbols).unwrap()
    }

    #[test]
    fn ls_single_user_pure_pilot_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = ResourceGrid::new(4, 3).unwrap();
        let pilots = make_dft_pilots(1, &grid).unwrap();
        let h = random_channel(&mut rng, 2, 1, 12);
        let rho = PdpFactors::uniform(1, 12, 1.0).unwrap();
        let data = qam_data(&mut rng, 1, 12);
        let s = superimpose(&rho, &pilots, &data, 1.0).unwrap();
        let y = propagate(&h, &s).unwrap();
        let est = ls_estimate(&y, &rho, &pilots, 1.0).unwrap();
        for (a, b) in est.as_slice().iter().zip(h.as_slice()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn ls_exhibits_pilot_data_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = ResourceGrid::new(4, 2).unwrap();
        let pilots = make_dft_pilots(1, &grid).unwrap();
        let h = random_channel(&mut rng, 1, 1, 8);
        let rho = PdpFactors::uniform(1, 8, 0.3).unwrap();
        let data = qam_data(&mut rng, 1, 8);
        let y = propagate(&h, &superimpose(&rho, &pilots, &data, 1.0).unwrap()).unwrap();
        let est = ls_estimate(&y, &rho, &pilots, 1.0).unwrap();
        let ratio = (0.7f64 / 0.3).sqrt();
        for e in 0..8 {
            let want = h.get(0, 0, e) * (C64::new(1.0, 0.0) + data.get(0, e) / pilots.get(0, e) * ratio);
            assert!((est.get(0, 0, e) - want).norm() < 1e-13);
        }
    }

    #[test]
    fn ls_rejects_zero_pilot_power() {
        let grid = ResourceGrid::new(2, 1).unwrap();
        let pilots = make_dft_pilots(1, &grid).unwrap();
        let rho = PdpFactors::new(1, 2, alloc::vec![0.5, 0.0]).unwrap();
        let y = CMatrix::zeros(1, 2);
        assert_eq!(
            ls_estimate(&y, &rho, &pilots, 1.0),
            Err(Error::SingularPilot { user: 0, re: 1 })
        );
    }

    #[test]
    fn smoothing_window_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = ResourceGrid::new(6, 4).unwrap();
        let h = random_channel(&mut rng, 2, 2, 24);
        assert_eq!(despread_smooth(&h, &grid, (1, 1)).unwrap(), h);
        assert!(despread_smooth(&h, &grid, (2, 1)).is_err());
        let c = ChannelTensor::from_vec(1, 1, 24, alloc::vec![C64::new(0.3, -0.2); 24]).unwrap();
        let sm = despread_smooth(&c, &grid, (3, 3)).unwrap();
        for z in sm.as_slice() {
            assert!((z - C64::new(0.3, -0.2)).norm() < 1e-15);
        }
    }

    #[test]
    fn smoothing_reduces_iid_perturbation_variance() {
        // flat channel + i.i.d. zero-mean perturbation: interior REs of a 3x3
        // average should see about 1/9 of the variance
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = ResourceGrid::new(40, 40).unwrap();
        let h = random_channel(&mut rng, 1, 1, 1600);
        let sm = despread_smooth(&h, &grid, (3, 3)).unwrap();
        let mean = h.as_slice().iter().sum::<C64>() / 1600.0;
        let var_in: f64 = h.as_slice().iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / 1600.0;
        let mut var_out = 0.0;
        let mut n = 0.0;
        for t in 1..39 {
            for s in 1..39 {
                var_out += (sm.get(0, 0, s + 40 * t) - mean).norm_sqr();
                n += 1.0;
            }
        }
        let ratio = var_out / n / var_in;
        assert!((ratio - 1.0 / 9.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn cancellation_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = ResourceGrid::new(4, 2).unwrap();
        let pilots = make_dft_pilots(2, &grid).unwrap();
        let h = random_channel(&mut rng, 3, 2, 8);
        let rho = PdpFactors::uniform(2, 8, 0.4).unwrap();
        let data = qam_data(&mut rng, 2, 8);
        let y = propagate(&h, &superimpose(&rho, &pilots, &data, 1.0).unwrap()).unwrap();

        let ysp = cancel_pilots(&y, &h, &rho, &pilots, 1.0).unwrap();
        let zero_rho = PdpFactors::uniform(2, 8, 0.0).unwrap();
        let data_only = superimpose(&zero_rho, &pilots, &data, 0.6).unwrap();
        let want = propagate(&h, &data_only).unwrap();
        for (a, b) in ysp.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).norm() < 1e-14);
        }
        let same = cancel_pilots(&y, &ChannelTensor::zeros(3, 2, 8), &rho, &pilots, 1.0).unwrap();
        assert_eq!(same, y);
    }

    #[test]
    fn scalar_mmse() {
        // G = 2 (h = 2 with zero pilot share), sigma^2 = 0.5, y = 2 d
        let d = C64::new(0.3, -0.7);
        let h = ChannelTensor::from_vec(1, 1, 1, alloc::vec![C64::new(2.0, 0.0)]).unwrap();
        let rho = PdpFactors::uniform(1, 1, 0.0).unwrap();
        let y = CMatrix::from_vec(1, 1, alloc::vec![d * 2.0]).unwrap();
        let out = mmse_detect(&y, &h, &rho, 1.0, 0.5).unwrap();
        assert!((out.get(0, 0) - d * (4.0 / 4.5)).norm() < 1e-15);

        let big = mmse_detect(&y, &h, &rho, 1.0, 1e12).unwrap();
        assert!(big.get(0, 0).norm() < 1e-10);
    }

    #[test]
    fn noiseless_mmse_is_zero_forcing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_channel(&mut rng, 4, 2, 5);
        let rho = PdpFactors::uniform(2, 5, 0.3).unwrap();
        let data = qam_data(&mut rng, 2, 5);
        let zero = PdpFactors::uniform(2, 5, 0.0).unwrap();
        let grid = ResourceGrid::new(5, 1).unwrap();
        // data part only: y = sum_k H_k sqrt(P(1-rho)) d_k
        let dp = superimpose(&zero, &make_dft_pilots(2, &grid).unwrap(), &data, 0.7).unwrap();
        let y = propagate(&h, &dp).unwrap();
        let out = mmse_detect(&y, &h, &rho, 1.0, 0.0).unwrap();
        for (a, b) in out.as_slice().iter().zip(data.as_slice()) {
            assert!((a - b).norm() < 1e-10);
        }
        // rank-deficient without regularization
        let flat = ChannelTensor::from_vec(1, 2, 5, alloc::vec![C64::new(1.0, 0.0); 10]).unwrap();
        let y1 = CMatrix::zeros(1, 5);
        assert!(matches!(
            mmse_detect(&y1, &flat, &rho, 1.0, 0.0),
            Err(Error::LinAlg(_))
        ));
    }

    #[test]
    fn hard_decisions() {
        let c = Constellation::qam(16).unwrap();
        let pts = CMatrix::from_vec(1, 16, c.points().to_vec()).unwrap();
        assert_eq!(hard_decision(&pts, &c), (0..16).collect::<Vec<_>>());
        let zero = CMatrix::zeros(1, 1);
        let idx = hard_decision(&zero, &c)[0];
        // four inner points tie; the smallest index among them wins
        let inner: Vec<usize> = (0..16)
            .filter(|&i| (c.points()[i].norm() - (0.2f64).sqrt()).abs() < 1e-12)
            .collect();
        assert_eq!(idx, inner[0]);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let half = 1.0 / 10f64.sqrt();
        for _ in 0..2000 {
            let i = rng.random_range(0..16);
            let r = rng.random::<f64>() * half * 0.999;
            let a = rng.random::<f64>() * core::f64::consts::TAU;
            let z = c.points()[i] + C64::from_polar(r, a);
            assert_eq!(c.nearest(z), i);
        }
    }

    #[test]
    fn genie_data_cancellation_recovers_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = ResourceGrid::new(6, 4).unwrap();
        let pilots = make_dft_pilots(1, &grid).unwrap();
        let h = random_channel(&mut rng, 2, 1, 24);
        let rho = PdpFactors::uniform(1, 24, 0.3).unwrap();
        let data = qam_data(&mut rng, 1, 24);
        let y = propagate(&h, &superimpose(&rho, &pilots, &data, 1.0).unwrap()).unwrap();
        let raw = ls_estimate(&y, &rho, &pilots, 1.0).unwrap();
        let err0: f64 = raw.as_slice().iter().zip(h.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(err0 > 1e-3);
        let genie = data_cancelled_ls(&y, &h, &data, &rho, &pilots, 1.0).unwrap();
        for (a, b) in genie.as_slice().iter().zip(h.as_slice()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_iteration_icedd_is_the_plain_receiver() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = ResourceGrid::new(6, 4).unwrap();
        let pilots = make_dft_pilots(2, &grid).unwrap();
        let h = random_channel(&mut rng, 4, 2, 24);
        let rho = PdpFactors::uniform(2, 24, 0.3).unwrap();
        let data = qam_data(&mut rng, 2, 24);
        let y = propagate(&h, &superimpose(&rho, &pilots, &data, 1.0).unwrap()).unwrap();
        let c = Constellation::qam(16).unwrap();
        let link = SipLink {
            grid,
            pilots: &pilots,
            rho: &rho,
            power: 1.0,
            noise_var: 0.01,
        };
        let steps = icedd(&y, &link, 1, (3, 3), &c).unwrap();
        assert_eq!(steps.len(), 1);
        let est = despread_smooth(&ls_estimate(&y, &rho, &pilots, 1.0).unwrap(), &grid, (3, 3)).unwrap();
        let ysp = cancel_pilots(&y, &est, &rho, &pilots, 1.0).unwrap();
        let soft = mmse_detect(&ysp, &est, &rho, 1.0, 0.01).unwrap();
        assert_eq!(steps[0].estimate, est);
        assert_eq!(steps[0].soft, soft);
        assert_eq!(icedd(&y, &link, 3, (3, 3), &c).unwrap().len(), 3);
        assert!(icedd(&y, &link, 0, (3, 3), &c).is_err());
    }

    #[test]
    fn tp_receiver_exact_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid = ResourceGrid::new(6, 14).unwrap();
        let data = qam_data(&mut rng, 1, grid.res());
        let frame = build_tp_frame(&data, 1.0, &grid).unwrap();
        // channel linear in the symbol index, arbitrary across subcarriers
        let mut h = ChannelTensor::zeros(3, 1, grid.res());
        for m in 0..3 {
            for s in 0..6 {
                let a = C64::new(rng.random(), rng.random());
                let b = C64::new(rng.random::<f64>() * 0.1, rng.random::<f64>() * 0.1);
                for t in 0..14 {
                    h.set(m, 0, s + 6 * t, a + b * t as f64);
                }
            }
        }
        let y = propagate(&h, &frame.s_tx).unwrap();
        let (est, soft) = tp_receive(&y, &frame, 1.0, 0.0, &grid).unwrap();
        for (a, b) in est.as_slice().iter().zip(h.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
        for e in frame.data_res() {
            assert!((soft.get(0, e) - data.get(0, e)).norm() < 1e-10);
        }

        let mut bad = frame.clone();
        for s in 0..6 {
            bad.pilot_mask[s + 6 * 11] = false;
        }
        assert!(tp_receive(&y, &bad, 1.0, 0.0, &grid).is_err());
    }

    #[test]
    fn tp_receiver_separates_users_on_flat_static_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = ResourceGrid::new(12, 14).unwrap();
        let data = qam_data(&mut rng, 3, grid.res());
        let frame = build_tp_frame(&data, 1.0, &grid).unwrap();
        let mut h = ChannelTensor::zeros(4, 3, grid.res());
        for m in 0..4 {
            for k in 0..3 {
                let a = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                for z in h.link_mut(m, k) {
                    *z = a;
                }
            }
        }
        let y = propagate(&h, &frame.s_tx).unwrap();
        let (est, _) = tp_receive(&y, &frame, 1.0, 0.0, &grid).unwrap();
        for (a, b) in est.as_slice().iter().zip(h.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
