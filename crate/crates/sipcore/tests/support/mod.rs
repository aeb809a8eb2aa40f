//! Scalar-loop reference implementations and the check suites built on them.
//! Shared by the `sipcore` integration tests and the `siplab` acceptance
//! target.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sipcore::channel::ChannelTensor;
use sipcore::eval::nmse;
use sipcore::grid::{make_dft_pilots, PilotBook, ResourceGrid};
use sipcore::linalg::CMatrix;
use sipcore::nn::{a_mid, freq_scaling_vector};
use sipcore::rx::{cancel_pilots, data_cancelled_ls, hard_decision, ls_estimate, mmse_detect};
use sipcore::train::loss;
use sipcore::tx::{draw_noise, modulate_qam, superimpose, transmit, Constellation, PdpFactors};
use sipcore::C64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> C64 {
    // Box-Muller, unit variance per complex sample
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    let r = (-u1.ln()).sqrt();
    let a = 2.0 * std::f64::consts::PI * u2;
    c(r * a.cos(), r * a.sin())
}

/// `||a - b|| / ||b||`, or `||a||` when `b` is zero.
pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// One random link with `M, K, S, T` in `1..=4`.
pub struct Instance {
    pub m: usize,
    pub k: usize,
    pub grid: ResourceGrid,
    pub h: ChannelTensor,
    pub rho: PdpFactors,
    pub pilots: PilotBook,
    pub data: CMatrix,
    pub power: f64,
    pub noise_var: f64,
    pub y: CMatrix,
}

impl Instance {
    pub fn e(&self) -> usize {
        self.grid.res()
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let m = rng.random_range(1..=4);
        let k = rng.random_range(1..=4);
        let grid = ResourceGrid::new(rng.random_range(1..=4), rng.random_range(1..=4)).unwrap();
        let e = grid.res();
        let h = ChannelTensor::from_vec(m, k, e, (0..m * k * e).map(|_| gauss(rng)).collect()).unwrap();
        let rho = PdpFactors::new(k, e, (0..k * e).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
        let pilots = PilotBook::from_rows(
            k,
            e,
            (0..k * e)
                .map(|_| C64::from_polar(1.0, rng.random_range(-3.2..3.2)))
                .collect(),
        )
        .unwrap();
        let data = CMatrix::from_fn(k, e, |_, _| gauss(rng));
        let power = rng.random_range(0.05..2.0);
        let noise_var = rng.random_range(0.01..1.0);
        let y = CMatrix::from_fn(m, e, |_, _| gauss(rng));
        Self { m, k, grid, h, rho, pilots, data, power, noise_var, y }
    }

    fn amp(&self, k: usize, e: usize) -> C64 {
        self.pilots.get(k, e) * (self.power * self.rho.get(k, e)).sqrt()
    }

    fn gain(&self, k: usize, e: usize) -> f64 {
        (self.power * (1.0 - self.rho.get(k, e))).sqrt()
    }
}

pub fn oracle_ls(x: &Instance) -> Vec<C64> {
    let mut out = Vec::new();
    for m in 0..x.m {
        for k in 0..x.k {
            for e in 0..x.e() {
                out.push(x.y.get(m, e) / x.amp(k, e));
            }
        }
    }
    out
}

pub fn oracle_cancel(x: &Instance) -> Vec<C64> {
    let mut out = Vec::new();
    for m in 0..x.m {
        for e in 0..x.e() {
            let mut v = x.y.get(m, e);
            for k in 0..x.k {
                v -= x.h.get(m, k, e) * x.amp(k, e);
            }
            out.push(v);
        }
    }
    out
}

/// Dense complex solve by Gauss-Jordan elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
        }
        b[col] /= p;
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                for j in 0..n {
                    let v = a[col][j];
                    a[i][j] -= f * v;
                }
                let v = b[col];
                b[i] -= f * v;
            }
        }
    }
    b
}

/// `(G^H G + sigma^2 I)^{-1} G^H y` per RE, `K x E` row-major.
pub fn oracle_mmse(x: &Instance) -> Vec<C64> {
    let (m_n, k_n, e_n) = (x.m, x.k, x.e());
    let mut out = vec![c(0.0, 0.0); k_n * e_n];
    for e in 0..e_n {
        let g = |m: usize, k: usize| x.h.get(m, k, e) * x.gain(k, e);
        let mut a = vec![vec![c(0.0, 0.0); k_n]; k_n];
        let mut rhs = vec![c(0.0, 0.0); k_n];
        for i in 0..k_n {
            for j in 0..k_n {
                for m in 0..m_n {
                    a[i][j] += g(m, i).conj() * g(m, j);
                }
            }
            a[i][i] += c(x.noise_var, 0.0);
            for m in 0..m_n {
                rhs[i] += g(m, i).conj() * x.y.get(m, e);
            }
        }
        for (k, v) in solve(a, rhs).into_iter().enumerate() {
            out[k * e_n + e] = v;
        }
    }
    out
}

/// Noiseless received signal of the superimposed frame built from scratch.
pub fn oracle_receive(x: &Instance) -> Vec<C64> {
    let mut out = Vec::new();
    for m in 0..x.m {
        for e in 0..x.e() {
            let mut v = c(0.0, 0.0);
            for k in 0..x.k {
                let s = x.amp(k, e) + x.data.get(k, e) * x.gain(k, e);
                v += x.h.get(m, k, e) * s;
            }
            out.push(v);
        }
    }
    out
}

pub fn oracle_loss(d: &CMatrix, d_hat: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for k in 0..d.rows() {
        for e in 0..d.cols() {
            let (a, b) = (d.get(k, e), d_hat.get(k, e));
            acc += (a.re - b.re).powi(2) + (a.im - b.im).powi(2);
        }
    }
    acc
}

/// Worst relative error of each kernel against its oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleReport {
    pub instances: usize,
    pub ls: f64,
    pub cancel: f64,
    pub mmse: f64,
    pub transmit: f64,
    pub loss: f64,
}

impl OracleReport {
    pub fn worst(&self) -> f64 {
        [self.ls, self.cancel, self.mmse, self.transmit, self.loss]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn oracle_suite(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = OracleReport { instances, ..Default::default() };
    for i in 0..instances {
        let x = Instance::random(&mut rng);
        let h = ls_estimate(&x.y, &x.rho, &x.pilots, x.power).unwrap();
        r.ls = r.ls.max(rel_err(h.as_slice(), &oracle_ls(&x)));
        let ysp = cancel_pilots(&x.y, &x.h, &x.rho, &x.pilots, x.power).unwrap();
        r.cancel = r.cancel.max(rel_err(ysp.as_slice(), &oracle_cancel(&x)));
        let d = mmse_detect(&x.y, &x.h, &x.rho, x.power, x.noise_var).unwrap();
        r.mmse = r.mmse.max(rel_err(d.as_slice(), &oracle_mmse(&x)));

        // the noise stream is replayed from the same seed on both sides
        let s_tx = superimpose(&x.rho, &x.pilots, &x.data, x.power).unwrap();
        let y = transmit(&x.h, &s_tx, x.noise_var, &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
        let noise = draw_noise(&mut ChaCha8Rng::seed_from_u64(i as u64), x.m, x.e(), x.noise_var);
        let want: Vec<C64> = oracle_receive(&x).iter().zip(noise.as_slice()).map(|(a, b)| a + b).collect();
        r.transmit = r.transmit.max(rel_err(y.as_slice(), &want));

        let got = loss(&x.data, &d).unwrap();
        let want = oracle_loss(&x.data, &d);
        r.loss = r.loss.max((got - want).abs() / want.max(f64::MIN_POSITIVE));
    }
    r
}

/// Noiseless single-user link on a `S x T` grid with a Gaussian channel.
fn single_user(rng: &mut ChaCha8Rng, m: usize, grid: ResourceGrid, rho: f64) -> (ChannelTensor, PdpFactors, PilotBook) {
    let e = grid.res();
    let h = ChannelTensor::from_vec(m, 1, e, (0..m * e).map(|_| gauss(rng)).collect()).unwrap();
    (h, PdpFactors::uniform(1, e, rho).unwrap(), make_dft_pilots(1, &grid).unwrap())
}

#[derive(Debug, Clone, Copy)]
pub struct RecoveryReport {
    /// (a) pilot-only LS NMSE (dB), worst over frames.
    pub pilot_only_nmse_db: f64,
    /// (b) symbol errors with perfect CSI and no noise.
    pub perfect_csi_errors: usize,
    pub perfect_csi_symbols: usize,
    /// (c) genie data-cancelled LS NMSE (dB), worst over frames.
    pub genie_nmse_db: f64,
    /// (c) raw LS NMSE (dB) on the same frames, best over frames.
    pub raw_nmse_db: f64,
}

pub fn recovery_suite(frames: usize, seed: u64) -> RecoveryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qam = Constellation::qam(16).unwrap();
    let grid = ResourceGrid::new(12, 14).unwrap();
    let e = grid.res();
    let power = 0.1;

    let mut pilot_only = f64::NEG_INFINITY;
    let mut genie = f64::NEG_INFINITY;
    let mut raw = f64::INFINITY;
    for _ in 0..20 {
        // (a) all power on the pilot
        let (h, rho, pilots) = single_user(&mut rng, 4, grid, 1.0);
        let data = CMatrix::from_vec(1, e, modulate_qam(&mut rng, &qam, e).symbols).unwrap();
        let s = superimpose(&rho, &pilots, &data, power).unwrap();
        let y = transmit(&h, &s, 0.0, &mut rng).unwrap();
        let est = ls_estimate(&y, &rho, &pilots, power).unwrap();
        pilot_only = pilot_only.max(nmse(&h, &est).unwrap());

        // (c) superimposed frame, data cancelled with the true symbols
        let (h, rho, pilots) = single_user(&mut rng, 4, grid, 0.3);
        let s = superimpose(&rho, &pilots, &data, power).unwrap();
        let y = transmit(&h, &s, 0.0, &mut rng).unwrap();
        let est_raw = ls_estimate(&y, &rho, &pilots, power).unwrap();
        raw = raw.min(nmse(&h, &est_raw).unwrap());
        let est = data_cancelled_ls(&y, &h, &data, &rho, &pilots, power).unwrap();
        genie = genie.max(nmse(&h, &est).unwrap());
    }

    // (b) M = 4 > K = 2, true channel, zero noise
    let (m_n, k_n) = (4, 2);
    let small = ResourceGrid::new(4, 4).unwrap();
    let es = small.res();
    let pilots = make_dft_pilots(k_n, &small).unwrap();
    let rho = PdpFactors::uniform(k_n, es, 0.3).unwrap();
    let mut errors = 0;
    for _ in 0..frames {
        let h = ChannelTensor::from_vec(m_n, k_n, es, (0..m_n * k_n * es).map(|_| gauss(&mut rng)).collect()).unwrap();
        let q = modulate_qam(&mut rng, &qam, k_n * es);
        let data = CMatrix::from_vec(k_n, es, q.symbols).unwrap();
        let s = superimpose(&rho, &pilots, &data, power).unwrap();
        let y = transmit(&h, &s, 0.0, &mut rng).unwrap();
        let ysp = cancel_pilots(&y, &h, &rho, &pilots, power).unwrap();
        let soft = mmse_detect(&ysp, &h, &rho, power, 0.0).unwrap();
        errors += hard_decision(&soft, &qam)
            .iter()
            .zip(&q.indices)
            .filter(|(a, b)| a != b)
            .count();
    }
    RecoveryReport {
        pilot_only_nmse_db: pilot_only,
        perfect_csi_errors: errors,
        perfect_csi_symbols: frames * k_n * es,
        genie_nmse_db: genie,
        raw_nmse_db: raw,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PilotReport {
    pub orthogonal: bool,
    pub max_cross: f64,
    pub bijection: bool,
}

pub fn pilot_suite() -> PilotReport {
    let grid = ResourceGrid::new(48, 14).unwrap();
    let book = make_dft_pilots(12, &grid).unwrap();
    let rep = book.verify_orthogonality(1e-9);
    let mut seen = vec![false; grid.res()];
    let mut bijection = true;
    for t in 0..14 {
        for s in 0..48 {
            let e = grid.re_index(s, t).unwrap();
            bijection &= e == s + 48 * t && !seen[e] && grid.grid_index(e).unwrap() == (s, t);
            seen[e] = true;
        }
    }
    bijection &= seen.iter().all(|&v| v);
    bijection &= grid.re_index(48, 0).is_err() && grid.re_index(0, 14).is_err() && grid.grid_index(672).is_err();
    PilotReport {
        orthogonal: rep.pass,
        max_cross: rep.max_cross_correlation,
        bijection,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbeddingReport {
    pub first: f64,
    pub last: f64,
    pub endpoint_err: f64,
    pub shape_ok: bool,
    pub zero_exact: bool,
}

pub fn embedding_suite() -> EmbeddingReport {
    let f_s = freq_scaling_vector(8).unwrap();
    let (first, last) = (f_s[0], f_s[7]);
    let endpoint_err = (first - 1.0).abs().max((last - 10000f64.powf(-7.0 / 8.0)).abs());
    let (m, k) = (64, 12);
    let a: Vec<f64> = (0..m * k).map(|i| -120.0 + 0.05 * i as f64).collect();
    let mid = a_mid(&a, &f_s);
    let shape_ok = f_s.len() == 8 && mid.len() == m * k * 16;
    let zero = a_mid(&[0.0], &f_s);
    let zero_exact = zero[..8].iter().all(|&v| v == 0.0) && zero[8..].iter().all(|&v| v == 1.0);
    EmbeddingReport { first, last, endpoint_err, shape_ok, zero_exact }
}
