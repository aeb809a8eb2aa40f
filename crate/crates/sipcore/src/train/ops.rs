//! Differentiable superimposed-pilot link operations for the autodiff graph.
//!
//! All complex tensors are interleaved (`[..., 2]`); a batch of `B` frames
//! shares one PDP tensor `rho [K, E]`.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;

use crate::autodiff::{CustomOp, Graph, Tensor, Var};
use crate::linalg::{regularized_gram, HermitianSolver};
use crate::rx::{cancel_kernel, data_gain_matrix, ls_kernel, mmse_kernel, Dims};
use crate::{Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Frame constants shared by the ops of one batch.
#[derive(Debug, Clone)]
pub struct BatchFrames {
    pub batch: usize,
    pub antennas: usize,
    pub users: usize,
    pub res: usize,
    pub power: f64,
    pub noise_var: f64,
    /// `[B, M, K, E]`
    pub h: Vec<C64>,
    /// `[B, K, E]`
    pub data: Vec<C64>,
    /// `[B, M, E]`, already scaled to `noise_var`.
    pub noise: Vec<C64>,
    /// `[K, E]`
    pub pilots: Vec<C64>,
}

impl BatchFrames {
    pub(crate) fn dims(&self) -> Dims {
        Dims {
            antennas: self.antennas,
            users: self.users,
            res: self.res,
        }
    }

    fn h_len(&self) -> usize {
        self.antennas * self.users * self.res
    }

    fn y_len(&self) -> usize {
        self.antennas * self.res
    }

    fn d_len(&self) -> usize {
        self.users * self.res
    }
}

fn re(x: C64) -> f64 {
    x.re
}

fn complex_zeros(shape: &[usize]) -> Tensor {
    let mut s = shape.to_vec();
    s.push(2);
    Tensor::zeros(&s)
}

// ─── transmit ───────────────────────────────────────────────────────────────

struct TransmitOp(Rc<BatchFrames>);

/// `Y[b] = sum_k H_k diag(sqrt(P rho_k) phi_k + sqrt(P (1 - rho_k)) d_k) + N`.
pub fn transmit(g: &mut Graph, rho: Var, f: &Rc<BatchFrames>) -> Var {
    let r = g.value(rho).data();
    let (m_n, k_n, e_n) = (f.antennas, f.users, f.res);
    let mut y = complex_zeros(&[f.batch, m_n, e_n]);
    let yv = y.as_complex_mut();
    for b in 0..f.batch {
        let hb = &f.h[b * f.h_len()..(b + 1) * f.h_len()];
        let db = &f.data[b * f.d_len()..(b + 1) * f.d_len()];
        for m in 0..m_n {
            let row = &mut yv[(b * m_n + m) * e_n..(b * m_n + m + 1) * e_n];
            row.copy_from_slice(&f.noise[(b * m_n + m) * e_n..(b * m_n + m + 1) * e_n]);
            for k in 0..k_n {
                let link = &hb[(m * k_n + k) * e_n..(m * k_n + k + 1) * e_n];
                for e in 0..e_n {
                    let p = r[k * e_n + e];
                    let s = f.pilots[k * e_n + e] * (f.power * p).sqrt()
                        + db[k * e_n + e] * (f.power * (1.0 - p)).sqrt();
                    row[e] += link[e] * s;
                }
            }
        }
    }
    g.custom(vec![rho], y, Box::new(TransmitOp(f.clone())))
}

impl CustomOp for TransmitOp {
    fn name(&self) -> &'static str {
        "transmit"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let f = &self.0;
        let r = inputs[0].data();
        let gy = grad.as_complex();
        let (m_n, k_n, e_n) = (f.antennas, f.users, f.res);
        let mut dr = Tensor::zeros(&[k_n, e_n]);
        let drv = dr.data_mut();
        let sp = f.power.sqrt();
        for b in 0..f.batch {
            let hb = &f.h[b * f.h_len()..(b + 1) * f.h_len()];
            let db = &f.data[b * f.d_len()..(b + 1) * f.d_len()];
            for k in 0..k_n {
                for e in 0..e_n {
                    let p = r[k * e_n + e];
                    let ds = f.pilots[k * e_n + e] * (sp / (2.0 * p.sqrt()))
                        - db[k * e_n + e] * (sp / (2.0 * (1.0 - p).sqrt()));
                    let mut acc = 0.0;
                    for m in 0..m_n {
                        let dy = hb[(m * k_n + k) * e_n + e] * ds;
                        acc += re(gy[(b * m_n + m) * e_n + e].conj() * dy);
                    }
                    drv[k * e_n + e] += acc;
                }
            }
        }
        vec![Some(dr)]
    }
}

// ─── LS estimate ────────────────────────────────────────────────────────────

struct LsOp(Rc<BatchFrames>);

/// Per-RE LS estimate, `[B, M, E] -> [B, M, K, E]`.
pub fn ls_estimate(g: &mut Graph, y: Var, rho: Var, f: &Rc<BatchFrames>) -> Result<Var> {
    let d = f.dims();
    let mut h = complex_zeros(&[f.batch, f.antennas, f.users, f.res]);
    {
        let yv = g.value(y).as_complex();
        let r = g.value(rho).data();
        let hv = h.as_complex_mut();
        for b in 0..f.batch {
            ls_kernel(
                d,
                &yv[b * f.y_len()..(b + 1) * f.y_len()],
                r,
                &f.pilots,
                f.power,
                &mut hv[b * f.h_len()..(b + 1) * f.h_len()],
            )?;
        }
    }
    Ok(g.custom(vec![y, rho], h, Box::new(LsOp(f.clone()))))
}

impl CustomOp for LsOp {
    fn name(&self) -> &'static str {
        "ls_estimate"
    }

    fn backward(&self, inputs: &[&Tensor], out: &Tensor, grad: &Tensor, wanted: &[bool]) -> Vec<Option<Tensor>> {
        let f = &self.0;
        let r = inputs[1].data();
        let (m_n, k_n, e_n) = (f.antennas, f.users, f.res);
        let gh = grad.as_complex();
        let hv = out.as_complex();
        let mut dy = wanted[0].then(|| complex_zeros(&[f.batch, m_n, e_n]));
        let mut dr = wanted[1].then(|| Tensor::zeros(&[k_n, e_n]));
        for b in 0..f.batch {
            for m in 0..m_n {
                for k in 0..k_n {
                    let base = ((b * m_n + m) * k_n + k) * e_n;
                    for e in 0..e_n {
                        let p = r[k * e_n + e];
                        let gbar = gh[base + e];
                        if let Some(dy) = dy.as_mut() {
                            let inv = (f.pilots[k * e_n + e] * (f.power * p).sqrt()).inv();
                            dy.as_complex_mut()[(b * m_n + m) * e_n + e] += gbar * inv.conj();
                        }
                        if let Some(dr) = dr.as_mut() {
                            dr.data_mut()[k * e_n + e] += re(gbar.conj() * (-hv[base + e] / (2.0 * p)));
                        }
                    }
                }
            }
        }
        vec![dy, dr]
    }
}

// ─── pilot cancellation ─────────────────────────────────────────────────────

struct CancelOp(Rc<BatchFrames>);

/// `Y - sum_k H_k diag(sqrt(P rho_k) phi_k)`.
pub fn cancel_pilots(g: &mut Graph, y: Var, h: Var, rho: Var, f: &Rc<BatchFrames>) -> Var {
    let d = f.dims();
    let mut out = complex_zeros(&[f.batch, f.antennas, f.res]);
    {
        let yv = g.value(y).as_complex();
        let hv = g.value(h).as_complex();
        let r = g.value(rho).data();
        let ov = out.as_complex_mut();
        for b in 0..f.batch {
            cancel_kernel(
                d,
                &yv[b * f.y_len()..(b + 1) * f.y_len()],
                &hv[b * f.h_len()..(b + 1) * f.h_len()],
                r,
                &f.pilots,
                f.power,
                &mut ov[b * f.y_len()..(b + 1) * f.y_len()],
            );
        }
    }
    g.custom(vec![y, h, rho], out, Box::new(CancelOp(f.clone())))
}

impl CustomOp for CancelOp {
    fn name(&self) -> &'static str {
        "cancel_pilots"
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, wanted: &[bool]) -> Vec<Option<Tensor>> {
        let f = &self.0;
        let hv = inputs[1].as_complex();
        let r = inputs[2].data();
        let (m_n, k_n, e_n) = (f.antennas, f.users, f.res);
        let gy = grad.as_complex();
        let dy = wanted[0].then(|| grad.clone());
        let mut dh = wanted[1].then(|| complex_zeros(&[f.batch, m_n, k_n, e_n]));
        let mut dr = wanted[2].then(|| Tensor::zeros(&[k_n, e_n]));
        let sp = f.power.sqrt();
        for b in 0..f.batch {
            for m in 0..m_n {
                for k in 0..k_n {
                    let base = ((b * m_n + m) * k_n + k) * e_n;
                    for e in 0..e_n {
                        let p = r[k * e_n + e];
                        let phi = f.pilots[k * e_n + e];
                        let gbar = gy[(b * m_n + m) * e_n + e];
                        if let Some(dh) = dh.as_mut() {
                            dh.as_complex_mut()[base + e] = -gbar * (phi * (f.power * p).sqrt()).conj();
                        }
                        if let Some(dr) = dr.as_mut() {
                            let dout = -hv[base + e] * phi * (sp / (2.0 * p.sqrt()));
                            dr.data_mut()[k * e_n + e] += re(gbar.conj() * dout);
                        }
                    }
                }
            }
        }
        vec![dy, dh, dr]
    }
}

// ─── MMSE detection ─────────────────────────────────────────────────────────

struct MmseOp(Rc<BatchFrames>);

/// Per-RE regularized MMSE detection, `[B, M, E] -> [B, K, E]`.
pub fn mmse_detect(g: &mut Graph, y: Var, h: Var, rho: Var, f: &Rc<BatchFrames>) -> Result<Var> {
    let d = f.dims();
    let mut out = complex_zeros(&[f.batch, f.users, f.res]);
    {
        let yv = g.value(y).as_complex();
        let hv = g.value(h).as_complex();
        let r = g.value(rho).data();
        let ov = out.as_complex_mut();
        for b in 0..f.batch {
            mmse_kernel(
                d,
                &yv[b * f.y_len()..(b + 1) * f.y_len()],
                &hv[b * f.h_len()..(b + 1) * f.h_len()],
                r,
                f.power,
                f.noise_var,
                &mut ov[b * f.d_len()..(b + 1) * f.d_len()],
            )?;
        }
    }
    Ok(g.custom(vec![y, h, rho], out, Box::new(MmseOp(f.clone()))))
}

impl CustomOp for MmseOp {
    fn name(&self) -> &'static str {
        "mmse_detect"
    }

    fn backward(&self, inputs: &[&Tensor], out: &Tensor, grad: &Tensor, wanted: &[bool]) -> Vec<Option<Tensor>> {
        let f = &self.0;
        let d = f.dims();
        let (m_n, k_n, e_n) = (f.antennas, f.users, f.res);
        let yv = inputs[0].as_complex();
        let hv = inputs[1].as_complex();
        let r = inputs[2].data();
        let xv = out.as_complex();
        let gx = grad.as_complex();
        let mut dy = wanted[0].then(|| complex_zeros(&[f.batch, m_n, e_n]));
        let mut dh = wanted[1].then(|| complex_zeros(&[f.batch, m_n, k_n, e_n]));
        let mut dr = wanted[2].then(|| Tensor::zeros(&[k_n, e_n]));

        let mut gm = vec![ZERO; m_n * k_n];
        let mut gram = vec![ZERO; k_n * k_n];
        let mut bbar = vec![ZERO; k_n];
        let mut x = vec![ZERO; k_n];
        let mut gbar = vec![ZERO; m_n * k_n];
        for b in 0..f.batch {
            let hb = &hv[b * f.h_len()..(b + 1) * f.h_len()];
            for e in 0..e_n {
                data_gain_matrix(d, hb, r, f.power, e, &mut gm);
                regularized_gram(&gm, m_n, k_n, f.noise_var, &mut gram);
                for k in 0..k_n {
                    x[k] = xv[(b * k_n + k) * e_n + e];
                    bbar[k] = gx[(b * k_n + k) * e_n + e];
                }
                // the forward pass factorized the same matrix successfully
                HermitianSolver::new(k_n, &gram)
                    .expect("MMSE Gram matrix factorized in the forward pass")
                    .solve_in_place(&mut bbar);
                // Wbar = -bbar x^H;  Gbar = G (Wbar + Wbar^H) + y bbar^H
                for m in 0..m_n {
                    let ym = yv[(b * m_n + m) * e_n + e];
                    for k in 0..k_n {
                        let mut acc = ym * bbar[k].conj();
                        for j in 0..k_n {
                            let w = -bbar[j] * x[k].conj();
                            let wh = -(bbar[k] * x[j].conj()).conj();
                            acc += gm[m * k_n + j] * (w + wh);
                        }
                        gbar[m * k_n + k] = acc;
                    }
                }
                if let Some(dy) = dy.as_mut() {
                    let dyv = dy.as_complex_mut();
                    for m in 0..m_n {
                        dyv[(b * m_n + m) * e_n + e] = (0..k_n).map(|k| gm[m * k_n + k] * bbar[k]).sum();
                    }
                }
                for k in 0..k_n {
                    let c = (f.power * (1.0 - r[k * e_n + e])).sqrt();
                    if let Some(dh) = dh.as_mut() {
                        let dhv = dh.as_complex_mut();
                        for m in 0..m_n {
                            dhv[((b * m_n + m) * k_n + k) * e_n + e] = gbar[m * k_n + k] * c;
                        }
                    }
                    if let Some(dr) = dr.as_mut() {
                        let cbar: f64 = (0..m_n)
                            .map(|m| re(gbar[m * k_n + k].conj() * hb[(m * k_n + k) * e_n + e]))
                            .sum();
                        dr.data_mut()[k * e_n + e] += cbar * (-f.power / (2.0 * c));
                    }
                }
            }
        }
        vec![dy, dh, dr]
    }
}
