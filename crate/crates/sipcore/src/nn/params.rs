use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;
use rand::Rng;

use super::{BnUpdates, NetConfig, BN_MOMENTUM};
use crate::autodiff::{Graph, Tensor, Var};
use crate::tx::{logit, pdp_from_weights, PdpFactors, PowerWeights};
use crate::{Error, Result};

/// Ordered named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::shape(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::shape(format!("no parameter named {name}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Number of scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Same names and shapes.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    /// Register every tensor as a graph leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundSet {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| {
                let v = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
                (n.clone(), v)
            })
            .collect();
        BoundSet { vars }
    }
}

/// Graph handles of a [`ParamSet`], in the same order.
#[derive(Debug, Clone)]
pub struct BoundSet {
    vars: Vec<(String, Var)>,
}

impl BoundSet {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::shape(format!("no parameter named {name}")))
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.iter().map(|(_, v)| *v)
    }
}

/// Learnable parameters of the power-control module, channel net and data
/// net, plus the detector's batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    /// Power-control weights `[K, E]`; `rho = sigmoid(w_p)`.
    pub w_p: Tensor,
    pub w_c: ParamSet,
    pub w_d: ParamSet,
    /// Non-learnable running statistics of `w_d`'s batch-norm layers.
    pub bn: ParamSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub f_p: usize,
    pub f_c: usize,
    pub f_d: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.f_p + self.f_c + self.f_d
    }
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy)]
enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    Uniform(usize),
    Const(f64),
}

struct Layout(Vec<(String, Vec<usize>, Init)>);

impl Layout {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, zero: bool) {
        let fan = cin * k * k;
        let (w, b) = if zero { (Init::Const(0.0), Init::Const(0.0)) } else { (Init::Uniform(fan), Init::Uniform(fan)) };
        self.0.push((format!("{name}.w"), vec![cout, cin, k, k], w));
        self.0.push((format!("{name}.b"), vec![cout], b));
    }

    fn conv_t(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        let fan = cin * k * k;
        self.0.push((format!("{name}.w"), vec![cin, cout, k, k], Init::Uniform(fan)));
        self.0.push((format!("{name}.b"), vec![cout], Init::Uniform(fan)));
    }

    fn linear(&mut self, name: &str, fin: usize, fout: usize) {
        self.0.push((format!("{name}.w"), vec![fout, fin], Init::Uniform(fin)));
        self.0.push((format!("{name}.b"), vec![fout], Init::Uniform(fin)));
    }

    fn bn(&mut self, name: &str, c: usize) {
        self.0.push((format!("{name}.gamma"), vec![c], Init::Const(1.0)));
        self.0.push((format!("{name}.beta"), vec![c], Init::Const(0.0)));
    }

    fn build(self, rng: &mut impl Rng) -> ParamSet {
        let mut set = ParamSet::new();
        for (name, shape, init) in self.0 {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Uniform(fan) => {
                    let b = 1.0 / (fan as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-b..=b)).collect()
                }
                Init::Const(c) => vec![c; n],
            };
            set.push(name, Tensor::new(&shape, data).expect("layout shape"));
        }
        set
    }

    fn count(&self) -> usize {
        self.0.iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
    }
}

fn channel_layout(cfg: &NetConfig) -> Layout {
    let c = &cfg.channel;
    let [w0, w1, w2] = c.widths;
    let mut l = Layout(Vec::new());
    l.linear("mlp.0", 2 * c.l_f, c.mlp_hidden);
    l.linear("mlp.1", c.mlp_hidden, 2 * c.l_s);
    l.conv("front.0", 2, c.l_s, 3, false);
    l.conv("front.1", c.l_s, c.l_s, 3, false);
    for i in 0..c.level_convs[0] {
        l.conv(&format!("enc0.{i}"), if i == 0 { c.l_s } else { w0 }, w0, 3, false);
    }
    l.conv("down1", w0, w1, 3, false);
    for i in 0..c.level_convs[1] {
        l.conv(&format!("enc1.{i}"), w1, w1, 3, false);
    }
    l.conv("down2", w1, w2, 3, false);
    for i in 0..c.level_convs[2] {
        l.conv(&format!("mid.{i}"), w2, w2, 3, false);
    }
    l.conv_t("up1", w2, w1, 3);
    for i in 0..c.level_convs[1] {
        l.conv(&format!("dec1.{i}"), if i == 0 { 2 * w1 } else { w1 }, w1, 3, false);
    }
    l.conv_t("up0", w1, w0, 3);
    for i in 0..c.level_convs[0] {
        l.conv(&format!("dec0.{i}"), if i == 0 { 2 * w0 } else { w0 }, w0, 3, false);
    }
    l.conv("head", w0, 2, 1, c.zero_projection);
    l
}

fn data_layout(cfg: &NetConfig) -> Layout {
    let d = &cfg.data;
    let mut l = Layout(Vec::new());
    if d.bypass {
        return l;
    }
    for i in 0..=d.hidden_layers {
        l.conv(&format!("conv.{i}"), if i == 0 { 2 } else { d.width }, d.width, 3, false);
        l.bn(&format!("bn.{i}"), d.width);
    }
    l.conv("out", d.width, 2, 3, false);
    l
}

fn bn_buffers(cfg: &NetConfig) -> ParamSet {
    let mut set = ParamSet::new();
    if cfg.data.bypass {
        return set;
    }
    for i in 0..=cfg.data.hidden_layers {
        let c = cfg.data.width;
        set.push(format!("bn.{i}.mean"), Tensor::zeros(&[c]));
        set.push(format!("bn.{i}.var"), Tensor::new(&[c], vec![1.0; c]).expect("bn shape"));
    }
    set
}

/// Scalar learnable parameters per sub-network, from the layout alone.
pub fn count_params(cfg: &NetConfig) -> ParamCounts {
    ParamCounts {
        f_p: cfg.users * cfg.grid.res(),
        f_c: channel_layout(cfg).count(),
        f_d: data_layout(cfg).count(),
    }
}

impl NetParams {
    /// Fresh parameters: networks with uniform fan-in initialization and
    /// `w_p` set so that every PDP factor equals `rho0`.
    pub fn init(cfg: &NetConfig, rho0: f64, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        if !(rho0 > 0.0 && rho0 < 1.0) {
            return Err(Error::config(format!("initial PDP factor {rho0} must lie in (0, 1)")));
        }
        let (k, e) = (cfg.users, cfg.grid.res());
        Ok(Self {
            w_p: Tensor::new(&[k, e], vec![logit(rho0); k * e])?,
            w_c: channel_layout(cfg).build(rng),
            w_d: data_layout(cfg).build(rng),
            bn: bn_buffers(cfg),
        })
    }

    /// Learned PDP factors `sigmoid(w_p)`.
    pub fn pdp(&self) -> PdpFactors {
        let (k, e) = (self.w_p.shape()[0], self.w_p.shape()[1]);
        pdp_from_weights(&PowerWeights {
            users: k,
            res: e,
            values: self.w_p.data().to_vec(),
        })
    }

    pub fn counts(&self) -> ParamCounts {
        ParamCounts {
            f_p: self.w_p.len(),
            f_c: self.w_c.count(),
            f_d: self.w_d.count(),
        }
    }

    /// Whether names and shapes agree with the layout of `cfg`.
    pub fn matches(&self, cfg: &NetConfig) -> bool {
        let same = |set: &ParamSet, layout: Layout| {
            set.len() == layout.0.len()
                && set.iter().zip(&layout.0).all(|((n, t), (ln, ls, _))| n == ln && t.shape() == &ls[..])
        };
        self.w_p.shape() == &[cfg.users, cfg.grid.res()][..]
            && same(&self.w_c, channel_layout(cfg))
            && same(&self.w_d, data_layout(cfg))
            && self.bn.same_layout(&bn_buffers(cfg))
    }

    /// Exponential moving update of the running statistics (unbiased
    /// variance, momentum [`BN_MOMENTUM`]).
    pub fn update_running(&mut self, updates: &BnUpdates, count: usize) -> Result<()> {
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        for (name, s) in updates {
            let mean = self.bn.get_mut(&format!("{name}.mean"))?;
            for (r, m) in mean.data_mut().iter_mut().zip(&s.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            let var = self.bn.get_mut(&format!("{name}.var"))?;
            for (r, v) in var.data_mut().iter_mut().zip(&s.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
            }
        }
        Ok(())
    }
}

