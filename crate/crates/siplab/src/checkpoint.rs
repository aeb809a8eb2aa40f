//! `sipckpt-v1` checkpoints: a tar with `manifest.json` and one `.npy` per
//! tensor (`w_p`, `w_c/*`, `w_d/*`, `bn/*`, `adam/m/*`, `adam/v/*`).
//!
//! The manifest carries a SHA-256 of the network configuration; loading
//! fails if it does not match the stored configuration or the tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sipcore::autodiff::Tensor;
use sipcore::eval::LearnedModel;
use sipcore::grid::ResourceGrid;
use sipcore::nn::{ChannelNetConfig, DataNetConfig, NetConfig, NetParams, ParamSet};
use sipcore::train::{Adam, ChainSpec, TrainConfig};

use crate::archive;
use crate::error::{LabError, Result};
use crate::npy::{self, Array};

pub const FORMAT: &str = "sipckpt-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub antennas: usize,
    pub users: usize,
    pub subcarriers: usize,
    pub symbols: usize,
    pub l_f: usize,
    pub l_s: usize,
    pub mlp_hidden: usize,
    pub widths: [usize; 3],
    pub level_convs: [usize; 3],
    pub residual: bool,
    pub zero_projection: bool,
    pub data_width: usize,
    pub data_hidden_layers: usize,
    pub data_bypass: bool,
}

impl NetRecord {
    pub fn of(n: &NetConfig) -> Self {
        let (c, d) = (&n.channel, &n.data);
        Self {
            antennas: n.antennas,
            users: n.users,
            subcarriers: n.grid.subcarriers(),
            symbols: n.grid.symbols(),
            l_f: c.l_f,
            l_s: c.l_s,
            mlp_hidden: c.mlp_hidden,
            widths: c.widths,
            level_convs: c.level_convs,
            residual: c.residual,
            zero_projection: c.zero_projection,
            data_width: d.width,
            data_hidden_layers: d.hidden_layers,
            data_bypass: d.bypass,
        }
    }

    pub fn to_config(&self) -> Result<NetConfig> {
        let cfg = NetConfig {
            antennas: self.antennas,
            users: self.users,
            grid: ResourceGrid::new(self.subcarriers, self.symbols)?,
            channel: ChannelNetConfig {
                l_f: self.l_f,
                l_s: self.l_s,
                mlp_hidden: self.mlp_hidden,
                widths: self.widths,
                level_convs: self.level_convs,
                residual: self.residual,
                zero_projection: self.zero_projection,
            },
            data: DataNetConfig {
                width: self.data_width,
                hidden_layers: self.data_hidden_layers,
                bypass: self.data_bypass,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub snr_db: (f64, f64),
    pub seed: u64,
    pub lambda_ce: f64,
    pub rho0: f64,
}

impl TrainRecord {
    pub fn of(t: &TrainConfig) -> Self {
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            betas: t.betas,
            adam_eps: t.adam_eps,
            snr_db: t.snr_db,
            seed: t.seed,
            lambda_ce: t.lambda_ce,
            rho0: t.rho0,
        }
    }

    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            betas: self.betas,
            adam_eps: self.adam_eps,
            snr_db: self.snr_db,
            seed: self.seed,
            lambda_ce: self.lambda_ce,
            rho0: self.rho0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    file: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamRecord {
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    step: u64,
    sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    preset: String,
    config_hash: String,
    net: NetRecord,
    train: TrainRecord,
    power: f64,
    qam_order: usize,
    epoch: usize,
    channel_amp: f64,
    velocity_kmh: f64,
    w_p: TensorEntry,
    w_c: Vec<TensorEntry>,
    w_d: Vec<TensorEntry>,
    bn: Vec<TensorEntry>,
    adam: Option<AdamRecord>,
}

/// A trained link plus what is needed to resume or evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub preset: String,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub power: f64,
    pub qam_order: usize,
    pub params: NetParams,
    pub optimizer: Option<Adam>,
    /// Epoch the parameters were taken from.
    pub epoch: usize,
    pub channel_amp: f64,
    pub velocity_kmh: f64,
}

impl Checkpoint {
    pub fn spec(&self) -> Result<ChainSpec> {
        Ok(ChainSpec::new(self.net.clone(), self.power, self.qam_order, self.train.lambda_ce)?)
    }

    pub fn model(&self) -> Result<LearnedModel> {
        Ok(LearnedModel {
            spec: self.spec()?,
            params: self.params.clone(),
            channel_amp: self.channel_amp,
        })
    }

    pub fn config_hash(&self) -> String {
        config_hash(&NetRecord::of(&self.net), self.power, self.qam_order)
    }
}

/// Hex SHA-256 of the canonical JSON of the link configuration.
pub fn config_hash(net: &NetRecord, power: f64, qam_order: usize) -> String {
    let canonical = serde_json::json!({ "net": net, "power": power, "qam_order": qam_order });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

fn push_set(prefix: &str, set: &ParamSet, files: &mut Vec<(String, Vec<u8>)>) -> Vec<TensorEntry> {
    set.iter()
        .enumerate()
        .map(|(i, (name, t))| {
            let file = format!("{prefix}/{i:03}.npy");
            files.push((file.clone(), npy::encode(&tensor_array(t))));
            TensorEntry {
                file,
                name: name.to_string(),
                shape: t.shape().to_vec(),
            }
        })
        .collect()
}

fn tensor_array(t: &Tensor) -> Array {
    Array {
        shape: t.shape().to_vec(),
        data: t.data().to_vec(),
    }
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut files = Vec::new();
    files.push(("w_p.npy".to_string(), npy::encode(&tensor_array(&ck.params.w_p))));
    let w_p = TensorEntry {
        file: "w_p.npy".into(),
        name: "w_p".into(),
        shape: ck.params.w_p.shape().to_vec(),
    };
    let w_c = push_set("w_c", &ck.params.w_c, &mut files);
    let w_d = push_set("w_d", &ck.params.w_d, &mut files);
    let bn = push_set("bn", &ck.params.bn, &mut files);
    let adam = ck.optimizer.as_ref().map(|opt| {
        for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
            files.push((format!("adam/m/{i:03}.npy"), npy::encode(&Array { shape: vec![m.len()], data: m.clone() })));
            files.push((format!("adam/v/{i:03}.npy"), npy::encode(&Array { shape: vec![v.len()], data: v.clone() })));
        }
        AdamRecord {
            lr: opt.lr,
            betas: opt.betas,
            eps: opt.eps,
            step: opt.step,
            sizes: opt.m.iter().map(Vec::len).collect(),
        }
    });
    let manifest = Manifest {
        format: FORMAT.into(),
        preset: ck.preset.clone(),
        config_hash: ck.config_hash(),
        net: NetRecord::of(&ck.net),
        train: TrainRecord::of(&ck.train),
        power: ck.power,
        qam_order: ck.qam_order,
        epoch: ck.epoch,
        channel_amp: ck.channel_amp,
        velocity_kmh: ck.velocity_kmh,
        w_p,
        w_c,
        w_d,
        bn,
        adam,
    };
    files.insert(0, ("manifest.json".into(), serde_json::to_vec_pretty(&manifest)?));
    archive::write(path, &files)
}

fn load_tensor(entries: &mut archive::Entries, e: &TensorEntry) -> Result<Tensor> {
    let a = npy::decode(&archive::take(entries, &e.file)?)?;
    if a.shape != e.shape {
        return Err(LabError::format(format!(
            "{}: stored shape {:?}, manifest says {:?}",
            e.file, a.shape, e.shape
        )));
    }
    Ok(Tensor::new(&a.shape, a.data)?)
}

fn load_set(entries: &mut archive::Entries, list: &[TensorEntry]) -> Result<ParamSet> {
    let mut set = ParamSet::new();
    for e in list {
        set.push(e.name.clone(), load_tensor(entries, e)?);
    }
    Ok(set)
}

fn load_vec(entries: &mut archive::Entries, file: &str, len: usize) -> Result<Vec<f64>> {
    let a = npy::decode(&archive::take(entries, file)?)?;
    if a.shape != [len] {
        return Err(LabError::format(format!("{file}: shape {:?}, expected [{len}]", a.shape)));
    }
    Ok(a.data)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut entries = archive::read(path)?;
    let manifest: Manifest = serde_json::from_slice(&archive::take(&mut entries, "manifest.json")?)?;
    if manifest.format != FORMAT {
        return Err(LabError::format(format!(
            "{}: format {:?}, expected {FORMAT}",
            path.display(),
            manifest.format
        )));
    }
    let hash = config_hash(&manifest.net, manifest.power, manifest.qam_order);
    if hash != manifest.config_hash {
        return Err(LabError::format(format!(
            "{}: configuration hash mismatch (stored {}, computed {hash})",
            path.display(),
            manifest.config_hash
        )));
    }
    let net = manifest.net.to_config()?;
    let params = NetParams {
        w_p: load_tensor(&mut entries, &manifest.w_p)?,
        w_c: load_set(&mut entries, &manifest.w_c)?,
        w_d: load_set(&mut entries, &manifest.w_d)?,
        bn: load_set(&mut entries, &manifest.bn)?,
    };
    if !params.matches(&net) {
        return Err(LabError::format(format!(
            "{}: tensors do not match the stored network configuration",
            path.display()
        )));
    }
    let optimizer = match manifest.adam {
        None => None,
        Some(a) => {
            let mut m = Vec::with_capacity(a.sizes.len());
            let mut v = Vec::with_capacity(a.sizes.len());
            for (i, &n) in a.sizes.iter().enumerate() {
                m.push(load_vec(&mut entries, &format!("adam/m/{i:03}.npy"), n)?);
                v.push(load_vec(&mut entries, &format!("adam/v/{i:03}.npy"), n)?);
            }
            Some(Adam {
                lr: a.lr,
                betas: a.betas,
                eps: a.eps,
                step: a.step,
                m,
                v,
            })
        }
    };
    Ok(Checkpoint {
        preset: manifest.preset,
        net,
        train: manifest.train.to_config(),
        power: manifest.power,
        qam_order: manifest.qam_order,
        params,
        optimizer,
        epoch: manifest.epoch,
        channel_amp: manifest.channel_amp,
        velocity_kmh: manifest.velocity_kmh,
    })
}
