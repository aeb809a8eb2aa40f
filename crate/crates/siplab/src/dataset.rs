//! `sipds-v1` channel datasets: a tar holding `manifest.json`, `h.npy`
//! (`[N, M, K, E, 2]`, real/imaginary last) and `path_gain.npy`
//! (`[N, M, K]`, linear).
//!
//! Only the manifest's grid and array shapes are required, so externally
//! generated channels can be converted into the same container.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sipcore::channel::{ChannelSample, ChannelTensor, SampleMeta, SimConfig};
use sipcore::grid::ResourceGrid;
use sipcore::C64;

use crate::archive;
use crate::error::{LabError, Result};
use crate::npy::{self, Array};

pub const FORMAT: &str = "sipds-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub velocity_kmh: f64,
    pub delay_spread_ns: (f64, f64),
    pub distance_m: (f64, f64),
    pub bs_height_m: f64,
    pub ut_height_m: f64,
    pub taps: usize,
    pub distance_classes: usize,
    pub oscillators: usize,
}

impl SimRecord {
    pub fn of(c: &SimConfig) -> Self {
        Self {
            carrier_hz: c.carrier_hz,
            subcarrier_spacing_hz: c.subcarrier_spacing_hz,
            velocity_kmh: c.velocity_kmh,
            delay_spread_ns: c.delay_spread_ns,
            distance_m: c.distance_m,
            bs_height_m: c.bs_height_m,
            ut_height_m: c.ut_height_m,
            taps: c.taps,
            distance_classes: c.distance_classes,
            oscillators: c.oscillators,
        }
    }

    pub fn to_config(&self, antennas: usize, users: usize, grid: ResourceGrid, samples: usize) -> SimConfig {
        SimConfig {
            antennas,
            users,
            grid,
            carrier_hz: self.carrier_hz,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
            velocity_kmh: self.velocity_kmh,
            delay_spread_ns: self.delay_spread_ns,
            distance_m: self.distance_m,
            bs_height_m: self.bs_height_m,
            ut_height_m: self.ut_height_m,
            taps: self.taps,
            samples,
            distance_classes: self.distance_classes,
            oscillators: self.oscillators,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub velocity_kmh: f64,
    pub delay_spread_ns: f64,
    pub distances_m: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    antennas: usize,
    users: usize,
    subcarriers: usize,
    symbols: usize,
    samples: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    sim: Option<SimRecord>,
    meta: Vec<MetaRecord>,
}

/// Channel samples sharing one grid and array size.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Generator settings; `None` for imported channels.
    pub sim: Option<SimRecord>,
    pub seed: Option<u64>,
    pub samples: Vec<ChannelSample>,
}

impl Dataset {
    pub fn velocity_kmh(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.meta.velocity_kmh)
    }

    pub fn grid(&self) -> Option<ResourceGrid> {
        self.samples.first().map(|s| s.grid)
    }
}

pub fn save(path: &Path, ds: &Dataset) -> Result<()> {
    let first = ds.samples.first().ok_or(sipcore::Error::EmptyDataset)?;
    let (m_n, k_n, grid) = (first.antennas(), first.users(), first.grid);
    let e_n = grid.res();
    let n = ds.samples.len();
    let mut h = Vec::with_capacity(n * m_n * k_n * e_n * 2);
    let mut pg = Vec::with_capacity(n * m_n * k_n);
    let mut meta = Vec::with_capacity(n);
    for s in &ds.samples {
        s.validate()?;
        if s.antennas() != m_n || s.users() != k_n || s.grid != grid {
            return Err(LabError::format("dataset samples disagree in size"));
        }
        h.extend(s.h.as_slice().iter().flat_map(|z| [z.re, z.im]));
        pg.extend_from_slice(&s.path_gain);
        meta.push(MetaRecord {
            velocity_kmh: s.meta.velocity_kmh,
            delay_spread_ns: s.meta.delay_spread_ns,
            distances_m: s.meta.distances_m.clone(),
            seed: s.meta.seed,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        antennas: m_n,
        users: k_n,
        subcarriers: grid.subcarriers(),
        symbols: grid.symbols(),
        samples: n,
        seed: ds.seed,
        sim: ds.sim.clone(),
        meta,
    };
    archive::write(
        path,
        &[
            ("manifest.json".into(), serde_json::to_vec_pretty(&manifest)?),
            ("h.npy".into(), npy::encode(&Array::new(vec![n, m_n, k_n, e_n, 2], h)?)),
            ("path_gain.npy".into(), npy::encode(&Array::new(vec![n, m_n, k_n], pg)?)),
        ],
    )
}

pub fn load(path: &Path) -> Result<Dataset> {
    let mut entries = archive::read(path)?;
    let manifest: Manifest = serde_json::from_slice(&archive::take(&mut entries, "manifest.json")?)?;
    if manifest.format != FORMAT {
        return Err(LabError::format(format!(
            "{}: format {:?}, expected {FORMAT}",
            path.display(),
            manifest.format
        )));
    }
    let Manifest {
        antennas: m_n,
        users: k_n,
        samples: n,
        ..
    } = manifest;
    let grid = ResourceGrid::new(manifest.subcarriers, manifest.symbols)?;
    let e_n = grid.res();
    let h = npy::decode(&archive::take(&mut entries, "h.npy")?)?;
    let pg = npy::decode(&archive::take(&mut entries, "path_gain.npy")?)?;
    if h.shape != [n, m_n, k_n, e_n, 2] {
        return Err(LabError::format(format!("h.npy has shape {:?}", h.shape)));
    }
    if pg.shape != [n, m_n, k_n] {
        return Err(LabError::format(format!("path_gain.npy has shape {:?}", pg.shape)));
    }
    if manifest.meta.len() != n {
        return Err(LabError::format("manifest metadata count differs from the sample count"));
    }
    if h.data.iter().chain(&pg.data).any(|v| !v.is_finite()) {
        return Err(LabError::format("dataset holds non-finite values"));
    }
    let per = m_n * k_n * e_n;
    let samples = manifest
        .meta
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let vals = h.data[2 * i * per..2 * (i + 1) * per]
                .chunks_exact(2)
                .map(|c| C64::new(c[0], c[1]))
                .collect();
            let s = ChannelSample {
                grid,
                h: ChannelTensor::from_vec(m_n, k_n, e_n, vals)?,
                path_gain: pg.data[i * m_n * k_n..(i + 1) * m_n * k_n].to_vec(),
                meta: SampleMeta {
                    velocity_kmh: m.velocity_kmh,
                    delay_spread_ns: m.delay_spread_ns,
                    distances_m: m.distances_m,
                    seed: m.seed,
                },
            };
            s.validate().map_err(|e| LabError::format(format!("sample {i}: {e}")))?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sim: manifest.sim,
        seed: manifest.seed,
        samples,
    })
}
