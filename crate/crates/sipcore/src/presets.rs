//! Named configurations: `tiny` for gradient checks, `desk` for
//! single-core experiments and `paper` for the full-scale setup.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::SimConfig;
use crate::grid::ResourceGrid;
use crate::nn::{ChannelNetConfig, DataNetConfig, NetConfig};
use crate::train::TrainConfig;
use crate::{Error, Result};

/// 20 dBm in watts.
pub const TRANSMIT_POWER_W: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub sim: SimConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub power: f64,
    pub qam_order: usize,
    pub sweep_snr_db: Vec<f64>,
}

fn sim(antennas: usize, users: usize, grid: ResourceGrid, samples: usize, classes: usize) -> SimConfig {
    SimConfig {
        antennas,
        users,
        grid,
        carrier_hz: 2.6e9,
        subcarrier_spacing_hz: 30e3,
        velocity_kmh: 3.0,
        delay_spread_ns: (100.0, 300.0),
        distance_m: (150.0, 600.0),
        bs_height_m: 30.0,
        ut_height_m: 1.5,
        taps: 12,
        samples,
        distance_classes: classes,
        oscillators: 32,
    }
}

fn train(epochs: usize, batch_size: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        lr,
        betas: (0.9, 0.99),
        adam_eps: 1e-8,
        snr_db: (10.0, 14.0),
        seed: 0,
        lambda_ce: 0.0,
        rho0: 0.3,
    }
}

/// Smallest instance that exercises every layer (`M = K = 2`, `4 x 4` grid).
pub fn tiny() -> Preset {
    let grid = ResourceGrid::new(4, 4).expect("static grid");
    Preset {
        name: "tiny",
        sim: sim(2, 2, grid, 18, 2),
        net: NetConfig {
            antennas: 2,
            users: 2,
            grid,
            channel: ChannelNetConfig {
                l_f: 2,
                l_s: 3,
                mlp_hidden: 4,
                widths: [3, 3, 3],
                level_convs: [1, 1, 1],
                residual: true,
                zero_projection: false,
            },
            data: DataNetConfig {
                width: 3,
                hidden_layers: 1,
                bypass: false,
            },
        },
        train: train(2, 2, 1e-3),
        power: TRANSMIT_POWER_W,
        qam_order: 16,
        sweep_snr_db: vec![10.0, 12.0, 14.0],
    }
}

/// `M = 8`, `K = 4`, two resource blocks by one slot.
pub fn desk() -> Preset {
    let grid = ResourceGrid::new(24, 14).expect("static grid");
    Preset {
        name: "desk",
        sim: sim(8, 4, grid, 200, 10),
        net: NetConfig {
            antennas: 8,
            users: 4,
            grid,
            channel: ChannelNetConfig {
                l_f: 8,
                l_s: 8,
                mlp_hidden: 32,
                widths: [4, 8, 16],
                level_convs: [1, 1, 2],
                residual: true,
                zero_projection: false,
            },
            data: DataNetConfig {
                width: 16,
                hidden_layers: 2,
                bypass: false,
            },
        },
        train: train(50, 4, 3e-3),
        power: TRANSMIT_POWER_W,
        qam_order: 16,
        sweep_snr_db: vec![10.0, 12.0, 14.0],
    }
}

/// Full-scale configuration (`M = 64`, `K = 12`, `48 x 14` grid).
pub fn paper() -> Preset {
    let grid = ResourceGrid::new(48, 14).expect("static grid");
    Preset {
        name: "paper",
        sim: sim(64, 12, grid, 900, 45),
        net: NetConfig {
            antennas: 64,
            users: 12,
            grid,
            channel: ChannelNetConfig {
                l_f: 8,
                l_s: 32,
                mlp_hidden: 128,
                widths: [32, 64, 128],
                level_convs: [4, 4, 8],
                residual: true,
                zero_projection: false,
            },
            data: DataNetConfig {
                width: 128,
                hidden_layers: 5,
                bypass: false,
            },
        },
        train: train(300, 16, 1e-4),
        power: TRANSMIT_POWER_W,
        qam_order: 16,
        sweep_snr_db: vec![6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0],
    }
}

pub fn by_name(name: &str) -> Result<Preset> {
    match name {
        "tiny" => Ok(tiny()),
        "desk" => Ok(desk()),
        "paper" => Ok(paper()),
        _ => Err(Error::config(alloc::format!("unknown preset {name} (tiny, desk, paper)"))),
    }
}
