//! Command implementations behind the `siplab` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sipcore::channel::{gen_dataset, split_dataset, ChannelSample, DatasetSplit};
use sipcore::eval::{make_region_masks, pdp_region_stats, sweep, MetricRecord, RegionReport, SweepConfig};
use sipcore::nn::count_params;
use sipcore::train::{channel_scale, draw_batch, grad_check, init_params, stream_rng, train, ChainSpec, GradCheckReport};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::{self, Dataset, SimRecord};
use crate::error::{LabError, Result};
use crate::plots;
use crate::tables::{self, MetricsLog};

pub const DATASET_FILE: &str = "dataset.sipds";
pub const BEST_CKPT_FILE: &str = "best.sipckpt";
pub const LAST_CKPT_FILE: &str = "last.sipckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PDP_FILE: &str = "pdp_regions.csv";
pub const HEATMAP_FILE: &str = "pdp_heatmap.svg";
pub const NONFINITE_FILE: &str = "nonfinite_batch.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

/// Generate the preset's channel dataset.
pub fn gen_data(cfg: &RunConfig, seed: u64) -> Result<Dataset> {
    let sim = &cfg.preset.sim;
    Ok(Dataset {
        sim: Some(SimRecord::of(sim)),
        seed: Some(seed),
        samples: gen_dataset(sim, seed)?,
    })
}

pub fn gen_data_to(cfg: &RunConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let ds = gen_data(cfg, seed)?;
    let path = out.join(DATASET_FILE);
    dataset::save(&path, &ds)?;
    log::info!("wrote {} samples to {}", ds.samples.len(), path.display());
    Ok(path)
}

/// Dataset from `path`, else `cfg.dataset`, else freshly generated.
pub fn resolve_dataset(cfg: &RunConfig, path: Option<&Path>, seed: u64) -> Result<Dataset> {
    match path.or(cfg.dataset.as_deref()) {
        Some(p) => dataset::load(p),
        None => {
            log::info!("no dataset given, generating the {} preset's", cfg.preset.name);
            gen_data(cfg, seed)
        }
    }
}

/// Train/validation/test split; fixed per dataset so that training and
/// evaluation agree.
pub fn split(ds: &Dataset) -> Result<DatasetSplit> {
    Ok(split_dataset(ds.samples.len(), ds.seed.unwrap_or(0))?)
}

fn pick<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a ChannelSample> {
    idx.iter().map(|&i| &ds.samples[i]).collect()
}

fn check_shape(cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    let net = &cfg.preset.net;
    let first = ds.samples.first().ok_or(sipcore::Error::EmptyDataset)?;
    if first.antennas() != net.antennas || first.users() != net.users || first.grid != net.grid {
        return Err(LabError::config(format!(
            "dataset is {}x{} on a {}x{} grid, preset {} expects {}x{} on {}x{}",
            first.antennas(),
            first.users(),
            first.grid.subcarriers(),
            first.grid.symbols(),
            cfg.preset.name,
            net.antennas,
            net.users,
            net.grid.subcarriers(),
            net.grid.symbols()
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct NonFiniteReport {
    epoch: usize,
    step: usize,
    samples: Vec<usize>,
    snr_db: f64,
    seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<sipcore::train::EpochMetrics>,
}

/// Train on the dataset's training split. With `out`, the metrics log is
/// written as training progresses and both checkpoints at the end.
pub fn train_run(cfg: &RunConfig, ds: &Dataset, out: Option<&Path>) -> Result<TrainSummary> {
    check_shape(cfg, ds)?;
    let p = &cfg.preset;
    let sp = split(ds)?;
    let (train_set, val_set) = (pick(ds, &sp.train), pick(ds, &sp.val));
    let spec = ChainSpec::new(p.net.clone(), p.power, p.qam_order, p.train.lambda_ce)?;
    let params = init_params(&spec, &p.train)?;
    let mut log = match out {
        Some(dir) => {
            ensure_dir(dir)?;
            Some(MetricsLog::create(&dir.join(METRICS_FILE))?)
        }
        None => None,
    };
    let mut log_err = None;
    let outcome = train(&p.train, &spec, &train_set, &val_set, params, &mut |m| {
        if let Some(l) = log.as_mut() {
            if let Err(e) = l.push(m) {
                log_err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = log_err {
        return Err(e);
    }
    let outcome = match outcome {
        Err(sipcore::Error::NonFiniteLoss { epoch, step, samples, snr_db }) => {
            let ids: Vec<usize> = samples.iter().map(|&i| sp.train[i]).collect();
            if let Some(dir) = out {
                let report = NonFiniteReport { epoch, step, samples: ids.clone(), snr_db, seed: p.train.seed };
                let path = dir.join(NONFINITE_FILE);
                fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(|e| LabError::io(&path, e))?;
            }
            return Err(LabError::format(format!(
                "non-finite loss at epoch {epoch}, step {step} (dataset samples {ids:?}, {snr_db:.2} dB)"
            )));
        }
        other => other?,
    };
    let make = |params, epoch, optimizer| Checkpoint {
        preset: p.name.to_string(),
        net: p.net.clone(),
        train: p.train.clone(),
        power: p.power,
        qam_order: p.qam_order,
        params,
        optimizer,
        epoch,
        channel_amp: outcome.channel_amp,
        velocity_kmh: ds.velocity_kmh(),
    };
    let best = make(outcome.best.clone(), outcome.best_epoch, None);
    let last = make(outcome.last.clone(), p.train.epochs, Some(outcome.optimizer.clone()));
    if let Some(dir) = out {
        checkpoint::save(&dir.join(BEST_CKPT_FILE), &best)?;
        checkpoint::save(&dir.join(LAST_CKPT_FILE), &last)?;
    }
    Ok(TrainSummary {
        best,
        last,
        history: outcome.history,
    })
}

/// Sweep the test split of `ds`.
pub fn sweep_run(
    cfg: &RunConfig,
    ds: &Dataset,
    casip: Option<&Checkpoint>,
    sipce: Option<&Checkpoint>,
    seed: u64,
) -> Result<Vec<MetricRecord>> {
    let sp = split(ds)?;
    let test = pick(ds, &sp.test);
    let casip = casip.map(Checkpoint::model).transpose()?;
    let sipce = sipce.map(Checkpoint::model).transpose()?;
    let s = &cfg.sweep;
    let sc = SweepConfig {
        schemes: s.schemes.clone(),
        snr_db: s.snr_db.clone(),
        trials: s.trials,
        seed,
        power: cfg.preset.power,
        qam_order: cfg.preset.qam_order,
        rho_uniform: s.rho_uniform,
        icedd_iterations: s.icedd_iterations,
        window: s.window,
    };
    Ok(sweep(&sc, &test, casip.as_ref(), sipce.as_ref())?)
}

pub fn sweep_to(
    cfg: &RunConfig,
    ds: &Dataset,
    casip: Option<&Checkpoint>,
    sipce: Option<&Checkpoint>,
    seed: u64,
    out: &Path,
) -> Result<(Vec<MetricRecord>, Vec<PathBuf>)> {
    let rows = sweep_run(cfg, ds, casip, sipce, seed)?;
    ensure_dir(out)?;
    let path = out.join(SWEEP_FILE);
    tables::save_sweep(&path, &rows)?;
    let mut files = vec![path];
    files.extend(plots::plot_sweep(&rows, out)?);
    Ok((rows, files))
}

/// Region statistics of a checkpoint's learned PDP factors. Grids that are
/// not a whole number of at least two resource blocks only get "whole".
pub fn pdp_stats(ck: &Checkpoint) -> Result<Vec<RegionReport>> {
    let rho = ck.params.pdp();
    match make_region_masks(&ck.net.grid) {
        Ok(masks) => Ok(pdp_region_stats(&rho, &masks)?),
        Err(e) => {
            log::warn!("{e}; reporting the whole grid only");
            let whole = sipcore::eval::RegionMask {
                grid: ck.net.grid,
                whole: vec![true; ck.net.grid.res()],
                head_tail_rbs: vec![false; ck.net.grid.res()],
                middle_rbs: vec![false; ck.net.grid.res()],
                edge_symbols: vec![false; ck.net.grid.res()],
                middle_symbols: vec![false; ck.net.grid.res()],
            };
            let mut all = pdp_region_stats(&rho, &whole)?;
            all.truncate(1);
            Ok(all)
        }
    }
}

pub fn format_pdp(reports: &[RegionReport]) -> String {
    let mut s = String::from("region            pooled          per user\n");
    for r in reports {
        let show = |x: &Option<sipcore::eval::RegionStat>| x.map_or("-".to_string(), |v| v.to_string());
        let users: Vec<String> = r.per_user.iter().map(show).collect();
        let _ = writeln!(s, "{:<17} {:<15} {}", r.region, show(&r.pooled), users.join("  "));
    }
    s
}

pub fn pdp_report_to(ck: &Checkpoint, out: &Path) -> Result<(Vec<RegionReport>, Vec<PathBuf>)> {
    ensure_dir(out)?;
    let reports = pdp_stats(ck)?;
    let path = out.join(PDP_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["region", "scope", "mean_pct", "std_pct", "count"])?;
    for r in &reports {
        let scopes = std::iter::once(("pooled".to_string(), r.pooled))
            .chain(r.per_user.iter().enumerate().map(|(k, v)| (format!("user{k}"), *v)));
        for (scope, stat) in scopes {
            let Some(st) = stat else { continue };
            w.write_record([r.region.to_string(), scope, st.mean.to_string(), st.std.to_string(), st.count.to_string()])?;
        }
    }
    w.flush().map_err(|e| LabError::io(&path, e))?;
    let heat = out.join(HEATMAP_FILE);
    plots::plot_pdp_heatmap(&ck.params.pdp(), &ck.net.grid, &heat)?;
    Ok((reports, vec![path, heat]))
}

/// Gradient check of the full link on two frames of the preset.
pub fn grad_check_run(cfg: &RunConfig, seed: u64, coords: usize, step: f64) -> Result<GradCheckReport> {
    let mut p = cfg.preset.clone();
    p.sim.samples = p.sim.samples.clamp(2, 4);
    let samples = gen_dataset(&p.sim, seed)?;
    let refs: Vec<&ChannelSample> = samples.iter().collect();
    let spec = ChainSpec::new(p.net.clone(), p.power, p.qam_order, p.train.lambda_ce)?;
    let mut tc = p.train.clone();
    tc.seed = seed;
    let params = init_params(&spec, &tc)?;
    let amp = channel_scale(&refs)?;
    let mut rng = stream_rng(seed, 99);
    let batch = draw_batch(&spec, &refs[..2], amp, 0.05, &mut rng)?;
    Ok(grad_check(&spec, &params, &batch, coords, step, seed)?)
}

pub fn describe_checkpoint(ck: &Checkpoint) -> String {
    let c = ck.params.counts();
    let expect = count_params(&ck.net);
    let n = &ck.net;
    let mut s = String::new();
    let _ = writeln!(s, "format        {}", checkpoint::FORMAT);
    let _ = writeln!(s, "preset        {}", ck.preset);
    let _ = writeln!(s, "config hash   {}", ck.config_hash());
    let _ = writeln!(
        s,
        "link          M={} K={} grid {}x{} power {} W, {}-QAM",
        n.antennas,
        n.users,
        n.grid.subcarriers(),
        n.grid.symbols(),
        ck.power,
        ck.qam_order
    );
    let _ = writeln!(s, "epoch         {}", ck.epoch);
    let _ = writeln!(s, "velocity      {} km/h", ck.velocity_kmh);
    let _ = writeln!(s, "channel amp   {}", ck.channel_amp);
    let _ = writeln!(
        s,
        "parameters    f_p {} f_c {} f_d {} total {}{}",
        c.f_p,
        c.f_c,
        c.f_d,
        c.total(),
        if c == expect { "" } else { " (layout mismatch)" }
    );
    let _ = writeln!(
        s,
        "optimizer     {}",
        ck.optimizer
            .as_ref()
            .map_or("none".to_string(), |o| format!("Adam step {} lr {}", o.step, o.lr))
    );
    let t = &ck.train;
    let _ = writeln!(
        s,
        "training      {} epochs, batch {}, lr {}, Es/sigma^2 {}..{} dB, seed {}, lambda_ce {}",
        t.epochs, t.batch_size, t.lr, t.snr_db.0, t.snr_db.1, t.seed, t.lambda_ce
    );
    let rho = ck.params.pdp();
    let vals = rho.as_slice();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64).sqrt();
    let _ = writeln!(s, "PDP factors   {:.2}±{:.2} %", 100.0 * mean, 100.0 * std);
    s
}
