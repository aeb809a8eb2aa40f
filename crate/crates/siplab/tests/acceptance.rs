//! One line per acceptance criterion; exits non-zero if any fails.
//!
//! The trend criterion trains the desk preset for three seeds and dominates
//! the runtime (tens of minutes on one core). Set `SIPLAB_ACCEPTANCE_SKIP_TREND=1`
//! to report it as skipped.

#[path = "../../sipcore/tests/support/mod.rs"]
mod support;

use std::time::Instant;

use sipcore::eval::{make_region_masks, pdp_region_stats, Scheme};
use sipcore::grid::ResourceGrid;
use sipcore::nn::count_params;
use sipcore::presets;
use sipcore::tx::PdpFactors;
use siplab::commands;
use siplab::config::RunConfig;
use siplab::tables;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let r = support::oracle_suite(200, 1);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        r.worst() <= 1e-10 && secs < 10.0,
        format!(
            "{} instances, worst rel err ls {:.1e} cancel {:.1e} mmse {:.1e} transmit {:.1e} loss {:.1e} (<= 1e-10), {secs:.2} s",
            r.instances, r.ls, r.cancel, r.mmse, r.transmit, r.loss
        ),
    )
}

fn exact_recovery() -> Outcome {
    let t = Instant::now();
    let r = support::recovery_suite(1000, 2);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        r.pilot_only_nmse_db <= -200.0
            && r.perfect_csi_errors == 0
            && r.genie_nmse_db <= -200.0
            && r.raw_nmse_db > -30.0
            && secs < 30.0,
        format!(
            "pilot-only LS {:.0} dB, perfect-CSI errors {}/{}, genie {:.0} dB vs raw {:.1} dB, {secs:.2} s",
            r.pilot_only_nmse_db, r.perfect_csi_errors, r.perfect_csi_symbols, r.genie_nmse_db, r.raw_nmse_db
        ),
    )
}

fn pilots() -> Outcome {
    let t = Instant::now();
    let r = support::pilot_suite();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        r.orthogonal && r.bijection && secs < 5.0,
        format!(
            "K=12 E=672 orthogonal {} (max cross {:.1e}), 48x14 placement bijection {}, {secs:.3} s",
            r.orthogonal, r.max_cross, r.bijection
        ),
    )
}

fn embedding() -> Outcome {
    let r = support::embedding_suite();
    outcome(
        r.endpoint_err <= 1e-9 && r.shape_ok && r.zero_exact,
        format!(
            "f_s endpoints {} and {:.6e} (err {:.1e}), A_mid shape ok {}, a=0 exact {}",
            r.first, r.last, r.endpoint_err, r.shape_ok, r.zero_exact
        ),
    )
}

fn differentiability() -> Outcome {
    let t = Instant::now();
    let cfg = RunConfig::from_preset(presets::tiny());
    let r = match commands::grad_check_run(&cfg, 0, 32, 1e-4) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("grad check failed to run: {e}")),
    };
    let secs = t.elapsed().as_secs_f64();
    let groups: Vec<String> = r.groups.iter().map(|g| format!("{} {:.1e}", g.group, g.max_rel_error)).collect();
    let names: Vec<&str> = r.groups.iter().map(|g| g.group.as_str()).collect();
    outcome(
        names == ["W_p", "W_c", "W_d"] && r.max_rel_error() <= 1e-3 && secs < 60.0,
        format!("{} (<= 1e-3), {secs:.2} s", groups.join(", ")),
    )
}

fn parameter_budget() -> Outcome {
    let c = count_params(&presets::paper().net);
    outcome(
        (2_400_000..=2_900_000).contains(&c.total()) && (550_000..=900_000).contains(&c.f_d),
        format!("total {} in [2.4e6, 2.9e6], detector {} in [0.55e6, 0.90e6]", c.total(), c.f_d),
    )
}

fn trend() -> Outcome {
    if std::env::var_os("SIPLAB_ACCEPTANCE_SKIP_TREND").is_some() {
        return outcome(false, "skipped (SIPLAB_ACCEPTANCE_SKIP_TREND set)".into());
    }
    let t = Instant::now();
    let mut base = RunConfig::from_preset(presets::desk());
    base.sweep.schemes = vec![Scheme::SipUniform, Scheme::Casip];
    base.sweep.snr_db = vec![12.0];
    base.sweep.rho_uniform = 0.3;
    let ds = match commands::gen_data(&base, 1) {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("dataset: {e}")),
    };
    let (mut wins, mut spread_ok) = (0, true);
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let mut cfg = base.clone();
        cfg.preset.train.seed = seed;
        let run = commands::train_run(&cfg, &ds, None).and_then(|s| {
            let rows = commands::sweep_run(&cfg, &ds, Some(&s.best), None, 100 + seed)?;
            let stats = commands::pdp_stats(&s.best)?;
            Ok((rows, stats))
        });
        let (rows, stats) = match run {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        let mse = |name: &str| rows.iter().find(|r| r.scheme == name).map(|r| r.symbol_mse).unwrap_or(f64::NAN);
        let (uniform, casip) = (mse("SIP-uniform"), mse("CaSIP"));
        let pooled = stats[0].pooled.expect("whole region is never empty");
        wins += usize::from(casip < uniform);
        spread_ok &= pooled.std > 1.0;
        eprintln!(
            "  trend seed {seed}: CaSIP MSE {casip:.4} vs SIP-uniform {uniform:.4}, rho {pooled} % ({:.0} s elapsed)",
            t.elapsed().as_secs_f64()
        );
        per_seed.push(format!("seed {seed}: {casip:.3} vs {uniform:.3}, rho {pooled}"));
    }
    outcome(
        wins >= 2 && spread_ok,
        format!(
            "CaSIP below SIP-uniform in {wins}/3 seeds at 12 dB, pooled rho std > 1 pp in all: {spread_ok} [{}], {:.0} s",
            per_seed.join("; "),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn statistics() -> Outcome {
    let grid = ResourceGrid::new(48, 14).unwrap();
    let masks = make_region_masks(&grid).unwrap();
    let reports = pdp_region_stats(&PdpFactors::uniform(12, grid.res(), 0.3).unwrap(), &masks).unwrap();
    let shown: Vec<String> = reports
        .iter()
        .flat_map(|r| std::iter::once(r.pooled).chain(r.per_user.iter().copied()))
        .map(|s| s.map_or("-".into(), |s| s.to_string()))
        .collect();
    let all_30 = shown.iter().all(|s| s == "30.00±0.00");
    let e = grid.res();
    let partition = (0..e).all(|i| {
        masks.whole[i]
            && (masks.head_tail_rbs[i] != masks.middle_rbs[i])
            && (masks.edge_symbols[i] != masks.middle_symbols[i])
    });
    outcome(
        all_30 && partition && reports.len() == 5,
        format!(
            "{} region/user statistics all 30.00±0.00: {all_30}, partition identities: {partition}",
            shown.len()
        ),
    )
}

fn determinism() -> Outcome {
    let mut cfg = RunConfig::from_preset(presets::tiny());
    cfg.preset.train.epochs = 4;
    let run = || -> siplab::Result<(Vec<f64>, Vec<u8>)> {
        let ds = commands::gen_data(&cfg, 5)?;
        let s = commands::train_run(&cfg, &ds, None)?;
        let rows = commands::sweep_run(&cfg, &ds, Some(&s.best), Some(&s.best), 7)?;
        let mut csv = Vec::new();
        tables::write_sweep(&mut csv, &rows)?;
        Ok((s.history.iter().map(|m| m.train_loss).collect(), csv))
    };
    match (run(), run()) {
        (Ok((la, ca)), Ok((lb, cb))) => {
            let worst = la
                .iter()
                .zip(&lb)
                .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            outcome(
                la.len() == lb.len() && worst <= 1e-6 && ca == cb,
                format!(
                    "loss curves differ by {worst:.1e} (<= 1e-6), sweep CSVs ({} bytes) identical: {}",
                    ca.len(),
                    ca == cb
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("run failed: {e}")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("exact recovery", exact_recovery),
        ("pilot suite", pilots),
        ("embedding suite", embedding),
        ("differentiability", differentiability),
        ("parameter budget", parameter_budget),
        ("trend reproduction", trend),
        ("statistics machinery", statistics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
