//! Command dispatch and result emission for the command line tool.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CommandKind, ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::extractor::{extractor_report, mi_estimate, ExtractorOptions};
use crate::lattice::{LatticeBasis, NestedChain};
use crate::protocol::{run_trials_detailed, TrialOptions, TrialRecord};
use crate::rates::{chain_calibrate, rate_report, v1_sweep, G_IDEAL};
use crate::rng::derive_seed;
use crate::source::{SourceMode, SourceParams};
use crate::theta::{
    flatness_direct, flatness_dual, flatness_factor, secrecy_sweep, FlatnessMethod, FlatnessResult,
};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits round-trip every f64.
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Num)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub json: Value,
    pub table: Table,
    pub trials: Option<Vec<TrialRecord>>,
}

impl RunOutput {
    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_vec_pretty(&self.json)
                    .map_err(|e| Error::Config(e.to_string()))?;
                s.push(b'\n');
                Ok(s)
            }
            OutputFormat::Csv => {
                let mut buf = Vec::new();
                self.table.write_csv(&mut buf)?;
                Ok(buf)
            }
        }
    }
}

pub fn trials_table(records: &[TrialRecord]) -> Table {
    Table {
        header: vec![
            "trial",
            "s_index",
            "k_index",
            "k_hat_index",
            "xq_match",
            "key_match",
            "predicate",
            "decomposition_residual",
        ],
        rows: records
            .iter()
            .map(|r| {
                vec![
                    r.trial.into(),
                    r.s_index.into(),
                    r.k_index.into(),
                    r.k_hat_index.into(),
                    r.xq_match.into(),
                    r.key_match.into(),
                    r.predicate.into(),
                    r.decomposition_residual.into(),
                ]
            })
            .collect(),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn envelope(command: CommandKind, seed: u64, result: Value, provenance: &[(&str, &str)]) -> Value {
    let prov: BTreeMap<&str, &str> = provenance.iter().copied().collect();
    json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "result": result,
        "provenance": prov,
    })
}

fn chain_for(
    cfg: &ExperimentConfig,
    params: &SourceParams,
) -> Result<(NestedChain, Option<Value>)> {
    match (&cfg.chain, &cfg.calibrate) {
        (Some(spec), _) => Ok((spec.build()?, None)),
        (None, Some(cal)) => {
            let (chain, c) = chain_calibrate(params, &cal.family, cal.n, &cal.options())?;
            Ok((chain, Some(to_value(&c))))
        }
        (None, None) => Err(Error::Config(
            "a chain (or calibrate block) is required".into(),
        )),
    }
}

/// Runs one command on a fully merged configuration.
pub fn run(command: CommandKind, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let seed = cfg.seed.unwrap_or(0);
    match command {
        CommandKind::Flatness => run_flatness(cfg, seed),
        CommandKind::Extract => run_extract(cfg, seed),
        CommandKind::Keygen => run_keygen(cfg, seed),
        CommandKind::Rates => run_rates(cfg, seed),
        CommandKind::Calibrate => run_calibrate(cfg, seed),
    }
}

fn run_flatness(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let s = &cfg.flatness;
    if s.sigmas.is_empty() && s.sweep.is_none() {
        return Err(Error::Config("flatness.sigmas is empty".into()));
    }
    let lattice = if s.sigmas.is_empty() {
        None
    } else {
        Some(cfg.lattice()?)
    };
    let mut rows = Vec::new();
    let mut table = Table {
        header: vec![
            "family",
            "n",
            "sigma",
            "vnr",
            "epsilon",
            "tail_bound",
            "method",
        ],
        rows: Vec::new(),
    };
    let flatness_row = |family: String, n: usize, r: &FlatnessResult| {
        vec![
            Cell::Text(family),
            (n as u64).into(),
            r.sigma.into(),
            r.vnr.into(),
            r.epsilon.into(),
            r.tail_bound.into(),
            Cell::Text(format!("{:?}", r.method)),
        ]
    };
    if let Some(l) = &lattice {
        for &sigma in &s.sigmas {
            let th = flatness_factor(l, sigma)?;
            let du = flatness_dual(l, sigma)?;
            let grid = if l.n() <= 2 {
                Some(flatness_direct(l, sigma, s.grid)?)
            } else {
                None
            };
            for r in [Some(&th), Some(&du), grid.as_ref().map(|g| &g.result)]
                .into_iter()
                .flatten()
            {
                table.rows.push(flatness_row(l.name(), l.n(), r));
            }
            rows.push(json!({ "theta": th, "dual": du, "grid": grid }));
        }
    }
    let sweep = match &s.sweep {
        Some(sw) => Some(secrecy_sweep(&sw.family, sw.sigma, &sw.n_list, sw.vnr)?),
        None => None,
    };
    if let (Some(sw), Some(points)) = (&s.sweep, &sweep) {
        for p in points {
            table.rows.push(vec![
                Cell::Text(LatticeBasis::family_member(&sw.family, p.n)?.name()),
                (p.n as u64).into(),
                sw.sigma.into(),
                p.vnr.into(),
                p.epsilon.into(),
                p.tail_bound.into(),
                Cell::Text(format!("{:?}", FlatnessMethod::ThetaIdentity)),
            ]);
        }
    }
    let result = json!({
        "lattice": lattice.as_ref().map(|l| json!({ "name": l.name(), "n": l.n(), "volume": l.volume() })),
        "rows": rows,
        "sweep": sweep,
    });
    Ok(RunOutput {
        json: envelope(
            CommandKind::Flatness,
            seed,
            result,
            &[
                ("rows.theta", "theta::flatness_factor"),
                ("rows.dual", "theta::flatness_dual"),
                ("rows.grid", "theta::flatness_direct"),
                ("sweep", "theta::secrecy_sweep"),
            ],
        ),
        table,
        trials: None,
    })
}

fn run_extract(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let lattice = cfg.lattice()?;
    let params = cfg.source_params()?;
    let s = &cfg.extract;
    let opts = ExtractorOptions {
        mi_samples: s.mi_samples,
        tv_samples: s.tv_samples,
        tv_bins: s.tv_bins,
        seed,
    };
    let report = extractor_report(&lattice, &params, &opts)?;
    let mut table = Table {
        header: vec!["sigma2", "epsilon", "mi_estimate", "mi_stderr", "bound"],
        rows: Vec::new(),
    };
    table.rows.push(vec![
        params.sigma2.into(),
        report.epsilon_sigma2.into(),
        report.mi_estimate.value.into(),
        report.mi_estimate.stderr.into(),
        report.mi_bound_relaxed.into(),
    ]);
    if !s.sweep_rho_xz.is_empty() && params.mode != SourceMode::Markov {
        return Err(Error::Config(
            "extract.sweep_rho_xz needs a markov source".into(),
        ));
    }
    for (i, &rho) in s.sweep_rho_xz.iter().enumerate() {
        let p = SourceParams::markov(
            params.sigma_x,
            params.sigma_y,
            params.sigma_z,
            params.rho_xy,
            rho,
        )?;
        let eps = flatness_factor(&lattice, p.sigma2)?.epsilon;
        let mi = mi_estimate(
            &lattice,
            &p,
            s.mi_samples,
            derive_seed(seed, &format!("sweep-{i}")),
        )?;
        table.rows.push(vec![
            p.sigma2.into(),
            eps.into(),
            mi.value.into(),
            mi.stderr.into(),
            (3.0 * eps).into(),
        ]);
    }
    let result = json!({
        "lattice": { "name": lattice.name(), "n": lattice.n(), "volume": lattice.volume() },
        "source": params,
        "report": report,
    });
    Ok(RunOutput {
        json: envelope(
            CommandKind::Extract,
            seed,
            result,
            &[
                ("report.epsilon_sigma2", "theta::flatness_factor"),
                ("report.epsilon_sigma_x", "theta::flatness_factor"),
                ("report.mi_estimate", "extractor::mi_estimate"),
                ("report.tv_to_uniform", "extractor::uniformity_tv"),
                (
                    "report.entropy_rate_lower_bound",
                    "extractor::entropy_rate_lower_bound",
                ),
                ("report.mi_bound", "extractor::extractor_report"),
                ("source", "source::SourceParams"),
            ],
        ),
        table,
        trials: None,
    })
}

fn run_keygen(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let params = cfg.source_params()?;
    let trials = cfg
        .trials
        .ok_or_else(|| Error::Config("keygen needs trials".into()))?;
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let (chain, calibration) = chain_for(cfg, &params)?;
    let opts = TrialOptions {
        seed,
        z_bins: cfg.keygen.z_bins,
        d_av_replicates: cfg.keygen.d_av_replicates,
    };
    let (metrics, records) = run_trials_detailed(&chain, &params, trials, &opts)?;
    let rates = rate_report(&chain, &params, None);
    let table = Table {
        header: vec![
            "trials",
            "key_cardinality",
            "key_error_rate",
            "key_error_stderr",
            "quantizer_error_rate",
            "key_entropy",
            "key_uniformity_deviation",
            "key_uniformity_bound",
            "d_av",
            "d_av_stderr",
            "secrecy_bound",
            "predicate_agreement",
        ],
        rows: vec![vec![
            metrics.trials.into(),
            metrics.key_cardinality.into(),
            metrics.key_error_rate.value.into(),
            metrics.key_error_rate.stderr.into(),
            metrics.quantizer_error_rate.value.into(),
            metrics.key_entropy.into(),
            metrics.key_uniformity_deviation.into(),
            metrics.key_uniformity_bound.into(),
            metrics.d_av.value.into(),
            metrics.d_av.stderr.into(),
            metrics.secrecy_bound.into(),
            metrics.predicate_agreement.into(),
        ]],
    };
    let result = json!({
        "chain": chain.summary(),
        "calibration": calibration,
        "source": params,
        "rates": rates,
        "metrics": metrics,
    });
    Ok(RunOutput {
        json: envelope(
            CommandKind::Keygen,
            seed,
            result,
            &[
                ("chain", "lattice::NestedChain::summary"),
                ("calibration", "rates::chain_calibrate"),
                ("source", "source::SourceParams"),
                ("rates", "rates::rate_report"),
                ("metrics", "protocol::run_trials"),
                ("metrics.epsilon_coarse_sigma_x", "theta::flatness_factor"),
            ],
        ),
        table,
        trials: Some(records),
    })
}

fn run_rates(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let params = cfg.source_params()?;
    let s = &cfg.rates;
    let (chain, _) = chain_for(cfg, &params)?;
    let g = s.g.unwrap_or(G_IDEAL);
    let s1 = params.sigma1 * params.sigma1;
    let sweep = v1_sweep(
        &params,
        g,
        s.v1_max.unwrap_or(10.0 * s1),
        s.v1_min.unwrap_or(1e-8 * s1),
        s.points.unwrap_or(41),
    )?;
    let unit = if s.bits {
        1.0 / std::f64::consts::LN_2
    } else {
        1.0
    };
    let mut report = rate_report(&chain, &params, Some(g));
    for v in [
        &mut report.r_k,
        &mut report.r_p,
        &mut report.r_k_bound,
        &mut report.r_p_bound,
        &mut report.quasi_optimal,
        &mut report.upper_bound,
        &mut report.gap,
    ] {
        *v *= unit;
    }
    let table = Table {
        header: vec!["v1_root", "r_k_bound", "r_p_bound", "gap"],
        rows: sweep
            .iter()
            .map(|b| {
                vec![
                    b.v1_root.into(),
                    (b.r_k_bound * unit).into(),
                    (b.r_p_bound * unit).into(),
                    (b.gap * unit).into(),
                ]
            })
            .collect(),
    };
    let sweep_json: Vec<Value> = sweep
        .iter()
        .map(|b| json!({ "v1_root": b.v1_root, "r_k_bound": b.r_k_bound * unit, "r_p_bound": b.r_p_bound * unit, "gap": b.gap * unit }))
        .collect();
    let result = json!({
        "units": if s.bits { "bits" } else { "nats" },
        "chain": chain.summary(),
        "degradedness": params.degradedness_report(),
        "report": report,
        "sweep": sweep_json,
    });
    Ok(RunOutput {
        json: envelope(
            CommandKind::Rates,
            seed,
            result,
            &[
                ("chain", "lattice::NestedChain::summary"),
                ("degradedness", "source::degradedness_report"),
                ("report", "rates::rate_report"),
                ("sweep", "rates::v1_sweep"),
            ],
        ),
        table,
        trials: None,
    })
}

fn run_calibrate(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let params = cfg.source_params()?;
    let settings = cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| Error::Config("a calibrate block is required".into()))?;
    let (chain, cal) = chain_calibrate(&params, &settings.family, settings.n, &settings.options())?;
    let table = Table {
        header: vec![
            "family",
            "n",
            "base_scale",
            "scale2",
            "scale3",
            "epsilon_coarse_sigma2",
            "awgn_margin",
            "r_k",
            "r_k_bound",
        ],
        rows: vec![vec![
            Cell::Text(cal.family.clone()),
            (cal.n as u64).into(),
            cal.base_scale.into(),
            u64::from(cal.scale2).into(),
            u64::from(cal.scale3).into(),
            cal.epsilon_coarse_sigma2.into(),
            cal.rates.awgn_margin.into(),
            cal.rates.r_k.into(),
            cal.rates.r_k_bound.into(),
        ]],
    };
    let result = json!({ "chain": chain.summary(), "calibration": cal });
    Ok(RunOutput {
        json: envelope(
            CommandKind::Calibrate,
            seed,
            result,
            &[
                ("chain", "lattice::NestedChain::summary"),
                ("calibration", "rates::chain_calibrate"),
            ],
        ),
        table,
        trials: None,
    })
}

/// Machine-readable error record for stderr.
pub fn error_record(err: &Error) -> Value {
    json!({ "error": { "kind": err.kind(), "message": err.to_string(), "exit_code": err.exit_code() } })
}

pub fn write_output(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}
