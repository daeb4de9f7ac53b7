use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use qaint_core::baselines::{apply_filter, FilterKind, FilterSpec};
use qaint_core::mitigate::{check_decompressed, to_f32_output};
use qaint_core::parallel::{decompose, run_strategy, Strategy};
use qaint_core::quality::{max_errors, psnr, ssim, SsimParams};
use qaint_core::quant::resolve_eps;
use qaint_core::{
    compensate, dequantize, quantize, ErrorBound, MitigationConfig, QuantizedField, ScalarGrid,
};

use crate::error::{CliError, CliResult};
use crate::io::*;
use crate::BoundArgs;

pub fn init_workers(requested: Option<usize>) -> CliResult<usize> {
    let workers = match requested {
        Some(0) => return Err(CliError::Usage("--workers must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(workers)
}

pub fn cmd_quantize(
    input: &Path,
    dims: &str,
    bound: BoundArgs,
    out: &Path,
    out_q: &Path,
) -> CliResult<()> {
    let dims = parse_dims(dims)?;
    let data = read_volume(input, dims)?;
    let bound = match (bound.eps_rel, bound.eps_abs) {
        (Some(rel), _) => ErrorBound::Relative(rel),
        (_, Some(abs)) => ErrorBound::Absolute(abs),
        _ => unreachable!("clap requires one bound"),
    };
    let eps_abs = resolve_eps(bound, &data)?;
    let q = quantize(&data, eps_abs)?;
    write_indices(out_q, &q)?;
    write_volume(out, &narrow(&dequantize(&q)))?;
    write_sidecar(&sidecar_path(out_q), &Sidecar { eps_abs, dims })?;
    println!("eps_abs={eps_abs}");
    Ok(())
}

/// Loads indices and the decompressed volume, taking dims and ε from the
/// flags or else from the sidecar, and checks that the two agree.
fn load_pair(
    decomp: &Path,
    q_path: &Path,
    dims: Option<&str>,
    eps_abs: Option<f64>,
) -> CliResult<(QuantizedField, ScalarGrid)> {
    let side = || read_sidecar(&sidecar_path(q_path));
    let dims = match dims {
        Some(d) => parse_dims(d)?,
        None => side()?.dims,
    };
    let eps_abs = match eps_abs {
        Some(e) => e,
        None => side()?.eps_abs,
    };
    let q = read_indices(q_path, dims, eps_abs)?;
    let stored = read_volume(decomp, dims)?;
    check_decompressed(&stored, &q)?;
    let dq = dequantize(&q);
    Ok((q, dq))
}

pub fn cmd_mitigate(
    decomp: &Path,
    q_path: &Path,
    dims: Option<&str>,
    eps_abs: Option<f64>,
    eta: f64,
    out: &Path,
) -> CliResult<()> {
    let (q, dq) = load_pair(decomp, q_path, dims, eps_abs)?;
    let cfg = MitigationConfig::new(eta, q.eps_abs())?;
    let comp = compensate(&dq, &q, &cfg)?;
    let max_c = comp
        .as_slice()
        .iter()
        .zip(dq.as_slice())
        .map(|(c, d)| (c - d).abs())
        .fold(0.0, f64::max);
    write_volume(out, &to_f32_output(&comp, &dq, &cfg)?)?;
    println!("max_abs_compensation={}", fmt_g9(max_c));
    Ok(())
}

fn metric_row(reference: &ScalarGrid, test: &ScalarGrid) -> CliResult<[f64; 4]> {
    let (max_abs, max_rel) = max_errors(reference, test)?;
    Ok([
        ssim(reference, test, &SsimParams::default())?,
        psnr(reference, test)?,
        max_abs,
        max_rel,
    ])
}

pub fn cmd_metrics(reference: &Path, test: &Path, dims: &str) -> CliResult<()> {
    let dims = parse_dims(dims)?;
    let r = read_volume(reference, dims)?;
    let t = read_volume(test, dims)?;
    let row = metric_row(&r, &t)?;
    println!("ssim,psnr,max_abs,max_rel");
    println!("{}", row.map(fmt_g9).join(","));
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Method {
    None,
    Compensate,
    Filter(FilterKind),
}

impl Method {
    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "none" => Ok(Method::None),
            "compensate" => Ok(Method::Compensate),
            other => Ok(Method::Filter(other.parse()?)),
        }
    }

    fn name(&self) -> String {
        match self {
            Method::None => "none".into(),
            Method::Compensate => "compensate".into(),
            Method::Filter(k) => k.to_string(),
        }
    }
}

pub fn cmd_sweep(
    input: &Path,
    dims: &str,
    bounds: &str,
    methods: &str,
    eta: f64,
    out: &Path,
) -> CliResult<()> {
    let dims = parse_dims(dims)?;
    let bounds = parse_list::<f64>(bounds, "bound")?;
    if bounds.is_empty()
        || bounds.iter().any(|&b| !(b > 0.0))
        || bounds.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(CliError::Usage(
            "bounds must be positive and strictly ascending".into(),
        ));
    }
    let methods = methods
        .split(',')
        .map(|m| Method::parse(m.trim()))
        .collect::<CliResult<Vec<_>>>()?;
    let orig = read_volume(input, dims)?;

    let file = File::create(out).map_err(|e| CliError::io(out, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", out.display()));
    w.write_record([
        "eps_rel",
        "method",
        "ssim",
        "psnr",
        "max_rel_err",
        "bound_ok",
    ])
    .map_err(csv_err)?;
    for &rel in &bounds {
        let eps = resolve_eps(ErrorBound::Relative(rel), &orig)?;
        let q = quantize(&orig, eps)?;
        let dq = dequantize(&q);
        let cfg = MitigationConfig::new(eta, eps)?;
        for &method in &methods {
            let written = method_output(method, &dq, &q, &cfg)?;
            let result = widen(&written, dims)?;
            let [s, p, max_abs, max_rel] = metric_row(&orig, &result)?;
            w.write_record([
                fmt_g9(rel),
                method.name(),
                fmt_g9(s),
                fmt_g9(p),
                fmt_g9(max_rel),
                (max_abs <= cfg.relaxed_bound()).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(out, e))
}

/// Single-precision values a method would write for `dq`.
fn method_output(
    method: Method,
    dq: &ScalarGrid,
    q: &QuantizedField,
    cfg: &MitigationConfig,
) -> CliResult<Vec<f32>> {
    Ok(match method {
        Method::None => narrow(dq),
        Method::Compensate => to_f32_output(&compensate(dq, q, cfg)?, dq, cfg)?,
        Method::Filter(kind) => narrow(&apply_filter(
            dq,
            &FilterSpec::for_kind(kind, cfg.eps_abs()),
        )?),
    })
}

pub struct ParallelArgs<'a> {
    pub decomp: &'a Path,
    pub q: &'a Path,
    pub dims: Option<&'a str>,
    pub eps_abs: Option<f64>,
    pub eta: f64,
    pub splits: &'a str,
    pub strategy: &'a str,
    pub out: &'a Path,
    pub log: Option<&'a Path>,
}

pub fn cmd_parallel(args: ParallelArgs, workers: usize) -> CliResult<()> {
    let (q, dq) = load_pair(args.decomp, args.q, args.dims, args.eps_abs)?;
    let strategy: Strategy = args.strategy.parse()?;
    let splits = parse_list::<usize>(args.splits, "split")?;
    let dec = decompose(q.dims(), &splits)?;
    let cfg = MitigationConfig::new(args.eta, q.eps_abs())?;
    let outcome = run_strategy(&dq, &q, &cfg, &dec, strategy, workers)?;
    write_volume(args.out, &to_f32_output(&outcome.output, &dq, &cfg)?)?;

    let log_path = args.log.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".exchange.csv");
        PathBuf::from(name)
    });
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    outcome.log.write_csv(file)?;
    let mut stdout = std::io::stdout();
    writeln!(
        stdout,
        "strategy={strategy} ranks={} rounds={} messages={} bytes={}",
        dec.len(),
        outcome.log.rounds().len(),
        outcome.log.messages(),
        outcome.log.total_bytes()
    )
    .map_err(|e| CliError::io("stdout", e))?;
    Ok(())
}
