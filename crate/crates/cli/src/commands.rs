use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use lplab::concentration::{psi, tail_profile_from_norms, two_level_fit, Center, TailProfile, TwoLevelFit};
use lplab::embedding::{
    default_net_delta, distortion_certificate, fresh_direction_check, frontier_sweep, FrontierOptions, NetMethod,
};
use lplab::gaussian::{
    closed_form_iq, critical_dimension, moment_from_norms, moment_ratio_from_norms, sample_norms, sigma_p,
};
use lplab::io::{
    csv_string, parse_matrix, plot_data, read_measure_csv, to_json, write_measure_csv, Artifact, FrontierCsvRow,
    LewisRecord, Metadata, ResultRecord, TailRow, VERSION,
};
use lplab::lewis::{lewis_position, verify_isometry, SubspaceSpec, DEFAULT_FP_TOL, DEFAULT_MAX_ITER};
use lplab::measures::{mc_volume_check, ISOTROPY_TOL};
use lplab::rng::derive_seed;
use lplab::{DiscreteIsotropicMeasure, NormBody};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{
    CenterArg, Command, ConcentrateArgs, EmbedArgs, LewisArgs, MeasureArgs, MeasureKind, MomentsArgs, NetArg, PlotArgs,
    SweepArgs, VolumeArgs,
};
use crate::error::{CliError, CliResult};

/// Tolerances of the Lewis postconditions.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;
pub const ISOMETRY_TOL: f64 = 1e-9;

const TAG_FRESH: u64 = 0xF5E5;

/// Process-wide settings shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub struct Context {
    pub assert_mode: bool,
    pub workers: usize,
}

/// An inequality or postcondition checked after a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// What a subcommand produced: the files written and the checks it ran.
#[derive(Debug, Default)]
pub struct Outcome {
    pub reproduce: String,
    pub checks: Vec<Check>,
}

pub fn run_command(cmd: &Command, ctx: Context) -> CliResult<Outcome> {
    match cmd {
        Command::Lewis(a) => lewis(a, ctx),
        Command::Moments(a) => moments(a, ctx),
        Command::Concentrate(a) => concentrate(a, ctx),
        Command::Embed(a) => embed(a, ctx),
        Command::Sweep(a) => sweep(a, ctx),
        Command::Volume(a) => volume(a, ctx),
        Command::Plot(a) => plot(a),
    }
}

fn flag_value(v: &Value) -> Option<String> {
    match v {
        Value::Null | Value::Bool(false) => None,
        Value::Bool(true) => Some(String::new()),
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(xs) => Some(xs.iter().filter_map(flag_value).collect::<Vec<_>>().join(",")),
        Value::Object(_) => None,
    }
}

fn shell_word(s: &str) -> String {
    let plain = !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.,/:=+".contains(c));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

/// Config echo and reproduction line for an args struct.
fn metadata<T: Serialize>(name: &str, args: &T, seed: u64, ctx: Context) -> Metadata {
    let value = serde_json::to_value(args).unwrap_or(Value::Null);
    let mut config = BTreeMap::new();
    let mut line = vec!["lplab".to_string(), name.to_string()];
    if let Value::Object(map) = value {
        for (k, v) in &map {
            let key = k.replace('_', "-");
            let Some(s) = flag_value(v) else { continue };
            if matches!(v, Value::Bool(true)) {
                line.push(format!("--{key}"));
                config.insert(key, "true".to_string());
            } else {
                line.push(format!("--{key}"));
                line.push(shell_word(&s));
                config.insert(key, s);
            }
        }
    }
    line.push("--workers".into());
    line.push(ctx.workers.to_string());
    if ctx.assert_mode {
        line.push("--assert".into());
    }
    Metadata {
        tool: "lplab".into(),
        version: VERSION.into(),
        command: name.into(),
        config,
        seed,
        workers: ctx.workers,
        reproduce: line.join(" "),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file(path: &Path) -> impl FnOnce(lplab::Error) -> CliError + '_ {
    move |source| CliError::Input {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::File {
            path: p.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::File {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn build_measure(args: &MeasureArgs, p: Option<f64>, seed: u64) -> CliResult<DiscreteIsotropicMeasure> {
    let need_n = || {
        args.n
            .ok_or_else(|| CliError::Usage("--n is required for this measure".into()))
    };
    let need_input = || {
        args.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("--input is required for this measure".into()))
    };
    let measure = match args.measure {
        MeasureKind::Coordinate => DiscreteIsotropicMeasure::coordinate(need_n()?)?,
        MeasureKind::Random => {
            let n = need_n()?;
            DiscreteIsotropicMeasure::random(n, args.pairs.unwrap_or(2 * n), args.measure_seed.unwrap_or(seed))?
        }
        MeasureKind::File => {
            let path = need_input()?;
            let file = File::open(path).map_err(|source| CliError::File {
                path: path.to_path_buf(),
                source,
            })?;
            read_measure_csv(BufReader::new(file), !args.no_isotropy_check).map_err(in_file(path))?
        }
        MeasureKind::Lewis => {
            let path = need_input()?;
            let a = parse_matrix(&read_text(path)?).map_err(in_file(path))?;
            let lp = args
                .lewis_p
                .or(p)
                .ok_or_else(|| CliError::Usage("--lewis-p is required for this command".into()))?;
            let spec = SubspaceSpec::new(a, lp).map_err(in_file(path))?;
            lewis_position(&spec, DEFAULT_FP_TOL, DEFAULT_MAX_ITER)?.measure
        }
    };
    if let Some(n) = args.n {
        if n != measure.dim() {
            return Err(CliError::Usage(format!(
                "--n {n} does not match the measure dimension {}",
                measure.dim()
            )));
        }
    }
    Ok(measure)
}

fn record(
    op: &str,
    params: Value,
    value: f64,
    std_err: Option<f64>,
    samples: Option<usize>,
    seed: u64,
) -> ResultRecord {
    let params = match params {
        Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    ResultRecord {
        op: op.into(),
        params,
        value,
        std_err,
        samples,
        seed,
    }
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

#[derive(Serialize)]
struct LewisOutput {
    meta: Metadata,
    #[serde(flatten)]
    position: LewisRecord,
    fixed_point_defect: f64,
    weight_sum: f64,
    isotropy_residual: f64,
    isometry_discrepancy: Option<f64>,
    checks: Vec<Check>,
}

fn lewis(args: &LewisArgs, ctx: Context) -> CliResult<Outcome> {
    let meta = metadata("lewis", args, args.seed, ctx);
    let a = parse_matrix(&read_text(&args.input)?).map_err(in_file(&args.input))?;
    let spec = SubspaceSpec::new(a, args.p).map_err(in_file(&args.input))?;
    let pos = lewis_position(&spec, args.tol, args.max_iter)?;
    let n = spec.dim() as f64;

    let weight_sum: f64 = pos.weights.iter().sum();
    let isotropy_residual = pos.measure.isotropy_residual();
    let fixed_point_defect = pos.fixed_point_defect(&spec)?;
    let isometry_discrepancy = if args.isometry_trials > 0 {
        Some(verify_isometry(&pos, &spec, args.isometry_trials, args.seed)?)
    } else {
        None
    };
    let mut checks = vec![
        Check::new(
            "fixed_point_residual",
            pos.residual <= args.tol,
            format!("{} <= {}", sci(pos.residual), sci(args.tol)),
        ),
        Check::new(
            "weight_sum",
            (weight_sum - n).abs() <= WEIGHT_SUM_TOL,
            format!("|{} - {n}| <= {}", sci(weight_sum), sci(WEIGHT_SUM_TOL)),
        ),
        Check::new(
            "isotropy",
            isotropy_residual <= ISOTROPY_TOL,
            format!("{} <= {}", sci(isotropy_residual), sci(ISOTROPY_TOL)),
        ),
    ];
    if let Some(d) = isometry_discrepancy {
        checks.push(Check::new(
            "isometry",
            d <= ISOMETRY_TOL,
            format!("{} <= {}", sci(d), sci(ISOMETRY_TOL)),
        ));
    }
    if let Some(path) = &args.measure_out {
        let mut buf = Vec::new();
        write_measure_csv(&pos.measure, &mut buf)?;
        emit(Some(path), &String::from_utf8_lossy(&buf))?;
    }
    let out = LewisOutput {
        position: LewisRecord::new(&pos, &spec),
        fixed_point_defect,
        weight_sum,
        isotropy_residual,
        isometry_discrepancy,
        checks: checks.clone(),
        meta: meta.clone(),
    };
    emit(args.out.as_deref(), &to_json(&out)?)?;
    Ok(Outcome {
        reproduce: meta.reproduce,
        checks,
    })
}

fn artifact_outcome(
    meta: Metadata,
    records: Vec<ResultRecord>,
    mut details: serde_json::Map<String, Value>,
    checks: Vec<Check>,
    out: Option<&Path>,
) -> CliResult<Outcome> {
    details.insert("checks".into(), serde_json::to_value(&checks).unwrap_or(Value::Null));
    let artifact = Artifact {
        meta,
        records,
        details: Value::Object(details),
    };
    emit(out, &to_json(&artifact)?)?;
    Ok(Outcome {
        reproduce: artifact.meta.reproduce,
        checks,
    })
}

fn moments(args: &MomentsArgs, ctx: Context) -> CliResult<Outcome> {
    let meta = metadata("moments", args, args.seed, ctx);
    let measure = build_measure(&args.measure, None, args.seed)?;
    let n = measure.dim();
    let (samples, seed) = (args.samples, args.seed);
    let mut records = Vec::new();
    let mut checks = Vec::new();
    let mut critical = Vec::new();
    for &q in &args.q {
        let body = NormBody::new(measure.clone(), q)?;
        // One draw of Gaussian vectors serves every quantity for this q.
        let norms = sample_norms(&body, samples, seed);
        let scale = closed_form_iq(&body)?;
        let r = args.r.unwrap_or(q);
        let est = moment_from_norms(&norms, r, scale, seed)?;
        records.push(record(
            "moment",
            json!({"q": q, "r": r, "n": n, "closed_form": scale}),
            est.value,
            Some(est.std_err),
            Some(samples),
            seed,
        ));
        if r == q {
            let value = est.value.powf(q);
            let se = q * est.value.powf(q - 1.0) * est.std_err;
            let reference = sigma_p(q)?.powf(q) * n as f64;
            records.push(record(
                "moment_identity",
                json!({"q": q, "n": n, "reference": reference}),
                value,
                Some(se),
                Some(samples),
                seed,
            ));
            checks.push(Check::new(
                format!("moment_identity q={q}"),
                (value - reference).abs() <= 3.0 * se,
                format!("|{} - {}| <= 3 x {}", sci(value), sci(reference), sci(se)),
            ));
        }
        for &rr in &args.ratio_r {
            let c = moment_ratio_from_norms(&body, &norms, rr, seed)?;
            records.push(record(
                "moment_ratio",
                json!({"q": q, "r": rr, "n": n, "bound": c.rhs}),
                c.lhs,
                Some(c.lhs_std_err),
                Some(samples),
                seed,
            ));
            checks.push(Check::new(
                format!("moment_ratio q={q} r={rr}"),
                c.pass,
                format!("{} <= {} + 3 x {}", sci(c.lhs), sci(c.rhs), sci(c.lhs_std_err)),
            ));
        }
        if args.critical {
            let rep = critical_dimension(&body, samples, seed)?;
            records.push(record(
                "critical_dimension",
                json!({"q": q, "n": n, "b_lower": rep.b_lower, "b_upper": rep.b_upper,
                       "k_hat_at_b_lower": rep.k_hat_at_b_lower}),
                rep.k_hat,
                None,
                Some(samples),
                seed,
            ));
            critical.push(rep);
        }
    }
    let mut details = serde_json::Map::new();
    if args.critical {
        details.insert(
            "critical_dimension".into(),
            serde_json::to_value(&critical).unwrap_or(Value::Null),
        );
    }
    artifact_outcome(meta, records, details, checks, args.out.as_deref())
}

#[derive(Serialize)]
struct PsiEntry {
    eps: f64,
    psi: f64,
    branch: String,
}

#[derive(Serialize)]
struct ConcentrateSummary<'a> {
    meta: &'a Metadata,
    center: &'a str,
    center_value: f64,
    n: usize,
    p: f64,
    samples: usize,
    seed: u64,
    psi: Vec<PsiEntry>,
    two_level_fit: Option<TwoLevelFit>,
    fit_error: Option<String>,
    warnings: &'a [String],
    checks: &'a [Check],
}

fn concentrate(args: &ConcentrateArgs, ctx: Context) -> CliResult<Outcome> {
    let meta = metadata("concentrate", args, args.seed, ctx);
    let measure = build_measure(&args.measure, Some(args.p), args.seed)?;
    let body = NormBody::new(measure, args.p)?;
    let center = match args.center {
        CenterArg::PMean => Center::PMean,
        CenterArg::Median => Center::Median,
        CenterArg::Mean => Center::Mean,
    };
    let norms = sample_norms(&body, args.samples, args.seed);
    let profile: TailProfile = tail_profile_from_norms(&body, &norms, &args.eps, center, args.seed)?;
    for w in &profile.warnings {
        eprintln!("warning: {w}");
    }
    let (fit, fit_error) = match two_level_fit(&profile) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let psi_entries = profile
        .cells
        .iter()
        .map(|c| {
            psi(profile.n, profile.p, c.eps).map(|v| PsiEntry {
                eps: c.eps,
                psi: v.value,
                branch: format!("{:?}", v.branch).to_lowercase(),
            })
        })
        .collect::<lplab::Result<Vec<_>>>()?;

    // The raw tail is an exact count over shared samples, so it cannot rise.
    let mut sorted: Vec<(f64, f64)> = profile.cells.iter().map(|c| (c.eps, c.tail)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 <= w[0].1);
    let checks = vec![Check::new(
        "tail_nonincreasing",
        monotone,
        "empirical tail nonincreasing in eps".into(),
    )];

    let rows: Vec<TailRow> = profile
        .cells
        .iter()
        .map(|c| TailRow {
            eps: c.eps,
            tail: c.tail,
            stderr: c.std_err,
            center: center.as_str().to_string(),
            n: profile.n,
            p: profile.p,
            seed: profile.seed,
            count: c.count,
            censored: c.censored,
            upper_ci: c.upper_ci,
        })
        .collect();
    emit(args.out.as_deref(), &csv_string(&meta.comment_lines(), &rows)?)?;

    let summary_path = args
        .summary
        .clone()
        .or_else(|| args.out.as_ref().map(|p| p.with_extension("json")));
    if let Some(path) = summary_path {
        let summary = ConcentrateSummary {
            meta: &meta,
            center: center.as_str(),
            center_value: profile.center_value,
            n: profile.n,
            p: profile.p,
            samples: profile.samples,
            seed: profile.seed,
            psi: psi_entries,
            two_level_fit: fit,
            fit_error,
            warnings: &profile.warnings,
            checks: &checks,
        };
        emit(Some(&path), &to_json(&summary)?)?;
    }
    Ok(Outcome {
        reproduce: meta.reproduce,
        checks,
    })
}

fn embed(args: &EmbedArgs, ctx: Context) -> CliResult<Outcome> {
    let meta = metadata("embed", args, args.seed, ctx);
    let measure = build_measure(&args.measure, Some(args.p), args.seed)?;
    let body = NormBody::new(measure, args.p)?;
    let delta = args.delta.unwrap_or_else(|| default_net_delta(args.eps));
    let cert = distortion_certificate(&body, args.k, args.eps, delta, args.ip_samples, args.seed)?;
    let soundness = if args.fresh > 0 {
        Some(fresh_direction_check(
            &body,
            &cert,
            args.fresh,
            derive_seed(args.seed, TAG_FRESH),
        )?)
    } else {
        None
    };
    let params = json!({"n": cert.n, "k": cert.k, "p": cert.p, "eps": cert.eps_target, "delta": delta});
    let mut records = vec![
        record(
            "ip_hat",
            params.clone(),
            cert.ip_hat,
            Some(cert.ip_std_err),
            Some(args.ip_samples),
            args.seed,
        ),
        record(
            "net_distortion",
            params.clone(),
            cert.ratio_max / cert.ratio_min,
            None,
            None,
            args.seed,
        ),
    ];
    if let Some(d) = cert.distortion_bound {
        records.push(record("distortion_bound", params.clone(), d, None, None, args.seed));
    }
    records.push(record(
        "verdict",
        params,
        f64::from(u8::from(cert.verdict)),
        None,
        None,
        args.seed,
    ));

    let mut checks = Vec::new();
    if let Some(s) = &soundness {
        checks.push(Check::new(
            "fresh_directions",
            !s.certified || s.violations == 0,
            format!(
                "certified={} violations={} of {} (range {} .. {})",
                s.certified,
                s.violations,
                s.directions,
                sci(s.min_normalized),
                sci(s.max_normalized)
            ),
        ));
    }
    let mut details = serde_json::Map::new();
    details.insert("certificate".into(), serde_json::to_value(&cert).unwrap_or(Value::Null));
    details.insert(
        "soundness".into(),
        serde_json::to_value(&soundness).unwrap_or(Value::Null),
    );
    artifact_outcome(meta, records, details, checks, args.out.as_deref())
}

fn sweep(args: &SweepArgs, ctx: Context) -> CliResult<Outcome> {
    let meta = metadata("sweep", args, args.seed, ctx);
    let measure = build_measure(&args.measure, Some(args.p), args.seed)?;
    let body = NormBody::new(measure, args.p)?;
    let opts = FrontierOptions {
        trials: args.trials,
        pass_threshold: args.pass_threshold,
        samples_for_ip: args.ip_samples,
        net_delta: args.delta,
        method: match args.net {
            NetArg::Greedy => NetMethod::GreedyFarthestPoint,
            NetArg::Random => NetMethod::RandomCertified,
        },
    };
    let rows = frontier_sweep(&body, &args.eps, &opts, args.seed)?;
    let mut by_eps: Vec<(f64, usize)> = rows.iter().map(|r| (r.eps, r.k_max)).collect();
    by_eps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let checks = vec![Check::new(
        "frontier_monotone",
        by_eps.windows(2).all(|w| w[1].1 >= w[0].1),
        format!("k_max by eps: {by_eps:?}"),
    )];
    let csv_rows: Vec<FrontierCsvRow> = rows
        .iter()
        .map(|r| FrontierCsvRow {
            eps: r.eps,
            k_max: r.k_max,
            psi: r.psi,
            pass_rate: r.pass_rate,
            trials: r.trials,
            seed_base: r.seed_base,
            net_delta: r.net_delta,
        })
        .collect();
    emit(args.out.as_deref(), &csv_string(&meta.comment_lines(), &csv_rows)?)?;
    Ok(Outcome {
        reproduce: meta.reproduce,
        checks,
    })
}

fn volume(args: &VolumeArgs, ctx: Context) -> CliResult<Outcome> {
    let meta = metadata("volume", args, args.seed, ctx);
    let measure = build_measure(&args.measure, Some(args.q), args.seed)?;
    let body = NormBody::new(measure, args.q)?;
    let v = mc_volume_check(&body, args.samples, args.seed)?;
    let records = vec![record(
        "volume",
        json!({"q": args.q, "n": body.dim(), "reference": v.reference, "box_radius": v.box_radius}),
        v.estimate,
        Some(v.std_err),
        Some(v.samples),
        v.seed,
    )];
    let checks = vec![Check::new(
        "volume_bound",
        v.within_bound,
        format!("{} <= {} + 3 x {}", sci(v.estimate), sci(v.reference), sci(v.std_err)),
    )];
    artifact_outcome(meta, records, serde_json::Map::new(), checks, args.out.as_deref())
}

fn plot(args: &PlotArgs) -> CliResult<Outcome> {
    let text = read_text(&args.input)?;
    let columns = plot_data(&text).map_err(in_file(&args.input))?;
    emit(args.out.as_deref(), &columns)?;
    Ok(Outcome::default())
}
