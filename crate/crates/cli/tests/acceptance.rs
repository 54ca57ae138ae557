//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lplab::concentration::{pisier_r2_check, tail_profile, two_level_fit, variance_bound_check, Center};
use lplab::embedding::{
    build_net, certify_with_net, default_net_delta, fresh_direction_check, frontier_sweep, FrontierOptions, NetMethod,
};
use lplab::gaussian::{gaussian_moment, moment_ratio_check, sample_norms, sigma_p};
use lplab::lewis::{lewis_position, verify_isometry, SubspaceSpec};
use lplab::rng::{derive_seed, GaussianStream};
use lplab::stats::mean_var;
use lplab::{DiscreteIsotropicMeasure, Error, NormBody};
use nalgebra::DMatrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut g = GaussianStream::new(seed, 0);
    DMatrix::from_fn(rows, cols, |_, _| g.gaussian())
}

/// Gaussian rows with log-normal row scales, so weights are far from uniform.
fn skewed_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut a = gaussian_matrix(rows, cols, seed);
    let mut g = GaussianStream::new(seed, 1);
    for i in 0..rows {
        let s = g.gaussian().exp();
        a.row_mut(i).scale_mut(s);
    }
    a
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn lewis_correctness() -> Outcome {
    let ps = [2.0, 2.5, 3.0, 4.0, 6.0];
    let (mut worst_res, mut worst_sum, mut worst_iso, mut worst_isom) = (0f64, 0f64, 0f64, 0f64);
    let mut failures = Vec::new();
    for i in 0..50u64 {
        let n = 2 + (i as usize * 7) % 19;
        let m = n + 1 + (i as usize * 97) % (500 - n);
        let p = ps[i as usize % ps.len()];
        let spec = SubspaceSpec::new(skewed_matrix(m, n, 1000 + i), p).unwrap();
        let pos = match lewis_position(&spec, 1e-10, 10_000) {
            Ok(pos) => pos,
            Err(e) => {
                failures.push(format!("spec {i}: {e}"));
                continue;
            }
        };
        let sum: f64 = pos.weights.iter().sum();
        worst_res = worst_res.max(pos.residual);
        worst_sum = worst_sum.max((sum - n as f64).abs());
        worst_iso = worst_iso.max(pos.measure.isotropy_residual());
        worst_isom = worst_isom.max(verify_isometry(&pos, &spec, 1000, i).unwrap());
    }
    let pass =
        failures.is_empty() && worst_res <= 1e-10 && worst_sum <= 1e-6 && worst_iso <= 1e-8 && worst_isom <= 1e-9;
    outcome(
        pass,
        format!(
            "50 specs; max residual {worst_res:.2e}, |sum w - n| {worst_sum:.2e}, isotropy {worst_iso:.2e}, \
             isometry {worst_isom:.2e}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
    )
}

fn leverage_oracle() -> Outcome {
    let mut worst = 0f64;
    for i in 0..10u64 {
        let a = skewed_matrix(40 + 13 * i as usize, 2 + i as usize, 2000 + i);
        let pos = lewis_position(&SubspaceSpec::new(a.clone(), 2.0).unwrap(), 1e-12, 10_000).unwrap();
        let gram_inv = (a.transpose() * &a).try_inverse().unwrap();
        for r in 0..a.nrows() {
            let row = a.row(r);
            let lev = (row * &gram_inv * row.transpose())[(0, 0)];
            worst = worst.max((pos.weights[r] - lev).abs());
        }
    }
    outcome(worst <= 1e-9, format!("10 instances; max |w - leverage| {worst:.2e}"))
}

fn moment_identity() -> Outcome {
    let samples = 100_000;
    let mut cells = 0;
    let mut worst_z = 0f64;
    let mut failures = Vec::new();
    for q in [2.0, 3.0, 4.0] {
        let mut measures = vec![
            (
                "coordinate n=10".to_string(),
                DiscreteIsotropicMeasure::coordinate(10).unwrap(),
            ),
            (
                "coordinate n=100".to_string(),
                DiscreteIsotropicMeasure::coordinate(100).unwrap(),
            ),
        ];
        for j in 0..3u64 {
            let (m, n) = (30 + 40 * j as usize, 4 + 3 * j as usize);
            let spec = SubspaceSpec::new(skewed_matrix(m, n, 3000 + j), q).unwrap();
            measures.push((
                format!("lewis {m}x{n}"),
                lewis_position(&spec, 1e-10, 10_000).unwrap().measure,
            ));
        }
        for (k, (name, measure)) in measures.into_iter().enumerate() {
            let n = measure.dim();
            let body = NormBody::new(measure, q).unwrap();
            let powers: Vec<f64> = sample_norms(&body, samples, derive_seed(30, k as u64))
                .iter()
                .map(|v| v.powf(q))
                .collect();
            let (mean, var) = mean_var(&powers);
            let se = (var / samples as f64).sqrt();
            let exact = sigma_p(q).unwrap().powf(q) * n as f64;
            let z = (mean - exact).abs() / se;
            worst_z = worst_z.max(z);
            cells += 1;
            if z > 3.0 {
                failures.push(format!("{name} q={q}: z={z:.2}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{cells} cells; max |MC - sigma_q^q n| = {worst_z:.2} std errs {}",
            failures.join(", ")
        ),
    )
}

fn sigma_oracle() -> Outcome {
    let s2 = sigma_p(2.0).unwrap();
    let e4 = (sigma_p(4.0).unwrap() - 3f64.powf(0.25)).abs();
    let e1 = (sigma_p(1.0).unwrap() - (2.0 / std::f64::consts::PI).sqrt()).abs();
    outcome(
        s2 == 1.0 && e4 <= 1e-13 && e1 <= 1e-13,
        format!("sigma_2 = {s2:?}, |sigma_4 - 3^(1/4)| = {e4:.1e}, |sigma_1 - sqrt(2/pi)| = {e1:.1e}"),
    )
}

fn moment_ratio() -> Outcome {
    let mut passed = 0;
    let mut failures = Vec::new();
    let mut max_slack = f64::NEG_INFINITY;
    for n in [64, 256, 1024] {
        for q in [3.0, 4.0] {
            let body = NormBody::new(DiscreteIsotropicMeasure::coordinate(n).unwrap(), q).unwrap();
            for (j, r) in [1.5, 2.0, 3.0].into_iter().enumerate() {
                let c = moment_ratio_check(&body, r, 100_000, derive_seed(50 + n as u64, j as u64)).unwrap();
                max_slack = max_slack.max((c.lhs - c.rhs) / c.lhs_std_err.max(f64::MIN_POSITIVE));
                if c.pass {
                    passed += 1;
                } else {
                    failures.push(format!("n={n} q={q} r={r}: {} > {}", c.lhs, c.rhs));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{passed}/18 cells; max (lhs - rhs)/se = {max_slack:.2} {}",
            failures.join(", ")
        ),
    )
}

fn gradient_bound() -> Outcome {
    let mut bodies = Vec::new();
    for (i, p) in [2.5, 3.0, 3.5, 4.0, 6.0].into_iter().enumerate() {
        let n = 3 + i;
        bodies.push((
            true,
            NormBody::new(DiscreteIsotropicMeasure::coordinate(n).unwrap(), p).unwrap(),
        ));
        let m = DiscreteIsotropicMeasure::random(n, 3 * n, 60 + i as u64).unwrap();
        bodies.push((false, NormBody::new(m, p).unwrap()));
    }
    let (mut bound_violations, mut worst_eq, mut worst_fd) = (0, 0f64, 0f64);
    let mut worst_at = String::new();
    let mut g = GaussianStream::new(61, 0);
    for k in 0..1000 {
        let (coordinate, body) = &bodies[k % bodies.len()];
        let n = body.dim();
        let x: Vec<f64> = (0..n).map(|_| g.gaussian()).collect();
        let grad = body.norm_pow_gradient(&x).unwrap();
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs = body.gradient_bound(&x).unwrap();
        if gnorm > rhs * (1.0 + 1e-12) {
            bound_violations += 1;
        }
        if *coordinate {
            worst_eq = worst_eq.max((gnorm - rhs).abs() / rhs);
        }
        // Five-point central stencil.
        let h = 1e-4 * (x.iter().map(|v| v * v).sum::<f64>().sqrt());
        for j in 0..n {
            let f = |t: f64| {
                let mut y = x.clone();
                y[j] += t;
                body.norm_pow(&y).unwrap()
            };
            let fd = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
            let err = (fd - grad[j]).abs() / gnorm;
            if err > worst_fd {
                worst_fd = err;
                worst_at = format!("p={} n={n}", body.q());
            }
        }
    }
    outcome(
        bound_violations == 0 && worst_eq <= 1e-10 && worst_fd <= 1e-6,
        format!(
            "1000 points, 10 measures; bound violations {bound_violations}, coordinate equality gap {worst_eq:.1e}, \
             finite-difference error {worst_fd:.1e} ({worst_at})"
        ),
    )
}

fn pisier() -> Outcome {
    let lewis = lewis_position(
        &SubspaceSpec::new(skewed_matrix(40, 5, 70), 3.0).unwrap(),
        1e-10,
        10_000,
    )
    .unwrap()
    .measure;
    let measures = [
        ("coordinate n=8", DiscreteIsotropicMeasure::coordinate(8).unwrap()),
        ("random n=6", DiscreteIsotropicMeasure::random(6, 18, 71).unwrap()),
        ("lewis 40x5", lewis),
    ];
    let mut passed = 0;
    let mut failures = Vec::new();
    let mut cfg = 0u64;
    for (name, measure) in &measures {
        let n = measure.dim();
        for p in [3.0, 4.0] {
            let body = NormBody::new(measure.clone(), p).unwrap();
            let mut g = GaussianStream::new(72, cfg);
            let a = unit((0..n).map(|_| g.gaussian()).collect());
            let near = unit(a.iter().map(|v| v + 0.2 * g.gaussian()).collect());
            let far = unit((0..n).map(|_| g.gaussian()).collect());
            for b in [near, far] {
                let c = pisier_r2_check(&body, &a, &b, 50_000, derive_seed(73, cfg)).unwrap();
                cfg += 1;
                if c.pass {
                    passed += 1;
                } else {
                    failures.push(format!("{name} p={p}: {} > {}", c.lhs, c.rhs));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{passed}/{cfg} configurations {}", failures.join(", ")),
    )
}

fn two_level_tail() -> Outcome {
    let body = NormBody::new(DiscreteIsotropicMeasure::coordinate(4096).unwrap(), 3.0).unwrap();
    let (lo, hi, steps): (f64, f64, usize) = (0.002, 0.06, 16);
    let grid: Vec<f64> = (0..steps)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (steps - 1) as f64).exp())
        .collect();
    let profile = tail_profile(&body, &grid, 200_000, 8, Center::PMean).unwrap();
    let fit = two_level_fit(&profile).unwrap();
    let r2 = |w: &Option<lplab::concentration::WindowFit>| w.as_ref().map(|w| w.fit.r_squared);
    let (small, large) = (r2(&fit.small), r2(&fit.large));
    outcome(
        small.is_some_and(|r| r >= 0.95) && large.is_some_and(|r| r >= 0.95),
        format!(
            "split {:.4} ({:?}); R^2 small window {:.4}, large window {:.4}",
            fit.split_eps,
            fit.split_rule,
            small.unwrap_or(f64::NAN),
            large.unwrap_or(f64::NAN)
        ),
    )
}

fn variance_scaling() -> Outcome {
    let specs: Vec<SubspaceSpec> = [64, 256, 1024]
        .into_iter()
        .map(|n| SubspaceSpec::new(DMatrix::identity(n, n), 4.0).unwrap())
        .collect();
    let rep = variance_bound_check(&specs, 20_000, 9).unwrap();
    let scaled: Vec<f64> = rep.rows.iter().map(|r| r.scaled).collect();
    let (min, max) = scaled
        .iter()
        .fold((f64::INFINITY, 0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    outcome(
        max / min <= 2.0,
        format!("var * n^(1-2/p) = {scaled:.4?}; spread factor {:.3}", max / min),
    )
}

fn certificate_soundness() -> Outcome {
    let body = NormBody::new(DiscreteIsotropicMeasure::coordinate(1024).unwrap(), 4.0).unwrap();
    let ip = gaussian_moment(&body, 4.0, 20_000, 99).unwrap();
    // Smallest mesh the net builder accepts, then one net shared by 20 draws of G.
    let soundness = |k: usize, eps: f64| -> Result<(usize, usize, f64, String), Error> {
        let mut candidates = vec![default_net_delta(eps)];
        candidates.extend([0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        let mut refused = Vec::new();
        for delta in candidates {
            let net = match build_net(k, delta, NetMethod::GreedyFarthestPoint, 98) {
                Ok(net) => net,
                Err(Error::Scale(_)) => {
                    refused.push(format!("{delta:.3}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (mut certified, mut violations) = (0, 0);
            for seed in 0..20u64 {
                let cert = certify_with_net(&body, &net, eps, &ip, 100 + seed)?;
                let s = fresh_direction_check(&body, &cert, 10_000, derive_seed(200, seed))?;
                if s.certified {
                    certified += 1;
                    violations += s.violations;
                }
            }
            return Ok((certified, violations, delta, refused.join(",")));
        }
        Err(Error::Scale(format!("every mesh refused: {}", refused.join(","))))
    };
    let main = soundness(8, 0.25);
    let extra = soundness(2, 0.4);
    let body_s = NormBody::new(DiscreteIsotropicMeasure::coordinate(1024).unwrap(), 4.0).unwrap();
    let opts = FrontierOptions::default();
    let rows = frontier_sweep(&body_s, &[0.1, 0.2, 0.4], &opts, 7);
    let (ok_main, main_text) = match &main {
        Ok((c, v, d, refused)) => (
            *v == 0,
            format!(
                "k=8 eps=0.25: {c}/20 certified, {v} violations (mesh {d:.3}{}{})",
                if refused.is_empty() {
                    String::new()
                } else {
                    format!("; meshes refused by the size guard: {refused}")
                },
                if *c == 0 {
                    "; vacuous, no draw certifies at this mesh"
                } else {
                    ""
                }
            ),
        ),
        Err(e) => (false, format!("k=8: {e}")),
    };
    let (ok_extra, extra_text) = match &extra {
        Ok((c, v, d, _)) => (
            *v == 0,
            format!("k=2 eps=0.4: {c}/20 certified, {v} violations (mesh {d:.3})"),
        ),
        Err(e) => (false, format!("k=2: {e}")),
    };
    let (ok_frontier, frontier_text) = match &rows {
        Ok(rows) => {
            let ks: Vec<usize> = rows.iter().map(|r| r.k_max).collect();
            (
                ks.windows(2).all(|w| w[0] <= w[1]),
                format!("k_max on eps 0.1,0.2,0.4 = {ks:?}"),
            )
        }
        Err(e) => (false, format!("frontier: {e}")),
    };
    outcome(
        ok_main && ok_extra && ok_frontier,
        format!("{main_text}; {extra_text}; {frontier_text}"),
    )
}

fn net_validity() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for k in 1..=3 {
        for delta in [0.5, 0.75, 1.0] {
            let net = build_net(k, delta, NetMethod::GreedyFarthestPoint, 80 + k as u64).unwrap();
            let cover = net.covering_check(100_000, 81);
            let bound = (3.0 / delta).powi(k as i32);
            let ok = (net.len() as f64) <= bound && cover.max_distance <= delta;
            pass &= ok;
            if !ok || delta == 0.5 {
                lines.push(format!(
                    "k={k} d={delta}: {} pts (<= {bound:.0}), radius {:.3}",
                    net.len(),
                    cover.max_distance
                ));
            }
        }
    }
    outcome(pass, format!("9 nets; {}", lines.join(", ")))
}

fn run_twice(bin: &str, base: &Path, name: &str, args: &[&str], inputs: &[(&str, &str)]) -> Result<bool, String> {
    let mut snapshots = Vec::new();
    for round in 0..2 {
        let dir = base.join(format!("{name}-{round}"));
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for (file, text) in inputs {
            fs::write(dir.join(file), text).map_err(|e| e.to_string())?;
        }
        let out = Command::new(bin)
            .current_dir(&dir)
            .env_remove("LPLAB_WORKERS")
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{name}: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files.push(("<stdout>".into(), out.stdout));
        snapshots.push(files);
    }
    Ok(snapshots[0] == snapshots[1])
}

/// Name, arguments and input files of one command.
type Run<'a> = (&'a str, Vec<&'a str>, Vec<(&'a str, &'a str)>);

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_lplab");
    let base = std::env::temp_dir().join(format!("lplab-acceptance-{}", std::process::id()));
    let matrix = "1,2,0\n0,1,1\n1,0,1\n2,1,1\n0,0,3\n1,1,1\n";
    let tail_csv =
        "eps,tail,stderr,center,n,p,seed,count,censored,upper_ci\n0.1,0.5,0.01,p-mean,16,3,1,500,false,0.52\n";
    let runs: Vec<Run> = vec![
        (
            "lewis",
            vec![
                "lewis",
                "--input",
                "A.csv",
                "--p",
                "3",
                "--out",
                "pos.json",
                "--measure-out",
                "mu.csv",
            ],
            vec![("A.csv", matrix)],
        ),
        (
            "moments",
            vec![
                "--workers",
                "2",
                "moments",
                "--n",
                "32",
                "--q",
                "2,3,4",
                "--ratio-r",
                "2",
                "--critical",
                "--samples",
                "20000",
                "--seed",
                "3",
                "--out",
                "m.json",
            ],
            vec![],
        ),
        (
            "concentrate",
            vec![
                "concentrate",
                "--n",
                "256",
                "--p",
                "3",
                "--samples",
                "20000",
                "--eps",
                "0.02,0.05,0.1",
                "--seed",
                "42",
                "--out",
                "t.csv",
            ],
            vec![],
        ),
        (
            "embed",
            vec![
                "embed", "--n", "128", "--p", "4", "--k", "2", "--eps", "0.5", "--fresh", "2000", "--seed", "5",
                "--out", "e.json",
            ],
            vec![],
        ),
        (
            "sweep",
            vec![
                "sweep", "--n", "128", "--p", "4", "--eps", "0.3,0.6", "--trials", "4", "--seed", "7", "--out", "f.csv",
            ],
            vec![],
        ),
        (
            "volume",
            vec![
                "volume",
                "--n",
                "3",
                "--q",
                "3",
                "--samples",
                "50000",
                "--seed",
                "11",
                "--out",
                "v.json",
            ],
            vec![],
        ),
        (
            "plot",
            vec!["plot", "--input", "tail.csv"],
            vec![("tail.csv", tail_csv)],
        ),
    ];
    let mut identical = Vec::new();
    let mut problems = Vec::new();
    for (name, args, inputs) in &runs {
        match run_twice(bin, &base, name, args, inputs) {
            Ok(true) => identical.push(*name),
            Ok(false) => problems.push(format!("{name} differs")),
            Err(e) => problems.push(e),
        }
    }
    let _ = fs::remove_dir_all(&base);
    outcome(
        problems.is_empty(),
        format!(
            "identical reruns: {}{}",
            identical.join(","),
            if problems.is_empty() {
                String::new()
            } else {
                format!("; {}", problems.join("; "))
            }
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "Lewis correctness", lewis_correctness, Some(Duration::from_secs(60))),
        (2, "p=2 leverage oracle", leverage_oracle, None),
        (3, "moment identity", moment_identity, Some(Duration::from_secs(120))),
        (4, "sigma_p oracle", sigma_oracle, None),
        (5, "moment-ratio bound", moment_ratio, None),
        (6, "gradient bound", gradient_bound, None),
        (7, "Pisier r=2 inequality", pisier, None),
        (
            8,
            "two-level tail shape",
            two_level_tail,
            Some(Duration::from_secs(300)),
        ),
        (9, "variance scaling", variance_scaling, None),
        (10, "certificate soundness and frontier", certificate_soundness, None),
        (11, "net validity", net_validity, None),
        (12, "determinism", determinism, None),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                result.pass = false;
                result
                    .detail
                    .push_str(&format!("; over the {}s limit", limit.as_secs()));
            }
        }
        failed += usize::from(!result.pass);
        println!(
            "{} [{id:>2}] {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
