use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use l1sketch::entrywise::{build_entrywise, estimate_entrywise_norm, EntrywiseConfig};
use l1sketch::iid_design::{plan_embedding, power_law_design, IidConstants};
use l1sketch::l1_estimator::{BoostedShh, RoughEstimator, ShhConfig, ShhState};
use l1sketch::numerics::{l1_norm_matrix, DenseMatrix, Rng};
use l1sketch::oracle::distortion::{directions, distortion_of, empirical_distortion, DirectionMode};
use l1sketch::oracle::{count_tensor, exact_tvd};
use l1sketch::stream::{read_tuple_stream, read_vector_stream};
use l1sketch::subspace::{DenseCauchyOp, Overrides, ScaleMode, SketchDescriptor, SketchKind};
use l1sketch::suite;
use l1sketch::tensor::{TensorConfig, TensorState};
use l1sketch::{Error, IdentitySketch, LinearSketch};
use serde_json::{json, Value};

use crate::{
    BenchIidArgs, BenchKind, Cli, Command, EntrywiseArgs, EstimateL1Args, Format, IndependenceArgs, ScaleChoice,
    SketchChoice, SubspaceArgs, SuiteArgs,
};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_EMPTY: u8 = 4;

/// Exact oracles are co-reported up to this many cells.
const ORACLE_CELLS: usize = 1_000_000;

pub struct Output {
    pub text: String,
    pub code: u8,
}

#[derive(Debug)]
pub struct Failure {
    pub message: String,
    pub code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => EXIT_PARSE,
            Error::EmptyInput => EXIT_EMPTY,
            _ => EXIT_USAGE,
        };
        Failure { message: e.to_string(), code }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        message: message.into(),
        code: EXIT_USAGE,
    }
}

type CmdResult = std::result::Result<Output, Failure>;

fn resolve_seed(flag: Option<u64>) -> std::result::Result<u64, Failure> {
    match std::env::var("L1SKETCH_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("L1SKETCH_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => flag.ok_or_else(|| usage("a seed is required: pass --seed or set L1SKETCH_SEED")),
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn ok(text: String) -> CmdResult {
    Ok(Output { text, code: 0 })
}

fn open(path: &Path) -> std::result::Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_matrix(path: &Path) -> std::result::Result<DenseMatrix, Failure> {
    if !path.exists() {
        return Err(usage(format!("{}: no such file", path.display())));
    }
    let a = DenseMatrix::load(path)?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::EmptyInput.into());
    }
    Ok(a)
}

pub fn run(cli: Cli) -> CmdResult {
    let seed = resolve_seed(cli.seed)?;
    match cli.command {
        Command::Subspace(a) => subspace(&a, seed, cli.format),
        Command::Entrywise(a) => entrywise(&a, seed, cli.format),
        Command::EstimateL1(a) => estimate_l1(&a, seed, cli.format),
        Command::Independence(a) => independence(&a, seed, cli.format),
        Command::BenchIid(a) | Command::Bench { which: BenchKind::Iid(a) } => bench_iid(&a, seed, cli.format),
        Command::Suite(a) => run_suite(&a, seed, cli.format),
    }
}

fn subspace(args: &SubspaceArgs, seed: u64, format: Format) -> CmdResult {
    let a = load_matrix(&args.input)?;
    let (n, d) = (a.rows(), a.cols());
    let mut rng = Rng::new(seed, 1);
    let (op, descriptor): (Box<dyn LinearSketch>, Value) = match args.sketch {
        SketchChoice::Identity => (Box::new(IdentitySketch(n)), json!({ "type": "identity", "n": n, "d": d })),
        SketchChoice::DenseCauchy => (
            Box::new(DenseCauchyOp::build(&mut rng, args.rows, n)?),
            json!({ "type": "dense_cauchy", "n": n, "d": d, "rows": args.rows, "seed": seed }),
        ),
        SketchChoice::Msketch => {
            let desc = SketchDescriptor {
                kind: SketchKind::Msketch,
                n,
                d,
                eps: args.eps,
                delta: args.delta,
                seed,
                scale_mode: match args.scale {
                    ScaleChoice::Paper => ScaleMode::Paper,
                    ScaleChoice::Calibrated => ScaleMode::Calibrated,
                },
                overrides: match args.scale {
                    ScaleChoice::Paper => Overrides::default(),
                    ScaleChoice::Calibrated => Overrides {
                        branching: Some(args.branching),
                        n0: Some(args.n0),
                        n_level: Some(args.n_level),
                        h_max: Some(args.h_max),
                        ..Overrides::default()
                    },
                },
            };
            let value = serde_json::to_value(&desc).map_err(Error::from)?;
            (Box::new(desc.build_msketch()?), value)
        }
    };
    let sa = op.apply_matrix(&a)?;
    if let Some(out) = &args.output {
        sa.save(out)?;
    }
    let mut report = match args.sketch {
        // Coordinate directions make the identity report exact.
        SketchChoice::Identity => {
            let dirs = directions(&mut rng, d, d, DirectionMode::Coordinate)?;
            distortion_of(&sa, &a, &dirs, false)?
        }
        _ => empirical_distortion(op.as_ref(), &a, args.directions, DirectionMode::Gaussian, &mut rng)?,
    };
    report.ratios = None;
    match format {
        Format::Json => ok(json_text(&json!({
            "command": "subspace",
            "seed": seed,
            "sketch": descriptor,
            "input": { "rows": n, "cols": d },
            "output": { "rows": sa.rows(), "cols": sa.cols(), "path": args.output.as_ref().map(|p| p.display().to_string()) },
            "distortion": report,
        }))),
        Format::Csv => ok(format!(
            "min_ratio,median_ratio,max_ratio,directions,skipped,rows,cols,sketch_rows,seed\n{},{},{},{},{},{},{},{},{}\n",
            report.min_ratio,
            report.median_ratio,
            report.max_ratio,
            report.direction_count,
            report.skipped,
            n,
            d,
            sa.rows(),
            seed
        )),
    }
}

fn entrywise(args: &EntrywiseArgs, seed: u64, format: Format) -> CmdResult {
    let a = load_matrix(&args.input)?;
    let config = match args.scale {
        ScaleChoice::Paper => EntrywiseConfig::paper(a.rows(), a.cols(), args.alpha, args.delta)?,
        ScaleChoice::Calibrated => {
            EntrywiseConfig::calibrated(a.rows(), a.cols(), args.branching, args.n0, args.n_level)?
        }
    };
    let op = build_entrywise(&mut Rng::new(seed, 2), &config)?;
    let estimate = estimate_entrywise_norm(&op, &a)?;
    let oracle = l1_norm_matrix(&a);
    let ratio = estimate / oracle;
    match format {
        Format::Json => ok(json_text(&json!({
            "command": "entrywise",
            "seed": seed,
            "config": config,
            "sketch_rows": config.output_dim(),
            "estimate": estimate,
            "oracle": oracle,
            "ratio": ratio,
        }))),
        Format::Csv => ok(format!(
            "estimate,oracle,ratio,rows,cols,sketch_rows,seed\n{estimate},{oracle},{ratio},{},{},{},{seed}\n",
            a.rows(),
            a.cols(),
            config.output_dim()
        )),
    }
}

fn estimate_l1(args: &EstimateL1Args, seed: u64, format: Format) -> CmdResult {
    let updates = read_vector_stream(open(&args.stream)?, args.n)?;
    let n = args.n.unwrap_or_else(|| updates.iter().map(|u| u.0 + 1).max().unwrap_or(1));
    if args.boost == 0 {
        return Err(usage("--boost must be at least 1"));
    }
    let config = ShhConfig::new(args.epsilon, args.k, n).with_hh_sizes(args.buckets, args.hh_reps);
    let base = Rng::new(seed, 3);
    let mut x = vec![0.0; n];
    let mut rough = RoughEstimator::new(base.derive(0).next_u64(), 0.01)?;
    for &(i, v) in &updates {
        x[i] += v as f64;
        rough.update(i as u64, v as f64);
    }
    let oracle: f64 = x.iter().map(|v| v.abs()).sum();
    let m_hat = match args.m_hat {
        Some(m) => m,
        None if oracle == 0.0 => 0.0,
        None => rough.estimate(),
    };
    let estimate = if m_hat == 0.0 {
        0.0
    } else if args.boost == 1 {
        let mut state = ShhState::build(&mut base.derive(1), &config)?;
        for &(i, v) in &updates {
            state.update(i, v as f64)?;
        }
        state.estimate(m_hat, &mut base.derive(2))?.total
    } else {
        let mut state = BoostedShh::build(&mut base.derive(1), &config, args.boost)?;
        for &(i, v) in &updates {
            state.update(i, v as f64)?;
        }
        state.estimate(m_hat, &mut base.derive(2))?
    };
    match format {
        Format::Json => ok(json_text(&json!({
            "command": "estimate-l1",
            "seed": seed,
            "estimate": estimate,
            "oracle": oracle,
            "m_hat": m_hat,
            "m_hat_source": if args.m_hat.is_some() { "flag" } else { "rough" },
            "updates": updates.len(),
            "params": { "config": config, "derived": config.derive()?, "boost": args.boost },
        }))),
        Format::Csv => ok(format!(
            "estimate,oracle,m_hat,n,eps,k,seed\n{estimate},{oracle},{m_hat},{n},{},{},{seed}\n",
            args.epsilon, args.k
        )),
    }
}

fn independence(args: &IndependenceArgs, seed: u64, format: Format) -> CmdResult {
    let start = Instant::now();
    let stream = read_tuple_stream(open(&args.stream)?, args.q, args.d)?;
    let config = if args.paper_sizes {
        TensorConfig::new(args.q, args.d, args.eps, args.delta)
    } else {
        TensorConfig {
            delta: args.delta,
            ..TensorConfig::desk(args.q, args.d, args.eps)
        }
    };
    let mut state = TensorState::build(&mut Rng::new(seed, 4), &config)?;
    for u in &stream {
        state.update(u)?;
    }
    state.finalize();
    let est = state.estimate_tvd()?;
    let cells = (args.d as f64).powi(args.q as i32);
    let oracle = if cells <= ORACLE_CELLS as f64 {
        Some(exact_tvd(&count_tensor(&stream, args.q, args.d)?, args.q, args.d)?)
    } else {
        None
    };
    let elapsed_ms = start.elapsed().as_millis() as u64;
    match format {
        Format::Json => {
            let mut v = json!({
                "command": "independence",
                "seed": seed,
                "estimate": est.estimate,
                "oracle": oracle,
                "m": est.m,
                "m_hat": est.m_hat,
                "grid": est.grid.iter().map(|(k, v)| json!({ "k": k, "value": v })).collect::<Vec<_>>(),
                "params": { "config": config, "schedule": state.schedule() },
                "space": state.space(),
            });
            if !args.omit_timing {
                v["elapsed_ms"] = json!(elapsed_ms);
            }
            ok(json_text(&v))
        }
        Format::Csv => ok(format!(
            "estimate,oracle,m,q,d,eps,seed\n{},{},{},{},{},{},{}\n",
            est.estimate,
            oracle.map_or(String::new(), |o| o.to_string()),
            est.m,
            args.q,
            args.d,
            args.eps,
            seed
        )),
    }
}

fn bench_iid(args: &BenchIidArgs, seed: u64, format: Format) -> CmdResult {
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let consts = IidConstants {
        c_rows: args.c_rows,
        c_kappa: args.c_kappa,
        eps: args.eps,
        force: args.force,
    };
    let plan = plan_embedding(args.p, args.n, args.d, args.r, &consts)?;
    let base = Rng::new(seed, 5);
    let mut rows = Vec::with_capacity(args.trials);
    for t in 0..args.trials {
        let mut rng = base.derive(t as u64);
        let a = power_law_design(&mut rng, args.p, args.n, args.d)?;
        let op = plan.build(&mut rng)?;
        let sa = op.apply_matrix(&a)?;
        let mut dirs = Vec::new();
        for mode in [DirectionMode::Gaussian, DirectionMode::Sparse] {
            dirs.extend(directions(&mut rng, args.d, args.directions, mode)?);
        }
        dirs.extend(directions(&mut rng, args.d, args.d, DirectionMode::Coordinate)?);
        rows.push(distortion_of(&sa, &a, &dirs, false)?);
    }
    let method = serde_json::to_value(plan.method).map_err(Error::from)?;
    let method = method.as_str().unwrap_or_default().to_string();
    match format {
        Format::Csv => {
            let mut s = String::from("trial,p,n,d,r,method,min_ratio,median_ratio,max_ratio,seed\n");
            for (t, r) in rows.iter().enumerate() {
                s.push_str(&format!(
                    "{t},{},{},{},{},{method},{},{},{},{seed}\n",
                    args.p, args.n, args.d, plan.r, r.min_ratio, r.median_ratio, r.max_ratio
                ));
            }
            ok(s)
        }
        Format::Json => ok(json_text(&json!({
            "command": "bench-iid",
            "seed": seed,
            "plan": plan,
            "trials": rows.iter().enumerate().map(|(t, r)| json!({
                "trial": t,
                "min_ratio": r.min_ratio,
                "median_ratio": r.median_ratio,
                "max_ratio": r.max_ratio,
            })).collect::<Vec<_>>(),
        }))),
    }
}

fn run_suite(args: &SuiteArgs, seed: u64, format: Format) -> CmdResult {
    let reports = match &args.only {
        Some(name) => {
            let id = suite::criterion_id(name).ok_or_else(|| {
                let names: Vec<&str> = suite::CRITERIA.iter().map(|c| c.1).collect();
                usage(format!("unknown suite name `{name}`; expected one of {}", names.join(", ")))
            })?;
            vec![suite::run(id, seed)?]
        }
        None => suite::run_all(seed)?,
    };
    let code = if reports.iter().all(|r| r.pass) { 0 } else { 1 };
    let text = match format {
        Format::Json => json_text(&json!({ "command": "suite", "seed": seed, "reports": reports })),
        Format::Csv => {
            let mut s = String::from("id,name,pass\n");
            for r in &reports {
                s.push_str(&format!("{},{},{}\n", r.id, r.name, r.pass));
            }
            s
        }
    };
    let table: String = reports.iter().map(|r| r.line() + "\n").collect();
    eprint!("{table}");
    Ok(Output { text, code })
}
