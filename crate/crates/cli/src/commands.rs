use crate::artifact::{read_input, write_output, Artifact, Format, Header};
use crate::{Cli, Command};
use anyhow::{bail, Context};
use clap::{Args, Subcommand, ValueEnum};
use dirmech::certify::{self, Assembly, Region};
use dirmech::copula::{dirichlet_copula, psi_mc_oracle, PsiEstimator};
use dirmech::exec::{run_blocks, DEFAULT_BLOCK};
use dirmech::online::{self, estimate_match_stats, run_odrs, MatchingStream, OdrsPlan, OnlineParams};
use dirmech::psi::{psi_partial_sum, psi_upper_bound, PsiQuery};
use dirmech::randomness::DirichletParams;
use dirmech::rounding::{self, estimate_stats, BipartiteInstance, Rounder};
use dirmech::scheduling::{self, SchedulingInstance, SchedulingParams};
use dirmech::RngState;
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

pub enum Status {
    Pass,
    Fail(String),
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<Status> {
    let c = &cli.common;
    let mut rng = RngState::new(c.seed);
    let (artifact, status, default_format) = match &cli.command {
        Command::CopulaTest(a) => copula_test(a, c.seed, c.trials.unwrap_or(100_000), &mut rng)?,
        Command::Round(a) => round(a, c.seed, c.trials.unwrap_or(100_000), &mut rng)?,
        Command::Psi(a) => psi(a, c.seed, c.trials.unwrap_or(100_000), &mut rng)?,
        Command::Odrs(a) => odrs(a, c.seed, c.trials.unwrap_or(100_000), &mut rng)?,
        Command::Schedule(a) => schedule(a, c.seed, c.trials.unwrap_or(10_000), &mut rng)?,
        Command::Certify(a) => certify(a, c.seed)?,
        Command::Constants(a) => constants(a, c.seed)?,
        Command::Gen(g) => {
            let art = generate(g, c.seed, &mut rng)?;
            write_output(c.out.as_deref(), &art.render_instance())?;
            return Ok(Status::Pass);
        }
    };
    write_output(c.out.as_deref(), &artifact.render(c.format.unwrap_or(default_format)))?;
    Ok(status)
}

type Outcome = (Artifact, Status, Format);

fn status(failures: Vec<String>) -> Status {
    if failures.is_empty() {
        Status::Pass
    } else {
        Status::Fail(failures.join("; "))
    }
}

fn path_str(p: &std::path::Path) -> String {
    p.display().to_string()
}

// ---------------------------------------------------------------- copula-test

#[derive(Debug, Args)]
pub struct CopulaTestArgs {
    /// Dirichlet parameters, comma separated; the slack is 1 − Σρ
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.4")]
    pub rho: Vec<f64>,
}

#[derive(Serialize)]
struct CheckRow {
    kind: &'static str,
    ids: String,
    statistic: f64,
    threshold: f64,
    pass: bool,
}

fn rows_csv(rows: &[CheckRow]) -> String {
    let mut s = String::from("kind,ids,statistic,threshold,pass\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.kind, r.ids, r.statistic, r.threshold, r.pass));
    }
    s
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
fn ks_uniform(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

fn copula_test(a: &CopulaTestArgs, seed: u64, trials: u64, rng: &mut RngState) -> anyhow::Result<Outcome> {
    if trials < 2 {
        bail!("copula-test needs at least 2 trials");
    }
    let params = DirichletParams::new(a.rho.clone()).context("invalid --rho")?;
    let k = a.rho.len();
    let base = rng.substream(u64::MAX - 1);
    let blocks = run_blocks(trials, DEFAULT_BLOCK, |b, n| -> anyhow::Result<Vec<Vec<f64>>> {
        let mut r = base.substream(b);
        let mut cols = vec![Vec::with_capacity(n as usize); k];
        for _ in 0..n {
            let d = dirichlet_copula(&params, &mut r)?;
            for (c, v) in cols.iter_mut().zip(d.a) {
                c.push(v);
            }
        }
        Ok(cols)
    });
    let mut cols = vec![Vec::with_capacity(trials as usize); k];
    for b in blocks {
        for (c, part) in cols.iter_mut().zip(b?) {
            c.extend(part);
        }
    }
    let n = trials as f64;
    // level 1e-3: sqrt(ln(2/α)/2)/√n
    let ks_crit = (2.0f64 / 1e-3).ln().mul_add(0.5, 0.0).sqrt() / n.sqrt();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let prods: Vec<f64> = cols[i].iter().zip(&cols[j]).map(|(x, y)| (x - 0.5) * (y - 0.5)).collect();
            let mean = prods.iter().sum::<f64>() / n;
            let var = prods.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
            let four_sigma = 4.0 * (var / n).sqrt();
            rows.push(CheckRow {
                kind: "cov",
                ids: format!("A{}:A{}", i + 1, j + 1),
                statistic: mean,
                threshold: four_sigma,
                pass: mean <= four_sigma,
            });
        }
    }
    for (i, c) in cols.iter_mut().enumerate() {
        let d = ks_uniform(c);
        rows.insert(
            i,
            CheckRow {
                kind: "ks",
                ids: format!("A{}", i + 1),
                statistic: d,
                threshold: ks_crit,
                pass: d <= ks_crit,
            },
        );
    }
    let failures = rows.iter().filter(|r| !r.pass).map(|r| format!("{} {}", r.kind, r.ids)).collect();
    let rho_text: Vec<String> = a.rho.iter().map(|r| r.to_string()).collect();
    let header = Header::new("copula-test", seed, trials).param("rho", rho_text.join(","));
    Ok((Artifact::new(header, rows_csv(&rows), &rows)?, status(failures), Format::Csv))
}

// ---------------------------------------------------------------- round

#[derive(Debug, Args)]
pub struct RoundArgs {
    /// Bipartite instance JSON; "-" reads stdin
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Edge indices forming a stable set whose product moment is checked;
    /// repeatable
    #[arg(long = "stable-set", value_delimiter = ',', action = clap::ArgAction::Append, num_args = 1)]
    pub stable_set: Vec<String>,
    /// Emit one rounding instead of statistics
    #[arg(long)]
    pub sample: bool,
}

fn parse_sets(raw: &[String]) -> anyhow::Result<Vec<Vec<usize>>> {
    // each flag occurrence is split on ',' by clap; ';' separates sets inside one value
    let mut sets = vec![Vec::new()];
    for item in raw {
        for (i, part) in item.split(';').enumerate() {
            if i > 0 {
                sets.push(Vec::new());
            }
            if !part.is_empty() {
                sets.last_mut().unwrap().push(part.trim().parse::<usize>().with_context(|| format!("bad edge index {part:?}"))?);
            }
        }
    }
    sets.retain(|s| !s.is_empty());
    Ok(sets)
}

fn round(a: &RoundArgs, seed: u64, trials: u64, rng: &mut RngState) -> anyhow::Result<Outcome> {
    let inst = BipartiteInstance::from_json(&read_input(&a.input)?)?;
    let rounder = Rounder::new(&inst)?;
    let mut header = Header::new("round", seed, if a.sample { 0 } else { trials }).param("in", path_str(&a.input));
    if a.sample {
        header = header.param("sample", "");
        let out = rounder.round(rng)?;
        let mut csv = String::from("edge,u,v,x,selected\n");
        let mut rows = Vec::new();
        for (e, ed) in inst.edges.iter().enumerate() {
            csv.push_str(&format!("{e},{},{},{},{}\n", ed.u, ed.v, ed.x, out.selected[e]));
            rows.push(json!({"edge": e, "u": ed.u, "v": ed.v, "x": ed.x, "selected": out.selected[e]}));
        }
        let overfull: Vec<String> = inst
            .right
            .iter()
            .filter(|v| inst.edges.iter().zip(&out.selected).filter(|(e, &s)| s && &e.v == *v).count() > 1)
            .map(|v| format!("right node {v} has several selected edges"))
            .collect();
        return Ok((Artifact::new(header, csv, rows)?, status(overfull), Format::Csv));
    }
    let sets = parse_sets(&a.stable_set)?;
    for s in &sets {
        let text: Vec<String> = s.iter().map(|e| e.to_string()).collect();
        header = header.param("stable-set", text.join(","));
    }
    let report = estimate_stats(&inst, trials, &sets, rng)?;
    let mut failures: Vec<String> = report.rows.iter().filter(|r| !r.pass).map(|r| format!("{} {}", r.kind.as_str(), r.ids)).collect();
    if report.overfull_trials > 0 {
        failures.push(format!("{} trials selected several edges at a right node", report.overfull_trials));
    }
    Ok((Artifact::new(header, report.to_csv(), &report)?, status(failures), Format::Csv))
}

// ---------------------------------------------------------------- psi

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Direct,
    Tilted,
}

#[derive(Debug, Args)]
pub struct PsiArgs {
    #[arg(long, requires_all = ["x2", "rho1", "rho2"], conflicts_with = "random")]
    pub x1: Option<f64>,
    #[arg(long)]
    pub x2: Option<f64>,
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    /// Evaluate this many random queries instead of one
    #[arg(long)]
    pub random: Option<usize>,
    /// Terms of the series used for the lower bound
    #[arg(long, default_value_t = 20)]
    pub jmax: usize,
    /// Order of the reported higher upper bound (both sides)
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, value_enum, default_value = "direct")]
    pub estimator: EstimatorArg,
}

#[derive(Serialize)]
struct PsiRow {
    x1: f64,
    x2: f64,
    rho1: f64,
    rho2: f64,
    lower: f64,
    mc_estimate: Option<f64>,
    mc_half_width: Option<f64>,
    upper_k0: f64,
    upper_k: f64,
    pass: bool,
}

fn psi(a: &PsiArgs, seed: u64, trials: u64, rng: &mut RngState) -> anyhow::Result<Outcome> {
    let mut queries = Vec::new();
    let mut header = Header::new("psi", seed, trials);
    match (a.x1, a.random) {
        (Some(x1), None) => {
            let q = (x1, a.x2.unwrap(), a.rho1.unwrap(), a.rho2.unwrap());
            header = header.param("x1", q.0).param("x2", q.1).param("rho1", q.2).param("rho2", q.3);
            queries.push(q);
        }
        (None, Some(n)) => {
            header = header.param("random", n);
            let mut g = rng.substream(u64::MAX);
            for _ in 0..n {
                let x1 = 0.1 + 0.9 * g.uniform_open();
                let x2 = 0.1 + 0.9 * g.uniform_open();
                let rho1 = g.uniform_open();
                let rho2 = g.uniform_open() * (1.0 - rho1);
                queries.push((x1, x2, rho1, rho2));
            }
        }
        _ => bail!("give either --x1/--x2/--rho1/--rho2 or --random N"),
    }
    header = header
        .param("jmax", a.jmax)
        .param("order", a.order)
        .param("estimator", format!("{:?}", a.estimator).to_lowercase());
    let estimator = match a.estimator {
        EstimatorArg::Direct => PsiEstimator::Direct,
        EstimatorArg::Tilted => PsiEstimator::Tilted,
    };
    let mut rows = Vec::new();
    for (i, &(x1, x2, rho1, rho2)) in queries.iter().enumerate() {
        let q = PsiQuery::new(x1, x2, rho1, rho2)?;
        let lower = psi_partial_sum(&q, a.jmax)?;
        let upper_k0 = psi_upper_bound(&q, 0, 0)?;
        let upper_k = psi_upper_bound(&q, a.order, a.order)?;
        let (mc, hw, pass) = if trials > 0 {
            let est = psi_mc_oracle(x1, x2, rho1, rho2, trials, estimator, &mut rng.substream(i as u64))?;
            let slack = 4.0 * est.std_error;
            let pass = lower - slack <= est.estimate && est.estimate <= upper_k + slack;
            (Some(est.estimate), Some(est.half_width), pass)
        } else {
            (None, None, lower <= upper_k)
        };
        rows.push(PsiRow {
            x1,
            x2,
            rho1,
            rho2,
            lower,
            mc_estimate: mc,
            mc_half_width: hw,
            upper_k0,
            upper_k,
            pass,
        });
    }
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut csv = format!("x1,x2,rho1,rho2,lower,mc_estimate,mc_half_width,upper_k0,upper_k{},pass\n", a.order);
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.x1,
            r.x2,
            r.rho1,
            r.rho2,
            r.lower,
            opt(r.mc_estimate),
            opt(r.mc_half_width),
            r.upper_k0,
            r.upper_k,
            r.pass
        ));
    }
    let failures = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("query ({}, {}, {}, {}) outside its bounds", r.x1, r.x2, r.rho1, r.rho2))
        .collect();
    Ok((Artifact::new(header, csv, &rows)?, status(failures), Format::Csv))
}

// ---------------------------------------------------------------- odrs

#[derive(Debug, Args)]
pub struct OdrsArgs {
    /// Matching stream JSON; "-" reads stdin
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Emit the per-edge trace of a single run
    #[arg(long)]
    pub trace: bool,
    /// Guaranteed matching probability per unit demand
    #[arg(long, default_value_t = 0.68)]
    pub ratio: f64,
}

#[derive(Serialize)]
struct OdrsRow {
    edge: usize,
    arrival: usize,
    u: String,
    v: String,
    g: f64,
    x: f64,
    selected_freq: f64,
    matched_freq: f64,
    bound: f64,
    half_width: f64,
    pass: bool,
}

fn odrs(a: &OdrsArgs, seed: u64, trials: u64, rng: &mut RngState) -> anyhow::Result<Outcome> {
    let stream = MatchingStream::from_json(&read_input(&a.input)?)?;
    let params = OnlineParams::default();
    let plan = OdrsPlan::new(&stream, &params)?;
    let mut failures = plan.feasibility_violations();
    if a.trace {
        let header = Header::new("odrs", seed, 0).param("in", path_str(&a.input)).param("trace", "");
        let run = run_odrs(&stream, &params, rng)?;
        return Ok((Artifact::new(header, run.trace_csv(), &run)?, status(failures), Format::Csv));
    }
    let header = Header::new("odrs", seed, trials).param("in", path_str(&a.input)).param("ratio", a.ratio);
    let stats = estimate_match_stats(&plan, trials, rng)?;
    let n = trials as f64;
    let mut rows = Vec::new();
    for (e, pe) in plan.edges.iter().enumerate() {
        let bound = a.ratio * pe.g;
        let half_width = 4.0 * (bound * (1.0 - bound) / n).sqrt();
        let matched = stats.matched_freq(e);
        rows.push(OdrsRow {
            edge: e,
            arrival: pe.arrival,
            u: stream.offline[pe.u].clone(),
            v: stream.arrivals[pe.arrival].v.clone(),
            g: pe.g,
            x: pe.params.x,
            selected_freq: stats.selected_freq(e),
            matched_freq: matched,
            bound,
            half_width,
            pass: matched >= bound - half_width,
        });
    }
    failures.extend(rows.iter().filter(|r| !r.pass).map(|r| format!("edge {}~{} matched below bound", r.u, r.v)));
    if stats.non_matchings > 0 {
        failures.push(format!("{} trials committed a non-matching", stats.non_matchings));
    }
    let mut csv = String::from("edge,arrival,u,v,g,x,selected_freq,matched_freq,bound,half_width,pass\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.edge, r.arrival, r.u, r.v, r.g, r.x, r.selected_freq, r.matched_freq, r.bound, r.half_width, r.pass
        ));
    }
    Ok((Artifact::new(header, csv, &rows)?, status(failures), Format::Csv))
}

// ---------------------------------------------------------------- schedule

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Scheduling instance JSON; "-" reads stdin
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Emit one schedule instead of the Z report
    #[arg(long)]
    pub sample: bool,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
}

fn schedule(a: &ScheduleArgs, seed: u64, trials: u64, rng: &mut RngState) -> anyhow::Result<Outcome> {
    let inst = SchedulingInstance::from_json(&read_input(&a.input)?)?;
    let d = SchedulingParams::default();
    let params = SchedulingParams {
        pi: a.pi.unwrap_or(d.pi),
        theta: a.theta.unwrap_or(d.theta),
        tau: a.tau.unwrap_or(d.tau),
    };
    let header = |t| {
        Header::new("schedule", seed, t)
            .param("in", path_str(&a.input))
            .param("pi", params.pi)
            .param("theta", params.theta)
            .param("tau", params.tau)
    };
    if a.sample {
        let s = scheduling::schedule(&inst, &params, rng)?;
        let mut csv = format!("# objective={} offset={}\nmachine,position,job\n", s.objective, s.offset);
        for (i, jobs) in s.order.iter().enumerate() {
            for (pos, j) in jobs.iter().enumerate() {
                csv.push_str(&format!("{i},{pos},{j}\n"));
            }
        }
        let mut counts = vec![0usize; inst.jobs];
        s.order.iter().flatten().for_each(|&j| counts[j] += 1);
        let failures = (0..inst.jobs).filter(|&j| counts[j] != 1).map(|j| format!("job {j} scheduled {} times", counts[j])).collect();
        return Ok((Artifact::new(header(0).param("sample", ""), csv, &s)?, status(failures), Format::Csv));
    }
    let report = scheduling::z_and_lb(&inst, &params, trials, rng)?;
    let mut failures: Vec<String> = report
        .rows
        .iter()
        .filter(|r| !r.within_ceiling)
        .map(|r| format!("E[Z] above the ceiling for machine {} job {}", r.machine, r.job))
        .collect();
    if report.bad_assignments > 0 {
        failures.push(format!("{} trials did not assign every job exactly once", report.bad_assignments));
    }
    Ok((Artifact::new(header(trials), report.to_csv(), &report)?, status(failures), Format::Csv))
}

// ---------------------------------------------------------------- certify

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AssemblyArg {
    Separate,
    Ratio,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Smallest demand g₁, g₂ in the region
    #[arg(long = "g-min", default_value_t = 0.3)]
    pub g_min: f64,
    /// Threshold to certify
    #[arg(long, default_value_t = 0.3947)]
    pub c: f64,
    /// Refinement levels below each grid box (four bisections per level)
    #[arg(long, default_value_t = 6)]
    pub depth: u32,
    #[arg(long, value_enum, default_value = "separate")]
    pub assembly: AssemblyArg,
    /// Largest demand of the small-demand bound reported alongside
    #[arg(long = "small-g", default_value_t = 0.003)]
    pub small_g: f64,
    /// Re-check this many boxes (at most 100) in exact rational arithmetic
    #[arg(long, default_value_t = 0)]
    pub exact: usize,
}

fn certify(a: &CertifyArgs, seed: u64) -> anyhow::Result<Outcome> {
    if a.exact > 100 {
        bail!("--exact is limited to 100 boxes");
    }
    let params = OnlineParams { c: a.c, ..OnlineParams::default() };
    let assembly = match a.assembly {
        AssemblyArg::Separate => Assembly::Separate,
        AssemblyArg::Ratio => Assembly::Ratio,
    };
    let region = Region::with_g_min(a.g_min);
    let report = certify::certify_region_with(&region, a.epsilon, a.c, a.depth, &params, assembly)?;
    let small_g = certify::small_g_bound(a.small_g, &params)?;
    let boxes = region.boxes(a.epsilon);
    let step = (boxes.len() / a.exact.max(1)).max(1);
    let exact: Vec<_> = boxes
        .iter()
        .step_by(step)
        .take(a.exact)
        .filter_map(|b| certify::exact_assembly_check(b, &params, assembly).ok().map(|c| (*b, c)))
        .collect();
    let mut failures = Vec::new();
    if !report.passed {
        failures.push(format!("{} of {} boxes not certified", report.failures.len(), report.boxes_checked));
    }
    for (b, c) in &exact {
        if c.rounding_error.abs() >= certify::SAFETY_MARGIN {
            failures.push(format!("rounding error {} on box {:?}", c.rounding_error, b));
        }
    }
    let header = Header::new("certify", seed, 0)
        .param("epsilon", a.epsilon)
        .param("g-min", a.g_min)
        .param("c", a.c)
        .param("depth", a.depth)
        .param("assembly", format!("{:?}", a.assembly).to_lowercase())
        .param("small-g", a.small_g)
        .param("exact", a.exact);
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut csv = String::from("field,value\n");
    for (k, v) in [
        ("passed", report.passed.to_string()),
        ("boxes_checked", report.boxes_checked.to_string()),
        ("boxes_passed", report.boxes_passed.to_string()),
        ("evaluations", report.evaluations.to_string()),
        ("worst_bound", opt(report.worst_bound)),
        ("worst_box", report.worst_box.map(|b| format!("{:?}-{:?}", b.lo, b.hi)).unwrap_or_default()),
        ("runtime_secs", report.runtime_secs.to_string()),
        ("small_g_ratio_factor", small_g.ratio_factor.to_string()),
        ("small_g_binom_factor", small_g.binom_factor.to_string()),
        ("small_g_product", small_g.product.to_string()),
        ("exact_checks", exact.len().to_string()),
        ("exact_max_abs_error", exact.iter().map(|(_, c)| c.rounding_error.abs()).fold(0.0, f64::max).to_string()),
    ] {
        csv.push_str(&format!("{k},\"{}\"\n", v.replace('"', "'")));
    }
    let exact_json: Vec<_> = exact.iter().map(|(b, c)| json!({"box": b, "check": c})).collect();
    let body = json!({ "report": report, "small_g": small_g, "exact_checks": exact_json });
    Ok((Artifact::new(header, csv, body)?, status(failures), Format::Json))
}

// ---------------------------------------------------------------- constants

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// Grid steps over q ∈ [0, 4]
    #[arg(long = "steps-q", default_value_t = 4000)]
    pub steps_q: usize,
    /// Grid steps over L ∈ [0, 2]
    #[arg(long = "steps-l", default_value_t = 2000)]
    pub steps_l: usize,
}

fn constants(a: &ConstantsArgs, seed: u64) -> anyhow::Result<Outcome> {
    let rep = scheduling::analysis_constants_with_grid(&SchedulingParams::default(), a.steps_q, a.steps_l)?;
    let mut csv = String::from("name,value,reference,pass\n");
    for c in &rep.checks {
        csv.push_str(&format!("{},{},{},{}\n", c.name, c.value, c.reference, if c.pass { "PASS" } else { "FAIL" }));
    }
    let failures = rep.checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {} vs {}", c.name, c.value, c.reference)).collect();
    let header = Header::new("constants", seed, 0).param("steps-q", a.steps_q).param("steps-l", a.steps_l);
    Ok((Artifact::new(header, csv, &rep)?, status(failures), Format::Csv))
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Random bipartite instance for `round`
    Bipartite {
        #[arg(long, default_value_t = 4)]
        left: usize,
        #[arg(long, default_value_t = 4)]
        right: usize,
        #[arg(long = "edge-prob", default_value_t = 0.5)]
        edge_prob: f64,
    },
    /// Random matching stream for `odrs`
    Stream {
        #[arg(long, default_value_t = 5)]
        offline: usize,
        #[arg(long, default_value_t = 10)]
        arrivals: usize,
        #[arg(long = "max-degree", default_value_t = 3)]
        max_degree: usize,
        #[arg(long, default_value_t = 1.0)]
        fill: f64,
    },
    /// Stream whose arrivals all share one offline node
    Overloaded {
        #[arg(long, default_value_t = 10)]
        arrivals: usize,
    },
    /// Splits each arrival of a stream into m equal consecutive arrivals
    Slivers {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        m: usize,
    },
    /// Random instance for `schedule`
    Schedule {
        #[arg(long, default_value_t = 2)]
        machines: usize,
        #[arg(long, default_value_t = 6)]
        jobs: usize,
    },
}

fn generate(g: &GenCommand, seed: u64, rng: &mut RngState) -> anyhow::Result<Artifact> {
    let (header, value) = match g {
        GenCommand::Bipartite { left, right, edge_prob } => {
            if !(0.0..=1.0).contains(edge_prob) || *left == 0 || *right == 0 {
                bail!("need --left, --right ≥ 1 and --edge-prob in [0, 1]");
            }
            let h = Header::new("gen bipartite", seed, 0).param("left", left).param("right", right).param("edge-prob", edge_prob);
            (h, serde_json::to_value(rounding::random_instance(*left, *right, *edge_prob, rng))?)
        }
        GenCommand::Stream { offline, arrivals, max_degree, fill } => {
            if *offline == 0 || *max_degree == 0 || !(*fill > 0.0 && *fill <= 1.0) {
                bail!("need --offline, --max-degree ≥ 1 and --fill in (0, 1]");
            }
            let h = Header::new("gen stream", seed, 0)
                .param("offline", offline)
                .param("arrivals", arrivals)
                .param("max-degree", max_degree)
                .param("fill", fill);
            (h, serde_json::to_value(online::gen::uniform(*offline, *arrivals, *max_degree, *fill, rng))?)
        }
        GenCommand::Overloaded { arrivals } => {
            if *arrivals == 0 {
                bail!("need --arrivals ≥ 1");
            }
            let h = Header::new("gen overloaded", seed, 0).param("arrivals", arrivals);
            (h, serde_json::to_value(online::gen::overloaded_node(*arrivals, rng))?)
        }
        GenCommand::Slivers { input, m } => {
            if *m == 0 {
                bail!("need --m ≥ 1");
            }
            let stream = MatchingStream::from_json(&read_input(input)?)?;
            let h = Header::new("gen slivers", seed, 0).param("in", path_str(input)).param("m", m);
            (h, serde_json::to_value(online::gen::slivers(&stream, *m))?)
        }
        GenCommand::Schedule { machines, jobs } => {
            if *machines == 0 || *jobs == 0 {
                bail!("need --machines, --jobs ≥ 1");
            }
            let h = Header::new("gen schedule", seed, 0).param("machines", machines).param("jobs", jobs);
            (h, serde_json::to_value(scheduling::random_instance(*machines, *jobs, rng))?)
        }
    };
    Artifact::new(header, String::new(), value)
}
