use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use rescert::oracle::{check_theorem1, check_theorem2, policy_cost, true_value, uniform_grid, CheckReport};
use rescert::residual::{build_hjb_residual, build_lyap_residual, ResidualBundle};
use rescert::trainer::{make_collocation, train_hjb, train_lyapunov, TrainReport};
use rescert::verifier::{
    min_certified_epsilon, verify_local_pd, verify_quadratic_bound, verify_residual, verify_sublevel_separation,
    BnbConfig, Certificate, QuadraticLowerBound, ResidualOptions, Status,
};
use rescert::{init_net, Box64, Mode, SystemModel, Tape, ValueNet64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{load, Loaded};
use crate::Common;

pub enum Failure {
    /// Bad invocation, missing or malformed input files.
    Usage(String),
    /// Anything that went wrong while computing.
    Run(String),
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn run(e: impl Display) -> Failure {
    Failure::Run(e.to_string())
}

type Res = Result<u8, Failure>;

pub const OK: u8 = 0;
pub const REFUTED: u8 = 1;
pub const BUDGET: u8 = 2;

fn exit_code(s: &Status) -> u8 {
    match s {
        Status::Certified => OK,
        Status::Refuted { .. } => REFUTED,
        // neither proved nor refuted
        Status::BudgetExhausted { .. } | Status::Inconclusive { .. } => BUDGET,
    }
}

struct Ctx {
    loaded: Loaded,
    out: PathBuf,
    bnb: BnbConfig,
}

impl Ctx {
    fn new(common: &Common, threads: Option<usize>) -> Result<Self, Failure> {
        let loaded = load(&common.config).map_err(Failure::Usage)?;
        let out = common.out.clone().unwrap_or_else(|| loaded.run.output_dir.clone());
        let mut bnb = loaded.run.bnb.clone();
        if threads == Some(1) {
            bnb.threads = Some(1);
        }
        Ok(Self { loaded, out, bnb })
    }

    fn sys(&self) -> &SystemModel {
        &self.loaded.system
    }

    fn out_file(&self, name: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| run(format!("{}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn net(&self, path: Option<PathBuf>) -> Result<(ValueNet64, String), Failure> {
        let path = path.unwrap_or_else(|| self.out.join("net.txt"));
        let net = ValueNet64::load(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if net.n != self.sys().n {
            return Err(usage(format!(
                "{}: network has {} inputs, system has {} states",
                path.display(),
                net.n,
                self.sys().n
            )));
        }
        let digest = sha256(net.to_text().as_bytes());
        Ok((net, digest))
    }

    fn bundle(&self, net: &ValueNet64) -> Result<ResidualBundle, Failure> {
        match self.sys().mode() {
            Mode::Lyapunov => build_lyap_residual(self.sys(), net),
            Mode::Hjb => build_hjb_residual(self.sys(), net),
        }
        .map_err(run)
    }
}

fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(run)?;
    fs::write(path, text + "\n").map_err(|e| run(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| run(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    config_hash: &'a str,
    system: &'a str,
    net_sha256: String,
    report: TrainReport,
}

pub fn train(common: &Common, threads: Option<usize>) -> Res {
    let ctx = Ctx::new(common, threads)?;
    let (run_cfg, sys) = (&ctx.loaded.run, ctx.sys());
    let net = init_net::<f64>(sys.n, run_cfg.net.m, run_cfg.net.seed, run_cfg.net.scale);
    let c = &run_cfg.collocation;
    let pts = make_collocation(&sys.domain, c.count, c.kind, c.seed).map_err(run)?;
    let (net, report) = match sys.mode() {
        Mode::Lyapunov => train_lyapunov(sys, &net, &pts, &run_cfg.trainer),
        Mode::Hjb => train_hjb(sys, &net, &pts, &run_cfg.trainer),
    }
    .map_err(run)?;
    let text = net.to_text();
    let net_path = ctx.out_file("net.txt")?;
    write_text(&net_path, &format!("# config {}\n{text}", ctx.loaded.hash))?;
    let last = report.iterations.last();
    println!(
        "trained {} ({} points, {} iterations, converged: {}), max relative residual {:.3e}",
        sys.name,
        report.points,
        report.iterations.len(),
        report.converged,
        last.map_or(f64::NAN, |s| s.max_relative)
    );
    write_json(
        &ctx.out_file("train_report.json")?,
        &TrainOutput {
            config_hash: &ctx.loaded.hash,
            system: &sys.name,
            net_sha256: sha256(text.as_bytes()),
            report,
        },
    )?;
    println!("wrote {}", net_path.display());
    Ok(OK)
}

/// Everything `check` needs to re-run the conclusions of a certificate.
#[derive(Serialize, Deserialize)]
pub struct CertificateFile {
    pub config_hash: String,
    pub system: String,
    pub net_sha256: String,
    pub epsilon: f64,
    pub certificate: Certificate,
    pub quadratic_bound: Certificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_pd: Option<Certificate>,
}

/// Smallest sampled value of V̂ over the faces of the domain.
fn boundary_min(value: &Tape, domain: &Box64) -> Result<f64, Failure> {
    let n = domain.dim();
    let per_dim = if n == 1 {
        1
    } else {
        ((40_000f64).powf(1.0 / (n - 1) as f64) as usize).max(2)
    };
    let mut best = f64::INFINITY;
    for i in 0..n {
        // grid over the other coordinates, then the fixed one spliced in
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
            .filter(|&j| j != i)
            .map(|j| (domain.side(j).lo(), domain.side(j).hi()))
            .unzip();
        let face = if n == 1 {
            vec![Vec::new()]
        } else {
            uniform_grid(&Box64::from_bounds(&lo, &hi).map_err(run)?, per_dim)
        };
        for end in [domain.side(i).lo(), domain.side(i).hi()] {
            for y in &face {
                let mut x = y.clone();
                x.insert(i, end);
                best = best.min(value.eval_point(&x).map_err(run)?[0]);
            }
        }
    }
    Ok(best)
}

fn separated_level(
    ctx: &Ctx,
    bundle: &ResidualBundle,
    requested: Option<f64>,
) -> Result<Option<(f64, Certificate)>, Failure> {
    let sys = ctx.sys();
    let cfg = &ctx.loaded.run.certify;
    let candidates = match requested {
        Some(c) => vec![c],
        None if !cfg.sublevel.is_empty() => cfg.sublevel.clone(),
        None if sys.mode() == Mode::Hjb => {
            let tape = Tape::compile_one(&bundle.value, sys.n).map_err(run)?;
            let bmin = boundary_min(&tape, &sys.domain)?;
            cfg.sublevel_fractions
                .iter()
                .map(|f| f * bmin)
                .filter(|c| *c > 0.0)
                .collect()
        }
        None => return Ok(None),
    };
    let mut last = None;
    for c in candidates {
        let sep = verify_sublevel_separation::<f64>(&bundle.value, c, &sys.domain, &ctx.bnb).map_err(usage)?;
        println!("sublevel c = {c:.4e}: {}", verdict(&sep.status));
        if sep.is_certified() {
            return Ok(Some((c, sep)));
        }
        last = Some(sep);
    }
    match last {
        Some(sep) => Err(Failure::Run(format!(
            "no candidate level is separated from the boundary ({})",
            verdict(&sep.status)
        ))),
        None => Err(Failure::Run("no positive sublevel candidate".into())),
    }
}

fn verdict(s: &Status) -> String {
    match s {
        Status::Certified => "certified".into(),
        Status::Refuted {
            witness_point,
            lower_bound,
            ..
        } => {
            format!("refuted at {witness_point:?} (violation ≥ {lower_bound:e})")
        }
        Status::BudgetExhausted { .. } => "budget exhausted".into(),
        Status::Inconclusive { reason } => format!("inconclusive: {reason}"),
    }
}

pub fn certify(
    common: &Common,
    threads: Option<usize>,
    net: Option<PathBuf>,
    one_sided: bool,
    sublevel: Option<f64>,
    eps: Option<f64>,
) -> Res {
    let ctx = Ctx::new(common, threads)?;
    if let Some(c) = sublevel {
        if !(c > 0.0) {
            return Err(usage("--sublevel must be positive"));
        }
    }
    if let Some(e) = eps {
        if !(0.0..1.0).contains(&e) {
            return Err(usage("--eps must lie in [0, 1)"));
        }
    }
    let (net, net_sha256) = ctx.net(net)?;
    let bundle = ctx.bundle(&net)?;
    let sys = ctx.sys();
    let cfg = &ctx.loaded.run.certify;

    let qc = verify_quadratic_bound::<f64>(&bundle.weight, sys.n, cfg.alpha, cfg.rho, &ctx.bnb).map_err(run)?;
    println!(
        "weight ≥ {}·|x|² on the ρ = {} cube: {}",
        cfg.alpha,
        cfg.rho,
        verdict(&qc.status)
    );
    if !qc.is_certified() {
        return Ok(exit_code(&qc.status));
    }
    let qb = QuadraticLowerBound::from_certificate(&qc).map_err(run)?;

    let level = separated_level(&ctx, &bundle, sublevel)?;
    let local_pd = if sys.mode() == Mode::Hjb {
        let pd = verify_local_pd::<f64>(&net, cfg.rho_pd, &ctx.bnb).map_err(run)?;
        println!(
            "V̂ positive definite on the ρ = {} cube: {}",
            cfg.rho_pd,
            verdict(&pd.status)
        );
        if !pd.is_certified() {
            return Ok(exit_code(&pd.status));
        }
        Some(pd)
    } else {
        None
    };

    let opts = ResidualOptions {
        one_sided,
        sublevel: level.as_ref().map(|(c, _)| *c),
    };
    let (epsilon, cert) = match eps {
        Some(e) => (
            e,
            verify_residual::<f64>(&bundle, e, &qb, &sys.domain, &ctx.bnb, &opts).map_err(run)?,
        ),
        None => min_certified_epsilon::<f64>(&bundle, &qb, &sys.domain, &ctx.bnb, cfg.eps_hi, &opts).map_err(run)?,
    };
    println!(
        "{} residual bound at ε = {epsilon:.4e}: {} ({} boxes, {:.1}s)",
        if one_sided { "one-sided" } else { "two-sided" },
        verdict(&cert.status),
        cert.search.as_ref().map_or(cert.boxes_processed, |s| s.total_boxes),
        cert.wall_time_s
    );
    let code = exit_code(&cert.status);
    let path = ctx.out_file("certificate.json")?;
    write_json(
        &path,
        &CertificateFile {
            config_hash: ctx.loaded.hash.clone(),
            system: sys.name.clone(),
            net_sha256,
            epsilon,
            certificate: cert,
            quadratic_bound: qc,
            separation: level.map(|(_, s)| s),
            local_pd,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(code)
}

fn read_certificate(ctx: &Ctx, path: Option<PathBuf>, net_sha256: &str) -> Result<CertificateFile, Failure> {
    let path = path.unwrap_or_else(|| ctx.out.join("certificate.json"));
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let file: CertificateFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if file.net_sha256 != net_sha256 {
        return Err(usage(format!("{} was issued for a different network", path.display())));
    }
    if file.system != ctx.sys().name {
        return Err(usage(format!("{} belongs to system `{}`", path.display(), file.system)));
    }
    Ok(file)
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    config_hash: &'a str,
    system: &'a str,
    net_sha256: &'a str,
    level: Option<f64>,
    passed: bool,
    violations: usize,
    checked: usize,
    excluded: &'a [Vec<f64>],
    min_slack: f64,
    max_relative_error: f64,
}

pub fn check(common: &Common, threads: Option<usize>, net: Option<PathBuf>, cert: Option<PathBuf>) -> Res {
    let ctx = Ctx::new(common, threads)?;
    let (net, digest) = ctx.net(net)?;
    let file = read_certificate(&ctx, cert, &digest)?;
    let sys = ctx.sys();
    let run_cfg = &ctx.loaded.run;
    let grid = uniform_grid(&sys.domain, run_cfg.oracle.grid);
    let oc = &run_cfg.oracle.integrator;
    let level = file.certificate.level;
    let report: CheckReport = match sys.mode() {
        Mode::Lyapunov => check_theorem1(sys, &net, &file.certificate, &grid, oc),
        Mode::Hjb => check_theorem2(sys, &net, &file.certificate, level, &grid, oc),
    }
    .map_err(run)?;
    write_text(&ctx.out_file("check_report.csv")?, &report.to_csv())?;
    write_json(
        &ctx.out_file("check_report.json")?,
        &CheckOutput {
            config_hash: &ctx.loaded.hash,
            system: &sys.name,
            net_sha256: &digest,
            level,
            passed: report.passed(),
            violations: report.violations,
            checked: report.rows.len(),
            excluded: &report.excluded,
            min_slack: report.min_slack(),
            max_relative_error: report.max_relative_error,
        },
    )?;
    println!(
        "ε = {:.4e}: {} points checked, {} excluded, {} violations, min slack {:.3e}",
        report.epsilon,
        report.rows.len(),
        report.excluded.len(),
        report.violations,
        report.min_slack()
    );
    if let (false, Some(w)) = (report.passed(), report.worst()) {
        eprintln!(
            "worst point {:?}: V̂ = {:e}, oracle = {:e}, slack = {:e}",
            w.point, w.v_hat, w.oracle, w.slack
        );
        return Ok(REFUTED);
    }
    Ok(OK)
}

pub fn export_grid(
    common: &Common,
    net: Option<PathBuf>,
    cert: Option<PathBuf>,
    resolution: usize,
    csv: Option<PathBuf>,
) -> Res {
    if resolution < 2 {
        return Err(usage("--resolution must be at least 2"));
    }
    let ctx = Ctx::new(common, None)?;
    let (net, digest) = ctx.net(net)?;
    let eps = match cert {
        Some(p) => {
            let file = read_certificate(&ctx, Some(p), &digest)?;
            if !file.certificate.is_certified() {
                return Err(usage("the certificate is not certified"));
            }
            Some(file.epsilon)
        }
        None => None,
    };
    let sys = ctx.sys();
    let value = Tape::compile_one(&ctx.bundle(&net)?.value, sys.n).map_err(run)?;
    let mut s: String = (1..=sys.n).map(|i| format!("x{i},")).collect();
    s.push_str(if eps.is_some() { "v_hat,bound\n" } else { "v_hat\n" });
    for x in uniform_grid(&sys.domain, resolution) {
        let v = value.eval_point(&x).map_err(run)?[0];
        for xi in &x {
            s.push_str(&format!("{xi:e},"));
        }
        match eps {
            // a-posteriori bound ε/(1−ε)·V̂
            Some(e) => s.push_str(&format!("{v:e},{:e}\n", e / (1.0 - e) * v)),
            None => s.push_str(&format!("{v:e}\n")),
        }
    }
    let path = match csv {
        Some(p) => p,
        None => ctx.out_file("grid.csv")?,
    };
    write_text(&path, &s)?;
    println!("wrote {} ({} rows)", path.display(), resolution.pow(sys.n as u32));
    Ok(OK)
}

pub fn oracle_value(common: &Common, x: &str, net: Option<PathBuf>) -> Res {
    let ctx = Ctx::new(common, None)?;
    let sys = ctx.sys();
    let x: Vec<f64> = x
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--x: {e}")))?;
    if x.len() != sys.n {
        return Err(usage(format!(
            "--x has {} entries, system has {} states",
            x.len(),
            sys.n
        )));
    }
    let oc = &ctx.loaded.run.oracle.integrator;
    let v = match sys.mode() {
        Mode::Lyapunov => true_value(sys, &x, oc),
        Mode::Hjb => {
            if net.is_none() && !ctx.out.join("net.txt").is_file() {
                return Err(usage("closed-loop cost needs --net"));
            }
            let (net, _) = ctx.net(net)?;
            policy_cost(sys, &net, &x, oc)
        }
    };
    match v {
        Ok(v) => {
            println!("{}", serde_json::to_string(&v).map_err(run)?);
            Ok(OK)
        }
        // a trajectory that never reaches the origin is a reportable outcome
        Err(e @ rescert::oracle::OracleError::NotConverged { .. }) => {
            eprintln!("{e}");
            Ok(REFUTED)
        }
        Err(e) => Err(run(e)),
    }
}
