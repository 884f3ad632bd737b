use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sosforge::bounds::{bounds_table, table_csv, table_markdown};
use sosforge::control::{control_from_jet, top_even};
use sosforge::decompose::{decompose, DecomposeConfig, Decomposition, Manifest};
use sosforge::field::{
    Expr, ExprField, FieldRef, PolynomialField, PolynomialSpec, SmoothnessClass,
};
use sosforge::graph::{
    adjacency_graph, alpha_s_structure_present, degree_certificate, heavier_neighbor_bound,
    welsh_powell_bound, welsh_powell_color, GraphDoc,
};
use sosforge::oddvand::odd_moment_weights;
use sosforge::sampling::{seed_offset, BoxDomain};
use sosforge::verify::{check_partition_of_unity, verify_decomposition, Verdict, VerifyConfig};
use sosforge::whitney::{build_partition, Partition};
use sosforge::SosError;

/// Largest graph on which the α_s search is attempted.
const ALPHA_SEARCH_LIMIT: usize = 64;

#[derive(Parser)]
#[command(
    name = "sosforge",
    version,
    about = "Sum-of-squares decompositions of non-negative Hölder functions"
)]
struct Cli {
    /// Worker threads; falls back to SOSFORGE_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG of the partition (planar boxes only).
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decompose, verify, and write manifest, samples and (n = 2) SVG.
    Decompose(Common),
    /// Build the dyadic partition and check the partition of unity.
    Partition(Common),
    /// Colour the partition's adjacency graph and report the certificates.
    Color(Common),
    /// Rebuild a decomposition from its manifest and re-run every check.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Odd-moment weights for an odd order.
    Lemma { ell: usize },
    /// Square-count and lower-bound table, ranges like `1..4` (inclusive).
    Bounds {
        n: String,
        k: String,
        #[arg(long)]
        csv: bool,
    },
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<SosError> for Failure {
    fn from(e: SosError) -> Self {
        match e {
            SosError::InvalidInput(_) | SosError::Parse(_) => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

type Outcome = Result<bool, Failure>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Plugin {
    /// `1 − exp(−|x|²)`
    GaussianWell,
    /// `exp(|x|²) − 1`
    ExpBowl,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FieldSpec {
    Polynomial(PolynomialSpec),
    Plugin(Plugin),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    field: FieldSpec,
    #[serde(rename = "box")]
    domain: BoxDomain,
    /// Smoothness; taken from a polynomial spec when absent.
    k: Option<usize>,
    alpha: Option<f64>,
    #[serde(default)]
    decompose: DecomposeConfig,
    #[serde(default)]
    verify: VerifyConfig,
    /// Constant control for `partition` and `color`, in place of the field's.
    control: Option<f64>,
    #[serde(default = "default_samples")]
    sample_points: usize,
    #[serde(default = "default_seed")]
    seed: String,
    out: Option<PathBuf>,
}

fn default_samples() -> usize {
    256
}

fn default_seed() -> String {
    "sosforge".into()
}

impl RunConfig {
    fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        self.decompose.validate()?;
        if !self.domain.is_valid()
            || self
                .domain
                .lo
                .iter()
                .zip(&self.domain.hi)
                .any(|(l, h)| !(h > l))
        {
            return Err(Failure::Usage("box must be non-degenerate".into()));
        }
        let s = self.smoothness()?;
        if s.n != self.domain.dim() {
            return Err(Failure::Usage(format!(
                "field has dimension {}, box has {}",
                s.n,
                self.domain.dim()
            )));
        }
        if let Some(c) = self.control {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Failure::Usage(format!(
                    "control = {c} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    fn smoothness(&self) -> Result<SmoothnessClass, Failure> {
        let n = self.domain.dim();
        let (k, alpha) = match &self.field {
            FieldSpec::Polynomial(p) => (self.k.unwrap_or(p.k), self.alpha.unwrap_or(p.alpha)),
            FieldSpec::Plugin(_) => (
                self.k
                    .ok_or_else(|| Failure::Usage("plugin fields need k".into()))?,
                self.alpha.unwrap_or(1.0),
            ),
        };
        Ok(SmoothnessClass::new(n, k, alpha)?)
    }

    fn field(&self) -> Result<FieldRef, Failure> {
        let s = self.smoothness()?;
        Ok(match &self.field {
            FieldSpec::Polynomial(p) => Arc::new(PolynomialField::from_spec(p)?.with_smoothness(s)),
            FieldSpec::Plugin(p) => {
                let norm2 = (0..s.n)
                    .map(|i| Expr::Mul(Box::new(Expr::Var(i)), Box::new(Expr::Var(i))))
                    .reduce(|a, b| Expr::Add(Box::new(a), Box::new(b)))
                    .unwrap_or(Expr::Const(0.0));
                let e = match p {
                    Plugin::GaussianWell => Expr::Add(
                        Box::new(Expr::Const(1.0)),
                        Box::new(Expr::Neg(Box::new(Expr::Exp(Box::new(Expr::Neg(
                            Box::new(norm2),
                        )))))),
                    ),
                    Plugin::ExpBowl => Expr::Add(
                        Box::new(Expr::Exp(Box::new(norm2))),
                        Box::new(Expr::Const(-1.0)),
                    ),
                };
                Arc::new(ExprField::new(e, s))
            }
        })
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf, Failure> {
        let dir = flag
            .clone()
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }

    fn partition(&self) -> Result<Partition, Failure> {
        let d = &self.decompose;
        let delta = d.delta_cut_for(&self.domain);
        let p = match self.control {
            Some(c) => build_partition(
                &|_: &[f64]| c,
                &self.domain,
                d.nu,
                d.lambda,
                d.max_level,
                delta,
            )?,
            None => {
                let f = self.field()?;
                let s = f.smoothness();
                let order = top_even(s.k);
                let r = |x: &[f64]| control_from_jet(&f.jet(x, order), s.k, s.alpha);
                build_partition(&r, &self.domain, d.nu, d.lambda, d.max_level, delta)?
            }
        };
        Ok(p)
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn print_verdict(v: &Verdict) {
    for c in &v.checks {
        let mark = if c.pass { "PASS" } else { "FAIL" };
        match c.fitted {
            // fitted constants report the change under refinement against the allowed change
            Some(f) => println!(
                "  {mark} {:<28} fitted {f:.4e} change {:.3e} allowed {:.3e}",
                c.name, c.worst, c.threshold
            ),
            None => println!(
                "  {mark} {:<28} worst {:.3e} threshold {:.3e}",
                c.name, c.worst, c.threshold
            ),
        }
    }
    println!("{}", if v.pass { "PASS" } else { "FAIL" });
}

fn sample_points(cfg: &RunConfig) -> Vec<Vec<f64>> {
    cfg.domain
        .halton_points(cfg.sample_points, seed_offset(&cfg.seed))
}

fn write_decomposition(
    cfg: &RunConfig,
    c: &Common,
    d: &Decomposition,
    v: &Verdict,
) -> Result<(), Failure> {
    let dir = cfg.out_dir(&c.out)?;
    write(&dir, "manifest.json", &json(&d.manifest()))?;
    write(&dir, "samples.csv", &d.sample_csv(&sample_points(cfg)))?;
    write(&dir, "verify.json", &json(v))?;
    if d.n() == 2 {
        if let Some(top) = &d.top {
            write(
                &dir,
                "partition.svg",
                &top.partition.to_svg(Some(&top.colors)),
            )?;
        }
    }
    Ok(())
}

fn cmd_decompose(c: &Common) -> Outcome {
    let cfg = RunConfig::load(&c.config)?;
    let d = decompose(cfg.field()?, &cfg.domain, &cfg.decompose)?;
    let v = verify_decomposition(&d, &cfg.verify);
    let diag = &d.diagnostics;
    println!(
        "classes {} (budget {}), cubes {}, chromatic {}, uncovered volume {:.3e}",
        d.class_count(),
        diag.class_budget,
        diag.cubes,
        diag.chromatic,
        diag.uncovered_volume
    );
    print_verdict(&v);
    write_decomposition(&cfg, c, &d, &v)?;
    Ok(v.pass)
}

fn cmd_verify(manifest: &Path, c: &Common) -> Outcome {
    let cfg = RunConfig::load(&c.config)?;
    let text = fs::read_to_string(manifest).map_err(|e| io_err(manifest, e))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", manifest.display())))?;
    let f = cfg.field()?;
    let s = f.smoothness();
    if (m.n, m.k) != (s.n, s.k) || m.alpha != s.alpha {
        return Err(Failure::Usage(
            "manifest smoothness does not match the config's field".into(),
        ));
    }
    let d = decompose(f, &m.domain, &m.config)?;
    let same = json(&d.manifest()) == text;
    println!(
        "  {} manifest reproduced",
        if same { "PASS" } else { "FAIL" }
    );
    let v = verify_decomposition(&d, &cfg.verify);
    print_verdict(&v);
    let dir = cfg.out_dir(&c.out)?;
    write(&dir, "verify.json", &json(&v))?;
    Ok(same && v.pass)
}

fn level_histogram(p: &Partition) -> Vec<(u32, usize)> {
    let mut h = std::collections::BTreeMap::new();
    for c in &p.cubes {
        *h.entry(c.level).or_insert(0) += 1;
    }
    h.into_iter().collect()
}

fn cmd_partition(c: &Common) -> Outcome {
    let cfg = RunConfig::load(&c.config)?;
    let p = cfg.partition()?;
    println!("cubes {}", p.len());
    for (level, count) in level_histogram(&p) {
        println!("  level {level}: {count}");
    }
    println!(
        "uncovered volume {:.3e}, dropped volume {:.3e}",
        p.uncovered_volume, p.dropped_volume
    );
    let per_axis = match p.n {
        1 => 4001,
        2 => 201,
        _ => 31,
    };
    let checks = check_partition_of_unity(&p, &cfg.domain.grid(per_axis));
    let v = Verdict::new(checks);
    print_verdict(&v);
    let dir = cfg.out_dir(&c.out)?;
    write(&dir, "partition.json", &json(&p.to_doc()))?;
    if c.svg && p.n == 2 {
        write(&dir, "partition.svg", &p.to_svg(None))?;
    }
    Ok(v.pass)
}

#[derive(Serialize)]
struct ColorReport {
    vertices: usize,
    edges: usize,
    max_degree: usize,
    classes: usize,
    valid: bool,
    degree_certificate: bool,
    welsh_powell_bound: usize,
    heavier_neighbor_bound: usize,
    /// `Some(true)` when no α_s structure exists for `s` = classes − 1.
    alpha_free_below: Option<bool>,
}

fn cmd_color(c: &Common) -> Outcome {
    let cfg = RunConfig::load(&c.config)?;
    let p = cfg.partition()?;
    let g = adjacency_graph(&p);
    let col = welsh_powell_color(&g);
    let alpha = if g.len() <= ALPHA_SEARCH_LIMIT && col.classes > 1 {
        Some(alpha_s_structure_present(&g, col.classes - 1)?.is_none())
    } else {
        None
    };
    let r = ColorReport {
        vertices: g.len(),
        edges: g.edge_count(),
        max_degree: g.max_degree(),
        classes: col.classes,
        valid: col.is_valid(&g),
        degree_certificate: degree_certificate(&g, p.n),
        welsh_powell_bound: welsh_powell_bound(&g),
        heavier_neighbor_bound: heavier_neighbor_bound(&g),
        alpha_free_below: alpha,
    };
    print!("{}", json(&r));
    let dir = cfg.out_dir(&c.out)?;
    write(&dir, "graph.json", &json(&GraphDoc::new(&g, Some(&col))))?;
    write(&dir, "color.json", &json(&r))?;
    if c.svg && p.n == 2 {
        write(&dir, "partition.svg", &p.to_svg(Some(&col.colors)))?;
    }
    let planar_ok = p.n != 2 || r.classes <= 9;
    Ok(r.valid && r.degree_certificate && planar_ok)
}

fn cmd_lemma(ell: usize) -> Outcome {
    let w = odd_moment_weights(ell)?.to_doc();
    println!("ell = {}", w.ell);
    println!("eta = ({})", w.etas.join(", "));
    println!("q = ({})", w.qs.join(", "));
    println!("{}", if w.pass { "PASS" } else { "FAIL" });
    Ok(w.pass)
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<u32>, Failure> {
    let bad = || {
        Failure::Usage(format!(
            "bad range {s:?}; expected a..b or a single integer"
        ))
    };
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    let r = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.trim_start_matches('='))?,
        None => {
            let v = num(s)?;
            v..=v
        }
    };
    if r.is_empty() {
        return Err(bad());
    }
    Ok(r)
}

fn cmd_bounds(n: &str, k: &str, csv: bool) -> Outcome {
    let rows = bounds_table(parse_range(n)?, parse_range(k)?)?;
    print!(
        "{}",
        if csv {
            table_csv(&rows)
        } else {
            table_markdown(&rows)
        }
    );
    Ok(true)
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SOSFORGE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("SOSFORGE_THREADS = {v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(t) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Cmd::Decompose(c) => cmd_decompose(c),
        Cmd::Partition(c) => cmd_partition(c),
        Cmd::Color(c) => cmd_color(c),
        Cmd::Verify { manifest, common } => cmd_verify(manifest, common),
        Cmd::Lemma { ell } => cmd_lemma(*ell),
        Cmd::Bounds { n, k, csv } => cmd_bounds(n, k, *csv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
