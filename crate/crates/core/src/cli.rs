//! Command-line front end. Jobs come from flags, a JSON job file, or both
//! (flags win).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotic::{population_mle, two_proportion_test, zero_defier_check};
use crate::cache::{load_or_build, CacheStatus};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::HypothesisSet;
use crate::inference::{confidence_interval, p_value, Side};
use crate::lattice::{enumerate_data_configs, enumerate_type_configs, DataConfiguration, RandomizationSpec, SampleSize};
use crate::likelihood::{Engine, Mode};
use crate::oracle::exhaustive_distribution;
use crate::quantity::Operand;
use crate::shares::{bfh_lower_bounds, limited_data_p_value, parse_share, EmptyArmConvention, SharePair, ShareSpace};
use crate::table::LambdaTable;

#[derive(Debug, Parser)]
#[command(name = "defiers", version, about = "Exact likelihood-ratio inference on potential-outcome type counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Likelihood-ratio test with a worst-case p-value.
    Test(JobArgs),
    /// Confidence interval by test inversion.
    Ci(JobArgs),
    /// Build and store the maximum-likelihood table.
    Table(JobArgs),
    /// Lower bounds on defier and complier shares from arm-wise shares.
    Bounds(JobArgs),
    /// Test that only observes the two arm-wise shares.
    Limited(JobArgs),
    /// Population-level (asymptotic) analysis and the two-proportion baseline.
    Asymptotic(JobArgs),
    /// Count data configurations whose maximum-likelihood set has several members.
    MleCount(JobArgs),
    /// Compare the likelihood formulas with brute-force enumeration.
    OracleCheck(JobArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args, Default)]
pub struct JobArgs {
    /// JSON job file; flags override its fields.
    #[arg(long)]
    pub job: Option<PathBuf>,
    #[arg(long)]
    pub s: Option<u32>,
    /// Data configuration `g1,g2,g3,g4`.
    #[arg(long)]
    pub g: Option<String>,
    /// Arm-wise treated shares `v,c` (fractions or decimals).
    #[arg(long)]
    pub shares: Option<String>,
    /// `iid:p=1/2` or `urn:m=50`.
    #[arg(long)]
    pub spec: Option<String>,
    /// Null hypothesis; repeat for several.
    #[arg(long)]
    pub h0: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Quantity or ratio of quantities, e.g. `killed` or `saved / killed`.
    #[arg(long)]
    pub quantity: Option<String>,
    /// `lower`, `upper` or `two-sided`.
    #[arg(long)]
    pub side: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Resolve ties and p-values with exact rational arithmetic.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Replace a cache file built for a different job.
    #[arg(long)]
    pub rebuild: bool,
    /// Largest sample size for `oracle-check`.
    #[arg(long)]
    pub max_s: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SharesInput {
    Pair([String; 2]),
    Named { v_hat: String, c_hat: String },
}

/// Job fields as read from a file. Unknown fields are ignored so a report
/// can be fed back in.
#[derive(Debug, Default, Deserialize)]
struct JobFile {
    s: Option<u32>,
    g: Option<DataConfiguration>,
    shares: Option<SharesInput>,
    spec: Option<RandomizationSpec>,
    h0: Option<OneOrMany>,
    alpha: Option<f64>,
    quantity: Option<String>,
    side: Option<Side>,
    /// Reports use `cache` for the hit status, so the path has its own key.
    cache_path: Option<PathBuf>,
    threads: Option<usize>,
    mode: Option<Mode>,
    exact: Option<bool>,
    format: Option<Format>,
    rebuild: Option<bool>,
    max_s: Option<u32>,
}

/// A fully resolved job.
#[derive(Debug, Clone)]
pub struct JobConfig {
    pub s: Option<SampleSize>,
    pub g: Option<DataConfiguration>,
    pub shares: Option<SharePair>,
    pub spec: RandomizationSpec,
    pub h0: Vec<String>,
    pub alpha: f64,
    pub quantity: Option<String>,
    pub side: Side,
    pub cache: Option<PathBuf>,
    pub threads: Option<usize>,
    pub mode: Mode,
    pub format: Format,
    pub rebuild: bool,
    pub max_s: u32,
}

fn parse_share_pair(v: &str, c: &str) -> Result<SharePair> {
    SharePair::new(parse_share(v)?, parse_share(c)?)
}

impl JobConfig {
    pub fn resolve(args: &JobArgs) -> Result<Self> {
        let file: JobFile = match &args.job {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => JobFile::default(),
        };
        let g = match &args.g {
            Some(text) => Some(text.parse()?),
            None => file.g,
        };
        let shares = match (&args.shares, &file.shares) {
            (Some(text), _) => {
                let (v, c) = text
                    .split_once(',')
                    .ok_or_else(|| invalid("--shares expects `v,c`"))?;
                Some(parse_share_pair(v, c)?)
            }
            (None, Some(SharesInput::Pair([v, c]) | SharesInput::Named { v_hat: v, c_hat: c })) => {
                Some(parse_share_pair(v, c)?)
            }
            (None, None) => None,
        };
        let s = args.s.or(file.s).or(g.map(|g| g.total()));
        let s = s.map(SampleSize::new).transpose()?;
        if let (Some(s), Some(g)) = (s, g) {
            if g.total() != s.get() {
                return Err(invalid(format!("data {g} sums to {}, not s={s}", g.total())));
            }
        }
        let spec = match &args.spec {
            Some(text) => text.parse()?,
            None => file.spec.unwrap_or(RandomizationSpec::iid(1, 2)?),
        };
        if let Some(s) = s {
            spec.validate(s)?;
        }
        let h0 = if !args.h0.is_empty() {
            args.h0.clone()
        } else {
            match file.h0 {
                Some(OneOrMany::One(x)) => vec![x],
                Some(OneOrMany::Many(v)) => v,
                None => Vec::new(),
            }
        };
        let alpha = args.alpha.or(file.alpha).unwrap_or(0.05);
        let side = match &args.side {
            Some(text) => text.parse()?,
            None => file.side.unwrap_or(Side::Lower),
        };
        let exact = args.exact || file.exact.unwrap_or(false) || file.mode == Some(Mode::Exact);
        Ok(JobConfig {
            s,
            g,
            shares,
            spec,
            h0,
            alpha,
            quantity: args.quantity.clone().or(file.quantity),
            side,
            cache: args.cache.clone().or(file.cache_path),
            threads: args.threads.or(file.threads),
            mode: if exact { Mode::Exact } else { Mode::Log },
            format: args.format.or(file.format).unwrap_or_default(),
            rebuild: args.rebuild || file.rebuild.unwrap_or(false),
            max_s: args.max_s.or(file.max_s).unwrap_or(6),
        })
    }

    fn sample_size(&self) -> Result<SampleSize> {
        self.s.ok_or_else(|| invalid("missing --s (or --g)"))
    }

    fn data(&self) -> Result<DataConfiguration> {
        self.g.ok_or_else(|| invalid("missing --g"))
    }

    fn observed_shares(&self) -> Result<SharePair> {
        match (self.shares, self.g) {
            (Some(_), Some(_)) => Err(invalid("give either --g or --shares, not both")),
            (Some(p), None) => Ok(p),
            (None, Some(g)) => Ok(SharePair::from_data(&g)),
            (None, None) => Err(invalid("missing --g or --shares")),
        }
    }

    fn engine(&self) -> Result<Engine> {
        Engine::new(self.sample_size()?, self.spec)
    }

    fn table(&self, engine: &Engine) -> Result<(LambdaTable, CacheStatus)> {
        load_or_build(self.cache.as_deref(), engine, self.mode, self.threads, self.rebuild)
    }
}

/// A report: rows of flat JSON objects rendered in the requested format.
struct Report {
    rows: Vec<Value>,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl Report {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let v = if self.rows.len() == 1 { self.rows[0].clone() } else { Value::Array(self.rows.clone()) };
                serde_json::to_string_pretty(&v).expect("json values serialize")
            }
            Format::Csv | Format::Text => {
                let mut keys: Vec<String> = Vec::new();
                for r in &self.rows {
                    if let Value::Object(m) = r {
                        for k in m.keys() {
                            if !keys.contains(k) {
                                keys.push(k.clone());
                            }
                        }
                    }
                }
                let table: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| keys.iter().map(|k| r.get(k).map(cell).unwrap_or_default()).collect())
                    .collect();
                let mut out = String::new();
                if format == Format::Csv {
                    let quote = |x: &str| {
                        if x.contains([',', '"', '\n']) {
                            format!("\"{}\"", x.replace('"', "\"\""))
                        } else {
                            x.to_string()
                        }
                    };
                    writeln!(out, "{}", keys.iter().map(|k| quote(k)).collect::<Vec<_>>().join(",")).unwrap();
                    for row in &table {
                        writeln!(out, "{}", row.iter().map(|x| quote(x)).collect::<Vec<_>>().join(",")).unwrap();
                    }
                } else {
                    let widths: Vec<usize> = keys
                        .iter()
                        .enumerate()
                        .map(|(i, k)| table.iter().map(|r| r[i].chars().count()).max().unwrap_or(0).max(k.len()))
                        .collect();
                    let line = |cells: Vec<&str>| {
                        cells
                            .iter()
                            .zip(&widths)
                            .map(|(c, w)| format!("{c:<w$}"))
                            .collect::<Vec<_>>()
                            .join("  ")
                            .trim_end()
                            .to_string()
                    };
                    writeln!(out, "{}", line(keys.iter().map(String::as_str).collect())).unwrap();
                    for row in &table {
                        writeln!(out, "{}", line(row.iter().map(String::as_str).collect())).unwrap();
                    }
                }
                out
            }
        }
    }
}

fn ms(t: Instant) -> u128 {
    t.elapsed().as_millis()
}

fn flatten_for_table(v: Value, format: Format) -> Value {
    if format == Format::Json {
        return v;
    }
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .map(|(k, v)| {
                    let v = match v {
                        Value::Array(xs) => Value::String(xs.iter().map(cell).collect::<Vec<_>>().join(" ")),
                        Value::Object(_) => Value::String(v.to_string()),
                        other => other,
                    };
                    (k, v)
                })
                .collect(),
        ),
        other => other,
    }
}

fn cmd_test(job: &JobConfig) -> Result<Report> {
    let g = job.data()?;
    if job.h0.is_empty() {
        return Err(invalid("missing --h0"));
    }
    let engine = job.engine()?;
    let start = Instant::now();
    let (table, cache) = job.table(&engine)?;
    let mut rows = Vec::new();
    for text in &job.h0 {
        let t = Instant::now();
        let h0 = HypothesisSet::parse(text, engine.sample_size())?;
        let r = p_value(&engine, &table, &g, &h0, job.mode)?;
        let mut row = json!({
            "s": engine.sample_size().get(),
            "spec": job.spec,
            "g": g,
            "h0": text,
            "lambda": r.lambda.lambda,
            "p_value": r.p_value,
            "argmax_null": r.lambda.argmax_null.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
            "argmax_global": r.lambda.argmax_global.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
            "null_max_likelihood": r.lambda.log_numerator.exp(),
            "worst_case": r.worst_case.to_string(),
            "mode": job.mode,
            "runtime_ms": ms(t),
            "cache": cache,
        });
        if let Some(e) = &r.exact_p_value {
            row["exact_p_value"] = Value::String(format!("{}/{}", e.numer(), e.denom()));
        }
        if let Some(e) = &r.lambda.exact_lambda {
            row["exact_lambda"] = Value::String(format!("{}/{}", e.numer(), e.denom()));
        }
        rows.push(flatten_for_table(row, job.format));
    }
    if rows.len() == 1 {
        rows[0]["runtime_ms"] = json!(ms(start));
    }
    Ok(Report { rows })
}

fn cmd_ci(job: &JobConfig) -> Result<Report> {
    let g = job.data()?;
    let q: Operand = job.quantity.as_deref().ok_or_else(|| invalid("missing --quantity"))?.parse()?;
    let engine = job.engine()?;
    let start = Instant::now();
    let (table, cache) = job.table(&engine)?;
    let ci = confidence_interval(&engine, &table, &g, &q, job.side, job.alpha, job.mode)?;
    let row = json!({
        "s": engine.sample_size().get(),
        "spec": job.spec,
        "g": g,
        "quantity": q,
        "side": job.side,
        "alpha": job.alpha,
        "ci": [ci.lower, ci.upper],
        "interval": ci.to_string(),
        "all_rejected": ci.all_rejected,
        "scanned": ci.scanned,
        "runtime_ms": ms(start),
        "cache": cache,
    });
    Ok(Report { rows: vec![flatten_for_table(row, job.format)] })
}

fn cmd_table(job: &JobConfig) -> Result<Report> {
    let engine = job.engine()?;
    let start = Instant::now();
    let (table, cache) = job.table(&engine)?;
    Ok(Report {
        rows: vec![json!({
            "s": engine.sample_size().get(),
            "spec": job.spec,
            "mode": job.mode,
            "records": table.len(),
            "multi_valued": table.multi_valued_count(),
            "path": job.cache.as_ref().map(|p| p.display().to_string()),
            "runtime_ms": ms(start),
            "cache": cache,
        })],
    })
}

fn cmd_mle_count(job: &JobConfig) -> Result<Report> {
    let engine = job.engine()?;
    let start = Instant::now();
    let (table, cache) = job.table(&engine)?;
    let mut sizes = std::collections::BTreeMap::<usize, usize>::new();
    for r in 0..table.len() {
        *sizes.entry(table.argmax(r).len()).or_default() += 1;
    }
    let row = json!({
        "s": engine.sample_size().get(),
        "spec": job.spec,
        "mode": job.mode,
        "records": table.len(),
        "multi_valued": table.multi_valued_count(),
        "argmax_size_histogram": sizes.iter().map(|(k, v)| json!({"size": k, "count": v})).collect::<Vec<_>>(),
        "runtime_ms": ms(start),
        "cache": cache,
    });
    Ok(Report { rows: vec![flatten_for_table(row, job.format)] })
}

fn cmd_bounds(job: &JobConfig) -> Result<Report> {
    let shares = job.observed_shares()?;
    let (d, c) = bfh_lower_bounds(&shares)?;
    let to_f = |r: num_rational::Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    Ok(Report {
        rows: vec![flatten_for_table(
            json!({
                "shares": shares,
                "defier_share_lower_bound": to_f(d),
                "complier_share_lower_bound": to_f(c),
                "defier_share_lower_bound_exact": d.to_string(),
                "complier_share_lower_bound_exact": c.to_string(),
            }),
            job.format,
        )],
    })
}

fn cmd_limited(job: &JobConfig) -> Result<Report> {
    let shares = job.observed_shares()?;
    if job.h0.is_empty() {
        return Err(invalid("missing --h0"));
    }
    let engine = job.engine()?;
    let mut rows = Vec::new();
    for text in &job.h0 {
        let t = Instant::now();
        let h0 = HypothesisSet::parse(text, engine.sample_size())?;
        let r = limited_data_p_value(&engine, &shares, &h0)?;
        let row = json!({
            "s": engine.sample_size().get(),
            "spec": job.spec,
            "shares": shares,
            "h0": text,
            "lambda": r.lambda,
            "p_value": r.p_value,
            "argmax_null": [r.argmax_null.to_string()],
            "argmax_global": [r.argmax_global.to_string()],
            "worst_case": r.worst_case.to_string(),
            "share_pairs": r.share_pairs,
            "runtime_ms": ms(t),
        });
        rows.push(flatten_for_table(row, job.format));
    }
    Ok(Report { rows })
}

fn cmd_asymptotic(job: &JobConfig) -> Result<Report> {
    let g = job.data()?;
    let mle = population_mle(&g, &job.spec)?;
    let check = zero_defier_check(&g, &job.spec)?;
    let reg = two_proportion_test(&g)?;
    let row = json!({
        "asymptotic": true,
        "approximate": true,
        "g": g,
        "spec": job.spec,
        "v_hat": mle.v_hat,
        "c_hat": mle.c_hat,
        "average_effect_estimate": mle.average_effect,
        "never_taker_share_range": [mle.pi1_range.0, mle.pi1_range.1],
        "log_likelihood_max": mle.log_likelihood,
        "zero_defier_maximizer_exists": check.zero_defier_maximizer_exists,
        "zero_defier_lambda": check.lambda,
        "zero_defier_maximizer": check.constrained_maximizer.pi,
        "regression_estimate": reg.estimate,
        "regression_standard_error": reg.standard_error,
        "regression_z": reg.z,
        "regression_p_value": reg.p_value,
    });
    Ok(Report { rows: vec![flatten_for_table(row, job.format)] })
}

fn cmd_oracle_check(job: &JobConfig) -> Result<Report> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for s in 1..=job.max_s {
        let size = SampleSize::new(s)?;
        let mut specs = vec![RandomizationSpec::iid(1, 4)?, RandomizationSpec::iid(1, 2)?, RandomizationSpec::iid(2, 3)?];
        specs.extend((1..s).map(RandomizationSpec::urn));
        for spec in specs {
            let engine = Engine::new(size, spec)?;
            let (mut pairs, mut mismatches) = (0u64, 0u64);
            for theta in enumerate_type_configs(size) {
                let dist = exhaustive_distribution(&theta, &spec)?;
                for g in enumerate_data_configs(size) {
                    let formula = engine.likelihood_exact(&theta, &g)?.exact_value.unwrap_or_default();
                    let oracle = dist.get(&g).cloned().unwrap_or_default();
                    pairs += 1;
                    mismatches += u64::from(formula != oracle);
                }
            }
            rows.push(json!({"s": s, "spec": spec, "pairs": pairs, "mismatches": mismatches}));
        }
    }
    let failed = rows.iter().any(|r| r["mismatches"] != json!(0));
    if let Some(last) = rows.last_mut() {
        last["runtime_ms"] = json!(ms(start));
    }
    if failed {
        let report = Report { rows };
        eprintln!("{}", report.render(job.format));
        return Err(Error::InvalidInput("likelihood disagrees with the oracle".into()));
    }
    Ok(Report { rows })
}

/// Maps errors to process exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_)
        | Error::InvalidHypothesis(_)
        | Error::Syntax { .. }
        | Error::EmptyArm(_)
        | Error::OracleTooLarge(_)
        | Error::Json(_) => 2,
        Error::CacheMismatch(_) | Error::CorruptCache(_) => 3,
        Error::ResourceCap(_) => 4,
        Error::Io(_) => 1,
    }
}

/// Runs one command and returns its rendered output.
pub fn execute(command: &Command) -> Result<String> {
    let (args, f): (&JobArgs, fn(&JobConfig) -> Result<Report>) = match command {
        Command::Test(a) => (a, cmd_test),
        Command::Ci(a) => (a, cmd_ci),
        Command::Table(a) => (a, cmd_table),
        Command::Bounds(a) => (a, cmd_bounds),
        Command::Limited(a) => (a, cmd_limited),
        Command::Asymptotic(a) => (a, cmd_asymptotic),
        Command::MleCount(a) => (a, cmd_mle_count),
        Command::OracleCheck(a) => (a, cmd_oracle_check),
    };
    let job = JobConfig::resolve(args)?;
    let report = crate::table::with_threads(job.threads, || f(&job))??;
    Ok(report.render(job.format))
}

/// Entry point for the binary; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            print!("{out}");
            if !out.ends_with('\n') {
                println!();
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Counts of realizable share pairs under each empty-arm convention.
pub fn share_pair_counts(s: SampleSize, spec: &RandomizationSpec) -> Vec<(EmptyArmConvention, usize)> {
    let space = ShareSpace::new(s, spec);
    [EmptyArmConvention::Exclude, EmptyArmConvention::SinglePoint, EmptyArmConvention::PerCoordinate]
        .into_iter()
        .map(|c| (c, space.count(c)))
        .collect()
}
