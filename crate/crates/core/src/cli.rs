//! `takagi-lab` command line.
//!
//! Output goes to stdout, or atomically to `--out` (temp file then rename).
//! Exit codes: 0 success, 1 domain error (`Name: message` on stderr), 2 usage
//! error. JSON documents carry `"schemaVersion": 1`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::crw::{self, Constraint, CrwParams};
use crate::error::{Error, Result};
use crate::exact::{self, parse_rational, IntervalAddress, Params, Rational};
use crate::flatten::{self, DEFAULT_MAX_ITER};
use crate::levelset::{self, HistogramMode, ScanConfig};
use crate::selfsim;
use crate::DEFAULT_DEPTH;

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "TAKAGI_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "takagi-lab", version, about = "Exact computations with the Takagi-van der Waerden functions f_r")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
    Svg,
}

#[derive(Args, Debug)]
struct Output {
    /// Write to this file (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn rational_arg(s: &str) -> std::result::Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn r_arg(s: &str) -> std::result::Result<u32, String> {
    let r: u32 = s.parse().map_err(|e| format!("{e}"))?;
    if r < 2 {
        return Err("r must be at least 2".into());
    }
    Ok(r)
}

#[derive(Args, Debug)]
struct PointArgs {
    #[arg(long, value_parser = r_arg)]
    r: u32,
    #[arg(long, value_parser = rational_arg, allow_hyphen_values = true)]
    x: Rational,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ConstraintArg {
    None,
    Nonneg,
    Positive,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// f_r(x), or the partial sum f_r^n(x) with --depth.
    Eval {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long)]
        depth: Option<u32>,
        #[command(flatten)]
        output: Output,
    },
    /// Slope walk s_1..s_N of x.
    Slopes {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Chord slopes m_n over the grid cells containing x.
    Chords {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = 20)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// The depth-N interval containing x.
    Locate {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = 1)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// n₊(x): one less than the first time the slope walk is negative.
    Nplus {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        budget: u32,
        #[command(flatten)]
        output: Output,
    },
    /// One step of the flattening map.
    Rho {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        budget: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Iterate the flattening map to its fixed point.
    Pi {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        budget: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Limit of the flattening iteration, exact or as a nested interval.
    RhoInf {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        budget: u32,
        #[arg(long, default_value_t = 40)]
        precision: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Points mapped to x by one flattening step.
    Preimages {
        #[command(flatten)]
        pt: PointArgs,
        /// Largest reflection depth considered.
        #[arg(long, default_value_t = 10)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Whether x ~ x2.
    Equiv {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, value_parser = rational_arg)]
        x2: Rational,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        budget: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Affine copies above the flat interval (n, j).
    Decompose {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        j: BigUint,
        #[command(flatten)]
        output: Output,
    },
    /// Exact self-similarity check over the flat interval (n, j) for f_r^m.
    Selfsim {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        j: BigUint,
        /// Partial-sum depth m (> n); defaults to n + 8.
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Witness tree of height K along the zero times of x.
    Witness {
        #[command(flatten)]
        pt: PointArgs,
        #[arg(long, default_value_t = 3)]
        levels: u32,
        /// Slope-walk search depth.
        #[arg(long, default_value_t = 200)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// p_r.
    CrwParams {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[command(flatten)]
        output: Output,
    },
    /// P(φ_n⁺ = +1 | φ_{n-1}⁺ = +1) by counting depth-(n+1) intervals.
    CrwCount {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 1)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Exact law of (S_n, X_n).
    CrwDp {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long)]
        depth: u32,
        #[arg(long, value_enum, default_value_t = ConstraintArg::None)]
        constraint: ConstraintArg,
        /// Constraint horizon; defaults to depth.
        #[arg(long)]
        upto: Option<u32>,
        /// Start as if X_0 = +1.
        #[arg(long)]
        flying: bool,
        #[command(flatten)]
        output: Output,
    },
    /// The sequences a_n, b_n and b_{n+2}/a_n.
    CrwAb {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 20)]
        depth: u32,
        #[arg(long)]
        flying: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Measure of {s_1..s_{n-1} ≥ 0, s_n = 0} by counting, next to a_n.
    CrwMeasure {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo walks: --depth steps, --samples paths.
    CrwSim {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 1000)]
        depth: u32,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// A⁺ up to --depth, or A⁺(y) with --y.
    Aplus {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, value_parser = rational_arg)]
        y: Option<Rational>,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Height-width check over A⁺ up to --depth.
    Heightwidth {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Depth-N intervals that may meet L_r(y).
    Cover {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, value_parser = rational_arg)]
        y: Rational,
        #[arg(long, default_value_t = 20)]
        depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Enclosure of M_r.
    Maxval {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 40)]
        precision: u32,
        #[command(flatten)]
        output: Output,
    },
    /// Occupation histogram: Monte Carlo with --samples/--seed, exact with --depth.
    Occupation {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 256)]
        bins: usize,
        #[arg(long, conflicts_with = "depth", requires = "seed")]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        depth: Option<u32>,
        #[command(flatten)]
        output: Output,
    },
    /// Finiteness contrast: random levels y versus levels f_r(x) of random x.
    Scan {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 200)]
        samples: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        depth: u32,
        #[arg(long, default_value_t = 20)]
        stable_from: u32,
        #[arg(long, default_value_t = 12)]
        aplus_depth: u32,
        #[arg(long, default_value_t = 3)]
        levels: u32,
        #[arg(long, default_value_t = 200)]
        search_depth: u32,
        #[command(flatten)]
        output: Output,
    },
    /// SVG of the depth-N approximant with its tail band.
    Plot {
        #[arg(long, value_parser = r_arg)]
        r: u32,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[arg(long, default_value_t = 800)]
        width: u32,
        #[arg(long, default_value_t = 400)]
        height: u32,
        #[command(flatten)]
        output: Output,
    },
}

enum Failure {
    Domain(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parse `args` (including the program name) and execute.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "{}: {e}", e.name());
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

/// Size the global rayon pool from `TAKAGI_LAB_THREADS` when set.
pub fn init_threads() -> std::result::Result<(), String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
            if n == 0 {
                return Err(format!("{THREADS_ENV} must be positive"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}

fn params(r: u32) -> Result<Params> {
    Params::new(r)
}

/// Rendered forms of one result; `None` means the format is unsupported.
#[derive(Default)]
struct Rendered {
    text: Option<String>,
    csv: Option<String>,
    json: Option<Value>,
    svg: Option<String>,
}

fn emit(output: &Output, default: Format, command: &str, r: Rendered, out: &mut dyn Write) -> CmdResult {
    let format = output.format.unwrap_or(default);
    let body = match format {
        Format::Text => r.text,
        Format::Csv => r.csv,
        Format::Svg => r.svg,
        Format::Json => r.json.map(|v| {
            let mut doc = json!({ "schemaVersion": SCHEMA_VERSION, "command": command });
            if let (Value::Object(d), Value::Object(extra)) = (&mut doc, v) {
                d.extend(extra);
            }
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }),
    };
    let Some(body) = body else {
        let name = format!("{format:?}").to_lowercase();
        return Err(Failure::Usage(format!("format {name} is not available for {command}")));
    };
    match &output.out {
        Some(path) => write_atomic(path, body.as_bytes())
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => out
            .write_all(body.as_bytes())
            .map_err(|e| Failure::Usage(format!("cannot write output: {e}"))),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn execute(cmd: Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Eval { pt, depth, output } => {
            let p = params(pt.r)?;
            exact::check_unit(&pt.x)?;
            let v = match depth {
                Some(n) => {
                    exact::check_depth(n)?;
                    exact::partial_sum(p, n, &pt.x)
                }
                None => exact::eval(p, &pt.x),
            };
            let r = Rendered {
                text: Some(format!("{v}\n")),
                csv: Some(format!("r,x,depth,value\n{},{},{},{v}\n", pt.r, pt.x, depth.map_or(String::new(), |d| d.to_string()))),
                json: Some(json!({ "r": pt.r, "x": pt.x.to_string(), "depth": depth, "value": v.to_string() })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "eval", r, out)
        }
        Command::Slopes { pt, depth, output } => {
            let p = params(pt.r)?;
            let prof = exact::slope_profile(p, &pt.x, depth)?;
            let walk = &prof.slopes[1..];
            let mut csv = String::from("n,phi_plus,slope\n");
            for (i, w) in prof.slopes.windows(2).enumerate() {
                csv.push_str(&format!("{},{},{}\n", i + 1, w[1] - w[0], w[1]));
            }
            let r = Rendered {
                text: Some(format!("{}\n", join(walk, " "))),
                csv: Some(csv),
                json: Some(json!({
                    "r": pt.r, "x": pt.x.to_string(), "depth": depth,
                    "slopes": walk, "zeroTimes": prof.zero_times(),
                    "firstNegative": prof.first_negative(),
                })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "slopes", r, out)
        }
        Command::Chords { pt, depth, output } => {
            let p = params(pt.r)?;
            let chords = exact::chord_slopes(p, &pt.x, depth)?;
            let mut csv = String::from("n,j,u,v,m_n,phi_plus_sum,residual\n");
            let mut rows = Vec::new();
            for c in &chords {
                let sum = exact::phi_plus_sum(p, c.n, &pt.x);
                let residual = &c.slope - Rational::from_integer(sum.into());
                csv.push_str(&format!("{},{},{},{},{},{sum},{residual}\n", c.n, c.j, c.u, c.v, c.slope));
                rows.push(json!({
                    "n": c.n, "j": c.j.to_string(), "u": c.u.to_string(), "v": c.v.to_string(),
                    "slope": c.slope.to_string(), "phiPlusSum": sum, "residual": residual.to_string(),
                }));
            }
            let text = chords.iter().map(|c| format!("m_{} = {}\n", c.n, c.slope)).collect();
            let r = Rendered {
                text: Some(text),
                csv: Some(csv),
                json: Some(json!({ "r": pt.r, "x": pt.x.to_string(), "chords": rows })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "chords", r, out)
        }
        Command::Locate { pt, depth, output } => {
            let p = params(pt.r)?;
            let a = exact::locate(p, depth, &pt.x)?;
            let slope = exact::interval_slope(p, &a);
            let r = Rendered {
                text: Some(format!("{a} [{}, {}) slope {slope}\n", a.left(p), a.right(p))),
                csv: Some(format!("n,j,left,right,slope\n{},{},{},{},{slope}\n", a.n, a.j, a.left(p), a.right(p))),
                json: Some(json!({
                    "r": pt.r, "x": pt.x.to_string(), "address": a.to_string(),
                    "left": a.left(p).to_string(), "right": a.right(p).to_string(), "slope": slope,
                })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "locate", r, out)
        }
        Command::Nplus { pt, budget, output } => {
            let p = params(pt.r)?;
            let n = flatten::n_plus(p, &pt.x, budget)?;
            let class = flatten::classify(p, &pt.x, budget)?;
            let r = Rendered {
                text: Some(format!("{n}\n")),
                json: Some(json!({ "r": pt.r, "x": pt.x.to_string(), "nPlus": to_value(&n), "class": to_value(&class) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "nplus", r, out)
        }
        Command::Rho { pt, budget, output } => {
            let p = params(pt.r)?;
            let s = flatten::rho(p, &pt.x, budget)?;
            let mut text = format!("{}\nrule {}\nn0 {}\n", s.output, s.rule, s.n0);
            if let Some(j) = &s.j0 {
                text.push_str(&format!("j0 {j}\n"));
            }
            if s.budget_certified {
                text.push_str(&format!("fixed up to budget {budget}\n"));
            }
            let r = Rendered {
                text: Some(text),
                json: Some(json!({ "r": pt.r, "budget": budget, "step": to_value(&s) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "rho", r, out)
        }
        Command::Pi { pt, budget, max_iter, output } => {
            let p = params(pt.r)?;
            let f = flatten::pi(p, &pt.x, budget, max_iter)?;
            let r = Rendered {
                text: Some(format!("{}\niterations {}\n", f.point, f.iterations)),
                json: Some(json!({ "r": pt.r, "x": pt.x.to_string(), "result": to_value(&f) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "pi", r, out)
        }
        Command::RhoInf { pt, budget, precision, max_iter, output } => {
            let p = params(pt.r)?;
            let lim = flatten::rho_infinity(p, &pt.x, budget, precision, max_iter)?;
            let text = match &lim {
                flatten::RhoLimit::Stable { point, iterations } => format!("{point}\nstable after {iterations}\n"),
                flatten::RhoLimit::Nested { lo, hi, .. } => format!("[{lo}, {hi}]\n"),
            };
            let r = Rendered {
                text: Some(text),
                json: Some(json!({ "r": pt.r, "x": pt.x.to_string(), "limit": to_value(&lim) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "rho-inf", r, out)
        }
        Command::Preimages { pt, depth, output } => {
            let p = params(pt.r)?;
            let pre = flatten::preimages_rho(p, &pt.x, depth)?;
            let r = Rendered {
                text: Some(pre.iter().map(|v| format!("{v}\n")).collect()),
                csv: Some(format!("x\n{}", pre.iter().map(|v| format!("{v}\n")).collect::<String>())),
                json: Some(json!({ "r": pt.r, "z": pt.x.to_string(), "maxDepth": depth,
                    "preimages": pre.iter().map(|v| v.to_string()).collect::<Vec<_>>() })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "preimages", r, out)
        }
        Command::Equiv { pt, x2, budget, output } => {
            let p = params(pt.r)?;
            let eq = flatten::equivalent(p, &pt.x, &x2, budget)?;
            let r = Rendered {
                text: Some(format!("{eq}\n")),
                json: Some(json!({ "r": pt.r, "x": pt.x.to_string(), "x2": x2.to_string(), "equivalent": eq })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "equiv", r, out)
        }
        Command::Decompose { r, n, j, output } => {
            let p = params(r)?;
            let a = IntervalAddress::new(p, n, j)?;
            let copies = selfsim::decompose(p, &a)?;
            let mut csv = String::from("child,left,right,offset,scale,reflected\n");
            for c in &copies {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.child,
                    c.child.left(p),
                    c.child.right(p),
                    c.offset,
                    c.scale,
                    c.reflected
                ));
            }
            let text = copies
                .iter()
                .map(|c| format!("{} {}\n", c.child, if c.reflected { "reflected" } else { "direct" }))
                .collect();
            let r = Rendered {
                text: Some(text),
                csv: Some(csv),
                json: Some(json!({ "r": r, "copies": to_value(&copies) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "decompose", r, out)
        }
        Command::Selfsim { r, n, j, depth, samples, output } => {
            let p = params(r)?;
            let a = IntervalAddress::new(p, n, j)?;
            let rep = selfsim::verify_selfsim(p, &a, depth.unwrap_or(n + 8), samples)?;
            let mut text = format!("{} m={} {}\n", rep.parent, rep.m, if rep.all_passed() { "pass" } else { "FAIL" });
            for c in &rep.children {
                text.push_str(&format!(
                    "{} reflected={} checked={} failures={}\n",
                    c.child,
                    c.reflected,
                    c.checked,
                    c.failures.len()
                ));
            }
            let r = Rendered {
                text: Some(text),
                json: Some(json!({ "r": r, "passed": rep.all_passed(), "report": to_value(&rep) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "selfsim", r, out)
        }
        Command::Witness { pt, levels, depth, output } => {
            let p = params(pt.r)?;
            let tree = selfsim::witness_tree(p, &pt.x, levels, depth)?;
            let cert = selfsim::level_count_certificate(p, &tree);
            let mut text = tree.to_text();
            text.push_str(&format!("certified {}\n", cert.count));
            let leaves: Vec<Value> = tree
                .leaves()
                .iter()
                .map(|l| json!({ "word": l.word, "address": l.address.to_string(), "point": l.point.to_string() }))
                .collect();
            let r = Rendered {
                text: Some(text),
                json: Some(json!({
                    "r": pt.r, "x": pt.x.to_string(), "zeroTimes": tree.zero_times,
                    "levels": tree.levels.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    "leaves": leaves, "certificate": to_value(&cert),
                })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "witness", r, out)
        }
        Command::CrwParams { r, output } => {
            let p = params(r)?;
            let v = crw::crw_parameter(p);
            let rd = Rendered {
                text: Some(format!("{v}\n")),
                json: Some(json!({ "r": r, "p": v.to_string() })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "crw-params", rd, out)
        }
        Command::CrwCount { r, depth, output } => {
            let p = params(r)?;
            let v = crw::exact_transition_count(p, depth)?;
            let rd = Rendered {
                text: Some(format!("{v}\n")),
                json: Some(json!({ "r": r, "depth": depth, "frequency": v.to_string(),
                    "parameter": crw::crw_parameter(p).to_string() })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "crw-count", rd, out)
        }
        Command::CrwDp { r, depth, constraint, upto, flying, output } => {
            let pr = CrwParams::for_r(params(r)?);
            let k = upto.unwrap_or(depth);
            let c = match constraint {
                ConstraintArg::None => Constraint::None,
                ConstraintArg::Nonneg => Constraint::NonnegUpTo(k),
                ConstraintArg::Positive => Constraint::PositiveUpTo(k),
            };
            let d = crw::crw_dp(&pr, depth, c, flying)?;
            let mut csv = String::from("s,last,probability\n");
            for ((s, last), v) in &d.table {
                csv.push_str(&format!("{s},{last},{v}\n"));
            }
            let rows: Vec<Value> = d
                .table
                .iter()
                .map(|((s, last), v)| json!({ "s": s, "last": last, "p": v.to_string() }))
                .collect();
            let rd = Rendered {
                text: Some(format!("total {}\n{csv}", d.total())),
                csv: Some(csv),
                json: Some(json!({ "r": r, "p": pr.p().to_string(), "n": depth, "flying": flying,
                    "total": d.total().to_string(), "table": rows })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "crw-dp", rd, out)
        }
        Command::CrwAb { r, depth, flying, output } => {
            let pr = CrwParams::for_r(params(r)?);
            let seq = crw::a_b_sequences_with(&pr, depth, flying)?;
            let csv = seq.to_csv();
            let rd = Rendered {
                text: Some(csv.clone()),
                json: Some(json!({ "r": r, "p": pr.p().to_string(), "flying": flying,
                    "a": seq.a.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    "b": seq.b.iter().map(|v| v.to_string()).collect::<Vec<_>>() })),
                csv: Some(csv),
                ..Rendered::default()
            };
            emit(&output, Format::Csv, "crw-ab", rd, out)
        }
        Command::CrwMeasure { r, depth, output } => {
            let p = params(r)?;
            let (m, a) = crw::slope_measure_check(p, depth)?;
            let rd = Rendered {
                text: Some(format!("measure {m}\na_n {a}\nequal {}\n", m == a)),
                json: Some(json!({ "r": r, "n": depth, "measure": m.to_string(), "a": a.to_string(), "equal": m == a })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "crw-measure", rd, out)
        }
        Command::CrwSim { r, depth, samples, seed, output } => {
            let pr = CrwParams::for_r(params(r)?);
            let s = crw::simulate(&pr, depth, samples, seed)?;
            let rd = Rendered {
                text: Some(s.to_text()),
                json: Some(json!({ "r": r, "summary": to_value(&s) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "crw-sim", rd, out)
        }
        Command::Aplus { r, y, depth, output } => {
            let p = params(r)?;
            let recs = match &y {
                Some(y) => levelset::aplus_at(p, y, depth)?,
                None => levelset::enumerate_aplus(p, depth)?,
            };
            let mut csv = String::from("n,j,left,right,base,range_hi\n");
            for f in &recs {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    f.address.n,
                    f.address.j,
                    f.address.left(p),
                    f.address.right(p),
                    f.base,
                    f.range_hi
                ));
            }
            let rd = Rendered {
                text: Some(format!("count {}\n{csv}", recs.len())),
                csv: Some(csv),
                json: Some(json!({ "r": r, "y": y.map(|v| v.to_string()), "depth": depth, "records": to_value(&recs) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "aplus", rd, out)
        }
        Command::Heightwidth { r, depth, output } => {
            let p = params(r)?;
            let recs = levelset::enumerate_aplus(p, depth)?;
            let rep = levelset::heightwidth_check(p, &recs);
            let rd = Rendered {
                text: Some(format!(
                    "checked {}\nfailures {}\ntotal width {}\nbound {}\n{}\n",
                    rep.checked,
                    rep.failures.len(),
                    rep.total_width,
                    rep.width_bound,
                    if rep.passed() { "pass" } else { "FAIL" }
                )),
                json: Some(json!({ "r": r, "depth": depth, "passed": rep.passed(), "report": to_value(&rep) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "heightwidth", rd, out)
        }
        Command::Cover { r, y, depth, output } => {
            let p = params(r)?;
            let c = levelset::cover(p, &y, depth)?;
            let csv = c.to_csv(p);
            let rd = Rendered {
                text: Some(format!("intervals {}\nsizes {}\n{csv}", c.intervals.len(), join(&c.sizes, " "))),
                csv: Some(csv),
                json: Some(json!({ "cover": to_value(&c) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "cover", rd, out)
        }
        Command::Maxval { r, precision, output } => {
            let p = params(r)?;
            let e = levelset::max_value(p, precision);
            let mut text = format!("lo {}\nhi {}\nwitness {}\n", e.lo, e.hi, e.witness);
            if let Some(v) = &e.exact {
                text.push_str(&format!("exact {v}\n"));
            }
            let rd = Rendered {
                text: Some(text),
                json: Some(json!({ "precision": precision, "enclosure": to_value(&e) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "maxval", rd, out)
        }
        Command::Occupation { r, bins, samples, seed, depth, output } => {
            let p = params(r)?;
            let mode = match (samples, depth) {
                (Some(samples), None) => HistogramMode::MonteCarlo { samples, seed: seed.expect("clap requires seed") },
                (None, Some(d)) => HistogramMode::ExactDepth(d),
                _ => return Err(Failure::Usage("give either --samples with --seed, or --depth".into())),
            };
            let h = levelset::occupation_histogram(p, bins, mode)?;
            let mut text = String::new();
            if let Some(s) = h.seed {
                text.push_str(&format!("seed {s}\n"));
            }
            text.push_str(&format!("bins {}\ntotal mass {}\nconcentration {}\n", h.bins, h.total_mass(), h.concentration()));
            let rd = Rendered {
                text: Some(text),
                csv: Some(h.to_csv()),
                json: Some(json!({ "concentration": h.concentration(), "histogram": to_value(&h) })),
                ..Rendered::default()
            };
            emit(&output, Format::Csv, "occupation", rd, out)
        }
        Command::Scan { r, samples, seed, depth, stable_from, aplus_depth, levels, search_depth, output } => {
            let p = params(r)?;
            let cfg = ScanConfig { samples, depth, stable_from, aplus_depth, levels, search_depth, seed };
            let rep = levelset::finiteness_scan(p, cfg)?;
            let rd = Rendered {
                text: Some(rep.to_text()),
                json: Some(json!({ "report": to_value(&rep) })),
                ..Rendered::default()
            };
            emit(&output, Format::Text, "scan", rd, out)
        }
        Command::Plot { r, depth, width, height, output } => {
            let p = params(r)?;
            if depth == 0 || depth > MAX_PLOT_DEPTH {
                return Err(Failure::Usage(format!("plot depth must be in 1..={MAX_PLOT_DEPTH}")));
            }
            let verts = levelset::approximant_vertices(p, depth)?;
            let mut csv = String::from("x,value\n");
            for (x, v) in &verts {
                csv.push_str(&format!("{x},{v}\n"));
            }
            let rd = Rendered {
                svg: Some(plot_svg(p, depth, &verts, width, height)),
                csv: Some(csv),
                json: Some(json!({ "r": r, "depth": depth,
                    "vertices": verts.iter().map(|(x, v)| [x.to_string(), v.to_string()]).collect::<Vec<_>>() })),
                ..Rendered::default()
            };
            emit(&output, Format::Svg, "plot", rd, out)
        }
    }
}

pub const MAX_PLOT_DEPTH: u32 = 16;

/// Twelve significant digits, shortest form.
fn coord(v: &Rational) -> String {
    let f = v.to_f64().expect("finite");
    let rounded: f64 = format!("{f:.11e}").parse().expect("float");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// SVG of `f_r^N` over `[0,1]` in a `[0,1] × [0, 1.05·M]` view box (y up),
/// with the band `[f_r^N, f_r^N + r^{-N} M]` that contains the graph of `f_r`.
pub fn plot_svg(p: Params, depth: u32, verts: &[(Rational, Rational)], width: u32, height: u32) -> String {
    let m = levelset::max_upper(p);
    let top = &m * exact::rat(21, 20);
    let tail = exact::inv_pow(p.r(), depth) * &m;
    let point = |x: &Rational, v: &Rational| format!("{},{}", coord(x), coord(&(&top - v)));
    let line = join(verts.iter().map(|(x, v)| point(x, v)), " ");
    let band_top = verts.iter().map(|(x, v)| point(x, &(v + &tail)));
    let band_bottom = verts.iter().rev().map(|(x, v)| point(x, v));
    let band = join(band_top.chain(band_bottom), " ");
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 1 {top}\" preserveAspectRatio=\"none\">\n",
            "<title>f_{r}^{n} with tail band</title>\n",
            "<polygon points=\"{band}\" fill=\"#d6e2f0\" stroke=\"none\"/>\n",
            "<polyline points=\"{line}\" fill=\"none\" stroke=\"#1d3557\" stroke-width=\"1\" vector-effect=\"non-scaling-stroke\"/>\n",
            "</svg>\n"
        ),
        w = width,
        h = height,
        top = coord(&top),
        r = p.r(),
        n = depth,
        band = band,
        line = line,
    )
}
